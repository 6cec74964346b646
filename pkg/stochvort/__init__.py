# Copyright 2026 The stochvort Developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from stochvort._version import __version__

from stochvort.serialization_utils import (
    EFFECTIVE_CONFIG_FN,
    output_root,
    exists,
    save,
    load,
    read_json,
    iterload_records,
    load_records,
    flatten_dataclass_into_record,
    Registry,
    json_serializable_dataclass,
)

from stochvort.ensemble_utils import (
    execute_in_pool,
)
