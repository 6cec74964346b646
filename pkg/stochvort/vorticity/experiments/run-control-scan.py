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

from stochvort.vorticity.experiments.hypoellipticity_tasks import (
    ControlScanTask, run_control_scan)
from stochvort.vorticity.forcing import validate_forcing
from stochvort.vorticity.grid_spectral import GridSpec
from stochvort.vorticity.integrator import SimConfig

DEGENERATE_MODES = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]


def main():
    cfg = SimConfig(grid=GridSpec(n=16), nu=0.5, tau=0.0, dt=0.01,
                    forcing=validate_forcing(DEGENERATE_MODES))
    tasks = [
        ControlScanTask(
            dataset_id='2026-10-01',
            config=cfg,
            lambdas=(1e-4, 1e-3, 1e-2, 1e-1, 1.0),
            seeds=tuple(range(20)),
            galerkin_cutoff=galerkin_cutoff,
            low_cutoff=2.0,
            n_intervals=12,
            quad_substeps=20)
        for galerkin_cutoff in [3.0, 4.0]
    ]

    for task in tasks:
        run_control_scan(task, num_workers=4)


if __name__ == '__main__':
    main()
