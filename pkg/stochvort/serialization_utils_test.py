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

import io
import json
import os

import pytest

import cirq

import stochvort


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class ExampleTask:
    dataset_id: str
    seed: int

    @property
    def fn(self):
        return f'{self.dataset_id}/seed-{self.seed}'


def test_dataclass_roundtrip():
    task = ExampleTask(dataset_id='2026-01-01', seed=3)
    buffer = io.StringIO()
    cirq.to_json(task, buffer)
    text = buffer.getvalue()
    assert json.loads(text)['cirq_type'] == 'stochvort.ExampleTask'
    assert stochvort.read_json(json_text=text) == task


def test_registry_rejects_foreign_namespace():
    with pytest.raises(ValueError) as e:
        stochvort.Registry.register('other.Thing', object)
    assert e.match(r'stochvort namespace')


def test_save_load_and_records(tmpdir):
    base_dir = str(tmpdir)
    task = ExampleTask(dataset_id='ds', seed=1)
    assert not stochvort.exists(task, base_dir=base_dir)
    fn = stochvort.save(task, {'value': 2.5}, base_dir=base_dir)
    assert os.path.exists(fn)
    assert stochvort.exists(task, base_dir=base_dir)
    with pytest.raises(FileExistsError):
        stochvort.save(task, {'value': 1.0}, base_dir=base_dir)

    record = stochvort.load(task, base_dir=base_dir)
    assert record['task'] == task
    assert record['value'] == 2.5
    assert 'timestamp' in record

    stochvort.save(ExampleTask(dataset_id='ds', seed=2), {'value': 3.0},
                   base_dir=base_dir)
    with open(os.path.join(base_dir, 'ds',
                           stochvort.EFFECTIVE_CONFIG_FN), 'w') as f:
        json.dump({'grid.n': 16}, f)
    records = stochvort.load_records('ds', base_dir=base_dir)
    assert [r['value'] for r in records] == [2.5, 3.0]

    for record in records:
        stochvort.flatten_dataclass_into_record(record, 'task')
    assert records[1]['seed'] == 2
    assert records[1]['dataset_id'] == 'ds'
    assert 'task' not in records[1]


def test_output_root(monkeypatch, tmpdir):
    monkeypatch.setenv('STOCHVORT_OUTPUT_ROOT', str(tmpdir))
    assert stochvort.output_root() == str(tmpdir)
    monkeypatch.delenv('STOCHVORT_OUTPUT_ROOT')
    assert stochvort.output_root().endswith('stochvort-results')
