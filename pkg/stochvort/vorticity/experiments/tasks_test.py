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

import os

import pandas as pd
import pytest

import stochvort
from stochvort.vorticity.experiments.hypoellipticity_tasks import (
    ControlScanTask, NondegeneracySurveyTask, run_control_scan,
    run_nondegeneracy_survey)
from stochvort.vorticity.experiments.simulation_tasks import (
    EnsembleSimulationTask, StationaryStatisticsTask,
    load_stationary_statistics, run_ensemble_simulation,
    run_stationary_statistics)
from stochvort.vorticity.forcing import validate_forcing
from stochvort.vorticity.grid_spectral import GridSpec
from stochvort.vorticity.integrator import SimConfig

FOUR_MODES = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]


def small_config(nu=0.1, **kwargs):
    return SimConfig(grid=GridSpec(n=16), nu=nu, tau=0.05, dt=0.02,
                     forcing=validate_forcing(FOUR_MODES), **kwargs)


def test_ensemble_simulation_task(tmpdir, capsys):
    base_dir = str(tmpdir)
    task = EnsembleSimulationTask(dataset_id='test',
                                  config=small_config(t_end=0.2), members=2)
    assert task.fn == ('test/ensemble/n-16_scale-1/nu-0.1_tau-0.05/seed-0/'
                       'members-2')
    run_ensemble_simulation(task, base_dir=base_dir)
    assert f"{task.fn} complete." in capsys.readouterr().out
    record = stochvort.load(task, base_dir=base_dir)
    assert record['task'] == task
    assert record['n_steps'] == 10
    frame = pd.read_csv(f'{base_dir}/{task.fn}.csv')
    assert sorted(frame['member'].unique()) == [0, 1]

    run_ensemble_simulation(task, base_dir=base_dir)
    assert "already exists. Skipping." in capsys.readouterr().out


def test_stationary_statistics_task(tmpdir):
    base_dir = str(tmpdir)
    task = StationaryStatisticsTask(
        dataset_id='test',
        config=small_config(t_end=2.0, snapshot_every=10, nonlinear=False),
        members=2, burn_in=0.5, batches=2)
    run_stationary_statistics(task, base_dir=base_dir)
    record = stochvort.load(task, base_dir=base_dir)
    assert record['balance']['members'] == 2
    assert os.path.exists(f'{base_dir}/{task.fn}-moments.csv')
    spectrum = pd.read_csv(f'{base_dir}/{task.fn}-spectrum.csv')
    assert list(spectrum.columns) == ['kappa', 'e_kappa', 'z_kappa']


def test_load_stationary_statistics(tmpdir):
    base_dir = str(tmpdir)
    assert load_stationary_statistics('test', base_dir=base_dir).empty
    for nu in (0.2, 0.1):
        run_stationary_statistics(StationaryStatisticsTask(
            dataset_id='test',
            config=small_config(nu=nu, t_end=1.0, nonlinear=False),
            members=1, burn_in=0.2, batches=2), base_dir=base_dir)
    run_ensemble_simulation(EnsembleSimulationTask(
        dataset_id='test', config=small_config(t_end=0.1), members=1),
        base_dir=base_dir)

    frame = load_stationary_statistics('test', base_dir=base_dir)
    assert list(frame['nu']) == [0.1, 0.2]
    assert list(frame['members']) == [1, 1]
    assert list(frame['burn_in']) == [0.2, 0.2]
    assert 'task' not in frame.columns
    assert 'config' not in frame.columns
    assert frame['viscous_enstrophy'].iloc[1] > 0


def test_survey_task(tmpdir):
    base_dir = str(tmpdir)
    task = NondegeneracySurveyTask(
        dataset_id='test', config=small_config(), galerkin_cutoff=2.0,
        low_cutoff=1.5, alpha=0.5, samples=2, interval=0.2,
        quad_substeps=5)
    assert task.fn.startswith('test/survey/nonlinear/')
    run_nondegeneracy_survey(task, base_dir=base_dir)
    record = stochvort.load(task, base_dir=base_dir)
    assert set(record['quantiles']) == {'0.01', '0.05', '0.1', '0.25', '0.5'}
    frame = pd.read_csv(f'{base_dir}/{task.fn}.csv')
    assert list(frame.columns) == ['sample', 'cone_min', 'norm_w0']


def test_control_scan_task(tmpdir):
    with pytest.raises(ValueError) as e:
        ControlScanTask(dataset_id='test', config=small_config(),
                        lambdas=[1.0, -1.0], seeds=[0], galerkin_cutoff=2.0,
                        low_cutoff=1.5, n_intervals=4)
    assert e.match(r'positive')

    base_dir = str(tmpdir)
    task = ControlScanTask(dataset_id='test', config=small_config(),
                           lambdas=[0.1, 10.0], seeds=[0, 1],
                           galerkin_cutoff=2.0, low_cutoff=1.5,
                           n_intervals=4, interval=0.2, quad_substeps=5)
    assert task.lambdas == (0.1, 10.0)
    run_control_scan(task, base_dir=base_dir)
    record = stochvort.load(task, base_dir=base_dir)
    assert record['task'] == task
    assert record['best_lambda'] in (0.1, 10.0)
    rates = pd.read_csv(f'{base_dir}/{task.fn}-rates.csv')
    assert list(rates.columns) == ['lam', 'rate', 'rate_stderr']
