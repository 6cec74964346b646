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
from typing import Optional

import pandas as pd

import stochvort
from stochvort.vorticity.diagnostics import (
    balance_report, energy_spectrum, moment_bound_check)
from stochvort.vorticity.integrator import (
    SimConfig, ensemble_observables, simulate_ensemble)

EXPERIMENT_NAME = 'turbulence'


def default_base_dir() -> str:
    return os.path.join(stochvort.output_root(), EXPERIMENT_NAME)


def _config_slug(cfg: SimConfig) -> str:
    return (f'n-{cfg.grid.n}_scale-{cfg.grid.scale:g}/'
            f'nu-{cfg.nu:g}_tau-{cfg.tau:g}/'
            f'seed-{cfg.seed}')


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class EnsembleSimulationTask:
    """Simulate an ensemble and keep its observables.

    See Also:
        :py:func:`run_ensemble_simulation`

    Attributes:
        dataset_id: A unique identifier for this dataset.
        config: The simulation configuration.
        members: Number of ensemble members; member i uses noise stream i.
    """
    dataset_id: str
    config: SimConfig
    members: int

    @property
    def fn(self):
        return (f'{self.dataset_id}/ensemble/'
                f'{_config_slug(self.config)}/'
                f'members-{self.members}')


def run_ensemble_simulation(task: EnsembleSimulationTask,
                            base_dir: Optional[str] = None,
                            num_workers: int = 1):
    """Execute an :py:class:`EnsembleSimulationTask`.

    The stacked observables go to ``{fn}.csv`` next to the record.
    """
    if base_dir is None:
        base_dir = default_base_dir()

    if stochvort.exists(task, base_dir=base_dir):
        print(f"{task.fn} already exists. Skipping.")
        return

    trajectories = simulate_ensemble(task.config, task.members, num_workers)
    frame = ensemble_observables(trajectories)
    last = frame[frame['t'] == frame['t'].max()]
    stochvort.save(task=task, data={
        'dt': trajectories[0].dt,
        'n_steps': trajectories[0].n_steps,
        'final_mean_enstrophy': float(last['enstrophy'].mean()),
        'final_mean_energy': float(last['energy'].mean()),
    }, base_dir=base_dir)
    frame.to_csv(f'{base_dir}/{task.fn}.csv', index=False,
                 float_format='%.17g')
    print(f"{task.fn} complete.")


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class StationaryStatisticsTask:
    """Stationary balances, moment bounds and the mean spectrum.

    See Also:
        :py:func:`run_stationary_statistics`

    Attributes:
        dataset_id: A unique identifier for this dataset.
        config: The simulation configuration. Its ``snapshot_every`` sets
            how often states enter the spectrum average.
        members: Number of ensemble members.
        burn_in: Start of the averaging window; None for the default of
            five slowest relaxation times.
        batches: Batches per member for the confidence intervals.
    """
    dataset_id: str
    config: SimConfig
    members: int
    burn_in: Optional[float] = None
    batches: int = 10

    @property
    def fn(self):
        return (f'{self.dataset_id}/stationary/'
                f'{_config_slug(self.config)}/'
                f'members-{self.members}')


def run_stationary_statistics(task: StationaryStatisticsTask,
                              base_dir: Optional[str] = None,
                              num_workers: int = 1):
    """Execute a :py:class:`StationaryStatisticsTask`.

    Writes ``{fn}-moments.csv`` and, when snapshots were kept,
    ``{fn}-spectrum.csv`` next to the record.
    """
    if base_dir is None:
        base_dir = default_base_dir()

    if stochvort.exists(task, base_dir=base_dir):
        print(f"{task.fn} already exists. Skipping.")
        return

    trajectories = simulate_ensemble(task.config, task.members, num_workers)
    report = balance_report(trajectories, burn_in=task.burn_in,
                            batches=task.batches)
    moments = moment_bound_check(trajectories)
    data = {
        'balance': report.summary(),
        'moments_passed': moments.passed,
    }
    stochvort.save(task=task, data=data, base_dir=base_dir)
    moments.frame.to_csv(f'{base_dir}/{task.fn}-moments.csv', index=False,
                         float_format='%.17g')
    states = [s for traj in trajectories for s in traj.snapshots]
    if states:
        energy_spectrum(states, window_start=report.burn_in).save_csv(
            f'{base_dir}/{task.fn}-spectrum.csv')
    print(f"{task.fn} complete.")


def load_stationary_statistics(dataset_id: str,
                               base_dir: Optional[str] = None
                               ) -> pd.DataFrame:
    """Collect the stationary statistics records of a dataset.

    Each :py:class:`StationaryStatisticsTask` record becomes one row holding
    the configuration fields and the balance summary, sorted by (nu, tau).
    Other records in the dataset are ignored.
    """
    if base_dir is None:
        base_dir = default_base_dir()

    rows = []
    for record in stochvort.iterload_records(dataset_id, base_dir=base_dir):
        if not isinstance(record.get('task'), StationaryStatisticsTask):
            continue
        stochvort.flatten_dataclass_into_record(record, 'task')
        stochvort.flatten_dataclass_into_record(record, 'config')
        record.update(record.pop('balance'))
        rows.append(record)
    if not rows:
        return pd.DataFrame()
    return (pd.DataFrame(rows).sort_values(['nu', 'tau'])
            .reset_index(drop=True))
