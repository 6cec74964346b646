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
from typing import Optional, Tuple

import stochvort
from stochvort.vorticity.integrator import SimConfig
from stochvort.vorticity.malliavin import control_scan, nondegeneracy_survey

EXPERIMENT_NAME = 'hypoellipticity'


def default_base_dir() -> str:
    return os.path.join(stochvort.output_root(), EXPERIMENT_NAME)


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class NondegeneracySurveyTask:
    """Sample the cone statistic of the Galerkin Malliavin matrix.

    See Also:
        :py:func:`run_nondegeneracy_survey`

    Attributes:
        dataset_id: A unique identifier for this dataset.
        config: The simulation configuration; must be forced.
        galerkin_cutoff: Radius of the Galerkin disc.
        low_cutoff: Radius of the low-mode projection.
        alpha: Cone aperture.
        samples: Number of noise realizations.
        interval: Length of the interval the matrix is assembled on.
        spinup: Time each sample runs before the interval.
        initial_radius: Largest L² norm of the random initial data; 0
            starts every sample from rest.
        quad_substeps: Trapezoidal panels per interval.
    """
    dataset_id: str
    config: SimConfig
    galerkin_cutoff: float
    low_cutoff: float
    alpha: float
    samples: int
    interval: float = 1.0
    spinup: float = 0.0
    initial_radius: float = 1.0
    quad_substeps: Optional[int] = None

    @property
    def fn(self):
        transport = 'nonlinear' if self.config.nonlinear else 'stokes'
        return (f'{self.dataset_id}/survey/{transport}/'
                f'nu-{self.config.nu:g}_seed-{self.config.seed}/'
                f'mg-{self.galerkin_cutoff:g}_ml-{self.low_cutoff:g}_'
                f'alpha-{self.alpha:g}')


def run_nondegeneracy_survey(task: NondegeneracySurveyTask,
                             base_dir: Optional[str] = None,
                             num_workers: int = 1):
    """Execute a :py:class:`NondegeneracySurveyTask`.

    The per-sample table goes to ``{fn}.csv``; quantiles and the tail fit
    are stored in the record.
    """
    if base_dir is None:
        base_dir = default_base_dir()

    if stochvort.exists(task, base_dir=base_dir):
        print(f"{task.fn} already exists. Skipping.")
        return

    result = nondegeneracy_survey(
        task.config, task.galerkin_cutoff, task.low_cutoff, task.alpha,
        task.samples, interval=task.interval, spinup=task.spinup,
        initial_radius=task.initial_radius,
        quad_substeps=task.quad_substeps, stokes_control=False,
        num_workers=num_workers, verbose=True)
    stochvort.save(task=task, data={
        'quantiles': {str(q): float(v) for q, v in result.quantiles.items()},
        'median': result.median,
        'tail_exponent': result.tail.exponent,
        'tail_points': result.tail.points,
    }, base_dir=base_dir)
    result.samples.to_csv(f'{base_dir}/{task.fn}.csv', index=False,
                          float_format='%.17g')
    print(f"{task.fn} complete.")


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class ControlScanTask:
    """Alternating low-mode control over a ladder of Tikhonov shifts.

    See Also:
        :py:func:`run_control_scan`

    Attributes:
        dataset_id: A unique identifier for this dataset.
        config: The simulation configuration; must be forced.
        lambdas: The shifts λ to scan.
        seeds: Noise seeds; each gives one control run per λ.
        galerkin_cutoff: Radius of the Galerkin disc.
        low_cutoff: Radius of the low-mode projection.
        n_intervals: Number of unit intervals per run.
        interval: Interval length.
        quad_substeps: Trapezoidal panels per interval.
    """
    dataset_id: str
    config: SimConfig
    lambdas: Tuple[float, ...]
    seeds: Tuple[int, ...]
    galerkin_cutoff: float
    low_cutoff: float
    n_intervals: int
    interval: float = 1.0
    quad_substeps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'lambdas',
                           tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, 'seeds', tuple(int(x) for x in self.seeds))
        if not self.lambdas or min(self.lambdas) <= 0:
            raise ValueError("lambdas must be a non-empty list of positive "
                             "shifts, not {}".format(self.lambdas))
        if not self.seeds:
            raise ValueError("Need at least one seed.")

    @property
    def fn(self):
        return (f'{self.dataset_id}/control-scan/'
                f'nu-{self.config.nu:g}/'
                f'mg-{self.galerkin_cutoff:g}_ml-{self.low_cutoff:g}_'
                f'intervals-{self.n_intervals}_seeds-{len(self.seeds)}')


def run_control_scan(task: ControlScanTask,
                     base_dir: Optional[str] = None,
                     num_workers: int = 1):
    """Execute a :py:class:`ControlScanTask`.

    Writes ``{fn}-ratios.csv`` and ``{fn}-rates.csv`` next to the record.
    """
    if base_dir is None:
        base_dir = default_base_dir()

    if stochvort.exists(task, base_dir=base_dir):
        print(f"{task.fn} already exists. Skipping.")
        return

    scan = control_scan(task.config, task.lambdas, task.seeds,
                        task.galerkin_cutoff, task.low_cutoff,
                        task.n_intervals, interval=task.interval,
                        quad_substeps=task.quad_substeps,
                        num_workers=num_workers)
    best = scan.rates.loc[scan.rates['rate'].idxmin()]
    stochvort.save(task=task, data={
        'best_lambda': float(best['lam']),
        'best_rate': float(best['rate']),
    }, base_dir=base_dir)
    scan.ratios.to_csv(f'{base_dir}/{task.fn}-ratios.csv', index=False,
                       float_format='%.17g')
    scan.rates.to_csv(f'{base_dir}/{task.fn}-rates.csv', index=False,
                      float_format='%.17g')
    print(f"{task.fn} complete.")
