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

"""Acceptance-scale runs. Deselected by default; run with ``-m slow``."""

import numpy as np
import pytest

from stochvort.vorticity.diagnostics import (
    balance_report, energy_spectrum, moment_bound_check, slope_fit)
from stochvort.vorticity.forcing import validate_forcing
from stochvort.vorticity.grid_spectral import GridSpec
from stochvort.vorticity.integrator import SimConfig, simulate_ensemble
from stochvort.vorticity.malliavin import control_scan, nondegeneracy_survey

FOUR_MODES = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]


def example_config(**kwargs):
    kwargs.setdefault('grid', GridSpec(n=64))
    return SimConfig(forcing=validate_forcing(FOUR_MODES), **kwargs)


@pytest.mark.slow
def test_moment_bounds_from_rest():
    cfg = example_config(nu=0.1, t_end=20.0, dt=0.01, output_every=50)
    report = moment_bound_check(simulate_ensemble(cfg, 128, num_workers=4))
    assert report.passed
    assert set(report.frame['quantity']) == {'l2_sq', 'exp_l2_sq',
                                             'exp_dissipation'}


@pytest.mark.slow
def test_stationary_balances():
    cfg = example_config(nu=0.1, tau=0.05, t_end=200.0, dt=0.01,
                         output_every=10)
    report = balance_report(simulate_ensemble(cfg, 128, num_workers=4))
    assert report.passed(0.1)


@pytest.mark.slow
def test_nondegeneracy_contrast():
    cfg = example_config(grid=GridSpec(n=32), nu=0.1, dt=0.01)
    result = nondegeneracy_survey(cfg, galerkin_cutoff=4.0, low_cutoff=2.0,
                                  alpha=0.1, samples=50, interval=1.0,
                                  spinup=2.0, quad_substeps=20,
                                  num_workers=4)
    assert result.median > 0
    assert np.all(result.stokes['cone_min'] <= 1e-12)


@pytest.mark.slow
def test_control_decay():
    cfg = example_config(grid=GridSpec(n=32), nu=0.5, dt=0.01)
    scan = control_scan(cfg, [1e-4, 1e-3, 1e-2, 1e-1, 1.0], range(20),
                        galerkin_cutoff=4.0, low_cutoff=2.0, n_intervals=12,
                        quad_substeps=20, num_workers=4)
    assert scan.rates['rate'].min() < 0.9


# Twelve modes on the |m|² = 400 ring with Σγ² ≈ 1.1, putting the viscous
# cutoff (Σγ²/ν³)^{1/6} near κ = 80, inside the dealiased range.
RING_MODES = [[20, 0, 0.3], [0, 20, 0.3], [12, 16, 0.3], [16, 12, 0.3],
              [12, -16, 0.3], [16, -12, 0.3]]


@pytest.mark.slow
def test_direct_cascade_slope():
    cfg = SimConfig(grid=GridSpec(n=256), nu=1.5e-4, tau=0.02, dt=0.005,
                    t_end=400.0,
                    forcing=validate_forcing(RING_MODES, auto_reflect=True),
                    seed=11, output_every=1000, snapshot_every=1000)
    assert cfg.forcing.directions == 12
    trajectories = simulate_ensemble(cfg, 2, num_workers=2)
    states = [s for traj in trajectories for s in traj.snapshots]
    spectrum = energy_spectrum(states, window_start=250.0)
    fit = slope_fit(spectrum, 30.0, 70.0, cfg)
    assert -3.6 <= fit.slope <= -2.6
