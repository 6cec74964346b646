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

import cirq
import numpy as np
import pandas as pd
import pytest

import stochvort
from stochvort.vorticity.forcing import validate_forcing, NoiseStream
from stochvort.vorticity.grid_spectral import (
    GridSpec, VorticityState, SnapshotFormatError, from_sincos, to_sincos,
    random_state, norms, l2_norm)
from stochvort.vorticity.integrator import (
    SimConfig, BlowUpError, step, simulate, simulate_ensemble, advance,
    resolve_time_step, checkpoint_save, checkpoint_load, budget_residuals,
    steps_for, interval_steps, ensemble_observables)

FOUR_MODES = [[1, 0, 1.0], [-1, 0, 1.0], [1, 1, 1.0], [-1, -1, 1.0]]


def shear(grid):
    real = np.zeros(grid.shape)
    real[1, 0] = 1.0
    return VorticityState.from_coeffs(grid, from_sincos(real, grid))


def unit_state(grid, rs, cutoff=None):
    omega = random_state(grid, rs, cutoff=cutoff)
    return omega.with_coeffs(omega.coeffs / norms(omega).l2)


def test_sim_config_validation():
    grid = GridSpec(n=16)
    with pytest.raises(ValueError) as e:
        SimConfig(grid=grid, nu=0)
    assert e.match(r'nu must be positive.*')
    with pytest.raises(ValueError):
        SimConfig(grid=grid, nu=0.1, tau=-1)
    with pytest.raises(ValueError):
        SimConfig(grid=grid, nu=0.1, dt=0)
    with pytest.raises(ValueError):
        SimConfig(grid=grid, nu=0.1, t_end=-1)
    with pytest.raises(ValueError) as e:
        SimConfig(grid=grid, nu=0.1,
                  forcing=validate_forcing(FOUR_MODES, scale=2.0))
    assert e.match(r'.*does not match grid scale.*')
    with pytest.raises(ValueError) as e:
        SimConfig(grid=grid, nu=0.1,
                  forcing=validate_forcing([[6, 0, 1.0], [-6, 0, 1.0]]))
    assert e.match(r'.*dealias cutoff.*')


def test_sim_config_json_roundtrip():
    cfg = SimConfig(grid=GridSpec(n=32, scale=1.5), nu=0.1, tau=0.05,
                    dt=0.01, forcing=validate_forcing(FOUR_MODES, scale=1.5),
                    seed=3)
    assert stochvort.read_json(json_text=cirq.to_json(cfg)) == cfg


def test_free_decay_of_shear():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, tau=0.05, dt=0.1)
    omega = shear(grid)
    after = step(omega, cfg)
    np.testing.assert_allclose(after.coeffs, np.exp(-0.15 * 0.1) * omega.coeffs,
                               rtol=1e-15, atol=1e-17)
    assert after.time == 0.1

    omega = advance(omega, cfg, 0.1, np.zeros((10, 0)))
    np.testing.assert_allclose(to_sincos(omega.coeffs, grid)[1, 0],
                               np.exp(-0.15), rtol=1e-13)


def test_step_requires_dt():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1)
    with pytest.raises(ValueError):
        step(shear(grid), cfg)


def test_blow_up_detected():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.1)
    coeffs = shear(grid).coeffs.copy()
    coeffs[1, 0] = np.inf
    with pytest.raises(BlowUpError):
        step(VorticityState(grid, coeffs), cfg)
    assert issubclass(BlowUpError, ArithmeticError)


def test_cfl_time_step():
    grid = GridSpec(n=32)
    cfg = SimConfig(grid=grid, nu=0.1, dt_max=10.0)
    assert resolve_time_step(cfg) == 10.0
    assert resolve_time_step(SimConfig(grid=grid, nu=0.1, dt=0.02)) == 0.02

    speed = 1.0  # sin x₁ has velocity (0, -cos x₁)
    np.testing.assert_allclose(resolve_time_step(cfg, shear(grid)),
                               0.5 * grid.dx / speed, rtol=1e-12)

    forced = SimConfig(grid=grid, nu=0.1, tau=0.1,
                       forcing=validate_forcing(FOUR_MODES))
    dt = resolve_time_step(forced)
    assert 0 < dt <= forced.dt_max


def test_steps_for():
    assert steps_for(1.0, 0.1) == 10
    assert steps_for(1.0, 0.3) == 4
    assert steps_for(0.0, 0.1) == 0


def test_interval_steps_land_on_the_interval_end():
    assert interval_steps(1.0, 0.1) == (10, pytest.approx(0.1))
    n_steps, dt = interval_steps(1.0, 0.03)
    assert n_steps == 34
    assert dt <= 0.03
    np.testing.assert_allclose(n_steps * dt, 1.0, rtol=1e-14)
    assert interval_steps(0.0, 0.1) == (0, 0.1)


def test_zero_length_run():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.01, t_end=0.0,
                    forcing=validate_forcing(FOUR_MODES))
    traj = simulate(cfg)
    assert len(traj.observables) == 1
    assert list(traj.observables.columns) == ['t', 'enstrophy', 'energy',
                                              'h1_sq', 'noise_qv']
    assert traj.observables['t'][0] == 0.0
    assert traj.n_steps == 0


def test_simulate_deterministic(tmpdir):
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, tau=0.1, dt=0.02, t_end=0.4,
                    forcing=validate_forcing(FOUR_MODES), seed=11,
                    output_every=2, snapshot_every=5)
    a = simulate(cfg)
    b = simulate(cfg)
    pd.testing.assert_frame_equal(a.observables, b.observables)
    np.testing.assert_array_equal(a.final.coeffs, b.final.coeffs)
    assert len(a.observables) == 11
    assert len(a.snapshots) == 5
    assert np.all(np.diff(a.observables['t']) > 0)
    for snap in a.snapshots:
        snap.validate()

    a.save_csv(f'{tmpdir}/a.csv')
    b.save_csv(f'{tmpdir}/b.csv')
    with open(f'{tmpdir}/a.csv') as fa, open(f'{tmpdir}/b.csv') as fb:
        assert fa.read() == fb.read()

    other = simulate(cfg, noise=NoiseStream(11, 1))
    assert not np.array_equal(other.final.coeffs, a.final.coeffs)


def test_noise_quadratic_variation():
    grid = GridSpec(n=16)
    forcing = validate_forcing(FOUR_MODES)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.01, t_end=20.0,
                    forcing=forcing, output_every=2000)
    qv = simulate(cfg).observables['noise_qv'].values[-1]
    # Σ_j ‖QΔβ_j‖² is a sum of 2000 scaled χ² draws with mean ε·t.
    per_step = grid.area / 2 * 0.01
    sigma = np.sqrt(2000 * 2 * 4 * per_step ** 2)
    assert abs(qv - forcing.epsilon * 20.0) < 3 * sigma


def test_poincare_decay_without_forcing():
    grid = GridSpec(n=32, scale=1.5)
    rs = np.random.RandomState(52)
    omega0 = unit_state(grid, rs, cutoff=8)
    cfg = SimConfig(grid=grid, nu=0.1, tau=0.02, dt=0.005, t_end=1.0)
    obs = simulate(cfg, omega0).observables
    l2 = np.sqrt(2 * obs['enstrophy'].values)
    bound = np.exp(-cfg.min_damping * obs['t'].values)
    assert np.all(l2 <= bound * (1 + 1e-6))

    quiet = SimConfig(grid=grid, nu=0.1, dt=0.005, t_end=0.1,
                      forcing=validate_forcing(FOUR_MODES, scale=1.5).scaled(0))
    traj = simulate(quiet, omega0)
    assert traj.observables['noise_qv'].values[-1] == 0


def test_budget_linear_run():
    grid = GridSpec(n=32)
    rs = np.random.RandomState(53)
    cfg = SimConfig(grid=grid, nu=0.1, tau=0.05, dt=1e-3, t_end=0.05,
                    nonlinear=False)
    budget = budget_residuals(simulate(cfg, unit_state(grid, rs, cutoff=4)))
    assert np.all(budget['d_enstrophy'] < 0)
    assert np.all(np.abs(budget['residual'])
                  <= 1e-4 * np.abs(budget['predicted']))


def test_budget_nonlinear_run_is_dissipative():
    grid = GridSpec(n=32)
    rs = np.random.RandomState(54)
    cfg = SimConfig(grid=grid, nu=0.1, dt=1e-3, t_end=0.05)
    budget = budget_residuals(simulate(cfg, unit_state(grid, rs, cutoff=6)))
    assert np.all(budget['d_enstrophy'] <= 0)
    assert np.all(np.abs(budget['residual'])
                  <= 0.05 * np.abs(budget['predicted']))


def test_ornstein_uhlenbeck_variance():
    grid = GridSpec(n=16)
    gamma, nu, tau, dt = 0.8, 0.5, 0.5, 0.05
    forcing = validate_forcing([[1, 0, gamma], [-1, 0, gamma]])
    stride = 60
    cfg = SimConfig(grid=grid, nu=nu, tau=tau, dt=dt, t_end=500 * stride * dt,
                    forcing=forcing, nonlinear=False, output_every=stride,
                    snapshot_every=stride, seed=5)
    traj = simulate(cfg)
    coords = np.array([to_sincos(s.coeffs, grid) for s in traj.snapshots[1:]])
    samples = np.concatenate([coords[:, 1, 0], coords[:, -1, 0]])

    a = nu + tau
    q = np.exp(-2 * a * dt)
    exact = gamma ** 2 * dt * q / (1 - q)
    np.testing.assert_allclose(exact, gamma ** 2 / (2 * a), rtol=0.1)
    sigma = exact * np.sqrt(2 / len(samples))
    assert abs(np.mean(samples ** 2) - exact) < 3 * sigma
    # Only the forced modes are ever excited.
    assert np.count_nonzero(coords[-1]) == 2


def test_pathwise_convergence():
    grid = GridSpec(n=32)
    cfg = SimConfig(grid=grid, nu=0.1, tau=0.05,
                    forcing=validate_forcing([[1, 0, 0.5], [-1, 0, 0.5],
                                              [1, 1, 0.5], [-1, -1, 0.5]]))
    rs = np.random.RandomState(55)
    omega0 = unit_state(grid, rs, cutoff=4)
    omega0 = omega0.with_coeffs(5 * omega0.coeffs)
    t_end, dt = 1.0, 0.02
    fine_dt = dt / 32
    fine = rs.standard_normal((int(round(t_end / fine_dt)), 4)) * np.sqrt(fine_dt)
    reference = advance(omega0, cfg, fine_dt, fine)

    errors = []
    for level in (1, 2, 4):
        coarse_dt = dt / level
        dbetas = fine.reshape(-1, 32 // level, 4).sum(axis=1)
        result = advance(omega0, cfg, coarse_dt, dbetas)
        errors.append(l2_norm(grid, result.coeffs - reference.coeffs))
    assert errors[0] > errors[1] > errors[2]
    assert errors[0] / errors[2] > 2.5


def test_ensemble_members_independent():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.05, t_end=0.5,
                    forcing=validate_forcing(FOUR_MODES), seed=2)
    trajs = simulate_ensemble(cfg, members=3)
    assert len(trajs) == 3
    np.testing.assert_array_equal(
        trajs[1].final.coeffs,
        simulate(cfg, noise=NoiseStream(2, 1)).final.coeffs)
    assert not np.array_equal(trajs[0].final.coeffs, trajs[1].final.coeffs)

    stacked = ensemble_observables(trajs)
    assert list(stacked['member'].unique()) == [0, 1, 2]
    with pytest.raises(ValueError):
        simulate_ensemble(cfg, members=0)


def test_ensemble_worker_count_does_not_matter():
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.05, t_end=0.2,
                    forcing=validate_forcing(FOUR_MODES), seed=4)
    serial = simulate_ensemble(cfg, members=2, num_workers=1)
    pooled = simulate_ensemble(cfg, members=2, num_workers=2)
    for a, b in zip(serial, pooled):
        pd.testing.assert_frame_equal(a.observables, b.observables)


def test_checkpoint_roundtrip(tmpdir):
    grid = GridSpec(n=16)
    cfg = SimConfig(grid=grid, nu=0.1, dt=0.05, t_end=0.5,
                    forcing=validate_forcing(FOUR_MODES))
    final = simulate(cfg).final
    fn = f'{tmpdir}/final.vort'
    checkpoint_save(final, fn)
    loaded = checkpoint_load(fn, cfg)
    np.testing.assert_array_equal(loaded.coeffs, final.coeffs)
    assert loaded.time == final.time

    with pytest.raises(SnapshotFormatError):
        checkpoint_load(fn, SimConfig(grid=GridSpec(n=32), nu=0.1))

    resumed = simulate(SimConfig(grid=grid, nu=0.1, dt=0.05, t_end=0.1),
                       loaded)
    assert resumed.observables['t'].values[0] == final.time
