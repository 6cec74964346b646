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

import numpy as np
import pytest

from stochvort.vorticity.grid_spectral import (
    GridSpec, VorticityState, SnapshotFormatError, biot_savart, nonlinear,
    nonlinear_direct, project_low, norms, random_state, lattice, to_sincos,
    from_sincos, inner_product, write_snapshot, read_snapshot)


def sincos_state(grid, coords):
    """A state from {(m1, m2): coordinate} in the sin/cos basis."""
    real = np.zeros(grid.shape)
    for (m1, m2), value in coords.items():
        real[m1 % grid.n, m2 % grid.n] = value
    return VorticityState.from_coeffs(grid, from_sincos(real, grid))


def grid_points(grid):
    x = np.arange(grid.n) * grid.dx
    return np.meshgrid(x, x, indexing='ij')


def test_grid_spec_validation():
    with pytest.raises(ValueError) as e:
        GridSpec(n=7)
    assert e.match(r'n must be an even integer >= 8.*')
    with pytest.raises(ValueError):
        GridSpec(n=6)
    with pytest.raises(ValueError) as e:
        GridSpec(n=16, scale=0)
    assert e.match(r'scale must be positive.*')


def test_dealias_cutoff():
    assert GridSpec(n=8).cutoff == 2
    assert GridSpec(n=16).cutoff == 5
    assert GridSpec(n=12).cutoff == 3
    assert GridSpec(n=64).cutoff == 21
    assert GridSpec(n=256).cutoff == 85
    assert GridSpec(n=16, dealias_fraction=0.5).cutoff == 4


def test_sin_x1_basis_normalization():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(1, 0): 1.0})
    x1, x2 = grid_points(grid)
    np.testing.assert_allclose(omega.to_physical(), np.sin(x1), atol=1e-14)
    coords = to_sincos(omega.coeffs, grid)
    assert coords[1, 0] == 1.0
    assert np.count_nonzero(coords) == 1


def test_sincos_roundtrip():
    grid = GridSpec(n=16)
    omega = random_state(grid, np.random.RandomState(52))
    back = from_sincos(to_sincos(omega.coeffs, grid), grid)
    np.testing.assert_allclose(back, omega.coeffs, atol=1e-14)


def test_biot_savart_shear():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(1, 0): 1.0})
    u = biot_savart(omega)
    v1, v2 = u.to_physical()
    x1, x2 = grid_points(grid)
    np.testing.assert_allclose(v1, 0, atol=1e-14)
    np.testing.assert_allclose(v2, -np.cos(x1), atol=1e-14)

    lat = lattice(grid)
    curl = 1j * lat.k1 * u.u2 - 1j * lat.k2 * u.u1
    np.testing.assert_allclose(curl, omega.coeffs, atol=1e-15)


def test_biot_savart_zero():
    grid = GridSpec(n=8)
    u = biot_savart(VorticityState.zeros(grid))
    assert np.all(u.u1 == 0)
    assert np.all(u.u2 == 0)


def test_biot_savart_divergence_free():
    grid = GridSpec(n=32, scale=1.5)
    rs = np.random.RandomState(52)
    for _ in range(5):
        u = biot_savart(random_state(grid, rs))
        size = np.sqrt(np.sum(np.abs(u.u1) ** 2 + np.abs(u.u2) ** 2))
        assert np.max(np.abs(u.divergence())) <= 1e-12 * size
        for comp in (u.u1, u.u2):
            flipped = np.roll(np.flip(comp), 1, axis=(0, 1))
            np.testing.assert_allclose(comp, np.conj(flipped), atol=1e-15)


def test_biot_savart_rejects_mean():
    grid = GridSpec(n=8)
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[0, 0] = 1.0
    with pytest.raises(ValueError) as e:
        biot_savart(VorticityState(grid, coeffs))
    assert e.match(r'.*zero mean.*')


def test_nonlinear_vanishes_on_single_shells():
    grid = GridSpec(n=16)
    shear = sincos_state(grid, {(1, 0): 1.0})
    np.testing.assert_allclose(nonlinear(shear).coeffs, 0, atol=1e-14)

    # sin x1 sin x2 = ½cos(x1 - x2) - ½cos(x1 + x2)
    x1, x2 = grid_points(grid)
    cell = VorticityState.from_physical(grid, np.sin(x1) * np.sin(x2))
    np.testing.assert_allclose(nonlinear(cell).coeffs, 0, atol=1e-13)


def test_nonlinear_matches_direct_on_two_modes():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(1, 0): 1.0, (1, 1): 1.0})
    pseudo = nonlinear(omega).coeffs
    direct = nonlinear_direct(omega, cutoff=2).coeffs
    assert np.max(np.abs(pseudo)) > 0.1
    np.testing.assert_allclose(pseudo, direct,
                               atol=1e-10 * np.max(np.abs(pseudo)))


def test_nonlinear_direct_support():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(1, 0): 1.0, (1, 1): 1.0})
    out = nonlinear_direct(omega, cutoff=2).coeffs
    lat = lattice(grid)
    nonzero = np.abs(out) > 1e-14
    support = set(zip(lat.m1[nonzero], lat.m2[nonzero]))
    assert support == {(2, 1), (0, 1), (-2, -1), (0, -1)}


def test_nonlinear_direct_single_shell():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(3, 4): 1.0, (5, 0): -0.5, (0, -5): 2.0})
    np.testing.assert_allclose(nonlinear_direct(omega, cutoff=5).coeffs, 0,
                               atol=1e-13)


def test_nonlinear_direct_rejects_large_cutoff():
    grid = GridSpec(n=16)
    omega = sincos_state(grid, {(1, 0): 1.0})
    with pytest.raises(ValueError) as e:
        nonlinear_direct(omega, cutoff=6)
    assert e.match(r'.*dealias-safe bound.*')
    with pytest.raises(ValueError) as e:
        nonlinear_direct(sincos_state(grid, {(4, 4): 1.0}), cutoff=5)
    assert e.match(r'.*active modes.*')


def test_oracle_equivalence():
    grid = GridSpec(n=16)
    rs = np.random.RandomState(52)
    for _ in range(100):
        omega = random_state(grid, rs, cutoff=5)
        pseudo = nonlinear(omega).coeffs
        direct = nonlinear_direct(omega, cutoff=5).coeffs
        assert np.max(np.abs(pseudo - direct)) <= 1e-10 * np.max(np.abs(pseudo))


def test_oracle_with_scale_and_five_modes():
    grid = GridSpec(n=16, scale=2.0)
    rs = np.random.RandomState(53)
    coords = {(1, 0): rs.randn(), (2, 1): rs.randn(), (-1, 2): rs.randn(),
              (0, 3): rs.randn(), (-3, -1): rs.randn()}
    omega = sincos_state(grid, coords)
    pseudo = nonlinear(omega).coeffs
    direct = nonlinear_direct(omega, cutoff=4).coeffs
    assert np.max(np.abs(pseudo - direct)) <= 1e-10 * np.max(np.abs(pseudo))


def test_transport_conserves_enstrophy_and_energy():
    grid = GridSpec(n=64)
    lat = lattice(grid)
    rs = np.random.RandomState(52)
    for _ in range(100):
        omega = random_state(grid, rs, slope=-1.0)
        tendency = nonlinear(omega).coeffs
        size = (np.sqrt(inner_product(grid, omega.coeffs, omega.coeffs))
                * np.sqrt(inner_product(grid, tendency, tendency)))
        assert abs(inner_product(grid, tendency, omega.coeffs)) <= 1e-10 * size
        inv_laplacian = -lat.inv_k_sq * omega.coeffs
        assert abs(inner_product(grid, tendency, inv_laplacian)) <= 1e-10 * size


def test_nonlinear_output_is_valid_state():
    grid = GridSpec(n=32)
    omega = random_state(grid, np.random.RandomState(54))
    nonlinear(omega).validate()


def test_project_low():
    grid = GridSpec(n=32)
    rs = np.random.RandomState(52)
    omega = random_state(grid, rs)
    c = grid.cutoff

    same = project_low(omega, np.sqrt(2) * c)
    np.testing.assert_array_equal(same.coeffs, omega.coeffs)
    disc = random_state(grid, rs, cutoff=c)
    np.testing.assert_array_equal(project_low(disc, c).coeffs, disc.coeffs)
    assert np.all(project_low(omega, 0).coeffs == 0)

    low = project_low(omega, 4)
    high = omega.coeffs - low.coeffs
    total = inner_product(grid, omega.coeffs, omega.coeffs)
    parts = (inner_product(grid, low.coeffs, low.coeffs)
             + inner_product(grid, high, high))
    np.testing.assert_allclose(parts, total, rtol=1e-12)

    np.testing.assert_array_equal(project_low(low, 4).coeffs, low.coeffs)
    eta = random_state(grid, rs)
    size = np.sqrt(total * inner_product(grid, eta.coeffs, eta.coeffs))
    np.testing.assert_allclose(
        inner_product(grid, low.coeffs, eta.coeffs),
        inner_product(grid, omega.coeffs, project_low(eta, 4).coeffs),
        rtol=0, atol=1e-12 * size)

    with pytest.raises(ValueError):
        project_low(omega, -1)


def test_norms_of_sin_x1():
    grid = GridSpec(n=16)
    l2, h1, energy = norms(sincos_state(grid, {(1, 0): 1.0}))
    np.testing.assert_allclose(l2 ** 2, 2 * np.pi ** 2, rtol=1e-14)
    np.testing.assert_allclose(h1 ** 2, 2 * np.pi ** 2, rtol=1e-14)
    np.testing.assert_allclose(energy, np.pi ** 2, rtol=1e-14)
    assert norms(VorticityState.zeros(grid)) == (0.0, 0.0, 0.0)


def test_norms_match_physical_quadrature():
    grid = GridSpec(n=32, scale=1.5)
    omega = random_state(grid, np.random.RandomState(55))
    values = omega.to_physical()
    integral = np.sum(values ** 2) * grid.dx ** 2
    np.testing.assert_allclose(norms(omega).l2 ** 2, integral, rtol=1e-12)


def test_poincare():
    rs = np.random.RandomState(52)
    for scale in (1.0, 2.0, 0.5):
        grid = GridSpec(n=16, scale=scale)
        for _ in range(10):
            l2, h1, _ = norms(random_state(grid, rs))
            assert h1 >= l2 / scale * (1 - 1e-14)


def test_snapshot_roundtrip(tmpdir):
    grid = GridSpec(n=16, scale=1.5)
    omega = random_state(grid, np.random.RandomState(52), time=3.25)
    fn = f'{tmpdir}/omega.vort'
    write_snapshot(omega, fn)
    loaded = read_snapshot(fn)
    assert loaded.grid == grid
    assert loaded.time == 3.25
    np.testing.assert_array_equal(loaded.coeffs, omega.coeffs)

    with open(fn, 'rb') as f:
        assert f.read(4) == b'VORT'


def test_snapshot_errors(tmpdir):
    grid = GridSpec(n=16)
    omega = random_state(grid, np.random.RandomState(52))
    fn = f'{tmpdir}/omega.vort'
    write_snapshot(omega, fn)
    with open(fn, 'rb') as f:
        blob = f.read()

    with pytest.raises(SnapshotFormatError) as e:
        read_snapshot(fn, grid=GridSpec(n=32))
    assert e.match(r'.*does not match.*')

    bad = f'{tmpdir}/bad.vort'
    with open(bad, 'wb') as f:
        f.write(b'VRTX' + blob[4:])
    with pytest.raises(SnapshotFormatError) as e:
        read_snapshot(bad)
    assert e.match(r'.*magic.*')

    with open(bad, 'wb') as f:
        f.write(blob[:-7])
    with pytest.raises(SnapshotFormatError) as e:
        read_snapshot(bad)
    assert e.match(r'.*Truncated.*')

    with open(bad, 'wb') as f:
        f.write(blob[:10])
    with pytest.raises(SnapshotFormatError) as e:
        read_snapshot(bad)
    assert e.match(r'.*Truncated.*')
