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

"""The tangent flow of the discrete integrator and its adjoint.

The tangent is the exact Jacobian of :py:func:`integrator.step` around a
recorded path, so finite differences of the integrator and the forward
tangent agree to O(h) regardless of dt, and the reverse sweep is the exact
transpose of the forward sweep with respect to the L² pairing.

One step of the forward map reads

    J_j ξ = SP[ e^{-a dt} ξ - φ₁ dt F(G(𝒜ξ)·∇ω_j + u_j·G(∇ξ)) ]

where F is the forward transform, G the real part of the inverse transform,
P the dealias mask and S the Hermitian projection. With the grid pairing
(area/n²)Σ, G* = F; pointwise real products, P and S are self-adjoint and
a Fourier multiplier D has adjoint conj(D).
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

import stochvort
from stochvort.vorticity.forcing import (
    ForcingSpec, NoiseStream, directions_from_sincos, increment_from_dbeta)
from stochvort.vorticity.grid_spectral import (
    GridSpec, VorticityState, enforce_constraints, l2_norm, inner_product,
    lattice, low_mode_mask, norms, random_state, to_physical, to_spectral,
    to_sincos, transport_fields, velocity_coeffs)
from stochvort.vorticity.integrator import (
    SimConfig, draw_dbetas, increment_for, interval_steps, linear_factors,
    resolve_time_step, step)

ROLES = ('xi', 'zeta', 'rho')
DEFAULT_MAX_ITERATIONS = 200
DEFAULT_TOL = 1e-10


class PathError(ValueError):
    """A tangent computation does not fit the recorded path."""


@dataclass(frozen=True, eq=False)
class TangentField:
    """A perturbation of the vorticity, tagged with what it represents.

    Attributes:
        grid: The grid of the base path.
        coeffs: Lattice coefficients, same layout as a VorticityState.
        role: ``'xi'`` for a derivative with respect to the initial
            condition, ``'zeta'`` for the response to a control and
            ``'rho'`` for their difference.
    """
    grid: GridSpec
    coeffs: np.ndarray
    role: str = 'xi'

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError("role must be one of {}, not {!r}"
                             .format(ROLES, self.role))
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.shape:
            raise ValueError("Coefficient array of shape {} does not match "
                             "grid shape {}".format(coeffs.shape,
                                                    self.grid.shape))
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def zeros(cls, grid: GridSpec, role: str = 'xi') -> 'TangentField':
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), role)

    @classmethod
    def from_state(cls, omega: VorticityState,
                   role: str = 'xi') -> 'TangentField':
        return cls(omega.grid, omega.coeffs, role)

    def with_coeffs(self, coeffs: np.ndarray) -> 'TangentField':
        return TangentField(self.grid, coeffs, self.role)

    def with_role(self, role: str) -> 'TangentField':
        return TangentField(self.grid, self.coeffs, role)

    def norm(self) -> float:
        return l2_norm(self.grid, self.coeffs)

    def __add__(self, other: 'TangentField') -> 'TangentField':
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: 'TangentField') -> 'TangentField':
        return self.with_coeffs(self.coeffs - other.coeffs)


@dataclass(frozen=True, eq=False)
class FrozenPath:
    """A recorded base trajectory at full step resolution.

    Attributes:
        config: The configuration the path was integrated with.
        dt: The step used.
        start_step: Global index of the first step; the noise of step j was
            drawn with key ``start_step + j``.
        states: The state before each step, one per step.
        dbetas: The Brownian increments, shape (n_steps, D).
        final: The state after the last step.
    """
    config: SimConfig
    dt: float
    start_step: int
    states: Tuple[VorticityState, ...]
    dbetas: np.ndarray
    final: VorticityState
    _fields: Dict[int, Tuple[np.ndarray, ...]] = field(default_factory=dict,
                                                      repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    @property
    def n_steps(self) -> int:
        return len(self.states)

    @property
    def t_start(self) -> float:
        return self.final.time if not self.states else self.states[0].time

    @property
    def t_end(self) -> float:
        return self.final.time

    def state(self, node: int) -> VorticityState:
        """The state at node ``node``, 0 ≤ node ≤ n_steps."""
        if node == self.n_steps:
            return self.final
        return self.states[node]

    def transport(self, j: int) -> Tuple[np.ndarray, ...]:
        """Grid values u₁, u₂, ∂₁ω, ∂₂ω of the state before step j."""
        if j not in self._fields:
            self._fields[j] = transport_fields(self.states[j].coeffs,
                                               self.grid)
        return self._fields[j]


def record_path(cfg: SimConfig,
                omega0: VorticityState,
                n_steps: int,
                noise: Optional[NoiseStream] = None,
                start_step: int = 0,
                dt: Optional[float] = None) -> FrozenPath:
    """Integrate ``n_steps`` steps and keep everything the tangent needs."""
    if dt is None:
        dt = resolve_time_step(cfg, omega0)
    if noise is None:
        noise = NoiseStream(cfg.seed)
    dbetas = draw_dbetas(cfg, dt, noise, start_step, n_steps)
    states = []
    omega = omega0
    for dbeta in dbetas:
        states.append(omega)
        omega = step(omega, cfg, increment_for(cfg, dbeta), dt=dt)
    return FrozenPath(config=cfg, dt=dt, start_step=start_step,
                      states=tuple(states), dbetas=dbetas, final=omega)


def apply_q(spec: ForcingSpec, grid: GridSpec, c: np.ndarray) -> np.ndarray:
    """Q̄c = Σ_k γ_k c_k ē_k with ē_k the unit-norm forcing directions.

    ``c`` may carry leading batch axes.
    """
    return increment_from_dbeta(spec, grid, c) / np.sqrt(grid.area / 2)


def apply_q_adjoint(spec: ForcingSpec, grid: GridSpec,
                    coeffs: np.ndarray) -> np.ndarray:
    """Q̄*η = (γ_k ⟨ē_k, η⟩)_k."""
    coords = directions_from_sincos(spec, grid, to_sincos(coeffs, grid))
    return spec.amplitudes * coords * np.sqrt(grid.area / 2)


def _check_field(path: FrozenPath, xi: TangentField):
    if xi.grid != path.grid:
        raise PathError("Tangent field grid {} does not match path grid {}"
                        .format(xi.grid, path.grid))


def _check_range(path: FrozenPath, start: int, stop: int):
    if not 0 <= start <= stop <= path.n_steps:
        raise PathError("Steps [{}, {}) are not covered by a path of {} steps"
                        .format(start, stop, path.n_steps))


def jacobian_coeffs(path: FrozenPath, j: int, coeffs: np.ndarray
                    ) -> np.ndarray:
    """J_j applied to coefficients with optional leading batch axes."""
    cfg = path.config
    grid = cfg.grid
    decay, phi_dt = linear_factors(grid, cfg.nu, cfg.tau, path.dt)
    out = decay * coeffs
    if cfg.nonlinear:
        lat = lattice(grid)
        u1, u2, d1, d2 = path.transport(j)
        v1, v2 = velocity_coeffs(coeffs, grid)
        products = (to_physical(v1) * d1 + to_physical(v2) * d2
                    + u1 * to_physical(1j * lat.k1 * coeffs)
                    + u2 * to_physical(1j * lat.k2 * coeffs))
        out = out - phi_dt * to_spectral(products)
    return enforce_constraints(out, grid)


def jacobian_adjoint_coeffs(path: FrozenPath, j: int, coeffs: np.ndarray
                            ) -> np.ndarray:
    """J_j* applied to coefficients with optional leading batch axes."""
    cfg = path.config
    grid = cfg.grid
    decay, phi_dt = linear_factors(grid, cfg.nu, cfg.tau, path.dt)
    eta = enforce_constraints(coeffs, grid)
    out = decay * eta
    if cfg.nonlinear:
        lat = lattice(grid)
        u1, u2, d1, d2 = path.transport(j)
        g = to_physical(phi_dt * eta)
        # Biot-Savart multipliers i k₂/|k|² and -i k₁/|k|² are imaginary.
        a1 = 1j * lat.k2 * lat.inv_k_sq
        a2 = -1j * lat.k1 * lat.inv_k_sq
        out = out - (np.conj(a1) * to_spectral(d1 * g)
                     + np.conj(a2) * to_spectral(d2 * g)
                     + np.conj(1j * lat.k1) * to_spectral(u1 * g)
                     + np.conj(1j * lat.k2) * to_spectral(u2 * g))
    return enforce_constraints(out, grid)


def tangent_step(path: FrozenPath,
                 j: int,
                 xi: TangentField,
                 control: Optional[np.ndarray] = None) -> TangentField:
    """Advance ξ across step j of the path.

    Args:
        path: The recorded base path.
        j: The step index, 0 ≤ j < path.n_steps.
        xi: The tangent field at node j.
        control: Optional coefficients c, one per forced direction. The
            kick Q̄c is added at node j, before the step, so it is carried
            through the same integrating factor as the state.

    Raises:
        PathError: If j is not a step of the path or the grids differ.
    """
    _check_field(path, xi)
    if not 0 <= j < path.n_steps:
        raise PathError("Step {} is not part of a path of {} steps"
                        .format(j, path.n_steps))
    coeffs = xi.coeffs
    if control is not None:
        coeffs = coeffs + apply_q(path.config.forcing, path.grid, control)
    return xi.with_coeffs(jacobian_coeffs(path, j, coeffs))


def propagate_coeffs(path: FrozenPath, coeffs: np.ndarray, start: int,
                     stop: int,
                     controls: Optional[Mapping[int, np.ndarray]] = None
                     ) -> np.ndarray:
    _check_range(path, start, stop)
    controls = controls or {}
    spec = path.config.forcing
    for j in range(start, stop):
        if j in controls:
            coeffs = coeffs + apply_q(spec, path.grid, controls[j])
        coeffs = jacobian_coeffs(path, j, coeffs)
    if stop in controls:
        coeffs = coeffs + apply_q(spec, path.grid, controls[stop])
    return coeffs


def propagate(path: FrozenPath,
              xi: TangentField,
              start: int = 0,
              stop: Optional[int] = None,
              controls: Optional[Mapping[int, np.ndarray]] = None
              ) -> TangentField:
    """J_{start→stop} ξ, composed from tangent steps.

    Args:
        path: The recorded base path.
        xi: The field at node ``start``.
        start: First node.
        stop: Last node; defaults to the end of the path.
        controls: Kicks by node. The kick at node j is added before step j;
            a kick at ``stop`` is added after the last step.
    """
    if stop is None:
        stop = path.n_steps
    _check_field(path, xi)
    return xi.with_coeffs(propagate_coeffs(path, xi.coeffs, start, stop,
                                           controls))


def adjoint_sweep(path: FrozenPath, coeffs: np.ndarray, start: int,
                  stop: int, record: Sequence[int] = ()
                  ) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """Reverse sweep from node ``stop`` to node ``start``.

    Returns J*_{start→stop}η together with J*_{j→stop}η for each node j in
    ``record``.
    """
    _check_range(path, start, stop)
    wanted = set(record)
    recorded = {}
    if stop in wanted:
        recorded[stop] = coeffs
    for j in range(stop - 1, start - 1, -1):
        coeffs = jacobian_adjoint_coeffs(path, j, coeffs)
        if j in wanted:
            recorded[j] = coeffs
    return coeffs, recorded


def adjoint_apply(path: FrozenPath,
                  eta: TangentField,
                  start: int = 0,
                  stop: Optional[int] = None) -> TangentField:
    """J*_{start→stop} η by a reverse sweep over the stored path.

    Satisfies ⟨J ξ, η⟩ = ⟨ξ, J* η⟩ to roundoff for valid fields.
    """
    if stop is None:
        stop = path.n_steps
    _check_field(path, eta)
    out, _ = adjoint_sweep(path, eta.coeffs, start, stop)
    return eta.with_coeffs(out)


@dataclass(frozen=True)
class OperatorNormEstimate:
    """Result of a power iteration.

    Attributes:
        value: The estimated operator norm.
        iterations: Iterations taken.
        converged: Whether the relative change fell below the tolerance
            before the iteration cap.
    """
    value: float
    iterations: int
    converged: bool


def _high_pass(grid: GridSpec, cutoff: float, coeffs: np.ndarray):
    return np.where(low_mode_mask(grid, float(cutoff)), 0, coeffs)


def operator_norm(path: FrozenPath,
                  cutoff: float,
                  side: str = 'left',
                  max_iterations: int = DEFAULT_MAX_ITERATIONS,
                  tol: float = DEFAULT_TOL,
                  rng: Optional[np.random.Generator] = None,
                  verbose: bool = False) -> OperatorNormEstimate:
    """Power iteration for ‖(1-π)J‖ (``side='left'``) or ‖J(1-π)‖.

    π projects onto |k| ≤ cutoff and J is the propagator over the whole
    path. The iteration runs on the PSD operators J*(1-π)J and
    (1-π)J*J(1-π); the norm is the square root of their Rayleigh quotient.
    """
    if side not in ('left', 'right'):
        raise ValueError("side must be 'left' or 'right', not {!r}"
                         .format(side))
    grid = path.grid
    n = path.n_steps
    if rng is None:
        rng = np.random.default_rng(0)

    def apply(x):
        if side == 'left':
            y = _high_pass(grid, cutoff, propagate_coeffs(path, x, 0, n))
            return adjoint_sweep(path, y, 0, n)[0]
        y = propagate_coeffs(path, _high_pass(grid, cutoff, x), 0, n)
        return _high_pass(grid, cutoff, adjoint_sweep(path, y, 0, n)[0])

    x = random_state(grid, rng).coeffs
    if side == 'right':
        x = _high_pass(grid, cutoff, x)
    x_norm = l2_norm(grid, x)
    if x_norm == 0:
        return OperatorNormEstimate(0.0, 0, True)
    x = x / x_norm

    value = 0.0
    for iteration in range(1, max_iterations + 1):
        y = apply(x)
        new = float(np.sqrt(max(inner_product(grid, x, y), 0.0)))
        y_norm = l2_norm(grid, y)
        if y_norm == 0:
            return OperatorNormEstimate(0.0, iteration, True)
        x = y / y_norm
        if abs(new - value) <= tol * new:
            return OperatorNormEstimate(new, iteration, True)
        value = new
    if verbose:
        print(f"Power iteration did not converge in {max_iterations} "
              f"iterations; last estimate {value:.6g}.")
    return OperatorNormEstimate(value, max_iterations, False)


def diagonal_prediction(cfg: SimConfig, cutoff: float, T: float) -> float:
    """e^{-(ν m² + τ)T} with m the smallest |k| above ``cutoff``."""
    lat = lattice(cfg.grid)
    high = lat.dealias & ~low_mode_mask(cfg.grid, float(cutoff))
    if not np.any(high):
        return 0.0
    m_sq = float(np.min(lat.k_sq[high]))
    return float(np.exp(-(cfg.nu * m_sq + cfg.tau) * T))


def _contraction_sample(cfg: SimConfig, cutoff: float, T: float,
                        omega0: Optional[VorticityState], sample: int,
                        max_iterations: int, tol: float):
    if omega0 is None:
        omega0 = VorticityState.zeros(cfg.grid)
    n_steps, dt = interval_steps(T, resolve_time_step(cfg, omega0))
    path = record_path(cfg, omega0, n_steps,
                       NoiseStream(cfg.seed, sample), dt=dt)
    rng = np.random.default_rng([cfg.seed, sample])
    left = operator_norm(path, cutoff, 'left', max_iterations, tol, rng)
    right = operator_norm(path, cutoff, 'right', max_iterations, tol, rng)
    return left, right


class ContractionStat(NamedTuple):
    """Monte Carlo moments of the high-mode parts of J_{0,T}.

    ``left`` holds samples of ‖(1-π)J‖ and ``right`` of ‖J(1-π)‖.
    """
    cutoff: float
    T: float
    p: float
    left: np.ndarray
    right: np.ndarray
    converged: np.ndarray
    diagonal: float
    norm_w0: float

    def moment(self, side: str = 'left'):
        """Sample mean of the p-th power and its 95% normal interval."""
        values = (self.left if side == 'left' else self.right) ** self.p
        mean = float(np.mean(values))
        if len(values) < 2:
            return mean, mean, mean
        half = 1.96 * float(np.std(values, ddof=1)) / np.sqrt(len(values))
        return mean, mean - half, mean + half

    def to_frame(self, side: str = 'left') -> pd.DataFrame:
        mean, lo, hi = self.moment(side)
        return pd.DataFrame([{
            'cutoff': self.cutoff, 'T': self.T, 'p': self.p, 'mean': mean,
            'ci_lo': lo, 'ci_hi': hi, 'samples': len(self.left),
        }])


def contraction_stat(cfg: SimConfig,
                     cutoff: float,
                     T: float,
                     samples: int,
                     p: float = 2.0,
                     omega0: Optional[VorticityState] = None,
                     num_workers: int = 1,
                     max_iterations: int = DEFAULT_MAX_ITERATIONS,
                     tol: float = DEFAULT_TOL,
                     verbose: bool = False) -> ContractionStat:
    """Estimate E‖(1-π)J_{0,T}‖^p and E‖J_{0,T}(1-π)‖^p.

    Sample i integrates noise trajectory i from ``omega0`` (default 0) and
    runs power iteration on both operators.
    """
    if p < 1:
        raise ValueError("p must be at least 1, not {}".format(p))
    if samples < 1:
        raise ValueError("samples must be at least 1, not {}".format(samples))
    results = stochvort.execute_in_pool(
        _contraction_sample,
        [(cfg, cutoff, T, omega0, i, max_iterations, tol)
         for i in range(samples)],
        num_workers)
    converged = np.array([l.converged and r.converged for l, r in results])
    if verbose and not np.all(converged):
        print(f"{np.sum(~converged)} of {samples} power iterations hit the "
              f"cap of {max_iterations} iterations.")
    norm_w0 = 0.0 if omega0 is None else norms(omega0).l2
    return ContractionStat(
        cutoff=float(cutoff), T=float(T), p=float(p),
        left=np.array([l.value for l, _ in results]),
        right=np.array([r.value for _, r in results]),
        converged=converged,
        diagonal=diagonal_prediction(cfg, cutoff, T),
        norm_w0=norm_w0)


def growth_record(path: FrozenPath, xi: TangentField) -> pd.DataFrame:
    """log(‖ξ(t)‖/‖ξ(s)‖) and ∫_s^t ‖∇ω‖² along a path."""
    cfg = path.config
    times = np.array([path.state(j).time for j in range(path.n_steps + 1)])
    h1_sq = np.array([norms(path.state(j)).h1 ** 2
                      for j in range(path.n_steps + 1)])
    size = [xi.norm()]
    coeffs = xi.coeffs
    for j in range(path.n_steps):
        coeffs = jacobian_coeffs(path, j, coeffs)
        size.append(l2_norm(cfg.grid, coeffs))
    return pd.DataFrame({
        't': times - times[0],
        'log_growth': np.log(np.array(size) / size[0]),
        'h1_integral': cumulative_trapezoid(h1_sq, times, initial=0.0),
    })


class GrowthFit(NamedTuple):
    """Least-squares fit of log growth ≈ C·t + δ·∫‖∇ω‖².

    ``offset`` is the largest excess of the data over the fitted line, so
    log growth ≤ C·t + δ·∫‖∇ω‖² + offset holds on every sample.
    """
    rate: float
    enstrophy_coefficient: float
    offset: float
    points: int


def growth_fit(records: Sequence[pd.DataFrame]) -> GrowthFit:
    frame = pd.concat(records, ignore_index=True)
    frame = frame[frame['t'] > 0]
    if len(frame) < 2:
        raise ValueError("Need at least two points past t = 0 to fit growth.")
    design = np.stack([frame['t'].values, frame['h1_integral'].values], axis=1)
    target = frame['log_growth'].values
    (rate, delta), *_ = np.linalg.lstsq(design, target, rcond=None)
    offset = float(max(np.max(target - design @ np.array([rate, delta])), 0.0))
    return GrowthFit(float(rate), float(delta), offset, len(frame))


def sample_growth(cfg: SimConfig, T: float, samples: int,
                  omega0: Optional[VorticityState] = None,
                  num_workers: int = 1) -> GrowthFit:
    """Fit the growth bound over independent paths and random ξ(0)."""
    records = stochvort.execute_in_pool(
        _growth_sample, [(cfg, T, omega0, i) for i in range(samples)],
        num_workers)
    return growth_fit(records)


def _growth_sample(cfg: SimConfig, T: float,
                   omega0: Optional[VorticityState], sample: int):
    if omega0 is None:
        omega0 = VorticityState.zeros(cfg.grid)
    n_steps, dt = interval_steps(T, resolve_time_step(cfg, omega0))
    path = record_path(cfg, omega0, n_steps,
                       NoiseStream(cfg.seed, sample), dt=dt)
    rng = np.random.default_rng([cfg.seed, sample, 1])
    xi = TangentField.from_state(random_state(cfg.grid, rng))
    return growth_record(path, xi)
