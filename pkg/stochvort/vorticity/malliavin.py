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

"""Malliavin matrix on a Galerkin subspace, cone nondegeneracy and the
alternating low-mode control.

All matrices are expressed in an orthonormal real basis ē_m of the modes
with 0 < |k| ≤ M_g: the normalized sine for m in the half lattice Z⁺ and
the normalized cosine for -m in Z⁺. The forcing operator is the normalized
Q̄c = Σ_k γ_k c_k ē_k, so the Stokes matrix has entries
γ²(1 - e^{-2aT})/(2a) on the forced modes.
"""

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import brentq
from scipy.stats import linregress

import stochvort
from stochvort.vorticity.forcing import ForcingSpec, NoiseStream
from stochvort.vorticity.grid_spectral import (
    GridSpec, VorticityState, from_sincos, lattice, l2_norm, low_mode_mask,
    norms, random_state, to_sincos)
from stochvort.vorticity.integrator import (
    SimConfig, interval_steps, resolve_time_step, simulate, steps_for)
from stochvort.vorticity.tangent import (
    FrozenPath, TangentField, adjoint_sweep, apply_q, apply_q_adjoint,
    jacobian_coeffs, propagate_coeffs, record_path)

SURVEY_QUANTILES = (0.01, 0.05, 0.1, 0.25, 0.5)
DEFAULT_INITIAL_RADIUS = 1.0
CONTROL_COLUMNS = ['n', 'rho_norm', 'rho_low_norm', 'control_energy',
                   'identity_residual']


class GalerkinBasis(NamedTuple):
    """Lattice positions of the Galerkin directions, in basis order."""
    grid: GridSpec
    cutoff: float
    m1: np.ndarray
    m2: np.ndarray
    wavenumbers: np.ndarray

    @property
    def size(self) -> int:
        return len(self.m1)

    @property
    def positions(self):
        return self.m1 % self.grid.n, self.m2 % self.grid.n


@lru_cache(maxsize=None)
def galerkin_basis(grid: GridSpec, cutoff: float) -> GalerkinBasis:
    """Modes with 0 < |k| ≤ cutoff ordered by (|k|, m₁, m₂).

    Raises:
        ValueError: If the disc |k| ≤ cutoff is not inside the retained
            modes of the grid.
    """
    lat = lattice(grid)
    disc = low_mode_mask(grid, float(cutoff)) & (lat.k_sq > 0)
    if np.any(disc & ~lat.dealias):
        raise ValueError("Galerkin cutoff {} exceeds the retained modes of a "
                         "grid with cutoff {}".format(cutoff, grid.cutoff))
    m1, m2 = lat.m1[disc], lat.m2[disc]
    k = np.sqrt(lat.k_sq[disc])
    order = np.lexsort((m2, m1, k))
    return GalerkinBasis(grid=grid, cutoff=float(cutoff), m1=m1[order],
                         m2=m2[order], wavenumbers=k[order])


def galerkin_coords(coeffs: np.ndarray, basis: GalerkinBasis) -> np.ndarray:
    """Coordinates along ē_m; leading batch axes are kept."""
    i1, i2 = basis.positions
    real = to_sincos(coeffs, basis.grid)
    return real[..., i1, i2] * np.sqrt(basis.grid.area / 2)


def from_galerkin(vector: np.ndarray, basis: GalerkinBasis) -> np.ndarray:
    """Lattice coefficients of Σ_m vector_m ē_m."""
    i1, i2 = basis.positions
    vector = np.asarray(vector, dtype=float)
    real = np.zeros(vector.shape[:-1] + basis.grid.shape)
    real[..., i1, i2] = vector / np.sqrt(basis.grid.area / 2)
    return from_sincos(real, basis.grid)


def quadrature_nodes(n_steps: int, quad_substeps: int, dt: float):
    """Trapezoidal nodes (step indices) and weights over ``n_steps`` steps."""
    if n_steps == 0:
        return np.array([0]), np.array([0.0])
    if quad_substeps < 1 or n_steps % quad_substeps != 0:
        raise ValueError("quad_substeps must divide the {} steps of the "
                         "interval, not {}".format(n_steps, quad_substeps))
    stride = n_steps // quad_substeps
    nodes = np.arange(0, n_steps + 1, stride)
    weights = np.full(len(nodes), stride * dt)
    weights[[0, -1]] /= 2
    return nodes, weights


@dataclass(frozen=True, eq=False)
class MalliavinMatrix:
    """M = Σ_j w_j B_j B_jᵀ with B_j = π_g J_{s_j→t} Q̄.

    Attributes:
        matrix: The symmetric n_g × n_g matrix in the ē basis.
        basis: The Galerkin directions.
        t_start, t_end: The interval.
        quad_substeps: Number of trapezoidal panels.
        columns: The weighted columns √w_j B_j stacked as rows, so that
            M = columnsᵀ columns.
    """
    matrix: np.ndarray
    basis: GalerkinBasis
    t_start: float
    t_end: float
    quad_substeps: int
    columns: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.size

    def low_mask(self, low_cutoff: float) -> np.ndarray:
        """Which basis directions have |k| ≤ low_cutoff."""
        if low_cutoff > self.basis.cutoff:
            raise ValueError("low_cutoff {} exceeds the Galerkin cutoff {}"
                             .format(low_cutoff, self.basis.cutoff))
        return self.basis.wavenumbers <= low_cutoff * (1 + 1e-12)

    def eigvalsh(self) -> np.ndarray:
        return scipy.linalg.eigvalsh(self.matrix)


def assemble_matrix(path: FrozenPath,
                    spec: Optional[ForcingSpec] = None,
                    galerkin_cutoff: float = 4.0,
                    quad_substeps: Optional[int] = None,
                    verbose: bool = False) -> MalliavinMatrix:
    """Assemble the Galerkin Malliavin matrix over the whole path.

    Every quadrature node contributes one column per forced direction. The
    columns of all nodes are propagated together in a single forward sweep,
    the new ones joining the batch at their node.

    Args:
        path: The recorded base path over [s, t].
        spec: The forcing; defaults to the path's forcing.
        galerkin_cutoff: M_g, the radius of the Galerkin disc.
        quad_substeps: Trapezoidal panels; must divide the path's steps.
            Defaults to one panel per step.
        verbose: Print the assembled size.
    """
    if spec is None:
        spec = path.config.forcing
    if spec is None:
        raise ValueError("Cannot assemble a Malliavin matrix without forcing.")
    grid = path.grid
    basis = galerkin_basis(grid, galerkin_cutoff)
    n = path.n_steps
    if quad_substeps is None:
        quad_substeps = max(n, 1)
    nodes, weights = quadrature_nodes(n, quad_substeps, path.dt)
    kicks = apply_q(spec, grid, np.eye(spec.directions))
    node_weight = dict(zip(nodes.tolist(), weights))

    columns = np.zeros((0,) + grid.shape, dtype=np.complex128)
    column_weights = []
    for j in range(n):
        if j in node_weight:
            columns = np.concatenate([columns, kicks])
            column_weights.extend([node_weight[j]] * spec.directions)
        columns = jacobian_coeffs(path, j, columns)
    columns = np.concatenate([columns, kicks])
    column_weights.extend([node_weight[n]] * spec.directions)

    b = galerkin_coords(columns, basis) * np.sqrt(column_weights)[:, None]
    matrix = b.T @ b
    matrix = 0.5 * (matrix + matrix.T)
    if verbose:
        print(f"Assembled {basis.size}x{basis.size} Malliavin matrix from "
              f"{len(column_weights)} columns.")
    return MalliavinMatrix(matrix=matrix, basis=basis,
                           t_start=path.t_start, t_end=path.t_end,
                           quad_substeps=quad_substeps, columns=b)


class ConeResult(NamedTuple):
    """The cone infimum with a minimizer and its multiplier.

    ``value`` is the dual value max_μ λ_min(M - μ(P - α²)) and ``vector``
    a unit vector in the cone attaining it to solver precision.
    """
    value: float
    vector: np.ndarray
    multiplier: float


def _check_cone_input(matrix: np.ndarray, low: np.ndarray, alpha: float):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1), not {}".format(alpha))
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("Expected a square matrix, not shape {}"
                         .format(matrix.shape))
    low = np.asarray(low, dtype=bool)
    if low.shape != (matrix.shape[0],):
        raise ValueError("Low-mode mask of shape {} does not match a {}x{} "
                         "matrix".format(low.shape, *matrix.shape))
    if not np.any(low):
        raise ValueError("The cone is empty: no direction lies below the "
                         "low-mode cutoff.")
    scale = max(float(np.max(np.abs(matrix))), 1e-300)
    if np.max(np.abs(matrix - matrix.T)) > 1e-12 * scale:
        raise ValueError("Matrix is not symmetric.")
    return 0.5 * (matrix + matrix.T), low


def _resolve_low(matrix, low):
    if isinstance(matrix, MalliavinMatrix):
        if np.ndim(low) == 0:
            low = matrix.low_mask(float(low))
        return matrix.matrix, low
    if np.ndim(low) == 0:
        raise ValueError("A plain matrix needs an explicit low-mode mask.")
    return matrix, low


def _boundary_combination(vectors: np.ndarray, form: np.ndarray):
    """A unit vector in span(vectors) with zero ``form`` value, if possible.

    Returns the vector maximizing the form when it cannot be made zero.
    """
    reduced = vectors.T @ form @ vectors
    values, coeffs = scipy.linalg.eigh(reduced)
    lo, hi = values[0], values[-1]
    if hi <= 0 or lo >= 0:
        return vectors @ coeffs[:, -1]
    theta = np.arctan(np.sqrt(-lo / hi))
    combined = np.cos(theta) * coeffs[:, 0] + np.sin(theta) * coeffs[:, -1]
    phi = vectors @ combined
    return phi / np.linalg.norm(phi)


def cone_minimizer(matrix: Union[MalliavinMatrix, np.ndarray],
                   low,
                   alpha: float) -> ConeResult:
    """inf ⟨Mφ, φ⟩ over unit φ with ‖π_ℓφ‖ ≥ α‖φ‖.

    The cone is the set where φᵀBφ ≥ 0 with B = P - α²I, P the diagonal
    projector onto the low directions. If the bottom eigenspace of M meets
    the cone the answer is λ_min(M). Otherwise the infimum is attained on
    the boundary and equals max_{μ≥0} λ_min(M - μB); the maximizing μ is the
    root of μ ↦ φ(μ)ᵀBφ(μ), φ(μ) the bottom eigenvector, which changes sign
    on [0, (λ_max - λ_min)/(1 - α²)].

    Args:
        matrix: A MalliavinMatrix or a symmetric PSD array.
        low: A low-mode cutoff (for a MalliavinMatrix) or a boolean mask
            over the basis.
        alpha: The cone aperture, 0 < α < 1.

    Raises:
        ValueError: On a non-symmetric or non-PSD matrix, an empty cone or
            α outside (0, 1).
    """
    matrix, low = _resolve_low(matrix, low)
    m, low = _check_cone_input(matrix, low, alpha)
    eigenvalues, vectors = scipy.linalg.eigh(m)
    trace = float(np.trace(m))
    if eigenvalues[0] < -1e-10 * max(trace, 1e-300):
        raise ValueError("Matrix is not positive semidefinite: smallest "
                         "eigenvalue {:.3e} with trace {:.3e}"
                         .format(eigenvalues[0], trace))
    form = np.diag(low.astype(float)) - alpha ** 2 * np.eye(len(low))
    spread = float(eigenvalues[-1] - eigenvalues[0])
    cluster_tol = 1e-10 * max(abs(float(eigenvalues[-1])), 1e-300)

    bottom = vectors[:, eigenvalues <= eigenvalues[0] + cluster_tol]
    phi = _boundary_combination(bottom, form)
    if phi @ form @ phi >= -1e-14:
        return ConeResult(float(eigenvalues[0]), phi, 0.0)

    def slope(mu):
        w, v = scipy.linalg.eigh(m - mu * form)
        return float(v[:, 0] @ form @ v[:, 0])

    mu_hi = spread / (1 - alpha ** 2) * (1 + 1e-9) + 1e-300
    if slope(mu_hi) <= 0:
        mu_star = mu_hi
    else:
        mu_star = brentq(slope, 0.0, mu_hi, xtol=1e-14 * max(mu_hi, 1.0),
                         rtol=4 * np.finfo(float).eps)
    shifted = m - mu_star * form
    w, v = scipy.linalg.eigh(shifted)
    tol = 1e-10 * max(abs(float(w[-1])), abs(float(eigenvalues[-1])), 1e-300)
    phi = _boundary_combination(v[:, w <= w[0] + tol], form)
    return ConeResult(float(w[0]), phi, float(mu_star))


def cone_min(matrix: Union[MalliavinMatrix, np.ndarray], low,
             alpha: float) -> float:
    """The cone nondegeneracy statistic; see :py:func:`cone_minimizer`."""
    return cone_minimizer(matrix, low, alpha).value


def cone_min_sampled(matrix: Union[MalliavinMatrix, np.ndarray],
                     low,
                     alpha: float,
                     samples: int = 100_000,
                     rng: Optional[np.random.Generator] = None) -> float:
    """Upper bound on the cone infimum from random cone directions.

    Each sample takes independent Gaussian directions in the low and high
    subspaces and mixes them at an angle whose cosine is at least α, so
    every sample lies in the cone.
    """
    matrix, low = _resolve_low(matrix, low)
    m, low = _check_cone_input(matrix, low, alpha)
    if rng is None:
        rng = np.random.default_rng(0)
    dim = len(low)
    raw = rng.standard_normal((samples, dim))
    a = np.where(low, raw, 0)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = np.where(low, 0, raw)
    b_norm = np.linalg.norm(b, axis=1, keepdims=True)
    b = np.divide(b, b_norm, out=np.zeros_like(b), where=b_norm > 0)
    theta = rng.uniform(0, np.arccos(alpha), size=(samples, 1))
    phi = np.cos(theta) * a + np.sin(theta) * b
    phi /= np.linalg.norm(phi, axis=1, keepdims=True)
    return float(np.min(np.einsum('si,ij,sj->s', phi, m, phi)))


class TailFit(NamedTuple):
    """log F(x) ≈ exponent·log x + intercept over the lower tail."""
    exponent: float
    intercept: float
    stderr: float
    points: int


def tail_fit(values: Sequence[float], upper_quantile: float = 0.5) -> TailFit:
    """Fit the empirical CDF of positive values on a log-log scale."""
    values = np.sort(np.asarray(values, dtype=float))
    cdf = np.arange(1, len(values) + 1) / len(values)
    keep = (values > 0) & (cdf <= upper_quantile)
    if np.sum(keep) < 3:
        return TailFit(float('nan'), float('nan'), float('nan'),
                       int(np.sum(keep)))
    fit = linregress(np.log(values[keep]), np.log(cdf[keep]))
    return TailFit(float(fit.slope), float(fit.intercept),
                   float(fit.stderr), int(np.sum(keep)))


def survey_initial_state(grid: GridSpec, radius: float,
                         rng: np.random.Generator) -> VorticityState:
    """A smooth random state with ‖ω₀‖ uniform on [0, radius]."""
    if radius == 0:
        return VorticityState.zeros(grid)
    omega = random_state(grid, rng, slope=-2.0)
    size = norms(omega).l2
    return omega.with_coeffs(omega.coeffs * (radius * rng.uniform() / size))


def _survey_sample(cfg: SimConfig, galerkin_cutoff: float, low_cutoff: float,
                   alpha: float, interval: float, spinup: float,
                   initial_radius: float, quad_substeps: Optional[int],
                   sample: int):
    noise = NoiseStream(cfg.seed, sample)
    rng = np.random.default_rng([cfg.seed, sample, 3])
    omega = survey_initial_state(cfg.grid, initial_radius, rng)
    dt = resolve_time_step(cfg, omega)
    spin_steps = steps_for(spinup, dt)
    if spin_steps:
        warm = dataclasses.replace(cfg, dt=dt, t_end=spin_steps * dt,
                                   output_every=max(spin_steps, 1),
                                   snapshot_every=0)
        omega = simulate(warm, omega, noise).final
    n_steps, dt = interval_steps(interval, dt)
    path = record_path(cfg, omega, n_steps, noise, start_step=spin_steps,
                       dt=dt)
    matrix = assemble_matrix(path, cfg.forcing, galerkin_cutoff,
                             quad_substeps)
    return cone_min(matrix, low_cutoff, alpha), norms(omega).l2


@dataclass
class SurveyResult:
    """Cone statistics over independent samples.

    Attributes:
        samples: Frame with columns ``sample, cone_min, norm_w0``.
        stokes: The same survey with the transport term switched off, or
            None when not requested.
        quantiles: Quantiles of cone_min by level.
        tail: The lower-tail fit of the empirical CDF.
    """
    samples: pd.DataFrame
    stokes: Optional[pd.DataFrame]
    quantiles: pd.Series
    tail: TailFit

    @property
    def median(self) -> float:
        return float(np.median(self.samples['cone_min']))


def _survey_frame(results) -> pd.DataFrame:
    return pd.DataFrame({
        'sample': np.arange(len(results)),
        'cone_min': [value for value, _ in results],
        'norm_w0': [size for _, size in results],
    })


def nondegeneracy_survey(cfg: SimConfig,
                         galerkin_cutoff: float,
                         low_cutoff: float,
                         alpha: float,
                         samples: int,
                         interval: float = 1.0,
                         spinup: float = 0.0,
                         initial_radius: float = DEFAULT_INITIAL_RADIUS,
                         quad_substeps: Optional[int] = None,
                         stokes_control: bool = True,
                         num_workers: int = 1,
                         verbose: bool = False) -> SurveyResult:
    """Monte Carlo distribution of cone_min over noise and initial data.

    Sample i runs on noise trajectory i. It starts from
    :py:func:`survey_initial_state` with the given ``initial_radius`` (0
    starts from rest), is spun up for ``spinup`` time units, and the
    Malliavin matrix is assembled on the following ``interval``. The
    recorded ``norm_w0`` is ‖ω‖ at the start of that interval.
    """
    if cfg.forcing is None:
        raise ValueError("The survey needs a forced configuration.")
    if samples < 1:
        raise ValueError("samples must be at least 1, not {}".format(samples))
    if initial_radius < 0:
        raise ValueError("initial_radius must be non-negative, not {}"
                         .format(initial_radius))
    args = [(cfg, galerkin_cutoff, low_cutoff, alpha, interval, spinup,
             initial_radius, quad_substeps, i) for i in range(samples)]
    frame = _survey_frame(
        stochvort.execute_in_pool(_survey_sample, args, num_workers))
    if verbose:
        print(f"Survey of {samples} samples: median cone_min "
              f"{np.median(frame['cone_min']):.4g}")

    stokes = None
    if stokes_control:
        linear = dataclasses.replace(cfg, nonlinear=False)
        args = [(linear,) + a[1:] for a in args]
        stokes = _survey_frame(
            stochvort.execute_in_pool(_survey_sample, args, num_workers))

    quantiles = frame['cone_min'].quantile(list(SURVEY_QUANTILES))
    return SurveyResult(samples=frame, stokes=stokes, quantiles=quantiles,
                        tail=tail_fit(frame['cone_min'].values))


@dataclass
class ControlRun:
    """Records of the alternating low-mode control.

    Attributes:
        records: One row per integer time with columns ``n, rho_norm,
            rho_low_norm, control_energy, identity_residual`` and the
            high-mode ``truncation_residual``. The control columns refer to
            the interval ending at n and are NaN where no control acted.
        lam: The Tikhonov shift λ.
        galerkin_cutoff: M_g.
        low_cutoff: The cutoff of π_ℓ in the reported low-mode norm.
        interval: Length of one interval.
    """
    records: pd.DataFrame
    lam: float
    galerkin_cutoff: float
    low_cutoff: float
    interval: float

    def save_csv(self, path: str):
        self.records[CONTROL_COLUMNS].to_csv(path, index=False,
                                             float_format='%.17g')

    def ratios(self) -> pd.Series:
        """‖ρ(n)‖/‖ρ(0)‖ by n."""
        rho = self.records.set_index('n')['rho_norm']
        return rho / rho.iloc[0]


def control_run(cfg: SimConfig,
                xi0: TangentField,
                lam: float,
                galerkin_cutoff: float,
                low_cutoff: float,
                n_intervals: int,
                interval: float = 1.0,
                quad_substeps: Optional[int] = None,
                omega0: Optional[VorticityState] = None,
                noise: Optional[NoiseStream] = None,
                verbose: bool = False) -> ControlRun:
    """Drive ρ = ξ - ζ towards zero with controls on even intervals.

    On an even interval [n, n+1] with propagator J and Galerkin matrix M,
    the control is v_j = Q̄*J*_{s_j→n+1}y with y = (M + λ)⁻¹π_g Jρ(n),
    applied as kicks w_j Q̄v_j at the quadrature nodes. Then
    π_g ρ(n+1) = λ(M + λ)⁻¹π_g Jρ(n) exactly, and the recorded identity
    residual measures how well that holds numerically. On odd intervals ρ
    follows the free tangent flow.

    Args:
        cfg: The configuration; must be forced.
        xi0: The initial perturbation ξ(0) = ρ(0).
        lam: The Tikhonov shift λ > 0.
        galerkin_cutoff: M_g.
        low_cutoff: Cutoff of the projection π_ℓ used in the records.
        n_intervals: Number of unit intervals.
        interval: Interval length.
        quad_substeps: Quadrature panels per interval.
        omega0: Base state at time 0 (default rest).
        noise: The noise stream (default trajectory 0 of ``cfg.seed``).
        verbose: Print one line per interval.
    """
    if not lam > 0:
        raise ValueError("lam must be positive, not {}".format(lam))
    if cfg.forcing is None:
        raise ValueError("Control needs a forced configuration.")
    grid = cfg.grid
    if xi0.norm() == 0:
        raise ValueError("xi0 must be nonzero.")
    if low_cutoff > galerkin_cutoff:
        raise ValueError("low_cutoff {} exceeds the Galerkin cutoff {}"
                         .format(low_cutoff, galerkin_cutoff))
    if omega0 is None:
        omega0 = VorticityState.zeros(grid)
    if noise is None:
        noise = NoiseStream(cfg.seed)
    steps, dt = interval_steps(interval, resolve_time_step(cfg, omega0))
    basis = galerkin_basis(grid, galerkin_cutoff)
    low = low_mode_mask(grid, float(low_cutoff))

    def row(n, rho, energy, identity, truncation):
        return {'n': n, 'rho_norm': l2_norm(grid, rho),
                'rho_low_norm': l2_norm(grid, np.where(low, rho, 0)),
                'control_energy': energy, 'identity_residual': identity,
                'truncation_residual': truncation}

    rho = xi0.coeffs
    rows = [row(0, rho, np.nan, np.nan, np.nan)]
    omega = omega0
    for n in range(n_intervals):
        path = record_path(cfg, omega, steps, noise, start_step=n * steps,
                           dt=dt)
        omega = path.final
        j_rho = propagate_coeffs(path, rho, 0, steps)
        if n % 2 == 1:
            rho = j_rho
            rows.append(row(n + 1, rho, np.nan, np.nan, np.nan))
        else:
            matrix = assemble_matrix(path, cfg.forcing, galerkin_cutoff,
                                     quad_substeps)
            nodes, weights = quadrature_nodes(steps, matrix.quad_substeps,
                                              dt)
            b = galerkin_coords(j_rho, basis)
            shifted = matrix.matrix + lam * np.eye(basis.size)
            y = scipy.linalg.solve(shifted, b, assume_a='pos')
            _, adjoints = adjoint_sweep(path, from_galerkin(y, basis), 0,
                                        steps, record=nodes.tolist())
            controls = {}
            energy = 0.0
            for node, w in zip(nodes.tolist(), weights):
                v = apply_q_adjoint(cfg.forcing, grid, adjoints[node])
                controls[node] = w * v
                energy += w * float(np.dot(v, v))
            zeta = propagate_coeffs(path, np.zeros(grid.shape, np.complex128),
                                    0, steps, controls)
            rho = j_rho - zeta
            target = lam * scipy.linalg.solve(shifted, b, assume_a='pos')
            identity = float(np.linalg.norm(galerkin_coords(rho, basis)
                                            - target))
            high = zeta - from_galerkin(galerkin_coords(zeta, basis), basis)
            rows.append(row(n + 1, rho, energy, identity,
                            l2_norm(grid, high)))
        if verbose:
            print(f"interval {n + 1}/{n_intervals}: |rho| = "
                  f"{rows[-1]['rho_norm']:.4g}")

    return ControlRun(records=pd.DataFrame(rows), lam=float(lam),
                      galerkin_cutoff=float(galerkin_cutoff),
                      low_cutoff=float(low_cutoff), interval=float(interval))


def _control_sample(cfg: SimConfig, lam: float, galerkin_cutoff: float,
                    low_cutoff: float, n_intervals: int, interval: float,
                    quad_substeps: Optional[int], seed: int):
    cfg = dataclasses.replace(cfg, seed=seed)
    rng = np.random.default_rng([seed, 7])
    low = galerkin_basis(cfg.grid, low_cutoff)
    xi = TangentField(cfg.grid, from_galerkin(rng.standard_normal(low.size),
                                              low))
    run = control_run(cfg, xi, lam, galerkin_cutoff, low_cutoff, n_intervals,
                      interval, quad_substeps)
    return run.ratios().values


class ControlScan(NamedTuple):
    """Median decay of ‖ρ(2m)‖/‖ρ(0)‖ over seeds for each λ.

    ``ratios`` has columns ``lam, m, median_ratio``; ``rates`` has
    ``lam, rate, rate_stderr`` with the geometric rate per pair of
    intervals from a log-linear fit.
    """
    ratios: pd.DataFrame
    rates: pd.DataFrame


def control_scan(cfg: SimConfig,
                 lambdas: Sequence[float],
                 seeds: Sequence[int],
                 galerkin_cutoff: float,
                 low_cutoff: float,
                 n_intervals: int,
                 interval: float = 1.0,
                 quad_substeps: Optional[int] = None,
                 num_workers: int = 1) -> ControlScan:
    """Run :py:func:`control_run` over a λ ladder and several seeds.

    Each seed starts from rest with ξ(0) a random combination of the low
    Galerkin directions.
    """
    if n_intervals < 4:
        raise ValueError("Need at least 4 intervals to fit a rate, not {}"
                         .format(n_intervals))
    args = [(cfg, lam, galerkin_cutoff, low_cutoff, n_intervals, interval,
             quad_substeps, seed) for lam in lambdas for seed in seeds]
    results = stochvort.execute_in_pool(_control_sample, args, num_workers)

    ratio_rows, rate_rows = [], []
    for i, lam in enumerate(lambdas):
        block = np.array(results[i * len(seeds):(i + 1) * len(seeds)])
        median = np.median(block, axis=0)
        ms = np.arange(1, n_intervals // 2 + 1)
        for m in ms:
            ratio_rows.append({'lam': lam, 'm': int(m),
                               'median_ratio': float(median[2 * m])})
        fit = linregress(ms, np.log(median[2 * ms]))
        rate_rows.append({'lam': lam, 'rate': float(np.exp(fit.slope)),
                          'rate_stderr': float(np.exp(fit.slope)
                                               * fit.stderr)})
    return ControlScan(ratios=pd.DataFrame(ratio_rows),
                       rates=pd.DataFrame(rate_rows))
