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

"""Stationary balances, moment bounds, spectra and coupling distances.

Per-area quantities divide the whole-torus integrals by the area A. With
ε the injection rate of ‖ω‖² the stationary identities read

    ν⟨‖∇ω‖²⟩/A + τ⟨‖ω‖²⟩/A = ε/(2A)
    ν⟨‖ω‖²⟩/A + τ⟨‖u‖²⟩/A = ε′/(2A)
"""

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.stats import linregress

from stochvort.vorticity.forcing import NoiseStream
from stochvort.vorticity.grid_spectral import (
    GridSpec, VorticityState, lattice, l2_norm, low_mode_mask, random_state)
from stochvort.vorticity.integrator import (
    SimConfig, Trajectory, draw_dbetas, increment_for, interval_steps,
    resolve_time_step, step)

BURN_IN_RELAXATION_TIMES = 5.0
DEFAULT_BATCHES = 10
MOMENT_ETA_FRACTIONS = (0.25, 0.5, 1.0)
MIN_FIT_SHELLS = 5
COUPLING_COLUMNS = ['t', 'dist', 'dist_low', 'dist_high']


class InsufficientWindowError(ValueError):
    """The averaging window does not extend past the burn-in."""


def default_burn_in(cfg: SimConfig) -> float:
    """Five relaxation times of the slowest linear mode."""
    return BURN_IN_RELAXATION_TIMES / cfg.min_damping


def _as_list(trajectories) -> List[Trajectory]:
    if isinstance(trajectories, Trajectory):
        return [trajectories]
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("Need at least one trajectory.")
    return trajectories


@dataclass(frozen=True)
class BalanceReport:
    """Time and ensemble averaged dissipation against injection.

    All rates are per unit area. The ``*_residual`` fields are relative,
    (total - target)/target, and ``*_ci`` is the 95% half-width of the
    total from batch means, also relative to the target.
    """
    viscous_enstrophy: float
    friction_enstrophy: float
    enstrophy_total: float
    enstrophy_target: float
    enstrophy_residual: float
    enstrophy_ci: float
    viscous_energy: float
    friction_energy: float
    energy_total: float
    energy_target: float
    energy_residual: float
    energy_ci: float
    epsilon: float
    epsilon_prime: float
    burn_in: float
    t_end: float
    members: int
    batches: int

    def passed(self, rtol: float = 0.1) -> bool:
        return (abs(self.enstrophy_residual) <= rtol
                and abs(self.energy_residual) <= rtol)

    def within_ci(self, sigmas: float = 3.0) -> bool:
        """Both balances hold within ``sigmas`` standard errors."""
        scale = sigmas / 1.96
        return (abs(self.enstrophy_residual) <= scale * self.enstrophy_ci
                and abs(self.energy_residual) <= scale * self.energy_ci)

    def summary(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


def _batch_means(values: np.ndarray, batches: int) -> np.ndarray:
    return np.array([chunk.mean() for chunk in
                     np.array_split(values, batches)])


def _ci(samples: np.ndarray) -> float:
    if len(samples) < 2:
        return float('nan')
    return float(1.96 * np.std(samples, ddof=1) / np.sqrt(len(samples)))


def balance_report(trajectories: Union[Trajectory, Sequence[Trajectory]],
                   burn_in: Optional[float] = None,
                   batches: int = DEFAULT_BATCHES,
                   cfg: Optional[SimConfig] = None) -> BalanceReport:
    """Stationary enstrophy and energy balances over a window.

    Records with t ≥ burn_in are averaged uniformly, so the trajectories
    should record at a fixed spacing. Each member's window is cut into
    ``batches`` contiguous batches and the confidence interval is built
    from all member-batch means.

    Args:
        trajectories: One trajectory or an ensemble sharing a config.
        burn_in: Start of the averaging window; defaults to
            :py:func:`default_burn_in`.
        batches: Batches per member.
        cfg: The configuration; defaults to the first trajectory's.

    Raises:
        InsufficientWindowError: If a member has fewer than ``batches``
            records after burn-in.
    """
    trajectories = _as_list(trajectories)
    if cfg is None:
        cfg = trajectories[0].config
    if cfg.forcing is None:
        raise ValueError("Balances need a forced configuration.")
    if burn_in is None:
        burn_in = default_burn_in(cfg)
    if batches < 1:
        raise ValueError("batches must be at least 1, not {}".format(batches))
    area = cfg.grid.area

    ens_samples, en_samples, parts = [], [], []
    t_end = 0.0
    for traj in trajectories:
        obs = traj.observables
        t_end = max(t_end, float(obs['t'].iloc[-1]))
        window = obs[obs['t'] >= burn_in]
        if len(window) < batches:
            raise InsufficientWindowError(
                "Averaging window after burn-in {:.4g} holds {} records, "
                "fewer than the {} batches; the run ends at t = {:.4g}"
                .format(burn_in, len(window), batches,
                        float(obs['t'].iloc[-1])))
        l2_sq = 2 * window['enstrophy'].values
        u_sq = 2 * window['energy'].values
        visc_z = cfg.nu * window['h1_sq'].values / area
        fric_z = cfg.tau * l2_sq / area
        visc_e = cfg.nu * l2_sq / area
        fric_e = cfg.tau * u_sq / area
        parts.append([visc_z.mean(), fric_z.mean(), visc_e.mean(),
                      fric_e.mean()])
        ens_samples.extend(_batch_means(visc_z + fric_z, batches))
        en_samples.extend(_batch_means(visc_e + fric_e, batches))

    visc_z, fric_z, visc_e, fric_e = np.mean(parts, axis=0)
    z_target = cfg.epsilon / (2 * area)
    e_target = cfg.epsilon_prime / (2 * area)
    z_total = visc_z + fric_z
    e_total = visc_e + fric_e
    return BalanceReport(
        viscous_enstrophy=float(visc_z),
        friction_enstrophy=float(fric_z),
        enstrophy_total=float(z_total),
        enstrophy_target=z_target,
        enstrophy_residual=float((z_total - z_target) / z_target),
        enstrophy_ci=_ci(np.array(ens_samples)) / z_target,
        viscous_energy=float(visc_e),
        friction_energy=float(fric_e),
        energy_total=float(e_total),
        energy_target=e_target,
        energy_residual=float((e_total - e_target) / e_target),
        energy_ci=_ci(np.array(en_samples)) / e_target,
        epsilon=cfg.epsilon,
        epsilon_prime=cfg.epsilon_prime,
        burn_in=float(burn_in),
        t_end=t_end,
        members=len(trajectories),
        batches=batches,
    )


class MomentBoundReport(NamedTuple):
    """Per-time moment checks.

    ``frame`` has columns ``t, quantity, eta, mean, stderr, bound, passed``
    where quantity is one of ``l2_sq`` (E‖ω‖²), ``exp_l2_sq``
    (E exp(η‖ω‖²)) and ``exp_dissipation`` (E exp(ην∫‖∇ω‖²)).
    """
    frame: pd.DataFrame
    passed: bool


def _mean_and_stderr(samples: np.ndarray):
    """Column means over members and their standard errors."""
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])


def moment_bound_check(trajectories: Union[Trajectory, Sequence[Trajectory]],
                       cfg: Optional[SimConfig] = None,
                       eta_fractions: Sequence[float] = MOMENT_ETA_FRACTIONS,
                       sigmas: float = 3.0) -> MomentBoundReport:
    """Check the a-priori moment bounds at every recorded time.

    With a = ν/N² + τ the slowest damping rate (ν on the unit torus
    without friction) the checks are

        E‖ω(t)‖² ≤ e^{-2at}‖ω₀‖² + ε/a
        E exp(η‖ω(t)‖²) ≤ 2 exp(η e^{-at}‖ω₀‖²)
        E exp(ην∫₀ᵗ‖∇ω‖²) ≤ 2 exp(ηεt + η‖ω₀‖²)

    for η = (a/ε)·f with f in ``eta_fractions``. Each Monte Carlo mean is
    allowed ``sigmas`` standard errors of slack.

    Raises:
        ValueError: If members do not share initial data and record times.
    """
    trajectories = _as_list(trajectories)
    if cfg is None:
        cfg = trajectories[0].config
    if cfg.forcing is None:
        raise ValueError("Moment bounds need a forced configuration.")
    t = trajectories[0].observables['t'].values
    for traj in trajectories[1:]:
        if not np.array_equal(traj.observables['t'].values, t):
            raise ValueError("Ensemble members record at different times.")
    l2_sq = np.array([2 * traj.observables['enstrophy'].values
                      for traj in trajectories])
    if not np.allclose(l2_sq[:, 0], l2_sq[0, 0], rtol=1e-12, atol=0):
        raise ValueError("Ensemble members do not share the initial state.")
    dissipation = np.array([
        cfg.nu * cumulative_trapezoid(traj.observables['h1_sq'].values, t,
                                      initial=0)
        for traj in trajectories])
    w0 = l2_sq[0, 0]
    a = cfg.min_damping
    eps = cfg.epsilon
    elapsed = t - t[0]

    frames = []

    def add(quantity, eta, samples, bound):
        mean, stderr = _mean_and_stderr(samples)
        frames.append(pd.DataFrame({
            't': t, 'quantity': quantity, 'eta': eta, 'mean': mean,
            'stderr': stderr, 'bound': bound,
            'passed': mean <= bound + sigmas * stderr,
        }))

    add('l2_sq', np.nan, l2_sq, np.exp(-2 * a * elapsed) * w0 + eps / a)
    for fraction in eta_fractions:
        eta = fraction * a / eps
        add('exp_l2_sq', eta, np.exp(eta * l2_sq),
            2 * np.exp(eta * np.exp(-a * elapsed) * w0))
        add('exp_dissipation', eta, np.exp(eta * dissipation),
            2 * np.exp(eta * eps * elapsed + eta * w0))
    frame = pd.concat(frames, ignore_index=True)
    return MomentBoundReport(frame=frame, passed=bool(frame['passed'].all()))


@dataclass(frozen=True)
class SpectrumSeries:
    """Shell-averaged spectra.

    Shell j collects the lattice points with round(|m|) = j and sits at
    κ_j = j/N with width Δκ = 1/N. The normalization makes
    Σ e Δκ the energy per unit area and Σ z Δκ the enstrophy per unit area.

    Attributes:
        kappa: Shell centers, starting at the first nonzero shell.
        e_kappa: Energy spectrum.
        z_kappa: Enstrophy spectrum.
        scale: The torus scale N.
        t_start, t_end: Times of the first and last state averaged.
        samples: Number of states averaged.
    """
    kappa: np.ndarray
    e_kappa: np.ndarray
    z_kappa: np.ndarray
    scale: float = 1.0
    t_start: float = 0.0
    t_end: float = 0.0
    samples: int = 1

    @property
    def dkappa(self) -> float:
        return 1 / self.scale

    def energy_density(self) -> float:
        return float(np.sum(self.e_kappa) * self.dkappa)

    def enstrophy_density(self) -> float:
        return float(np.sum(self.z_kappa) * self.dkappa)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'kappa': self.kappa, 'e_kappa': self.e_kappa,
                             'z_kappa': self.z_kappa})

    def save_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')


def _shell_sums(omega: VorticityState) -> Tuple[np.ndarray, np.ndarray]:
    lat = lattice(omega.grid)
    shells = np.rint(np.hypot(lat.m1, lat.m2)).astype(int).ravel()
    power = 0.5 * np.abs(omega.coeffs.ravel()) ** 2
    e = np.bincount(shells, weights=power * lat.inv_k_sq.ravel())
    z = np.bincount(shells, weights=power)
    return e, z


def energy_spectrum(states: Union[Trajectory, Sequence[VorticityState]],
                    window_start: float = 0.0) -> SpectrumSeries:
    """Average the shell spectra of the given states.

    Args:
        states: States on a common grid, or a trajectory whose snapshots
            are used.
        window_start: States earlier than this are skipped.

    Raises:
        ValueError: If no state falls in the window.
    """
    if isinstance(states, Trajectory):
        states = states.snapshots
    states = [s for s in states if s.time >= window_start]
    if not states:
        raise ValueError("No states at or after t = {}".format(window_start))
    grid = states[0].grid
    e_sum, z_sum = 0.0, 0.0
    for omega in states:
        if omega.grid != grid:
            raise ValueError("States live on different grids.")
        e, z = _shell_sums(omega)
        e_sum = e_sum + e
        z_sum = z_sum + z
    dkappa = 1 / grid.scale
    e_kappa = e_sum[1:] / len(states) / dkappa
    z_kappa = z_sum[1:] / len(states) / dkappa
    kappa = np.arange(1, len(e_sum)) / grid.scale
    return SpectrumSeries(kappa=kappa, e_kappa=e_kappa, z_kappa=z_kappa,
                          scale=grid.scale, t_start=states[0].time,
                          t_end=states[-1].time, samples=len(states))


class SlopeFit(NamedTuple):
    """A log-log fit of e(κ) over [κ_lo, κ_hi].

    ``kappa_nu`` and ``kappa_tau`` are the predicted ends of the direct
    cascade window, ν^{-1/2}ε_A^{1/6} and τ^{3/2}ε′_A^{-1/2}, with ε_A
    and ε′_A the per-area injection rates. They are NaN without a config.
    """
    slope: float
    stderr: float
    intercept: float
    n_shells: int
    kappa_nu: float
    kappa_tau: float


def slope_fit(spectrum: SpectrumSeries, kappa_lo: float, kappa_hi: float,
              cfg: Optional[SimConfig] = None) -> SlopeFit:
    """Least-squares line through log e against log κ.

    Raises:
        ValueError: If fewer than five shells fall in range or any of them
            is not positive.
    """
    if not 0 < kappa_lo < kappa_hi:
        raise ValueError("Need 0 < kappa_lo < kappa_hi, got {} and {}"
                         .format(kappa_lo, kappa_hi))
    keep = (spectrum.kappa >= kappa_lo) & (spectrum.kappa <= kappa_hi)
    n_shells = int(np.sum(keep))
    if n_shells < MIN_FIT_SHELLS:
        raise ValueError("Only {} shells in [{}, {}]; need at least {}"
                         .format(n_shells, kappa_lo, kappa_hi,
                                 MIN_FIT_SHELLS))
    values = spectrum.e_kappa[keep]
    if np.any(values <= 0):
        raise ValueError("Spectrum has non-positive values in [{}, {}]"
                         .format(kappa_lo, kappa_hi))
    fit = linregress(np.log(spectrum.kappa[keep]), np.log(values))

    kappa_nu = kappa_tau = float('nan')
    if cfg is not None and cfg.forcing is not None:
        area = cfg.grid.area
        kappa_nu = cfg.nu ** -0.5 * (cfg.epsilon / (2 * area)) ** (1 / 6)
        kappa_tau = (cfg.tau ** 1.5
                     * (cfg.epsilon_prime / (2 * area)) ** -0.5)
    return SlopeFit(slope=float(fit.slope), stderr=float(fit.stderr),
                    intercept=float(fit.intercept), n_shells=n_shells,
                    kappa_nu=float(kappa_nu), kappa_tau=float(kappa_tau))


def high_mode_perturbation(grid: GridSpec, cutoff: float, amplitude: float,
                           rng) -> VorticityState:
    """A random state of L² norm ``amplitude`` supported on |k| > cutoff."""
    omega = random_state(grid, rng)
    coeffs = np.where(low_mode_mask(grid, float(cutoff)), 0, omega.coeffs)
    size = l2_norm(grid, coeffs)
    if size == 0:
        raise ValueError("No retained modes above cutoff {}".format(cutoff))
    return omega.with_coeffs(coeffs * (amplitude / size))


def coupling_distance(cfg: SimConfig,
                      omega_a: VorticityState,
                      omega_b: VorticityState,
                      T: float,
                      low_cutoff: float = 1.0,
                      noise: Optional[NoiseStream] = None) -> pd.DataFrame:
    """Distance between two copies driven by the same noise.

    Both copies use one fixed step, the smaller of the steps resolved from
    either initial state, and the same Brownian increment at every step.
    Rows are written every ``cfg.output_every`` steps and at the end.

    Returns:
        A frame with columns ``t, dist, dist_low, dist_high``, the L²
        distance and its split at |k| = low_cutoff.
    """
    if omega_a.grid != cfg.grid or omega_b.grid != cfg.grid:
        raise ValueError("Initial states must live on the configured grid.")
    if noise is None:
        noise = NoiseStream(cfg.seed)
    dt = min(resolve_time_step(cfg, omega_a), resolve_time_step(cfg, omega_b))
    n_steps, dt = interval_steps(T, dt)
    low = low_mode_mask(cfg.grid, float(low_cutoff))

    def row(a, b):
        diff = a.coeffs - b.coeffs
        return (a.time, l2_norm(cfg.grid, diff),
                l2_norm(cfg.grid, np.where(low, diff, 0)),
                l2_norm(cfg.grid, np.where(low, 0, diff)))

    a, b = omega_a, omega_b
    rows = [row(a, b)]
    for j in range(n_steps):
        increment = increment_for(cfg, draw_dbetas(cfg, dt, noise, j, 1)[0])
        a = step(a, cfg, increment, dt=dt)
        b = step(b, cfg, increment, dt=dt)
        done = j + 1
        if done % cfg.output_every == 0 or done == n_steps:
            rows.append(row(a, b))
    return pd.DataFrame(rows, columns=COUPLING_COLUMNS)
