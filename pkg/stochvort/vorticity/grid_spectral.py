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

"""Spectral fields on the periodic square [0, 2πN)².

A vorticity field is stored as the full complex n×n array of Fourier
coefficients ω̂ with ω(x) = Σ_k ω̂(k) exp(ik·x). Array axis 0 carries x₁/k₁
and axis 1 carries x₂/k₂; array index i corresponds to the integer lattice
index m = i for i < n/2 and m = i - n otherwise (``numpy.fft.fftfreq``
order). The physical wavenumber is k = m/N.

The L² pairing is ⟨f, g⟩ = area · Re Σ conj(f̂) ĝ, which equals the integral
of f·g over the torus for real fields. With this choice ‖sin x₁‖² = 2π² on
the unit torus.
"""

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import fft as sp_fft

import stochvort
from stochvort.ensemble_utils import FFT_WORKERS

SNAPSHOT_MAGIC = b'VORT'
SNAPSHOT_VERSION = 1
_SNAPSHOT_HEADER = struct.Struct('<4sIIdd')


class SnapshotFormatError(ValueError):
    """A snapshot file is malformed or does not fit the requested grid."""


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class GridSpec:
    """The collocation grid and wavenumber lattice of the torus.

    Attributes:
        n: Points per axis. Even, at least 8.
        scale: Torus scale factor N; the domain is [0, 2πN)² and
            wavenumbers lie in (ℤ/N)².
        dealias_fraction: Fraction of the n/2 resolved modes per axis
            which are retained. Defaults to the 2/3 rule.
    """
    n: int
    scale: float = 1.0
    dealias_fraction: float = 2 / 3

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2 != 0:
            raise ValueError("n must be an even integer >= 8, not {}"
                             .format(self.n))
        object.__setattr__(self, 'n', int(self.n))
        if not self.scale > 0:
            raise ValueError("scale must be positive, not {}"
                             .format(self.scale))
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1], not {}"
                             .format(self.dealias_fraction))
        if self.cutoff < 2:
            raise ValueError("Retained cutoff {} is below 2; increase n or "
                             "dealias_fraction.".format(self.cutoff))

    @property
    def cutoff(self) -> int:
        """Largest retained |m| per axis.

        floor(dealias_fraction · n/2), lowered to floor((n-1)/3) when needed
        so that quadratic products of retained modes never alias back onto
        a retained mode.
        """
        c = int(np.floor(self.dealias_fraction * self.n / 2))
        if 3 * c >= self.n:
            c = (self.n - 1) // 3
        return c

    @property
    def area(self) -> float:
        return (2 * np.pi * self.scale) ** 2

    @property
    def dx(self) -> float:
        return 2 * np.pi * self.scale / self.n

    @property
    def shape(self):
        return self.n, self.n


class Lattice(NamedTuple):
    """Read-only wavenumber tables for a grid."""
    m1: np.ndarray
    m2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k_sq: np.ndarray
    inv_k_sq: np.ndarray
    dealias: np.ndarray
    positive_half: np.ndarray


@lru_cache(maxsize=None)
def lattice(grid: GridSpec) -> Lattice:
    idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    m1, m2 = np.meshgrid(idx, idx, indexing='ij')
    k1 = m1 / grid.scale
    k2 = m2 / grid.scale
    k_sq = k1 ** 2 + k2 ** 2
    inv_k_sq = np.zeros_like(k_sq)
    inv_k_sq[k_sq > 0] = 1.0 / k_sq[k_sq > 0]
    dealias = (np.abs(m1) <= grid.cutoff) & (np.abs(m2) <= grid.cutoff)
    dealias[0, 0] = False
    positive_half = (m2 > 0) | ((m2 == 0) & (m1 > 0))
    tables = Lattice(m1=m1, m2=m2, k1=k1, k2=k2, k_sq=k_sq,
                     inv_k_sq=inv_k_sq, dealias=dealias,
                     positive_half=positive_half)
    for a in tables:
        a.setflags(write=False)
    return tables


def to_physical(coeffs: np.ndarray) -> np.ndarray:
    """Grid values Σ_k ĉ(k) exp(ik·x) on the last two axes."""
    return sp_fft.ifft2(coeffs, axes=(-2, -1), norm='forward',
                        workers=FFT_WORKERS).real


def to_spectral(values: np.ndarray) -> np.ndarray:
    """Fourier coefficients of grid values on the last two axes."""
    return sp_fft.fft2(values, axes=(-2, -1), norm='forward',
                       workers=FFT_WORKERS)


def reflect(coeffs: np.ndarray) -> np.ndarray:
    """The array c(-k) on the last two axes."""
    return np.roll(np.flip(coeffs, axis=(-2, -1)), 1, axis=(-2, -1))


def hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of the real part of the field; exact on Hermitian input."""
    return 0.5 * (coeffs + np.conj(reflect(coeffs)))


def enforce_constraints(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Hermitian symmetry, zero mean and dealiasing, in that order."""
    return np.where(lattice(grid).dealias, hermitian_part(coeffs), 0)


def inner_product(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    return grid.area * float(np.real(np.vdot(a, b)))


def l2_norm(grid: GridSpec, a: np.ndarray) -> float:
    return float(np.sqrt(grid.area * np.sum(np.abs(a) ** 2)))


@dataclass(frozen=True, eq=False)
class VorticityState:
    """A real, mean-zero, dealiased vorticity field.

    Attributes:
        grid: The grid the coefficients live on.
        coeffs: Complex n×n array of Fourier coefficients ω̂.
        time: The time of the field.
    """
    grid: GridSpec
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.shape:
            raise ValueError("Coefficient array of shape {} does not match "
                             "grid shape {}".format(coeffs.shape,
                                                    self.grid.shape))
        object.__setattr__(self, 'coeffs', coeffs)
        object.__setattr__(self, 'time', float(self.time))

    @classmethod
    def zeros(cls, grid: GridSpec, time: float = 0.0) -> 'VorticityState':
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), time)

    @classmethod
    def from_coeffs(cls, grid: GridSpec, coeffs: np.ndarray,
                    time: float = 0.0) -> 'VorticityState':
        """Build a state, projecting the coefficients onto valid states."""
        return cls(grid, enforce_constraints(np.asarray(coeffs), grid), time)

    @classmethod
    def from_physical(cls, grid: GridSpec, values: np.ndarray,
                      time: float = 0.0) -> 'VorticityState':
        return cls.from_coeffs(grid, to_spectral(np.asarray(values)), time)

    def to_physical(self) -> np.ndarray:
        return to_physical(self.coeffs)

    def with_coeffs(self, coeffs: np.ndarray,
                    time: Optional[float] = None) -> 'VorticityState':
        return VorticityState(self.grid, coeffs,
                              self.time if time is None else time)

    def validate(self, rtol: float = 1e-12):
        """Raise ValueError unless the state invariants hold."""
        c = self.coeffs
        scale = max(float(np.max(np.abs(c))), 1e-300)
        if not np.all(np.isfinite(c)):
            raise ValueError("State contains non-finite coefficients.")
        if abs(c[0, 0]) > rtol * scale:
            raise ValueError("State violates the mean-zero invariant: "
                             "ω̂(0) = {}".format(c[0, 0]))
        if np.max(np.abs(c - np.conj(reflect(c)))) > rtol * scale:
            raise ValueError("State is not Hermitian-symmetric.")
        outside = ~lattice(self.grid).dealias
        outside[0, 0] = False
        if np.any(c[outside] != 0):
            raise ValueError("State has modes beyond the dealias cutoff {}."
                             .format(self.grid.cutoff))


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Spectral components û₁, û₂ of a divergence-free velocity."""
    grid: GridSpec
    u1: np.ndarray
    u2: np.ndarray

    def divergence(self) -> np.ndarray:
        lat = lattice(self.grid)
        return 1j * (lat.k1 * self.u1 + lat.k2 * self.u2)

    def to_physical(self):
        return to_physical(self.u1), to_physical(self.u2)

    def max_speed(self) -> float:
        v1, v2 = self.to_physical()
        return float(np.max(np.hypot(v1, v2)))


def _check_mean_zero(omega: VorticityState):
    c00 = abs(omega.coeffs[0, 0])
    if c00 > 1e-12 * max(float(np.max(np.abs(omega.coeffs))), 1e-300):
        raise ValueError("Vorticity must have zero mean, found ω̂(0) = {}"
                         .format(omega.coeffs[0, 0]))


def velocity_coeffs(coeffs: np.ndarray, grid: GridSpec):
    """û = i(k₂, -k₁)|k|⁻² ω̂ on the last two axes."""
    lat = lattice(grid)
    return (1j * lat.k2 * lat.inv_k_sq * coeffs,
            -1j * lat.k1 * lat.inv_k_sq * coeffs)


def biot_savart(omega: VorticityState) -> VelocityField:
    """The velocity u = 𝒜ω with curl u = ω and div u = 0."""
    _check_mean_zero(omega)
    u1, u2 = velocity_coeffs(omega.coeffs, omega.grid)
    return VelocityField(omega.grid, u1, u2)


def transport_fields(coeffs: np.ndarray, grid: GridSpec):
    """Grid values of u₁, u₂, ∂₁ω, ∂₂ω for the coefficients ω̂."""
    lat = lattice(grid)
    u1, u2 = velocity_coeffs(coeffs, grid)
    return (to_physical(u1), to_physical(u2),
            to_physical(1j * lat.k1 * coeffs),
            to_physical(1j * lat.k2 * coeffs))


def nonlinear_coeffs(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Coefficients of -u·∇ω, dealiased and Hermitian."""
    u1, u2, d1, d2 = transport_fields(coeffs, grid)
    tendency = -to_spectral(u1 * d1 + u2 * d2)
    return enforce_constraints(tendency, grid)


def nonlinear(omega: VorticityState) -> VorticityState:
    """The pseudo-spectral transport tendency -u·∇ω.

    The product is formed on the collocation grid and transformed back;
    modes beyond the dealias cutoff are zeroed.
    """
    _check_mean_zero(omega)
    return omega.with_coeffs(nonlinear_coeffs(omega.coeffs, omega.grid))


def to_sincos(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Real coordinates in the basis e_m = sin(k·x), m ∈ Z⁺; cos(k·x), -m ∈ Z⁺.

    Z⁺ is the half lattice {m₂ > 0} ∪ {m₂ = 0, m₁ > 0}. The coordinate of
    e_m is stored at the array position of m.
    """
    pos = lattice(grid).positive_half
    c_neg = reflect(coeffs)
    sines = -2 * np.imag(coeffs)
    cosines = 2 * np.real(c_neg)
    # Position -m ∈ -Z⁺ holds the cosine coordinate, read from ĉ(m) = ĉ(-(-m)).
    cosines = reflect(np.where(pos, cosines, 0))
    return np.where(pos, sines, 0) + cosines


def from_sincos(real: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Complex coefficients from sin/cos coordinates.

    For m ∈ Z⁺ the coefficient is w_m = ½ω_{-m} + (1/2i)ω_m, and
    w_{-m} = conj(w_m).
    """
    pos = lattice(grid).positive_half
    w = np.where(pos, real / 2j + reflect(real) / 2, 0)
    return w + np.conj(reflect(w))


def nonlinear_direct(omega: VorticityState, cutoff: int) -> VorticityState:
    """Convolution form of the transport term over the active modes.

    Evaluates, for every retained k,

        N̂(k) = ½ Σ_{j+ℓ=k} (j₁ℓ₂ - j₂ℓ₁)(1/|ℓ|² - 1/|j|²) w_j w_ℓ

    as an explicit double sum over the modes with |m| ≤ cutoff, where w are
    the complex coordinates built from the sin/cos coordinates of ω. The
    result is converted back through the real coordinates of the Galerkin
    drift. Cost is quadratic in the number of modes, so this is only meant
    as a check of :py:func:`nonlinear` on small supports.

    Args:
        omega: The state; all its active modes must satisfy |m| ≤ cutoff.
        cutoff: Radius of the active set in lattice units. Must not exceed
            the grid's dealias cutoff, beyond which the pseudo-spectral
            product is no longer exact.
    """
    grid = omega.grid
    if cutoff < 1 or cutoff > grid.cutoff:
        raise ValueError("cutoff {} exceeds the dealias-safe bound {} of the "
                         "grid".format(cutoff, grid.cutoff))
    _check_mean_zero(omega)
    lat = lattice(grid)
    active = (lat.m1 ** 2 + lat.m2 ** 2 <= cutoff ** 2) & (lat.k_sq > 0)
    if np.any(omega.coeffs[~active] != 0):
        raise ValueError("State has active modes with |m| > {}".format(cutoff))

    w_all = from_sincos(to_sincos(omega.coeffs, grid), grid)
    where = np.nonzero(active)
    m = np.stack([lat.m1[where], lat.m2[where]], axis=1)
    k = m / grid.scale
    w = w_all[where]
    ksq = np.sum(k ** 2, axis=1)

    cross = np.outer(k[:, 0], k[:, 1]) - np.outer(k[:, 1], k[:, 0])
    factor = (1.0 / ksq)[None, :] - (1.0 / ksq)[:, None]
    terms = 0.5 * cross * factor * np.outer(w, w)

    target = m[:, None, :] + m[None, :, :]
    keep = np.all(np.abs(target) <= grid.cutoff, axis=2)
    out = np.zeros(grid.shape, dtype=np.complex128)
    np.add.at(out, (target[..., 0][keep] % grid.n,
                    target[..., 1][keep] % grid.n), terms[keep])

    drift = to_sincos(out, grid)
    return omega.with_coeffs(enforce_constraints(from_sincos(drift, grid),
                                                 grid))


@lru_cache(maxsize=None)
def low_mode_mask(grid: GridSpec, cutoff: float) -> np.ndarray:
    lat = lattice(grid)
    mask = lat.k_sq <= cutoff ** 2 * (1 + 1e-12)
    mask.setflags(write=False)
    return mask


def project_low(field, cutoff: float):
    """The orthogonal projection π onto modes with |k| ≤ cutoff.

    Accepts any field carrying ``grid`` and ``coeffs`` and a ``with_coeffs``
    constructor (states and tangent fields alike).
    """
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative, not {}".format(cutoff))
    mask = low_mode_mask(field.grid, float(cutoff))
    return field.with_coeffs(np.where(mask, field.coeffs, 0))


class Norms(NamedTuple):
    l2: float
    h1: float
    energy: float


def norms(omega: VorticityState) -> Norms:
    """‖ω‖, ‖∇ω‖ and the kinetic energy ½‖u‖² over the whole torus."""
    grid = omega.grid
    lat = lattice(grid)
    power = np.abs(omega.coeffs) ** 2
    return Norms(
        l2=float(np.sqrt(grid.area * np.sum(power))),
        h1=float(np.sqrt(grid.area * np.sum(lat.k_sq * power))),
        energy=float(0.5 * grid.area * np.sum(lat.inv_k_sq * power)),
    )


def random_state(grid: GridSpec,
                 rng: Union[np.random.RandomState, np.random.Generator],
                 cutoff: Optional[float] = None,
                 slope: float = 0.0,
                 time: float = 0.0) -> VorticityState:
    """A random valid state with |ω̂(k)| ∝ |k|^slope on |k| ≤ cutoff."""
    lat = lattice(grid)
    coeffs = (rng.standard_normal(grid.shape)
              + 1j * rng.standard_normal(grid.shape))
    envelope = np.where(lat.k_sq > 0, lat.k_sq, 1.0) ** (slope / 2)
    coeffs = coeffs * envelope
    if cutoff is not None:
        coeffs = np.where(low_mode_mask(grid, float(cutoff)), coeffs, 0)
    return VorticityState.from_coeffs(grid, coeffs, time)


def write_snapshot(omega: VorticityState, path: str):
    """Write the little-endian snapshot format.

    Layout: magic ``VORT``, u32 version, u32 n, f64 scale, f64 time, then
    n·n (f64 re, f64 im) pairs in row-major order of the coefficient array.
    Row i and column j hold the lattice index (m₁, m₂) with m = i for
    i < n/2 and m = i - n otherwise.
    """
    grid = omega.grid
    header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n,
                                   float(grid.scale), float(omega.time))
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(omega.coeffs, dtype='<c16').tobytes())


def read_snapshot(path: str, grid: Optional[GridSpec] = None
                  ) -> VorticityState:
    """Read a snapshot, optionally insisting on a particular grid."""
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < _SNAPSHOT_HEADER.size:
        raise SnapshotFormatError("Truncated snapshot header in {}"
                                  .format(path))
    magic, version, n, scale, time = _SNAPSHOT_HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("Bad snapshot magic {!r} in {}"
                                  .format(magic, path))
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError("Unsupported snapshot version {} in {}"
                                  .format(version, path))
    body = blob[_SNAPSHOT_HEADER.size:]
    if len(body) != 16 * n * n:
        raise SnapshotFormatError("Truncated snapshot body in {}: expected "
                                  "{} bytes, found {}"
                                  .format(path, 16 * n * n, len(body)))
    if grid is None:
        grid = GridSpec(n=n, scale=scale)
    elif grid.n != n or grid.scale != scale:
        raise SnapshotFormatError(
            "Snapshot shape (n={}, scale={}) does not match the configured "
            "grid (n={}, scale={})".format(n, scale, grid.n, grid.scale))
    coeffs = np.frombuffer(body, dtype='<c16').reshape(n, n)
    state = VorticityState(grid, coeffs.astype(np.complex128), time)
    try:
        state.validate()
    except ValueError as e:
        raise SnapshotFormatError("Invalid snapshot {}: {}".format(path, e))
    return state
