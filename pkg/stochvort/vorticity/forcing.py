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

"""Finite-mode additive forcing Qβ(t) = Σ_k γ_k β_k(t) e_k.

Each forced lattice index m carries one real direction: e_m = sin(k·x) when
m lies in the half lattice Z⁺ and e_m = cos(k·x) when -m does. Forcing sets
are closed under reflection, so every cosine is paired with the sine of the
same wavevector.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form

import stochvort
from stochvort.vorticity.grid_spectral import GridSpec, from_sincos

Mode = Tuple[int, int, float]


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class ForcingSpec:
    """The forced modes and their amplitudes.

    Use :py:func:`validate_forcing` to build one from user input; the
    constructor only enforces structural invariants and admits zero
    amplitudes for unforced control experiments.

    Attributes:
        modes: (m₁, m₂, γ) triples of integer lattice indices and amplitudes.
            The position of a mode in this tuple is its index in every
            vector of Brownian increments.
        scale: Torus scale factor N; the wavevector of index m is m/N.
    """
    modes: Tuple[Mode, ...]
    scale: float = 1.0

    def __post_init__(self):
        modes = tuple((int(m1), int(m2), float(g)) for m1, m2, g in self.modes)
        object.__setattr__(self, 'modes', modes)
        object.__setattr__(self, 'scale', float(self.scale))
        problems = _structural_problems(modes)
        if problems:
            raise ValueError(problems[0])
        if any(g < 0 for _, _, g in modes):
            raise ValueError("Forcing amplitudes must be non-negative.")

    @property
    def directions(self) -> int:
        """D, the number of forced real directions."""
        return len(self.modes)

    @property
    def indices(self) -> np.ndarray:
        return np.array([(m1, m2) for m1, m2, _ in self.modes], dtype=int)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([g for _, _, g in self.modes], dtype=float)

    @property
    def wavenumbers(self) -> np.ndarray:
        """|k| for each forced mode."""
        return np.hypot(*self.indices.T) / self.scale

    @property
    def area(self) -> float:
        return (2 * np.pi * self.scale) ** 2

    @property
    def epsilon(self) -> float:
        """Enstrophy injection rate, the growth rate of E‖Qβ(t)‖²."""
        return 0.5 * self.area * float(np.sum(self.amplitudes ** 2))

    @property
    def epsilon_prime(self) -> float:
        """Energy injection rate ½·area·Σ γ²/|k|² for ‖u‖²."""
        return 0.5 * self.area * float(
            np.sum(self.amplitudes ** 2 / self.wavenumbers ** 2))

    @property
    def kappa_f(self) -> float:
        """Characteristic forcing wavenumber, the largest forced |k|."""
        return float(np.max(self.wavenumbers))

    @property
    def kappa_f_mean(self) -> float:
        """Enstrophy-weighted mean forced |k|."""
        weights = self.amplitudes ** 2
        if np.sum(weights) == 0:
            return float(np.mean(self.wavenumbers))
        return float(np.sum(weights * self.wavenumbers) / np.sum(weights))

    def scaled(self, factor: float) -> 'ForcingSpec':
        """The same modes with every amplitude multiplied by ``factor``."""
        if factor < 0:
            raise ValueError("factor must be non-negative, not {}"
                             .format(factor))
        return ForcingSpec(modes=tuple((m1, m2, g * factor)
                                       for m1, m2, g in self.modes),
                           scale=self.scale)


def _structural_problems(modes: Sequence[Mode]) -> List[str]:
    problems = []
    if len(modes) == 0:
        problems.append("Forcing needs at least one mode.")
    seen = {}
    for m1, m2, g in modes:
        if (m1, m2) == (0, 0):
            problems.append("zero mode (0, 0) cannot be forced.")
        if (m1, m2) in seen:
            problems.append("duplicate mode ({}, {}).".format(m1, m2))
        seen[(m1, m2)] = g
    for (m1, m2), g in seen.items():
        partner = seen.get((-m1, -m2))
        if partner is None:
            problems.append("missing reflection partner ({}, {}) for "
                            "mode ({}, {}).".format(-m1, -m2, m1, m2))
        elif partner != g:
            problems.append("reflection partner of ({}, {}) has amplitude "
                            "{} != {}.".format(m1, m2, partner, g))
    return problems


def validate_forcing(raw_modes: Iterable[Sequence[float]],
                     scale: float = 1.0,
                     auto_reflect: bool = False) -> ForcingSpec:
    """Check user-supplied [kx, ky, gamma] triples and build a ForcingSpec.

    Args:
        raw_modes: Triples of integer lattice indices and amplitude.
        scale: The torus scale factor.
        auto_reflect: Append the reflection partner (-kx, -ky, gamma) of any
            mode whose partner is absent instead of raising.

    Raises:
        ValueError: On an empty list, a malformed triple, a duplicate mode,
            the zero mode, a missing reflection partner or a nonpositive
            amplitude.
    """
    modes = []
    for raw in raw_modes:
        if len(raw) != 3:
            raise ValueError("Forcing modes are [kx, ky, gamma] triples, "
                             "not {}".format(list(raw)))
        m1, m2, g = raw
        if int(m1) != m1 or int(m2) != m2:
            raise ValueError("Forced wavenumbers must be integer lattice "
                             "indices, not ({}, {})".format(m1, m2))
        if not g > 0:
            raise ValueError("nonpositive amplitude {} for mode ({}, {})"
                             .format(g, int(m1), int(m2)))
        modes.append((int(m1), int(m2), float(g)))

    if auto_reflect:
        present = {(m1, m2) for m1, m2, _ in modes}
        for m1, m2, g in list(modes):
            if (-m1, -m2) not in present:
                modes.append((-m1, -m2, g))
                present.add((-m1, -m2))

    problems = _structural_problems(modes)
    if problems:
        raise ValueError(problems[0])
    return ForcingSpec(modes=tuple(modes), scale=scale)


@dataclass(frozen=True)
class HormanderReport:
    """The sufficient conditions for the bracket condition on a forcing set.

    See Also:
        :py:func:`hormander_check`

    Attributes:
        cond_a: The set is invariant under k -> -k.
        cond_b: The set contains two wavevectors of unequal length.
        cond_c: Integer combinations of the set span ℤ².
        unequal_pair: Witness for cond_b, a shortest and a longest mode.
        lattice_normal_form: Column-style Hermite normal form of the 2×|K|
            matrix whose columns are the modes. It is the 2×2 identity
            exactly when cond_c holds.
        lattice_index: Index of the generated sublattice in ℤ², the gcd of
            all 2×2 minors (0 when the modes are collinear). It always
            equals the determinant of the normal form.
        missing_partners: Modes whose reflection is absent.
    """
    cond_a: bool
    cond_b: bool
    cond_c: bool
    unequal_pair: Optional[Tuple[Tuple[int, int], Tuple[int, int]]]
    lattice_normal_form: Tuple[Tuple[int, ...], ...]
    lattice_index: int
    missing_partners: Tuple[Tuple[int, int], ...] = ()

    @property
    def passed(self) -> bool:
        return self.cond_a and self.cond_b and self.cond_c

    def report_lines(self) -> List[str]:
        flag = {True: 'pass', False: 'FAIL'}
        lines = [
            f"(a) reflection invariance: {flag[self.cond_a]}",
            f"(b) two unequal lengths:   {flag[self.cond_b]}",
            f"(c) spans Z^2:             {flag[self.cond_c]}",
        ]
        if self.missing_partners:
            lines.append(f"    missing partners of {list(self.missing_partners)}")
        if self.unequal_pair is not None:
            lines.append(f"    unequal pair {self.unequal_pair}")
        lines.append(f"    lattice index {self.lattice_index}, normal form "
                     f"{[list(row) for row in self.lattice_normal_form]}")
        lines.append(f"overall: {flag[self.passed]}")
        return lines


def _as_index_set(modes) -> List[Tuple[int, int]]:
    if isinstance(modes, ForcingSpec):
        modes = modes.modes
    out = set()
    for mode in modes:
        m1, m2 = mode[0], mode[1]
        if int(m1) != m1 or int(m2) != m2:
            raise ValueError("Modes must be integer lattice indices, not "
                             "({}, {})".format(m1, m2))
        if (m1, m2) == (0, 0):
            raise ValueError("zero mode (0, 0) is not a valid forcing mode.")
        out.add((int(m1), int(m2)))
    return sorted(out)


def _normal_form_index(hnf: Matrix) -> int:
    """|det| of the nonzero columns of a normal form, 0 below full rank."""
    columns = [hnf[:, j] for j in range(hnf.cols) if any(hnf[:, j])]
    if len(columns) != 2:
        return 0
    return abs(int(Matrix.hstack(*columns).det()))


def hormander_check(modes: Union[ForcingSpec, Iterable[Sequence[int]]]
                    ) -> HormanderReport:
    """Check reflection invariance, unequal lengths and the lattice span.

    Args:
        modes: A ForcingSpec or an iterable of (m₁, m₂[, γ]) entries. Only
            the set of lattice indices matters.

    Raises:
        ValueError: If the set is empty or contains a non-integer or zero
            mode.
    """
    ks = _as_index_set(modes)
    if not ks:
        raise ValueError("Cannot check an empty forcing set.")
    kset = set(ks)

    missing = tuple(k for k in ks if (-k[0], -k[1]) not in kset)
    cond_a = not missing

    lengths = [k[0] ** 2 + k[1] ** 2 for k in ks]
    shortest = ks[int(np.argmin(lengths))]
    longest = ks[int(np.argmax(lengths))]
    cond_b = min(lengths) != max(lengths)
    unequal_pair = (shortest, longest) if cond_b else None

    index = 0
    for a, b in combinations(ks, 2):
        index = math.gcd(index, a[0] * b[1] - a[1] * b[0])

    hnf = hermite_normal_form(Matrix([[k[0] for k in ks], [k[1] for k in ks]]))
    normal_form = tuple(tuple(int(x) for x in row) for row in hnf.tolist())
    if _normal_form_index(hnf) != index:
        raise ArithmeticError(
            "Lattice index {} from the 2x2 minors disagrees with the normal "
            "form {}".format(index, [list(row) for row in normal_form]))
    cond_c = index == 1

    return HormanderReport(cond_a=cond_a,
                           cond_b=cond_b,
                           cond_c=cond_c,
                           unequal_pair=unequal_pair,
                           lattice_normal_form=normal_form,
                           lattice_index=index,
                           missing_partners=missing)


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based Gaussian stream for one trajectory.

    The generator for a step is keyed by (seed, trajectory, step), so any
    step of any ensemble member can be regenerated independently and in any
    order. Within a step the draws are ordered by mode index.
    """
    seed: int
    trajectory: int = 0

    def generator(self, step: int) -> np.random.Generator:
        key = np.random.SeedSequence([self.seed, self.trajectory, step])
        return np.random.Generator(np.random.Philox(key))

    def normals(self, step: int, count: int) -> np.ndarray:
        return self.generator(step).standard_normal(count)


def _positions(spec: ForcingSpec, grid: GridSpec):
    if spec.scale != grid.scale:
        raise ValueError("Forcing scale {} does not match grid scale {}"
                         .format(spec.scale, grid.scale))
    idx = spec.indices
    if np.any(np.abs(idx) > grid.cutoff):
        raise ValueError("Forced modes must lie within the dealias cutoff "
                         "{} of the grid.".format(grid.cutoff))
    return idx[:, 0] % grid.n, idx[:, 1] % grid.n


def sincos_from_directions(spec: ForcingSpec, grid: GridSpec,
                           values: np.ndarray) -> np.ndarray:
    """Place one real coordinate per forced direction on the lattice.

    ``values`` may carry leading batch axes; its last axis runs over the
    forced directions.
    """
    i1, i2 = _positions(spec, grid)
    values = np.asarray(values, dtype=float)
    real = np.zeros(values.shape[:-1] + grid.shape)
    real[..., i1, i2] = values
    return real


def directions_from_sincos(spec: ForcingSpec, grid: GridSpec,
                           real: np.ndarray) -> np.ndarray:
    """The forced-direction coordinates of a sin/cos coordinate array."""
    i1, i2 = _positions(spec, grid)
    return real[..., i1, i2]


def increment_from_dbeta(spec: ForcingSpec, grid: GridSpec,
                         dbeta: np.ndarray) -> np.ndarray:
    """Lattice coefficients of Σ_k γ_k Δβ_k e_k."""
    values = spec.amplitudes * np.asarray(dbeta, dtype=float)
    return from_sincos(sincos_from_directions(spec, grid, values), grid)


def brownian_increments(spec: ForcingSpec, dt: float, noise: NoiseStream,
                        step: int) -> np.ndarray:
    """Δβ_k ~ Normal(0, dt), one per forced direction, for ``step``."""
    if not dt > 0:
        raise ValueError("dt must be positive, not {}".format(dt))
    return np.sqrt(dt) * noise.normals(step, spec.directions)


def sample_increment(spec: ForcingSpec, grid: GridSpec, dt: float,
                     noise: NoiseStream, step: int) -> np.ndarray:
    """The forcing increment over one step as complex lattice coefficients.

    Deterministic in (noise.seed, noise.trajectory, step).
    """
    return increment_from_dbeta(spec, grid,
                                brownian_increments(spec, dt, noise, step))
