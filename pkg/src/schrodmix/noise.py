"""Degenerate Haar-wavelet noise living on finitely many spatial modes.

One unit time interval carries, per active mode k, a complex process

    eta_k(t) = (xi_1 + i xi_2) h_0(t)
             + sum_{j=1..J} sum_{l<2^j} c j^{-q} (xi_1^{jl} + i xi_2^{jl}) h_{jl}(t)

with sup-normalized Haar functions h (h_0 = 1 on [0,1); h_{jl} is +1 on the
left half of [l 2^-j, (l+1) 2^-j) and -1 on the right half) and i.i.d. xi
drawn from a compactly supported Lipschitz density on [-1, 1].  The physical
forcing field is sum_k b_k eta_k(t) e^{ikx}.  Paths are piecewise constant on
the 2^(J+1) dyadic cells of [0,1), which is how they are stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .spectral import FourierField, Grid, ROOT_2PI, ValidationError

_PPF_BISECTIONS = 48


def haar_eval(j: int, l: int, t):
    """Sup-normalized Haar function; (j, l) = (0, 0) is the constant one."""
    _check_haar_index(j, l)
    t = np.asarray(t, dtype=float)
    if j == 0:
        return np.where((t >= 0.0) & (t < 1.0), 1.0, 0.0)
    width = 2.0**-j
    left = l * width
    mid = left + width / 2.0
    right = left + width
    out = np.zeros_like(t)
    out[(t >= left) & (t < mid)] = 1.0
    out[(t >= mid) & (t < right)] = -1.0
    return out


def _check_haar_index(j: int, l: int):
    if j < 0 or l < 0:
        raise ValidationError("Haar indices must be nonnegative")
    if j == 0 and l != 0:
        raise ValidationError("level 0 has the single constant function")
    if j >= 1 and l >= 2**j:
        raise ValidationError("level %d admits l < %d, got %d" % (j, 2**j, l))


def _haar_cell_signs(j: int, l: int, resolution: int) -> np.ndarray:
    """Values (+1/-1/0) on the 2^resolution dyadic cells, exact integers."""
    n = 2**resolution
    signs = np.zeros(n, dtype=np.int64)
    if j == 0:
        signs[:] = 1
        return signs
    per = n // 2**j  # cells per support; resolution must exceed level
    start = l * per
    signs[start : start + per // 2] = 1
    signs[start + per // 2 : start + per] = -1
    return signs


def haar_inner(j: int, l: int, jp: int, lp: int, normalized: bool = False) -> Fraction:
    """Exact L2(0,1) inner product of two Haar functions (dyadic arithmetic).

    With normalized=True both factors are scaled to unit L2 norm first; the
    result is still exact because off-diagonal pairs vanish identically and
    the diagonal scaling 2^j is an integer.
    """
    _check_haar_index(j, l)
    _check_haar_index(jp, lp)
    res = max(j, jp) + 1
    s1 = _haar_cell_signs(j, l, res)
    s2 = _haar_cell_signs(jp, lp, res)
    raw = Fraction(int(np.sum(s1 * s2)), 2**res)
    if not normalized:
        return raw
    if raw == 0:
        return Fraction(0)
    # nonzero only on the diagonal, where the scaling is 2^((j+jp)/2) = 2^j
    return raw * Fraction(2 ** ((j + jp) // 2))


@dataclass(frozen=True)
class RhoSpec:
    """Sampling density for the Haar coefficients: raised cosine on [-1, 1].

    pdf(x) = (1 + cos(pi x)) / 2, which is Lipschitz, supported on [-1, 1]
    and positive at the origin.  The CDF is closed form; sampling inverts it
    with a fixed-depth bisection so draws are deterministic functions of the
    underlying uniforms.
    """

    kind: str = "raised_cosine"

    def __post_init__(self):
        if self.kind != "raised_cosine":
            raise ValidationError("unknown density kind %r" % (self.kind,))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, 0.5 * (1.0 + np.cos(math.pi * x)), 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        return 0.5 * (x + 1.0) + np.sin(math.pi * x) / (2.0 * math.pi)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0.0) | (u > 1.0)):
            raise ValidationError("ppf argument outside [0, 1]")
        lo = np.full(u.shape, -1.0)
        hi = np.full(u.shape, 1.0)
        for _ in range(_PPF_BISECTIONS):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return self.ppf(rng.random(shape))

    @property
    def variance(self) -> float:
        return 1.0 / 3.0 - 2.0 / math.pi**2


@dataclass(frozen=True)
class NoiseSpec:
    """Static description of the forcing law: active modes, amplitudes, decay."""

    modes: tuple = (0, 1)
    amplitudes: tuple = (0.15, 0.15)
    haar_c: float = 0.5
    haar_q: float = 2.0
    level_max: int = 6
    rho: RhoSpec = field(default_factory=RhoSpec)

    def __post_init__(self):
        if len(self.modes) == 0:
            raise ValidationError("at least one active mode is required")
        if len(set(self.modes)) != len(self.modes):
            raise ValidationError("duplicate noise modes")
        if len(self.amplitudes) != len(self.modes):
            raise ValidationError("one amplitude per mode")
        if any(b < 0 for b in self.amplitudes):
            raise ValidationError("amplitudes must be >= 0")
        if self.haar_q <= 1.0:
            raise ValidationError("level decay exponent must satisfy q > 1")
        if self.haar_c < 0:
            raise ValidationError("haar_c must be >= 0")
        if not (1 <= self.level_max <= 16):
            raise ValidationError("level_max must sit in 1..16")
        object.__setattr__(self, "modes", tuple(int(k) for k in self.modes))
        object.__setattr__(self, "amplitudes", tuple(float(b) for b in self.amplitudes))

    @property
    def n_cells(self) -> int:
        return 2 ** (self.level_max + 1)

    @property
    def level_weights(self) -> np.ndarray:
        j = np.arange(1, self.level_max + 1, dtype=float)
        return self.haar_c * j**-self.haar_q

    @property
    def n_xi_pairs(self) -> int:
        return 1 + (2 ** (self.level_max + 1) - 2)

    def sup_bound(self, mode_index: int) -> float:
        """max_t |b_k eta_k(t)| <= b_k sqrt(2) (1 + sum_j c_j)."""
        return self.amplitudes[mode_index] * math.sqrt(2.0) * (1.0 + float(self.level_weights.sum()))

    def amplitude_of(self, k: int) -> float:
        return self.amplitudes[self.modes.index(k)]


@dataclass(frozen=True)
class NoisePath:
    """One sampled unit-interval realization: per-mode values on dyadic cells.

    cells[m, c] holds eta_k(t) (without the amplitude b_k) for the m-th active
    mode on cell [c 2^-(J+1), (c+1) 2^-(J+1)).  seed_record, when present, is
    the integer key the path was drawn from.
    """

    spec: NoiseSpec
    cells: np.ndarray = field(repr=False)
    seed_record: tuple | None = None
    note: str = ""

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=np.complex128)
        if c.shape != (len(self.spec.modes), self.spec.n_cells):
            raise ValidationError(
                "cells shape %r does not match spec (%d modes, %d cells)"
                % (c.shape, len(self.spec.modes), self.spec.n_cells)
            )
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "cells", c)

    def cell_of(self, t: float) -> int:
        if not (0.0 <= t < 1.0):
            raise ValidationError("path time must sit in [0, 1), got %r" % (t,))
        return int(t * self.spec.n_cells)

    def value_at(self, k: int, t: float) -> complex:
        m = self.spec.modes.index(k)
        return complex(self.cells[m, self.cell_of(t)])

    def sup_norm(self, mode_index: int) -> float:
        return float(np.abs(self.cells[mode_index]).max()) * self.spec.amplitudes[mode_index]

    def shifted(self, delta_cells: np.ndarray, note: str = "shifted") -> "NoisePath":
        delta = np.asarray(delta_cells, dtype=np.complex128)
        if delta.shape != self.cells.shape:
            raise ValidationError("shift shape mismatch")
        return NoisePath(self.spec, self.cells - delta, self.seed_record, note)


def _xi_matrix(spec: NoiseSpec, uniforms: np.ndarray) -> np.ndarray:
    """Map uniform draws (n_pairs, 2) for one mode to complex cell values."""
    xi = uniforms  # already transformed through rho.ppf by the caller
    n_cells = spec.n_cells
    vals = np.full(n_cells, complex(xi[0, 0], xi[0, 1]), dtype=np.complex128)
    pos = 1
    weights = spec.level_weights
    for j in range(1, spec.level_max + 1):
        cnt = 2**j
        block = weights[j - 1] * (xi[pos : pos + cnt, 0] + 1j * xi[pos : pos + cnt, 1])
        pos += cnt
        per = n_cells // cnt
        level_vals = np.repeat(block, per)
        signs = np.tile(np.repeat(np.array([1.0, -1.0]), per // 2), cnt)
        vals = vals + level_vals * signs
    return vals


def _mode_uniforms(spec: NoiseSpec, seed_record, mode_index: int) -> np.ndarray:
    entropy = tuple(int(v) for v in seed_record) + (int(mode_index),)
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    return rng.random((spec.n_xi_pairs, 2))


def sample_noise_path(spec: NoiseSpec, seed_record) -> NoisePath:
    """Draw one path.  seed_record is a tuple of nonnegative ints; the stream
    for mode index m is derived from seed_record + (m,), so identical records
    always reproduce identical paths regardless of how many are drawn."""
    return sample_noise_paths(spec, [seed_record])[0]


def sample_noise_paths(spec: NoiseSpec, seed_records) -> list:
    """Batch variant of sample_noise_path with one shared inverse-CDF pass."""
    records = [tuple(int(v) for v in r) for r in seed_records]
    n_modes = len(spec.modes)
    if not records:
        return []
    stack = np.empty((len(records), n_modes, spec.n_xi_pairs, 2), dtype=float)
    for i, rec in enumerate(records):
        for m in range(n_modes):
            stack[i, m] = _mode_uniforms(spec, rec, m)
    xi = spec.rho.ppf(stack)
    paths = []
    for i, rec in enumerate(records):
        cells = np.stack([_xi_matrix(spec, xi[i, m]) for m in range(n_modes)])
        paths.append(NoisePath(spec, cells, rec))
    return paths


def path_field_coeffs(path: NoisePath, cell: int, grid: Grid) -> np.ndarray:
    """Spectral coefficients of the physical forcing field on one cell.

    The field is sum_k b_k eta_k e^{ikx}, so the coefficient on the
    normalized basis e_k is b_k eta_k sqrt(2pi).
    """
    out = np.zeros(grid.n_coeff, dtype=np.complex128)
    for m, k in enumerate(path.spec.modes):
        if abs(k) > grid.k_max:
            raise ValidationError("noise mode %d outside grid band" % k)
        out[k + grid.k_max] = path.spec.amplitudes[m] * path.cells[m, cell] * ROOT_2PI
    return out


def noise_field_at(path: NoisePath, t: float, grid: Grid) -> FourierField:
    return FourierField(grid, path_field_coeffs(path, path.cell_of(t), grid))
