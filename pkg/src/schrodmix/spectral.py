"""Grids, Fourier fields, norms and energy for 2pi-periodic complex fields.

Fields are stored as coefficients in the orthonormal basis
e_k(x) = exp(ikx)/sqrt(2pi), k = -k_max..k_max.  Coefficient arrays are
ordered by increasing k, so index i holds mode k = i - k_max.  Physical
samples live on the uniform grid x_j = 2pi j / n.  The transform helpers
accept arbitrary leading batch axes; the mode axis is always last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROOT_2PI = math.sqrt(2.0 * math.pi)
TWO_PI = 2.0 * math.pi


class ValidationError(ValueError):
    """Raised when a constructor or operation receives inconsistent input."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid paired with a symmetric spectral band."""

    n_points: int = 128
    k_max: int = 42

    def __post_init__(self):
        if self.n_points < 2 or self.n_points % 2 != 0:
            raise ValidationError("n_points must be even and >= 2, got %r" % (self.n_points,))
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1, got %r" % (self.k_max,))
        if self.n_points < 2 * self.k_max + 2:
            raise ValidationError(
                "n_points=%d cannot resolve k_max=%d (need >= %d)"
                % (self.n_points, self.k_max, 2 * self.k_max + 2)
            )

    @property
    def n_coeff(self) -> int:
        return 2 * self.k_max + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def points(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_points) / self.n_points


def synth(coeffs: np.ndarray, n_out: int) -> np.ndarray:
    """Evaluate coefficient arrays (..., 2K+1) on n_out physical points."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    k_max = (coeffs.shape[-1] - 1) // 2
    if n_out < 2 * k_max + 1:
        raise ValidationError("n_out=%d too small for k_max=%d" % (n_out, k_max))
    work = np.zeros(coeffs.shape[:-1] + (n_out,), dtype=np.complex128)
    work[..., : k_max + 1] = coeffs[..., k_max:]
    work[..., n_out - k_max :] = coeffs[..., :k_max]
    return np.fft.ifft(work) * (n_out / ROOT_2PI)


def analyze(values: np.ndarray, k_max: int) -> np.ndarray:
    """Project physical samples (..., n) onto modes |k| <= k_max."""
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[-1]
    if n < 2 * k_max + 1:
        raise ValidationError("%d samples cannot carry k_max=%d" % (n, k_max))
    spec = np.fft.fft(values) * (ROOT_2PI / n)
    return np.concatenate([spec[..., n - k_max :], spec[..., : k_max + 1]], axis=-1)


class FourierField:
    """Immutable band-limited field: a Grid plus one coefficient per mode."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: Grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.n_coeff,):
            raise ValidationError(
                "coefficient shape %r does not match grid (expected (%d,))"
                % (coeffs.shape, grid.n_coeff)
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError("coefficients must be finite")
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("FourierField is immutable")

    def coeff(self, k: int) -> complex:
        if abs(k) > self.grid.k_max:
            raise ValidationError("mode %d outside band |k|<=%d" % (k, self.grid.k_max))
        return complex(self.coeffs[k + self.grid.k_max])

    def _check_same_grid(self, other: "FourierField"):
        if self.grid != other.grid:
            raise ValidationError("fields live on different grids")

    def __add__(self, other):
        self._check_same_grid(other)
        return FourierField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same_grid(other)
        return FourierField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return FourierField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return FourierField(self.grid, -self.coeffs)

    def __repr__(self):
        return "FourierField(k_max=%d, |coeffs|_max=%.3g)" % (
            self.grid.k_max,
            float(np.abs(self.coeffs).max()),
        )


def zero_field(grid: Grid) -> FourierField:
    return FourierField(grid, np.zeros(grid.n_coeff, dtype=np.complex128))


def basis_field(grid: Grid, k: int, amplitude: complex = 1.0) -> FourierField:
    """amplitude * e_k, with e_k the *normalized* exponential."""
    c = np.zeros(grid.n_coeff, dtype=np.complex128)
    if abs(k) > grid.k_max:
        raise ValidationError("mode %d outside band" % k)
    c[k + grid.k_max] = amplitude
    return FourierField(grid, c)


def plane_wave(grid: Grid, k: int, amplitude: complex = 1.0) -> FourierField:
    """Field whose physical values are amplitude * exp(ikx)."""
    return basis_field(grid, k, amplitude * ROOT_2PI)


def to_physical(f: FourierField, n_points: int | None = None) -> np.ndarray:
    n = f.grid.n_points if n_points is None else n_points
    return synth(f.coeffs, n)


def to_spectral(values, grid: Grid) -> FourierField:
    values = np.asarray(values, dtype=np.complex128)
    if values.shape != (grid.n_points,):
        raise ValidationError(
            "sample shape %r does not match grid (expected (%d,))"
            % (values.shape, grid.n_points)
        )
    return FourierField(grid, analyze(values, grid.k_max))


def mode_weights(k_max: int, s: float) -> np.ndarray:
    k = np.arange(-k_max, k_max + 1)
    return (1.0 + k.astype(float) ** 2) ** s


def hs_norm_sq(coeffs: np.ndarray, s: float) -> np.ndarray:
    """Squared H^s norm along the last axis (batched)."""
    k_max = (np.asarray(coeffs).shape[-1] - 1) // 2
    w = mode_weights(k_max, s)
    c = np.asarray(coeffs)
    return np.sum(w * (c.real**2 + c.imag**2), axis=-1)


def sobolev_norm(f: FourierField, s: float) -> float:
    return float(np.sqrt(hs_norm_sq(f.coeffs, s)))


def l2_inner(f: FourierField, g: FourierField) -> complex:
    f._check_same_grid(g)
    return complex(np.sum(f.coeffs * np.conj(g.coeffs)))


def real_inner(f: FourierField, g: FourierField, s: float = 0.0) -> float:
    """Re <f, g>_{H^s}, the real-Hilbert inner product used for Gramians."""
    f._check_same_grid(g)
    w = mode_weights(f.grid.k_max, s)
    return float(np.sum(w * (f.coeffs * np.conj(g.coeffs)).real))


def _five_smooth_even(n: int) -> int:
    """Smallest even integer >= n with no prime factor beyond 5 (FFT friendly)."""
    m = n if n % 2 == 0 else n + 1
    while True:
        r = m
        for p in (2, 3, 5):
            while r % p == 0:
                r //= p
        if r == 1:
            return m
        m += 2


def pad_points(k_max: int, p: int) -> int:
    """Physical resolution that keeps p-fold products of band-K fields alias-free."""
    return _five_smooth_even((p + 1) * k_max + 2)


def energy(f: FourierField, p: int = 3) -> float:
    """(1/2)int |v|^2 + (1/2)int |v_x|^2 + 1/(p+1) int |v|^{p+1}."""
    if p < 3 or p % 2 == 0:
        raise ValidationError("p must be odd and >= 3, got %r" % (p,))
    c = f.coeffs
    k = f.grid.modes.astype(float)
    quad = 0.5 * float(np.sum((1.0 + k**2) * (c.real**2 + c.imag**2)))
    m = pad_points(f.grid.k_max, p)
    v = synth(c, m)
    amp2 = v.real**2 + v.imag**2
    quart = float(np.mean(amp2 ** ((p + 1) // 2))) * TWO_PI / (p + 1)
    return quad + quart


def lp_power_integral(coeffs: np.ndarray, p: int, pad: int) -> np.ndarray:
    """int |u|^{p-1} dx along the last axis, exact for band-limited u (batched)."""
    if p == 3:
        c = np.asarray(coeffs)
        return np.sum(c.real**2 + c.imag**2, axis=-1)
    v = synth(coeffs, pad)
    amp2 = v.real**2 + v.imag**2
    return np.mean(amp2 ** ((p - 1) // 2), axis=-1) * TWO_PI


@dataclass(frozen=True)
class DampingProfile:
    """Smooth nonnegative damping coefficient sampled on a grid.

    Values always come from one of the closed-form constructors below, so the
    profile is C-infinity by construction; raw user samples are not accepted.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValidationError("damping samples must match grid.n_points")
        if np.any(v < 0.0):
            raise ValidationError("damping must be nonnegative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    def describe(self) -> str:
        return "%s%r" % (self.kind, tuple(round(p, 6) for p in self.params))


def zero_damping(grid: Grid) -> DampingProfile:
    return DampingProfile(grid, np.zeros(grid.n_points), "zero", ())


def constant_damping(grid: Grid, value: float) -> DampingProfile:
    if value < 0:
        raise ValidationError("damping constant must be >= 0")
    return DampingProfile(grid, np.full(grid.n_points, float(value)), "constant", (float(value),))


def bump_damping(grid: Grid, amplitude: float, center: float, width: float) -> DampingProfile:
    """C-infinity bump A*exp(-1/(1-s^2)), s = wrapped(x-center)/width, |s| < 1."""
    if amplitude < 0:
        raise ValidationError("bump amplitude must be >= 0")
    if not (0 < width < math.pi):
        raise ValidationError("bump width must sit in (0, pi)")
    x = grid.points
    d = np.mod(x - center + math.pi, TWO_PI) - math.pi
    s = d / width
    vals = np.zeros_like(x)
    inside = np.abs(s) < 1.0
    vals[inside] = amplitude * np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return DampingProfile(grid, vals, "bump", (float(amplitude), float(center), float(width)))
