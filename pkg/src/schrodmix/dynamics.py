"""Strang-split pseudospectral integrator for the damped, forced flow

    i u_t + u_xx + i a(x) u = |u|^{p-1} u + f(t, x),   x on the 2pi torus,

with p >= 3 odd.  One step of size dt composes a linear half step, the
nonlinear/forcing substep, and a second linear half step.  The linear half
step is itself split symmetrically: quarter-step spectral phases
exp(-i k^2 dt/4) around the exact pointwise decay exp(-a(x) dt/2).  The
nonlinear substep is evaluated on a zero-padded grid so products of
band-limited factors stay alias-free; without forcing it is the exact
modulus-preserving rotation u -> u exp(-i |u|^{p-1} dt), with forcing a
two-stage explicit midpoint rule.

All state arrays carry the mode axis last and arbitrary batch axes in
front, which is what keeps ensemble runs affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from types import SimpleNamespace

import numpy as np

from .noise import NoisePath
from .spectral import (
    ROOT_2PI,
    DampingProfile,
    FourierField,
    Grid,
    ValidationError,
    lp_power_integral,
    pad_points,
    synth,
)

DEFAULT_DT = 2.0**-7
MAX_DT = 1.0e-2
H1_BLOWUP = 1.0e6
_TIME_TOL = 1.0e-9


class BlowUpError(RuntimeError):
    """Signals that the H1 norm crossed the blow-up guard during a run."""

    def __init__(self, step: int, time: float, norm: float):
        super().__init__(
            "H1 norm %.3e crossed the blow-up guard at step %d (t=%.6f)" % (norm, step, time)
        )
        self.step = step
        self.time = time
        self.h1_norm = norm


@dataclass(frozen=True)
class SolverConfig:
    """Everything the stepper needs besides the state itself."""

    grid: Grid
    damping: DampingProfile
    dt: float = DEFAULT_DT
    p: int = 3
    scheme: str = "strang-split"
    store_stride: int = 1
    blowup_threshold: float = H1_BLOWUP

    def __post_init__(self):
        if self.scheme != "strang-split":
            raise ValidationError("unknown scheme %r" % (self.scheme,))
        if not (0.0 < self.dt <= MAX_DT * (1 + 1e-12)):
            raise ValidationError("dt must sit in (0, %g], got %r" % (MAX_DT, self.dt))
        if self.p < 3 or self.p % 2 == 0:
            raise ValidationError("p must be odd and >= 3")
        if self.store_stride < 1 or int(self.store_stride) != self.store_stride:
            raise ValidationError("store_stride must be a positive integer")
        if self.damping.grid != self.grid:
            raise ValidationError("damping profile lives on a different grid")

    def steps_for(self, horizon: float) -> int:
        n = int(round(horizon / self.dt))
        if n < 1 or abs(n * self.dt - horizon) > _TIME_TOL * max(1.0, horizon):
            raise ValidationError(
                "horizon %r is not an integer multiple of dt=%r" % (horizon, self.dt)
            )
        return n

    @cached_property
    def _tab(self) -> SimpleNamespace:
        grid = self.grid
        k = grid.modes
        n_grid = grid.n_points
        n_pad = pad_points(grid.k_max, self.p)
        return SimpleNamespace(
            n_grid=n_grid,
            n_pad=n_pad,
            idx_grid=np.mod(k, n_grid),
            idx_pad=np.mod(k, n_pad),
            phase_q=np.exp(-1j * k.astype(float) ** 2 * (self.dt / 4.0)),
            decay_half=np.exp(-self.damping.values * (self.dt / 2.0)),
            pad_scale=n_pad / ROOT_2PI,
            unpad_scale=ROOT_2PI / n_pad,
            h1_weights=1.0 + k.astype(float) ** 2,
            x_pad=2.0 * math.pi * np.arange(n_pad) / n_pad,
        )


def _amp_pow(v: np.ndarray, p: int) -> np.ndarray:
    a2 = v.real**2 + v.imag**2
    return a2 if p == 3 else a2 ** ((p - 1) // 2)


def _lin_half(u: np.ndarray, tab) -> np.ndarray:
    """One linear half step (time dt/2): quarter phase, decay, quarter phase."""
    u = u * tab.phase_q
    w = np.zeros(u.shape[:-1] + (tab.n_grid,), dtype=np.complex128)
    w[..., tab.idx_grid] = u
    w = np.fft.fft(np.fft.ifft(w) * tab.decay_half)
    return w[..., tab.idx_grid] * tab.phase_q


def _to_pad_physical(u: np.ndarray, tab) -> np.ndarray:
    w = np.zeros(u.shape[:-1] + (tab.n_pad,), dtype=np.complex128)
    w[..., tab.idx_pad] = u
    return np.fft.ifft(w) * tab.pad_scale


def _from_pad_physical(v: np.ndarray, tab) -> np.ndarray:
    return np.fft.fft(v)[..., tab.idx_pad] * tab.unpad_scale


def _nonlinear_full(u: np.ndarray, tab, dt: float, p: int, drive) -> np.ndarray:
    """Full nonlinear substep on the padded grid; drive is physical or None."""
    v = _to_pad_physical(u, tab)
    if drive is None:
        v = v * np.exp(-1j * dt * _amp_pow(v, p))
    else:
        a1 = -1j * (_amp_pow(v, p) * v + drive)
        vm = v + (0.5 * dt) * a1
        v = v + dt * (-1j) * (_amp_pow(vm, p) * vm + drive)
    return _from_pad_physical(v, tab)


class _SparseDrive:
    """Physical-space forcing built from a few active exponentials per step.

    vals_fn(step) returns the amplitude of exp(i k x) per active mode, either
    shaped (n_modes,) or batched (B, n_modes).
    """

    def __init__(self, mode_ks, tab, vals_fn):
        self.rows = np.exp(1j * np.multiply.outer(np.asarray(mode_ks, float), tab.x_pad))
        self.vals_fn = vals_fn

    def __call__(self, step: int):
        return self.vals_fn(step) @ self.rows


def _path_cell_lookup(cfg: SolverConfig, n_cells: int):
    spu = cfg.steps_for(1.0)
    if spu % n_cells != 0:
        raise ValidationError(
            "dt=%r does not divide the noise cell width 1/%d" % (cfg.dt, n_cells)
        )
    per_cell = spu // n_cells
    return spu, per_cell


def _noise_drive(paths, cfg: SolverConfig) -> _SparseDrive:
    spec = paths[0].spec
    for path in paths:
        if path.spec.modes != spec.modes or path.cells.shape != paths[0].cells.shape:
            raise ValidationError("concatenated paths must share one noise spec")
    if any(abs(k) > cfg.grid.k_max for k in spec.modes):
        raise ValidationError("noise mode outside the grid band")
    spu, per_cell = _path_cell_lookup(cfg, spec.n_cells)
    amp = np.asarray(spec.amplitudes)[:, None]
    unit_cells = [amp * p.cells for p in paths]

    def vals(step):
        unit, within = divmod(step, spu)
        return unit_cells[unit][:, within // per_cell]

    return _SparseDrive(spec.modes, cfg._tab, vals)


def _noise_drive_batch(paths, cfg: SolverConfig) -> _SparseDrive:
    spec = paths[0].spec
    spu, per_cell = _path_cell_lookup(cfg, spec.n_cells)
    amp = np.asarray(spec.amplitudes)[None, :, None]
    stack = amp * np.stack([p.cells for p in paths])  # (B, n_modes, n_cells)

    def vals(step):
        return stack[:, :, (step % spu) // per_cell]

    return _SparseDrive(spec.modes, cfg._tab, vals)


def _evolve(u: np.ndarray, cfg: SolverConfig, n_steps: int, drive, collect: bool, t0: float = 0.0):
    """Core loop.  u has shape (..., n_coeff); returns (times, stored, final)."""
    tab = cfg._tab
    thr2 = cfg.blowup_threshold**2
    times = [t0]
    stored = [u.copy()] if collect else []
    for n in range(n_steps):
        u = _lin_half(u, tab)
        u = _nonlinear_full(u, tab, cfg.dt, cfg.p, drive(n) if drive is not None else None)
        u = _lin_half(u, tab)
        h1 = (u.real**2 + u.imag**2) @ tab.h1_weights
        if np.max(h1) > thr2:
            raise BlowUpError(n + 1, t0 + (n + 1) * cfg.dt, float(np.sqrt(np.max(h1))))
        if collect and ((n + 1) % cfg.store_stride == 0 or n + 1 == n_steps):
            times.append(t0 + (n + 1) * cfg.dt)
            stored.append(u.copy())
    return np.asarray(times), stored, u


@dataclass
class Trajectory:
    """Stored states of one run: times[i] pairs with coeffs[i]."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray = field(repr=False)
    config: SolverConfig = None
    forcing: object = None

    @property
    def n_stored(self) -> int:
        return len(self.times)

    def state(self, i: int) -> FourierField:
        return FourierField(self.grid, self.coeffs[i])

    @property
    def endpoint(self) -> FourierField:
        return self.state(-1)

    def index_at(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > _TIME_TOL * max(1.0, abs(t)):
            raise ValidationError("time %r not on the stored grid" % (t,))
        return i

    def state_at(self, t: float) -> FourierField:
        return self.state(self.index_at(t))

    def norms(self, s: float = 1.0) -> np.ndarray:
        from .spectral import hs_norm_sq

        return np.sqrt(hs_norm_sq(self.coeffs, s))


def _as_path_list(forcing, horizon: float, cfg: SolverConfig):
    if forcing is None:
        return None
    if isinstance(forcing, NoisePath):
        if horizon > 1.0 + _TIME_TOL:
            raise ValidationError("a single noise path covers at most one time unit")
        return [forcing]
    paths = list(forcing)
    if not all(isinstance(p, NoisePath) for p in paths):
        raise ValidationError("forcing must be None, a NoisePath, or a sequence of them")
    if abs(horizon - len(paths)) > _TIME_TOL:
        raise ValidationError(
            "%d concatenated paths cover horizon %d, got %r" % (len(paths), len(paths), horizon)
        )
    return paths


def solve_nls(u0: FourierField, forcing, horizon: float, cfg: SolverConfig) -> Trajectory:
    """Integrate from u0 over [0, horizon] and return the stored trajectory.

    forcing: None for the unforced flow, a NoisePath for one unit interval,
    or a sequence of NoisePath objects for an integer horizon.  Steps are
    validated to align with the dyadic noise cells so every step sees a
    constant drive.
    """
    if u0.grid != cfg.grid:
        raise ValidationError("initial state lives on a different grid")
    n_steps = cfg.steps_for(horizon)
    paths = _as_path_list(forcing, horizon, cfg)
    drive = _noise_drive(paths, cfg) if paths is not None else None
    times, stored, _ = _evolve(u0.coeffs.astype(np.complex128), cfg, n_steps, drive, True)
    return Trajectory(cfg.grid, times, np.stack(stored), cfg, forcing)


def markov_step(u0: FourierField, path: NoisePath, cfg: SolverConfig) -> FourierField:
    """Time-one solution map driving the unit-interval Markov chain."""
    if u0.grid != cfg.grid:
        raise ValidationError("initial state lives on a different grid")
    n_steps = cfg.steps_for(1.0)
    drive = _noise_drive([path], cfg) if path is not None else None
    _, _, final = _evolve(u0.coeffs.astype(np.complex128), cfg, n_steps, drive, False)
    return FourierField(cfg.grid, final)


def markov_step_batch(coeffs: np.ndarray, paths, cfg: SolverConfig) -> np.ndarray:
    """Batched unit step: coeffs (B, n_coeff) under per-row noise paths."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 2 or coeffs.shape[0] != len(paths):
        raise ValidationError("need one path per batch row")
    n_steps = cfg.steps_for(1.0)
    drive = _noise_drive_batch(paths, cfg)
    _, _, final = _evolve(coeffs, cfg, n_steps, drive, False)
    return final


def linear_group(u0: FourierField, t: float, damping: DampingProfile, dt: float) -> FourierField:
    """Damped free group S_a(t): exact spectral phases around exact decay.

    The substep arrangement matches the solver's linear half steps, so for a
    zero potential the linearized solver and this map agree to round-off.
    """
    if u0.grid != damping.grid:
        raise ValidationError("state and damping live on different grids")
    out = linear_group_coeffs(u0.coeffs, t, damping, dt)
    return FourierField(u0.grid, out)


def linear_group_coeffs(coeffs: np.ndarray, t: float, damping: DampingProfile, dt: float):
    if t < 0:
        raise ValidationError("group time must be nonnegative")
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if t == 0:
        return np.asarray(coeffs, dtype=np.complex128).copy()
    grid = damping.grid
    n = max(1, int(round(t / dt)))
    h = t / n
    k = grid.modes
    tab = SimpleNamespace(
        n_grid=grid.n_points,
        idx_grid=np.mod(k, grid.n_points),
        phase_q=np.exp(-1j * k.astype(float) ** 2 * (h / 4.0)),
        decay_half=np.exp(-damping.values * (h / 2.0)),
    )
    u = np.asarray(coeffs, dtype=np.complex128)
    for _ in range(2 * n):
        u = _lin_half(u, tab)
    return u


def energy_series(coeffs: np.ndarray, p: int = 3) -> np.ndarray:
    """Energy of each row of a (n, n_coeff) coefficient stack.

    Matches spectral.energy row by row; the potential term is synthesized in
    chunks so long trajectories do not hold the padded grid all at once.
    """
    c = np.asarray(coeffs, dtype=np.complex128)
    squeeze = c.ndim == 1
    if squeeze:
        c = c[None, :]
    k_max = (c.shape[-1] - 1) // 2
    k = np.arange(-k_max, k_max + 1, dtype=float)
    quad = 0.5 * ((c.real**2 + c.imag**2) @ (1.0 + k**2))
    m = pad_points(k_max, p)
    half = (p + 1) // 2
    quart = np.empty(c.shape[0])
    chunk = 2048
    for lo in range(0, c.shape[0], chunk):
        v = synth(c[lo : lo + chunk], m)
        amp2 = v.real**2 + v.imag**2
        quart[lo : lo + chunk] = np.mean(amp2**half, axis=-1)
    out = quad + quart * (2.0 * math.pi / (p + 1))
    return out[0] if squeeze else out


def phase_theta(traj: Trajectory, t: float) -> float:
    """Accumulated resonant phase ((p+1)/4pi) int_0^t ||u||_{L^{p-1}}^{p-1} ds."""
    i = traj.index_at(t)
    p = traj.config.p
    pad = pad_points(traj.grid.k_max, p)
    vals = lp_power_integral(traj.coeffs[: i + 1], p, pad)
    integral = float(np.trapezoid(vals, traj.times[: i + 1]))
    return (p + 1) / (4.0 * math.pi) * integral


def _check_factors(factors):
    p = len(factors)
    if p < 3 or p % 2 == 0:
        raise ValidationError("need an odd number >= 3 of factors, got %d" % p)
    grid = factors[0].grid
    for f in factors:
        if f.grid != grid:
            raise ValidationError("factors live on different grids")
    return p, grid


def nmult(factors) -> FourierField:
    """Alternating product u1 bar(u2) u3 ... of p fields, dealiased."""
    p, grid = _check_factors(factors)
    pad = pad_points(grid.k_max, p)
    prod = np.ones(pad, dtype=np.complex128)
    for i, f in enumerate(factors):
        v = synth(f.coeffs, pad)
        prod *= v if i % 2 == 0 else np.conj(v)
    from .spectral import analyze

    return FourierField(grid, analyze(prod, grid.k_max))


def nres(factors) -> FourierField:
    """Resonant part: for each odd slot m the frequency constraint pins the
    m-th factor's mode, and the remaining factors collapse to the integral
    of their alternating product; each such term contributes
    u_m * integral / (2pi).  Single-resonant terms are counted once per slot,
    so coinciding factors are counted with multiplicity."""
    p, grid = _check_factors(factors)
    pad = pad_points(grid.k_max, p)
    phys = [synth(f.coeffs, pad) for f in factors]
    out = np.zeros(grid.n_coeff, dtype=np.complex128)
    two_pi = 2.0 * math.pi
    for m in range(0, p, 2):  # odd slots in 1-based counting
        prod = np.ones(pad, dtype=np.complex128)
        for i in range(p):
            if i == m:
                continue
            prod *= phys[i] if i % 2 == 0 else np.conj(phys[i])
        integral = complex(np.mean(prod)) * two_pi
        out += factors[m].coeffs * (integral / two_pi)
    return FourierField(grid, out)


def nnonres(factors) -> FourierField:
    return nmult(factors) - nres(factors)


def smoothing_remainder(u0: FourierField, forcing, t: float, cfg: SolverConfig) -> FourierField:
    """u(t) minus the phase-adjusted damped free evolution of u0.

    The remainder is the smoothing diagnostic: it carries the gain of
    regularity that the full flow enjoys over its linear part once the
    resonant phase has been removed.
    """
    traj = solve_nls(u0, forcing, t, cfg)
    theta = phase_theta(traj, t)
    lin = linear_group(u0, t, cfg.damping, cfg.dt)
    return traj.endpoint - complex(math.cos(theta), -math.sin(theta)) * lin
