"""Markov chains, ensembles, certified observable dictionaries, and the
experiments that probe decay, mixing, and coupled stabilization.

Randomness discipline: every noise path is drawn from an integer record
(master_seed, tag, chain, step) with the mode index appended inside the
sampler.  Tags separate independent ensembles (0 = solo chains and coupled
pairs, 1/2 = the two ensembles of a mixing run), so rerunning any experiment
with the same master seed reproduces identical states no matter how the
batch is chunked.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import build_control_basis_map, equivalent_norm, stabilizing_shift
from .dynamics import SolverConfig, energy_series, markov_step_batch, solve_nls
from .noise import NoiseSpec, sample_noise_paths
from .spectral import FourierField, Grid, ValidationError, hs_norm_sq

SOLO_TAG = 0
ENSEMBLE_TAGS = (1, 2)


def chain_seed_record(master_seed: int, tag: int, chain: int, step: int) -> tuple:
    return (int(master_seed), int(tag), int(chain), int(step))


# Chains are advanced in fixed-size row blocks.  The block size is a code
# constant, never derived from the worker count, so the batched FFT shapes
# (and with them every last bit of the result) do not depend on scheduling.
ENSEMBLE_BLOCK = 64


def _worker_count() -> int:
    try:
        workers = int(os.environ.get("SCHRODMIX_WORKERS", "1") or "1")
    except ValueError:
        return 1
    return max(1, workers)


def run_chain(u0: FourierField, n_steps: int, spec: NoiseSpec, cfg: SolverConfig,
              master_seed: int) -> list:
    """Iterate the unit-time Markov step; returns states at steps 0..n_steps."""
    states = [u0]
    coeffs = u0.coeffs[None, :].astype(np.complex128)
    for n in range(n_steps):
        paths = sample_noise_paths(spec, [chain_seed_record(master_seed, SOLO_TAG, 0, n)])
        coeffs = markov_step_batch(coeffs, paths, cfg)
        states.append(FourierField(u0.grid, coeffs[0]))
    return states


def warm_start(u0: FourierField, n_steps: int, spec: NoiseSpec, cfg: SolverConfig,
               master_seed: int) -> FourierField:
    return run_chain(u0, n_steps, spec, cfg, master_seed)[-1]


@dataclass
class Ensemble:
    """A population of chain states advancing under independent noise."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)
    step_index: int = 0
    master_seed: int = 0
    tag: int = 1

    @classmethod
    def from_field(cls, u0: FourierField, n_chains: int, master_seed: int, tag: int) -> "Ensemble":
        coeffs = np.tile(u0.coeffs, (n_chains, 1)).astype(np.complex128)
        return cls(u0.grid, coeffs, 0, int(master_seed), int(tag))

    @property
    def n_chains(self) -> int:
        return self.coeffs.shape[0]


def evolve_ensemble(ens: Ensemble, spec: NoiseSpec, cfg: SolverConfig, n_steps: int = 1) -> Ensemble:
    """Advance every chain; chain i at step n draws its path from the record
    (master_seed, tag, i, n).  Rows are processed in fixed blocks of
    ENSEMBLE_BLOCK chains; SCHRODMIX_WORKERS only sets how many blocks run
    concurrently, so the result is bitwise identical for any worker count."""
    coeffs = ens.coeffs.copy()
    m = ens.n_chains
    blocks = [(lo, min(lo + ENSEMBLE_BLOCK, m)) for lo in range(0, m, ENSEMBLE_BLOCK)]

    def advance(bounds):
        lo, hi = bounds
        block = coeffs[lo:hi]
        for n in range(ens.step_index, ens.step_index + n_steps):
            records = [chain_seed_record(ens.master_seed, ens.tag, i, n) for i in range(lo, hi)]
            paths = sample_noise_paths(spec, records)
            block = markov_step_batch(block, paths, cfg)
        coeffs[lo:hi] = block

    workers = _worker_count()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(advance, blocks))
    else:
        for bounds in blocks:
            advance(bounds)
    return Ensemble(ens.grid, coeffs, ens.step_index + n_steps, ens.master_seed, ens.tag)


# ---------------------------------------------------------------------------
# certified observable dictionary


@dataclass(frozen=True)
class Functional:
    """One certified test functional with sup and Lipschitz constants.

    cos_coeff: scale * cos(alpha * Re u_hat(k) + beta); extracting one real
    coefficient is 1-Lipschitz from H1, so lip <= scale * alpha.
    cos_mod: scale * cos(alpha * |u_hat(k)| + beta); the coefficient modulus
    is also 1-Lipschitz from H1 and is invariant under phase rotation, which
    keeps the probe steady while dispersion spins the coefficient.
    exp_anchor: scale * exp(-||u - w||_H1), with lip <= scale.
    """

    kind: str
    scale: float
    k: int = 0
    alpha: float = 1.0
    beta: float = 0.0
    anchor: np.ndarray = None

    @property
    def sup_const(self) -> float:
        return self.scale

    @property
    def lip_const(self) -> float:
        if self.kind in ("cos_coeff", "cos_mod"):
            return self.scale * self.alpha
        return self.scale

    def values(self, coeffs: np.ndarray, k_max: int) -> np.ndarray:
        if self.kind == "cos_coeff":
            re = coeffs[:, self.k + k_max].real
            return self.scale * np.cos(self.alpha * re + self.beta)
        if self.kind == "cos_mod":
            mod = np.abs(coeffs[:, self.k + k_max])
            return self.scale * np.cos(self.alpha * mod + self.beta)
        if self.kind == "exp_anchor":
            d = coeffs - self.anchor[None, :]
            return self.scale * np.exp(-np.sqrt(hs_norm_sq(d, 1.0)))
        raise ValidationError("unknown functional kind %r" % (self.kind,))


@dataclass(frozen=True)
class ObservableDictionary:
    """A finite family of functionals, each inside the unit dual-Lipschitz ball."""

    grid: Grid
    functionals: tuple

    def __post_init__(self):
        for f in self.functionals:
            if f.sup_const + f.lip_const > 1.0 + 1e-12:
                raise ValidationError(
                    "functional exceeds the unit ball: sup+lip=%.3f"
                    % (f.sup_const + f.lip_const)
                )
            if f.kind in ("cos_coeff", "cos_mod") and abs(f.k) > self.grid.k_max:
                raise ValidationError("functional probes a mode outside the band")

    def __len__(self) -> int:
        return len(self.functionals)

    @property
    def max_lip(self) -> float:
        return max(f.lip_const for f in self.functionals)

    def means(self, coeffs: np.ndarray) -> np.ndarray:
        k_max = self.grid.k_max
        return np.array([f.values(coeffs, k_max).mean() for f in self.functionals])


def default_dictionary(grid: Grid, anchors=(), coeff_modes=(0, 1, 2),
                       phases=(0.0, math.pi / 2), alpha: float = 1.0) -> ObservableDictionary:
    funcs = []
    scale = 1.0 / (1.0 + alpha)
    for k in coeff_modes:
        for beta in phases:
            funcs.append(Functional("cos_coeff", scale, k=k, alpha=alpha, beta=beta))
            funcs.append(Functional("cos_mod", scale, k=k, alpha=alpha, beta=beta))
    for w in anchors:
        funcs.append(Functional("exp_anchor", 0.5, anchor=np.asarray(w.coeffs, complex)))
    return ObservableDictionary(grid, tuple(funcs))


def dual_lipschitz_estimate(ens_a, ens_b, dictionary: ObservableDictionary) -> float:
    """Lower bound for the dual-Lipschitz distance of the two empirical laws:
    the largest mean discrepancy over the certified dictionary."""
    ca = ens_a.coeffs if isinstance(ens_a, Ensemble) else np.asarray(ens_a)
    cb = ens_b.coeffs if isinstance(ens_b, Ensemble) else np.asarray(ens_b)
    return float(np.max(np.abs(dictionary.means(ca) - dictionary.means(cb))))


# ---------------------------------------------------------------------------
# fits and experiment reports


def loglinear_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares line through (x, log y); returns (slope, intercept, r)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(y <= 0):
        return float("nan"), float("nan"), float("nan")
    ly = np.log(y)
    slope, intercept = np.polyfit(x, ly, 1)
    if np.ptp(ly) == 0.0 or np.ptp(x) == 0.0:
        r = float("nan")
    else:
        r = float(np.corrcoef(x, ly)[0, 1])
    return float(slope), float(intercept), r


@dataclass
class DecayReport:
    times: np.ndarray
    energies: np.ndarray
    beta_hat: float
    r_value: float
    window_start: int
    degenerate: bool
    horizon: float

    def to_json_dict(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "energies": [float(e) for e in self.energies],
            "beta_hat": float(self.beta_hat),
            "r_value": float(self.r_value),
            "window_start": int(self.window_start),
            "degenerate": bool(self.degenerate),
            "horizon": float(self.horizon),
        }


def decay_experiment(u0: FourierField, horizon: float, cfg: SolverConfig) -> DecayReport:
    """Unforced damped run; fits log E on the trailing half of the horizon."""
    traj = solve_nls(u0, None, horizon, cfg)
    energies = energy_series(traj.coeffs, cfg.p)
    window = int(np.searchsorted(traj.times, horizon / 2.0))
    tail = energies[window:]
    if energies[0] <= 0.0 or np.any(tail <= 0.0):
        return DecayReport(traj.times, energies, float("nan"), float("nan"),
                           window, True, horizon)
    slope, _, r = loglinear_fit(traj.times[window:], tail)
    return DecayReport(traj.times, energies, -slope, r, window, False, horizon)


@dataclass
class MixReport:
    distances: np.ndarray
    alt_distances: np.ndarray
    noise_floor: float
    fit_stop: int
    gamma_hat: float
    alt_gamma_hat: float
    r_value: float
    below_floor_step: int
    n_chains: int
    n_steps: int
    master_seed: int
    config_digest: str = ""

    def to_json_dict(self) -> dict:
        return {
            "distances": [float(d) for d in self.distances],
            "alt_distances": [float(d) for d in self.alt_distances],
            "noise_floor": float(self.noise_floor),
            "fit_stop": int(self.fit_stop),
            "gamma_hat": float(self.gamma_hat),
            "alt_gamma_hat": float(self.alt_gamma_hat),
            "r_value": float(self.r_value),
            "below_floor_step": int(self.below_floor_step),
            "n_chains": int(self.n_chains),
            "n_steps": int(self.n_steps),
            "master_seed": int(self.master_seed),
            "config_digest": self.config_digest,
        }


def mixing_experiment(
    u0_a: FourierField,
    u0_b: FourierField,
    n_chains: int,
    n_steps: int,
    spec: NoiseSpec,
    cfg: SolverConfig,
    master_seed: int,
    dictionary: ObservableDictionary = None,
    alt_dictionary: ObservableDictionary = None,
) -> MixReport:
    """Evolve two independent ensembles and track their dictionary distance.

    The Monte Carlo noise floor 2/sqrt(M) censors the geometric fit: only the
    leading steps with distance above 3x the floor enter the log-linear fit.
    The alternate dictionary double-checks that the fitted rate is not an
    artifact of one particular functional family.
    """
    grid = cfg.grid
    zero = FourierField(grid, np.zeros(grid.n_coeff, complex))
    if dictionary is None:
        dictionary = default_dictionary(grid, anchors=(u0_a, u0_b, zero))
    if alt_dictionary is None:
        alt_dictionary = default_dictionary(
            grid,
            anchors=(0.5 * (u0_a + u0_b), u0_b, 0.5 * u0_a),
            coeff_modes=(0, 1, 3),
            phases=(0.7, 2.1),
            alpha=2.0,
        )
    ens_a = Ensemble.from_field(u0_a, n_chains, master_seed, ENSEMBLE_TAGS[0])
    ens_b = Ensemble.from_field(u0_b, n_chains, master_seed, ENSEMBLE_TAGS[1])
    dists = [dual_lipschitz_estimate(ens_a, ens_b, dictionary)]
    alt_dists = [dual_lipschitz_estimate(ens_a, ens_b, alt_dictionary)]
    for _ in range(n_steps):
        ens_a = evolve_ensemble(ens_a, spec, cfg)
        ens_b = evolve_ensemble(ens_b, spec, cfg)
        dists.append(dual_lipschitz_estimate(ens_a, ens_b, dictionary))
        alt_dists.append(dual_lipschitz_estimate(ens_a, ens_b, alt_dictionary))
    dists = np.asarray(dists)
    alt_dists = np.asarray(alt_dists)
    floor = 2.0 / math.sqrt(n_chains)
    thr = 3.0 * floor

    steps = np.arange(len(dists))

    def fit_window(curve):
        below = np.nonzero(curve <= thr)[0]
        below_step = int(below[0]) if len(below) else -1
        if below_step == 0:
            # indistinguishable at this ensemble size from the start
            return 0, 0, float("nan"), float("nan")
        stop = below_step if below_step > 0 else len(curve)
        slope, _, r = loglinear_fit(steps[:stop], curve[:stop])
        return below_step, stop, slope, r

    below_step, fit_stop, slope, r = fit_window(dists)
    _, _, alt_slope, _ = fit_window(alt_dists)
    return MixReport(
        distances=dists,
        alt_distances=alt_dists,
        noise_floor=floor,
        fit_stop=fit_stop,
        gamma_hat=-slope,
        alt_gamma_hat=-alt_slope,
        r_value=r,
        below_floor_step=below_step,
        n_chains=n_chains,
        n_steps=n_steps,
        master_seed=master_seed,
    )


def attractor_proximity(states, s: float = 1.25) -> dict:
    """Tail mass and H^s size along a chain: the high-band H1 norm above
    k_max/2 and the full H^s norm, per state."""
    if len(states) == 0:
        raise ValidationError("need at least one state")
    grid = states[0].grid
    coeffs = np.stack([st.coeffs for st in states])
    k_max = grid.k_max
    cut = k_max // 2
    k = grid.modes
    tail_mask = np.abs(k) > cut
    w1 = (1.0 + k.astype(float) ** 2) * tail_mask
    amp2 = coeffs.real**2 + coeffs.imag**2
    tail = np.sqrt(amp2 @ w1)
    hs = np.sqrt(hs_norm_sq(coeffs, s))
    return {"tail_h1": tail, "hs_norm": hs, "s": s, "tail_cutoff": cut}


@dataclass
class CouplingReport:
    separations: np.ndarray
    ratios: np.ndarray
    shift_norms: np.ndarray
    use_control: bool
    gamma: float
    master_seed: int
    norm_kind: str

    def to_json_dict(self) -> dict:
        return {
            "separations": [float(v) for v in self.separations],
            "ratios": [float(v) for v in self.ratios],
            "shift_norms": [float(v) for v in self.shift_norms],
            "use_control": bool(self.use_control),
            "gamma": float(self.gamma),
            "master_seed": int(self.master_seed),
            "norm_kind": self.norm_kind,
        }


def synchronous_coupling_experiment(
    y0: FourierField,
    x0: FourierField,
    n_steps: int,
    spec: NoiseSpec,
    cfg: SolverConfig,
    master_seed: int,
    use_control: bool = False,
    gamma: float = 1e-2,
    time_level: int = 2,
    galerkin_cutoff: int = 8,
    use_equivalent_norm: bool = True,
    tau0: float = 1.0,
) -> CouplingReport:
    """Drive two chains with the same per-step noise realization; optionally
    shift the second chain's realization with the stabilizing control.

    Without control each chain's marginal law is exactly the solo run_chain
    law (identical seeds give identical states); with control the x chain
    follows the shifted realization and the per-step separation ratios are
    recorded.
    """
    if cfg.store_stride != 1 and use_control:
        raise ValidationError("controlled coupling needs store_stride=1")
    if use_equivalent_norm:
        norm = lambda f: equivalent_norm(f, cfg, tau0)
        kind = "h1_after_group(tau0=%g)" % tau0
    else:
        norm = lambda f: float(np.sqrt(hs_norm_sq(f.coeffs, 1.0)))
        kind = "h1"
    y, x = y0, x0
    seps = [norm(y - x)]
    shift_norms = []
    for n in range(n_steps):
        (zeta,) = sample_noise_paths(spec, [chain_seed_record(master_seed, SOLO_TAG, 0, n)])
        if use_control:
            base_y = solve_nls(y, zeta, 1.0, cfg)
            cmap = build_control_basis_map(base_y, spec.modes, time_level, galerkin_cutoff)
            shift = stabilizing_shift(base_y, x, gamma, cmap)
            y = base_y.endpoint
            x = FourierField(
                cfg.grid,
                markov_step_batch(x.coeffs[None, :], [shift.path], cfg)[0],
            )
            shift_norms.append(shift.shift_norm)
        else:
            stacked = markov_step_batch(
                np.stack([y.coeffs, x.coeffs]), [zeta, zeta], cfg
            )
            y = FourierField(cfg.grid, stacked[0])
            x = FourierField(cfg.grid, stacked[1])
            shift_norms.append(0.0)
        seps.append(norm(y - x))
    seps = np.asarray(seps)
    ratios = np.divide(seps[1:], seps[:-1], out=np.full(n_steps, np.nan), where=seps[:-1] > 0)
    return CouplingReport(
        separations=seps,
        ratios=ratios,
        shift_norms=np.asarray(shift_norms),
        use_control=use_control,
        gamma=gamma,
        master_seed=master_seed,
        norm_kind=kind,
    )
