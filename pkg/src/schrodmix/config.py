"""Experiment configuration: a line-oriented `key = value` format with
[section] headers, a fixed schema, and a canonical digest.

The format is deliberately small: full-line # comments, five known sections,
every key typed and defaulted, unknown sections or keys rejected with their
line number.  A config canonicalizes to a fixed rendering of every field
(defaults filled), and the digest is the sha256 of that rendering, so two
configs with the same digest run the same experiment.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .control import contraction_test, saturation_span
from .dynamics import SolverConfig, smoothing_remainder, solve_nls
from .linearized import assemble_gramian
from .mixing import (
    chain_seed_record,
    decay_experiment,
    mixing_experiment,
    synchronous_coupling_experiment,
    warm_start,
)
from .noise import NoiseSpec, sample_noise_paths
from .spectral import (
    FourierField,
    Grid,
    ValidationError,
    bump_damping,
    constant_damping,
    hs_norm_sq,
    plane_wave,
    sobolev_norm,
    zero_damping,
    zero_field,
)
from . import store

KINDS = ("simulate", "decay", "gramian", "stabilize", "couple", "mix", "saturate", "smooth")
_INITIAL_KINDS = ("zero", "constant", "plane_wave", "random_h1")
_DAMPING_KINDS = ("zero", "constant", "bump")

_SECTION_ORDER = ("grid", "solver", "noise", "experiment", "run")

# key -> (type, default); types: int, float, str, bool, ints, floats
_SCHEMA = {
    "grid": {
        "n_points": ("int", 128),
        "k_max": ("int", 42),
    },
    "solver": {
        "dt": ("float", 2.0**-7),
        "p": ("int", 3),
        "store_stride": ("int", 1),
        "damping": ("str", "bump"),
        "damping_value": ("float", 0.1),
        "damping_amplitude": ("float", 1.5),
        "damping_center": ("float", math.pi),
        "damping_width": ("float", 1.5),
    },
    "noise": {
        "modes": ("ints", (0, 1)),
        "amplitudes": ("floats", (0.15, 0.15)),
        "haar_c": ("float", 0.5),
        "haar_q": ("float", 2.0),
        "level_max": ("int", 6),
    },
    "experiment": {
        "kind": ("str", "simulate"),
        "horizon": ("float", 1.0),
        "forced": ("bool", False),
        "n_steps": ("int", 60),
        "n_chains": ("int", 400),
        "initial": ("str", "plane_wave"),
        "initial_amplitude": ("float", 1.0),
        "initial_mode": ("int", 1),
        "initial_tail": ("float", 3.0),
        "initial_b": ("str", ""),
        "initial_b_amplitude": ("float", 1.0),
        "initial_b_mode": ("int", 0),
        "initial_b_tail": ("float", 3.0),
        "gamma": ("float", 1.0e-2),
        "time_level": ("int", 2),
        "galerkin_cutoff": ("int", 8),
        "target_cutoff": ("int", 2),
        "use_control": ("bool", False),
        "warm_steps": ("int", 5),
        "delta": ("float", 1.0e-3),
        "tau0": ("float", 1.0),
        "iterations": ("int", 3),
        "sat_modes": ("ints", (0, 1)),
        "probe_s": ("float", 1.25),
    },
    "run": {
        "seed": ("int", 0),
        "output_dir": ("str", "out"),
    },
}


def _parse_scalar(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        if kind == "floats":
            return tuple(float(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ValidationError("%s: cannot parse %r as %s" % (where, raw, kind))
    raise ValidationError("%s: unknown schema type %s" % (where, kind))


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def parse_config_text(text: str) -> dict:
    """Raw parse: {section: {key: value}} with schema typing and strict
    rejection of unknown sections/keys, duplicates, and stray lines."""
    sections = {name: {} for name in _SECTION_ORDER}
    seen = set()
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if name not in _SCHEMA:
                raise ValidationError("line %d: unknown section [%s]" % (lineno, name))
            current = name
            continue
        if "=" not in stripped:
            raise ValidationError("line %d: expected key = value, got %r" % (lineno, stripped))
        if current is None:
            raise ValidationError("line %d: key outside any [section]" % lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA[current]:
            raise ValidationError("line %d: unknown key %r in [%s]" % (lineno, key, current))
        if (current, key) in seen:
            raise ValidationError("line %d: duplicate key %r in [%s]" % (lineno, key, current))
        seen.add((current, key))
        kind = _SCHEMA[current][key][0]
        sections[current][key] = _parse_scalar(kind, raw, "line %d" % lineno)
    for name, keys in _SCHEMA.items():
        for key, (_, default) in keys.items():
            sections[name].setdefault(key, default)
    return sections


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A fully validated experiment: built objects plus the typed field map."""

    grid: Grid
    solver: SolverConfig
    noise: NoiseSpec
    kind: str
    params: dict = field(repr=False)
    master_seed: int = 0
    output_dir: str = "out"
    sections: dict = field(default_factory=dict, repr=False)

    def canonical_text(self) -> str:
        lines = []
        for name in _SECTION_ORDER:
            lines.append("[%s]" % name)
            for key in sorted(_SCHEMA[name]):
                kind = _SCHEMA[name][key][0]
                lines.append("%s = %s" % (key, _format_value(kind, self.sections[name][key])))
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.sections == other.sections

    def __hash__(self):
        return hash(self.digest())


def _build_damping(grid: Grid, sol: dict):
    name = sol["damping"]
    if name == "zero":
        return zero_damping(grid)
    if name == "constant":
        return constant_damping(grid, sol["damping_value"])
    if name == "bump":
        return bump_damping(
            grid, sol["damping_amplitude"], sol["damping_center"], sol["damping_width"]
        )
    raise ValidationError("damping must be one of %s, got %r" % (_DAMPING_KINDS, name))


def config_from_sections(sections: dict) -> ExperimentConfig:
    grid = Grid(n_points=sections["grid"]["n_points"], k_max=sections["grid"]["k_max"])
    sol = sections["solver"]
    damping = _build_damping(grid, sol)
    solver = SolverConfig(
        grid=grid,
        damping=damping,
        dt=sol["dt"],
        p=sol["p"],
        store_stride=sol["store_stride"],
    )
    noi = sections["noise"]
    noise = NoiseSpec(
        modes=noi["modes"],
        amplitudes=noi["amplitudes"],
        haar_c=noi["haar_c"],
        haar_q=noi["haar_q"],
        level_max=noi["level_max"],
    )
    exp = dict(sections["experiment"])
    kind = exp["kind"]
    if kind not in KINDS:
        raise ValidationError("experiment kind must be one of %s, got %r" % (KINDS, kind))
    if exp["initial"] not in _INITIAL_KINDS:
        raise ValidationError("initial must be one of %s" % (_INITIAL_KINDS,))
    if exp["initial_b"] and exp["initial_b"] not in _INITIAL_KINDS:
        raise ValidationError("initial_b must be one of %s or empty" % (_INITIAL_KINDS,))
    uses_noise = kind in ("gramian", "stabilize", "couple", "mix") or (
        kind == "simulate" and exp["forced"]
    )
    if uses_noise:
        spu = solver.steps_for(1.0)
        if spu % noise.n_cells != 0:
            raise ValidationError(
                "dt must divide the noise cell width: %d solver steps per unit time "
                "vs %d cells (SolverConfig/NoiseSpec cross constraint)" % (spu, noise.n_cells)
            )
        for k in noise.modes:
            if abs(k) > grid.k_max:
                raise ValidationError("noise mode %d outside the grid band" % k)
    return ExperimentConfig(
        grid=grid,
        solver=solver,
        noise=noise,
        kind=kind,
        params=exp,
        master_seed=sections["run"]["seed"],
        output_dir=sections["run"]["output_dir"],
        sections=sections,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return config_from_sections(parse_config_text(text))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(cfg.canonical_text())


# ---------------------------------------------------------------------------
# initial data


def build_initial(cfg: ExperimentConfig, which: str = "a") -> FourierField:
    p = cfg.params
    if which == "a":
        name, amp, mode, tail, salt = (
            p["initial"],
            p["initial_amplitude"],
            p["initial_mode"],
            p["initial_tail"],
            0,
        )
    else:
        name, amp, mode, tail, salt = (
            p["initial_b"],
            p["initial_b_amplitude"],
            p["initial_b_mode"],
            p["initial_b_tail"],
            1,
        )
    grid = cfg.grid
    if name == "zero":
        return zero_field(grid)
    if name == "constant":
        c = np.zeros(grid.n_coeff, dtype=np.complex128)
        c[grid.k_max] = amp * math.sqrt(2.0 * math.pi)
        return FourierField(grid, c)
    if name == "plane_wave":
        return plane_wave(grid, mode, amp)
    if name == "random_h1":
        return random_h1_field(grid, amp, tail, cfg.master_seed, salt)
    raise ValidationError("unknown initial data kind %r" % (name,))


def random_h1_field(grid: Grid, amplitude: float, tail: float, seed: int, salt: int) -> FourierField:
    """Gaussian coefficients shaped by <k>^-tail, scaled to the target H1 norm."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 777, int(salt))))
    k = grid.modes.astype(float)
    mag = (1.0 + k**2) ** (-tail / 2.0)
    z = rng.standard_normal(grid.n_coeff) + 1j * rng.standard_normal(grid.n_coeff)
    c = z * mag
    norm = math.sqrt(float(hs_norm_sq(c, 1.0)))
    if norm == 0.0:
        raise ValidationError("degenerate random draw")
    return FourierField(grid, c * (amplitude / norm))


# ---------------------------------------------------------------------------
# experiment dispatch


def _unit_paths(cfg: ExperimentConfig, n_units: int, start: int = 0) -> list:
    records = [chain_seed_record(cfg.master_seed, 0, 0, start + n) for n in range(n_units)]
    return sample_noise_paths(cfg.noise, records)


def _run_simulate(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    u0 = build_initial(cfg)
    horizon = p["horizon"]
    forcing = None
    written = []
    if p["forced"]:
        n_units = int(round(horizon))
        if abs(horizon - n_units) > 1e-9 or n_units < 1:
            raise ValidationError("forced runs need an integer horizon >= 1")
        forcing = _unit_paths(cfg, n_units)
        for i, path_obj in enumerate(forcing):
            fname = os.path.join(out, "noise_path_%03d.csv" % i)
            store.write_noise_path_csv(fname, path_obj)
            written.append(fname)
    traj = solve_nls(u0, forcing, horizon, cfg.solver)
    csv_path = os.path.join(out, "trajectory.csv")
    bin_path = os.path.join(out, "trajectory.bin")
    store.write_trajectory_csv(csv_path, traj.times, traj.coeffs)
    store.write_trajectory_bin(bin_path, traj.times, traj.coeffs, cfg.grid)
    written.extend([csv_path, bin_path])
    return written


def _run_decay(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    report = decay_experiment(build_initial(cfg), p["horizon"], cfg.solver)
    curve = os.path.join(out, "decay_curve.csv")
    with open(curve, "w", newline="") as fh:
        fh.write("t,energy\n")
        for t, e in zip(report.times, report.energies):
            fh.write("%s,%s\n" % (store.FLOAT_FMT % t, store.FLOAT_FMT % e))
    jpath = os.path.join(out, "decay.json")
    store.write_json_report(jpath, report.to_json_dict())
    return [curve, jpath]


def _warm_base(cfg: ExperimentConfig):
    """Warm the chain, then one forced unit-time trajectory as the base."""
    p = cfg.params
    stride1 = cfg.solver if cfg.solver.store_stride == 1 else SolverConfig(
        grid=cfg.grid, damping=cfg.solver.damping, dt=cfg.solver.dt, p=cfg.solver.p
    )
    u0 = build_initial(cfg)
    y = warm_start(u0, p["warm_steps"], cfg.noise, stride1, cfg.master_seed) if p["warm_steps"] else u0
    (zeta,) = sample_noise_paths(
        cfg.noise, [chain_seed_record(cfg.master_seed, 0, 0, p["warm_steps"])]
    )
    return solve_nls(y, zeta, 1.0, stride1), zeta, stride1


def _run_gramian(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    base, _, _ = _warm_base(cfg)
    report = assemble_gramian(
        base,
        cfg.noise.modes,
        p["time_level"],
        p["galerkin_cutoff"],
        target_cutoff=p["target_cutoff"],
    )
    jpath = os.path.join(out, "gramian.json")
    store.write_json_report(jpath, report.to_json_dict())
    return [jpath]


def _run_stabilize(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    base, zeta, stride1 = _warm_base(cfg)
    y = base.state(0)
    bump = random_h1_field(cfg.grid, p["delta"], 2.0, cfg.master_seed, 3)
    x = y + bump
    report = contraction_test(
        y,
        x,
        zeta,
        p["gamma"],
        stride1,
        time_level=p["time_level"],
        galerkin_cutoff=p["galerkin_cutoff"],
        tau0=p["tau0"],
        seeds=(cfg.master_seed,),
    )
    jpath = os.path.join(out, "stabilize.json")
    store.write_json_report(jpath, report.to_json_dict())
    return [jpath]


def _run_couple(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    y0 = build_initial(cfg)
    if p["initial_b"]:
        x0 = build_initial(cfg, "b")
    else:
        x0 = y0 + random_h1_field(cfg.grid, p["delta"], 2.0, cfg.master_seed, 2)
    stride1 = cfg.solver if cfg.solver.store_stride == 1 else SolverConfig(
        grid=cfg.grid, damping=cfg.solver.damping, dt=cfg.solver.dt, p=cfg.solver.p
    )
    report = synchronous_coupling_experiment(
        y0,
        x0,
        p["n_steps"],
        cfg.noise,
        stride1,
        cfg.master_seed,
        use_control=p["use_control"],
        gamma=p["gamma"],
        time_level=p["time_level"],
        galerkin_cutoff=p["galerkin_cutoff"],
        tau0=p["tau0"],
    )
    curve = os.path.join(out, "couple_curve.csv")
    with open(curve, "w", newline="") as fh:
        fh.write("step,separation,ratio,shift_norm\n")
        for n, sep in enumerate(report.separations):
            ratio = report.ratios[n - 1] if n >= 1 else float("nan")
            shift = report.shift_norms[n - 1] if n >= 1 else 0.0
            fh.write(
                "%d,%s,%s,%s\n"
                % (n, store.FLOAT_FMT % sep, store.FLOAT_FMT % ratio, store.FLOAT_FMT % shift)
            )
    jpath = os.path.join(out, "couple.json")
    store.write_json_report(jpath, report.to_json_dict())
    return [curve, jpath]


def _run_mix(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    if not p["initial_b"]:
        raise ValidationError("mix needs a second initial datum (initial_b)")
    report = mixing_experiment(
        build_initial(cfg, "a"),
        build_initial(cfg, "b"),
        p["n_chains"],
        p["n_steps"],
        cfg.noise,
        cfg.solver,
        cfg.master_seed,
    )
    report.config_digest = cfg.digest()
    curve = os.path.join(out, "mix_curve.csv")
    with open(curve, "w", newline="") as fh:
        fh.write("step,distance,alt_distance\n")
        for n in range(len(report.distances)):
            fh.write(
                "%d,%s,%s\n"
                % (
                    n,
                    store.FLOAT_FMT % report.distances[n],
                    store.FLOAT_FMT % report.alt_distances[n],
                )
            )
    jpath = os.path.join(out, "mix.json")
    store.write_json_report(jpath, report.to_json_dict())
    return [curve, jpath]


def _run_saturate(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    final, interval = saturation_span(frozenset(p["sat_modes"]), p["iterations"])
    payload = {
        "base": sorted(int(k) for k in p["sat_modes"]),
        "iterations": int(p["iterations"]),
        "modes": sorted(int(k) for k in final),
        "interval": [int(interval[0]), int(interval[1])],
    }
    jpath = os.path.join(out, "saturate.json")
    store.write_json_report(jpath, payload)
    return [jpath]


def _run_smooth(cfg: ExperimentConfig, out: str) -> list:
    p = cfg.params
    u0 = build_initial(cfg)
    horizon = p["horizon"]
    forcing = _unit_paths(cfg, int(round(horizon))) if p["forced"] else None
    rem = smoothing_remainder(u0, forcing, horizon, cfg.solver)
    traj = solve_nls(u0, forcing, horizon, cfg.solver)
    s = p["probe_s"]
    payload = {
        "t": float(horizon),
        "probe_s": float(s),
        "initial_hs": sobolev_norm(u0, s),
        "endpoint_hs": sobolev_norm(traj.endpoint, s),
        "remainder_h1": sobolev_norm(rem, 1.0),
        "remainder_hs": sobolev_norm(rem, s),
    }
    jpath = os.path.join(out, "smooth.json")
    store.write_json_report(jpath, payload)
    return [jpath]


_RUNNERS = {
    "simulate": _run_simulate,
    "decay": _run_decay,
    "gramian": _run_gramian,
    "stabilize": _run_stabilize,
    "couple": _run_couple,
    "mix": _run_mix,
    "saturate": _run_saturate,
    "smooth": _run_smooth,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, seed=None) -> store.RunManifest:
    """Execute cfg's experiment, write its outputs and manifest, return the
    manifest.  seed/out_dir override the [run] section without editing it."""
    if seed is not None:
        sections = {name: dict(vals) for name, vals in cfg.sections.items()}
        sections["run"]["seed"] = int(seed)
        cfg = config_from_sections(sections)
    out = str(out_dir) if out_dir is not None else cfg.output_dir
    os.makedirs(out, exist_ok=True)
    manifest = store.RunManifest(
        kind=cfg.kind,
        config_digest=cfg.digest(),
        master_seed=cfg.master_seed,
        version=store.package_version(),
        started_at=store.utc_stamp(),
    )
    written = _RUNNERS[cfg.kind](cfg, out)
    for path in written:
        manifest.add_output(path)
    manifest.finished_at = store.utc_stamp()
    store.write_manifest(os.path.join(out, "manifest.json"), manifest)
    return manifest
