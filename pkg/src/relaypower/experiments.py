"""Scenario files and the experiment drivers behind the command line tool.

A scenario is one YAML document selecting an experiment kind, a base
network, and the sweep for that kind. Validation is strict: unknown keys,
missing fields, and out-of-range values are rejected with file:line
anchors. Every run is reproducible from (scenario, seed); the shard count
only partitions work and never changes any output byte.
"""

from __future__ import annotations

import enum
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .model import ConstraintKind, CsitMode, NetworkConfig, sample_channel_batch
from .objectives import StatisticalCsitObjective, saddle_point_error
from .onoff import solve_onoff_batch
from .rng import STREAM_CHANNELS, STREAM_MISC, derive_rng, derive_seed
from .sim import Scheme, SimResult, effective_relay_count, run_monte_carlo
from .waterfill import solve_waterfill, solve_waterfill_batch


class ExperimentKind(enum.Enum):
    CONVERGENCE = "convergence"
    BLER_VS_SNR = "bler_vs_snr"
    BER_VS_DISTANCE = "ber_vs_distance"
    POWER_RATIO_VS_DISTANCE = "power_ratio_vs_distance"
    BER_VS_NETWORK_POWER = "ber_vs_network_power"
    ASYMPTOTIC_STUDY = "asymptotic_study"
    SADDLE_STUDY = "saddle_study"


# scenario scheme token -> (simulator scheme, CSIT mode, cap constraint)
SCHEME_NAMES = {
    "onoff": (Scheme.ONOFF, CsitMode.PERFECT, ConstraintKind.SHORT_TERM),
    "waterfill_partial": (Scheme.WATERFILL, CsitMode.PARTIAL, ConstraintKind.SHORT_TERM),
    "waterfill_statistical": (Scheme.WATERFILL, CsitMode.STATISTICAL, ConstraintKind.LONG_TERM),
    "maxpower": (Scheme.MAX_POWER, CsitMode.PERFECT, ConstraintKind.SHORT_TERM),
    "direct": (Scheme.DIRECT_LINK, CsitMode.PERFECT, ConstraintKind.SHORT_TERM),
}

MAX_SIM_RELAYS = 12  # exhaustive ML decoding bound, T = M


class SpecError(ValueError):
    """Scenario file rejected; the message carries a file:line anchor."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved scenario: every default filled in."""

    kind: ExperimentKind
    name: str
    seed: int
    M: int | None
    T: int | None
    p_s: float | None
    p_r: float | None
    N0: float
    gamma_h: tuple[float, ...] | float
    gamma_g: tuple[float, ...] | float
    schemes: tuple[str, ...] = ()
    snr_db: tuple[float, ...] = ()
    r_grid: tuple[float, ...] = ()
    m_grid: tuple[int, ...] = ()
    network_power_db: float | None = None
    frames: int | None = None
    trials: int | None = None
    instances: int | None = None
    eta: float | None = None
    iterations: int | None = None

    def gammas_for(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Length-m variance vectors: scalars broadcast, lists give prefixes."""
        return _gamma_vector(self.gamma_h, m), _gamma_vector(self.gamma_g, m)

    def resolved(self) -> dict:
        """Plain mapping of every field, defaults included, for provenance."""
        out = {"kind": self.kind.value, "name": self.name, "seed": self.seed}
        network = {"N0": self.N0}
        for key in ("M", "T", "p_s", "p_r"):
            value = getattr(self, key)
            if value is not None:
                network[key] = value
        for key in ("gamma_h", "gamma_g"):
            value = getattr(self, key)
            network[key] = list(value) if isinstance(value, tuple) else value
        out["network"] = network
        for key in ("schemes", "snr_db", "r_grid", "m_grid"):
            value = getattr(self, key)
            if value:
                out[key] = list(value)
        for key in ("network_power_db", "frames", "trials", "instances", "eta", "iterations"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _gamma_vector(spec_value, m: int) -> np.ndarray:
    if isinstance(spec_value, tuple):
        return np.asarray(spec_value[:m], dtype=np.float64)
    return np.full(m, float(spec_value))


# Per-kind field tables. True = required, False = optional.
_TOP_FIELDS: dict[ExperimentKind, dict[str, bool]] = {
    ExperimentKind.CONVERGENCE: {"m_grid": True, "trials": False, "iterations": False},
    ExperimentKind.BLER_VS_SNR: {"schemes": True, "snr_db": True, "frames": True},
    ExperimentKind.BER_VS_DISTANCE: {
        "schemes": True, "m_grid": True, "r_grid": True, "network_power_db": True, "frames": True,
    },
    ExperimentKind.POWER_RATIO_VS_DISTANCE: {
        "schemes": True, "m_grid": True, "r_grid": True, "network_power_db": True, "trials": False,
    },
    ExperimentKind.BER_VS_NETWORK_POWER: {
        "schemes": True, "m_grid": True, "snr_db": True, "frames": True,
    },
    ExperimentKind.ASYMPTOTIC_STUDY: {
        "m_grid": True, "r_grid": True, "network_power_db": True, "trials": False,
    },
    ExperimentKind.SADDLE_STUDY: {
        "m_grid": True, "trials": False, "instances": False, "eta": False,
    },
}

_DEFAULT_TRIALS = {
    ExperimentKind.CONVERGENCE: 10_000,
    ExperimentKind.POWER_RATIO_VS_DISTANCE: 10_000,
    ExperimentKind.ASYMPTOTIC_STUDY: 10_000,
    ExperimentKind.SADDLE_STUDY: 100_000,
}

# Kinds whose sweep supplies the per-point powers, so the network block
# must not fix p_s/p_r itself.
_SWEPT_POWER_KINDS = frozenset(
    {
        ExperimentKind.BLER_VS_SNR,
        ExperimentKind.BER_VS_DISTANCE,
        ExperimentKind.POWER_RATIO_VS_DISTANCE,
        ExperimentKind.BER_VS_NETWORK_POWER,
        ExperimentKind.ASYMPTOTIC_STUDY,
    }
)

# Kinds whose variances come from the swept relay distance.
_DISTANCE_KINDS = frozenset(
    {
        ExperimentKind.BER_VS_DISTANCE,
        ExperimentKind.POWER_RATIO_VS_DISTANCE,
        ExperimentKind.ASYMPTOTIC_STUDY,
    }
)


class _Validator:
    """Walks one parsed scenario document with line anchors for errors."""

    def __init__(self, path: str, data, lines: dict[str, int]):
        self.path = path
        self.data = data
        self.lines = lines

    def fail(self, key: str, message: str):
        line = self.lines.get(key, self.lines.get("<root>", 1))
        raise SpecError(f"{self.path}:{line}: {message}")

    def _scalar(self, mapping, prefix, key, kinds, message):
        value = mapping[key]
        if not isinstance(value, kinds) or isinstance(value, bool):
            self.fail(f"{prefix}{key}", f"{key} {message}")
        return value

    def integer(self, mapping, prefix, key, minimum=None, maximum=None):
        value = self._scalar(mapping, prefix, key, int, "must be an integer")
        if minimum is not None and value < minimum:
            self.fail(f"{prefix}{key}", f"{key} must be at least {minimum}")
        if maximum is not None and value > maximum:
            self.fail(f"{prefix}{key}", f"{key} must be at most {maximum}")
        return value

    def number(self, mapping, prefix, key, positive=False):
        value = self._scalar(mapping, prefix, key, (int, float), "must be a number")
        if positive and value <= 0:
            self.fail(f"{prefix}{key}", f"{key} must be positive")
        return float(value)

    def grid(self, key, *, integer=False, low=None, high=None):
        value = self.data[key]
        if not isinstance(value, list) or not value:
            self.fail(key, f"{key} must be a non-empty list")
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float) if not integer else int):
                kind = "integers" if integer else "numbers"
                self.fail(f"{key}[{i}]", f"{key} entries must be {kind}")
            if low is not None and v <= low:
                self.fail(f"{key}[{i}]", f"{key} entries must exceed {low}")
            if high is not None and v >= high:
                self.fail(f"{key}[{i}]", f"{key} entries must be below {high}")
            out.append(v if integer else float(v))
        if any(b <= a for a, b in zip(out, out[1:])):
            self.fail(key, f"{key} must be strictly increasing")
        return tuple(out)


def _collect_lines(node, prefix: str, out: dict[str, int]) -> None:
    out.setdefault(prefix or "<root>", node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = str(key_node.value)
            path = f"{prefix}.{key}" if prefix else key
            out[path] = key_node.start_mark.line + 1
            _collect_lines(value_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _collect_lines(item, f"{prefix}[{i}]", out)


def load_spec(path) -> ExperimentSpec:
    """Parse and validate one scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: cannot read scenario file ({exc})") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise SpecError(f"{path}:{line}: not valid YAML ({getattr(exc, 'problem', exc)})") from exc
    if node is None:
        raise SpecError(f"{path}:1: scenario file is empty")
    lines: dict[str, int] = {}
    _collect_lines(node, "", lines)
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise SpecError(f"{path}:1: scenario must be a mapping")
    return _validate(str(path), data, lines)


def _validate(path: str, data: dict, lines: dict[str, int]) -> ExperimentSpec:
    v = _Validator(path, data, lines)
    if "kind" not in data:
        v.fail("<root>", "missing required field 'kind'")
    kind_token = data["kind"]
    try:
        kind = ExperimentKind(kind_token)
    except ValueError:
        known = ", ".join(k.value for k in ExperimentKind)
        v.fail("kind", f"unknown kind {kind_token!r}; expected one of: {known}")

    allowed = {"kind", "name", "seed", "network"} | set(_TOP_FIELDS[kind])
    for key in data:
        if key not in allowed:
            v.fail(key, f"unknown field {key!r} for kind {kind.value!r}")
    for key, required in _TOP_FIELDS[kind].items():
        if required and key not in data:
            v.fail("<root>", f"missing required field {key!r} for kind {kind.value!r}")
    if "network" not in data:
        v.fail("<root>", "missing required field 'network'")
    network = data["network"]
    if not isinstance(network, dict):
        v.fail("network", "network must be a mapping")

    name = data.get("name", kind.value)
    if not isinstance(name, str) or not name or "/" in name:
        v.fail("name", "name must be a non-empty string without '/'")
    seed = 0
    if "seed" in data:
        seed = v.integer(data, "", "seed", minimum=0)

    sweeps_m = "m_grid" in _TOP_FIELDS[kind]
    m_grid: tuple[int, ...] = ()
    if sweeps_m:
        sim_kind = kind in (ExperimentKind.BER_VS_DISTANCE, ExperimentKind.BER_VS_NETWORK_POWER)
        m_grid = v.grid("m_grid", integer=True, low=0, high=MAX_SIM_RELAYS + 1 if sim_kind else None)

    # --- network block ---
    net_allowed = {"N0", "gamma_h", "gamma_g"}
    if kind is ExperimentKind.BLER_VS_SNR:
        net_allowed |= {"M", "T"}
    if kind not in _SWEPT_POWER_KINDS:
        net_allowed |= {"p_s", "p_r"}
    for key in network:
        if key in ("csit_mode", "constraint_kind"):
            v.fail(f"network.{key}", f"{key} is derived from each scheme; remove it")
        if key not in net_allowed:
            v.fail(f"network.{key}", f"unknown or disallowed network field {key!r} for kind {kind.value!r}")

    m = t = None
    if kind is ExperimentKind.BLER_VS_SNR:
        if "M" not in network:
            v.fail("network", "network.M is required for kind 'bler_vs_snr'")
        m = v.integer(network, "network.", "M", minimum=1, maximum=MAX_SIM_RELAYS)
        t = v.integer(network, "network.", "T", minimum=1, maximum=MAX_SIM_RELAYS) if "T" in network else m

    p_s = p_r = None
    if kind not in _SWEPT_POWER_KINDS:
        for key in ("p_s", "p_r"):
            if key not in network:
                v.fail("network", f"network.{key} is required for kind {kind.value!r}")
        p_s = v.number(network, "network.", "p_s", positive=True)
        p_r = v.number(network, "network.", "p_r", positive=True)

    n0 = v.number(network, "network.", "N0", positive=True) if "N0" in network else 1.0

    if kind in _DISTANCE_KINDS:
        for key in ("gamma_h", "gamma_g"):
            if key in network:
                v.fail(f"network.{key}", f"{key} is derived from the distance sweep; remove it")
        gamma_h = gamma_g = 1.0
    else:
        max_m = max(m_grid) if m_grid else m
        gamma_h = _validate_gamma(v, network, "gamma_h", max_m)
        gamma_g = _validate_gamma(v, network, "gamma_g", max_m)

    schemes: tuple[str, ...] = ()
    if "schemes" in _TOP_FIELDS[kind]:
        raw = data["schemes"]
        if not isinstance(raw, list) or not raw:
            v.fail("schemes", "schemes must be a non-empty list")
        seen = []
        for i, token in enumerate(raw):
            if token not in SCHEME_NAMES:
                known = ", ".join(sorted(SCHEME_NAMES))
                v.fail(f"schemes[{i}]", f"unknown scheme {token!r}; expected one of: {known}")
            if token in seen:
                v.fail(f"schemes[{i}]", f"duplicate scheme {token!r}")
            if token == "direct" and kind is ExperimentKind.POWER_RATIO_VS_DISTANCE:
                v.fail(f"schemes[{i}]", "the direct link has no relays to count; remove 'direct'")
            seen.append(token)
        schemes = tuple(seen)

    snr_db = v.grid("snr_db") if "snr_db" in _TOP_FIELDS[kind] else ()
    r_grid = v.grid("r_grid", low=0.0, high=1.0) if "r_grid" in _TOP_FIELDS[kind] else ()

    network_power_db = None
    if "network_power_db" in _TOP_FIELDS[kind]:
        network_power_db = v.number(data, "", "network_power_db")

    frames = None
    if "frames" in _TOP_FIELDS[kind]:
        frames = v.integer(data, "", "frames", minimum=1000)

    trials = None
    if "trials" in _TOP_FIELDS[kind]:
        trials = (
            v.integer(data, "", "trials", minimum=1)
            if "trials" in data
            else _DEFAULT_TRIALS[kind]
        )

    instances = None
    eta = None
    if kind is ExperimentKind.SADDLE_STUDY:
        instances = v.integer(data, "", "instances", minimum=1) if "instances" in data else 8
        eta = v.number(data, "", "eta", positive=True) if "eta" in data else 1.0

    iterations = None
    if kind is ExperimentKind.CONVERGENCE:
        iterations = v.integer(data, "", "iterations", minimum=1) if "iterations" in data else 10

    return ExperimentSpec(
        kind=kind,
        name=name,
        seed=seed,
        M=m,
        T=t,
        p_s=p_s,
        p_r=p_r,
        N0=n0,
        gamma_h=gamma_h,
        gamma_g=gamma_g,
        schemes=schemes,
        snr_db=snr_db,
        r_grid=r_grid,
        m_grid=m_grid,
        network_power_db=network_power_db,
        frames=frames,
        trials=trials,
        instances=instances,
        eta=eta,
        iterations=iterations,
    )


def _validate_gamma(v: _Validator, network: dict, key: str, max_m: int | None):
    if key not in network:
        return 1.0
    value = network[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value <= 0:
            v.fail(f"network.{key}", f"{key} must be positive")
        return float(value)
    if isinstance(value, list):
        if not value:
            v.fail(f"network.{key}", f"{key} list must be non-empty")
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float)) or item <= 0:
                v.fail(f"network.{key}[{i}]", f"{key} entries must be positive numbers")
        if max_m is not None and len(value) < max_m:
            v.fail(f"network.{key}", f"{key} lists {len(value)} values but the largest M is {max_m}")
        return tuple(float(x) for x in value)
    v.fail(f"network.{key}", f"{key} must be a number or a list of numbers")


def _scheme_config(spec: ExperimentSpec, token: str, m: int, t: int,
                   gamma_h: np.ndarray, gamma_g: np.ndarray,
                   p_s: float, p_r: float) -> tuple[NetworkConfig, Scheme]:
    scheme, mode, constraint = SCHEME_NAMES[token]
    cfg = NetworkConfig(
        M=m, T=t, p_s=p_s, p_r=p_r, N0=spec.N0,
        gamma_h=gamma_h, gamma_g=gamma_g,
        csit_mode=mode, constraint_kind=constraint,
    )
    return cfg, scheme


def _fmt(value) -> str:
    return f"{value:.17g}"


class _OutputSet:
    """Collects files written by one run so failures can clean up."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def write(self, name: str, header: str, rows: list[str]) -> Path:
        path = self.out_dir / name
        path.write_text("\n".join([header, *rows]) + "\n")
        self.paths.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.paths.append(path)
        return path

    def discard_all(self) -> None:
        for path in self.paths:
            path.unlink(missing_ok=True)


def run_experiment(spec: ExperimentSpec, out_dir, *, seed: int | None = None,
                   shards: int = 1, frames_override: int | None = None) -> list[Path]:
    """Run one scenario, writing CSVs plus a plot script into out_dir.

    Returns the written paths. On any failure every file written so far is
    removed, so an output directory never holds a partial run.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = spec.seed if seed is None else seed
    frames = spec.frames
    if frames_override is not None:
        if frames is None:
            raise SpecError(f"kind {spec.kind.value!r} takes no frame count; drop --frames-override")
        if frames_override < 1000:
            raise SpecError("--frames-override must be at least 1000")
        frames = frames_override
    if shards < 1:
        raise SpecError("--shards must be at least 1")

    runner = _RUNNERS[spec.kind]
    outputs = _OutputSet(out_dir)
    start = time.perf_counter()
    try:
        csv_paths = runner(spec, outputs, seed, shards, frames)
        script = emit_plot_script(csv_paths, spec.kind)
        outputs.write_text(f"{spec.name}_plot.py", script)
    except Exception:
        outputs.discard_all()
        raise
    elapsed = time.perf_counter() - start
    budget = frames if frames is not None else spec.trials
    print(f"kind={spec.kind.value} seed={seed} frames={budget} elapsed_s={elapsed:.2f}")
    return outputs.paths


def _run_convergence(spec, outputs, seed, shards, frames):
    header = "M,iteration,mean_normalized_objective"
    rows = []
    for mi, m in enumerate(spec.m_grid):
        gamma_h, gamma_g = spec.gammas_for(m)
        rng = derive_rng(seed, STREAM_CHANNELS, mi)
        scale_h = np.sqrt(gamma_h / 2.0)
        scale_g = np.sqrt(gamma_g / 2.0)
        h = scale_h * (rng.standard_normal((spec.trials, m)) + 1j * rng.standard_normal((spec.trials, m)))
        g = scale_g * (rng.standard_normal((spec.trials, m)) + 1j * rng.standard_normal((spec.trials, m)))
        caps = spec.p_r / (spec.p_s * np.abs(h) ** 2 + spec.N0)
        g2 = np.abs(g) ** 2
        alpha = np.abs(h) ** 2 * g2
        masks, _, _, hist = solve_onoff_batch(alpha, g2, caps, history=spec.iterations + 1)
        a_sum = np.sum(np.where(masks, alpha * caps, 0.0), axis=1)
        b_sum = np.sum(np.where(masks, g2 * caps, 0.0), axis=1)
        optimum = a_sum / (1.0 + b_sum)
        means = np.mean(hist / optimum[:, None], axis=0)
        for k in range(spec.iterations + 1):
            rows.append(f"{m},{k},{_fmt(means[k])}")
    return [outputs.write(f"{spec.name}.csv", header, rows)]


def _run_bler_vs_snr(spec, outputs, seed, shards, frames):
    paths = []
    gamma_h, gamma_g = spec.gammas_for(spec.M)
    for token in spec.schemes:
        cfg, scheme = _scheme_config(spec, token, spec.M, spec.T, gamma_h, gamma_g, 1.0, 1.0)
        result = run_monte_carlo(cfg, scheme, spec.snr_db, frames, seed, shards=shards)
        paths.append(outputs.write(f"{spec.name}_{token}.csv", SimResult.CSV_HEADER, result.to_csv_rows()))
    return paths


_SIM_POINT_HEADER = "scheme,M,r,frames,block_errors,bit_errors,bler,ber,stderr_bler"


def _run_ber_vs_distance(spec, outputs, seed, shards, frames):
    paths = []
    for token in spec.schemes:
        rows = []
        if token == "direct":
            # no relays: r and M do not enter, but keep the grid for overlay plots
            m = spec.m_grid[0]
            for ri, r in enumerate(spec.r_grid):
                cfg, scheme = _scheme_config(
                    spec, token, m, m, np.ones(m), np.ones(m), 1.0, 1.0
                )
                cell_seed = derive_seed(seed, STREAM_MISC, 0, ri)
                res = run_monte_carlo(
                    cfg, scheme, [spec.network_power_db], frames, cell_seed,
                    network_power_sweep=True, shards=shards,
                )
                rows.append(_sim_point_row(res, token, 0, r))
        else:
            for mi, m in enumerate(spec.m_grid):
                for ri, r in enumerate(spec.r_grid):
                    gamma_h = np.full(m, 1.0 / r**2)
                    gamma_g = np.full(m, 1.0 / (1.0 - r) ** 2)
                    cfg, scheme = _scheme_config(spec, token, m, m, gamma_h, gamma_g, 1.0, 1.0)
                    cell_seed = derive_seed(seed, STREAM_MISC, mi, ri)
                    res = run_monte_carlo(
                        cfg, scheme, [spec.network_power_db], frames, cell_seed,
                        network_power_sweep=True, shards=shards,
                    )
                    rows.append(_sim_point_row(res, token, m, r))
        paths.append(outputs.write(f"{spec.name}_{token}.csv", _SIM_POINT_HEADER, rows))
    return paths


def _sim_point_row(res: SimResult, token: str, m: int, r: float) -> str:
    return (
        f"{token},{m},{_fmt(r)},{int(res.frames[0])},{int(res.block_errors[0])},"
        f"{int(res.bit_errors[0])},{_fmt(res.bler[0])},{_fmt(res.ber[0])},{_fmt(res.stderr_bler[0])}"
    )


def _run_power_ratio(spec, outputs, seed, shards, frames):
    paths = []
    linear = spec.N0 * 10.0 ** (spec.network_power_db / 10.0)
    for token in spec.schemes:
        rows = []
        for mi, m in enumerate(spec.m_grid):
            p = linear / (m + 1)
            cfg, scheme = _scheme_config(spec, token, m, m, np.ones(m), np.ones(m), p, p)
            counts = effective_relay_count(
                cfg, scheme, spec.r_grid, spec.trials, derive_seed(seed, STREAM_MISC, mi)
            )
            for r, count in zip(spec.r_grid, counts):
                rows.append(f"{token},{m},{_fmt(r)},{spec.trials},{_fmt(count)}")
        paths.append(
            outputs.write(
                f"{spec.name}_{token}.csv", "scheme,M,r,trials,effective_relay_count", rows
            )
        )
    return paths


def _run_ber_vs_network_power(spec, outputs, seed, shards, frames):
    header = "scheme,M,snr_db,frames,block_errors,bit_errors,bler,ber,stderr_bler"
    paths = []
    for token in spec.schemes:
        rows = []
        if token == "direct":
            m = spec.m_grid[0]
            cfg, scheme = _scheme_config(spec, token, m, m, np.ones(m), np.ones(m), 1.0, 1.0)
            res = run_monte_carlo(
                cfg, scheme, spec.snr_db, frames, derive_seed(seed, STREAM_MISC, 0),
                network_power_sweep=True, shards=shards,
            )
            rows.extend(_network_power_row(res, token, 0, i) for i in range(len(spec.snr_db)))
        else:
            for mi, m in enumerate(spec.m_grid):
                gamma_h, gamma_g = spec.gammas_for(m)
                cfg, scheme = _scheme_config(spec, token, m, m, gamma_h, gamma_g, 1.0, 1.0)
                res = run_monte_carlo(
                    cfg, scheme, spec.snr_db, frames, derive_seed(seed, STREAM_MISC, mi),
                    network_power_sweep=True, shards=shards,
                )
                rows.extend(_network_power_row(res, token, m, i) for i in range(len(spec.snr_db)))
        paths.append(outputs.write(f"{spec.name}_{token}.csv", header, rows))
    return paths


def _network_power_row(res: SimResult, token: str, m: int, i: int) -> str:
    return (
        f"{token},{m},{_fmt(res.snr_db[i])},{int(res.frames[i])},{int(res.block_errors[i])},"
        f"{int(res.bit_errors[i])},{_fmt(res.bler[i])},{_fmt(res.ber[i])},{_fmt(res.stderr_bler[i])}"
    )


def _run_asymptotic(spec, outputs, seed, shards, frames):
    header = (
        "M,r,trials,count_onoff,count_waterfill_partial,count_waterfill_statistical,"
        "count_maxpower,equality_fraction,max_water_level_spread"
    )
    rows = []
    linear = spec.N0 * 10.0 ** (spec.network_power_db / 10.0)
    for mi, m in enumerate(spec.m_grid):
        p = linear / (m + 1)
        for ri, r in enumerate(spec.r_grid):
            gamma_h = np.full(m, 1.0 / r**2)
            gamma_g = np.full(m, 1.0 / (1.0 - r) ** 2)
            rng = derive_rng(seed, STREAM_CHANNELS, mi, ri)
            cfg = NetworkConfig(
                M=m, T=m, p_s=p, p_r=p, N0=spec.N0, gamma_h=gamma_h, gamma_g=gamma_g,
                csit_mode=CsitMode.PERFECT, constraint_kind=ConstraintKind.SHORT_TERM,
            )
            h, g = sample_channel_batch(cfg, spec.trials, rng)
            caps = p / (p * np.abs(h) ** 2 + spec.N0)
            g2 = np.abs(g) ** 2
            alpha = np.abs(h) ** 2 * g2
            masks, _, _, _ = solve_onoff_batch(alpha, g2, caps)
            p_on = np.where(masks, caps, 0.0)
            p_wf = solve_waterfill_batch(gamma_g, caps)
            count_on = float(np.mean(np.sum(p_on / caps, axis=1)))
            count_wf = float(np.mean(np.sum(p_wf / caps, axis=1)))
            equality = float(np.mean(np.all(p_wf == p_on, axis=1)))
            spread = _water_level_spread(p_wf, caps, gamma_g)
            caps_lt = p / (p * gamma_h + spec.N0)
            obj = StatisticalCsitObjective.from_variances(gamma_h, gamma_g, 1.0)
            p_st = solve_waterfill(obj, caps_lt).allocation.p
            count_st = float(np.sum(p_st / caps_lt))
            rows.append(
                f"{m},{_fmt(r)},{spec.trials},{_fmt(count_on)},{_fmt(count_wf)},"
                f"{_fmt(count_st)},{_fmt(float(m))},{_fmt(equality)},{_fmt(spread)}"
            )
    return [outputs.write(f"{spec.name}.csv", header, rows)]


def _water_level_spread(p_wf: np.ndarray, caps: np.ndarray, gamma_g: np.ndarray) -> float:
    """Worst spread of p_i*gamma_gi across uncapped relays over the batch."""
    levels = p_wf * gamma_g
    free = p_wf != caps
    hi = np.where(free, levels, -np.inf).max(axis=1)
    lo = np.where(free, levels, np.inf).min(axis=1)
    spread = hi - lo
    spread = spread[np.isfinite(spread)]
    return float(spread.max()) if spread.size else 0.0


def _run_saddle(spec, outputs, seed, shards, frames):
    header = "M,instances,trials,mean_mc_estimate,mean_bound,mean_rel_error,stderr"
    rows = []
    for mi, m in enumerate(spec.m_grid):
        gamma_h, gamma_g = spec.gammas_for(m)
        rel_errors = []
        variances = []
        mc_values = []
        bounds = []
        for j in range(spec.instances):
            rng = derive_rng(seed, STREAM_CHANNELS, mi, j)
            h = np.sqrt(gamma_h / 2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
            caps = spec.p_r / (spec.p_s * np.abs(h) ** 2 + spec.N0)
            comp = saddle_point_error(
                h, gamma_g, caps, spec.eta, spec.trials, derive_seed(seed, STREAM_MISC, mi, j)
            )
            rel_errors.append(comp.rel_error)
            variances.append(comp.rel_error_stderr**2)
            mc_values.append(comp.mc_estimate)
            bounds.append(comp.bound)
        stderr = float(np.sqrt(np.sum(variances)) / spec.instances)
        rows.append(
            f"{m},{spec.instances},{spec.trials},{_fmt(np.mean(mc_values))},"
            f"{_fmt(np.mean(bounds))},{_fmt(np.mean(rel_errors))},{_fmt(stderr)}"
        )
    return [outputs.write(f"{spec.name}.csv", header, rows)]


_RUNNERS = {
    ExperimentKind.CONVERGENCE: _run_convergence,
    ExperimentKind.BLER_VS_SNR: _run_bler_vs_snr,
    ExperimentKind.BER_VS_DISTANCE: _run_ber_vs_distance,
    ExperimentKind.POWER_RATIO_VS_DISTANCE: _run_power_ratio,
    ExperimentKind.BER_VS_NETWORK_POWER: _run_ber_vs_network_power,
    ExperimentKind.ASYMPTOTIC_STUDY: _run_asymptotic,
    ExperimentKind.SADDLE_STUDY: _run_saddle,
}

# kind -> (x column, y columns, log-scale y, grouping columns)
_PLOT_LAYOUT = {
    ExperimentKind.CONVERGENCE: ("iteration", ["mean_normalized_objective"], False, ["M"]),
    ExperimentKind.BLER_VS_SNR: ("snr_db", ["bler"], True, ["scheme"]),
    ExperimentKind.BER_VS_DISTANCE: ("r", ["ber"], True, ["scheme", "M"]),
    ExperimentKind.POWER_RATIO_VS_DISTANCE: ("r", ["effective_relay_count"], False, ["scheme", "M"]),
    ExperimentKind.BER_VS_NETWORK_POWER: ("snr_db", ["ber"], True, ["scheme", "M"]),
    ExperimentKind.ASYMPTOTIC_STUDY: (
        "r",
        ["count_onoff", "count_waterfill_partial", "equality_fraction"],
        False,
        ["M"],
    ),
    ExperimentKind.SADDLE_STUDY: ("M", ["mean_rel_error"], False, []),
}

_PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot {kind} results. Run from the directory holding the CSV files."""

import csv
from collections import defaultdict

import matplotlib.pyplot as plt

FILES = {files}
X = {x!r}
Y_COLUMNS = {y_columns}
GROUP = {group}

series = defaultdict(list)
for path in FILES:
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for column in Y_COLUMNS:
                label = ", ".join([f"{{g}}={{row[g]}}" for g in GROUP] + ([column] if len(Y_COLUMNS) > 1 else []))
                series[label or column].append((float(row[X]), float(row[column])))

fig, ax = plt.subplots(figsize=(7, 5))
for label in sorted(series):
    points = sorted(series[label])
    ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=label)
{logy}ax.set_xlabel(X)
ax.set_ylabel(", ".join(Y_COLUMNS))
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.savefig({png!r}, dpi=150, bbox_inches="tight")
print("wrote", {png!r})
'''


def emit_plot_script(csv_paths, kind: ExperimentKind) -> str:
    """Standalone matplotlib script text for the given result CSVs."""
    paths = [Path(p) for p in csv_paths]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError("missing result CSVs: " + ", ".join(missing))
    x, y_columns, logy, group = _PLOT_LAYOUT[kind]
    stem = os.path.commonprefix([p.stem for p in paths]).rstrip("_") or paths[0].stem
    return _PLOT_TEMPLATE.format(
        kind=kind.value,
        files=[p.name for p in paths],
        x=x,
        y_columns=y_columns,
        group=group,
        logy='ax.set_yscale("log")\n' if logy else "",
        png=f"{stem}.png",
    )
