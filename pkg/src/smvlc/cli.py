"""
Configuration-driven experiment runner.

A config is one JSON document.  Physical quantities carry their unit in the
field name (``pt_dbm``, ``sigma_sq_dbm``, ``pd_area_cm2``, ``room_dims_m``).
Anything left out falls back to the indoor reference setup: a 5 m x 4 m x 3 m
room, 1 cm^2 detector at desk height 0.8 m, 35 degree semi-angle, 72 degree
field of view and a -104 dBm noise floor.

Usage::

    smvlc run config.json --out result.csv --threads 4
    smvlc validate config.json
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from .cabm import ConfigurationError, build_plan, split_exponent
from .capacity import (mi_high_snr_limit, mi_low_snr_limit, mi_lower_bound,
                       mi_lower_bound_precoded, mutual_information)
from .geometry import ChannelGains, GeometryError, RoomScenario, ceiling_grid, channel_vector
from .link import NoiseModel, db_to_linear, dbm_to_watts, reference_gains, snr_power
from .precode import SolverConfig, optimize_precoding
from .simulate import ber_monte_carlo, ber_plane_sweep

KINDS = ("ber-sweep", "ber-plane", "mi-sweep", "mi-vs-varsigma", "precode-compare")
SWEEP_VARIABLE = {
    "ber-sweep": "pt_dbm",
    "ber-plane": "pd_grid",
    "mi-sweep": "snr_db",
    "mi-vs-varsigma": "varsigma",
    "precode-compare": "snr_db",
}
HEADERS = {
    "ber-sweep": ["pt_dbm", "ber_adaptive", "ber_fixed", "ci_adaptive", "ci_fixed"],
    "ber-plane": ["x_m", "y_m", "ber", "ci"],
    "mi-sweep": ["snr_db", "mi_exact", "mi_lower", "mi_hi_limit", "mi_lo_limit"],
    "mi-vs-varsigma": ["varsigma", "mi_exact", "mi_lower", "mi_hi_limit", "mi_lo_limit"],
    "precode-compare": ["snr_db", "mi_exact", "mi_lower", "mi_hi_limit", "mi_lo_limit", "mi_lower_precoded"],
}

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration; carries every diagnostic found."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class ScenarioConfig:
    """Either a room layout or an explicit gain vector (``gains``)."""

    num_leds: int | None = None
    led_positions_m: tuple | None = None
    led_spacing_m: float = 1.0
    pd_position_m: tuple = (2.5, 2.0, 0.8)
    room_dims_m: tuple = (5.0, 4.0, 3.0)
    pd_area_cm2: float = 1.0
    semi_angle_deg: float = 35.0
    fov_deg: float = 72.0
    gains: tuple | None = None

    @property
    def size(self) -> int | None:
        if self.gains is not None:
            return len(self.gains)
        if self.led_positions_m is not None:
            return len(self.led_positions_m)
        return self.num_leds

    def room(self) -> RoomScenario:
        leds = self.led_positions_m
        if leds is None:
            leds = ceiling_grid(self.num_leds, self.room_dims_m, self.led_spacing_m)
        return RoomScenario(tuple(tuple(p) for p in leds), tuple(self.pd_position_m), tuple(self.room_dims_m),
                            self.pd_area_cm2 * 1e-4, self.semi_angle_deg, self.fov_deg,
                            allow_single=len(leds) == 1)

    def channel(self) -> ChannelGains:
        if self.gains is not None:
            return ChannelGains(self.gains, allow_single=len(self.gains) == 1)
        return channel_vector(self.room())


@dataclass(frozen=True)
class SweepConfig:
    """A linear range ``[start, stop]`` with ``points`` samples, or a PD grid."""

    variable: str
    start: float | None = None
    stop: float | None = None
    points: int | None = None
    x_m: tuple | None = None
    y_m: tuple | None = None

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(*self.x_m[:2], int(self.x_m[2])), np.linspace(*self.y_m[:2], int(self.y_m[2]))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    scenario: ScenarioConfig
    bits: int
    sweep: SweepConfig
    sigma_sq_dbm: float | None = -104.0
    varsigma: float = 0.0
    adaptive: bool = True
    pt_dbm: float | None = None
    snr_db: float | None = None
    modulation_depth: float = 0.5
    n_bits: int = 1_000_000
    max_errors: int | None = 200
    mi_method: str = "quadrature"
    solver: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel.from_dbm(self.sigma_sq_dbm, self.varsigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"] = {"sigma_sq_dbm": d.pop("sigma_sq_dbm"), "varsigma": d.pop("varsigma")}
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _tuplify(obj):
    if isinstance(obj, list):
        return tuple(_tuplify(v) for v in obj)
    return obj


_SCENARIO_KEYS = {f for f in ScenarioConfig.__dataclass_fields__}
_SWEEP_KEYS = {f for f in SweepConfig.__dataclass_fields__}
_TOP_KEYS = (set(ExperimentConfig.__dataclass_fields__) - {"sigma_sq_dbm", "varsigma"}) | {"noise"}


def _parse_block(raw: Any, keys: set[str], where: str, diags: list[str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        diags.append(f"{where}: expected an object")
        return {}
    for k in sorted(set(raw) - keys):
        diags.append(f"{where}.{k}: unknown field")
    return {k: _tuplify(v) for k, v in raw.items() if k in keys}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_fields(cfg: ExperimentConfig, diags: list[str], has_sweep: bool = True) -> None:
    sc, sw = cfg.scenario, cfg.sweep
    M = sc.size
    if M is None:
        diags.append("scenario: give num_leds, led_positions_m or gains")
    elif M < 1:
        diags.append("scenario: need at least one LED")
    elif M == 1 and cfg.kind != "ber-plane":
        diags.append(f"scenario: a single LED is only supported by kind 'ber-plane', not {cfg.kind!r}")
    if sc.gains is not None and cfg.kind == "ber-plane":
        diags.append("scenario.gains: ber-plane needs a room layout, not a fixed gain vector")
    if sc.gains is not None and not all(_is_number(g) and g >= 0 for g in sc.gains):
        diags.append("scenario.gains: gains must be finite and non-negative")
    if cfg.sigma_sq_dbm is None:
        diags.append("noise.sigma_sq_dbm: missing noise floor")
    elif not _is_number(cfg.sigma_sq_dbm):
        diags.append("noise.sigma_sq_dbm: must be a number")
    if not (_is_number(cfg.varsigma) and cfg.varsigma >= 0):
        diags.append("noise.varsigma: must be a non-negative number")
    if cfg.bits is None:
        diags.append("bits: missing")
    elif not isinstance(cfg.bits, int) or isinstance(cfg.bits, bool) or cfg.bits < 1:
        diags.append("bits: must be a positive integer")
    elif M is not None and M >= 2:
        p, _ = split_exponent(M)
        if cfg.bits - p < 1:
            diags.append(f"bits: q = K - p must be >= 1 (K={cfg.bits}, M={M}, p={p}); need K >= {p + 1}")
    if not 0 < cfg.modulation_depth <= 1:
        diags.append("modulation_depth: must lie in (0, 1]")
    want = SWEEP_VARIABLE.get(cfg.kind)
    if not has_sweep:
        diags.append(f"sweep: missing; kind {cfg.kind!r} sweeps {want!r}")
    elif sw.variable != want:
        diags.append(f"sweep.variable: kind {cfg.kind!r} sweeps {want!r}, got {sw.variable!r}")
    if not has_sweep:
        pass
    elif sw.variable == "pd_grid":
        for name in ("x_m", "y_m"):
            r = getattr(sw, name)
            if r is None or len(r) != 3 or not all(_is_number(v) for v in r) or int(r[2]) < 1:
                diags.append(f"sweep.{name}: expected [start, stop, points] with points >= 1")
    else:
        if not (_is_number(sw.start) and _is_number(sw.stop)):
            diags.append("sweep: start and stop must be numbers")
        if not isinstance(sw.points, int) or sw.points < 1:
            diags.append("sweep.points: must be a positive integer")
        if cfg.kind == "mi-vs-varsigma" and _is_number(sw.start) and min(sw.start, sw.stop) < 0:
            diags.append("sweep: varsigma must be non-negative")
    if cfg.kind == "ber-plane" and not _is_number(cfg.pt_dbm):
        diags.append("pt_dbm: ber-plane needs a fixed transmit power")
    if cfg.kind == "mi-vs-varsigma" and not _is_number(cfg.snr_db):
        diags.append("snr_db: mi-vs-varsigma needs a fixed SNR")
    if cfg.kind.startswith("ber"):
        if not isinstance(cfg.n_bits, int) or cfg.n_bits < 1:
            diags.append("n_bits: must be a positive integer")
        if cfg.max_errors is not None and (not isinstance(cfg.max_errors, int) or cfg.max_errors < 1):
            diags.append("max_errors: must be a positive integer or null")
    if cfg.mi_method not in ("quadrature", "monte-carlo"):
        diags.append("mi_method: use 'quadrature' or 'monte-carlo'")
    try:
        SolverConfig(**cfg.solver)
    except (TypeError, ValueError) as exc:
        diags.append(f"solver: {exc}")
    if M is not None and M >= 1 and sc.gains is None:
        try:
            sc.room()
        except (GeometryError, TypeError, ValueError) as exc:
            diags.append(f"scenario: {exc}")


def parse_config(source: str | dict) -> ExperimentConfig:
    """Build a config from JSON text or a dict; raises ConfigError with all diagnostics."""
    diags: list[str] = []
    if isinstance(source, str):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ConfigError(["config: expected a JSON object"])
    for k in sorted(set(raw) - _TOP_KEYS):
        diags.append(f"{k}: unknown field")
    kind = raw.get("kind")
    if kind not in KINDS:
        diags.append(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
        raise ConfigError(diags)
    noise = _parse_block(raw.get("noise"), {"sigma_sq_dbm", "varsigma"}, "noise", diags)
    if "noise" in raw and "sigma_sq_dbm" not in noise:
        noise["sigma_sq_dbm"] = None
    sweep = _parse_block(raw.get("sweep"), _SWEEP_KEYS, "sweep", diags)
    sweep.setdefault("variable", SWEEP_VARIABLE[kind])
    top = {k: _tuplify(v) for k, v in raw.items() if k in _TOP_KEYS - {"noise", "scenario", "sweep"}}
    if "solver" in top and not isinstance(top["solver"], dict):
        diags.append("solver: expected an object")
        top.pop("solver")
    try:
        cfg = ExperimentConfig(scenario=ScenarioConfig(**_parse_block(raw.get("scenario"), _SCENARIO_KEYS,
                                                                          "scenario", diags)),
                               sweep=SweepConfig(**sweep), **{"bits": None, **top}, **noise)
    except TypeError as exc:
        raise ConfigError(diags + [str(exc)]) from None
    _check_fields(cfg, diags, "sweep" in raw)
    if diags:
        raise ConfigError(diags)
    return cfg


def validate(source: str | dict) -> list[str]:
    """All constraint violations of a config; empty when it is runnable."""
    try:
        parse_config(source)
    except ConfigError as exc:
        return exc.diagnostics
    return []


def default_config(kind: str = "mi-sweep", num_leds: int = 4, bits: int = 5) -> dict:
    """A runnable config for ``kind`` on a ceiling grid with reference optics."""
    sweeps = {
        "ber-sweep": {"variable": "pt_dbm", "start": 20.0, "stop": 40.0, "points": 11},
        "ber-plane": {"variable": "pd_grid", "x_m": [0.5, 4.5, 9], "y_m": [0.0, 4.0, 9]},
        "mi-sweep": {"variable": "snr_db", "start": -10.0, "stop": 50.0, "points": 61},
        "mi-vs-varsigma": {"variable": "varsigma", "start": 0.0, "stop": 100.0, "points": 11},
        "precode-compare": {"variable": "snr_db", "start": -10.0, "stop": 50.0, "points": 20},
    }
    cfg = {"kind": kind, "bits": bits, "scenario": {"num_leds": num_leds},
           "noise": {"sigma_sq_dbm": -104.0, "varsigma": 0.0}, "sweep": sweeps[kind], "seed": 0}
    if kind == "ber-plane":
        cfg["pt_dbm"] = 30.0
    if kind == "mi-vs-varsigma":
        cfg["snr_db"] = 20.0
    return cfg


# ---------------------------------------------------------------------------
# Experiments


def _fmt(v: float) -> str:
    return f"{float(v):.9g}"


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _point_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _ber_sweep(cfg: ExperimentConfig, threads: int) -> list[list[float]]:
    gains = cfg.scenario.channel()
    noise = cfg.noise
    n_bits = cfg.n_bits - cfg.n_bits % cfg.bits or cfg.bits
    xs = cfg.sweep.values()
    seeds = _point_seeds(cfg.seed, len(xs))

    def point(j):
        power = dbm_to_watts(xs[j])
        row = [xs[j]]
        res = []
        for adaptive in (True, False):
            plan = build_plan(gains, cfg.bits, noise.varsigma, adaptive, power, cfg.modulation_depth)
            res.append(ber_monte_carlo(plan, gains, noise, n_bits, seeds[j], cfg.max_errors))
        return row + [r.ber for r in res] + [r.ci95_halfwidth for r in res]

    return _map(point, range(len(xs)), threads)


def _ber_plane(cfg: ExperimentConfig, threads: int) -> list[list[float]]:
    room = cfg.scenario.room()
    xs, ys = cfg.sweep.grid()
    n_bits = cfg.n_bits - cfg.n_bits % cfg.bits or cfg.bits
    seeds = _point_seeds(cfg.seed, len(ys))

    def line(iy):
        res = ber_plane_sweep(room, xs, [ys[iy]], cfg.bits, dbm_to_watts(cfg.pt_dbm), cfg.noise, n_bits,
                              seeds[iy], cfg.adaptive, cfg.modulation_depth, cfg.max_errors)[0]
        return [[x, ys[iy], r.ber, r.ci95_halfwidth] for x, r in zip(xs, res)]

    return [row for rows in _map(line, range(len(ys)), threads) for row in rows]


def _mi_row(cfg: ExperimentConfig, gains, noise: NoiseModel, snr_db: float, seed: int):
    power = snr_power(db_to_linear(snr_db), noise)
    plan = build_plan(gains, cfg.bits, noise.varsigma, cfg.adaptive, power, cfg.modulation_depth)
    mi = mutual_information(plan, gains, noise, cfg.mi_method, rng=seed)
    lb = mi_lower_bound(plan, gains, noise)
    return plan, [mi.value, lb.value, mi_high_snr_limit(plan), mi_low_snr_limit(plan, gains, noise.varsigma)]


def _mi_sweep(cfg: ExperimentConfig, threads: int) -> list[list[float]]:
    noise = cfg.noise
    gains = reference_gains(cfg.scenario.channel(), noise)
    xs = cfg.sweep.values()
    seeds = _point_seeds(cfg.seed, len(xs))
    return _map(lambda j: [xs[j]] + _mi_row(cfg, gains, noise, xs[j], seeds[j])[1], range(len(xs)), threads)


def _mi_vs_varsigma(cfg: ExperimentConfig, threads: int) -> list[list[float]]:
    xs = cfg.sweep.values()
    seeds = _point_seeds(cfg.seed, len(xs))

    def point(j):
        noise = NoiseModel.from_dbm(cfg.sigma_sq_dbm, xs[j])
        gains = reference_gains(cfg.scenario.channel(), noise)
        return [xs[j]] + _mi_row(cfg, gains, noise, cfg.snr_db, seeds[j])[1]

    return _map(point, range(len(xs)), threads)


def _precode_compare(cfg: ExperimentConfig, threads: int) -> list[list[float]]:
    noise = cfg.noise
    gains = reference_gains(cfg.scenario.channel(), noise)
    xs = cfg.sweep.values()
    seeds = _point_seeds(cfg.seed, len(xs))
    solver = SolverConfig(**cfg.solver)
    shared = {}
    if noise.varsigma_sq == 0:
        # Without input-dependent noise the distance ratio is scale-free, so
        # one solve at the first point serves the whole sweep.
        plan, _ = _mi_row(cfg, gains, noise, xs[0], seeds[0])
        shared["w"] = optimize_precoding(plan, gains, noise, solver)

    def point(j):
        plan, row = _mi_row(cfg, gains, noise, xs[j], seeds[j])
        w = shared.get("w") or optimize_precoding(plan, gains, noise, solver)
        return [xs[j]] + row + [mi_lower_bound_precoded(plan, gains, noise, w.w).value]

    return _map(point, range(len(xs)), threads)


_RUNNERS = {
    "ber-sweep": _ber_sweep,
    "ber-plane": _ber_plane,
    "mi-sweep": _mi_sweep,
    "mi-vs-varsigma": _mi_vs_varsigma,
    "precode-compare": _precode_compare,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> str:
    """Run an experiment and return its CSV text (rows in sweep order)."""
    rows = _RUNNERS[cfg.kind](cfg, max(1, int(threads)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADERS[cfg.kind])
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Command line


def _load(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smvlc", description="Spatial-modulation VLC experiment runner")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config and write CSV")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="CSV path (default: config 'output' or stdout)")
    r.add_argument("--threads", type=int, default=1, help="sweep points evaluated in parallel")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = _load(args.config)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"{args.config}: {d}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    try:
        out = run(cfg, args.threads)
    except (ConfigurationError, GeometryError) as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    path = args.out or cfg.output
    if not path:
        sys.stdout.write(out)
        return EXIT_OK
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    except OSError as exc:
        print(f"error: cannot write {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
