"""Command-line front end: config-driven experiments, reports, baselines.

Exit codes: 0 when every verdict passes, 2 when an estimator verdict
fails, 1 on operational errors (bad config, missing baseline, ...).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError

from . import _rng, bmo, maps, metrics, pansu, qc
from .bmo import BallFamily
from .group import HPoint
from .measure import ball_volume_estimate
from .metrics import Ball

__version__ = "0.1.0"

KINDS = ("distortion", "bmo", "jn-tail", "transfer", "gotoh", "necessity", "roundness", "pansu", "ccdist")
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


# -- config schema ---------------------------------------------------------


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MapSpec(_Model):
    id: str
    params: dict[str, Any] = Field(default_factory=dict)


class FieldSpec(_Model):
    id: str
    params: dict[str, Any] = Field(default_factory=dict)


class FamilySpec(_Model):
    kind: Literal["lattice", "centered"] = "lattice"
    extent: PositiveFloat = 8.0
    per_axis: PositiveInt | None = None
    r_min: PositiveFloat = 2.0**-4
    r_max: PositiveFloat = 2.0**3
    ratio: float = Field(2.0, gt=1.0)
    center: list[float] | None = None
    radii: list[PositiveFloat] | None = None
    metric: Literal["koranyi", "cc"] = "koranyi"


class Budgets(_Model):
    samples: PositiveInt = 2000
    restarts: PositiveInt = 8
    refine_rounds: NonNegativeInt = 3
    segments: PositiveInt = 32
    pairs: PositiveInt = 4


class ExperimentConfig(_Model):
    kind: Literal[KINDS]  # type: ignore[valid-type]
    seed: int
    n: PositiveInt = 1
    map: MapSpec | None = None
    function: FieldSpec | None = None
    family: FamilySpec | None = None
    budgets: Budgets = Field(default_factory=Budgets)
    points: list[list[float]] | None = None
    radii: list[PositiveFloat] | None = None
    r: PositiveFloat = 1.0
    p: list[float] | None = None
    q: list[float] | None = None
    ball: dict[str, Any] | None = None
    threshold: PositiveFloat = 16.0
    increment: Literal["right", "left"] = "right"
    metric: Literal["koranyi", "cc"] = "koranyi"


class ConfigError(ValueError):
    pass


def _field_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"  {path}: {e['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if seed is not None:
        raw["seed"] = seed
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_field_errors(e)) from e


# -- canonical report encoding ---------------------------------------------


def _plain(obj):
    """Recursively convert to JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_report(text: str) -> dict:
    def fix(o):
        if isinstance(o, dict):
            return {k: fix(v) for k, v in o.items()}
        if isinstance(o, list):
            return [fix(v) for v in o]
        if o in ("inf", "-inf", "nan"):
            return float(o)
        return o

    return fix(json.loads(text))


def format_table(report: dict) -> str:
    rows = []

    def walk(prefix, o):
        if isinstance(o, dict):
            for k in sorted(o):
                walk(f"{prefix}.{k}" if prefix else k, o[k])
        elif isinstance(o, list) and o and all(isinstance(v, (dict, list)) for v in o):
            for i, v in enumerate(o):
                walk(f"{prefix}[{i}]", v)
        else:
            rows.append((prefix, json.dumps(o)))

    walk("", _plain(report))
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(w)}  {v}" for k, v in rows) + "\n"


# -- experiment dispatch ---------------------------------------------------


def _need(cfg: ExperimentConfig, name: str):
    v = getattr(cfg, name)
    if v is None:
        raise ConfigError(f"invalid config:\n  {name}: required for kind={cfg.kind}")
    return v


def _map(cfg):
    spec = _need(cfg, "map")
    try:
        return maps.make_map(spec.id, cfg.n, **spec.params)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config:\n  map: {e}") from e


def _field(cfg):
    spec = _need(cfg, "function")
    try:
        return bmo.make_field(spec.id, cfg.n, **spec.params)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config:\n  function: {e}") from e


def _family(cfg, default: FamilySpec | None = None) -> BallFamily:
    fs = cfg.family or default or FamilySpec()
    if fs.kind == "centered":
        if fs.radii is None:
            raise ConfigError("invalid config:\n  family.radii: required for kind=centered")
        c = HPoint.from_coords(fs.center) if fs.center is not None else HPoint.identity(cfg.n)
        return BallFamily.centered(c, fs.radii, fs.metric)
    return BallFamily.lattice(cfg.n, fs.extent, fs.per_axis, fs.r_min, fs.r_max, fs.ratio, fs.metric)


def _points(cfg) -> list[HPoint]:
    pts = cfg.points or [[0.0] * (2 * cfg.n + 1)]
    out = []
    for i, p in enumerate(pts):
        if len(p) != 2 * cfg.n + 1:
            raise ConfigError(f"invalid config:\n  points.{i}: expected {2 * cfg.n + 1} coordinates")
        out.append(HPoint.from_coords(p))
    return out


def _ball(cfg) -> Ball:
    b = cfg.ball or {}
    c = b.get("center")
    center = HPoint.from_coords(c) if c is not None else HPoint.identity(cfg.n)
    return Ball(center, float(b.get("radius", cfg.r)), b.get("metric", "koranyi"))


_ISOMETRY_LIKE = ("identity", "left-translation", "rotation", "conjugation", "dilation")


def _run_distortion(cfg):
    f = _map(cfg)
    radii = cfg.radii or [2.0**-k for k in range(2, 9)]
    prof = qc.qc_profile(f, _points(cfg), radii, cfg.budgets.samples, cfg.budgets.refine_rounds,
                         cfg.seed, cfg.threshold, cfg.metric)
    ok = True
    if f.expected_qc is True:
        ok = prof.verdict != "NOT-QC-consistent"
    elif f.expected_qc is False:
        ok = prof.verdict != "QC-consistent"
    return {"map": f.describe(), "profile": prof.to_dict()}, {"verdict": prof.verdict, "passed": ok}


def _run_bmo(cfg):
    u = _field(cfg)
    est = bmo.bmo_norm_estimate(u, _family(cfg), cfg.budgets.samples, cfg.seed, cfg.budgets.refine_rounds)
    expect_bmo = u.id in bmo.BMO_FIELDS
    ok = (est.verdict == "bounded") == expect_bmo
    if u.sup_abs is not None:
        ok = ok and est.value <= 2 * u.sup_abs + 4 * est.error
    return {"function": u.describe(), "norm": est.estimate()}, {"verdict": est.verdict, "passed": ok}


def _run_jn(cfg):
    u = _field(cfg)
    B = _ball(cfg)
    fam = _family(cfg)
    norm = bmo.bmo_norm_estimate(u, fam, cfg.budgets.samples, cfg.seed, cfg.budgets.refine_rounds)
    rep = bmo.jn_tail_fit(u, B, norm.value, samples=max(cfg.budgets.samples, 10_000), seed=cfg.seed)
    return ({"function": u.describe(), "ball": B.describe(), "norm": norm.estimate(), "fit": rep},
            {"verdict": "PASS" if rep.passed else "FAIL", "passed": rep.passed})


def _run_transfer(cfg):
    f, u = _map(cfg), _field(cfg)
    rep = qc.bmo_transfer_experiment(f, u, _family(cfg), cfg.budgets.samples, cfg.seed,
                                     refine_rounds=cfg.budgets.refine_rounds)
    ok = bool(np.isfinite(rep.ratio) and rep.ratio > 0)
    if f.id in _ISOMETRY_LIKE and rep.matched:
        ok = ok and 0.8 <= rep.ratio <= 1.25
    return {"map": f.describe(), "function": u.describe(), "transfer": rep}, {"verdict": "bounded" if ok else "FAIL",
                                                                             "passed": ok}


_GOTOH_FAMILY = FamilySpec(extent=2.0, per_axis=3, r_min=0.25, r_max=2.0)


def _run_gotoh(cfg):
    f = _map(cfg)
    if cfg.radii:
        x = _points(cfg)[0]
        ex = qc.gotoh_scale_experiment(f, x, cfg.radii, cfg.budgets.samples, cfg.seed)
        grows = all(ex["required_K_increasing"].values())
        ok = grows if f.expected_qc is False else True
        return {"map": f.describe(), "scale_experiment": ex}, {"verdict": "K-grows" if grows else "K-bounded",
                                                              "passed": ok}
    pairs = qc.random_ball_pairs(cfg.n, cfg.budgets.pairs, cfg.seed)
    reps = qc.gotoh_check(f, pairs, _family(cfg, _GOTOH_FAMILY), samples=cfg.budgets.samples, seed=cfg.seed)
    unsat = any(r.unsat for r in reps)
    return {"map": f.describe(), "pairs": reps}, {"verdict": "UNSAT-in-grid" if unsat else "SAT", "passed": not unsat}


def _run_necessity(cfg):
    f = _map(cfg)
    if f.hom is None:
        raise ConfigError("invalid config:\n  map: necessity needs a homogeneous homomorphism")
    nc = qc.necessity_construction(f.hom, cfg.r, max(cfg.budgets.samples, 1000), seed=cfg.seed)
    return {"map": f.describe(), "construction": nc}, {"verdict": "PASS" if nc.passed else "FAIL",
                                                      "passed": nc.passed}


def _run_roundness(cfg):
    f = _map(cfg)
    samples = max(cfg.budgets.samples, 10_000)
    if cfg.radii:
        prof = qc.roundness_profile(f, _points(cfg)[0], cfg.radii, samples, seed=cfg.seed)
        ok = True
        if f.expected_qc is not None:
            ok = (prof["verdict"] == "round") == f.expected_qc
        return {"map": f.describe(), "profile": prof}, {"verdict": prof["verdict"], "passed": ok}
    est = qc.roundness_ratio(f, cfg.r, samples, seed=cfg.seed)
    return ({"map": f.describe(), "roundness": est, "identity_rho0": qc.identity_roundness(cfg.n)},
            {"verdict": "measured", "passed": est.value > 0})


def _run_pansu(cfg):
    f = _map(cfg)
    x = _points(cfg)[0]
    est = pansu.pansu_differential_estimate(f, x, cfg.radii, increment=cfg.increment)
    ok = True
    if f.group_compatible:
        ok = est.verdict in ("exact", "differentiable")
    elif f.expected_qc is False:
        ok = est.verdict == "not-differentiable"
    return {"map": f.describe(), "point": x.coords, "pansu": est.estimate()}, {"verdict": est.verdict, "passed": ok}


def _run_ccdist(cfg):
    p = HPoint.from_coords(cfg.p) if cfg.p is not None else HPoint.identity(cfg.n)
    q = HPoint.from_coords(_need(cfg, "q"))
    res = metrics.cc_distance_estimate(p, q, cfg.budgets.segments, cfg.budgets.restarts, cfg.seed)
    return ({"p": p.coords, "q": q.coords, "cc_distance": res.estimate(),
             "koranyi_distance": metrics.koranyi_distance(p, q)},
            {"verdict": "converged" if res.converged else "not-converged", "passed": res.converged})


RUNNERS = {
    "distortion": _run_distortion,
    "bmo": _run_bmo,
    "jn-tail": _run_jn,
    "transfer": _run_transfer,
    "gotoh": _run_gotoh,
    "necessity": _run_necessity,
    "roundness": _run_roundness,
    "pansu": _run_pansu,
    "ccdist": _run_ccdist,
}


def run_config(cfg: ExperimentConfig, timing: bool = False) -> dict:
    t0 = time.perf_counter()
    results, verdict = RUNNERS[cfg.kind](cfg)
    report = {"version": __version__, "config": cfg.model_dump(mode="json"), "kind": cfg.kind,
              "results": results, "verdict": verdict}
    if timing:
        report["wall_clock_s"] = time.perf_counter() - t0
    return report


# -- regression baselines --------------------------------------------------


def _bl_c0():
    e = ball_volume_estimate(Ball(HPoint.identity(1), 1.0), 1_000_000, seed=0)
    return {"c0": (e.value, 4 * e.error)}


def _bl_rho0():
    e = qc.roundness_ratio(maps.identity(1), 1.0, 200_000, seed=0)
    return {"rho0": (e.value, 0.03 * e.value)}


def _bl_Ka():
    prof = qc.qc_profile(maps.anisotropic(2.0), [HPoint.from_coords([1.0, 0.0, 0.0])], [0.5, 0.05, 0.005], seed=0)
    return {"K_a": (prof.profiles[0].plateau, 1e-3)}


def _bl_bilip():
    e = metrics.bilipschitz_constants(pairs=32, seed=0, restarts=4)
    return {"bilip_c1": (e.extra["c1"], 0.02), "bilip_c2": (e.extra["c2"], 0.02)}


BASELINES = {"c0": _bl_c0, "rho0": _bl_rho0, "K_a": _bl_Ka, "bilip": _bl_bilip}
BASELINE_FILE = "regress.json"


def default_baseline_dir() -> Path:
    return Path(str(resources.files("heisenberg_qc") / "baselines"))


def compute_baselines(names=None) -> dict:
    out = {}
    for name in names or BASELINES:
        for k, (v, band) in BASELINES[name]().items():
            out[k] = {"value": float(v), "band": float(band), "group": name}
    return out


def regress(baseline_dir: Path, regenerate: bool = False, names=None) -> tuple[bool, dict]:
    path = Path(baseline_dir) / BASELINE_FILE
    if regenerate:
        frozen = compute_baselines(names)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_report(frozen))
        return True, {"regenerated": sorted(frozen), "path": str(path)}
    if not path.exists():
        raise FileNotFoundError(f"missing baseline {path}; run 'regress --regenerate'")
    frozen = loads_report(path.read_text())
    groups = sorted({v["group"] for v in frozen.values()} & set(names or BASELINES))
    fresh = compute_baselines(groups)
    rows, failed = {}, []
    for k in sorted(frozen):
        if frozen[k]["group"] not in groups:
            continue
        ref, band = frozen[k]["value"], frozen[k]["band"]
        got = fresh[k]["value"]
        ok = abs(got - ref) <= band
        rows[k] = {"frozen": ref, "fresh": got, "band": band, "passed": ok}
        if not ok:
            failed.append(k)
    return not failed, {"fields": rows, "failed": failed}


# -- entry point -----------------------------------------------------------


def _emit(report: dict, fmt: str, out: str | None) -> None:
    text = dumps_report(report) if fmt == "json" else format_table(report)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heisenberg-qc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "table"), default="json")

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--timing", action="store_true", help="add wall-clock time (breaks byte-identity)")
    common(r)
    g = sub.add_parser("regress", help="compare frozen constants with a fresh computation")
    g.add_argument("--baselines", help="baseline directory (default: packaged)")
    g.add_argument("--only", nargs="+", choices=sorted(BASELINES))
    g.add_argument("--regenerate", action="store_true")
    common(g)
    for name in ("list-maps", "list-functions"):
        common(sub.add_parser(name))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _rng.set_threads(args.threads)
        if args.cmd == "list-maps":
            _emit({"maps": maps.CATALOG_DOC}, args.format, args.out)
            return EXIT_PASS
        if args.cmd == "list-functions":
            _emit({"functions": bmo.FIELDS_DOC}, args.format, args.out)
            return EXIT_PASS
        if args.cmd == "regress":
            d = Path(args.baselines) if args.baselines else default_baseline_dir()
            ok, rep = regress(d, args.regenerate, args.only)
            _emit({"regress": rep, "passed": ok}, args.format, args.out)
            return EXIT_PASS if ok else EXIT_FAIL
        cfg = load_config(args.config, args.seed)
        report = run_config(cfg, args.timing)
        _emit(report, args.format, args.out)
        return EXIT_PASS if report["verdict"]["passed"] else EXIT_FAIL
    except (ConfigError, FileNotFoundError, ValueError, TypeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
