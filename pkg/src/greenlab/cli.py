"""Batch front end: ``greenlab run scenario.json``.

A scenario names one walk, a set of tasks and numerical settings. Each task
result is cached under a content hash of the canonical walk, the task
settings, the numerics and the package version, so an unchanged rerun only
copies artifacts out of the cache. Heavy numerical modules are imported
lazily for that reason.
"""
from __future__ import annotations

import argparse
import contextlib
import contextvars
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import CacheCorrupt, ConfigInvalid, GreenlabError, InvalidWalk

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_GRID = {"type": "array", "items": _NUM, "minItems": 1}

_FACTOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "id": {"type": "integer"},
        "kind": {"enum": ["lattice", "finite"]},
        "preset": {"enum": ["srw", "product_pm1", "lazy_product", "cyclic", "dihedral", "klein4"]},
        "rank": {"type": "integer", "minimum": 1, "maximum": 8},
        "q": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "order": {"type": "integer", "minimum": 2},
        "table": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "steps": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2}},
    },
    "oneOf": [{"required": ["kind", "steps"]}, {"required": ["preset"]}],
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "walk"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "walk": {
            "type": "object",
            "additionalProperties": False,
            "required": ["factors", "weights"],
            "properties": {
                "laziness": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
                "factors": {"type": "array", "items": _FACTOR, "minItems": 2},
            },
        },
        "tasks": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radius": {"type": "boolean"},
                "classify": {"type": "boolean"},
                "exponent": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["N"],
                    "properties": {"N": {"type": "integer"}},
                },
                "sweep": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["parameter", "grid"],
                    "properties": {
                        "parameter": {"type": "string"},
                        "grid": _GRID,
                        "exponentN": {"type": "integer"},
                    },
                },
                "strip_checks": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"rGrid": _GRID, "factors": {"type": "array", "items": {"type": "integer"}}},
                },
                "monitors": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"rGrid": _GRID, "k": {"enum": [1, 2, 3]}},
                },
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seriesOrder": {"type": "integer"},
                "precision": {"enum": ["double", "dd"]},
                "ladder": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kmin", "kmax", "points"],
                    "properties": {
                        "kmin": {"type": "number", "exclusiveMinimum": 0},
                        "kmax": {"type": "number"},
                        "points": {"type": "integer", "minimum": 12},
                    },
                },
                "fitWindow": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "output": {"type": "string"},
    },
}

DEFAULT_NUMERICS = {"seriesOrder": 1024, "precision": "double", "ladder": None, "fitWindow": [0.25, 1.0]}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _check_order(N, ptr: str) -> None:
    if not (256 <= N <= 65536) or N & (N - 1):
        raise ConfigInvalid(f"series order {N} must be a power of two in [256, 65536]", ptr)


def _check_grid(grid, ptr: str) -> None:
    for i in range(1, len(grid)):
        if not grid[i] > grid[i - 1]:
            raise ConfigInvalid("grid must be strictly increasing", f"{ptr}/{i}")


_BRACKET = re.compile(r"\[(\d+)\]")


def parse_parameter_path(path: str) -> list:
    """``weights[0]``, ``walk.weights[0]`` or ``/walk/weights/0`` to keys under ``walk``."""
    if path.startswith("/"):
        parts = [p.replace("~1", "/").replace("~0", "~") for p in path[1:].split("/")]
    else:
        parts = []
        for tok in _BRACKET.sub(r".\1", path).split("."):
            if tok:
                parts.append(tok)
    if parts and parts[0] == "walk":
        parts = parts[1:]
    return [int(p) if p.isdigit() else p for p in parts]


def _lookup(obj, parts):
    for p in parts:
        obj = obj[p]
    return obj


def validate_config(cfg: dict):
    """Schema and semantic checks; returns the parsed walk."""
    import jsonschema

    from .scenarios import walk_from_json

    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ConfigInvalid(err.message, _pointer(err.absolute_path))
    walk_obj = cfg["walk"]
    if len(walk_obj["weights"]) != len(walk_obj["factors"]):
        raise ConfigInvalid("one weight per factor is required", "/walk/weights")
    for i, f in enumerate(walk_obj["factors"]):
        if "preset" in f and "kind" in f:
            raise ConfigInvalid("give either a preset or an explicit kind", f"/walk/factors/{i}")
        if f.get("preset") == "lazy_product" and "q" not in f:
            raise ConfigInvalid("lazy_product needs q", f"/walk/factors/{i}")
        if f.get("preset") in ("cyclic", "dihedral") and "order" not in f:
            raise ConfigInvalid("finite presets need an order", f"/walk/factors/{i}")
        try:
            walk_from_json({"factors": [f, {"preset": "srw", "id": int(f.get("id", 1)) + 1}], "weights": [0.5, 0.5]})
        except (InvalidWalk, KeyError, ValueError, TypeError, IndexError) as exc:
            raise ConfigInvalid(f"malformed factor: {exc}", f"/walk/factors/{i}") from exc
    try:
        walk = walk_from_json(walk_obj)
    except InvalidWalk as exc:
        raise ConfigInvalid(str(exc), "/walk") from exc

    num = cfg.get("numerics", {})
    if "seriesOrder" in num:
        _check_order(num["seriesOrder"], "/numerics/seriesOrder")
    if "ladder" in num and not num["ladder"]["kmax"] > num["ladder"]["kmin"]:
        raise ConfigInvalid("kmax must exceed kmin", "/numerics/ladder/kmax")
    if "fitWindow" in num:
        lo, hi = num["fitWindow"]
        if not 0 < lo < hi <= 1:
            raise ConfigInvalid("fit window needs 0 < lo < hi <= 1", "/numerics/fitWindow")
    tasks = cfg.get("tasks", {"radius": True})
    if "exponent" in tasks:
        _check_order(tasks["exponent"]["N"], "/tasks/exponent/N")
    if "sweep" in tasks:
        sw = tasks["sweep"]
        _check_grid(sw["grid"], "/tasks/sweep/grid")
        if "exponentN" in sw:
            _check_order(sw["exponentN"], "/tasks/sweep/exponentN")
        parts = parse_parameter_path(sw["parameter"])
        try:
            current = _lookup(walk_obj, parts)
        except (KeyError, IndexError, TypeError):
            raise ConfigInvalid(f"parameter path {sw['parameter']!r} does not address a scenario field", "/tasks/sweep/parameter")
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise ConfigInvalid(f"parameter {sw['parameter']!r} is not numeric", "/tasks/sweep/parameter")
        if parts[0] == "weights" and not all(0 < v < 1 for v in sw["grid"]):
            raise ConfigInvalid("weight grid values must lie in (0, 1)", "/tasks/sweep/grid")
    for name in ("strip_checks", "monitors"):
        if name in tasks and "rGrid" in tasks[name]:
            _check_grid(tasks[name]["rGrid"], f"/tasks/{name}/rGrid")
            if not all(v > 0 for v in tasks[name]["rGrid"]):
                raise ConfigInvalid("r values must be positive", f"/tasks/{name}/rGrid/0")
    if "strip_checks" in tasks:
        for i, fid in enumerate(tasks["strip_checks"].get("factors", [])):
            if fid not in [f.id for f in walk.factors]:
                raise ConfigInvalid(f"unknown factor id {fid}", f"/tasks/strip_checks/factors/{i}")
    return walk


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _clean(v):
    """JSON-ready copy: non-finite floats become null, tuples become lists."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "to_json"):
        return _clean(v.to_json())
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    return str(v)


def _encode(v, indent: int, level: int, out: list) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, x) in enumerate(v.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _encode(x, indent, level + 1, out)
            out.append(",\n" if i < len(v) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(v, list):
        if not v:
            out.append("[]")
            return
        out.append("[\n")
        for i, x in enumerate(v):
            out.append(pad)
            _encode(x, indent, level + 1, out)
            out.append(",\n" if i < len(v) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(v, float):
        out.append(format(v, ".17g"))
    else:
        out.append(json.dumps(v))


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list = []
    _encode(_clean(obj), indent, 0, out)
    return "".join(out) + "\n"


def _canonical(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, str)):
        return str(x)
    x = float(x)
    return format(x, ".17g") if math.isfinite(x) else ""


def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_fmt(x) for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def cache_dir() -> Path:
    env = os.environ.get("GREENLAB_CACHE_DIR")
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "greenlab"


def cache_key(section: dict) -> str:
    payload = _canonical({"section": section, "version": __version__})
    return hashlib.sha256(payload.encode()).hexdigest()


class Cache:
    """Checksummed JSON entries written atomically, one file per key."""

    def __init__(self, root: Path | None = None, enabled: bool = True):
        self.root = Path(root) if root is not None else cache_dir()
        self.enabled = enabled

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def load(self, key: str):
        """Stored payload, ``None`` on a miss; raises CacheCorrupt on a bad entry."""
        if not self.enabled:
            return None
        p = self.path(key)
        if not p.exists():
            return None
        try:
            entry = json.loads(p.read_text())
            body = entry["payload"]
            digest = hashlib.sha256(body.encode()).hexdigest()
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CacheCorrupt(f"{p}: unreadable entry ({exc})") from exc
        if digest != entry.get("checksum"):
            raise CacheCorrupt(f"{p}: checksum mismatch")
        return json.loads(body)

    def store(self, key: str, payload) -> None:
        if not self.enabled:
            return
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        body = json.dumps(payload, sort_keys=True)
        entry = json.dumps({"checksum": hashlib.sha256(body.encode()).hexdigest(), "payload": body})
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(entry)
            os.replace(tmp, p)
        except BaseException:
            with contextlib.suppress(OSError):
                os.unlink(tmp)
            raise


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------
# Each task returns {"report": <json fragment>, "files": {name: text}}.

@contextlib.contextmanager
def _numerics_context(num: dict):
    from . import config

    with contextlib.ExitStack() as stack:
        stack.enter_context(config.precision(num["precision"]))
        if num.get("ladder"):
            lad = num["ladder"]
            stack.enter_context(config.ladder(lad["kmin"], lad["kmax"], lad["points"]))
        yield


def _task_radius(walk, opts, num):
    from .errors import CrossCheckFailed
    from .excursions import green_series, locate_radius, solve_excursions

    try:
        info = locate_radius(walk, cross_check=True)
        check = "pass"
    except CrossCheckFailed as exc:
        info = locate_radius(walk, cross_check=False)
        check = f"fail: {exc}"
    R = info.R
    frac = [0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1.0]
    systems = [solve_excursions(walk, r=R * f) for f in frac]
    ids = systems[0].factor_ids()
    header = ["r"] + [f"e_{i}" for i in ids] + [f"c_{i}" for i in ids] + [f"s_{i}" for i in ids] + ["G", "residual"]
    rows = [[s.r, *s.e, *s.c, *s.s, s.green, s.residual] for s in systems]
    g = green_series(walk, num["seriesOrder"])
    b = g.raw()
    srows = [[n, b[n], g.coeffs[n], g.err_bound] for n in range(b.size)]
    rep = {
        "R_mu": R,
        "boundaryType": info.boundary,
        "contact": list(info.contact),
        "radiusAccuracy": info.accuracy,
        "t_star": info.t_star,
        "coefficient_R": info.coefficient_R,
        "coefficient_uncertainty": info.coefficient_uncertainty,
        "G_at_R": systems[-1].green,
        "cross_check": check,
    }
    return {
        "report": rep,
        "files": {
            "excursions.csv": _csv_text(header, rows),
            "series.csv": _csv_text(["n", "p_n", "p_n_R_pow_n", "errBound"], srows),
        },
    }


def _classify_row(walk, exponent_N, window):
    from .classify import classify_walk
    from .errors import InconclusiveClassification

    try:
        rep = classify_walk(walk, exponent_N=exponent_N, exponent_window=window)
        status = "ok"
    except InconclusiveClassification as exc:
        rep, status = exc.report, "inconclusive"
    return rep, status


def _task_classify(walk, opts, num):
    exp = opts.get("exponentN")
    rep, status = _classify_row(walk, exp, tuple(num["fitWindow"]))
    out = rep.to_json()
    out["status"] = status
    return {"report": out, "files": {}}


def _task_exponent(walk, opts, num):
    from .classify import classify_walk, verify_exponent

    base = classify_walk(walk, cross_check=False, raise_inconclusive=False)
    chk = verify_exponent(walk, opts["N"], report=base, window=tuple(num["fitWindow"]))
    return {"report": chk.to_json(), "files": {}}


def _sweep_walk(walk_obj: dict, parts: list, value: float) -> dict:
    from .scenarios import set_parameter

    obj = set_parameter(walk_obj, parts, float(value))
    if parts[0] == "weights" and len(parts) == 2:
        i = parts[1]
        others = sum(x for j, x in enumerate(walk_obj["weights"]) if j != i)
        obj["weights"] = [float(value) if j == i else x * (1.0 - value) / others for j, x in enumerate(walk_obj["weights"])]
    return obj


def _trend(values: list) -> str:
    v = [x for x in values if x is not None and math.isfinite(x)]
    if len(v) < 2:
        return "undetermined"
    diffs = [b - a for a, b in zip(v, v[1:])]
    scale = max(1e-9, max(abs(x) for x in v) * 1e-9)
    if all(abs(d) <= scale for d in diffs):
        return "constant"
    if all(d <= scale for d in diffs):
        return "decreasing"
    if all(d >= -scale for d in diffs):
        return "increasing"
    return "non_monotone"


def _task_sweep(walk, opts, num, walk_obj, threads):
    from .scenarios import walk_from_json

    parts = parse_parameter_path(opts["parameter"])
    grid = [float(x) for x in opts["grid"]]
    exp = opts.get("exponentN")
    window = tuple(num["fitWindow"])
    ids = [f.id for f in walk.factors]

    def point(value):
        row = {"param": value}
        try:
            w = walk_from_json(_sweep_walk(walk_obj, parts, value))
            rep, status = _classify_row(w, exp, window)
        except GreenlabError as exc:
            row.update(status="error", error=f"{type(exc).__name__}: {exc}")
            return row
        row.update(
            status=status,
            R_mu=rep.R,
            boundaryType=rep.boundary_type,
            verdict=rep.verdict,
            d=rep.d,
            kappa_star=rep.kappa_star,
            kappa_empirical=rep.kappa,
            near_critical=rep.near_critical,
            margins={fid: rep.margins[fid]["margin"] for fid in ids},
            J2_plateau_bounded=(all(c["bounded"] for c in rep.diagnostics["J2_plateau"])
                                if "J2_plateau" in rep.diagnostics else None),
            flags=";".join(rep.flags),
        )
        return row

    rows = _parallel_map(point, grid, threads)
    header = ["param", "status", "R_mu", "boundaryType"] + [f"margin_{i}" for i in ids] + [
        "verdict", "d", "kappa_star", "kappa_empirical", "near_critical", "J2_plateau_bounded", "flags", "error"]
    table = []
    for r in rows:
        m = r.get("margins", {})
        table.append([r["param"], r["status"], r.get("R_mu"), r.get("boundaryType")] + [m.get(i) for i in ids] + [
            r.get("verdict"), r.get("d"), r.get("kappa_star"), r.get("kappa_empirical"), r.get("near_critical"),
            r.get("J2_plateau_bounded"), r.get("flags", ""), r.get("error", "")])
    boundaries = []
    ok = [r for r in rows if r["status"] != "error"]
    for a, b in zip(ok, ok[1:]):
        if a["verdict"] != b["verdict"]:
            boundaries.append({"between": [a["param"], b["param"]], "from": a["verdict"], "to": b["verdict"]})
    trends = {str(i): _trend([r["margins"][i] for r in ok]) for i in ids}
    verdicts = [r["verdict"] for r in ok]
    summary = {
        "parameter": opts["parameter"],
        "points": len(rows),
        "failed": len(rows) - len(ok),
        "convergent": sum(v == "convergent" for v in verdicts),
        "divergent": sum(v.startswith("divergent") for v in verdicts),
        "near_critical": sum(bool(r["near_critical"]) for r in ok),
        "phase_boundaries": boundaries,
        "verdict_constant": len(set(verdicts)) <= 1,
        "margin_trend": trends,
    }
    srow = [opts["parameter"], summary["points"], summary["failed"], summary["convergent"], summary["divergent"],
            summary["near_critical"], len(boundaries),
            ";".join(f"{b['between'][0]}..{b['between'][1]}:{b['from']}->{b['to']}" for b in boundaries)] + [trends[str(i)] for i in ids]
    sheader = ["parameter", "points", "failed", "convergent", "divergent", "near_critical", "boundaries", "boundary_detail"] + [
        f"margin_trend_{i}" for i in ids]
    return {
        "report": {"points": rows, "summary": summary},
        "files": {"sweep.csv": _csv_text(header, table), "sweep_summary.csv": _csv_text(sheader, [srow])},
    }


def _task_strip_checks(walk, opts, num):
    from .excursions import locate_radius
    from .strip import degeneracy_test, factor_kernel_family, rho_curve

    R = locate_radius(walk, cross_check=False).R
    grid = opts.get("rGrid") or [R * f for f in (0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99)]
    fids = opts.get("factors") or [f.id for f in walk.factors if f.kind == "lattice"]
    rows, rep = [], {}
    for fid in fids:
        entry: dict = {}
        try:
            fam, dfam = factor_kernel_family(walk, fid)
            pts = rho_curve(fam, [r for r in grid if r <= R], dfamily=dfam)
            entry["rho_curve"] = [{"r": p.r, "rho": p.rho, "rho_prime_eigen": p.rho_prime_eigen,
                                   "rho_prime_fd": p.rho_prime_fd} for p in pts]
            for p in pts:
                rows.append([fid, p.r, p.rho, p.rho_prime_eigen, p.rho_prime_fd, p.mismatch])
        except (GreenlabError, TypeError) as exc:
            entry["rho_curve_error"] = f"{type(exc).__name__}: {exc}"
        try:
            res = degeneracy_test(walk, fid)
            entry["degeneracy"] = {"degenerate": res.degenerate, "margin": res.margin, "uncertainty": res.uncertainty,
                                   "near_critical": res.near_critical, "rho_R": res.rho_R, "rank": res.rank,
                                   "flagged": res.flagged, "note": res.note}
        except (GreenlabError, TypeError) as exc:
            entry["degeneracy_error"] = f"{type(exc).__name__}: {exc}"
        rep[str(fid)] = entry
    header = ["factor", "r", "rho", "rho_prime_eigen", "rho_prime_fd", "mismatch"]
    return {"report": rep, "files": {"rho_curve.csv": _csv_text(header, rows)}}


def _task_monitors(walk, opts, num):
    from .classify import ij_ratio_monitor

    k = int(opts.get("k", 2))
    res = ij_ratio_monitor(walk, opts.get("rGrid"), k=k)
    ids = sorted(res.J)
    header = ["r", f"I{k}"] + [f"J{k}_{i}" for i in ids] + [f"I{k}_over_J{k}", "bound_ratio"]
    rows = []
    for n, r in enumerate(res.r):
        rows.append([r, res.I[n]] + [res.J[i][n] for i in ids] + [res.ratio[n], res.bound_ratio[n]])
    rep = {
        "ok": res.ok,
        "k": k,
        "subset_violations": res.subset_violations,
        "bound_growing": res.bound_growing,
        "bound_constant": res.bound_constant,
        "ratio_spread_last_decade": res.ratio_spread_last_decade,
    }
    return {"report": rep, "files": {"monitors.csv": _csv_text(header, rows)}}


_TASKS = {
    "radius": _task_radius,
    "classify": _task_classify,
    "exponent": _task_exponent,
    "sweep": _task_sweep,
    "strip_checks": _task_strip_checks,
    "monitors": _task_monitors,
}
_ORDER = ["radius", "classify", "exponent", "sweep", "strip_checks", "monitors"]


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(contextvars.copy_context().run, fn, x) for x in items]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}", "") from exc


def run_scenario(path, out=None, use_cache: bool = True, threads: int = 1, precision: str | None = None,
                 cache_root=None) -> dict:
    """Validate, run the requested tasks (through the cache) and write artifacts.

    Returns the report dictionary that was written to ``report.json``.
    """
    from .scenarios import walk_to_json

    cfg = load_config(path)
    walk = validate_config(cfg)
    num = dict(DEFAULT_NUMERICS)
    num.update(copy.deepcopy(cfg.get("numerics", {})))
    if precision is not None:
        num["precision"] = precision
    tasks = cfg.get("tasks", {"radius": True})
    out_dir = Path(out or cfg.get("output") or Path(path).with_suffix("").name + "_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    canon_walk = walk_to_json(walk)
    cache = Cache(cache_root, enabled=use_cache)

    report: dict = {"version": __version__, "scenario": cfg.get("name", Path(path).stem), "tasks": {}}
    files: dict = {}
    for name in _ORDER:
        opts = tasks.get(name)
        if opts is None or opts is False:
            continue
        opts = {} if opts is True else opts
        section = {"task": name, "options": opts, "walk": canon_walk, "numerics": num}
        if name == "sweep":
            section["walk_literal"] = cfg["walk"]
        key = cache_key(section)
        try:
            result = cache.load(key)
        except CacheCorrupt as exc:
            log.warning("%s; recomputing", exc)
            result = None
        if result is None:
            with _numerics_context(num):
                if name == "sweep":
                    result = _task_sweep(walk, opts, num, cfg["walk"], threads)
                else:
                    result = _TASKS[name](walk, opts, num)
            result = json.loads(_canonical(result))
            cache.store(key, result)
        report["tasks"][name] = result["report"]
        files.update(result["files"])
    if "radius" in report["tasks"]:
        report["R_mu"] = report["tasks"]["radius"]["R_mu"]
    elif "classify" in report["tasks"]:
        report["R_mu"] = report["tasks"]["classify"]["R_mu"]
    for name, text in files.items():
        (out_dir / name).write_text(text)
    (out_dir / "report.json").write_text(dumps(report))
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="greenlab", description="Green function laboratory for free products.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--no-cache", action="store_true")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--precision", choices=["double", "dd"], default=None)
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        report = run_scenario(args.scenario, out=args.out, use_cache=not args.no_cache,
                              threads=max(1, args.threads), precision=args.precision)
    except ConfigInvalid as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    except GreenlabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if "R_mu" in report:
        print(f"R_mu = {format(report['R_mu'], '.17g')}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
