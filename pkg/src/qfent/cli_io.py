"""Command-line surface: JSON config parsing/validation, run manifests,
and the ``validate`` self-test.

Configs are JSON with a versioned schema.  Validation is strict — unknown
keys are errors and every violation is reported with its JSON path — and
every effective parameter (defaults included) is materialized into the run
manifest, so a run is reproducible from its manifest alone: the manifest
embeds ``effective_config`` and is itself accepted back via ``--config``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 partial
grid (more than 1% of cells failed; partial outputs are still written).

Reproducibility policy: no environment variable is consulted except the
optional ``QFENT_CACHE_DIR`` override for relative cache paths; every
physics parameter must arrive via config or flags.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    ModelConsistencyError,
    NumericalError,
    PartialGridError,
    QfentError,
    QuadratureAccuracyError,
)
from .kernels import (
    DEFAULT_REL_TOL,
    Divergent,
    KernelCache,
    Unbounded,
    equilateral_params,
    ground_state_energy,
    pair_params,
    r_alpha,
    single_params,
)
from .sweep import (
    CONE_EPSILON,
    DEFAULT_R_EDGE,
    MapConfig,
    extract_cone,
    linear_axis,
    log_axis,
    run_bipartite_map,
    run_slice,
    run_tripartite_map,
)

__all__ = ["RunConfig", "parse_config", "run", "main", "MODES", "SCHEMA_VERSION"]

MODES = ("bipartite-map", "tripartite-map", "slice", "cone", "regularity", "validate")
SCHEMA_VERSION = 1

_FORMATS = ("csv", "csv+ppm")


# ---------------------------------------------------------------------------
# strict JSON validation with path-qualified errors
# ---------------------------------------------------------------------------


def _bad(path: str, msg: str) -> ConfigError:
    return ConfigError(f"{path}: {msg}")


def _as_object(val, path: str) -> dict:
    if not isinstance(val, dict):
        raise _bad(path, f"expected an object, got {type(val).__name__}")
    return val


def _no_unknown(d: dict, allowed, path: str) -> None:
    for key in d:
        if key not in allowed:
            raise _bad(f"{path}.{key}", "unknown key")


def _as_number(val, path: str, *, lo=None, hi=None) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise _bad(path, f"expected a number, got {type(val).__name__}")
    x = float(val)
    if not math.isfinite(x):
        raise _bad(path, "must be finite")
    if lo is not None and x < lo:
        raise _bad(path, f"must be ≥ {lo}, got {x}")
    if hi is not None and x > hi:
        raise _bad(path, f"must be ≤ {hi}, got {x}")
    return x


def _as_int(val, path: str, *, lo=None, hi=None) -> int:
    if isinstance(val, bool) or not isinstance(val, int):
        raise _bad(path, f"expected an integer, got {type(val).__name__}")
    if lo is not None and val < lo:
        raise _bad(path, f"must be ≥ {lo}, got {val}")
    if hi is not None and val > hi:
        raise _bad(path, f"must be ≤ {hi}, got {val}")
    return val


def _as_bool(val, path: str) -> bool:
    if not isinstance(val, bool):
        raise _bad(path, f"expected a boolean, got {type(val).__name__}")
    return val


def _as_str(val, path: str, *, choices=None) -> str:
    if not isinstance(val, str):
        raise _bad(path, f"expected a string, got {type(val).__name__}")
    if choices is not None and val not in choices:
        raise _bad(path, f"must be one of {', '.join(choices)}; got {val!r}")
    return val


def _parse_model(raw, path: str) -> dict:
    d = _as_object(raw, path)
    _no_unknown(d, ("n", "m_tilde", "lambda_tilde", "delta_tilde"), path)
    for req in ("n", "m_tilde", "lambda_tilde"):
        if req not in d:
            raise _bad(f"{path}.{req}", "required key is missing")
    n = _as_int(d["n"], f"{path}.n")
    if not 2 <= n <= 5:
        raise _bad(f"{path}.n", f"unsupported dimension n={n}")
    return {
        "n": n,
        "m_tilde": _as_number(d["m_tilde"], f"{path}.m_tilde", lo=0.0),
        "lambda_tilde": _as_number(d["lambda_tilde"], f"{path}.lambda_tilde", lo=0.0),
        "delta_tilde": _as_number(d.get("delta_tilde", 0.0), f"{path}.delta_tilde"),
    }


def _parse_axis(raw, path: str, defaults: dict, *, min_floor: float) -> dict:
    d = _as_object(raw, path)
    _no_unknown(d, ("min", "max", "points", "scale"), path)
    out = {
        "min": _as_number(d.get("min", defaults["min"]), f"{path}.min", lo=min_floor),
        "max": _as_number(d.get("max", defaults["max"]), f"{path}.max"),
        "points": _as_int(d.get("points", defaults["points"]), f"{path}.points", lo=1, hi=100_000),
        "scale": _as_str(d.get("scale", defaults["scale"]), f"{path}.scale", choices=("log", "linear")),
    }
    if out["points"] > 1 and out["max"] <= out["min"]:
        raise _bad(f"{path}.max", f"must exceed min={out['min']}, got {out['max']}")
    if out["scale"] == "log" and out["min"] <= 0.0:
        raise _bad(f"{path}.min", "log-spaced axis needs min > 0")
    return out


_T_DEFAULTS = {"min": 1.0, "max": 1000.0, "points": 50, "scale": "log"}
_L_DEFAULTS = {"min": 4.0, "max": 40.0, "points": 50, "scale": "linear"}


def _parse_axes(raw, path: str, mode: str) -> dict:
    d = _as_object(raw if raw is not None else {}, path)
    _no_unknown(d, ("t", "L"), path)
    axes = {"t": _parse_axis(d.get("t", {}), f"{path}.t", _T_DEFAULTS, min_floor=0.0)}
    rawL = d.get("L", 10.0 if mode == "slice" else {})
    if mode == "slice":
        if isinstance(rawL, dict):
            spec = _parse_axis(rawL, f"{path}.L", _L_DEFAULTS, min_floor=0.0)
            if spec["points"] != 1:
                raise _bad(f"{path}.L.points", "slice mode needs a single L value")
            axes["L"] = {"value": spec["min"]}
        else:
            axes["L"] = {"value": _as_number(rawL, f"{path}.L", lo=0.0)}
        if axes["L"]["value"] <= 0.0:
            raise _bad(f"{path}.L", "detector separation must be positive")
    else:
        axes["L"] = _parse_axis(rawL, f"{path}.L", _L_DEFAULTS, min_floor=0.0)
        if axes["L"]["min"] <= 0.0:
            raise _bad(f"{path}.L.min", "detector separation must be positive")
    return axes


_TOL_DEFAULTS = {
    "quad_rel_tol": DEFAULT_REL_TOL,
    "neg_zero_threshold": 1e-9,
    "pair_zero_threshold": 1e-9,
    "ghz_threshold": 1e-8,
    "cone_epsilon": CONE_EPSILON,
    "r_edge": DEFAULT_R_EDGE,
}


def _parse_tolerances(raw, path: str) -> dict:
    d = _as_object(raw if raw is not None else {}, path)
    _no_unknown(d, tuple(_TOL_DEFAULTS), path)
    out = {}
    for key, dflt in _TOL_DEFAULTS.items():
        if key == "r_edge":
            out[key] = _as_number(d.get(key, dflt), f"{path}.{key}", lo=0.0, hi=10.0)
        elif key == "quad_rel_tol":
            # same range the kernel layer accepts, rejected early with a path
            out[key] = _as_number(d.get(key, dflt), f"{path}.{key}", lo=1e-12, hi=1e-4)
        else:
            out[key] = _as_number(d.get(key, dflt), f"{path}.{key}", lo=0.0, hi=1e-2)
            if out[key] <= 0.0:
                raise _bad(f"{path}.{key}", "must be positive")
    return out


def _parse_output(raw, path: str, mode: str) -> dict:
    d = _as_object(raw if raw is not None else {}, path)
    _no_unknown(d, ("dir", "basename", "format"), path)
    return {
        "dir": _as_str(d.get("dir", "."), f"{path}.dir"),
        "basename": _as_str(d.get("basename", mode), f"{path}.basename"),
        "format": _as_str(d.get("format", "csv"), f"{path}.format", choices=_FORMATS),
    }


def _parse_cache(raw, path: str) -> dict:
    d = _as_object(raw if raw is not None else {}, path)
    _no_unknown(d, ("path", "enabled"), path)
    p = d.get("path", None)
    if p is not None:
        p = _as_str(p, f"{path}.path")
    return {"path": p, "enabled": _as_bool(d.get("enabled", True), f"{path}.enabled")}


def _parse_threads(raw, path: str):
    if raw is None or raw == "auto":
        return "auto"
    return _as_int(raw, path, lo=1, hi=4096)


def _parse_regularity(raw, path: str, n_model: int) -> dict:
    d = _as_object(raw if raw is not None else {}, path)
    _no_unknown(d, ("alphas", "sign_vector", "geometry", "separation"), path)
    alphas = d.get("alphas", [1, 2])
    if not isinstance(alphas, list) or not alphas:
        raise _bad(f"{path}.alphas", "expected a non-empty list of integers")
    alphas = [_as_int(a, f"{path}.alphas[{i}]", lo=1, hi=2) for i, a in enumerate(alphas)]
    geometry = _as_str(
        d.get("geometry", "single"), f"{path}.geometry",
        choices=("single", "pair", "equilateral"),
    )
    n_det = {"single": 1, "pair": 2, "equilateral": 3}[geometry]
    sep = d.get("separation", None)
    if geometry == "single":
        if sep is not None:
            raise _bad(f"{path}.separation", "not meaningful for a single detector")
    else:
        if sep is None:
            raise _bad(f"{path}.separation", f"required for geometry {geometry!r}")
        sep = _as_number(sep, f"{path}.separation")
        if sep <= 0.0:
            raise _bad(f"{path}.separation", "must be positive")
    sv = d.get("sign_vector", None)
    if sv is None:
        sv = [1] * n_det
    else:
        if not isinstance(sv, list) or len(sv) != n_det:
            raise _bad(f"{path}.sign_vector", f"expected a list of {n_det} entries ±1")
        sv = [_as_int(s, f"{path}.sign_vector[{i}]") for i, s in enumerate(sv)]
        if any(s not in (-1, 1) for s in sv):
            raise _bad(f"{path}.sign_vector", "entries must be ±1")
    return {"alphas": alphas, "sign_vector": sv, "geometry": geometry, "separation": sep}


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run description with every default materialized."""

    mode: str
    schema_version: int
    model: dict
    axes: dict
    tolerances: dict
    output: dict
    cache: dict
    threads: object  # "auto" or int
    regularity: Optional[dict] = None

    def effective(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "model": dict(self.model),
            "axes": {k: dict(v) for k, v in self.axes.items()},
            "tolerances": dict(self.tolerances),
            "output": dict(self.output),
            "cache": dict(self.cache),
            "threads": self.threads,
        }
        if self.regularity is not None:
            doc["regularity"] = dict(self.regularity)
        return doc

    def n_threads(self) -> Optional[int]:
        return None if self.threads == "auto" else int(self.threads)

    def map_config(self, kind: str) -> MapConfig:
        ax = self.axes["t"]
        build = log_axis if ax["scale"] == "log" else linear_axis
        t_axis = build(ax["min"], ax["max"], ax["points"])
        axl = self.axes["L"]
        if "value" in axl:
            L_axis = (axl["value"],)
        else:
            buildL = log_axis if axl["scale"] == "log" else linear_axis
            L_axis = buildL(axl["min"], axl["max"], axl["points"])
        return MapConfig(
            kind=kind,
            n=self.model["n"],
            m_tilde=self.model["m_tilde"],
            lambda_tilde=self.model["lambda_tilde"],
            delta_tilde=self.model["delta_tilde"],
            t_axis=t_axis,
            L_axis=L_axis,
            rel_tol=self.tolerances["quad_rel_tol"],
            threads=self.n_threads(),
            ghz_threshold=self.tolerances["ghz_threshold"],
            pair_zero_threshold=self.tolerances["pair_zero_threshold"],
        )


def parse_config(text: str, *, mode: Optional[str] = None) -> RunConfig:
    """Validate a JSON config document (or a run manifest) into a RunConfig.

    ``mode`` is the CLI subcommand; a ``mode`` key inside the document must
    agree with it.  A manifest produced by ``run`` is accepted directly —
    its embedded ``effective_config`` is used.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    doc = _as_object(doc, "$")
    if "effective_config" in doc:
        doc = _as_object(doc["effective_config"], "$.effective_config")
        return parse_config(json.dumps(doc), mode=mode)

    allowed = (
        "schema_version", "mode", "model", "axes", "tolerances",
        "output", "cache", "threads", "regularity",
    )
    _no_unknown(doc, allowed, "$")
    version = _as_int(doc.get("schema_version", SCHEMA_VERSION), "$.schema_version")
    if version != SCHEMA_VERSION:
        raise _bad("$.schema_version", f"unsupported schema version {version}")

    doc_mode = doc.get("mode")
    if doc_mode is not None:
        doc_mode = _as_str(doc_mode, "$.mode", choices=MODES)
        if mode is not None and doc_mode != mode:
            raise _bad("$.mode", f"config says {doc_mode!r} but the subcommand is {mode!r}")
    eff_mode = mode or doc_mode
    if eff_mode is None:
        raise _bad("$.mode", "required key is missing (or pass a subcommand)")

    if "model" not in doc:
        raise _bad("$.model", "required key is missing")
    model = _parse_model(doc["model"], "$.model")
    axes = _parse_axes(doc.get("axes"), "$.axes", eff_mode)
    tolerances = _parse_tolerances(doc.get("tolerances"), "$.tolerances")
    output = _parse_output(doc.get("output"), "$.output", eff_mode)
    cache = _parse_cache(doc.get("cache"), "$.cache")
    threads = _parse_threads(doc.get("threads"), "$.threads")
    regularity = None
    if eff_mode == "regularity":
        regularity = _parse_regularity(doc.get("regularity"), "$.regularity", model["n"])
    elif "regularity" in doc:
        raise _bad("$.regularity", f"only meaningful in regularity mode, not {eff_mode!r}")

    return RunConfig(
        mode=eff_mode,
        schema_version=version,
        model=model,
        axes=axes,
        tolerances=tolerances,
        output=output,
        cache=cache,
        threads=threads,
        regularity=regularity,
    )


# ---------------------------------------------------------------------------
# manifests and output plumbing
# ---------------------------------------------------------------------------


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _ensure_outdir(cfg: RunConfig) -> str:
    out = cfg.output["dir"]
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.unlink(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {out!r} is not writable: {exc}") from exc
    return out


def _cache_for(cfg: RunConfig) -> tuple:
    """(cache instance, resolved save path or None)."""
    spec = cfg.cache
    cache = KernelCache()
    if not spec["enabled"]:
        return cache, None
    path = spec["path"]
    if path is None:
        return cache, None
    if not os.path.isabs(path):
        path = os.path.join(os.environ.get("QFENT_CACHE_DIR", "."), path)
    if os.path.exists(path):
        try:
            cache = KernelCache.load(path)
        except Exception as exc:
            raise ConfigError(f"cannot load kernel cache {path!r}: {exc}") from exc
    return cache, path


def _write(path: str, data) -> None:
    if isinstance(data, bytes):
        with open(path, "wb") as fh:
            fh.write(data)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(data)


def _manifest(cfg, *, wall, cache, cache_path, outputs, results, failures=()):
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "qfent", "version": __version__},
        "mode": cfg.mode,
        "effective_config": cfg.effective(),
        "started_utc": _utc_now(),
        "wall_clock_seconds": wall,
        "cache": {**cache.stats(), "path": cache_path},
        "outputs": list(outputs),
        "results": results,
        "failures": list(failures)[:20],
    }


def _finish(cfg, outdir, pieces, manifest) -> list:
    written = []
    for name, data in pieces:
        path = os.path.join(outdir, name)
        _write(path, data)
        written.append(path)
    manifest["outputs"] = written
    mpath = os.path.join(outdir, cfg.output["basename"] + ".manifest.json")
    _write(mpath, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mpath)
    return written


def _grid_pieces(cfg, grid) -> list:
    base = cfg.output["basename"]
    pieces = [(base + ".csv", grid.to_csv())]
    if cfg.output["format"] == "csv+ppm":
        pieces.append((base + ".ppm", grid.to_ppm()))
    return pieces


def _grid_results(grid) -> dict:
    vals = grid.value_array()
    finite = vals[np.isfinite(vals)]
    return {
        "cells_total": grid.meta["cells_total"],
        "cells_failed": grid.meta["cells_failed"],
        "sum_cell_evals": grid.meta["sum_cell_evals"],
        "new_evals": grid.meta["new_evals"],
        "value_min": float(finite.min()) if finite.size else None,
        "value_max": float(finite.max()) if finite.size else None,
    }


# ---------------------------------------------------------------------------
# mode runners
# ---------------------------------------------------------------------------


def _run_map_mode(cfg: RunConfig) -> int:
    outdir = _ensure_outdir(cfg)
    cache, cache_path = _cache_for(cfg)
    kind = "tripartite" if cfg.mode == "tripartite-map" else "bipartite"
    runner = run_tripartite_map if kind == "tripartite" else run_bipartite_map
    t0 = time.perf_counter()
    try:
        grid = runner(cfg.map_config(kind), cache=cache)
    except PartialGridError as exc:
        wall = time.perf_counter() - t0
        if cache_path:
            cache.save(cache_path)
        grid = exc.grid
        man = _manifest(
            cfg, wall=wall, cache=cache, cache_path=cache_path,
            outputs=[], results=_grid_results(grid),
            failures=[f"({c.t_tilde:g}, {c.L_tilde:g}): {c.error}" for c in grid.failures()],
        )
        man["error"] = str(exc)
        _finish(cfg, outdir, _grid_pieces(cfg, grid), man)
        raise
    wall = time.perf_counter() - t0
    if cache_path:
        cache.save(cache_path)
    failures = [f"({c.t_tilde:g}, {c.L_tilde:g}): {c.error}" for c in grid.failures()]
    man = _manifest(
        cfg, wall=wall, cache=cache, cache_path=cache_path,
        outputs=[], results=_grid_results(grid), failures=failures,
    )
    written = _finish(cfg, outdir, _grid_pieces(cfg, grid), man)
    print(f"{cfg.mode}: wrote {', '.join(written)} in {wall:.2f}s")
    return 0


def _run_slice_mode(cfg: RunConfig) -> int:
    outdir = _ensure_outdir(cfg)
    cache, cache_path = _cache_for(cfg)
    t0 = time.perf_counter()
    sl = run_slice(cfg.map_config("bipartite"), cache=cache)
    wall = time.perf_counter() - t0
    if cache_path:
        cache.save(cache_path)
    grid = sl.grid
    results = _grid_results(grid)
    results.update({"L_over_sigma": sl.L_tilde, "max_value": sl.max_value, "t_at_max": sl.t_at_max})
    man = _manifest(
        cfg, wall=wall, cache=cache, cache_path=cache_path,
        outputs=[], results=results,
        failures=[f"({c.t_tilde:g}, {c.L_tilde:g}): {c.error}" for c in grid.failures()],
    )
    written = _finish(cfg, outdir, _grid_pieces(cfg, grid), man)
    print(f"slice: max {sl.max_value:.6g} at t={sl.t_at_max:.6g}; wrote {', '.join(written)}")
    return 0


def _run_cone_mode(cfg: RunConfig) -> int:
    outdir = _ensure_outdir(cfg)
    cache, cache_path = _cache_for(cfg)
    t0 = time.perf_counter()
    grid = run_bipartite_map(cfg.map_config("bipartite"), cache=cache)
    contour = extract_cone(
        grid,
        cfg.tolerances["cone_epsilon"],
        cache=cache,
        r_edge=cfg.tolerances["r_edge"],
    )
    wall = time.perf_counter() - t0
    if cache_path:
        cache.save(cache_path)
    base = cfg.output["basename"]
    pieces = _grid_pieces(cfg, grid)
    pieces.append((base + ".cone.csv", contour.to_csv()))
    results = _grid_results(grid)
    results.update(
        {
            "cone_epsilon": contour.epsilon,
            "r_edge": contour.r_edge,
            "lightcone_ref": "t = L - 2*r_edge",
            "points": len(contour.polyline),
            "non_crossing": list(contour.non_crossing),
            "refined": contour.refined,
        }
    )
    man = _manifest(
        cfg, wall=wall, cache=cache, cache_path=cache_path,
        outputs=[], results=results,
        failures=[f"({c.t_tilde:g}, {c.L_tilde:g}): {c.error}" for c in grid.failures()],
    )
    written = _finish(cfg, outdir, pieces, man)
    print(
        f"cone: {len(contour.polyline)} crossing columns, "
        f"{len(contour.non_crossing)} without; wrote {', '.join(written)}"
    )
    return 0


def _regularity_params(cfg: RunConfig):
    m = cfg.model
    reg = cfg.regularity
    lam, dlt = m["lambda_tilde"], m["delta_tilde"]
    if reg["geometry"] == "single":
        return single_params(m["n"], m["m_tilde"], lambda_tilde=lam, delta_tilde=dlt)
    if reg["geometry"] == "pair":
        return pair_params(
            m["n"], m["m_tilde"], reg["separation"],
            lambda_tildes=(lam, lam), delta_tildes=(dlt, dlt),
        )
    return equilateral_params(
        m["n"], m["m_tilde"], reg["separation"],
        lambda_tildes=(lam, lam, lam), delta_tildes=(dlt, dlt, dlt),
    )


def _ir_note(n: int, m_tilde: float, alpha: int) -> str:
    finite = m_tilde > 0.0 or n > alpha + 1
    if finite:
        reason = f"m_tilde = {m_tilde:g} > 0" if m_tilde > 0.0 else f"n = {n} > {alpha + 1}"
        return f"finite ({reason})"
    return (
        f"infrared-divergent: the integrand scales like u^(n-2-{alpha}) near "
        f"u = 0, so finiteness needs m_tilde > 0 or n > {alpha + 1}; "
        f"here m_tilde = {m_tilde:g} and n = {n}"
    )


def _run_regularity_mode(cfg: RunConfig) -> int:
    outdir = _ensure_outdir(cfg)
    cache, cache_path = _cache_for(cfg)
    p = _regularity_params(cfg)
    reg = cfg.regularity
    sv = reg["sign_vector"]
    rt = cfg.tolerances["quad_rel_tol"]
    t0 = time.perf_counter()
    rows = []
    for alpha in reg["alphas"]:
        val = r_alpha(alpha, sv, p, rel_tol=rt, cache=cache)
        note = _ir_note(cfg.model["n"], cfg.model["m_tilde"], alpha)
        rows.append(
            {
                "alpha": alpha,
                "sign_vector": sv,
                "value": None if val is Divergent else val,
                "divergent": val is Divergent,
                "note": note,
            }
        )
    e0 = ground_state_energy(sv, p, rel_tol=rt, cache=cache)
    energy = {
        "sign_vector": sv,
        "value": None if e0 is Unbounded else e0,
        "unbounded": e0 is Unbounded,
    }
    wall = time.perf_counter() - t0
    if cache_path:
        cache.save(cache_path)

    lines = []
    sv_str = "(" + ", ".join(f"{s:+d}" for s in sv) + ")"
    for row in rows:
        shown = "Divergent" if row["divergent"] else "%.17g" % row["value"]
        lines.append(f"R_{row['alpha']}[s={sv_str}] = {shown}  [{row['note']}]")
    shown = "Unbounded" if energy["unbounded"] else "%.17g" % energy["value"]
    lines.append(f"ground_state_energy[s={sv_str}] = {shown}")
    text = "\n".join(lines)
    print(text)

    base = cfg.output["basename"]
    payload = json.dumps(
        {"rows": rows, "ground_state_energy": energy}, indent=2, sort_keys=True
    ) + "\n"
    man = _manifest(
        cfg, wall=wall, cache=cache, cache_path=cache_path,
        outputs=[], results={"rows": rows, "ground_state_energy": energy},
    )
    _finish(cfg, outdir, [(base + ".json", payload), (base + ".txt", text + "\n")], man)
    return 0


def _run_validate_mode(cfg: Optional[RunConfig]) -> int:
    from .validate import run_validation  # local import: keeps CLI startup light

    checks = run_validation()
    width = max(len(c.name) for c in checks)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark}  {c.name:<{width}}  {c.detail}")
    n_bad = sum(1 for c in checks if not c.passed)
    print(f"{len(checks) - n_bad}/{len(checks)} checks passed")
    if n_bad:
        raise NumericalError(f"{n_bad} validation check(s) failed")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------


def _apply_flag_overrides(cfg: RunConfig, args) -> RunConfig:
    output = dict(cfg.output)
    cache = dict(cfg.cache)
    tolerances = dict(cfg.tolerances)
    threads = cfg.threads
    if args.out is not None:
        output["dir"] = args.out
    if args.format is not None:
        output["format"] = args.format
    if args.threads is not None:
        threads = _parse_threads(
            args.threads if args.threads == "auto" else _flag_int(args.threads),
            "--threads",
        )
    if args.cache is not None:
        if args.cache == "off":
            cache = {"path": None, "enabled": False}
        else:
            cache = {"path": args.cache, "enabled": True}
    if args.rel_tol is not None:
        tolerances["quad_rel_tol"] = _as_number(args.rel_tol, "--rel-tol", lo=1e-12, hi=1e-4)
    return RunConfig(
        mode=cfg.mode,
        schema_version=cfg.schema_version,
        model=cfg.model,
        axes=cfg.axes,
        tolerances=tolerances,
        output=output,
        cache=cache,
        threads=threads,
        regularity=cfg.regularity,
    )


def _flag_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"--threads: expected an integer or 'auto', got {text!r}") from exc


def _flag_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"--rel-tol: expected a number, got {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfent",
        description="Exact entanglement maps for gapless detector pairs and trios.",
    )
    parser.add_argument("--version", action="version", version=f"qfent {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", help="JSON config (or a previous run manifest)")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--threads", help="worker threads, integer or 'auto'")
        sp.add_argument("--cache", help="kernel cache file, or 'off'")
        sp.add_argument("--rel-tol", dest="rel_tol", type=_flag_float,
                        help="quadrature relative tolerance")
        sp.add_argument("--format", choices=_FORMATS, help="output artifact set")
    return parser


_NEEDS_CONFIG = ("bipartite-map", "tripartite-map", "slice", "cone", "regularity")


def run(cfg: RunConfig) -> int:
    """Execute a validated config; returns the process exit code (0)."""
    if cfg.mode in ("bipartite-map", "tripartite-map"):
        return _run_map_mode(cfg)
    if cfg.mode == "slice":
        return _run_slice_mode(cfg)
    if cfg.mode == "cone":
        return _run_cone_mode(cfg)
    if cfg.mode == "regularity":
        return _run_regularity_mode(cfg)
    return _run_validate_mode(cfg)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.mode == "validate":
            if args.config is not None:
                raise ConfigError("validate mode takes no --config")
            return _run_validate_mode(None)
        if args.config is None:
            raise ConfigError(f"{args.mode} needs --config <path>")
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        cfg = parse_config(text, mode=args.mode)
        cfg = _apply_flag_overrides(cfg, args)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PartialGridError as exc:
        print(f"partial grid: {exc}", file=sys.stderr)
        return 4
    except (NumericalError, QuadratureAccuracyError, ModelConsistencyError, QfentError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
