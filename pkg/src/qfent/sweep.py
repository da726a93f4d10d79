"""Parameter-grid evaluation over (t̃, L̃), slice extraction, and the
entanglement-cone contour.

Cells are embarrassingly parallel: a thread pool evaluates them
independently, the only shared mutable state is the kernel cache, and each
result lands in its own slot of the result array.  A cell whose quadrature
or state construction fails is recorded in place (status column, magenta
pixel) and the run carries on; the run as a whole fails only when more
than 1% of cells fail.

CSV columns are part of the external interface and are pinned:

bipartite::

    L_over_sigma, t_over_sigma, negativity, kernel_gamma_A,
    kernel_gamma_B, vartheta, xi, n_evals, status

tripartite appends::

    neg_A_BC, neg_B_CA, neg_C_AB, neg_AB, neg_BC, neg_CA,
    pi_raw, pi_clamped, ghz_type

For tripartite rows the ``negativity`` column repeats ``neg_A_BC`` (the
one-vs-rest cut of the first detector) so both formats share a primary
value column.  Floats are written with ``%.17g`` so output is bit-exact
reproducible and round-trips through text.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._palette import render_ppm
from .dmatrix import build_bipartite, build_tripartite_equilateral
from .entangle import (
    GHZ_THRESHOLD,
    PAIR_ZERO_THRESHOLD,
    EntanglementReport,
    negativity,
    pi_tangle,
)
from .errors import ConfigError, PartialGridError, QfentError
from .kernels import (
    KernelCache,
    equilateral_params,
    kernel_set_counted,
    pair_params,
)

__all__ = [
    "MapConfig",
    "CellResult",
    "SweepGrid",
    "SliceResult",
    "ConeContour",
    "log_axis",
    "linear_axis",
    "run_bipartite_map",
    "run_tripartite_map",
    "run_slice",
    "extract_cone",
    "DEFAULT_R_EDGE",
    "CONE_EPSILON",
    "BIPARTITE_COLUMNS",
    "TRIPARTITE_COLUMNS",
]

#: Effective detector radius for the light-cone overlay t̃ = L̃ − 2·r_edge,
#: chosen so the overlay meets t̃ = 0 at L̃ = 3.5.
DEFAULT_R_EDGE = 1.75

#: Default threshold for the cone contour ("first negativity above ε").
CONE_EPSILON = 1e-6

_MAX_FAILED_FRACTION = 0.01

BIPARTITE_COLUMNS = (
    "L_over_sigma",
    "t_over_sigma",
    "negativity",
    "kernel_gamma_A",
    "kernel_gamma_B",
    "vartheta",
    "xi",
    "n_evals",
    "status",
)

TRIPARTITE_COLUMNS = BIPARTITE_COLUMNS + (
    "neg_A_BC",
    "neg_B_CA",
    "neg_C_AB",
    "neg_AB",
    "neg_BC",
    "neg_CA",
    "pi_raw",
    "pi_clamped",
    "ghz_type",
)

_REPORT_KEYS = ("A|BC", "B|CA", "C|AB", "A|B", "B|C", "C|A")


def _fmt(x: float) -> str:
    return "%.17g" % x


def log_axis(lo: float, hi: float, points: int) -> tuple:
    """``points`` geometrically spaced values from ``lo`` to ``hi``."""
    if points < 1:
        raise ConfigError(f"axis needs at least 1 point, got {points}")
    if lo <= 0.0 or hi <= 0.0:
        raise ConfigError("log-spaced axis endpoints must be positive")
    if points == 1:
        return (float(lo),)
    return tuple(np.geomspace(float(lo), float(hi), points).tolist())


def linear_axis(lo: float, hi: float, points: int) -> tuple:
    """``points`` equally spaced values from ``lo`` to ``hi`` inclusive."""
    if points < 1:
        raise ConfigError(f"axis needs at least 1 point, got {points}")
    if points == 1:
        return (float(lo),)
    return tuple(np.linspace(float(lo), float(hi), points).tolist())


def _check_axis(name: str, values, *, positive: bool) -> tuple:
    axis = tuple(float(v) for v in values)
    if not axis:
        raise ConfigError(f"{name} axis is empty")
    for v in axis:
        if not math.isfinite(v):
            raise ConfigError(f"{name} axis contains a non-finite value")
        if positive and v <= 0.0:
            raise ConfigError(f"{name} axis values must be positive, got {v}")
        if not positive and v < 0.0:
            raise ConfigError(f"{name} axis values must be ≥ 0, got {v}")
    if any(b <= a for a, b in zip(axis, axis[1:])):
        raise ConfigError(f"{name} axis must be strictly increasing")
    return axis


@dataclass(frozen=True)
class MapConfig:
    """Everything a map, slice, or cone run needs.

    ``kind`` selects two detectors separated by L̃ ("bipartite") or three
    on an equilateral triangle of side L̃ ("tripartite"); all detectors
    share the same coupling and gap.
    """

    kind: str
    n: int
    m_tilde: float
    lambda_tilde: float
    t_axis: tuple
    L_axis: tuple
    delta_tilde: float = 0.0
    rel_tol: Optional[float] = None
    threads: Optional[int] = None
    ghz_threshold: float = GHZ_THRESHOLD
    pair_zero_threshold: float = PAIR_ZERO_THRESHOLD

    def __post_init__(self):
        if self.kind not in ("bipartite", "tripartite"):
            raise ConfigError(f"unknown map kind {self.kind!r}")
        if not isinstance(self.n, int) or not 2 <= self.n <= 5:
            raise ConfigError(f"unsupported dimension n={self.n!r}")
        for name in ("m_tilde", "lambda_tilde"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be finite and ≥ 0, got {v!r}")
        if not math.isfinite(self.delta_tilde):
            raise ConfigError(f"delta_tilde must be finite, got {self.delta_tilde!r}")
        if self.rel_tol is not None and not (
            math.isfinite(self.rel_tol) and 0 < self.rel_tol <= 1e-2
        ):
            raise ConfigError(f"rel_tol out of range: {self.rel_tol!r}")
        if self.threads is not None and (
            not isinstance(self.threads, int) or self.threads < 1
        ):
            raise ConfigError(f"threads must be a positive integer, got {self.threads!r}")
        object.__setattr__(self, "t_axis", _check_axis("t", self.t_axis, positive=False))
        object.__setattr__(self, "L_axis", _check_axis("L", self.L_axis, positive=True))

    def model_params(self, L_tilde: float):
        lam, dlt = self.lambda_tilde, self.delta_tilde
        if self.kind == "bipartite":
            return pair_params(
                self.n,
                self.m_tilde,
                L_tilde,
                lambda_tildes=(lam, lam),
                delta_tildes=(dlt, dlt),
            )
        return equilateral_params(
            self.n,
            self.m_tilde,
            L_tilde,
            lambda_tildes=(lam, lam, lam),
            delta_tildes=(dlt, dlt, dlt),
        )

    def to_meta(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "m_tilde": self.m_tilde,
            "lambda_tilde": self.lambda_tilde,
            "delta_tilde": self.delta_tilde,
            "t_axis": list(self.t_axis),
            "L_axis": list(self.L_axis),
            "rel_tol": self.rel_tol,
            "threads": self.threads,
            "ghz_threshold": self.ghz_threshold,
            "pair_zero_threshold": self.pair_zero_threshold,
        }


@dataclass(frozen=True)
class CellResult:
    """One evaluated grid cell, including its kernel diagnostics."""

    t_tilde: float
    L_tilde: float
    status: str
    negativity: float
    gamma_a: float
    gamma_b: float
    vartheta: float
    xi: float
    n_evals: int
    report: Optional[EntanglementReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _failed_cell(t: float, L: float, exc: QfentError) -> CellResult:
    nan = float("nan")
    return CellResult(
        t_tilde=t,
        L_tilde=L,
        status=f"failed:{type(exc).__name__}",
        negativity=nan,
        gamma_a=nan,
        gamma_b=nan,
        vartheta=nan,
        xi=nan,
        n_evals=0,
        error=str(exc),
    )


def _eval_cell(cfg: MapConfig, t: float, L: float, cache: KernelCache) -> CellResult:
    p = cfg.model_params(L)
    ks, n_evals = kernel_set_counted(t, p, rel_tol=cfg.rel_tol, cache=cache)
    if cfg.kind == "bipartite":
        dm = build_bipartite(t, p, rel_tol=cfg.rel_tol, cache=cache)
        neg = negativity(dm, {0})
        report = None
    else:
        dm = build_tripartite_equilateral(t, L, p, rel_tol=cfg.rel_tol, cache=cache)
        report = pi_tangle(
            dm,
            ghz_threshold=cfg.ghz_threshold,
            pair_zero_threshold=cfg.pair_zero_threshold,
        )
        neg = report.negativities["A|BC"]
    return CellResult(
        t_tilde=t,
        L_tilde=L,
        status="ok",
        negativity=neg,
        gamma_a=float(ks.gamma[0]),
        gamma_b=float(ks.gamma[1]),
        vartheta=float(ks.vartheta[0, 1]),
        xi=float(ks.xi[0, 1]),
        n_evals=n_evals,
        report=report,
    )


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """Completed (t̃, L̃) grid of cell results with run metadata."""

    t_axis: tuple
    L_axis: tuple
    cells: np.ndarray  # object array indexed [t_index, L_index]
    meta: dict

    def __post_init__(self):
        object.__setattr__(self, "t_axis", _check_axis("t", self.t_axis, positive=False))
        object.__setattr__(self, "L_axis", _check_axis("L", self.L_axis, positive=True))
        want = (len(self.t_axis), len(self.L_axis))
        if self.cells.shape != want:
            raise ConfigError(f"cells shape {self.cells.shape} does not match axes {want}")

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "bipartite")

    def cell(self, ti: int, li: int) -> CellResult:
        return self.cells[ti, li]

    def negativity_array(self) -> np.ndarray:
        out = np.empty(self.cells.shape, dtype=float)
        for idx, c in np.ndenumerate(self.cells):
            out[idx] = c.negativity
        return out

    def value_array(self) -> np.ndarray:
        """The per-cell scalar a heatmap shows: negativity, or π (clamped)."""
        if self.kind != "tripartite":
            return self.negativity_array()
        out = np.empty(self.cells.shape, dtype=float)
        for idx, c in np.ndenumerate(self.cells):
            out[idx] = c.report.pi_tangle_clamped if c.report is not None else float("nan")
        return out

    def failed_mask(self) -> np.ndarray:
        out = np.zeros(self.cells.shape, dtype=bool)
        for idx, c in np.ndenumerate(self.cells):
            out[idx] = not c.ok
        return out

    @property
    def failed_fraction(self) -> float:
        return float(self.failed_mask().mean())

    def failures(self) -> list:
        return [c for c in self.cells.flat if not c.ok]

    def to_csv(self) -> str:
        tripartite = self.kind == "tripartite"
        cols = TRIPARTITE_COLUMNS if tripartite else BIPARTITE_COLUMNS
        lines = [",".join(cols)]
        for li, L in enumerate(self.L_axis):
            for ti, t in enumerate(self.t_axis):
                c = self.cells[ti, li]
                row = [
                    _fmt(L),
                    _fmt(t),
                    _fmt(c.negativity),
                    _fmt(c.gamma_a),
                    _fmt(c.gamma_b),
                    _fmt(c.vartheta),
                    _fmt(c.xi),
                    str(c.n_evals),
                    c.status,
                ]
                if tripartite:
                    if c.report is not None:
                        negs = c.report.negativities
                        row += [_fmt(negs[k]) for k in _REPORT_KEYS]
                        row += [
                            _fmt(c.report.pi_tangle_raw),
                            _fmt(c.report.pi_tangle_clamped),
                            "true" if c.report.ghz_type else "false",
                        ]
                    else:
                        row += ["nan"] * 8 + ["false"]
                lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_ppm(self) -> bytes:
        return render_ppm(self.value_array(), failed=self.failed_mask())


def _run_map(cfg: MapConfig, cache: Optional[KernelCache]) -> SweepGrid:
    cache = cache if cache is not None else KernelCache()
    before = cache.stats()
    t0 = time.perf_counter()
    nt, nl = len(cfg.t_axis), len(cfg.L_axis)
    cells = np.empty((nt, nl), dtype=object)

    def work(idx):
        ti, li = idx
        t, L = cfg.t_axis[ti], cfg.L_axis[li]
        try:
            return idx, _eval_cell(cfg, t, L, cache)
        except ConfigError:
            raise
        except QfentError as exc:
            return idx, _failed_cell(t, L, exc)

    indices = [(ti, li) for ti in range(nt) for li in range(nl)]
    n_workers = cfg.threads or min(32, os.cpu_count() or 1)
    if n_workers == 1 or len(indices) == 1:
        results = map(work, indices)
        for idx, res in results:
            cells[idx] = res
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for idx, res in pool.map(work, indices):
                cells[idx] = res

    wall = time.perf_counter() - t0
    after = cache.stats()
    meta = {
        "kind": cfg.kind,
        "config": cfg,
        "wall_clock_seconds": wall,
        "cells_total": nt * nl,
        "cells_failed": int(sum(0 if c.ok else 1 for c in cells.flat)),
        "sum_cell_evals": int(sum(c.n_evals for c in cells.flat)),
        "new_evals": after["new_evals"] - before["new_evals"],
        "cache_stats": after,
        "r_edge": DEFAULT_R_EDGE,
    }
    grid = SweepGrid(cfg.t_axis, cfg.L_axis, cells, meta)
    frac = grid.failed_fraction
    if frac > _MAX_FAILED_FRACTION:
        messages = [f"({c.t_tilde:g}, {c.L_tilde:g}): {c.error}" for c in grid.failures()]
        raise PartialGridError(
            f"{meta['cells_failed']} of {meta['cells_total']} cells failed "
            f"({100 * frac:.1f}%); first: {messages[0]}",
            grid,
            frac,
        )
    return grid


def run_bipartite_map(cfg: MapConfig, *, cache: Optional[KernelCache] = None) -> SweepGrid:
    """Negativity of two detectors over the (t̃, L̃) grid."""
    if cfg.kind != "bipartite":
        raise ConfigError(f"run_bipartite_map needs a bipartite config, got {cfg.kind!r}")
    return _run_map(cfg, cache)


def run_tripartite_map(cfg: MapConfig, *, cache: Optional[KernelCache] = None) -> SweepGrid:
    """π-tangle reports for an equilateral trio over the (t̃, L̃) grid."""
    if cfg.kind != "tripartite":
        raise ConfigError(f"run_tripartite_map needs a tripartite config, got {cfg.kind!r}")
    return _run_map(cfg, cache)


@dataclass(frozen=True, eq=False)
class SliceResult:
    """1-D trace at fixed L̃, with its argmax/max over the sampled times."""

    L_tilde: float
    t_axis: tuple
    values: tuple
    t_at_max: float
    max_value: float
    grid: SweepGrid

    def to_csv(self) -> str:
        return self.grid.to_csv()


def run_slice(cfg: MapConfig, *, cache: Optional[KernelCache] = None) -> SliceResult:
    """Trace negativity (bipartite) or clamped π (tripartite) over t̃.

    The config must carry exactly one L̃ value.
    """
    if len(cfg.L_axis) != 1:
        raise ConfigError(
            f"run_slice needs exactly one L value, got {len(cfg.L_axis)}"
        )
    grid = _run_map(cfg, cache)
    vals = grid.value_array()[:, 0]
    finite = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(finite))
    return SliceResult(
        L_tilde=cfg.L_axis[0],
        t_axis=grid.t_axis,
        values=tuple(float(v) for v in vals),
        t_at_max=grid.t_axis[k],
        max_value=float(vals[k]),
        grid=grid,
    )


@dataclass(frozen=True)
class ConeContour:
    """First-crossing contour t̃*(L̃) where the map value exceeds ε.

    ``non_crossing`` lists the L̃ columns that never exceeded ε; an empty
    polyline with every column listed there is a valid result.
    """

    polyline: tuple  # of (L_tilde, t_star) pairs, L ascending
    epsilon: float
    non_crossing: tuple
    r_edge: float = DEFAULT_R_EDGE
    refined: bool = False

    def lightcone_ref(self, L_tilde: float) -> float:
        """Light-cone overlay t̃ = L̃ − 2·r_edge."""
        return L_tilde - 2.0 * self.r_edge

    def to_csv(self) -> str:
        lines = ["L_over_sigma,t_star_over_sigma"]
        lines += [f"{_fmt(L)},{_fmt(t)}" for L, t in self.polyline]
        return "\n".join(lines) + "\n"


def extract_cone(
    grid: SweepGrid,
    epsilon: float = CONE_EPSILON,
    *,
    cache: Optional[KernelCache] = None,
    r_edge: float = DEFAULT_R_EDGE,
    refine: Optional[bool] = None,
) -> ConeContour:
    """Per L̃ column, the earliest sampled t̃ whose value exceeds ε.

    When the grid carries its own config (any grid produced by a run here
    does), the bracket between the last sub-ε row and the first super-ε
    row is tightened by one midpoint evaluation; synthetic grids without a
    config fall back to the first super-ε grid row.  ``refine=False``
    forces the unrefined contour.
    """
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ConfigError(f"epsilon must be positive and finite, got {epsilon!r}")
    cfg = grid.meta.get("config")
    do_refine = (cfg is not None) if refine is None else (refine and cfg is not None)
    vals = grid.value_array()

    points = []
    missing = []
    for li, L in enumerate(grid.L_axis):
        col = vals[:, li]
        above = np.isfinite(col) & (col > epsilon)
        if not above.any():
            missing.append(L)
            continue
        i = int(np.argmax(above))
        t_star = grid.t_axis[i]
        if i > 0 and do_refine:
            t_mid = 0.5 * (grid.t_axis[i - 1] + grid.t_axis[i])
            mid = _eval_cell(cfg, t_mid, L, cache if cache is not None else KernelCache())
            mid_val = (
                mid.report.pi_tangle_clamped
                if (cfg.kind == "tripartite" and mid.report is not None)
                else mid.negativity
            )
            if math.isfinite(mid_val) and mid_val > epsilon:
                t_star = t_mid
        points.append((float(L), float(t_star)))

    return ConeContour(
        polyline=tuple(points),
        epsilon=float(epsilon),
        non_crossing=tuple(float(L) for L in missing),
        r_edge=float(r_edge),
        refined=do_refine,
    )
