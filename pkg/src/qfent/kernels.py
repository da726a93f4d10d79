"""Field-theoretic kernels of the gapless-detector model.

Everything here is expressed in smearing-width units: ``u = |k|·σ`` is the
integration variable, ``t_tilde`` the elapsed time, ``L_tilde`` a detector
separation, ``m_tilde`` the field mass, and ``lambda_tilde`` the
dimensionless coupling.  Three time-dependent kernels drive the reduced
state of N detectors:

* ``decay_exponent``  — the single-detector decoherence exponent Γⱼ(t̃);
  the off-diagonal suppression of detector j is exp(−Γⱼ).
* ``vartheta``        — the two-body entangling phase ϑᵢⱼ(t̃, L̃).
* ``xi``              — the two-body correlation exponent Ξᵢⱼ(t̃, L̃).

Two static functionals govern regularity of the interacting ground state:
``r_alpha`` (the IR-sensitive integrals R_α, α ∈ {1, 2}) and
``ground_state_energy`` (s·Δ̃ − R₁, or ``Unbounded``).

All kernels reduce to radial integrals over u ∈ [0, ∞) of a Gaussian
envelope u^{n−1}·exp(−u²/2) times inverse powers of ω̃ = √(u² + m̃²),
an oscillatory time factor, and — for two-body quantities — the
direction-averaged plane wave expressed through the regularized
hypergeometric factor of :mod:`qfent.specfun`.

Numerical policy
----------------
The oscillatory factors sin²(ω̃t̃/2) and (sin(ω̃t̃) − ω̃t̃) are integrated
*unsplit* where ω̃t̃ ≤ 8π and split into smooth + oscillatory parts above
that point (u* = √((8π/t̃)² − m̃²) when real, else no split region).
Splitting everywhere would be catastrophic: the smooth parts alone diverge
like 1/m̃ (or log m̃) as m̃ → 0 while the combination stays O(t̃), so the
pieces would cancel to ~11 digits at the default mass floor.  Not
splitting at all would make large-t̃ runs resolve millions of oscillation
periods of a near-cancelling integrand.  The 8π crossover keeps at most a
few periods in the unsplit region and keeps the split pieces comparable in
magnitude to their sum.

Couplings are factored out of every integral analytically (the kernels
are exactly bilinear in λ̃), so the memo cache is keyed only by
(kernel id, n, m̃, t̃, L̃, rel_tol) and a coupling sweep costs nothing.
"""

from __future__ import annotations

import math
import os
import pickle
import tempfile
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelConsistencyError
from .quad import (
    DEFAULT_EVAL_BUDGET,
    U_MAX_DEFAULT,
    _MAX_PANEL_W,
    Integrand,
    integrate_semiinf,
)
from .specfun import gamma_fn, sphere_mean_factor

__all__ = [
    "DetectorParams",
    "ModelParams",
    "KernelSet",
    "KernelCache",
    "Divergent",
    "Unbounded",
    "DEFAULT_REL_TOL",
    "decay_exponent",
    "vartheta",
    "xi",
    "r_alpha",
    "ground_state_energy",
    "kernel_set",
    "kernel_set_counted",
    "raw_decay_integral",
    "raw_phase_integral",
    "raw_correlation_integral",
    "raw_regularity_self",
    "raw_regularity_cross",
    "decay_coefficient",
    "phase_coefficient",
    "correlation_coefficient",
    "regularity_self_coefficient",
    "regularity_cross_coefficient",
    "single_params",
    "pair_params",
    "equilateral_params",
]

DEFAULT_REL_TOL = 1e-10

# Absolute error floor handed to the quadrature for each raw piece.  The
# public contract is 1e-8 relative / 1e-12 absolute on assembled kernels;
# with ≤ 3 pieces per kernel and coupling prefactors up to ~1.3 this floor
# keeps the assembled absolute error under 1e-12 even when values underflow.
_PIECE_ABS_TOL = 1e-13

# Phase ω̃·t̃ beyond which the oscillatory time factors are split into
# smooth + oscillatory integrals (see module docstring).
_SPLIT_PHASE = 8.0 * math.pi

_SUPPORTED_N = (2, 3, 4, 5)

_NEG_KERNEL_SLACK = 1e-10


class _Sentinel:
    """Singleton marker values (``Divergent``, ``Unbounded``)."""

    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    def __deepcopy__(self, memo):
        return self

    def __copy__(self):
        return self


#: Returned by :func:`r_alpha` when the IR criterion fails (m̃ = 0 and
#: n ≤ α + 1): the integral has no finite value.
Divergent = _Sentinel("Divergent")

#: Returned by :func:`ground_state_energy` when R₁ is Divergent.
Unbounded = _Sentinel("Unbounded")


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorParams:
    """One detector: coupling λ̃, free phase rate Δ̃, position (σ units)."""

    lambda_tilde: float
    delta_tilde: float
    position: tuple

    def __post_init__(self):
        object.__setattr__(self, "lambda_tilde", float(self.lambda_tilde))
        object.__setattr__(self, "delta_tilde", float(self.delta_tilde))
        pos = tuple(float(x) for x in self.position)
        object.__setattr__(self, "position", pos)
        if not math.isfinite(self.lambda_tilde) or self.lambda_tilde < 0.0:
            raise ConfigError(
                f"detector coupling lambda_tilde must be finite and >= 0, "
                f"got {self.lambda_tilde!r}"
            )
        if not math.isfinite(self.delta_tilde):
            raise ConfigError(
                f"detector gap rate delta_tilde must be finite, got {self.delta_tilde!r}"
            )
        if not all(math.isfinite(x) for x in pos):
            raise ConfigError(f"detector position must be finite, got {pos!r}")


@dataclass(frozen=True)
class ModelParams:
    """Full model configuration: dimension, field mass, detector list."""

    n: int
    m_tilde: float
    detectors: tuple

    def __post_init__(self):
        if self.n != int(self.n):
            raise ConfigError(f"unsupported dimension n={self.n!r} (must be an integer in 2..5)")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m_tilde", float(self.m_tilde))
        dets = tuple(
            d if isinstance(d, DetectorParams) else DetectorParams(**d)
            for d in self.detectors
        )
        object.__setattr__(self, "detectors", dets)
        if self.n not in _SUPPORTED_N:
            raise ConfigError(
                f"unsupported dimension n={self.n} (supported spatial dimensions: 2, 3, 4, 5)"
            )
        if not math.isfinite(self.m_tilde) or self.m_tilde < 0.0:
            raise ConfigError(f"field mass m_tilde must be finite and >= 0, got {self.m_tilde!r}")
        if not dets:
            raise ConfigError("at least one detector is required")
        for k, d in enumerate(dets):
            if len(d.position) != self.n:
                raise ConfigError(
                    f"detector {k} position has {len(d.position)} components, expected n={self.n}"
                )
        for i in range(len(dets)):
            for j in range(i + 1, len(dets)):
                if self.separation(i, j) == 0.0:
                    raise ConfigError(
                        f"detectors {i} and {j} are coincident; positions must be distinct"
                    )

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    def separation(self, i: int, j: int) -> float:
        pi = self.detectors[i].position
        pj = self.detectors[j].position
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(pi, pj)))

    def couplings(self) -> np.ndarray:
        return np.array([d.lambda_tilde for d in self.detectors])

    def gaps(self) -> np.ndarray:
        return np.array([d.delta_tilde for d in self.detectors])


def single_params(n, m_tilde, *, lambda_tilde=1.0, delta_tilde=0.0) -> ModelParams:
    """One detector at the origin."""
    det = DetectorParams(lambda_tilde, delta_tilde, (0.0,) * n)
    return ModelParams(n, m_tilde, (det,))


def pair_params(
    n,
    m_tilde,
    separation,
    *,
    lambda_tildes=(1.0, 1.0),
    delta_tildes=(0.0, 0.0),
) -> ModelParams:
    """Two detectors a distance ``separation`` apart along the first axis."""
    if not (separation > 0.0):
        raise ConfigError(f"pair separation must be > 0, got {separation!r}")
    p0 = (0.0,) * n
    p1 = (float(separation),) + (0.0,) * (n - 1)
    dets = (
        DetectorParams(lambda_tildes[0], delta_tildes[0], p0),
        DetectorParams(lambda_tildes[1], delta_tildes[1], p1),
    )
    return ModelParams(n, m_tilde, dets)


def equilateral_params(
    n,
    m_tilde,
    side,
    *,
    lambda_tildes=(1.0, 1.0, 1.0),
    delta_tildes=(0.0, 0.0, 0.0),
) -> ModelParams:
    """Three detectors on an equilateral triangle of the given side."""
    if not (side > 0.0):
        raise ConfigError(f"triangle side must be > 0, got {side!r}")
    s = float(side)
    tail = (0.0,) * (n - 2)
    pos = (
        (0.0, 0.0) + tail,
        (s, 0.0) + tail,
        (0.5 * s, 0.5 * s * math.sqrt(3.0)) + tail,
    )
    dets = tuple(
        DetectorParams(lambda_tildes[k], delta_tildes[k], pos[k]) for k in range(3)
    )
    return ModelParams(n, m_tilde, dets)


# ---------------------------------------------------------------------------
# coefficients in front of the raw radial integrals
# ---------------------------------------------------------------------------


def decay_coefficient(n: int) -> float:
    """Γⱼ = λ̃ⱼ² · this · ∫ u^{n−1} e^{−u²/2} sin²(ω̃t̃/2)/ω̃³ du."""
    return 8.0 / (2.0**n * math.pi ** (n / 2.0) * gamma_fn(n / 2.0))


def phase_coefficient(n: int) -> float:
    """ϑᵢⱼ = λ̃ᵢλ̃ⱼ · this · ∫ u^{n−1} e^{−u²/2} (sin ω̃t̃ − ω̃t̃)·Φ/ω̃³ du."""
    return 4.0 / (2.0**n * math.pi ** (n / 2.0))


def correlation_coefficient(n: int) -> float:
    """Ξᵢⱼ = λ̃ᵢλ̃ⱼ · this · ∫ u^{n−1} e^{−u²/2} sin²(ω̃t̃/2)·Φ/ω̃³ du."""
    return 16.0 / (2.0**n * math.pi ** (n / 2.0))


def regularity_self_coefficient(n: int) -> float:
    """Single-detector term of R_α: λ̃ⱼ² · this · ∫ u^{n−1}e^{−u²/2}/ω̃^{α+1} du."""
    return math.pi ** (n / 2.0) / ((2.0 * math.pi) ** n * gamma_fn(n / 2.0))


def regularity_cross_coefficient(n: int) -> float:
    """Cross term of R_α: sᵢsⱼλ̃ᵢλ̃ⱼ · this · ∫ u^{n−1}e^{−u²/2}·Φ/ω̃^{α+1} du."""
    return 2.0 * math.pi ** (n / 2.0) / (2.0 * math.pi) ** n


# ---------------------------------------------------------------------------
# raw radial integrals (couplings stripped)
# ---------------------------------------------------------------------------


def _split_point(m_tilde: float, t_tilde: float) -> float:
    """u* where ω̃(u*)·t̃ = 8π; 0 if already ≥ 8π at u = 0."""
    if t_tilde <= 0.0:
        return math.inf
    rate = _SPLIT_PHASE / t_tilde
    gap = rate * rate - m_tilde * m_tilde
    return math.sqrt(gap) if gap > 0.0 else 0.0


def _budget(a: float, b: float, scales: Sequence[float]) -> int:
    """Evaluation budget sized ~8× the seed cost of the worst piece."""
    w = _MAX_PANEL_W
    for s in scales:
        if s > 0.0:
            w = min(w, math.pi / s)
    panels = (b - a) / w + 200.0
    return int(max(DEFAULT_EVAL_BUDGET, 8.0 * 15.0 * panels))


def _sin_minus_x(x: np.ndarray) -> np.ndarray:
    """sin(x) − x without digit loss at small |x| (series below 0.5)."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    series = (
        -(x2 * x)
        / 6.0
        * (
            1.0
            - x2
            / 20.0
            * (
                1.0
                - x2
                / 42.0
                * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0 * (1.0 - x2 / 156.0)))
            )
        )
    )
    return np.where(np.abs(x) < 0.5, series, np.sin(x) - x)


def _omega(u: np.ndarray, m_tilde: float) -> np.ndarray:
    return np.sqrt(u * u + m_tilde * m_tilde)


def _integrate_pieces(pieces, rel_tol: float):
    """Integrate weighted pieces in order, returning (total, n_evals).

    ``pieces`` is a sequence of (weight, Integrand, u_min, u_max,
    tail_extend).  Pieces are listed smooth-and-dominant first: each later
    piece inherits an absolute error floor tied to the running magnitude,
    so a heavily-cancelling correction that contributes 1e-3 of the total
    is not chased to a relative accuracy its own roundoff floor cannot
    reach.  The summed error stays below ~0.75·rel_tol·|total| (plus the
    hard 1e-13 floors), within the kernel accuracy contract.
    """
    total = 0.0
    evals = 0
    scale = 0.0
    for weight, intg, a, b, tail in pieces:
        abs_tol = max(_PIECE_ABS_TOL, 0.25 * rel_tol * scale)
        r = integrate_semiinf(
            intg,
            rel_tol,
            u_min=a,
            u_max=b,
            abs_tol=abs_tol,
            eval_budget=_budget(a, b, intg.oscillation_scales),
            tail_extend=tail,
        )
        total += weight * r.value
        evals += r.n_evals
        scale = max(scale, abs(total), abs(weight * r.value))
    return total, evals


def _validate_kernel_args(n, m_tilde, t_tilde):
    if n not in _SUPPORTED_N:
        raise ConfigError(f"unsupported dimension n={n!r} (supported: 2..5)")
    if not (m_tilde >= 0.0) or not math.isfinite(m_tilde):
        raise ConfigError(f"m_tilde must be finite and >= 0, got {m_tilde!r}")
    if not (t_tilde >= 0.0) or not math.isfinite(t_tilde):
        raise ConfigError(f"t_tilde must be finite and >= 0, got {t_tilde!r}")


def raw_decay_integral(
    n: int,
    m_tilde: float,
    t_tilde: float,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    u_max: float = U_MAX_DEFAULT,
):
    """∫₀^∞ u^{n−1} e^{−u²/2} sin²(ω̃t̃/2)/ω̃³ du  →  (value, n_evals)."""
    _validate_kernel_args(n, m_tilde, t_tilde)
    if t_tilde == 0.0:
        return 0.0, 0
    m = float(m_tilde)
    t = float(t_tilde)
    ustar = _split_point(m, t)

    def combined(u):
        w = _omega(u, m)
        return u ** (n - 1) * np.exp(-0.5 * u * u) * np.sin(0.5 * t * w) ** 2 / w**3

    def plateau(u):
        w = _omega(u, m)
        return 0.5 * u ** (n - 1) * np.exp(-0.5 * u * u) / w**3

    def ripple(u):
        w = _omega(u, m)
        return -0.5 * u ** (n - 1) * np.exp(-0.5 * u * u) * np.cos(t * w) / w**3

    pieces = []
    if ustar < u_max:
        pieces.append((1.0, Integrand(plateau), ustar, u_max, True))
    if ustar > 0.0:
        hi = min(ustar, u_max)
        pieces.append(
            (1.0, Integrand(combined, oscillation_scales=(t,)), 0.0, hi, ustar >= u_max)
        )
    if ustar < u_max:
        pieces.append(
            (1.0, Integrand(ripple, oscillation_scales=(t,)), ustar, u_max, True)
        )
    return _integrate_pieces(pieces, rel_tol)


def raw_correlation_integral(
    n: int,
    m_tilde: float,
    t_tilde: float,
    L_tilde: float,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    u_max: float = U_MAX_DEFAULT,
):
    """∫₀^∞ u^{n−1} e^{−u²/2} sin²(ω̃t̃/2)·Φ(uL̃)/ω̃³ du  →  (value, n_evals).

    Φ is the direction-averaged plane wave (regularized ₀F₁ factor).
    L̃ = 0 is allowed (Φ → 1/Γ(n/2)): the result is then exactly twice the
    decay integral, which the tests exploit.
    """
    _validate_kernel_args(n, m_tilde, t_tilde)
    if not (L_tilde >= 0.0) or not math.isfinite(L_tilde):
        raise ConfigError(f"L_tilde must be finite and >= 0, got {L_tilde!r}")
    if t_tilde == 0.0:
        return 0.0, 0
    m = float(m_tilde)
    t = float(t_tilde)
    L = float(L_tilde)
    ustar = _split_point(m, t)

    def combined(u):
        w = _omega(u, m)
        return (
            u ** (n - 1)
            * np.exp(-0.5 * u * u)
            * np.sin(0.5 * t * w) ** 2
            * sphere_mean_factor(n, u * L)
            / w**3
        )

    def plateau(u):
        w = _omega(u, m)
        return (
            0.5 * u ** (n - 1) * np.exp(-0.5 * u * u) * sphere_mean_factor(n, u * L) / w**3
        )

    def ripple(u):
        w = _omega(u, m)
        return (
            -0.5
            * u ** (n - 1)
            * np.exp(-0.5 * u * u)
            * np.cos(t * w)
            * sphere_mean_factor(n, u * L)
            / w**3
        )

    pieces = []
    if ustar < u_max:
        pieces.append((1.0, Integrand(plateau, oscillation_scales=(L,)), ustar, u_max, True))
    if ustar > 0.0:
        hi = min(ustar, u_max)
        pieces.append(
            (1.0, Integrand(combined, oscillation_scales=(t, L)), 0.0, hi, ustar >= u_max)
        )
    if ustar < u_max:
        pieces.append(
            (1.0, Integrand(ripple, oscillation_scales=(t, L)), ustar, u_max, True)
        )
    return _integrate_pieces(pieces, rel_tol)


def raw_phase_integral(
    n: int,
    m_tilde: float,
    t_tilde: float,
    L_tilde: float,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    u_max: float = U_MAX_DEFAULT,
):
    """∫₀^∞ u^{n−1} e^{−u²/2} (sin ω̃t̃ − ω̃t̃)·Φ(uL̃)/ω̃³ du  →  (value, n_evals).

    Below u* the difference is evaluated as one expression (series for
    small phase), above u* the sin part and the linear part are separate
    convergent integrals — the linear one is smooth and cheap, with t̃
    factored out for conditioning.
    """
    _validate_kernel_args(n, m_tilde, t_tilde)
    if not (L_tilde > 0.0) or not math.isfinite(L_tilde):
        raise ConfigError(f"L_tilde must be finite and > 0, got {L_tilde!r}")
    if t_tilde == 0.0:
        return 0.0, 0
    m = float(m_tilde)
    t = float(t_tilde)
    L = float(L_tilde)
    ustar = _split_point(m, t)

    def combined(u):
        w = _omega(u, m)
        return (
            u ** (n - 1)
            * np.exp(-0.5 * u * u)
            * _sin_minus_x(t * w)
            * sphere_mean_factor(n, u * L)
            / w**3
        )

    def oscillatory(u):
        w = _omega(u, m)
        return (
            u ** (n - 1)
            * np.exp(-0.5 * u * u)
            * np.sin(t * w)
            * sphere_mean_factor(n, u * L)
            / w**3
        )

    def linear(u):
        w = _omega(u, m)
        return u ** (n - 1) * np.exp(-0.5 * u * u) * sphere_mean_factor(n, u * L) / (w * w)

    pieces = []
    if ustar < u_max:
        pieces.append((-t, Integrand(linear, oscillation_scales=(L,)), ustar, u_max, True))
    if ustar > 0.0:
        hi = min(ustar, u_max)
        pieces.append(
            (1.0, Integrand(combined, oscillation_scales=(t, L)), 0.0, hi, ustar >= u_max)
        )
    if ustar < u_max:
        pieces.append(
            (1.0, Integrand(oscillatory, oscillation_scales=(t, L)), ustar, u_max, True)
        )
    return _integrate_pieces(pieces, rel_tol)


def raw_regularity_self(
    n: int,
    m_tilde: float,
    alpha: float,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    u_max: float = U_MAX_DEFAULT,
):
    """∫₀^∞ u^{n−1} e^{−u²/2}/ω̃^{α+1} du  →  (value, n_evals)."""
    _validate_kernel_args(n, m_tilde, 0.0)
    m = float(m_tilde)
    a = float(alpha)

    def fn(u):
        w = _omega(u, m)
        return u ** (n - 1) * np.exp(-0.5 * u * u) / w ** (a + 1.0)

    r = integrate_semiinf(
        Integrand(fn),
        rel_tol,
        u_min=0.0,
        u_max=u_max,
        abs_tol=_PIECE_ABS_TOL,
        eval_budget=_budget(0.0, u_max, ()),
        tail_extend=True,
    )
    return r.value, r.n_evals


def raw_regularity_cross(
    n: int,
    m_tilde: float,
    alpha: float,
    L_tilde: float,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    u_max: float = U_MAX_DEFAULT,
):
    """∫₀^∞ u^{n−1} e^{−u²/2}·Φ(uL̃)/ω̃^{α+1} du  →  (value, n_evals)."""
    _validate_kernel_args(n, m_tilde, 0.0)
    if not (L_tilde > 0.0) or not math.isfinite(L_tilde):
        raise ConfigError(f"L_tilde must be finite and > 0, got {L_tilde!r}")
    m = float(m_tilde)
    a = float(alpha)
    L = float(L_tilde)

    def fn(u):
        w = _omega(u, m)
        return (
            u ** (n - 1)
            * np.exp(-0.5 * u * u)
            * sphere_mean_factor(n, u * L)
            / w ** (a + 1.0)
        )

    r = integrate_semiinf(
        Integrand(fn, oscillation_scales=(L,)),
        rel_tol,
        u_min=0.0,
        u_max=u_max,
        abs_tol=_PIECE_ABS_TOL,
        eval_budget=_budget(0.0, u_max, (L,)),
        tail_extend=True,
    )
    return r.value, r.n_evals


# ---------------------------------------------------------------------------
# memo cache
# ---------------------------------------------------------------------------

_CACHE_FORMAT = "qfent-kernel-cache"
_CACHE_VERSION = 1


class KernelCache:
    """Thread-safe memo cache for the raw radial integrals.

    Values are (value, n_evals) pairs keyed by (kernel id, n, m̃, t̃, L̃,
    rel_tol) — couplings never enter a key.  Concurrent duplicate
    computation of a key is tolerated (values are deterministic;
    last-write-wins).  ``save``/``load`` use a small versioned pickle
    envelope so stale formats are rejected instead of misread.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._entries = {}
        self.hits = 0
        self.misses = 0
        self.new_evals = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get_or_compute(self, key, compute: Callable[[], tuple]):
        with self._lock:
            got = self._entries.get(key)
            if got is not None:
                self.hits += 1
                return got
        value = compute()
        with self._lock:
            self.misses += 1
            self.new_evals += value[1]
            self._entries[key] = value
        return value

    def stats(self) -> dict:
        with self._lock:
            return {
                "entries": len(self._entries),
                "hits": self.hits,
                "misses": self.misses,
                "new_evals": self.new_evals,
            }

    def save(self, path) -> None:
        payload = {
            "format": _CACHE_FORMAT,
            "version": _CACHE_VERSION,
            "entries": dict(self._entries),
        }
        directory = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path) -> "KernelCache":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if (
            not isinstance(payload, dict)
            or payload.get("format") != _CACHE_FORMAT
            or payload.get("version") != _CACHE_VERSION
        ):
            raise ConfigError(
                f"{path}: not a kernel cache file of version {_CACHE_VERSION}"
            )
        cache = cls()
        cache._entries = dict(payload["entries"])
        return cache


def _consume(cache: Optional[KernelCache], touched: dict, key, compute):
    """Fetch a raw integral through the cache, recording consumed evals."""
    if cache is None:
        value = compute()
    else:
        value = cache.get_or_compute(key, compute)
    touched[key] = value[1]
    return value[0]


def _resolve_rel_tol(rel_tol: Optional[float]) -> float:
    return DEFAULT_REL_TOL if rel_tol is None else float(rel_tol)


# ---------------------------------------------------------------------------
# public kernel operations
# ---------------------------------------------------------------------------


def _check_index(j: int, p: ModelParams):
    if not (0 <= j < p.n_detectors):
        raise ConfigError(
            f"detector index {j!r} out of range for {p.n_detectors} detectors"
        )


def _clamped_nonnegative(value: float, what: str) -> float:
    if value < 0.0:
        if value > -_NEG_KERNEL_SLACK:
            return 0.0
        raise ModelConsistencyError(
            f"{what} came out negative ({value!r}); kernel integrals are inconsistent"
        )
    return value


def decay_exponent(
    j: int,
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> float:
    """Decoherence exponent Γⱼ(t̃) ≥ 0 of detector j."""
    _check_index(j, p)
    rt = _resolve_rel_tol(rel_tol)
    lam = p.detectors[j].lambda_tilde
    if lam == 0.0 or t_tilde == 0.0:
        _validate_kernel_args(p.n, p.m_tilde, t_tilde)
        return 0.0
    touched = {}
    key = ("gamma", p.n, p.m_tilde, float(t_tilde), rt)
    J = _consume(
        cache, touched, key, lambda: raw_decay_integral(p.n, p.m_tilde, t_tilde, rel_tol=rt)
    )
    return _clamped_nonnegative(lam * lam * decay_coefficient(p.n) * J, "decay exponent")


def vartheta(
    i: int,
    j: int,
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> float:
    """Two-body entangling phase ϑᵢⱼ(t̃, L̃ᵢⱼ)."""
    _check_index(i, p)
    _check_index(j, p)
    if i == j:
        raise ConfigError("vartheta requires two distinct detector indices")
    rt = _resolve_rel_tol(rel_tol)
    li = p.detectors[i].lambda_tilde
    lj = p.detectors[j].lambda_tilde
    if li * lj == 0.0 or t_tilde == 0.0:
        _validate_kernel_args(p.n, p.m_tilde, t_tilde)
        return 0.0
    L = p.separation(i, j)
    touched = {}
    key = ("vartheta", p.n, p.m_tilde, float(t_tilde), L, rt)
    J = _consume(
        cache,
        touched,
        key,
        lambda: raw_phase_integral(p.n, p.m_tilde, t_tilde, L, rel_tol=rt),
    )
    return li * lj * phase_coefficient(p.n) * J


def xi(
    i: int,
    j: int,
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> float:
    """Two-body correlation exponent Ξᵢⱼ(t̃, L̃ᵢⱼ)."""
    _check_index(i, p)
    _check_index(j, p)
    if i == j:
        raise ConfigError("xi requires two distinct detector indices")
    rt = _resolve_rel_tol(rel_tol)
    li = p.detectors[i].lambda_tilde
    lj = p.detectors[j].lambda_tilde
    if li * lj == 0.0 or t_tilde == 0.0:
        _validate_kernel_args(p.n, p.m_tilde, t_tilde)
        return 0.0
    L = p.separation(i, j)
    touched = {}
    key = ("xi", p.n, p.m_tilde, float(t_tilde), L, rt)
    J = _consume(
        cache,
        touched,
        key,
        lambda: raw_correlation_integral(p.n, p.m_tilde, t_tilde, L, rel_tol=rt),
    )
    return li * lj * correlation_coefficient(p.n) * J


def r_alpha(
    alpha,
    sign_vector: Sequence[int],
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
):
    """IR regularity integral R_α for the signed smearing combination.

    Returns a float, or the ``Divergent`` sentinel when the analytic IR
    criterion fails: finite requires m̃ > 0 or n > α + 1.  The criterion is
    decided before any quadrature.  With every coupling zero the functional
    vanishes identically and 0.0 is returned regardless of the criterion.
    """
    a = float(alpha)
    if a not in (1.0, 2.0):
        raise ConfigError(f"alpha must be 1 or 2, got {alpha!r}")
    s = [int(x) for x in sign_vector]
    if len(s) != p.n_detectors:
        raise ConfigError(
            f"sign_vector has length {len(s)}, expected {p.n_detectors}"
        )
    if any(x not in (-1, 1) for x in s):
        raise ConfigError(f"sign_vector entries must be ±1, got {sign_vector!r}")
    rt = _resolve_rel_tol(rel_tol)
    lams = [d.lambda_tilde for d in p.detectors]
    if all(l == 0.0 for l in lams):
        return 0.0
    if not (p.m_tilde > 0.0 or p.n > a + 1.0):
        return Divergent
    touched = {}
    total = 0.0
    self_key = ("r_self", p.n, p.m_tilde, a, rt)
    J_self = None
    for j, lam in enumerate(lams):
        if lam == 0.0:
            continue
        if J_self is None:
            J_self = _consume(
                cache,
                touched,
                self_key,
                lambda: raw_regularity_self(p.n, p.m_tilde, a, rel_tol=rt),
            )
        total += lam * lam * regularity_self_coefficient(p.n) * J_self
    for i in range(p.n_detectors):
        for j in range(i + 1, p.n_detectors):
            w = lams[i] * lams[j]
            if w == 0.0:
                continue
            L = p.separation(i, j)
            key = ("r_cross", p.n, p.m_tilde, a, L, rt)
            J = _consume(
                cache,
                touched,
                key,
                lambda: raw_regularity_cross(p.n, p.m_tilde, a, L, rel_tol=rt),
            )
            total += s[i] * s[j] * w * regularity_cross_coefficient(p.n) * J
    return total


def ground_state_energy(
    sign_vector: Sequence[int],
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
):
    """s·Δ̃ − R₁, or the ``Unbounded`` sentinel when R₁ diverges."""
    r1 = r_alpha(1, sign_vector, p, rel_tol=rel_tol, cache=cache)
    if r1 is Divergent:
        return Unbounded
    s = [int(x) for x in sign_vector]
    linear = sum(si * d.delta_tilde for si, d in zip(s, p.detectors))
    return linear - r1


# ---------------------------------------------------------------------------
# assembled kernel sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelSet:
    """All kernels of a configuration at one instant.

    ``gamma`` has one entry per detector; ``vartheta`` and ``xi`` are
    symmetric with zero diagonal (each pair integrated once, mirrored).
    """

    gamma: np.ndarray
    vartheta: np.ndarray
    xi: np.ndarray
    t_tilde: float

    @property
    def n_detectors(self) -> int:
        return len(self.gamma)


def kernel_set_counted(
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
):
    """Assemble a :class:`KernelSet`; also return the evaluation count.

    The count is the sum of the quadrature evaluation counts stored with
    each distinct cache entry this assembly consumed (hit or miss alike),
    so it is deterministic and independent of thread scheduling and of
    which run populated the cache.
    """
    _validate_kernel_args(p.n, p.m_tilde, t_tilde)
    rt = _resolve_rel_tol(rel_tol)
    N = p.n_detectors
    t = float(t_tilde)
    gam = np.zeros(N)
    th = np.zeros((N, N))
    xim = np.zeros((N, N))
    if t == 0.0:
        return KernelSet(gam, th, xim, t), 0
    touched = {}
    lams = [d.lambda_tilde for d in p.detectors]

    cg = decay_coefficient(p.n)
    J_gamma = None
    for j, lam in enumerate(lams):
        if lam == 0.0:
            continue
        if J_gamma is None:
            key = ("gamma", p.n, p.m_tilde, t, rt)
            J_gamma = _consume(
                cache, touched, key,
                lambda: raw_decay_integral(p.n, p.m_tilde, t, rel_tol=rt),
            )
        gam[j] = _clamped_nonnegative(lam * lam * cg * J_gamma, f"decay exponent [{j}]")

    cp = phase_coefficient(p.n)
    cx = correlation_coefficient(p.n)
    for i in range(N):
        for j in range(i + 1, N):
            w = lams[i] * lams[j]
            if w == 0.0:
                continue
            L = p.separation(i, j)
            kt = ("vartheta", p.n, p.m_tilde, t, L, rt)
            Jt = _consume(
                cache, touched, kt,
                lambda: raw_phase_integral(p.n, p.m_tilde, t, L, rel_tol=rt),
            )
            kx = ("xi", p.n, p.m_tilde, t, L, rt)
            Jx = _consume(
                cache, touched, kx,
                lambda: raw_correlation_integral(p.n, p.m_tilde, t, L, rel_tol=rt),
            )
            th[i, j] = th[j, i] = w * cp * Jt
            xim[i, j] = xim[j, i] = w * cx * Jx
    return KernelSet(gam, th, xim, t), int(sum(touched.values()))


def kernel_set(
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> KernelSet:
    """Assemble Γ, ϑ, Ξ for every detector and pair at time t̃."""
    ks, _ = kernel_set_counted(t_tilde, p, rel_tol=rel_tol, cache=cache)
    return ks
