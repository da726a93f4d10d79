"""Entanglement functionals: negativity across any bipartition, partial
trace, and the three-detector π-tangle.

Matrices from :mod:`qfent.dmatrix` carry a weight-ordered sign basis; the
tensor-factor manipulations here need the lexicographic product order, so
inputs are permuted in and results permuted back — callers never see the
intermediate ordering.  Plain ndarrays are accepted too and are assumed to
already be in lexicographic product order.

Trace norms are computed from a full Hermitian eigendecomposition
(dimension ≤ 64 here): the partial transpose of a Hermitian matrix is
Hermitian, so the singular values are the absolute eigenvalues and
``eigvalsh`` is both exact and the cheapest correct choice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .dmatrix import DensityMatrix, basis_labels
from .errors import ConfigError, ModelConsistencyError, NumericalError

__all__ = [
    "EntanglementReport",
    "partial_transpose",
    "partial_trace",
    "negativity",
    "pi_tangle",
    "GHZ_THRESHOLD",
    "PAIR_ZERO_THRESHOLD",
]

#: π-tangle above which a cell counts as GHZ-type (configurable per call).
GHZ_THRESHOLD = 1e-8

#: Pairwise negativity below which a pair counts as unentangled.
PAIR_ZERO_THRESHOLD = 1e-9

_NEG_CLAMP = -1e-12


def _lex_permutation(labels: Sequence[str]) -> np.ndarray:
    """Index array mapping lexicographic position → position in ``labels``."""
    n = len(labels[0])
    perm = np.empty(len(labels), dtype=int)
    for k, lab in enumerate(labels):
        lex = 0
        for c in lab:
            lex = 2 * lex + (0 if c == "+" else 1)
        perm[lex] = k
    return perm


def _to_lex(rho: Union[DensityMatrix, np.ndarray]):
    """Return (matrix in lex product order, N, permutation or None)."""
    if isinstance(rho, DensityMatrix):
        perm = _lex_permutation(rho.basis_labels)
        mat = rho.entries[np.ix_(perm, perm)]
        n = rho.n_detectors
        return mat, n, perm
    mat = np.asarray(rho, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {mat.shape}")
    n = int(round(math.log2(mat.shape[0])))
    if 2**n != mat.shape[0]:
        raise ConfigError(f"matrix dimension {mat.shape[0]} is not a power of 2")
    return mat, n, None


def _check_subset(subset, n: int, *, proper: bool = True) -> tuple:
    idx = sorted(set(int(k) for k in subset))
    if not idx:
        raise ConfigError("subset of detector indices must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ConfigError(f"detector indices {idx} out of range for N={n}")
    if proper and len(idx) == n:
        raise ConfigError("subset must be a proper subset of the detectors")
    return tuple(idx)


def partial_transpose(
    rho: Union[DensityMatrix, np.ndarray], subset
) -> np.ndarray:
    """Transpose the tensor factors in ``subset`` (0-based detector indices).

    Returns a plain complex matrix in the same basis convention as the
    input.  Applying the same subset twice returns the input exactly.
    """
    mat, n, perm = _to_lex(rho)
    idx = _check_subset(subset, n, proper=False)
    tens = mat.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    for k in idx:
        axes[k], axes[n + k] = axes[n + k], axes[k]
    out = tens.transpose(axes).reshape(2**n, 2**n)
    if perm is not None:
        inv = np.argsort(perm)
        out = out[np.ix_(inv, inv)]
    return out


def partial_trace(
    rho: Union[DensityMatrix, np.ndarray], keep
) -> Union[DensityMatrix, np.ndarray]:
    """Trace out every detector not in ``keep`` (0-based indices).

    A :class:`DensityMatrix` input yields a :class:`DensityMatrix` over the
    kept detectors (in ascending original order), validated for trace,
    Hermiticity and positivity; an ndarray yields an ndarray.
    """
    mat, n, perm = _to_lex(rho)
    kept = _check_subset(keep, n, proper=True)
    drop = [k for k in range(n) if k not in kept]
    tens = mat.reshape((2,) * (2 * n))
    for k in reversed(drop):
        tens = np.trace(tens, axis1=k, axis2=tens.ndim // 2 + k)
    m = len(kept)
    out = tens.reshape(2**m, 2**m)
    if perm is None:
        return out
    labels = basis_labels(m)
    inv = np.argsort(_lex_permutation(labels))
    reordered = out[np.ix_(inv, inv)]
    dm = DensityMatrix(2**m, reordered, labels)
    dm.validate(uniform_diagonal=False)
    return dm


def _trace_norm_hermitian(mat: np.ndarray) -> float:
    try:
        evals = np.linalg.eigvalsh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigensolver failed on a {mat.shape[0]}×{mat.shape[0]} partial "
            f"transpose: {exc}"
        ) from exc
    return float(np.sum(np.abs(evals)))


def negativity(rho: Union[DensityMatrix, np.ndarray], subset) -> float:
    """(‖ρ^{T_subset}‖₁ − 1)/2 ≥ 0.

    Values in (−10⁻¹², 0) are numerical noise and clamp to 0; anything
    more negative means the input was not a unit-trace state and raises.
    """
    mat, n, _ = _to_lex(rho)
    idx = _check_subset(subset, n, proper=False)
    herm = np.max(np.abs(mat - mat.conj().T))
    if herm > 1e-10:
        raise ConfigError(
            f"negativity needs a Hermitian input; worst asymmetry {herm:.3e}"
        )
    tens = mat.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    for k in idx:
        axes[k], axes[n + k] = axes[n + k], axes[k]
    pt = tens.transpose(axes).reshape(2**n, 2**n)
    val = 0.5 * (_trace_norm_hermitian(pt) - 1.0)
    if val < 0.0:
        if val < _NEG_CLAMP:
            raise ModelConsistencyError(
                f"negativity {val!r} below the noise clamp; the input is not "
                f"a normalized state"
            )
        return 0.0
    return val


@dataclass(frozen=True)
class EntanglementReport:
    """π-tangle decomposition of a three-detector state.

    ``negativities`` holds the one-vs-rest cuts ("A|BC", "B|CA", "C|AB")
    and the pairwise marginals ("A|B", "B|C", "C|A").  ``ghz_type`` is the
    explicit classification: tripartite π above ``ghz_threshold`` while
    every pairwise negativity sits below ``pair_zero_threshold``.
    """

    negativities: dict
    pi_components: tuple
    pi_tangle_raw: float
    pi_tangle_clamped: float
    ghz_type: bool
    ghz_threshold: float = GHZ_THRESHOLD
    pair_zero_threshold: float = PAIR_ZERO_THRESHOLD

    def to_json(self) -> str:
        return json.dumps(
            {
                "negativities": self.negativities,
                "pi_components": list(self.pi_components),
                "pi_tangle_raw": self.pi_tangle_raw,
                "pi_tangle_clamped": self.pi_tangle_clamped,
                "ghz_type": self.ghz_type,
                "ghz_threshold": self.ghz_threshold,
                "pair_zero_threshold": self.pair_zero_threshold,
            }
        )

    @classmethod
    def from_json(cls, text) -> "EntanglementReport":
        try:
            d = json.loads(text)
            return cls(
                negativities=dict(d["negativities"]),
                pi_components=tuple(d["pi_components"]),
                pi_tangle_raw=float(d["pi_tangle_raw"]),
                pi_tangle_clamped=float(d["pi_tangle_clamped"]),
                ghz_type=bool(d["ghz_type"]),
                ghz_threshold=float(d["ghz_threshold"]),
                pair_zero_threshold=float(d["pair_zero_threshold"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed entanglement report JSON: {exc}") from exc


def pi_tangle(
    rho_abc: Union[DensityMatrix, np.ndarray],
    *,
    ghz_threshold: Optional[float] = None,
    pair_zero_threshold: Optional[float] = None,
) -> EntanglementReport:
    """Full π-tangle report for a three-detector state.

    π_X = N²_{X|rest} − Σ_Y N²_{X|Y}, π = (π_A + π_B + π_C)/3; the clamped
    value max(π, 0) is what downstream maps plot.
    """
    mat, n, _ = _to_lex(rho_abc)
    if n != 3:
        raise ConfigError(f"pi_tangle requires exactly 3 detectors, got N={n}")
    gt = GHZ_THRESHOLD if ghz_threshold is None else float(ghz_threshold)
    pt = PAIR_ZERO_THRESHOLD if pair_zero_threshold is None else float(pair_zero_threshold)

    one_vs_rest = {
        "A|BC": negativity(mat, {0}),
        "B|CA": negativity(mat, {1}),
        "C|AB": negativity(mat, {2}),
    }
    pair_of = {
        "A|B": (0, 1),
        "B|C": (1, 2),
        "C|A": (0, 2),
    }
    pairwise = {}
    for name, (i, j) in pair_of.items():
        red = partial_trace(mat, {i, j})
        pairwise[name] = negativity(red, {0})

    def sq(x: float) -> float:
        return x * x

    pi_a = sq(one_vs_rest["A|BC"]) - sq(pairwise["A|B"]) - sq(pairwise["C|A"])
    pi_b = sq(one_vs_rest["B|CA"]) - sq(pairwise["A|B"]) - sq(pairwise["B|C"])
    pi_c = sq(one_vs_rest["C|AB"]) - sq(pairwise["B|C"]) - sq(pairwise["C|A"])
    raw = (pi_a + pi_b + pi_c) / 3.0
    clamped = max(raw, 0.0)
    ghz = bool(clamped > gt and all(v < pt for v in pairwise.values()))

    negs = {**one_vs_rest, **pairwise}
    return EntanglementReport(
        negativities=negs,
        pi_components=(pi_a, pi_b, pi_c),
        pi_tangle_raw=raw,
        pi_tangle_clamped=clamped,
        ghz_type=ghz,
        ghz_threshold=gt,
        pair_zero_threshold=pt,
    )
