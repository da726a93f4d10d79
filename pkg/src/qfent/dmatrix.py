"""Exact reduced density matrices of N gapless detectors.

The detectors dephase in the σ_x product basis: starting from the
uncorrelated ground state, the reduced state at time t̃ has *uniform*
diagonal 2^{−N} and off-diagonal entries built entirely from the pairwise
kernels of :mod:`qfent.kernels`.  Writing each basis vector as a sign
string (``+``/``−`` per detector) and m = (s − r)/2 ∈ {−1, 0, +1}ᴺ for the
entry at (row r, column s):

    ρ[r, s] = 2^{−N} · exp[ 2i t̃ Σⱼ mⱼ Δ̃ⱼ ]
                     · exp[ ¼ i (sᵀϑ s − rᵀϑ r) ]
                     · exp[ −Σⱼ |mⱼ| Γⱼ − Σ_{i<j} mᵢmⱼ Ξᵢⱼ ]

``build_general`` implements exactly that for N ≤ 6 and is the source of
truth.  ``build_bipartite`` and ``build_tripartite_equilateral`` are
independent literal transcriptions of the 4×4 and 8×8 element lists,
kept separate so the cross-check between the two routes stays meaningful.

Basis order: sign strings sorted by number of ``−`` first, then
lexicographically with ``+`` before ``−`` — e.g. for N = 3:
+++, ++−, +−+, −++, +−−, −+−, −−+, −−−.
"""

from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelConsistencyError
from .kernels import (
    KernelCache,
    ModelParams,
    decay_exponent,
    kernel_set,
    vartheta as _vartheta_op,
    xi as _xi_op,
)

__all__ = [
    "DensityMatrix",
    "basis_labels",
    "build_general",
    "build_bipartite",
    "build_tripartite_equilateral",
    "permute_basis",
]

_PSD_FLOOR = -1e-9
_HERM_TOL = 1e-12
_TRACE_TOL = 1e-12
_MAX_N = 6


def basis_labels(n_detectors: int) -> tuple:
    """Sign-string basis, ordered by weight then lexicographically."""
    if not (1 <= n_detectors <= _MAX_N):
        raise ConfigError(
            f"n_detectors must be in 1..{_MAX_N}, got {n_detectors!r}"
        )
    labs = ["".join(c) for c in itertools.product("+-", repeat=n_detectors)]
    labs.sort(key=lambda s: (s.count("-"), s))
    return tuple(labs)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """An immutable density matrix with its basis labels."""

    dim: int
    entries: np.ndarray
    basis_labels: tuple

    def __post_init__(self):
        ent = np.array(self.entries, dtype=complex)
        if ent.shape != (self.dim, self.dim):
            raise ConfigError(
                f"entries shape {ent.shape} does not match dim {self.dim}"
            )
        if len(self.basis_labels) != self.dim:
            raise ConfigError(
                f"{len(self.basis_labels)} basis labels for dim {self.dim}"
            )
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)
        object.__setattr__(self, "basis_labels", tuple(self.basis_labels))

    @property
    def n_detectors(self) -> int:
        return len(self.basis_labels[0])

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def purity(self) -> float:
        """Tr ρ² (real for Hermitian ρ)."""
        return float(np.sum(np.abs(self.entries) ** 2))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def validate(self, *, uniform_diagonal: bool = True) -> None:
        """Check Hermiticity, unit trace, diagonal, and positivity.

        Raises :class:`ModelConsistencyError` naming the worst offender.
        The PSD alarm reports the basis labels that dominate the offending
        eigenvector, since a sign slip in one assembled entry shows up
        there first.
        """
        ent = self.entries
        herm = np.max(np.abs(ent - ent.conj().T))
        if herm > _HERM_TOL:
            i, j = np.unravel_index(
                np.argmax(np.abs(ent - ent.conj().T)), ent.shape
            )
            raise ModelConsistencyError(
                f"matrix is not Hermitian: |ρ[{i},{j}] − ρ[{j},{i}]*| = {herm:.3e}"
            )
        tr = self.trace()
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ModelConsistencyError(f"trace is {tr!r}, expected 1")
        if uniform_diagonal:
            want = 1.0 / self.dim
            diag = np.diag(ent)
            worst = int(np.argmax(np.abs(diag - want)))
            if abs(diag[worst] - want) > _TRACE_TOL:
                raise ModelConsistencyError(
                    f"diagonal entry {self.basis_labels[worst]!r} is "
                    f"{diag[worst]!r}, expected {want!r}"
                )
        evals, evecs = np.linalg.eigh(ent)
        if evals[0] < _PSD_FLOOR:
            v = np.abs(evecs[:, 0])
            order = np.argsort(v)[::-1]
            hot = ", ".join(
                f"{self.basis_labels[k]} ({v[k]:.2f})" for k in order[:3]
            )
            raise ModelConsistencyError(
                f"minimum eigenvalue {evals[0]:.3e} < {_PSD_FLOOR:.0e}; "
                f"offending eigenvector concentrates on basis states: {hot}"
            )

    def to_json(self) -> str:
        payload = {
            "dim": self.dim,
            "basis_labels": list(self.basis_labels),
            "entries": [
                [[z.real, z.imag] for z in row] for row in self.entries.tolist()
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text) -> "DensityMatrix":
        try:
            payload = json.loads(text)
            dim = payload["dim"]
            labels = tuple(payload["basis_labels"])
            raw = payload["entries"]
            ent = np.array(
                [[complex(re, im) for re, im in row] for row in raw], dtype=complex
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed density-matrix JSON: {exc}") from exc
        return cls(dim, ent, labels)


def _label_signs(labels: Sequence[str]) -> np.ndarray:
    return np.array(
        [[1 if c == "+" else -1 for c in lab] for lab in labels], dtype=float
    )


def build_general(
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> DensityMatrix:
    """Reduced state of all N detectors at time t̃ (N ≤ 6)."""
    N = p.n_detectors
    if N > _MAX_N:
        raise ConfigError(
            f"unsupported dimension: {N} detectors give dim {2**N} > {2**_MAX_N}"
        )
    ks = kernel_set(t_tilde, p, rel_tol=rel_tol, cache=cache)
    labels = basis_labels(N)
    signs = _label_signs(labels)
    gaps = p.gaps()

    m = 0.5 * (signs[None, :, :] - signs[:, None, :])  # [row r, col s, detector]
    phase_delta = 2.0 * float(t_tilde) * (m @ gaps)
    q = 0.25 * np.einsum("ai,ij,aj->a", signs, ks.vartheta, signs)
    phase_theta = q[None, :] - q[:, None]
    damp = np.abs(m) @ ks.gamma + 0.5 * np.einsum(
        "rsi,ij,rsj->rs", m, ks.xi, m
    )
    entries = (2.0**-N) * np.exp(1j * (phase_delta + phase_theta) - damp)

    dm = DensityMatrix(2**N, entries, labels)
    dm.validate()
    return dm


def build_bipartite(
    t_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> DensityMatrix:
    """Two-detector state, transcribed entry by entry.

    Basis {++, +−, −+, −−}; a = e^{−Γ_A}, b = e^{−Γ_B}, D_j = 2t̃Δ̃_j.
    """
    if p.n_detectors != 2:
        raise ConfigError(
            f"build_bipartite requires exactly 2 detectors, got {p.n_detectors}"
        )
    t = float(t_tilde)
    ga = decay_exponent(0, t, p, rel_tol=rel_tol, cache=cache)
    gb = decay_exponent(1, t, p, rel_tol=rel_tol, cache=cache)
    th = _vartheta_op(0, 1, t, p, rel_tol=rel_tol, cache=cache)
    x = _xi_op(0, 1, t, p, rel_tol=rel_tol, cache=cache)
    da, db = 2.0 * t * p.detectors[0].delta_tilde, 2.0 * t * p.detectors[1].delta_tilde
    a = math.exp(-ga)
    b = math.exp(-gb)

    E = cmath.exp
    rho = np.empty((4, 4), dtype=complex)
    rho[0, 0] = rho[1, 1] = rho[2, 2] = rho[3, 3] = 0.25
    rho[0, 1] = 0.25 * E(-1j * db) * b * E(-1j * th)
    rho[0, 2] = 0.25 * E(-1j * da) * a * E(-1j * th)
    rho[0, 3] = 0.25 * E(-1j * (da + db)) * a * b * math.exp(-x)
    rho[1, 2] = 0.25 * E(-1j * (da - db)) * a * b * math.exp(x)
    rho[1, 3] = 0.25 * E(-1j * da) * a * E(1j * th)
    rho[2, 3] = 0.25 * E(-1j * db) * b * E(1j * th)
    for i in range(4):
        for j in range(i + 1, 4):
            rho[j, i] = rho[i, j].conjugate()

    dm = DensityMatrix(4, rho, basis_labels(2))
    dm.validate()
    return dm


def build_tripartite_equilateral(
    t_tilde: float,
    L_tilde: float,
    p: ModelParams,
    *,
    rel_tol: Optional[float] = None,
    cache: Optional[KernelCache] = None,
) -> DensityMatrix:
    """Three detectors on an equilateral triangle of side L̃, entry by entry.

    Basis {+++, ++−, +−+, −++, +−−, −+−, −−+, −−−}.  With unequal
    couplings the per-pair ϑ/Ξ values differ by their coupling prefactors
    only; the single radial integral per (t̃, L̃) is shared through the
    kernel cache.
    """
    if p.n_detectors != 3:
        raise ConfigError(
            f"build_tripartite_equilateral requires 3 detectors, got {p.n_detectors}"
        )
    if not (L_tilde > 0.0):
        raise ConfigError(f"L_tilde must be > 0, got {L_tilde!r}")
    for i, j in ((0, 1), (0, 2), (1, 2)):
        sep = p.separation(i, j)
        if not math.isclose(sep, L_tilde, rel_tol=1e-9, abs_tol=0.0):
            raise ConfigError(
                f"detectors {i},{j} are {sep!r} apart, not the stated "
                f"equilateral side {L_tilde!r}"
            )
    t = float(t_tilde)
    g = [decay_exponent(j, t, p, rel_tol=rel_tol, cache=cache) for j in range(3)]
    th_ab = _vartheta_op(0, 1, t, p, rel_tol=rel_tol, cache=cache)
    th_ac = _vartheta_op(0, 2, t, p, rel_tol=rel_tol, cache=cache)
    th_bc = _vartheta_op(1, 2, t, p, rel_tol=rel_tol, cache=cache)
    xi_ab = _xi_op(0, 1, t, p, rel_tol=rel_tol, cache=cache)
    xi_ac = _xi_op(0, 2, t, p, rel_tol=rel_tol, cache=cache)
    xi_bc = _xi_op(1, 2, t, p, rel_tol=rel_tol, cache=cache)
    da = 2.0 * t * p.detectors[0].delta_tilde
    db = 2.0 * t * p.detectors[1].delta_tilde
    dc = 2.0 * t * p.detectors[2].delta_tilde
    ga, gb, gc = g

    # (row, col, Δ-phase, ϑ-phase, damping) — upper triangle.
    elems = [
        (0, 1, -dc, -(th_bc + th_ac), gc),
        (0, 2, -db, -(th_ab + th_bc), gb),
        (0, 3, -da, -(th_ab + th_ac), ga),
        (0, 4, -(db + dc), -(th_ab + th_ac), gb + gc + xi_bc),
        (0, 5, -(da + dc), -(th_ab + th_bc), ga + gc + xi_ac),
        (0, 6, -(da + db), -(th_bc + th_ac), ga + gb + xi_ab),
        (0, 7, -(da + db + dc), 0.0, ga + gb + gc + xi_ab + xi_bc + xi_ac),
        (1, 2, -db + dc, th_ac - th_ab, gb + gc - xi_bc),
        (1, 3, -da + dc, th_bc - th_ab, ga + gc - xi_ac),
        (1, 4, -db, th_bc - th_ab, gb),
        (1, 5, -da, th_ac - th_ab, ga),
        (1, 6, -da - db + dc, 0.0, ga + gb + gc + xi_ab - xi_bc - xi_ac),
        (1, 7, -(da + db), th_bc + th_ac, ga + gb + xi_ab),
        (2, 3, -da + db, th_bc - th_ac, ga + gb - xi_ab),
        (2, 4, -dc, th_bc - th_ac, gc),
        (2, 5, -da + db - dc, 0.0, ga + gb + gc - xi_ab - xi_bc + xi_ac),
        (2, 6, -da, th_ab - th_ac, ga),
        (2, 7, -(da + dc), th_ab + th_bc, ga + gc + xi_ac),
        (3, 4, da - db - dc, 0.0, ga + gb + gc - xi_ab + xi_bc - xi_ac),
        (3, 5, -dc, th_ac - th_bc, gc),
        (3, 6, -db, th_ab - th_bc, gb),
        (3, 7, -(db + dc), th_ab + th_ac, gb + gc + xi_bc),
        (4, 5, -da + db, th_ac - th_bc, ga + gb - xi_ab),
        (4, 6, -da + dc, th_ab - th_bc, ga + gc - xi_ac),
        (4, 7, -da, th_ab + th_ac, ga),
        (5, 6, -db + dc, th_ab - th_ac, gb + gc - xi_bc),
        (5, 7, -db, th_ab + th_bc, gb),
        (6, 7, -dc, th_bc + th_ac, gc),
    ]
    rho = np.zeros((8, 8), dtype=complex)
    for k in range(8):
        rho[k, k] = 0.125
    for i, j, pd, pt, dmp in elems:
        val = 0.125 * cmath.exp(1j * (pd + pt) - dmp)
        rho[i, j] = val
        rho[j, i] = val.conjugate()

    dm = DensityMatrix(8, rho, basis_labels(3))
    dm.validate()
    return dm


def permute_basis(dm: DensityMatrix, perm: Sequence[int]) -> DensityMatrix:
    """Relabel detectors: new detector k is old detector ``perm[k]``.

    Returns the same state expressed in the relabeled product basis,
    preserving this module's basis ordering convention.
    """
    N = dm.n_detectors
    if sorted(perm) != list(range(N)):
        raise ConfigError(f"perm must be a permutation of 0..{N - 1}, got {perm!r}")
    labels = dm.basis_labels
    index = {lab: k for k, lab in enumerate(labels)}
    # New-basis label ℓ' describes new detector k in position k; the same
    # physical state in old labels has old detector perm[k] in state ℓ'[k].
    mapping = []
    for lab in labels:
        old = [""] * N
        for k in range(N):
            old[perm[k]] = lab[k]
        mapping.append(index["".join(old)])
    idx = np.array(mapping)
    ent = dm.entries[np.ix_(idx, idx)]
    return DensityMatrix(dm.dim, ent, labels)
