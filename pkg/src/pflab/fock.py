"""Truncated bosonic Fock space over a finite mode set.

States are occupation tuples ``(n_1, ..., n_M)`` with ``sum(n) <= n_total_max``
and ``n_j <= per_mode_cap``, stored in lexicographic order.  All second
quantization primitives are exact sparse matrices on this basis.  Operators
that move quanta (creation, ``Γ(b)`` for non-diagonal ``b``) are compressions
of their untruncated counterparts, so algebraic identities hold exactly on
the sub-cutoff part of the space.  When ``per_mode_cap < n_total_max`` the
per-mode cap also clips number-preserving hoppings; identities that require
full sectors then only hold on states away from that cap as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_DIM = 20000
CONTRACTION_TOL = 1e-12


class DimensionCapError(ValueError):
    """Raised when a requested truncation exceeds the configured dimension cap."""


@dataclass(frozen=True)
class ModeSet:
    """Discretized one-particle dispersion: frequencies, quadrature weights, reservoir tags."""

    omega: np.ndarray
    weight: np.ndarray
    reservoir: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        weight = np.asarray(self.weight, dtype=float)
        reservoir = np.asarray(self.reservoir, dtype=int)
        if omega.ndim != 1 or omega.size == 0:
            raise ValueError("a mode set needs at least one mode")
        if weight.shape != omega.shape or reservoir.shape != omega.shape:
            raise ValueError("omega, weight and reservoir must have equal length")
        if np.any(omega <= 0):
            raise ValueError("mode frequencies must be positive")
        if np.any(weight <= 0):
            raise ValueError("quadrature weights must be positive")
        if np.any(reservoir < 0):
            raise ValueError("reservoir tags must be nonnegative")
        for tag in np.unique(reservoir):
            if np.any(np.diff(omega[reservoir == tag]) <= 0):
                raise ValueError("frequencies must increase strictly within a reservoir")
        for name, arr in (("omega", omega), ("weight", weight), ("reservoir", reservoir)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, omega, weight, reservoirs=None) -> "ModeSet":
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if reservoirs is None:
            reservoirs = np.zeros(omega.size, dtype=int)
        return cls(omega, np.atleast_1d(np.asarray(weight, dtype=float)), np.asarray(reservoirs))

    @property
    def count(self) -> int:
        return int(self.omega.size)


def _count_states(mode_count: int, total: int, cap: int) -> int:
    # ways[s] = number of tuples over the modes seen so far with sum s
    ways = [1] + [0] * total
    for _ in range(mode_count):
        new = [0] * (total + 1)
        for s, w in enumerate(ways):
            if w:
                for n in range(min(cap, total - s) + 1):
                    new[s + n] += w
        ways = new
    return sum(ways)


def _enumerate(mode_count: int, total: int, cap: int) -> np.ndarray:
    out: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], remaining: int):
        if len(prefix) == mode_count:
            out.append(prefix)
            return
        for n in range(min(cap, remaining) + 1):
            rec(prefix + (n,), remaining - n)

    rec((), total)
    return np.array(out, dtype=np.int64).reshape(len(out), mode_count)


@dataclass(frozen=True, eq=False)
class OccBasis:
    """Truncated occupation-number basis with a joint total and per-mode cap."""

    mode_count: int
    n_total_max: int
    per_mode_cap: int
    states: np.ndarray
    index: dict = field(repr=False)
    basis_id: str = ""

    @property
    def dim(self) -> int:
        return int(self.states.shape[0])

    @property
    def totals(self) -> np.ndarray:
        return self._totals

    @property
    def vacuum_index(self) -> int:
        return 0

    def __post_init__(self):
        totals = self.states.sum(axis=1)
        totals.setflags(write=False)
        object.__setattr__(self, "_totals", totals)
        radix = self.per_mode_cap + 1
        if radix ** self.mode_count < 2**62:
            powers = radix ** np.arange(self.mode_count - 1, -1, -1, dtype=np.int64)
            keys = self.states @ powers
        else:
            powers, keys = None, None
        object.__setattr__(self, "_powers", powers)
        object.__setattr__(self, "_keys", keys)

    def lookup(self, tuples: np.ndarray) -> np.ndarray:
        """Vectorized tuple -> ordinal; -1 for tuples outside the basis."""
        tuples = np.asarray(tuples, dtype=np.int64).reshape(-1, self.mode_count)
        if self._powers is None:
            return np.array([self.index.get(tuple(t), -1) for t in tuples], dtype=np.int64)
        inside = np.all((tuples >= 0) & (tuples <= self.per_mode_cap), axis=1)
        inside &= tuples.sum(axis=1) <= self.n_total_max
        keys = tuples @ self._powers
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self.dim - 1)
        found = inside & (self._keys[pos] == keys)
        return np.where(found, pos, -1)

    def sector(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.totals == n)

    def below_cutoff(self, margin: int = 1) -> np.ndarray:
        """Indices of states with total quanta at most ``n_total_max - margin``."""
        return np.flatnonzero(self.totals <= self.n_total_max - margin)


def build_basis(
    modes: ModeSet | int,
    n_total_max: int,
    per_mode_cap: int | None = None,
    *,
    max_dim: int = DEFAULT_MAX_DIM,
) -> OccBasis:
    """Enumerate the truncated occupation basis in lexicographic order."""
    mode_count = modes.count if isinstance(modes, ModeSet) else int(modes)
    if per_mode_cap is None:
        per_mode_cap = n_total_max
    if mode_count <= 0:
        raise ValueError("mode_count must be at least 1")
    if n_total_max < 0 or per_mode_cap < 0:
        raise ValueError("truncation parameters must be nonnegative")
    dim = _count_states(mode_count, n_total_max, per_mode_cap)
    if dim > max_dim:
        raise DimensionCapError(
            f"truncation too large: dimension {dim} exceeds cap {max_dim}"
        )
    states = _enumerate(mode_count, n_total_max, per_mode_cap)
    states.setflags(write=False)
    index = {tuple(int(x) for x in s): i for i, s in enumerate(states)}
    return OccBasis(
        mode_count,
        n_total_max,
        per_mode_cap,
        states,
        index,
        basis_id=f"occ(M={mode_count},N={n_total_max},cap={per_mode_cap})",
    )


@dataclass(frozen=True)
class SparseOp:
    """Canonical complex sparse matrix tagged with the basis it acts on."""

    matrix: sp.csr_matrix
    basis_id: str
    hermitian: bool

    @classmethod
    def wrap(cls, matrix, basis_id: str = "", hermitian: bool | None = None) -> "SparseOp":
        m = sp.csr_matrix(matrix, dtype=complex)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        exact = m.shape[0] == m.shape[1] and (m - m.conj().T).count_nonzero() == 0
        if hermitian and not exact:
            raise ValueError("operator flagged Hermitian is not Hermitian as stored")
        return cls(m, basis_id, exact if hermitian is None else hermitian)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def entries(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@lru_cache(maxsize=512)
def _lowering(basis: OccBasis, j: int) -> sp.csr_matrix:
    src = np.flatnonzero(basis.states[:, j] > 0)
    targets = basis.states[src].copy()
    targets[:, j] -= 1
    dst = basis.lookup(targets)
    vals = np.sqrt(basis.states[src, j].astype(float))
    return sp.csr_matrix((vals, (dst, src)), shape=(basis.dim, basis.dim), dtype=complex)


def mode_annihilators(basis: OccBasis) -> list[sp.csr_matrix]:
    return [_lowering(basis, j) for j in range(basis.mode_count)]


def _check_vector(basis: OccBasis, f) -> np.ndarray:
    f = np.asarray(f, dtype=complex).reshape(-1)
    if f.size != basis.mode_count:
        raise ValueError(f"expected a vector of length {basis.mode_count}, got {f.size}")
    return f


def annihilation(basis: OccBasis, f) -> sp.csr_matrix:
    """a(f) = sum_j conj(f_j) a_j, conjugate linear in f."""
    f = _check_vector(basis, f)
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for j, fj in enumerate(f):
        if fj != 0:
            out = out + np.conj(fj) * _lowering(basis, j)
    return _canonical(out)


def creation(basis: OccBasis, f) -> sp.csr_matrix:
    """a*(f), the adjoint of a(f) on the truncated space."""
    return _canonical(annihilation(basis, f).conj().T)


def segal_field(basis: OccBasis, f) -> sp.csr_matrix:
    """phi(f) = (a(f) + a*(f)) / sqrt(2), Hermitian as stored."""
    a = annihilation(basis, f)
    return _canonical((a + a.conj().T) / np.sqrt(2))


def number_operator(basis: OccBasis) -> sp.csr_matrix:
    return _canonical(sp.diags(basis.totals.astype(complex), format="csr"))


def dgamma(basis: OccBasis, h) -> sp.csr_matrix:
    """Second quantization dΓ(h) = sum_jk h_jk a_j* a_k."""
    h = np.asarray(h, dtype=complex)
    m = basis.mode_count
    if h.shape != (m, m):
        raise ValueError(f"expected a {m}x{m} matrix")
    lows = mode_annihilators(basis)
    out = sp.diags(basis.states @ np.diag(h), format="csr").astype(complex)
    for k in range(m):
        for j in range(m):
            if j != k and h[j, k] != 0:
                out = out + h[j, k] * (lows[j].conj().T @ lows[k])
    return _canonical(out)


def _canonical(m) -> sp.csr_matrix:
    m = sp.csr_matrix(m, dtype=complex)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _permanent(a: np.ndarray) -> complex:
    """Ryser's formula."""
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j
    total = 0j
    for r in range(1, n + 1):
        sign = (-1) ** r
        for cols in combinations(range(n), r):
            total += sign * np.prod(a[:, cols].sum(axis=1))
    return (-1) ** n * total


def _expand(occ: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(occ.size), occ)


def _factorial_product(occ: np.ndarray) -> int:
    return math.prod(math.factorial(int(x)) for x in occ)


def _check_contraction(b: np.ndarray):
    if b.size and np.linalg.norm(b, 2) > 1 + CONTRACTION_TOL:
        raise ValueError("b is not a contraction")


def _sector_lift(src: OccBasis, dst: OccBasis, b: np.ndarray, q: np.ndarray | None):
    rows, cols, vals = [], [], []
    top = min(src.n_total_max, dst.n_total_max)
    for n in range(top + 1):
        s_idx, d_idx = src.sector(n), dst.sector(n)
        if s_idx.size == 0 or d_idx.size == 0:
            continue
        if n == 0:
            if q is None:
                rows.append(d_idx[0])
                cols.append(s_idx[0])
                vals.append(1.0 + 0j)
            continue
        s_exp = [(_expand(src.states[i]), _factorial_product(src.states[i])) for i in s_idx]
        for di in d_idx:
            d_rows = _expand(dst.states[di])
            d_norm = _factorial_product(dst.states[di])
            for si, (s_cols, s_norm) in zip(s_idx, s_exp):
                sub = b[np.ix_(d_rows, s_cols)]
                if q is None:
                    val = _permanent(sub)
                else:
                    qs = q[np.ix_(d_rows, s_cols)]
                    val = 0j
                    keep = np.arange(n)
                    for r in range(n):
                        for c in range(n):
                            if qs[r, c] != 0:
                                minor = sub[np.ix_(keep != r, keep != c)]
                                val += qs[r, c] * _permanent(minor)
                if val != 0:
                    rows.append(di)
                    cols.append(si)
                    vals.append(val / math.sqrt(d_norm * s_norm))
    return _canonical(sp.csr_matrix((vals, (rows, cols)), shape=(dst.dim, src.dim)))


def gamma_between(src: OccBasis, dst: OccBasis, b) -> sp.csr_matrix:
    """Γ(b) from the Fock space over ``src`` modes to the one over ``dst`` modes."""
    b = np.asarray(b, dtype=complex)
    if b.shape != (dst.mode_count, src.mode_count):
        raise ValueError("b has the wrong shape for these bases")
    _check_contraction(b)
    return _sector_lift(src, dst, b, None)


def gamma(basis: OccBasis, b) -> sp.csr_matrix:
    """Γ(b) acting as b⊗...⊗b on every sector; requires ‖b‖ ≤ 1."""
    return gamma_between(basis, basis, b)


def dgamma2_between(src: OccBasis, dst: OccBasis, b, q) -> sp.csr_matrix:
    b = np.asarray(b, dtype=complex)
    q = np.asarray(q, dtype=complex)
    shape = (dst.mode_count, src.mode_count)
    if b.shape != shape or q.shape != shape:
        raise ValueError("b and q have the wrong shape for these bases")
    return _sector_lift(src, dst, b, q)


def dgamma2(basis: OccBasis, b, q) -> sp.csr_matrix:
    """dΓ(b, q): sum over slots of b⊗...⊗q⊗...⊗b on every sector."""
    return dgamma2_between(basis, basis, b, q)


@dataclass(frozen=True, eq=False)
class SplitLocalization:
    """Γ̌(b) into the truncated tensor product of two Fock spaces.

    The target is stored as an occupation basis over the concatenated mode
    list (first the ``h0`` modes, then the ``h∞`` modes).  In that labelling
    the canonical identification with the tensor product is the identity,
    and ``pair_index`` gives each target state's position in the two factor
    bases.
    """

    source: OccBasis
    target: OccBasis
    left: OccBasis
    right: OccBasis
    pair_index: np.ndarray
    matrix: sp.csr_matrix

    def lift_pair(self, g0, ginf) -> sp.csr_matrix:
        """dΓ(g0)⊗1 + 1⊗dΓ(g∞) on the target."""
        return dgamma(self.target, _block_diag(g0, ginf))

    def field_pair(self, f0, finf) -> sp.csr_matrix:
        """φ(f0)⊗1 + 1⊗φ(f∞) on the target."""
        return segal_field(self.target, np.concatenate([np.ravel(f0), np.ravel(finf)]))

    def dgamma2(self, b, q) -> sp.csr_matrix:
        return dgamma2_between(self.source, self.target, b, q)


def _block_diag(a, b) -> np.ndarray:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]), dtype=complex)
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0] :, a.shape[1] :] = b
    return out


def split_localize(basis: OccBasis, b0, binf, *, tol: float = 1e-10) -> SplitLocalization:
    """Geometric localization Γ̌(b) for f -> (b0 f, b∞ f)."""
    b0 = np.atleast_2d(np.asarray(b0, dtype=complex))
    binf = np.atleast_2d(np.asarray(binf, dtype=complex))
    m = basis.mode_count
    if b0.shape[1] != m or binf.shape[1] != m:
        raise ValueError("b0 and binf must act on the source modes")
    defect = b0.conj().T @ b0 + binf.conj().T @ binf - np.eye(m)
    if np.abs(defect).max() > tol:
        raise ValueError("b0*b0 + binf*binf is not the identity: b is not an isometry")
    total = basis.n_total_max
    target = build_basis(b0.shape[0] + binf.shape[0], total, total)
    left = build_basis(b0.shape[0], total, total)
    right = build_basis(binf.shape[0], total, total)
    k = b0.shape[0]
    pair = np.stack(
        [left.lookup(target.states[:, :k]), right.lookup(target.states[:, k:])], axis=1
    )
    matrix = gamma_between(basis, target, np.vstack([b0, binf]))
    return SplitLocalization(basis, target, left, right, pair, matrix)


def vacuum(basis: OccBasis) -> np.ndarray:
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.vacuum_index] = 1.0
    return v


__all__: Sequence[str] = [
    "DimensionCapError",
    "ModeSet",
    "OccBasis",
    "SparseOp",
    "build_basis",
    "annihilation",
    "creation",
    "segal_field",
    "number_operator",
    "dgamma",
    "gamma",
    "gamma_between",
    "dgamma2",
    "dgamma2_between",
    "split_localize",
    "SplitLocalization",
    "mode_annihilators",
    "vacuum",
]
