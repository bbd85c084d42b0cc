"""One-particle conjugate operators: smooth cutoffs, the auxiliary weight d, m_δ, and a_m."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

Variant = Literal["translations", "regularized_n", "m_delta"]


def _smooth_step(t):
    """C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi(omega):
    """Even C^∞ cutoff: 1 on |ω| ≤ 1/2, 0 on |ω| ≥ 1, nonincreasing in |ω|."""
    x = np.abs(np.asarray(omega, dtype=float))
    out = 1.0 - _smooth_step(2.0 * x - 1.0)
    return out if out.ndim else float(out)


def aux_d(omega, mu: float):
    """Weight that grows like |ω|^{-μ/4} at 0 and |ω|^{μ/4} at ∞, equal to 1 near |ω| = 1."""
    w = np.abs(np.asarray(omega, dtype=float))
    if np.any(w == 0):
        raise ValueError("d is defined away from 0")
    c1, c2 = chi(w), chi(w / 2)
    out = c1 * w ** (-mu / 4) + c2 - c1 + (1 - c2) * w ** (mu / 4)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ConjugateSpec:
    """Parameters of the modified generator of radial translations."""

    delta0: float = 1.0
    delta_inf: float = 1.0
    mu: float = 0.1
    variant: Variant = "translations"
    n: float = 100.0

    def __post_init__(self):
        if not 0 < self.delta0 <= 1:
            raise ValueError("delta0 must lie in (0, 1]")
        if self.delta_inf < 1:
            raise ValueError("delta_inf must be at least 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.variant not in ("translations", "regularized_n", "m_delta"):
            raise ValueError(f"unknown conjugate variant {self.variant!r}")
        if self.variant == "regularized_n" and self.n <= 0:
            raise ValueError("regularization parameter must be positive")


def m_delta(omega, spec: ConjugateSpec):
    """Plateaued weight d(δ0) below δ0/2, d(ω) in between, d(δ∞) above 2δ∞ (even in ω)."""
    w = np.abs(np.asarray(omega, dtype=float))
    d0, dinf = aux_d(spec.delta0, spec.mu), aux_d(spec.delta_inf, spec.mu)
    lo, hi = chi(w / spec.delta0), chi(w / (2 * spec.delta_inf))
    middle = hi - lo
    safe = np.where(w > 0, w, 1.0)
    dw = np.where(middle > 0, aux_d(safe, spec.mu), 0.0)
    out = d0 * lo + dw * middle + dinf * (1 - hi)
    return out if np.ndim(out) else float(out)


def weight_function(omega, spec: ConjugateSpec) -> np.ndarray:
    """The function m with a = (i/2){m d/dω + d/dω m} for the chosen variant."""
    w = np.asarray(omega, dtype=float)
    if spec.variant == "translations":
        return np.ones_like(w)
    if spec.variant == "regularized_n":
        return np.abs(w) / np.sqrt(w**2 + 1.0 / spec.n)
    return np.asarray(m_delta(w, spec), dtype=float)


def difference_stencil(omega: np.ndarray) -> np.ndarray:
    """Central differences on nodal values, with mirrored ghost spacing at both ends."""
    omega = np.asarray(omega, dtype=float)
    size = omega.size
    d = np.zeros((size, size))
    if size < 2:
        return d
    for j in range(size):
        left = omega[j] - omega[j - 1] if j > 0 else omega[1] - omega[0]
        right = omega[j + 1] - omega[j] if j < size - 1 else omega[-1] - omega[-2]
        span = left + right
        if j < size - 1:
            d[j, j + 1] = 1.0 / span
        if j > 0:
            d[j, j - 1] = -1.0 / span
    return d


def grid_conjugate(omega, weight, m_values) -> np.ndarray:
    """Antisymmetrized (i/2){m d/dω + d/dω m} acting on ℓ²-normalized grid values.

    Grid vectors carry the square root of the quadrature weight, so the
    nodal stencil is conjugated by W^{1/2}.  The result is Hermitian as stored.
    """
    omega = np.asarray(omega, dtype=float)
    weight = np.asarray(weight, dtype=float)
    m_values = np.asarray(m_values, dtype=float)
    if omega.size < 2:
        warnings.warn("single-mode grid: derivative conjugate is zero", stacklevel=2)
        return np.zeros((omega.size, omega.size), dtype=complex)
    root = np.sqrt(weight)
    d = difference_stencil(omega) * root[:, None] / root[None, :]
    k = 0.5 * (m_values[:, None] + m_values[None, :]) * d
    x = k - k.T
    return 0.5j * x


def commutator_matrix(omega, a) -> np.ndarray:
    """c = i[diag(ω), a] computed entrywise."""
    omega = np.asarray(omega, dtype=float)
    return 1j * (omega[:, None] - omega[None, :]) * np.asarray(a)
