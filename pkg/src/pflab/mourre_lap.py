"""Matrix-level limiting absorption machinery for a Hermitian pair (T, T′) with conjugate A.

Everything is dense: the intended sizes are a few hundred to a few thousand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ._conjugate import chi


def _dense(x) -> np.ndarray:
    return x.toarray() if sp.issparse(x) else np.asarray(x, dtype=complex)


def _herm_funcs(h: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    vals, vecs = np.linalg.eigh(h)
    return (vecs * fn(vals)) @ vecs.conj().T


@dataclass(frozen=True)
class RegularizerReport:
    I_n: np.ndarray
    A_n: np.ndarray
    identity_gap: float | None
    generator_gap: float | None


def regularizer(A, n: float, u: np.ndarray | None = None) -> RegularizerReport:
    """I_n = in(A + in)⁻¹ and A_n = A I_n, with ‖I_n u - u‖ and ‖A_n u - Au‖ when u is given."""
    if n < 1:
        raise ValueError("n must be at least 1")
    a = _dense(A)
    shifted = a + 1j * n * np.eye(a.shape[0])
    try:
        i_n = 1j * n * np.linalg.inv(shifted)
    except np.linalg.LinAlgError as exc:
        raise ValueError("A + in is singular") from exc
    a_n = a @ i_n
    if u is None:
        return RegularizerReport(i_n, a_n, None, None)
    u = np.asarray(u, dtype=complex)
    return RegularizerReport(
        i_n, a_n, float(np.linalg.norm(i_n @ u - u)), float(np.linalg.norm(a_n @ u - a @ u))
    )


@dataclass(frozen=True)
class SlopeReport:
    times: np.ndarray
    ratios: np.ndarray
    slope: float
    commutator_norm: float


def c1_slope_test(B, A, times: Sequence[float]) -> SlopeReport:
    """max_t ‖B W_t - W_t B‖/t with W_t = e^{itA}, compared with ‖[B, A]‖."""
    b, a = _dense(B), _dense(A)
    vals, vecs = np.linalg.eigh(a)
    times = np.asarray(times, dtype=float)
    ratios = []
    for t in times:
        w = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
        ratios.append(np.linalg.norm(b @ w - w @ b, 2) / abs(t))
    ratios = np.array(ratios)
    return SlopeReport(times, ratios, float(ratios.max()), float(np.linalg.norm(b @ a - a @ b, 2)))


def window_profile(E: float, kappa: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth bump equal to 1 on |x-E| ≤ κ/2 and 0 on |x-E| ≥ κ."""

    def f(x):
        return np.asarray(chi((np.asarray(x, dtype=float) - E) / kappa), dtype=float)

    return f


@dataclass(frozen=True, eq=False)
class MourreTriple:
    T: np.ndarray
    Tprime: np.ndarray
    A: np.ndarray
    window: tuple[float, float]
    e: float
    C_M: float
    M: np.ndarray
    f_perp: np.ndarray
    eta: float
    min_M: float

    @property
    def dim(self) -> int:
        return self.T.shape[0]

    def m_power(self, power: float) -> np.ndarray:
        return _herm_funcs(self.M, lambda v: v**power)

    def m_star_norm_sq(self, v: np.ndarray) -> float:
        """⟨v, M⁻¹v⟩."""
        return float(np.vdot(v, np.linalg.solve(self.M, v)).real)


def _lambda_min(h: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (h + h.conj().T))[0])


def build_M(
    T,
    Tprime,
    A,
    E: float,
    kappa: float,
    e: float,
    C_M: float | None = None,
    f: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-10,
) -> MourreTriple:
    """M = T′ + C_M f⊥(T), certified ⪰ e; C_M is searched by bisection when omitted."""
    t, tp, a = _dense(T), _dense(Tprime), _dense(A)
    f = f or window_profile(E, kappa)
    f_perp = _herm_funcs(t, lambda v: 1.0 - f(v))

    def margin(c):
        return _lambda_min(tp + c * f_perp) - e

    if C_M is None:
        lo, hi = 0.0, 1.0
        if margin(lo) >= -tol:
            C_M = 0.0
        else:
            while margin(hi) < -tol:
                hi *= 2
                if hi > 1e8:
                    raise ValueError("no Mourre constant C_M makes M ⪰ e on this window")
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if margin(mid) >= -tol else (mid, hi)
            C_M = hi
    m = tp + C_M * f_perp
    m = 0.5 * (m + m.conj().T)
    min_m = _lambda_min(m)
    if min_m < e - tol:
        raise ValueError(f"M is not bounded below by e on this window (λ_min = {min_m:.3g})")
    eta = max(0.0, 1.0 - _lambda_min(tp))
    return MourreTriple(t, tp, a, (E, kappa), e, float(C_M), m, f_perp, eta, min_m)


@dataclass(frozen=True)
class ResolventReport:
    R: np.ndarray
    norm: float
    m_half_norm: float
    m_half_fperp_norm: float


def t_epsilon(triple: MourreTriple, eps: float) -> np.ndarray:
    """T_ε = T - iεT′."""
    return triple.T - 1j * eps * triple.Tprime


def t_epsilon_resolvent(
    triple: MourreTriple, eps: float, z: complex, eps0: float | None = None
) -> ResolventReport:
    """R_ε(z) = (T - iεT′ - z)⁻¹ and the weighted norms."""
    if eps * z.imag <= 0:
        raise ValueError("ε and Im z must have the same sign")
    if eps0 is not None and abs(eps) > eps0:
        raise ValueError("|ε| exceeds ε₀")
    mat = t_epsilon(triple, eps) - z * np.eye(triple.dim)
    try:
        r = np.linalg.solve(mat, np.eye(triple.dim))
    except np.linalg.LinAlgError as exc:
        raise ValueError("z lies in the spectrum of T_ε") from exc
    half = triple.m_power(0.5)
    return ResolventReport(
        r,
        float(np.linalg.norm(r, 2)),
        float(np.linalg.norm(half @ r, 2)),
        float(np.linalg.norm(half @ r @ triple.f_perp, 2)),
    )


def epsilon0_search(
    triple: MourreTriple, zs: Sequence[complex], C: float, eps_hi: float = 1.0, steps: int = 40
) -> float:
    """Largest ε ≤ eps_hi (by bisection) with ε‖R_ε(z)‖ ≤ C and ε‖M^{1/2}R_ε(z)‖ ≤ C on the z grid."""

    def ok(eps):
        for z in zs:
            rep = t_epsilon_resolvent(triple, eps if z.imag > 0 else -eps, z)
            if eps * max(rep.norm, rep.m_half_norm) > C:
                return False
        return True

    if ok(eps_hi):
        return eps_hi
    lo, hi = 0.0, eps_hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def apriori_defect(triple: MourreTriple, eps: float, z: complex, v: np.ndarray) -> float:
    """rhs - lhs of |ε|‖u‖²_M + |Im z|‖u‖² ≤ |Im⟨u,(T_ε-z)u⟩| + |ε|C_M‖u‖‖f⊥(T)u‖ for u = R_ε(z)v."""
    u = t_epsilon_resolvent(triple, eps, z).R @ v
    lhs = abs(eps) * np.vdot(u, triple.M @ u).real + abs(z.imag) * np.vdot(u, u).real
    form = np.vdot(u, (t_epsilon(triple, eps) - z * np.eye(triple.dim)) @ u)
    rhs = abs(form.imag) + abs(eps) * triple.C_M * np.linalg.norm(u) * np.linalg.norm(triple.f_perp @ u)
    return float(rhs - lhs)


@dataclass(frozen=True)
class LapProbeReport:
    epsilons: np.ndarray
    zs: np.ndarray
    resolvent_norms: np.ndarray
    m_half_norms: np.ndarray
    traces: np.ndarray
    weighted_norm: float
    fitted_constant: float
    weighted_constant: float | None
    limit_gaps: np.ndarray
    near_spectrum: np.ndarray
    lemma_inv_constant: float
    lemma4_constant: float
    passed: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for i, z in enumerate(self.zs):
            for k, eps in enumerate(self.epsilons):
                out.append(
                    {
                        "epsilon": float(eps),
                        "re_z": float(z.real),
                        "im_z": float(z.imag),
                        "R_norm": float(self.resolvent_norms[i, k]),
                        "M_half_R_norm": float(self.m_half_norms[i, k]),
                        "abs_F": float(abs(self.traces[i, k])),
                    }
                )
        return out


def lap_probe(
    triple: MourreTriple,
    u: np.ndarray,
    zs: Sequence[complex],
    epsilons: Sequence[float],
    S: np.ndarray | None = None,
    gap_threshold: float = 1e-6,
) -> LapProbeReport:
    """F_z(ε) = ⟨u, R_ε(z)u⟩ along an ε ladder with the weighted bound and the ε → 0 limit."""
    u = np.asarray(u, dtype=complex)
    zs = np.asarray(zs, dtype=complex)
    epsilons = np.asarray(epsilons, dtype=float)
    spectrum = np.linalg.eigvalsh(triple.T)
    weight = triple.m_star_norm_sq(u) + triple.m_star_norm_sq(triple.A @ u)
    norms = np.empty((zs.size, epsilons.size))
    m_norms = np.empty_like(norms)
    traces = np.empty(norms.shape, dtype=complex)
    gaps = np.empty(zs.size)
    near = np.zeros(zs.size, dtype=bool)
    weighted = None
    lemma_inv = 0.0
    lemma4 = 0.0
    half = triple.m_power(0.5)
    for i, z in enumerate(zs):
        near[i] = np.min(np.abs(spectrum - z.real)) < gap_threshold
        sign = 1.0 if z.imag > 0 else -1.0
        for k, eps in enumerate(epsilons):
            rep = t_epsilon_resolvent(triple, sign * eps, z)
            norms[i, k] = rep.norm
            m_norms[i, k] = rep.m_half_norm
            traces[i, k] = np.vdot(u, rep.R @ u)
            lemma_inv = max(lemma_inv, eps * rep.m_half_norm)
            lemma4 = max(lemma4, np.sqrt(eps) * np.linalg.norm(half @ rep.R @ triple.f_perp @ u))
            if S is not None:
                su = S @ u
                val = abs(np.vdot(su, rep.R @ su))
                weighted = max(weighted or 0.0, val / weight if weight else np.inf)
        exact = np.linalg.solve(triple.T - z * np.eye(triple.dim), u)
        last = t_epsilon_resolvent(triple, sign * epsilons.min(), z).R @ u
        gaps[i] = np.linalg.norm(last - exact)
    fitted = float(np.max(np.abs(traces)) / weight) if weight else np.inf
    return LapProbeReport(
        epsilons,
        zs,
        norms,
        m_norms,
        traces,
        weight,
        fitted,
        weighted,
        gaps,
        near,
        float(lemma_inv),
        float(lemma4),
        {"no_near_spectrum": bool(not near.any()), "finite_constant": bool(np.isfinite(fitted))},
    )


@dataclass(frozen=True)
class StabilityReport:
    eta_min: float
    constants: tuple[float, float]
    lemma_inv: tuple[float, float]
    ratio: float
    stable: bool


def lap_stability(
    triple: MourreTriple,
    u: np.ndarray,
    re_grid: Sequence[float],
    eta_min: float,
    epsilons: Sequence[float],
) -> StabilityReport:
    """Fitted LAP constants at Im z = η_min and η_min/2; stable when they differ by less than 2×."""
    reps = [
        lap_probe(triple, u, [x + 1j * eta for x in re_grid], epsilons)
        for eta in (eta_min, eta_min / 2)
    ]
    consts = (reps[0].fitted_constant, reps[1].fitted_constant)
    inv = (reps[0].lemma_inv_constant, reps[1].lemma_inv_constant)
    ratio = max(consts[1] / consts[0], inv[1] / inv[0])
    return StabilityReport(eta_min, consts, inv, float(ratio), bool(ratio < 2.0))


def strict_resolvent_defect(T, e: float, eps: float, z: complex) -> float:
    """|‖R_ε(z)‖·|eε + Im z| - 1| for T′ = e·I; zero when Re z ∈ σ(T)."""
    t = _dense(T)
    r = np.linalg.inv(t - 1j * eps * e * np.eye(t.shape[0]) - z * np.eye(t.shape[0]))
    return float(abs(np.linalg.norm(r, 2) * abs(e * eps + z.imag) - 1.0))


def m4_residual(T, A, zetas: Sequence[complex]) -> float:
    """max_ζ ‖i[T, (A+ζ)⁻¹] + (A+ζ)⁻¹ i[T,A] (A+ζ)⁻¹‖ (a resolvent identity)."""
    t, a = _dense(T), _dense(A)
    tp = 1j * (t @ a - a @ t)
    worst = 0.0
    eye = np.eye(t.shape[0])
    for zeta in zetas:
        r = np.linalg.inv(a + zeta * eye)
        lhs = 1j * (t @ r - r @ t)
        worst = max(worst, float(np.abs(lhs + r @ tp @ r).max()))
    return worst
