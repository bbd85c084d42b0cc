"""Coupling profiles, their quadrature sampling, regularity audits and thermal/glued couplings.

A scalar profile is ``G(k) = λ g(|k|) G0`` with ``g(r) = r^p u(r/Λ)`` and
``u`` a Gaussian or exponential ultraviolet shape.  Sampling on a radial
grid absorbs the measure ``4π r² dr`` into the per-mode matrices, so grid
sums of squared entries approximate ``∫ ‖G(k)‖² dk`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb
from typing import Literal, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.special import eval_hermite, poch

from ._conjugate import ConjugateSpec, grid_conjugate, weight_function
from .fock import ModeSet

UvShape = Literal["gaussian", "exponential"]
FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class SmallSystem:
    """Finite-level system with diagonal Hamiltonian K = diag(E_1 ≤ ... ≤ E_ν)."""

    energies: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).reshape(-1)
        if e.size < 1:
            raise ValueError("the small system needs at least one level")
        if np.any(np.diff(e) < 0):
            raise ValueError("energies must be ascending")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @classmethod
    def from_energies(cls, energies: Sequence[float]) -> "SmallSystem":
        return cls(np.asarray(energies, dtype=float))

    @property
    def nu(self) -> int:
        return int(self.energies.size)

    @property
    def K(self) -> np.ndarray:
        return np.diag(self.energies)


@dataclass(frozen=True)
class CouplingProfile:
    """Matrix-valued coupling, either scalar-radial times G0 or explicit per-mode matrices."""

    nu: int
    G0: np.ndarray | None = None
    amplitude: float = 1.0
    p: float = 0.5
    uv_scale: float = 1.0
    uv_shape: UvShape = "gaussian"
    mu: float = 0.1
    matrices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.matrices is None:
            g0 = np.asarray(self.G0 if self.G0 is not None else np.eye(self.nu), dtype=complex)
            if g0.shape != (self.nu, self.nu):
                raise ValueError("G0 must be nu x nu")
            object.__setattr__(self, "G0", g0)
            if self.uv_scale <= 0:
                raise ValueError("ultraviolet scale must be positive")
            if self.uv_shape not in ("gaussian", "exponential"):
                raise ValueError(f"unknown ultraviolet shape {self.uv_shape!r}")
        else:
            mats = np.asarray(self.matrices, dtype=complex)
            if mats.ndim != 3 or mats.shape[1:] != (self.nu, self.nu):
                raise ValueError("explicit matrices must have shape (modes, nu, nu)")
            object.__setattr__(self, "matrices", mats)
        if self.mu <= 0:
            raise ValueError("mu must be positive")

    @classmethod
    def explicit(cls, matrices, mu: float = 0.1) -> "CouplingProfile":
        mats = np.asarray(matrices, dtype=complex)
        return cls(nu=mats.shape[1], matrices=mats, mu=mu)

    @property
    def is_scalar(self) -> bool:
        return self.matrices is None

    def with_amplitude(self, amplitude: float) -> "CouplingProfile":
        if not self.is_scalar:
            scale = amplitude / self.amplitude if self.amplitude else 0.0
            return replace(self, matrices=self.matrices * scale, amplitude=amplitude)
        return replace(self, amplitude=amplitude)

    def radial(self, r, order: int = 0) -> np.ndarray:
        """order-th derivative of λ r^p u(r/Λ)."""
        r = np.asarray(r, dtype=float)
        total = np.zeros_like(r)
        for k in range(order + 1):
            power = poch(self.p - k + 1, k) * r ** (self.p - k) if k else r**self.p
            total = total + comb(order, k) * power * self._uv(r, order - k)
        return self.amplitude * total

    def _uv(self, r, order: int):
        x = r / self.uv_scale
        scale = self.uv_scale ** (-order)
        if self.uv_shape == "gaussian":
            return scale * (-1) ** order * eval_hermite(order, x) * np.exp(-(x**2))
        return scale * (-1) ** order * np.exp(-x)


def _check_infrared(profile: CouplingProfile):
    if profile.is_scalar and profile.p <= -1.5:
        raise ValueError("infrared exponent p <= -3/2 is not square integrable")


def sample_coupling(profile: CouplingProfile, modes: ModeSet) -> np.ndarray:
    """Per-mode matrices G_j = λ g(ω_j) G0 √(w_j 4π ω_j²), shape (M, ν, ν)."""
    if not profile.is_scalar:
        if profile.matrices.shape[0] != modes.count:
            raise ValueError("explicit coupling does not match the mode count")
        return profile.matrices.copy()
    _check_infrared(profile)
    scale = profile.radial(modes.omega) * np.sqrt(modes.weight * FOUR_PI * modes.omega**2)
    return scale[:, None, None] * profile.G0[None, :, :]


def radial_grid(
    nodes_per_panel: int,
    omega_max: float,
    *,
    ir_levels: int = 0,
    reservoir: int = 0,
) -> ModeSet:
    """Gauss-Legendre panels on (0, ω_max] with dyadic refinement toward 0.

    Panel edges are 0, ω_max 2^{-L}, ..., ω_max/2, ω_max, each carrying
    ``nodes_per_panel`` nodes.
    """
    if nodes_per_panel < 1 or omega_max <= 0 or ir_levels < 0:
        raise ValueError("invalid radial grid parameters")
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.concatenate([[0.0], omega_max * 2.0 ** -np.arange(ir_levels, -1, -1)])
    omegas, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        omegas.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append(w * (hi - lo) / 2)
    omega = np.concatenate(omegas)
    return ModeSet(omega, np.concatenate(weights), np.full(omega.size, reservoir))


def uniform_grid(count: int, omega_max: float, *, reservoir: int = 0) -> ModeSet:
    """Midpoint grid ω_j = (j - 1/2) h with weight h."""
    if count < 1 or omega_max <= 0:
        raise ValueError("invalid uniform grid parameters")
    h = omega_max / count
    omega = h * (np.arange(count) + 0.5)
    return ModeSet(omega, np.full(count, h), np.full(count, reservoir))


def mode_norm(mats: np.ndarray, kind: Literal["op", "fro"] = "op") -> float:
    """sqrt(Σ_j ‖F_j‖²) with per-mode operator or Frobenius norms."""
    mats = np.asarray(mats)
    if mats.size == 0:
        return 0.0
    if kind == "fro":
        return float(np.sqrt(np.sum(np.abs(mats) ** 2)))
    return float(np.sqrt(np.sum(np.linalg.norm(mats, 2, axis=(1, 2)) ** 2)))


def apply_mode_matrix(a: np.ndarray, mats: np.ndarray) -> np.ndarray:
    """(aF)_j = Σ_k a_jk F_k."""
    return np.einsum("jk,kab->jab", a, mats)


@dataclass(frozen=True)
class CouplingNorms:
    l2: float
    l2_over_sqrt: float
    l2_over_k: float
    grad: float
    aG: float
    errors: Mapping[str, float]
    divergent: Mapping[str, bool]
    aG_grid: float | None = None


def _radial_integral(fun, p_integrable: bool):
    if not p_integrable:
        return np.inf, 0.0
    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12)
    val1, err1 = integrate.quad(fun, 0, 1, **opts)
    val2, err2 = integrate.quad(fun, 1, np.inf, **opts)
    return val1 + val2, err1 + err2


def coupling_norms(
    profile: CouplingProfile,
    modes: ModeSet | None = None,
    conj_spec: ConjugateSpec | None = None,
) -> CouplingNorms:
    """Continuum L² norms of G, G/√|k|, G/|k|, the radial gradient and a_m G."""
    if not profile.is_scalar:
        raise ValueError("continuum norms need a scalar-form profile")
    _check_infrared(profile)
    spec = conj_spec or ConjugateSpec(mu=profile.mu)
    p = profile.p
    g0_sq = float(np.sum(np.abs(profile.G0) ** 2))
    smooth_at_zero = p in (0.0,)
    finite = {
        "l2": 2 * p + 3 > 0,
        "l2_over_sqrt": 2 * p + 2 > 0,
        "l2_over_k": 2 * p + 1 > 0,
        "grad": 2 * p + 1 > 0 or smooth_at_zero,
        "aG": 2 * p + 1 > 0 or p in (0.0, -1.0),
    }
    g = profile.radial
    integrands = {
        "l2": lambda r: g(r) ** 2 * r**2,
        "l2_over_sqrt": lambda r: g(r) ** 2 * r,
        "l2_over_k": lambda r: g(r) ** 2,
        "grad": lambda r: g(r, 1) ** 2 * r**2,
    }

    def m(r):
        return weight_function(np.asarray(r, dtype=float), spec)

    def m_prime(r, h=1e-6):
        return (m(r + h) - m(max(r - h, 0.0))) / (r + h - max(r - h, 0.0))

    def ag_integrand(r):
        # u(r) = r g(r), and a_m u = i(m u' + m' u / 2)
        u = r * g(r)
        du = g(r) + r * g(r, 1)
        return (m(r) * du + 0.5 * m_prime(r) * u) ** 2

    integrands["aG"] = ag_integrand
    values, errors = {}, {}
    for name, fun in integrands.items():
        val, err = _radial_integral(fun, finite[name])
        values[name] = float(np.sqrt(FOUR_PI * g0_sq * val))
        # first-order propagation of the quadrature error to the norm
        errors[name] = (
            float(FOUR_PI * g0_sq * err / (2 * values[name])) if 0 < values[name] < np.inf else 0.0
        )
    ag_grid = None
    if modes is not None:
        a = conjugate_on_modes(modes, spec)
        ag_grid = mode_norm(apply_mode_matrix(a, sample_coupling(profile, modes)))
    return CouplingNorms(
        **values,
        errors=errors,
        divergent={k: not v for k, v in finite.items()},
        aG_grid=ag_grid,
    )


def conjugate_on_modes(modes: ModeSet, spec: ConjugateSpec) -> np.ndarray:
    """Block-diagonal (per reservoir) grid realization of a_m on the radial modes."""
    a = np.zeros((modes.count, modes.count), dtype=complex)
    for tag in np.unique(modes.reservoir):
        idx = np.flatnonzero(modes.reservoir == tag)
        om = modes.omega[idx]
        a[np.ix_(idx, idx)] = grid_conjugate(om, modes.weight[idx], weight_function(om, spec))
    return a


@dataclass(frozen=True)
class RegularityReport:
    n: int
    holds: Mapping[str, bool]
    infrared: Mapping[str, bool]
    ultraviolet: Mapping[str, bool]
    constants: Mapping[str, float]
    grid: tuple[float, float, int]


def _derivative_proxy(profile: CouplingProfile, r: np.ndarray, order: int) -> np.ndarray:
    # bound for |∂^α G| of a radial function with |α| = order
    if order == 0:
        return np.abs(profile.radial(r))
    return sum(np.abs(profile.radial(r, i)) * r ** (i - order) for i in range(1, order + 1))


def _primed_proxy(profile: CouplingProfile, r: np.ndarray, order: int) -> np.ndarray:
    # ĝ(ω) = |ω|^{1/2} g(ω); d^j/dω^j via Leibniz on ω^{1/2}
    total = np.zeros_like(r)
    for k in range(order + 1):
        half = poch(0.5 - k + 1, k) * r ** (0.5 - k) if k else np.sqrt(r)
        total = total + comb(order, k) * half * profile.radial(r, order - k)
    return np.abs(total)


def audit_regularity(
    profile: CouplingProfile,
    n: int,
    *,
    modes: ModeSet | None = None,
    r_min: float = 1e-8,
    r_max: float = 50.0,
    points: int = 400,
) -> RegularityReport:
    """Grid-witnessed (HGn), (LGn) and glued (LGn') membership.

    Infrared verdicts combine exponent arithmetic with the sampled constant;
    they are statements about the sample grid, never continuum proofs.
    """
    if n not in (0, 1, 2):
        raise ValueError("n must be 0, 1 or 2")
    if not profile.is_scalar:
        return _audit_explicit(profile, n, modes)
    mu = profile.mu
    near = np.geomspace(r_min, 1.0, points)
    far = np.geomspace(1.0, r_max * profile.uv_scale, points)
    tol = 1e-12
    zero = profile.amplitude == 0

    def near_exp(kind, j):
        if kind == "HG":
            return n - 1.5 + mu - j + (0.5 if n == 0 else 0.0)
        if kind == "LG":
            return n - 1 + mu - j
        return n - 1 + mu - j

    def far_exp(kind, j):
        if kind == "HG":
            return -1.5 - mu
        if kind == "LG":
            return -1.5 - (1 if j == 0 else 0) - mu
        return -1 - (1 if j == 0 else 0) - mu

    holds, ir, uv, consts = {}, {}, {}, {}
    for kind in ("HG", "LG", "LG'"):
        name = f"{kind[:2]}{n}" + ("'" if kind == "LG'" else "")
        proxy = _primed_proxy if kind == "LG'" else _derivative_proxy
        # leading small-r exponent of the j-th derivative proxy is p - j (p + 1/2 - j for ĝ)
        lead = profile.p + (0.5 if kind == "LG'" else 0.0)
        c_near, c_far = 0.0, 0.0
        ok_near, ok_far = True, True
        for j in range(n + 1):
            vals_n = proxy(profile, near, j)
            vals_f = proxy(profile, far, j)
            ratio_n = vals_n / near ** near_exp(kind, j)
            ratio_f = vals_f / far ** far_exp(kind, j)
            c_near = max(c_near, float(np.max(ratio_n)))
            c_far = max(c_far, float(np.max(ratio_f)))
            ok_near &= zero or (lead - j) >= near_exp(kind, j) - tol
            ok_far &= bool(np.all(np.isfinite(ratio_f))) and ratio_f[-1] <= ratio_f.max() * (1 + 1e-9)
            ok_far &= bool(ratio_f[-1] <= max(ratio_f[0], 1e-300) * 10 or ratio_f[-1] < 1e-12)
        if kind == "LG'" and profile.G0 is not None:
            ok_near &= bool(np.allclose(profile.G0, profile.G0.conj().T))
        ir[name] = bool(ok_near)
        uv[name] = bool(ok_far)
        holds[name] = bool(ok_near and ok_far)
        consts[name] = max(c_near, c_far) if holds[name] else np.inf
    return RegularityReport(n, holds, ir, uv, consts, (r_min, r_max, points))


def _audit_explicit(profile, n, modes):
    if modes is None:
        raise ValueError("explicit profiles need their mode grid for auditing")
    if modes.count < n + 3:
        raise ValueError("insufficient grid resolution for the requested derivative order")
    mats = profile.matrices
    scale = np.sqrt(modes.weight * FOUR_PI * modes.omega**2)
    values = np.linalg.norm(mats, 2, axis=(1, 2)) / scale
    om = modes.omega
    derivs = [values]
    for _ in range(n):
        derivs.append(np.gradient(derivs[-1], om))
    coarse = [values[::2]]
    for _ in range(n):
        coarse.append(np.gradient(coarse[-1], om[::2]))
    for j in range(1, n + 1):
        fine_j, coarse_j = derivs[j][::2], coarse[j]
        scale_j = np.max(np.abs(fine_j)) + 1e-300
        if np.max(np.abs(fine_j - coarse_j)[1:-1], initial=0.0) > 0.5 * scale_j:
            raise ValueError("insufficient grid resolution: finite differences are noise dominated")
    holds, ir, uv, consts = {}, {}, {}, {}
    mu = profile.mu
    for kind in ("HG", "LG"):
        name = f"{kind}{n}"
        ok, c = True, 0.0
        for j in range(n + 1):
            e = n - 1.5 + mu - j + (0.5 if n == 0 else 0.0) if kind == "HG" else n - 1 + mu - j
            ratio = np.abs(derivs[j]) / om**e
            c = max(c, float(np.max(ratio)))
            small = om[:3]
            slope = np.polyfit(np.log(small), np.log(np.abs(derivs[j][:3]) + 1e-300), 1)[0]
            ok &= slope >= e - 0.05
        holds[name], ir[name], uv[name], consts[name] = bool(ok), bool(ok), True, c
    return RegularityReport(n, holds, ir, uv, consts, (float(om[0]), float(om[-1]), om.size))


def planck(omega, beta) -> np.ndarray:
    """1/(e^{βω} - 1), zero at β = ∞."""
    omega = np.asarray(omega, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), omega.shape)
    out = np.zeros(omega.shape)
    finite = np.isfinite(beta)
    with np.errstate(over="ignore"):
        out[finite] = 1.0 / np.expm1(beta[finite] * omega[finite])
    return out if out.ndim else float(out)


def beta_per_mode(modes: ModeSet, beta) -> np.ndarray:
    """Resolve a scalar, per-reservoir mapping or sequence of β to one β per mode."""
    if np.isscalar(beta):
        out = np.full(modes.count, float(beta))
    elif isinstance(beta, Mapping):
        out = np.array([float(beta[int(t)]) for t in modes.reservoir])
    else:
        seq = np.asarray(beta, dtype=float)
        out = seq[modes.reservoir]
    if np.any(out <= 0):
        raise ValueError("inverse temperatures must be positive")
    return out


def swap_matrix(nu: int) -> np.ndarray:
    """Exchange u⊗v -> v⊗u on ℂ^ν⊗ℂ^ν."""
    p = np.zeros((nu * nu, nu * nu))
    for i in range(nu):
        for j in range(nu):
            p[j * nu + i, i * nu + j] = 1.0
    return p


def left_right(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """G_l = G⊗1 and G_r = 1⊗Ḡ per mode."""
    nu = mats.shape[1]
    eye = np.eye(nu)
    gl = np.einsum("jab,cd->jacbd", mats, eye).reshape(-1, nu * nu, nu * nu)
    gr = np.einsum("ab,jcd->jacbd", eye, mats.conj()).reshape(-1, nu * nu, nu * nu)
    return gl, gr


def _dagger(mats: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(mats, 1, 2))


def thermal_couplings(profile: CouplingProfile, modes: ModeSet, beta) -> tuple[np.ndarray, np.ndarray]:
    """G_{β,l} = √(1+ρ) G_l - √ρ G_r*, G_{β,r} = √(1+ρ) G_r - √ρ G_l*."""
    gl, gr = left_right(sample_coupling(profile, modes))
    rho = planck(modes.omega, beta_per_mode(modes, beta))[:, None, None]
    up, down = np.sqrt(1 + rho), np.sqrt(rho)
    return up * gl - down * _dagger(gr), up * gr - down * _dagger(gl)


@dataclass(frozen=True)
class GluedModes:
    """Signed glued frequencies: side +1 is the left copy of ``source``, side -1 the right copy."""

    omega: np.ndarray
    weight: np.ndarray
    reservoir: np.ndarray
    side: np.ndarray
    source: np.ndarray

    @property
    def count(self) -> int:
        return int(self.omega.size)


def glued_modes(modes: ModeSet) -> GluedModes:
    """Signed frequency list per reservoir, ascending: -ω_M..-ω_1, ω_1..ω_M."""
    parts = []
    for tag in np.unique(modes.reservoir):
        idx = np.flatnonzero(modes.reservoir == tag)
        neg = idx[::-1]
        parts.append(
            (
                np.concatenate([-modes.omega[neg], modes.omega[idx]]),
                np.concatenate([modes.weight[neg], modes.weight[idx]]),
                np.full(2 * idx.size, tag),
                np.concatenate([-np.ones(idx.size, int), np.ones(idx.size, int)]),
                np.concatenate([neg, idx]),
            )
        )
    cols = [np.concatenate(c) for c in zip(*parts)]
    return GluedModes(*cols)


@dataclass(frozen=True)
class GluedCoupling:
    modes: GluedModes
    coupling: np.ndarray
    beta: np.ndarray


def glued_from_thermal(modes: ModeSet, gbl: np.ndarray, gbr: np.ndarray, beta) -> GluedCoupling:
    gm = glued_modes(modes)
    out = np.where(
        (gm.side > 0)[:, None, None], gbl[gm.source], -gbr[gm.source]
    )
    return GluedCoupling(gm, out, beta_per_mode(modes, beta))


def glued_coupling(profile: CouplingProfile, modes: ModeSet, beta) -> GluedCoupling:
    """Ĝ_β on the signed grid: G_{β,l} at +ω_j and -G_{β,r} at -ω_j."""
    gbl, gbr = thermal_couplings(profile, modes, beta)
    return glued_from_thermal(modes, gbl, gbr, beta)


def glued_prefactors(omega, beta) -> tuple[np.ndarray, np.ndarray]:
    """(ω/(1-e^{-βω}))^{1/2} and (ω/(e^{βω}-1))^{1/2}, valid for signed ω."""
    omega = np.asarray(omega, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), omega.shape)
    first = np.empty(omega.shape)
    second = np.empty(omega.shape)
    finite = np.isfinite(beta)
    with np.errstate(over="ignore"):
        x = beta * omega
        first[finite] = np.sqrt(omega[finite] / -np.expm1(-x[finite]))
        second[finite] = np.sqrt(omega[finite] / np.expm1(x[finite]))
    pos = omega > 0
    first[~finite] = np.where(pos[~finite], np.sqrt(np.abs(omega[~finite])), 0.0)
    second[~finite] = np.where(pos[~finite], 0.0, np.sqrt(np.abs(omega[~finite])))
    if first.ndim == 0:
        return float(first), float(second)
    return first, second


def glued_coupling_alternative(profile: CouplingProfile, modes: ModeSet, beta) -> np.ndarray:
    """Ĝ_β from the Planck-prefactor representation.

    Agrees with :func:`glued_coupling` when every G_j is Hermitian; in general
    the two differ by G_r* versus G_r.
    """
    gm = glued_modes(modes)
    g = sample_coupling(profile, modes)
    nu = g.shape[1]
    eye = np.eye(nu)
    # sampled matrices carry a factor |ω|; the hatted couplings carry |ω|^{1/2}
    root = np.sqrt(np.abs(gm.omega))
    src = g[gm.source] / root[:, None, None]
    pos = (gm.side > 0)[:, None, None]
    hat_l_core = np.where(pos, src, _dagger(src))
    hat_r_core = np.where(pos, src.conj(), _dagger(src.conj()))
    hat_l = np.einsum("jab,cd->jacbd", hat_l_core, eye).reshape(-1, nu * nu, nu * nu)
    hat_r = np.einsum("ab,jcd->jacbd", eye, hat_r_core).reshape(-1, nu * nu, nu * nu)
    first, second = glued_prefactors(gm.omega, beta_per_mode(modes, beta)[gm.source])
    return first[:, None, None] * hat_l - second[:, None, None] * hat_r


def glued_conjugate(gm: GluedModes, spec: ConjugateSpec) -> np.ndarray:
    """ã_m on the signed grid, block-diagonal per reservoir."""
    a = np.zeros((gm.count, gm.count), dtype=complex)
    for tag in np.unique(gm.reservoir):
        idx = np.flatnonzero(gm.reservoir == tag)
        om = gm.omega[idx]
        a[np.ix_(idx, idx)] = grid_conjugate(om, gm.weight[idx], weight_function(om, spec))
    return a


@dataclass(frozen=True)
class DifferenceBound:
    betas: np.ndarray
    norms: np.ndarray
    derivative_norms: np.ndarray
    slope: float
    derivative_slope: float


def _fit_slope(betas, values) -> float:
    mask = np.isfinite(betas) & (values > 0)
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(betas[mask]), np.log(values[mask]), 1)[0])


def coupling_difference_bound(
    profile: CouplingProfile,
    modes: ModeSet,
    betas: Sequence[float],
    conj_spec: ConjugateSpec | None = None,
) -> DifferenceBound:
    """‖Ĝ_β - Ĝ_∞‖ and ‖ã(Ĝ_β - Ĝ_∞)‖ along a β ladder, with log-log slopes."""
    spec = conj_spec or ConjugateSpec(mu=profile.mu)
    g_inf = glued_coupling(profile, modes, np.inf)
    a = glued_conjugate(g_inf.modes, spec)
    betas = np.asarray(betas, dtype=float)
    norms, dnorms = [], []
    for beta in betas:
        diff = glued_coupling(profile, modes, beta).coupling - g_inf.coupling
        norms.append(mode_norm(diff, "fro"))
        dnorms.append(mode_norm(apply_mode_matrix(a, diff), "fro"))
    norms, dnorms = np.array(norms), np.array(dnorms)
    return DifferenceBound(betas, norms, dnorms, _fit_slope(betas, norms), _fit_slope(betas, dnorms))
