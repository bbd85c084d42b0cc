"""Positive-temperature side: standard Liouvillean, modular conjugation, gluing, KMS and Weyl checks.

The doubled space is ℂ^ν ⊗ ℂ^ν ⊗ F over 2M modes: modes 0..M-1 are the
left copies, M..2M-1 the right copies, truncated jointly by total quanta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import fock
from ._conjugate import ConjugateSpec, commutator_matrix, weight_function
from .coupling import (
    CouplingProfile,
    GluedModes,
    SmallSystem,
    apply_mode_matrix,
    beta_per_mode,
    glued_conjugate,
    glued_from_thermal,
    glued_modes,
    mode_norm,
    planck,
    sample_coupling,
    swap_matrix,
    thermal_couplings,
)
from .fock import ModeSet, OccBasis, SparseOp
from .hamiltonian import (
    CertificateReport,
    PullthroughReport,
    VirialReport,
    _lambda_min,
    _max_abs,
    compressed_min,
    eigen_clusters,
    hermitian_part,
    lift_field_space,
    lift_small,
    matrix_field,
    operator_norm,
    pullthrough_core,
    rotated,
    virial_values,
)

KERNEL_RTOL = 1e-8


def planck_density(omega, beta):
    """1/(e^{βω} - 1), zero at β = ∞."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("frequencies must be positive")
    if np.any(np.asarray(beta, dtype=float) <= 0):
        raise ValueError("beta must be positive")
    return planck(omega, beta)


def gibbs_small(small: SmallSystem, beta: float) -> np.ndarray:
    """e^{-βK}/Tr e^{-βK}; the ground projector (averaged over degeneracy) at β = ∞."""
    e = small.energies
    if np.isinf(beta):
        w = (e == e[0]).astype(float)
    else:
        w = np.exp(-beta * (e - e[0]))
    return np.diag(w / w.sum())


def gibbs_vector(small: SmallSystem, beta: float) -> np.ndarray:
    """Σ_j √(p_j) e_j⊗e_j, the purification of the Gibbs state."""
    p = np.diag(gibbs_small(small, beta))
    nu = small.nu
    out = np.zeros(nu * nu)
    out[np.arange(nu) * nu + np.arange(nu)] = np.sqrt(p)
    return out


def lp_operator(small: SmallSystem) -> SparseOp:
    """L_p = K⊗1 - 1⊗K̄."""
    k = small.K
    eye = np.eye(small.nu)
    return SparseOp.wrap(np.kron(k, eye) - np.kron(eye, k.conj()), "small2", hermitian=True)


def doubled_basis(modes: ModeSet | int, n_total_max: int, *, max_dim: int = fock.DEFAULT_MAX_DIM) -> OccBasis:
    count = modes.count if isinstance(modes, ModeSet) else int(modes)
    return fock.build_basis(2 * count, n_total_max, max_dim=max_dim)


def exchange_permutation(basis: OccBasis, nu: int) -> np.ndarray:
    """Index map of (u⊗v⊗ψ_l⊗ψ_r) -> (v⊗u⊗ψ_r⊗ψ_l) on the doubled space."""
    half = basis.mode_count // 2
    swapped = np.concatenate([basis.states[:, half:], basis.states[:, :half]], axis=1)
    fperm = basis.lookup(swapped)
    i, j = np.divmod(np.arange(nu * nu), nu)
    small_perm = j * nu + i
    return (small_perm[:, None] * basis.dim + fperm[None, :]).ravel()


@dataclass(frozen=True)
class ModularConjugation:
    """J ψ = conj(ψ[perm]): antiunitary, involutive."""

    perm: np.ndarray

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return np.conj(np.asarray(psi)[self.perm])

    def conjugate(self, op) -> sp.csr_matrix:
        """J X J for a linear X."""
        m = sp.csr_matrix(op)
        return fock._canonical(m[self.perm][:, self.perm].conj())

    def matrix_form(self) -> sp.csr_matrix:
        """Permutation matrix P with J = conj ∘ P."""
        n = self.perm.size
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.perm)), shape=(n, n))


def _split(mats_left: np.ndarray, mats_right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zeros = np.zeros_like(mats_left)
    return np.concatenate([mats_left, zeros]), np.concatenate([zeros, mats_right])


@dataclass(frozen=True, eq=False)
class DoubledSystem:
    small: SmallSystem
    modes: ModeSet
    basis: OccBasis
    beta: np.ndarray
    coupling: np.ndarray
    G_left: np.ndarray
    G_right: np.ndarray
    L0: SparseOp
    Lp: SparseOp
    W_beta: SparseOp
    L_beta: SparseOp
    N_L: SparseOp
    J: ModularConjugation
    jlj_defect: float

    @property
    def nu(self) -> int:
        return self.small.nu

    @property
    def dim(self) -> int:
        return self.L_beta.dim

    @cached_property
    def spectrum(self):
        return np.linalg.eigh(self.L_beta.toarray())

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.spectrum[1]

    def left_field(self, mats) -> sp.csr_matrix:
        left, _ = _split(np.asarray(mats), np.zeros_like(mats))
        return matrix_field(self.basis, left)

    def right_field(self, mats) -> sp.csr_matrix:
        _, right = _split(np.zeros_like(mats), np.asarray(mats))
        return matrix_field(self.basis, right)


def assemble_liouvillean(
    small: SmallSystem,
    profile: CouplingProfile,
    modes: ModeSet,
    basis: OccBasis,
    beta,
) -> DoubledSystem:
    """L_β = L_p + dΓ_l(ω) - dΓ_r(ω) + φ_l(G_{β,l}) - φ_r(G_{β,r})."""
    if profile.nu != small.nu:
        raise ValueError("small system and coupling disagree on ν")
    if basis.mode_count != 2 * modes.count:
        raise ValueError("the doubled basis needs two copies of every mode")
    nu2 = small.nu**2
    betas = beta_per_mode(modes, beta)
    g = sample_coupling(profile, modes)
    gl, gr = thermal_couplings(profile, modes, betas)
    signed = np.concatenate([modes.omega, -modes.omega]).astype(complex)
    free = lift_field_space(nu2, fock.dgamma(basis, np.diag(signed)))
    lp = lp_operator(small)
    lp_big = lift_small(lp.matrix, basis)
    left, right = _split(gl, gr)
    w = matrix_field(basis, left) - matrix_field(basis, right)
    l0 = lp_big + free
    lb = l0 + w
    j = ModularConjugation(exchange_permutation(basis, small.nu))
    defect = _max_abs(j.conjugate(lb) + lb)
    bid = "doubled:" + basis.basis_id
    return DoubledSystem(
        small=small,
        modes=modes,
        basis=basis,
        beta=betas,
        coupling=g,
        G_left=gl,
        G_right=gr,
        L0=SparseOp.wrap(l0, bid, hermitian=True),
        Lp=lp,
        W_beta=SparseOp.wrap(w, bid, hermitian=True),
        L_beta=SparseOp.wrap(lb, bid, hermitian=True),
        N_L=SparseOp.wrap(lift_field_space(nu2, fock.number_operator(basis)), bid, hermitian=True),
        J=j,
        jlj_defect=defect,
    )


def zero_temperature_reference(
    small: SmallSystem, profile: CouplingProfile, modes: ModeSet, basis: OccBasis
) -> sp.csr_matrix:
    """H⊗1 - 1⊗H^c built on the product of two single Fock spaces, compressed to ``basis``."""
    from .hamiltonian import assemble_H

    single = fock.build_basis(modes, basis.n_total_max)
    h = assemble_H(small, profile, modes, single).H.matrix
    hc = h.conj()
    nu, d = small.nu, single.dim
    full = sp.kron(h, sp.identity(nu * d)) - sp.kron(sp.identity(nu * d), hc)
    half = modes.count
    li = single.lookup(basis.states[:, :half])
    ri = single.lookup(basis.states[:, half:])
    i, j = np.divmod(np.arange(nu * nu), nu)
    # (u_i ⊗ ψ_l) ⊗ (v_j ⊗ ψ_r) in the product layout
    idx = ((i[:, None] * d + li[None, :]) * (nu * d) + (j[:, None] * d + ri[None, :])).ravel()
    return fock._canonical(sp.csr_matrix(full)[idx][:, idx])


@dataclass(frozen=True)
class WbetaReport:
    lhs: np.ndarray
    rhs: np.ndarray
    holds: bool
    constant: float
    worst_ratio: float


def wbeta_bound_check(system: DoubledSystem, samples: int = 200, seed: int = 0, tol: float = 1e-12) -> WbetaReport:
    """‖W_βψ‖ against (‖G‖ + 2β^{-1/2}‖G/√ω‖)(2^{3/2}‖ψ‖ + 2^{1/2}‖√N ψ‖) on random ψ."""
    rng = np.random.default_rng(seed)
    g = system.coupling
    beta = float(np.min(system.beta))
    g_norm = mode_norm(g)
    g_sqrt = mode_norm(g / np.sqrt(system.modes.omega)[:, None, None])
    const = g_norm + (2 * g_sqrt / np.sqrt(beta) if np.isfinite(beta) else 0.0)
    psi = rng.normal(size=(system.dim, samples)) + 1j * rng.normal(size=(system.dim, samples))
    psi[:, 0] = 0
    psi[
        np.arange(system.nu**2) * system.basis.dim + system.basis.vacuum_index, 0
    ] = 1.0
    lhs = np.linalg.norm(system.W_beta.matrix @ psi, axis=0)
    n = system.N_L.matrix.diagonal().real
    root_n = np.sqrt(np.sum(n[:, None] * np.abs(psi) ** 2, axis=0))
    rhs = const * (2**1.5 * np.linalg.norm(psi, axis=0) + 2**0.5 * root_n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, 0.0)
    return WbetaReport(lhs, rhs, bool(np.all(lhs <= rhs + tol)), const, float(ratio.max()))


@dataclass(frozen=True, eq=False)
class GluedSystem:
    doubled: DoubledSystem
    modes: GluedModes
    basis: OccBasis
    coupling: np.ndarray
    L_tilde: SparseOp
    N_tilde: SparseOp
    U: sp.csr_matrix
    conjugation_defect: float
    number_defect: float
    unitarity_defect: float

    @property
    def nu(self) -> int:
        return self.doubled.nu

    @property
    def dim(self) -> int:
        return self.L_tilde.dim

    @cached_property
    def spectrum(self):
        return np.linalg.eigh(self.L_tilde.toarray())

    @property
    def eigenvalues(self):
        return self.spectrum[0]

    @property
    def eigenvectors(self):
        return self.spectrum[1]

    def conjugate_a(self, spec: ConjugateSpec) -> np.ndarray:
        return glued_conjugate(self.modes, spec)

    def A_tilde(self, spec: ConjugateSpec) -> sp.csr_matrix:
        a = self.conjugate_a(spec)
        return lift_field_space(self.nu**2, hermitian_part(fock.dgamma(self.basis, a)))

    def prime_exact(self, spec: ConjugateSpec) -> SparseOp:
        y = 1j * (self.L_tilde.matrix @ self.A_tilde(spec))
        return SparseOp.wrap(y + y.conj().T, self.basis.basis_id, hermitian=True)

    def prime_formula(self, spec: ConjugateSpec) -> SparseOp:
        a = self.conjugate_a(spec)
        c = commutator_matrix(self.modes.omega, a)
        dg = lift_field_space(self.nu**2, hermitian_part(fock.dgamma(self.basis, c)))
        field_term = matrix_field(self.basis, rotated(apply_mode_matrix(a, self.coupling)))
        return SparseOp.wrap(dg - field_term, self.basis.basis_id, hermitian=True)

    def prime_sampled(self, spec: ConjugateSpec) -> SparseOp:
        """1⊗dΓ(m) - φ(i ã_m Ĝ_β) with the sampled weight m."""
        a = self.conjugate_a(spec)
        m = weight_function(self.modes.omega, spec).astype(complex)
        dg = lift_field_space(self.nu**2, fock.dgamma(self.basis, np.diag(m)))
        field_term = matrix_field(self.basis, rotated(apply_mode_matrix(a, self.coupling)))
        return SparseOp.wrap(dg - field_term, self.basis.basis_id, hermitian=True)


def glue(system: DoubledSystem) -> GluedSystem:
    """Relabel left mode j as +ω_j and right mode j as -ω_j and build L̃_β = U L_β U*."""
    modes = system.modes
    gm = glued_modes(modes)
    half = modes.count
    # doubled-mode index feeding each signed mode
    source = np.where(gm.side > 0, gm.source, gm.source + half)
    basis = fock.build_basis(gm.count, system.basis.n_total_max)
    # glued state s has occupation basis.states[s]; its doubled preimage puts n_k on mode source[k]
    pre = np.zeros_like(basis.states)
    pre[:, source] = basis.states
    fperm = system.basis.lookup(pre)
    nu2 = system.nu**2
    rows = np.arange(nu2 * basis.dim)
    cols = (np.arange(nu2)[:, None] * system.basis.dim + fperm[None, :]).ravel()
    u = sp.csr_matrix((np.ones(rows.size, complex), (rows, cols)), shape=(rows.size, system.dim))
    glued = glued_from_thermal(modes, system.G_left, system.G_right, system.beta)
    free = lift_field_space(nu2, fock.dgamma(basis, np.diag(gm.omega.astype(complex))))
    lt = lift_small(system.Lp.matrix, basis) + free + matrix_field(basis, glued.coupling)
    n_t = lift_field_space(nu2, fock.number_operator(basis))
    conj_defect = _max_abs(u @ system.L_beta.matrix @ u.conj().T - lt)
    num_defect = _max_abs(u @ system.N_L.matrix @ u.conj().T - n_t)
    unit_defect = _max_abs(u @ u.conj().T - sp.identity(u.shape[0]))
    bid = "glued:" + basis.basis_id
    return GluedSystem(
        doubled=system,
        modes=gm,
        basis=basis,
        coupling=glued.coupling,
        L_tilde=SparseOp.wrap(lt, bid, hermitian=True),
        N_tilde=SparseOp.wrap(n_t, bid, hermitian=True),
        U=u,
        conjugation_defect=conj_defect,
        number_defect=num_defect,
        unitarity_defect=unit_defect,
    )


@dataclass(frozen=True)
class GluedCommutatorReport:
    discrepancy: float
    number_commutator_discrepancy: float
    scale: float
    prime_exact: SparseOp
    prime_formula: SparseOp


def liouvillean_commutator(glued: GluedSystem, spec: ConjugateSpec) -> GluedCommutatorReport:
    """i[L̃, dΓ(ã)] against dΓ(i[ω, ã]) - φ(iãĜ), and i[Ñ, L̃] against φ(iĜ)."""
    exact = glued.prime_exact(spec)
    formula = glued.prime_formula(spec)
    y = 1j * (glued.N_tilde.matrix @ glued.L_tilde.matrix)
    nl = y + y.conj().T
    rot = matrix_field(glued.basis, rotated(glued.coupling))
    return GluedCommutatorReport(
        discrepancy=_max_abs(exact.matrix - formula.matrix),
        number_commutator_discrepancy=_max_abs(nl - rot),
        scale=max(1.0, _max_abs(exact.matrix)),
        prime_exact=exact,
        prime_formula=formula,
    )


def glued_virial(glued: GluedSystem, spec: ConjugateSpec) -> VirialReport:
    prime = glued.prime_exact(spec)
    vals, degenerate = virial_values(glued.eigenvectors, glued.eigenvalues, prime.matrix)
    return VirialReport(vals, float(np.max(np.abs(vals))), operator_norm(prime.matrix), degenerate)


def weak_coupling_liouville_certificate(
    glued: GluedSystem, spec: ConjugateSpec | None = None, tol: float = 1e-10
) -> CertificateReport:
    """L̃′ ≥ ½Ñ - ‖ãĜ_β‖² with m ≡ 1."""
    spec = spec or ConjugateSpec()
    if spec.variant != "translations":
        raise ValueError("the weak-coupling certificate needs the translations variant")
    prime = glued.prime_sampled(spec).matrix
    ag_sq = mode_norm(apply_mode_matrix(glued.conjugate_a(spec), glued.coupling)) ** 2
    ident = sp.identity(glued.dim, dtype=complex, format="csr")
    margin = _lambda_min(prime - 0.5 * glued.N_tilde.matrix + ag_sq * ident)
    vecs = glued.eigenvectors
    expectations = np.einsum("ij,ij->j", vecs.conj(), prime @ vecs).real
    return CertificateReport(
        name="weak_coupling_liouville",
        min_eigenvalue=margin,
        threshold=0.0,
        passed=margin >= -tol,
        tolerance=tol,
        constants={"aG_norm_sq": ag_sq},
        reported={
            "nonpositive_expectation_count": int(np.sum(expectations <= tol)),
            "nu_squared": glued.nu**2,
            "applicable": float(ag_sq <= 0.25 + 1e-12),
        },
    )


def _expm_hermitian(h, coeff: complex) -> np.ndarray:
    """exp(coeff·h) for Hermitian h via its spectral decomposition."""
    dense = h.toarray() if sp.issparse(h) else np.asarray(h)
    vals, vecs = np.linalg.eigh(dense)
    return (vecs * np.exp(coeff * vals)) @ vecs.conj().T


def reference_vector(system: DoubledSystem) -> np.ndarray:
    """Ω_β^PF: small-system Gibbs purification times the doubled vacuum."""
    beta = float(np.max(system.beta))
    vec = np.zeros(system.dim, dtype=complex)
    small = gibbs_vector(system.small, beta)
    vec[np.arange(system.nu**2) * system.basis.dim + system.basis.vacuum_index] = small
    return vec


@dataclass(frozen=True)
class KmsResult:
    vector: np.ndarray
    residual: float
    overlap: complex
    convention: str
    residuals: Mapping[str, float]


def left_interaction(system: DoubledSystem) -> sp.csr_matrix:
    """Q = φ_l(√(1+ρ) G⊗1) + φ_r(√ρ G*⊗1), the interaction affiliated with the left algebra.

    W_β = Q - JQJ, so Q carries only left small-system matrices.
    """
    nu = system.nu
    eye = np.eye(nu)
    g_left = np.einsum("jab,cd->jacbd", system.coupling, eye).reshape(-1, nu * nu, nu * nu)
    rho = planck(system.modes.omega, system.beta)[:, None, None]
    g_adj = np.conj(np.swapaxes(g_left, 1, 2))
    return system.left_field(np.sqrt(1 + rho) * g_left) + system.right_field(np.sqrt(rho) * g_adj)


def kms_vector(system: DoubledSystem) -> KmsResult:
    """Ω ∝ e^{-s(L_0 + Q)}Ω_β^PF for s ∈ {β, β/2}; keeps the smaller residual."""
    beta = float(np.max(system.beta))
    if not np.isfinite(beta):
        raise ValueError("the KMS construction needs finite β")
    omega0 = reference_vector(system)
    gen = system.L0.matrix + left_interaction(system)
    vals, vecs = np.linalg.eigh(gen.toarray())
    coeffs = vecs.conj().T @ omega0
    results = {}
    for name, s in (("beta", beta), ("half_beta", beta / 2)):
        shift = vals.min()
        vec = vecs @ (np.exp(-s * (vals - shift)) * coeffs)
        vec = vec / np.linalg.norm(vec)
        results[name] = (vec, float(np.linalg.norm(system.L_beta.matrix @ vec)))
    best = min(results, key=lambda k: results[k][1])
    vec = results[best][0]
    overlap = np.vdot(omega0, vec)
    if abs(overlap) > 0:
        vec = vec * (abs(overlap) / overlap)
        overlap = np.vdot(omega0, vec)
    return KmsResult(vec, results[best][1], complex(overlap), best, {k: v[1] for k, v in results.items()})


@dataclass(frozen=True)
class VanHoveReport:
    energy_shift: float
    truncated_sigma: float | None
    dressing: np.ndarray | None
    dressing_defect: float | None
    coherent_number: float


def vanhove_dressing(system: DoubledSystem, sign: float = 1.0) -> np.ndarray:
    """V = exp(iφ_l(i G_{β,l}/ω)) exp(iφ_r(i G_{β,r}/ω)) on the doubled space."""
    om = system.modes.omega[:, None, None]
    fl = system.left_field(sign * 1j * system.G_left / om)
    fr = system.right_field(sign * 1j * system.G_right / om)
    return _expm_hermitian(fl, 1j) @ _expm_hermitian(fr, 1j)


def low_sector_columns(basis: OccBasis, nu2: int, max_total: int) -> np.ndarray:
    rows = np.flatnonzero(basis.totals <= max_total)
    return (np.arange(nu2)[:, None] * basis.dim + rows[None, :]).ravel()


def vanhove_oracle(
    profile: CouplingProfile, modes: ModeSet, beta, cap: int, probe_total: int = 2
) -> VanHoveReport:
    """Closed-form shift -Σ|g_j|²/(2ω_j), truncated Σ, and the dressing defect ‖V*L_βV - L_0‖."""
    from .hamiltonian import assemble_H

    if profile.nu != 1:
        raise ValueError("the van Hove oracle needs ν = 1")
    small = SmallSystem.from_energies([0.0])
    g = sample_coupling(profile, modes)[:, 0, 0]
    if np.any(np.abs(g.imag) > 0):
        raise ValueError("the van Hove oracle needs a real coupling")
    shift = float(-np.sum(np.abs(g) ** 2 / (2 * modes.omega)))
    coherent = float(np.sum(np.abs(g) ** 2 / (2 * modes.omega**2)))
    sigma = assemble_H(small, profile, modes, fock.build_basis(modes, cap)).Sigma
    system = assemble_liouvillean(small, profile, modes, doubled_basis(modes, cap), beta)
    cols = low_sector_columns(system.basis, 1, probe_total)
    best = None
    for sign in (1.0, -1.0):
        v = vanhove_dressing(system, sign)
        diff = v.conj().T @ (system.L_beta.toarray() @ v) - system.L0.toarray()
        defect = float(np.linalg.norm(diff[:, cols], 2))
        if best is None or defect < best[1]:
            best = (v, defect)
    return VanHoveReport(shift, sigma, best[0], best[1], coherent)


@dataclass(frozen=True)
class WeylReport:
    truncated: complex
    closed_form: float
    gap: float
    commutator_defect: float | None = None


def araki_woods_fields(basis: OccBasis, modes: ModeSet, beta, f, g=None):
    """Left and right Araki-Woods Segal fields on the doubled Fock space (no small system).

    φ_l(f) = φ(√(1+ρ) f ⊕ √ρ f̄), φ_r(g) = φ(√ρ g ⊕ √(1+ρ) ḡ).
    """
    rho = planck(modes.omega, beta_per_mode(modes, beta))
    f = np.asarray(f, dtype=complex)
    left = fock.segal_field(basis, np.concatenate([np.sqrt(1 + rho) * f, np.sqrt(rho) * f.conj()]))
    if g is None:
        return left, None
    g = np.asarray(g, dtype=complex)
    right = fock.segal_field(basis, np.concatenate([np.sqrt(rho) * g, np.sqrt(1 + rho) * g.conj()]))
    return left, right


def weyl_expectation(modes: ModeSet, beta, f, cap: int, g=None) -> WeylReport:
    """⟨Ω, W_l(f)Ω⟩ on the truncated doubled vacuum against e^{-‖√(1+2ρ)f‖²/4}."""
    basis = doubled_basis(modes, cap)
    f = np.asarray(f, dtype=complex)
    rho = planck(modes.omega, beta_per_mode(modes, beta))
    closed = float(np.exp(-np.sum((1 + 2 * rho) * np.abs(f) ** 2) / 4))
    left, right = araki_woods_fields(basis, modes, beta, f, g)
    w_left = _expm_hermitian(left, 1j)
    vac = basis.vacuum_index
    value = complex(w_left[vac, vac])
    defect = None
    if right is not None:
        w_right = _expm_hermitian(right, 1j)
        comm = w_left @ w_right - w_right @ w_left
        low = np.flatnonzero(basis.totals <= min(2, cap))
        defect = float(np.abs(comm[np.ix_(low, low)]).max())
    return WeylReport(value, closed, abs(value - closed), defect)


@dataclass(frozen=True)
class KoopmanReport:
    time_average: complex
    limit: complex
    kernel_dimension: int
    spectral_gap: float
    ill_conditioned: bool
    kms_distance: float | None
    correlation: np.ndarray


def koopman_diagnostics(
    system: DoubledSystem,
    observable,
    state: np.ndarray,
    T: float,
    times: np.ndarray | None = None,
    reference: np.ndarray | None = None,
    gap_threshold: float = 1e-6,
) -> KoopmanReport:
    """Time means of ⟨Ψ, e^{itL}Ae^{-itL}Ψ⟩ from the spectral decomposition of L_β."""
    vals, vecs = system.eigenvalues, system.eigenvectors
    a = observable.toarray() if sp.issparse(observable) else np.asarray(observable)
    c = vecs.conj().T @ np.asarray(state, dtype=complex)
    a_eig = vecs.conj().T @ a @ vecs
    weights = np.conj(c)[:, None] * a_eig * c[None, :]
    freq = vals[:, None] - vals[None, :]
    scale = max(1.0, float(np.abs(vals).max()))
    # eigenvalue differences at rounding level are true degeneracies
    same = np.abs(freq) < 1e-9 * scale
    freq = np.where(same, 0.0, freq)
    phase = freq * T
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(same, 1.0, (np.exp(1j * phase) - 1) / (1j * phase))
    avg = complex(np.sum(weights * kernel))
    limit = complex(np.sum(weights[same]))
    thresh = KERNEL_RTOL * scale
    kernel_dim = int(np.sum(np.abs(vals) < thresh))
    outside = np.abs(vals)[np.abs(vals) >= thresh]
    gap = float(outside.min()) if outside.size else np.inf
    corr = np.array([])
    if times is not None:
        times = np.asarray(times, dtype=float)
        corr = np.array([np.sum(weights * np.exp(1j * freq * t)) for t in times])
    dist = None
    if kernel_dim == 1:
        omega = reference if reference is not None else vecs[:, np.argmin(np.abs(vals))]
        norm_sq = float(np.vdot(state, state).real)
        dist = float(abs(limit - norm_sq * np.vdot(omega, a @ omega) / np.vdot(omega, omega)))
    return KoopmanReport(avg, limit, kernel_dim, gap, gap < gap_threshold, dist, corr)


def glued_window_certificate(
    glued: GluedSystem,
    spec: ConjugateSpec,
    E: float,
    kappa: float,
    epsilon: float = 0.5,
    exclude: Sequence[int] | str = "vacuum",
    tol: float = 1e-10,
) -> CertificateReport:
    """λ_min of L̃′_{β,δ} compressed to the window (E-κ, E+κ) minus excluded eigenvectors."""
    vals, vecs = glued.eigenvalues, glued.eigenvectors
    if isinstance(exclude, str):
        rows = np.arange(glued.nu**2) * glued.basis.dim + glued.basis.vacuum_index
        weight = np.sum(np.abs(vecs[rows, :]) ** 2, axis=0)
        exclude = np.flatnonzero(weight > 0.5)
    idx = np.flatnonzero(np.abs(vals - E) < kappa)
    idx = np.setdiff1d(idx, np.asarray(exclude, dtype=int))
    lam = compressed_min(glued.prime_sampled(spec).matrix, vecs[:, idx])
    threshold = 1 - epsilon
    if lam is None:
        return CertificateReport("glued_window", np.inf, threshold, True, tol, (E, kappa), witness="vacuous")
    return CertificateReport(
        "glued_window", lam, threshold, lam >= threshold - tol, tol, (E, kappa),
        constants={"window_size": int(idx.size)},
    )


def low_temperature_certificate(
    small: SmallSystem,
    profile: CouplingProfile,
    modes: ModeSet,
    cap: int,
    spec: ConjugateSpec,
    betas: Sequence[float],
    E: float,
    kappa: float,
    epsilon: float = 0.5,
    E0: float | None = None,
    e: float | None = None,
) -> list[dict]:
    """Window certificates for each β of a ladder, plus the high-energy variant when E0 is given."""
    out = []
    basis = doubled_basis(modes, cap)
    for beta in betas:
        glued = glue(assemble_liouvillean(small, profile, modes, basis, beta))
        rep = glued_window_certificate(glued, spec, E, kappa, epsilon)
        row = {"beta": float(beta), "window": rep.to_dict()}
        if E0 is not None:
            vals, vecs = glued.eigenvalues, glued.eigenvectors
            high = vecs[:, np.abs(vals) > E0]
            lam = compressed_min(glued.prime_sampled(spec).matrix, high)
            row["high_energy"] = {
                "min_eigenvalue": lam if lam is not None else np.inf,
                "passed": lam is None or lam >= (e if e is not None else 0.0) - 1e-10,
            }
        out.append(row)
    return out


def pullthrough_residual_glued(glued: GluedSystem, j: int, z: complex, psi: np.ndarray) -> PullthroughReport:
    """Residual of a_j(L̃-z)⁻¹ = (L̃+ω_j-z)⁻¹(a_j - (Ĝ_j⊗1)(L̃-z)⁻¹/√2) on the signed grid."""
    from .hamiltonian import below_cutoff_rows

    low = lift_field_space(glued.nu**2, fock.mode_annihilators(glued.basis)[j])
    g_lift = lift_small(glued.coupling[j], glued.basis)
    omega = glued.modes.omega[j]
    rows = below_cutoff_rows(glued.basis, glued.nu**2, margin=2)
    ev = glued.eigenvalues
    return pullthrough_core(glued.L_tilde.matrix, low, g_lift, omega, z, psi, ev, ev + omega, rows)


def hvz_probe(glued: GluedSystem, target: float) -> float:
    """Relative residual ‖(L̃ - target)v‖/‖v‖ for v = a*_j Ω with ω_j closest to target and Ω the kernel-nearest eigenvector."""
    j = int(np.argmin(np.abs(glued.modes.omega - target)))
    base = glued.eigenvectors[:, int(np.argmin(np.abs(glued.eigenvalues)))]
    up = lift_field_space(glued.nu**2, fock.mode_annihilators(glued.basis)[j].conj().T)
    v = up @ base
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.inf
    return float(np.linalg.norm(glued.L_tilde.matrix @ v - target * v) / nv)
