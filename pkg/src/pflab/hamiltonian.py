"""Truncated Pauli-Fierz Hamiltonians, their commutators with the conjugate operator, and certificates.

The total space is ℂ^ν ⊗ F with the small system as the left (slow) tensor
factor, so ``np.kron(K, 1_F)`` is the small-system Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import fock
from ._conjugate import (
    ConjugateSpec,
    aux_d,
    chi,
    commutator_matrix,
    grid_conjugate,
    m_delta,
    weight_function,
)
from .coupling import (
    CouplingProfile,
    SmallSystem,
    apply_mode_matrix,
    conjugate_on_modes,
    coupling_norms,
    mode_norm,
    sample_coupling,
)
from .fock import ModeSet, OccBasis, SparseOp

DEGENERACY_TOL = 1e-9


def conjugate_a(modes: ModeSet, spec: ConjugateSpec) -> np.ndarray:
    """Grid realization of the one-particle conjugate a_m, Hermitian as stored."""
    return conjugate_on_modes(modes, spec)


def hermitian_part(x) -> sp.csr_matrix:
    """(X + X*)/2, Hermitian entrywise by construction."""
    x = sp.csr_matrix(x, dtype=complex)
    return fock._canonical((x + x.conj().T) * 0.5)


def lift_field_space(nu: int, op) -> sp.csr_matrix:
    """1_ν ⊗ op."""
    return fock._canonical(sp.kron(sp.identity(nu, dtype=complex), op, format="csr"))


def lift_small(small_op, basis: OccBasis) -> sp.csr_matrix:
    """op ⊗ 1_F."""
    return fock._canonical(sp.kron(sp.csr_matrix(small_op, dtype=complex), sp.identity(basis.dim), format="csr"))


def matrix_creation(basis: OccBasis, mats) -> sp.csr_matrix:
    """a*(F) = Σ_j F_j ⊗ a_j* for matrix-valued F."""
    mats = np.asarray(mats, dtype=complex)
    if mats.shape[0] != basis.mode_count:
        raise ValueError("one matrix per mode is required")
    nu = mats.shape[1]
    out = sp.csr_matrix((nu * basis.dim, nu * basis.dim), dtype=complex)
    for fj, low in zip(mats, fock.mode_annihilators(basis)):
        if np.any(fj):
            out = out + sp.kron(sp.csr_matrix(fj), low.conj().T, format="csr")
    return fock._canonical(out)


def matrix_field(basis: OccBasis, mats) -> sp.csr_matrix:
    """Segal field φ(F) = (a(F) + a*(F))/√2 with a(F) = a*(F)*; exactly Hermitian."""
    up = matrix_creation(basis, mats) / np.sqrt(2)
    return fock._canonical(up + up.conj().T)


def rotated(mats: np.ndarray) -> np.ndarray:
    """iF mode-wise."""
    return 1j * np.asarray(mats)


@dataclass(frozen=True, eq=False)
class HamiltonianBundle:
    """Assembled H with its free part, number operator and conjugate operator."""

    small: SmallSystem
    modes: ModeSet
    basis: OccBasis
    spec: ConjugateSpec
    coupling: np.ndarray
    one_particle_a: np.ndarray
    H0: SparseOp
    H: SparseOp
    N: SparseOp
    A: SparseOp

    @property
    def nu(self) -> int:
        return self.small.nu

    @property
    def dim(self) -> int:
        return self.H.dim

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        vals, vecs = np.linalg.eigh(self.H.toarray())
        return vals, vecs

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.spectrum[1]

    @property
    def Sigma(self) -> float:
        return float(self.eigenvalues[0])

    @cached_property
    def Hprime_exact(self) -> SparseOp:
        # i[H, A] = iHA + (iHA)*
        y = 1j * (self.H.matrix @ self.A.matrix)
        return SparseOp.wrap(y + y.conj().T, self.basis.basis_id, hermitian=True)

    @cached_property
    def one_particle_commutator(self) -> np.ndarray:
        return commutator_matrix(self.modes.omega, self.one_particle_a)

    @cached_property
    def aG(self) -> np.ndarray:
        return apply_mode_matrix(self.one_particle_a, self.coupling)

    @property
    def aG_norm(self) -> float:
        return mode_norm(self.aG)

    def formula_prime(self, sign: float = -1.0) -> SparseOp:
        """dΓ(c) + sign·φ(i a G)."""
        dg = hermitian_part(fock.dgamma(self.basis, self.one_particle_commutator))
        out = lift_field_space(self.nu, dg) + sign * matrix_field(self.basis, rotated(self.aG))
        return SparseOp.wrap(out, self.basis.basis_id, hermitian=True)

    def sampled_prime(self, spec: ConjugateSpec | None = None) -> SparseOp:
        """H′_m = dΓ(m) - φ(i a_m G) with the sampled weight m instead of the grid commutator."""
        spec = spec or self.spec
        a = conjugate_a(self.modes, spec)
        m = weight_function(self.modes.omega, spec)
        dg = fock.dgamma(self.basis, np.diag(m.astype(complex)))
        field_term = matrix_field(self.basis, rotated(apply_mode_matrix(a, self.coupling)))
        return SparseOp.wrap(lift_field_space(self.nu, dg) - field_term, self.basis.basis_id, hermitian=True)


def assemble_H(
    small: SmallSystem,
    profile: CouplingProfile,
    modes: ModeSet,
    basis: OccBasis,
    spec: ConjugateSpec | None = None,
) -> HamiltonianBundle:
    """H = K⊗1 + 1⊗dΓ(ω) + φ(G) on the truncated space."""
    if profile.nu != small.nu:
        raise ValueError("small system and coupling disagree on ν")
    if basis.mode_count != modes.count:
        raise ValueError("basis and mode set disagree on the mode count")
    spec = spec or ConjugateSpec(mu=profile.mu)
    g = sample_coupling(profile, modes)
    nu = small.nu
    free_field = fock.dgamma(basis, np.diag(modes.omega.astype(complex)))
    h0 = lift_small(small.K, basis) + lift_field_space(nu, free_field)
    h = h0 + matrix_field(basis, g)
    a = conjugate_a(modes, spec)
    big_a = lift_field_space(nu, hermitian_part(fock.dgamma(basis, a)))
    bid = basis.basis_id
    return HamiltonianBundle(
        small=small,
        modes=modes,
        basis=basis,
        spec=spec,
        coupling=g,
        one_particle_a=a,
        H0=SparseOp.wrap(h0, bid, hermitian=True),
        H=SparseOp.wrap(h, bid, hermitian=True),
        N=SparseOp.wrap(lift_field_space(nu, fock.number_operator(basis)), bid, hermitian=True),
        A=SparseOp.wrap(big_a, bid, hermitian=True),
    )


def below_cutoff_rows(bundle_basis: OccBasis, nu: int, margin: int = 1) -> np.ndarray:
    """Indices on ℂ^ν⊗F whose Fock part has at most n_total_max - margin quanta."""
    fock_rows = bundle_basis.below_cutoff(margin)
    return (np.arange(nu)[:, None] * bundle_basis.dim + fock_rows[None, :]).ravel()


def _max_abs(x) -> float:
    x = sp.csr_matrix(x)
    return float(np.max(np.abs(x.data))) if x.nnz else 0.0


@dataclass(frozen=True)
class CommutatorReport:
    Hprime_exact: SparseOp
    Hprime_formula: SparseOp
    discrepancy: float
    discrepancy_below_cutoff: float
    field_sign: float
    number_commutator_discrepancy: float
    scale: float


def commutator_observable(bundle: HamiltonianBundle) -> CommutatorReport:
    """Compare i[H, dΓ(a)] with dΓ(i[ω, a]) ∓ φ(i a G), and i[H, N] with -φ(iG)."""
    exact = bundle.Hprime_exact
    best = None
    for sign in (-1.0, 1.0):
        formula = bundle.formula_prime(sign)
        diff = exact.matrix - formula.matrix
        rows = below_cutoff_rows(bundle.basis, bundle.nu)
        cand = (_max_abs(diff), _max_abs(diff[rows][:, rows]), sign, formula)
        if best is None or cand[0] < best[0]:
            best = cand
    y = 1j * (bundle.H.matrix @ bundle.N.matrix)
    hn = y + y.conj().T
    field_rot = matrix_field(bundle.basis, rotated(bundle.coupling))
    return CommutatorReport(
        Hprime_exact=exact,
        Hprime_formula=best[3],
        discrepancy=best[0],
        discrepancy_below_cutoff=best[1],
        field_sign=best[2],
        number_commutator_discrepancy=_max_abs(hn + field_rot),
        scale=max(_max_abs(exact.matrix), 1.0),
    )


def eigen_clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group sorted eigenvalues into clusters of mutually tol-close neighbours."""
    groups, start = [], 0
    for k in range(1, values.size + 1):
        if k == values.size or values[k] - values[k - 1] > tol:
            groups.append(np.arange(start, k))
            start = k
    return groups


def virial_values(eigvecs: np.ndarray, eigvals: np.ndarray, prime, tol: float = DEGENERACY_TOL):
    """⟨ψ, H′ψ⟩ on eigenvectors, diagonalizing H′ inside each degenerate cluster first."""
    scale = max(1.0, float(np.max(np.abs(eigvals)))) if eigvals.size else 1.0
    clusters = eigen_clusters(eigvals, tol * scale)
    prime = sp.csr_matrix(prime)
    out = np.empty(eigvals.size)
    degenerate = 0
    for idx in clusters:
        block_vecs = eigvecs[:, idx]
        block = block_vecs.conj().T @ (prime @ block_vecs)
        if idx.size == 1:
            out[idx] = block.real.ravel()
        else:
            degenerate += 1
            out[idx] = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
    return out, degenerate


@dataclass(frozen=True)
class VirialReport:
    values: np.ndarray
    max_abs: float
    scale: float
    degenerate_clusters: int

    @property
    def relative(self) -> float:
        return self.max_abs / self.scale if self.scale else self.max_abs


def operator_norm(m) -> float:
    dense = m.toarray() if sp.issparse(m) else np.asarray(m)
    if dense.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(dense))))


def virial_check(bundle: HamiltonianBundle, prime: SparseOp | None = None) -> VirialReport:
    """Expectations of i[H, A] in every eigenvector of H."""
    prime = prime or bundle.Hprime_exact
    vals, degenerate = virial_values(bundle.eigenvectors, bundle.eigenvalues, prime.matrix)
    return VirialReport(vals, float(np.max(np.abs(vals))), operator_norm(prime.matrix), degenerate)


@dataclass(frozen=True)
class NumberScan:
    rows: list[dict]
    bound_value: float


def number_moment_scan(
    small: SmallSystem,
    profile: CouplingProfile,
    grids: Sequence[ModeSet],
    caps: Sequence[int],
    k: int = 3,
) -> NumberScan:
    """⟨N⟩ for the lowest k eigenstates across a ladder of grids and cutoffs.

    The reported bound uses the constant 1 since no explicit constant is available.
    """
    rows = []
    for gi, modes in enumerate(grids):
        for cap in caps:
            basis = fock.build_basis(modes, cap)
            b = assemble_H(small, profile, modes, basis)
            vecs = b.eigenvectors[:, :k]
            n_diag = b.N.matrix.diagonal().real
            for s in range(vecs.shape[1]):
                rows.append(
                    {
                        "grid": gi,
                        "cap": int(cap),
                        "state": s,
                        "energy": float(b.eigenvalues[s]),
                        "number": float(np.sum(n_diag * np.abs(vecs[:, s]) ** 2)),
                    }
                )
    bound = np.nan
    if profile.is_scalar:
        norms = coupling_norms(profile)
        bound = (norms.grad + norms.l2_over_k) ** 2
    return NumberScan(rows, float(bound))


@dataclass(frozen=True)
class CertificateReport:
    name: str
    min_eigenvalue: float
    threshold: float
    passed: bool
    tolerance: float
    window: tuple[float, float] | None = None
    constants: Mapping[str, float] = field(default_factory=dict)
    reported: Mapping[str, float] = field(default_factory=dict)
    witness: str = "computed"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "min_eigenvalue": self.min_eigenvalue,
            "threshold": self.threshold,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "window": list(self.window) if self.window else None,
            "constants": dict(self.constants),
            "reported": dict(self.reported),
            "witness": self.witness,
        }


def _vacuum_projector(basis: OccBasis, nu: int) -> sp.csr_matrix:
    diag = np.zeros(nu * basis.dim)
    diag[np.arange(nu) * basis.dim + basis.vacuum_index] = 1.0
    return sp.diags(diag.astype(complex), format="csr")


def _lambda_min(m) -> float:
    dense = m.toarray() if sp.issparse(m) else np.asarray(m)
    return float(np.linalg.eigvalsh(0.5 * (dense + dense.conj().T))[0])


def weak_coupling_certificate(
    bundle: HamiltonianBundle, spec: ConjugateSpec | None = None, tol: float = 1e-10
) -> CertificateReport:
    """H′ ≥ ½N - ‖aG‖² with m ≡ 1, where G already carries the coupling strength."""
    spec = spec or ConjugateSpec(mu=bundle.spec.mu)
    if spec.variant != "translations":
        raise ValueError("the weak-coupling certificate needs the translations variant")
    prime = bundle.sampled_prime(spec).matrix
    a = conjugate_a(bundle.modes, spec)
    ag_sq = mode_norm(apply_mode_matrix(a, bundle.coupling)) ** 2
    ident = sp.identity(bundle.dim, dtype=complex, format="csr")
    margin = _lambda_min(prime - 0.5 * bundle.N.matrix + ag_sq * ident)
    vac = _vacuum_projector(bundle.basis, bundle.nu)
    derivable = _lambda_min(prime - 0.25 * ident + 0.5 * vac)
    stated = _lambda_min(prime - 0.25 * ident + 0.25 * vac)
    vecs = bundle.eigenvectors
    expectations = np.einsum("ij,ij->j", vecs.conj(), prime @ vecs).real
    return CertificateReport(
        name="weak_coupling",
        min_eigenvalue=margin,
        threshold=0.0,
        passed=margin >= -tol,
        tolerance=tol,
        constants={"aG_norm_sq": ag_sq, "coupling_threshold": 0.25},
        reported={
            "quarter_minus_half_vacuum": derivable,
            "quarter_minus_quarter_vacuum": stated,
            "nonpositive_expectation_count": int(np.sum(expectations <= tol)),
            "applicable": float(ag_sq <= 0.25 + 1e-12),
        },
    )


def _window_vectors(eigvals, eigvecs, lo, hi, exclude: Sequence[int] = ()):
    idx = np.flatnonzero((eigvals > lo) & (eigvals < hi))
    idx = np.setdiff1d(idx, np.asarray(exclude, dtype=int))
    return eigvecs[:, idx]


def compressed_min(prime, vecs) -> float | None:
    if vecs.shape[1] == 0:
        return None
    block = vecs.conj().T @ (sp.csr_matrix(prime) @ vecs)
    return float(np.linalg.eigvalsh(0.5 * (block + block.conj().T))[0])


def vacuum_dominated(bundle: HamiltonianBundle, threshold: float = 0.5) -> np.ndarray:
    """Eigenvector indices whose weight on the field vacuum exceeds ``threshold``."""
    rows = np.arange(bundle.nu) * bundle.basis.dim + bundle.basis.vacuum_index
    weight = np.sum(np.abs(bundle.eigenvectors[rows, :]) ** 2, axis=0)
    return np.flatnonzero(weight > threshold)


def mourre_window_certificate(
    bundle: HamiltonianBundle,
    spec: ConjugateSpec,
    E: float,
    kappa: float,
    epsilon: float = 0.5,
    exclude: Sequence[int] | str = (),
    tol: float = 1e-10,
) -> CertificateReport:
    """λ_min of H′_δ compressed to the spectral window (E-κ, E+κ) minus excluded eigenvectors."""
    if isinstance(exclude, str):
        if exclude != "vacuum":
            raise ValueError("exclude must be indices or 'vacuum'")
        exclude = vacuum_dominated(bundle)
    prime = bundle.sampled_prime(spec).matrix
    vecs = _window_vectors(bundle.eigenvalues, bundle.eigenvectors, E - kappa, E + kappa, exclude)
    lam = compressed_min(prime, vecs)
    threshold = 1.0 - epsilon
    if lam is None:
        return CertificateReport("mourre_window", np.inf, threshold, True, tol, (E, kappa), witness="vacuous")
    return CertificateReport(
        "mourre_window",
        lam,
        threshold,
        lam >= threshold - tol,
        tol,
        (E, kappa),
        constants={"epsilon": epsilon, "window_size": int(vecs.shape[1]), "excluded": len(exclude)},
    )


def high_energy_certificate(
    bundle: HamiltonianBundle, spec: ConjugateSpec, E0: float, e: float, tol: float = 1e-10
) -> CertificateReport:
    """λ_min of H′_δ compressed to eigenvalues above E0, against e."""
    prime = bundle.sampled_prime(spec).matrix
    vecs = _window_vectors(bundle.eigenvalues, bundle.eigenvectors, E0, np.inf)
    lam = compressed_min(prime, vecs)
    if lam is None:
        return CertificateReport("high_energy", np.inf, e, True, tol, witness="vacuous")
    return CertificateReport("high_energy", lam, e, lam >= e - tol, tol, constants={"E0": E0})


@dataclass(frozen=True)
class PullthroughReport:
    residual: float
    residual_below_cutoff: float
    scale: float


def _resolvent_solve(matrix, z, rhs, spectrum):
    if np.min(np.abs(spectrum - z)) < 1e-8:
        raise ValueError("z lies within 1e-8 of the spectrum")
    dense = matrix.toarray() - z * np.eye(matrix.shape[0])
    return np.linalg.solve(dense, rhs)


def pullthrough_core(H, lowering, G_lift, shift, z, psi, spectrum, shifted_spectrum, rows):
    """‖a R(z)ψ - R_ω(z) aψ + R_ω(z) G R(z)ψ/√2‖ in full and on ``rows``."""
    r_psi = _resolvent_solve(H, z, psi, spectrum)
    shifted = H + shift * sp.identity(H.shape[0], format="csr")
    lhs = lowering @ r_psi
    rhs = _resolvent_solve(shifted, z, lowering @ psi - (G_lift @ r_psi) / np.sqrt(2), shifted_spectrum)
    diff = lhs - rhs
    return PullthroughReport(
        float(np.linalg.norm(diff)), float(np.linalg.norm(diff[rows])), float(np.linalg.norm(lhs))
    )


def pullthrough_residual(bundle: HamiltonianBundle, j: int, z: complex, psi: np.ndarray) -> PullthroughReport:
    """Residual of a_j(H-z)⁻¹ = (H+ω_j-z)⁻¹(a_j - (G_j⊗1)(H-z)⁻¹/√2)."""
    psi = np.asarray(psi, dtype=complex)
    low = lift_field_space(bundle.nu, fock.mode_annihilators(bundle.basis)[j])
    g_lift = lift_small(bundle.coupling[j], bundle.basis)
    omega = bundle.modes.omega[j]
    rows = below_cutoff_rows(bundle.basis, bundle.nu, margin=2)
    ev = bundle.eigenvalues
    return pullthrough_core(bundle.H.matrix, low, g_lift, omega, z, psi, ev, ev + omega, rows)


@dataclass(frozen=True)
class EvolutionReport:
    times: np.ndarray
    trace: np.ndarray
    cesaro: np.ndarray
    limit_mean: complex
    limit_mean_square: float

    def time_average(self, T: float) -> complex:
        """Closed-form (1/T)∫₀^T trace(t) dt."""
        phase = self._freqs * T
        with np.errstate(divide="ignore", invalid="ignore"):
            kernel = np.where(np.abs(phase) < 1e-14, 1.0, (1 - np.exp(-1j * phase)) / (1j * phase))
        return complex(np.sum(self._amps * kernel))

    _amps: np.ndarray = field(default=None, repr=False)
    _freqs: np.ndarray = field(default=None, repr=False)


def evolve_and_approach(
    bundle: HamiltonianBundle, phi: np.ndarray, psi: np.ndarray, times: np.ndarray
) -> EvolutionReport:
    """⟨φ, e^{-it(H-Σ)}ψ⟩ by spectral decomposition, with running Cesàro means."""
    return spectral_evolution(bundle.eigenvalues, bundle.eigenvectors, phi, psi, times, bundle.Sigma)


def spectral_evolution(eigvals, eigvecs, phi, psi, times, origin=0.0, tol=DEGENERACY_TOL) -> EvolutionReport:
    times = np.asarray(times, dtype=float)
    amps = (eigvecs.conj().T @ np.asarray(phi, dtype=complex)).conj() * (eigvecs.conj().T @ psi)
    freqs = eigvals - origin
    trace = np.exp(-1j * np.outer(times, freqs)) @ amps
    cesaro = np.empty_like(trace)
    if times.size:
        cum = np.concatenate([[0], np.cumsum(0.5 * (trace[1:] + trace[:-1]) * np.diff(times))])
        span = times - times[0]
        cesaro[0] = trace[0]
        cesaro[1:] = cum[1:] / span[1:]
    scale = max(1.0, float(np.max(np.abs(eigvals))))
    clusters = eigen_clusters(eigvals, tol * scale)
    limit = complex(sum(amps[c].sum() for c in clusters if abs(freqs[c[0]]) < tol * scale))
    square = float(sum(abs(amps[c].sum()) ** 2 for c in clusters))
    return EvolutionReport(times, trace, cesaro, limit, square, amps, freqs)


def resolvent_continuity(
    small: SmallSystem,
    profiles: Sequence[CouplingProfile],
    modes: ModeSet,
    basis: OccBasis,
    z: complex,
) -> float:
    """Largest ‖R(G) - R(G′)‖ / ‖G - G′‖ over consecutive profile pairs."""
    ratios = []
    bundles = [assemble_H(small, p, modes, basis) for p in profiles]
    for b1, b2 in zip(bundles, bundles[1:]):
        eye = np.eye(b1.dim)
        r1 = np.linalg.inv(b1.H.toarray() - z * eye)
        r2 = np.linalg.inv(b2.H.toarray() - z * eye)
        dg = mode_norm(b1.coupling - b2.coupling)
        if dg > 0:
            ratios.append(np.linalg.norm(r1 - r2, 2) / dg)
    return float(max(ratios)) if ratios else 0.0


__all__ = [
    "ConjugateSpec",
    "aux_d",
    "chi",
    "m_delta",
    "grid_conjugate",
    "weight_function",
    "commutator_matrix",
    "conjugate_a",
    "matrix_field",
    "matrix_creation",
    "HamiltonianBundle",
    "assemble_H",
    "CommutatorReport",
    "commutator_observable",
    "VirialReport",
    "virial_check",
    "virial_values",
    "NumberScan",
    "number_moment_scan",
    "CertificateReport",
    "weak_coupling_certificate",
    "mourre_window_certificate",
    "high_energy_certificate",
    "PullthroughReport",
    "pullthrough_residual",
    "EvolutionReport",
    "evolve_and_approach",
    "spectral_evolution",
    "resolvent_continuity",
]
