import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pflab import coupling, fock, liouville
from pflab.coupling import CouplingProfile, SmallSystem
from pflab.fock import ModeSet
from pflab.hamiltonian import ConjugateSpec

pytestmark = pytest.mark.filterwarnings("ignore:single-mode grid")


def random_system(seed, beta=2.0, amplitude=0.2, cap=3, hermitian=True):
    rng = np.random.default_rng(seed)
    small = SmallSystem.from_energies(np.sort(rng.uniform(0, 1.5, size=2)))
    g0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    if hermitian:
        g0 = g0 + g0.conj().T
    profile = CouplingProfile(nu=2, G0=g0, amplitude=amplitude, p=0.3)
    modes = coupling.radial_grid(2, 3.0)
    basis = liouville.doubled_basis(modes, cap)
    return liouville.assemble_liouvillean(small, profile, modes, basis, beta)


VAN_HOVE = CouplingProfile.explicit([[[0.2]]])
ONE_MODE = ModeSet.from_arrays([1.0], [1.0])


def test_planck_values():
    assert liouville.planck_density(1.0, 1.0) == pytest.approx(1 / (np.e - 1), rel=1e-12)
    assert liouville.planck_density(1.0, 1.0) == pytest.approx(0.5819767, abs=1e-7)
    assert liouville.planck_density(0.001, 2.0) == pytest.approx(500, rel=1e-3)
    assert liouville.planck_density(3.0, np.inf) == 0.0


def test_planck_rejects_nonpositive():
    with pytest.raises(ValueError):
        liouville.planck_density(0.0, 1.0)


def test_gibbs_small():
    small = SmallSystem.from_energies([0.0, 1.0])
    np.testing.assert_allclose(liouville.gibbs_small(small, np.log(2)), np.diag([2 / 3, 1 / 3]))
    np.testing.assert_array_equal(liouville.gibbs_small(small, np.inf), np.diag([1.0, 0.0]))


def test_lp_spectrum():
    lp = liouville.lp_operator(SmallSystem.from_energies([0.0, 1.0]))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(lp.toarray())), [-1, 0, 0, 1])


@pytest.mark.parametrize("beta", [0.5, 2.0, np.inf])
def test_modular_conjugation_reverses_liouvillean(beta):
    s = random_system(1, beta=beta, hermitian=False)
    assert s.jlj_defect == 0.0
    assert s.L_beta.hermitian


def test_modular_conjugation_is_involution():
    s = random_system(2)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=s.dim) + 1j * rng.normal(size=s.dim)
    np.testing.assert_array_equal(s.J.apply(s.J.apply(psi)), psi)


@pytest.mark.parametrize("seed", range(3))
def test_spectrum_reflection_symmetric(seed):
    ev = random_system(seed).eigenvalues
    assert np.abs(ev + ev[::-1]).max() < 1e-10


def test_free_liouvillean_kernel_and_differences():
    small = SmallSystem.from_energies([0.0, 0.7])
    modes = ModeSet.from_arrays([1.0, 1.9], [1.0, 1.0])
    s = liouville.assemble_liouvillean(
        small, CouplingProfile(nu=2, amplitude=0.0), modes, liouville.doubled_basis(modes, 2), 1.0
    )
    ev = s.eigenvalues
    assert np.sum(np.abs(ev) < 1e-12) >= 2
    for d in (-0.7, 0.0, 0.7):
        assert np.min(np.abs(ev - d)) < 1e-12


def test_zero_temperature_reduction():
    rng = np.random.default_rng(4)
    small = SmallSystem.from_energies([0.0, 0.6])
    g0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    profile = CouplingProfile(nu=2, G0=g0, amplitude=0.3, p=0.2)
    modes = coupling.radial_grid(2, 3.0)
    basis = liouville.doubled_basis(modes, 3)
    s = liouville.assemble_liouvillean(small, profile, modes, basis, np.inf)
    ref = liouville.zero_temperature_reference(small, profile, modes, basis)
    assert abs(s.L_beta.matrix - ref).max() < 1e-15


def test_wbeta_bound_holds():
    s = random_system(5, beta=1.0)
    rep = liouville.wbeta_bound_check(s, samples=200)
    assert rep.holds


def test_wbeta_zero_coupling():
    s = random_system(5, amplitude=0.0)
    rep = liouville.wbeta_bound_check(s, samples=5)
    assert np.all(rep.lhs == 0) and np.all(rep.rhs == 0)


# gluing


def test_glued_frequencies():
    modes = ModeSet.from_arrays([1.0, 2.0], [1.0, 1.0])
    gm = coupling.glued_modes(modes)
    np.testing.assert_array_equal(gm.omega, [-2.0, -1.0, 1.0, 2.0])


@pytest.mark.parametrize("beta", [1.0, np.inf])
def test_gluing_unitary_conjugation(beta):
    g = liouville.glue(random_system(6, beta=beta, hermitian=False))
    assert g.unitarity_defect < 1e-12
    assert g.conjugation_defect < 1e-12
    assert g.number_defect < 1e-12


def test_gluing_dense_oracle():
    s = random_system(7)
    g = liouville.glue(s)
    u = g.U.toarray()
    np.testing.assert_allclose(u @ s.L_beta.toarray() @ u.conj().T, g.L_tilde.toarray(), atol=1e-13)


@pytest.mark.parametrize("seed", range(3))
def test_glued_commutator_identity(seed):
    g = liouville.glue(random_system(seed, hermitian=False))
    rep = liouville.liouvillean_commutator(g, ConjugateSpec())
    assert rep.discrepancy < 1e-12 * rep.scale
    assert rep.number_commutator_discrepancy < 1e-12


def test_glued_commutator_free_case():
    s = random_system(0, amplitude=0.0)
    g = liouville.glue(s)
    spec = ConjugateSpec()
    a = g.conjugate_a(spec)
    c = 1j * (g.modes.omega[:, None] - g.modes.omega[None, :]) * a
    expected = np.kron(np.eye(4), fock.dgamma(g.basis, c).toarray())
    assert np.abs(g.prime_exact(spec).toarray() - expected).max() < 1e-14


@pytest.mark.parametrize("seed", range(3))
def test_glued_virial(seed):
    rep = liouville.glued_virial(liouville.glue(random_system(seed)), ConjugateSpec())
    assert rep.max_abs <= 1e-10 * rep.scale


def test_glued_weak_coupling_zero():
    g = liouville.glue(random_system(0, amplitude=0.0))
    rep = liouville.weak_coupling_liouville_certificate(g)
    assert rep.passed and rep.min_eigenvalue == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_glued_weak_coupling_threshold(seed):
    base = liouville.glue(random_system(seed, amplitude=1.0))
    spec = ConjugateSpec()
    norm = coupling.mode_norm(coupling.apply_mode_matrix(base.conjugate_a(spec), base.coupling))
    g = liouville.glue(random_system(seed, amplitude=1.0 / (2 * norm)))
    rep = liouville.weak_coupling_liouville_certificate(g, spec)
    assert rep.passed
    assert rep.constants["aG_norm_sq"] == pytest.approx(0.25)


# KMS


def test_kms_free_is_reference():
    s = random_system(0, amplitude=0.0, beta=1.5)
    k = liouville.kms_vector(s)
    np.testing.assert_allclose(k.vector, liouville.reference_vector(s), atol=1e-14)
    assert k.residual < 1e-14


def test_kms_residual_decreases_along_caps():
    modes = coupling.radial_grid(2, 3.0)
    rng = np.random.default_rng(0)
    g0 = rng.normal(size=(2, 2))
    g0 = g0 + g0.T
    profile = CouplingProfile(nu=2, G0=g0, amplitude=0.05, p=0.3)
    small = SmallSystem.from_energies([0.0, 0.8])
    residuals = [
        liouville.kms_vector(
            liouville.assemble_liouvillean(small, profile, modes, liouville.doubled_basis(modes, cap), 1.0)
        ).residual
        for cap in (2, 3, 4)
    ]
    assert residuals[0] > residuals[1] > residuals[2]


def test_kms_van_hove_overlap_and_convention():
    s = liouville.assemble_liouvillean(
        SmallSystem.from_energies([0.0]), VAN_HOVE, ONE_MODE, liouville.doubled_basis(ONE_MODE, 10), 1.0
    )
    k = liouville.kms_vector(s)
    dressed = liouville.vanhove_dressing(s) @ liouville.reference_vector(s)
    assert abs(np.vdot(dressed, k.vector)) >= 0.999
    assert k.convention == "half_beta"
    assert k.overlap.real > 0 and abs(k.overlap.imag) < 1e-14


def test_kms_vector_is_j_invariant():
    s = random_system(3, amplitude=0.05, beta=1.0)
    k = liouville.kms_vector(s)
    assert np.linalg.norm(s.J.apply(k.vector) - k.vector) < 1e-6


# van Hove


def test_vanhove_shift_and_decay():
    reports = {cap: liouville.vanhove_oracle(VAN_HOVE, ONE_MODE, 1.0, cap) for cap in (4, 10)}
    assert reports[10].energy_shift == pytest.approx(-0.02, abs=1e-15)
    assert reports[10].truncated_sigma == pytest.approx(-0.02, abs=1e-8)
    assert reports[4].dressing_defect > 10 * reports[10].dressing_defect


def test_vanhove_identity_when_uncoupled():
    zero = CouplingProfile.explicit([[[0.0]]])
    rep = liouville.vanhove_oracle(zero, ONE_MODE, np.inf, 3)
    np.testing.assert_allclose(rep.dressing, np.eye(rep.dressing.shape[0]), atol=1e-15)


def test_vanhove_rejects_matrix_systems():
    with pytest.raises(ValueError):
        liouville.vanhove_oracle(CouplingProfile(nu=2), coupling.uniform_grid(2, 2.0), 1.0, 2)


# Weyl


def test_weyl_vacuum_closed_form():
    rep = liouville.weyl_expectation(ONE_MODE, np.inf, [0.5], 12)
    assert rep.closed_form == pytest.approx(np.exp(-0.0625))
    assert rep.closed_form == pytest.approx(0.939413, abs=1e-6)
    assert rep.gap < 1e-6


def test_weyl_zero_function():
    rep = liouville.weyl_expectation(ONE_MODE, 1.0, [0.0], 4)
    assert rep.truncated == 1.0 and rep.closed_form == 1.0


@given(st.floats(0.2, 10.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
@settings(max_examples=10, deadline=None)
def test_weyl_thermal_closed_form(beta, re, im):
    f = np.array([re + 1j * im]) / np.sqrt(2)
    rho = 1 / np.expm1(beta)
    if np.sqrt(1 + 2 * rho) * abs(f[0]) > 0.5:
        return
    rep = liouville.weyl_expectation(ONE_MODE, beta, f, 12)
    assert rep.gap < 1e-6


def test_weyl_left_right_commute():
    rep = liouville.weyl_expectation(coupling.uniform_grid(2, 2.0), 1.0, [0.3, 0.2], 10, g=[0.1, 0.25])
    assert rep.commutator_defect < 1e-8


# Koopman


def test_koopman_identity_observable():
    s = random_system(1, amplitude=0.1)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=s.dim) + 1j * rng.normal(size=s.dim)
    rep = liouville.koopman_diagnostics(s, np.eye(s.dim), psi, T=50.0, times=np.linspace(0, 5, 6))
    np.testing.assert_allclose(rep.correlation, np.vdot(psi, psi), rtol=1e-12)


def test_koopman_free_kernel_degenerate():
    s = random_system(1, amplitude=0.0)
    rep = liouville.koopman_diagnostics(s, np.eye(s.dim), liouville.reference_vector(s), T=1.0)
    assert rep.kernel_dimension >= 2


def test_koopman_time_average_converges_to_mean():
    s = random_system(2, amplitude=0.1)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=s.dim)
    psi /= np.linalg.norm(psi)
    x = rng.normal(size=(s.dim, s.dim))
    obs = x + x.T
    rep = liouville.koopman_diagnostics(s, obs, psi, T=1e12)
    assert abs(rep.time_average - rep.limit) < 1e-8


def test_koopman_mean_oracle():
    s = random_system(3, amplitude=0.1)
    rng = np.random.default_rng(2)
    psi = rng.normal(size=s.dim)
    obs = np.diag(rng.normal(size=s.dim))
    rep = liouville.koopman_diagnostics(s, obs, psi, T=1.0)
    vals, vecs = np.linalg.eigh(s.L_beta.toarray())
    groups = np.round(vals, 8)
    oracle = 0.0
    for v in np.unique(groups):
        p = vecs[:, groups == v]
        proj = p @ (p.conj().T @ psi)
        oracle += np.vdot(proj, obs @ proj)
    assert abs(rep.limit - oracle) < 1e-8


# certificates and pull-through


def test_low_temperature_ladder_free_case():
    small = SmallSystem.from_energies([0.0, 0.35])
    modes = ModeSet.from_arrays([1.0, 1.6], [1.0, 1.0])
    spec = ConjugateSpec(delta0=0.5, delta_inf=2.0, mu=0.2, variant="m_delta")
    rows = liouville.low_temperature_certificate(
        small, CouplingProfile(nu=2, amplitude=0.0), modes, 2, spec, [np.inf], E=1.3, kappa=0.2
    )
    assert rows[0]["window"]["passed"]


def test_low_temperature_ladder_weak():
    small = SmallSystem.from_energies([0.0, 0.35])
    modes = ModeSet.from_arrays([1.0, 1.6], [1.0, 1.0])
    spec = ConjugateSpec(delta0=0.5, delta_inf=2.0, mu=0.2, variant="m_delta")
    profile = CouplingProfile(nu=2, G0=np.array([[0, 1], [1, 0]]), amplitude=0.02, p=0.3)
    rows = liouville.low_temperature_certificate(
        small, profile, modes, 2, spec, [8, 16, 32, 64], E=1.3, kappa=0.2, E0=2.5, e=0.5
    )
    passes = [r["window"]["passed"] for r in rows]
    assert passes == sorted(passes)
    assert all(r["high_energy"]["passed"] for r in rows)


def test_glued_pullthrough_free():
    g = liouville.glue(random_system(0, amplitude=0.0))
    psi = np.zeros(g.dim, complex)
    psi[[0, 5]] = 1.0
    assert liouville.pullthrough_residual_glued(g, 1, 0.3 + 0.7j, psi).residual < 1e-15


@pytest.mark.parametrize("z", [0.5j, -1.0 + 0.3j, 2.0 - 1.0j])
def test_glued_pullthrough_weak(z):
    modes = coupling.radial_grid(1, 2.0)
    rng = np.random.default_rng(3)
    g0 = rng.normal(size=(2, 2))
    profile = CouplingProfile(nu=2, G0=g0 + g0.T, amplitude=0.003, p=0.3)
    small = SmallSystem.from_energies([0.0, 0.5])
    s = liouville.assemble_liouvillean(small, profile, modes, liouville.doubled_basis(modes, 10), 2.0)
    g = liouville.glue(s)
    psi = np.zeros(g.dim, complex)
    from pflab.hamiltonian import below_cutoff_rows

    rows = below_cutoff_rows(g.basis, 4, margin=8)
    psi[rows] = rng.normal(size=rows.size)
    assert liouville.pullthrough_residual_glued(g, 0, z, psi).residual < 1e-10


def test_hvz_probe_reports_finite_residual():
    g = liouville.glue(random_system(0, amplitude=0.05))
    assert np.isfinite(liouville.hvz_probe(g, 1.0))
