"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import numpy as np
import pytest

from pflab import coupling, fock, hamiltonian, liouville
from pflab import mourre_lap as ml
from pflab.coupling import CouplingProfile, SmallSystem
from pflab.fock import ModeSet
from pflab.hamiltonian import ConjugateSpec

pytestmark = pytest.mark.filterwarnings("ignore:single-mode grid")

SEEDS = [0, 1, 2, 3, 4]
VAN_HOVE = CouplingProfile.explicit([[[0.2]]])
ONE_MODE = ModeSet.from_arrays([1.0], [1.0])


@pytest.fixture
def verdict(pytestconfig):
    reporter = pytestconfig.pluginmanager.getplugin("terminalreporter")

    def emit(number, title, checks):
        failed = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {number:>2} [{status}] {title}"
        if failed:
            line += f" (failing: {', '.join(failed)})"
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)
        assert not failed, line

    return emit


def hamiltonian_instance(seed, nu=2, modes=2, cap=3, amplitude=0.3):
    rng = np.random.default_rng(seed)
    small = SmallSystem.from_energies(np.sort(rng.uniform(0, 2, size=nu)))
    g0 = rng.normal(size=(nu, nu)) + 1j * rng.normal(size=(nu, nu))
    profile = CouplingProfile(nu=nu, G0=g0 + g0.conj().T, amplitude=amplitude, p=0.3)
    grid = coupling.radial_grid(modes, 3.0)
    return hamiltonian.assemble_H(small, profile, grid, fock.build_basis(grid, cap))


def doubled_instance(seed, beta=2.0, amplitude=0.2, cap=3):
    rng = np.random.default_rng(seed)
    small = SmallSystem.from_energies(np.sort(rng.uniform(0, 1.5, size=2)))
    g0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    profile = CouplingProfile(nu=2, G0=g0 + g0.conj().T, amplitude=amplitude, p=0.3)
    modes = coupling.radial_grid(2, 3.0)
    basis = liouville.doubled_basis(modes, cap)
    return liouville.assemble_liouvillean(small, profile, modes, basis, beta)


def _max(x):
    x = x.toarray() if hasattr(x, "toarray") else np.asarray(x)
    return float(np.abs(x).max(initial=0.0))


def test_criterion_01_exact_identities(verdict):
    tol = 1e-12
    rng = np.random.default_rng(0)
    checks = {}

    basis = fock.build_basis(3, 4)
    keep = basis.below_cutoff(1)
    f, g = rng.normal(size=3) + 1j * rng.normal(size=3), rng.normal(size=3) + 1j * rng.normal(size=3)
    a, adag = fock.annihilation(basis, f), fock.creation(basis, g)
    comm = (a @ adag - adag @ a).toarray()[np.ix_(keep, keep)]
    scale = 1 + np.abs(f).sum() * np.abs(g).sum()
    checks["ccr"] = _max(comm - np.vdot(f, g) * np.eye(keep.size)) < tol * scale

    h1, h2 = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
    d1, d2 = fock.dgamma(basis, h1), fock.dgamma(basis, h2)
    rhs = fock.dgamma(basis, h1 @ h2 - h2 @ h1)
    checks["dgamma_lie"] = _max(d1 @ d2 - d2 @ d1 - rhs) < tol * (1 + _max(rhs))

    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b /= 1.01 * np.linalg.norm(b, 2)
    gb = fock.gamma(basis, b)
    lhs = (fock.annihilation(basis, f) @ gb).toarray()
    rhs = (gb @ fock.annihilation(basis, b.conj().T @ f)).toarray()
    checks["gamma_intertwining"] = _max(lhs - rhs) < tol

    x = rng.normal(size=(3, 3))
    w, v = np.linalg.eigh((x + x.T) / 2)
    b0, binf = (v * np.cos(w)) @ v.T, (v * np.sin(w)) @ v.T
    split = fock.split_localize(basis, b0, binf)
    gm = split.matrix.toarray()
    checks["split_isometry"] = _max(gm.conj().T @ gm - np.eye(basis.dim)) < tol
    h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    q0, qi = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
    lhs = split.lift_pair(q0, qi) @ split.matrix - split.matrix @ fock.dgamma(basis, h)
    rhs = split.dgamma2(np.vstack([b0, binf]), np.vstack([q0 @ b0 - b0 @ h, qi @ binf - binf @ h]))
    checks["split_dgamma_intertwining"] = _max(lhs - rhs) < tol * (1 + _max(rhs))
    lhs = split.field_pair(b0.conj().T @ f, binf.conj().T @ f) @ split.matrix
    lhs = (lhs - split.matrix @ fock.segal_field(basis, f)).toarray()[:, keep]
    checks["split_field_intertwining"] = _max(lhs) < tol * scale

    bundle = hamiltonian_instance(0, nu=2, modes=3, cap=3)
    assert bundle.dim <= 500
    rep = hamiltonian.commutator_observable(bundle)
    checks["H_commutator"] = rep.discrepancy < tol * rep.scale
    checks["H_number_commutator"] = rep.number_commutator_discrepancy < tol * rep.scale

    system = doubled_instance(0)
    glued = liouville.glue(system)
    grep = liouville.liouvillean_commutator(glued, ConjugateSpec())
    checks["glued_commutator"] = grep.discrepancy < tol * grep.scale
    checks["jlj"] = system.jlj_defect < tol * max(1.0, _max(system.L_beta.matrix))
    checks["gluing_conjugation"] = max(glued.conjugation_defect, glued.unitarity_defect) < tol

    prof = CouplingProfile(nu=2, G0=np.array([[0.3, 1 - 0.5j], [1 + 0.5j, -0.2]]), p=0.3)
    modes = coupling.radial_grid(4, 3.0, ir_levels=2)
    first = coupling.glued_coupling(prof, modes, 1.3).coupling
    second = coupling.glued_coupling_alternative(prof, modes, 1.3)
    checks["glued_representations"] = _max(first - second) < tol * max(1.0, _max(first))
    verdict(1, "exact-identity suite", checks)


def test_criterion_02_virial(verdict):
    checks = {}
    for seed in SEEDS:
        b = hamiltonian_instance(seed, amplitude=0.5)
        checks[f"H seed {seed}"] = hamiltonian.virial_check(b).relative <= 1e-10
        g = liouville.glue(doubled_instance(seed, amplitude=0.3))
        checks[f"L seed {seed}"] = liouville.glued_virial(g, ConjugateSpec()).relative <= 1e-10
    verdict(2, "virial theorem on eigenvectors (H and glued L)", checks)


def test_criterion_03_weak_coupling(verdict):
    checks = {}
    spec = ConjugateSpec()
    for seed in SEEDS:
        base = hamiltonian_instance(seed, amplitude=1.0)
        lam = 1.0 / (2 * base.aG_norm)
        b = hamiltonian_instance(seed, amplitude=lam)
        checks[f"H seed {seed}"] = hamiltonian.weak_coupling_certificate(b, spec).passed
        gbase = liouville.glue(doubled_instance(seed, amplitude=1.0))
        norm = coupling.mode_norm(coupling.apply_mode_matrix(gbase.conjugate_a(spec), gbase.coupling))
        g = liouville.glue(doubled_instance(seed, amplitude=1.0 / (2 * norm)))
        checks[f"L seed {seed}"] = liouville.weak_coupling_liouville_certificate(g, spec).passed
    verdict(3, "weak-coupling certificates at the threshold coupling", checks)


def test_criterion_04_van_hove(verdict):
    reports = {cap: liouville.vanhove_oracle(VAN_HOVE, ONE_MODE, 1.0, cap) for cap in (4, 8, 10)}
    displacement = 0.2 / 1.0
    bundle = hamiltonian.assemble_H(
        SmallSystem.from_energies([0.0]), VAN_HOVE, ONE_MODE, fock.build_basis(ONE_MODE, 10)
    )
    ground = bundle.eigenvectors[:, 0]
    number = float(np.vdot(ground, bundle.N.matrix @ ground).real)
    checks = {
        "displacement <= 0.3": displacement <= 0.3,
        "Sigma cap 8": abs(reports[8].truncated_sigma - reports[8].energy_shift) < 1e-8,
        "Sigma cap 10": abs(reports[10].truncated_sigma - reports[10].energy_shift) < 1e-8,
        "ground number": abs(number - reports[10].coherent_number) < 1e-6,
        "dressing decay": reports[4].dressing_defect >= 10 * reports[10].dressing_defect,
    }
    verdict(4, "van Hove oracle", checks)


def test_criterion_05_kms(verdict):
    modes = coupling.radial_grid(2, 3.0)
    g0 = np.array([[0.4, 1.0], [1.0, -0.3]])
    small = SmallSystem.from_energies([0.0, 0.8])
    weak = CouplingProfile(nu=2, G0=g0, amplitude=0.05, p=0.3)
    residuals = [
        liouville.kms_vector(
            liouville.assemble_liouvillean(small, weak, modes, liouville.doubled_basis(modes, cap), 1.0)
        ).residual
        for cap in (2, 3, 4)
    ]
    free = liouville.assemble_liouvillean(
        small, weak.with_amplitude(0.0), modes, liouville.doubled_basis(modes, 3), 1.0
    )
    vh = liouville.assemble_liouvillean(
        SmallSystem.from_energies([0.0]), VAN_HOVE, ONE_MODE, liouville.doubled_basis(ONE_MODE, 10), 1.0
    )
    kms = liouville.kms_vector(vh)
    dressed = liouville.vanhove_dressing(vh) @ liouville.reference_vector(vh)
    checks = {
        "residual decreasing": residuals[0] > residuals[1] > residuals[2],
        "G=0 residual": liouville.kms_vector(free).residual == 0.0,
        "van Hove overlap": abs(np.vdot(dressed, kms.vector)) >= 0.999,
    }
    verdict(5, "KMS vector", checks)


def test_criterion_06_pullthrough(verdict):
    checks = {}
    b = hamiltonian_instance(11, amplitude=0.02, cap=8)
    rng = np.random.default_rng(0)
    psi = np.zeros(b.dim, complex)
    rows = hamiltonian.below_cutoff_rows(b.basis, b.nu, margin=6)
    psi[rows] = rng.normal(size=rows.size)
    for shift in (-1.0, -2.0 + 0.3j, 0.5 + 1.0j):
        z = b.Sigma + shift
        checks[f"H z={z:.2f}"] = hamiltonian.pullthrough_residual(b, 1, z, psi).residual < 1e-10

    modes = coupling.radial_grid(1, 2.0)
    g0 = rng.normal(size=(2, 2))
    profile = CouplingProfile(nu=2, G0=g0 + g0.T, amplitude=0.003, p=0.3)
    system = liouville.assemble_liouvillean(
        SmallSystem.from_energies([0.0, 0.5]), profile, modes, liouville.doubled_basis(modes, 10), 2.0
    )
    g = liouville.glue(system)
    psi = np.zeros(g.dim, complex)
    rows = hamiltonian.below_cutoff_rows(g.basis, 4, margin=8)
    psi[rows] = rng.normal(size=rows.size)
    for z in (0.5j, -1.0 + 0.3j, 2.0 - 1.0j):
        checks[f"L z={z}"] = liouville.pullthrough_residual_glued(g, 0, z, psi).residual < 1e-10
    verdict(6, "pull-through residuals", checks)


def test_criterion_07_thermal_decay(verdict):
    # an (LG1) profile: p ≥ μ at the infrared end
    modes = coupling.radial_grid(24, 8.0, ir_levels=14)
    prof = CouplingProfile(nu=1, G0=np.eye(1), amplitude=1.0, p=0.05, mu=0.05)
    audit = coupling.audit_regularity(prof, 1, modes=modes)
    res = coupling.coupling_difference_bound(prof, modes, [8, 16, 32, 64], ConjugateSpec(mu=0.05))
    checks = {
        "profile is LG1": bool(audit.holds["LG1"]),
        f"slope {res.slope:.3f} in [-0.6, -0.4]": -0.6 <= res.slope <= -0.4,
    }
    verdict(7, "thermal coupling decay exponent", checks)


def test_criterion_08_koopman(verdict):
    system = doubled_instance(3, amplitude=0.1)
    rng = np.random.default_rng(2)
    psi = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    psi /= np.linalg.norm(psi)
    x = rng.normal(size=(system.dim, system.dim))
    obs = x + x.T
    # the smallest nonzero Bohr frequency is ~5e-7, so the remainder decays like 1/(5e-7·T)
    rep = liouville.koopman_diagnostics(system, obs, psi, T=1e14)
    vals, vecs = np.linalg.eigh(system.L_beta.toarray())
    oracle = 0.0
    for cluster in hamiltonian.eigen_clusters(vals, 1e-9 * max(1.0, np.abs(vals).max())):
        p = vecs[:, cluster]
        proj = p @ (p.conj().T @ psi)
        oracle += np.vdot(proj, obs @ proj)
    free = doubled_instance(3, amplitude=0.0)
    kernel = liouville.koopman_diagnostics(free, obs, psi, T=1.0).kernel_dimension
    checks = {
        "long-time average": abs(rep.time_average - oracle) < 1e-8,
        "limit": abs(rep.limit - oracle) < 1e-8,
        f"G=0 kernel dimension {kernel} >= nu": kernel >= free.nu,
    }
    verdict(8, "Koopman means", checks)


def test_criterion_09_lap(verdict):
    rng = np.random.default_rng(0)
    strict = []
    for _ in range(5):
        t = np.diag(np.sort(rng.uniform(-2, 2, size=6)))
        e, eps, im = rng.uniform(0.1, 2), rng.uniform(1e-4, 1), rng.uniform(1e-4, 1)
        strict.append(ml.strict_resolvent_defect(t, e, eps, t[3, 3] + 1j * im))

    small = SmallSystem.from_energies([0.0, 1.0])
    profile = CouplingProfile(nu=2, G0=np.array([[0.0, 1.0], [1.0, 0.0]]), amplitude=0.1, p=0.3)
    grid = coupling.radial_grid(4, 3.0)
    b = hamiltonian.assemble_H(small, profile, grid, fock.build_basis(grid, 3))
    weak = hamiltonian.weak_coupling_certificate(b)
    triple = ml.build_M(b.H.matrix, b.sampled_prime().matrix, b.A.matrix, 0.3, 0.3, e=0.5)
    u = rng.normal(size=b.dim) + 0j
    u /= np.linalg.norm(u)
    ev = b.eigenvalues
    re_grid = np.linspace(0.27, 0.34, 5)
    gap = min(np.min(np.abs(ev - x)) for x in re_grid)
    eps = [0.1, 0.03, 0.01, 3e-3, 1e-3, 1e-4, 1e-6, 1e-9, 1e-12]
    stab = ml.lap_stability(triple, u, re_grid, 0.02, eps)
    zs = np.concatenate([re_grid + 0.02j, re_grid + 0.01j])
    probe = ml.lap_probe(triple, u, zs, eps)
    bound_ok = np.all(np.abs(probe.traces) <= probe.fitted_constant * probe.weighted_norm * (1 + 1e-12))
    checks = {
        "strict exactness": max(strict) < 1e-12,
        "weak-coupling certificate": weak.passed,
        "eigenvalue-free window": gap > 0.02 and probe.passed["no_near_spectrum"],
        f"constant stability ratio {stab.ratio:.3f}": stab.stable,
        "weighted bound single C": bool(bound_ok) and np.isfinite(probe.fitted_constant),
        "R_eps -> (T-z)^-1": probe.limit_gaps.max() < 1e-8,
    }
    verdict(9, "limiting absorption suite", checks)


def test_criterion_10_weyl(verdict):
    checks = {}
    two = coupling.uniform_grid(2, 2.0)
    cases = [
        ("vacuum", ONE_MODE, np.inf, [0.5]),
        ("beta=1", ONE_MODE, 1.0, [0.5]),
        ("beta=4 complex", ONE_MODE, 4.0, [0.3 + 0.4j]),
        ("two modes beta=2", two, 2.0, [0.3, 0.4j]),
    ]
    for name, modes, beta, f in cases:
        assert np.linalg.norm(f) <= 0.5 + 1e-15
        checks[name] = liouville.weyl_expectation(modes, beta, f, 12).gap < 1e-6
    verdict(10, "Weyl expectations in the KMS state", checks)
