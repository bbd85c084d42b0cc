"""Command-line runner: JSON config in, record.json plus CSV tables out."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, coupling, fock, hamiltonian, liouville
from . import mourre_lap as ml
from .coupling import CouplingProfile, SmallSystem
from .fock import DimensionCapError, ModeSet
from .hamiltonian import ConjugateSpec

OUTPUT_ENV = "PFLAB_OUTPUT_DIR"
TASKS = ["spectrum", "mourre", "lap", "kms", "evolve", "vanhove", "glue-check", "check-all"]
EXACT_TOL = 1e-12

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _number_list, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pflab run configuration",
    "type": "object",
    "required": ["small", "modes", "coupling", "truncation", "task"],
    "additionalProperties": False,
    "properties": {
        "small": {
            "type": "object",
            "required": ["energies"],
            "additionalProperties": False,
            "properties": {"energies": {**_number_list, "description": "eigenvalues of K; ν is their count"}},
        },
        "modes": {
            "type": "object",
            "required": ["grid"],
            "additionalProperties": False,
            "properties": {
                "grid": {"enum": ["radial", "uniform", "explicit"]},
                "count": {"type": "integer", "minimum": 1, "description": "nodes per panel (radial) or node count (uniform)"},
                "omega_max": {"type": "number", "exclusiveMinimum": 0},
                "ir_levels": {"type": "integer", "minimum": 0, "description": "dyadic infrared refinement levels"},
                "omega": {**_number_list, "description": "explicit frequencies"},
                "weight": {**_number_list, "description": "explicit quadrature weights"},
            },
        },
        "coupling": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["radial", "explicit", "none"]},
                "p": {"type": "number", "description": "infrared exponent"},
                "uv_scale": {"type": "number", "exclusiveMinimum": 0, "description": "ultraviolet cutoff Λ"},
                "uv_shape": {"enum": ["gaussian", "exponential"]},
                "amplitude": {"type": "number", "description": "coupling strength λ"},
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "G0": {**_matrix, "description": "real part of the ν×ν coupling matrix"},
                "G0_imag": {**_matrix, "description": "imaginary part of the coupling matrix"},
                "matrices": {"type": "array", "items": _matrix, "minItems": 1, "description": "explicit per-mode real matrices"},
            },
        },
        "truncation": {
            "type": "object",
            "required": ["n_total_max"],
            "additionalProperties": False,
            "properties": {
                "n_total_max": {"type": "integer", "minimum": 0},
                "per_mode_cap": {"type": "integer", "minimum": 0},
                "dimension_cap": {"type": "integer", "minimum": 1},
            },
        },
        "task": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": TASKS},
                "E": {"type": "number", "description": "window centre"},
                "kappa": {"type": "number", "exclusiveMinimum": 0, "description": "window half width"},
                "e": {"type": "number", "exclusiveMinimum": 0, "description": "Mourre constant for M"},
                "epsilon": {**_number_list, "description": "regularization ladder"},
                "eta_min": {"type": "number", "exclusiveMinimum": 0},
                "re_grid": {**_number_list, "description": "real parts of the z grid"},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "betas": {**_number_list, "description": "inverse temperature ladder"},
                "times": {**_number_list, "description": "time grid"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}, "minItems": 1},
            },
        },
    },
}

OUTPUT_MANIFEST = {
    "record.json": {
        "config_hash": "sha256 of the canonical config JSON",
        "version": "package version",
        "task": "task kind",
        "checks": "list of {name, value, passed, asserted}; asserted failures set the exit code",
        "report": "task-specific scalars",
        "wall_time": "seconds spent in the task (the only nondeterministic field)",
        "passed": "true iff every asserted check passed",
    },
    "spectrum.csv": {"index": "eigenvalue rank", "eigenvalue": "eigenvalue of H"},
    "certificates.csv": {"name": "certificate", "min_eigenvalue": "λ_min witnessed", "threshold": "required lower bound", "passed": "bound holds"},
    "lap.csv": {
        "epsilon": "regularization ε",
        "re_z": "Re z",
        "im_z": "Im z",
        "R_norm": "‖R_ε(z)‖",
        "M_half_R_norm": "‖M^{1/2}R_ε(z)‖",
        "abs_F": "|⟨u, R_ε(z)u⟩|",
    },
    "kms.csv": {"index": "doubled-space index", "omega_re": "Re Ω", "omega_im": "Im Ω"},
    "evolve.csv": {"time": "t", "trace_re": "Re ⟨ψ, e^{-it(H-Σ)}ψ⟩", "trace_im": "Im of the same", "cesaro_re": "Re running mean", "cesaro_im": "Im running mean"},
    "vanhove.csv": {"quantity": "name", "value": "number"},
    "checks.csv": {"name": "invariant", "value": "measured defect", "passed": "within tolerance", "asserted": "affects exit code"},
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class Check:
    name: str
    value: float | str
    passed: bool
    asserted: bool = True

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "passed": self.passed, "asserted": self.asserted}


@dataclass
class TaskResult:
    checks: list[Check] = field(default_factory=list)
    report: dict = field(default_factory=dict)
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


# configuration


def load_config(source) -> dict:
    """Parse and validate a config given as a path or a mapping."""
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    else:
        data = copy.deepcopy(source)
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match the schema: {exc.message}") from exc
    _semantic_checks(data)
    return data


def _semantic_checks(cfg: dict):
    modes = cfg["modes"]
    if modes["grid"] == "explicit":
        if "omega" not in modes or "weight" not in modes:
            raise ConfigError("explicit grids need omega and weight")
        if len(modes["omega"]) != len(modes["weight"]):
            raise ConfigError("omega and weight must have equal length")
    elif "count" not in modes or "omega_max" not in modes:
        raise ConfigError("radial and uniform grids need count and omega_max")
    nu = len(cfg["small"]["energies"])
    cp = cfg["coupling"]
    for key in ("G0", "G0_imag"):
        if key in cp and np.shape(cp[key]) != (nu, nu):
            raise ConfigError(f"{key} must be {nu}x{nu}")
    if cp["kind"] == "explicit" and "matrices" not in cp:
        raise ConfigError("explicit coupling needs matrices")
    task = cfg["task"]
    kind = task["kind"]
    if kind in ("mourre", "lap") and ("E" not in task or "kappa" not in task):
        raise ConfigError(f"task {kind} needs E and kappa")
    if kind == "kms" and "beta" not in task:
        raise ConfigError("task kms needs beta")
    if kind == "evolve" and "times" not in task:
        raise ConfigError("task evolve needs times")
    if kind == "vanhove" and nu != 1:
        raise ConfigError("task vanhove needs a single-level small system")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True)
class Instance:
    small: SmallSystem
    profile: CouplingProfile
    modes: ModeSet
    n_total_max: int
    per_mode_cap: int | None
    dimension_cap: int

    def check_dimension(self, doubled: bool = False):
        count = self.modes.count * (2 if doubled else 1)
        cap = self.n_total_max if (doubled or self.per_mode_cap is None) else self.per_mode_cap
        dim = fock._count_states(count, self.n_total_max, cap) * self.small.nu ** (2 if doubled else 1)
        if dim > self.dimension_cap:
            raise DimensionCapError(f"dimension {dim} exceeds cap {self.dimension_cap}")
        return dim

    def bundle(self) -> hamiltonian.HamiltonianBundle:
        self.check_dimension()
        basis = fock.build_basis(self.modes, self.n_total_max, self.per_mode_cap, max_dim=self.dimension_cap)
        return hamiltonian.assemble_H(self.small, self.profile, self.modes, basis)

    def doubled(self, beta) -> liouville.DoubledSystem:
        self.check_dimension(doubled=True)
        basis = liouville.doubled_basis(self.modes, self.n_total_max, max_dim=self.dimension_cap)
        return liouville.assemble_liouvillean(self.small, self.profile, self.modes, basis, beta)


def build_instance(cfg: dict) -> Instance:
    small = SmallSystem.from_energies(cfg["small"]["energies"])
    nu = small.nu
    m = cfg["modes"]
    try:
        if m["grid"] == "radial":
            modes = coupling.radial_grid(m["count"], m["omega_max"], ir_levels=m.get("ir_levels", 0))
        elif m["grid"] == "uniform":
            modes = coupling.uniform_grid(m["count"], m["omega_max"])
        else:
            modes = ModeSet.from_arrays(m["omega"], m["weight"])
        cp = cfg["coupling"]
        mu = cp.get("mu", 0.1)
        if cp["kind"] == "explicit":
            mats = np.asarray(cp["matrices"], dtype=complex)
            profile = CouplingProfile.explicit(mats, mu=mu)
            if profile.nu != nu:
                raise ConfigError("explicit matrices disagree with ν")
            coupling.sample_coupling(profile, modes)
        else:
            g0 = np.asarray(cp.get("G0", np.eye(nu)), dtype=complex)
            if "G0_imag" in cp:
                g0 = g0 + 1j * np.asarray(cp["G0_imag"])
            amplitude = 0.0 if cp["kind"] == "none" else cp.get("amplitude", 1.0)
            profile = CouplingProfile(
                nu=nu,
                G0=g0,
                amplitude=amplitude,
                p=cp.get("p", 0.5),
                uv_scale=cp.get("uv_scale", 1.0),
                uv_shape=cp.get("uv_shape", "gaussian"),
                mu=mu,
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    t = cfg["truncation"]
    return Instance(
        small,
        profile,
        modes,
        t["n_total_max"],
        t.get("per_mode_cap"),
        t.get("dimension_cap", 4000),
    )


# tasks


def _complex_cols(values) -> tuple[list[float], list[float]]:
    arr = np.asarray(values, dtype=complex)
    return arr.real.tolist(), arr.imag.tolist()


def task_spectrum(inst: Instance, task: dict) -> TaskResult:
    b = inst.bundle()
    vals = b.eigenvalues
    out = TaskResult()
    out.checks.append(Check("hamiltonian_hermitian", 0.0 if b.H.hermitian else 1.0, b.H.hermitian))
    out.report = {"dimension": b.dim, "Sigma": b.Sigma, "aG_norm": b.aG_norm}
    out.tables["spectrum"] = (["index", "eigenvalue"], [[i, float(v)] for i, v in enumerate(vals)])
    return out


def task_mourre(inst: Instance, task: dict) -> TaskResult:
    b = inst.bundle()
    out = TaskResult()
    weak = hamiltonian.weak_coupling_certificate(b)
    applicable = bool(weak.reported["applicable"])
    out.checks.append(
        Check("weak_coupling_certificate", weak.min_eigenvalue if applicable else "not applicable",
              weak.passed or not applicable, asserted=applicable)
    )
    window = hamiltonian.mourre_window_certificate(b, b.spec, task["E"], task["kappa"], exclude="vacuum")
    out.checks.append(Check("mourre_window_certificate", window.min_eigenvalue, window.passed, asserted=False))
    out.report = {"weak": weak.to_dict(), "window": window.to_dict()}
    out.tables["certificates"] = (
        ["name", "min_eigenvalue", "threshold", "passed"],
        [[c.name, c.min_eigenvalue, c.threshold, c.passed] for c in (weak, window)],
    )
    return out


def _default_re_grid(eigvals, lo, hi, points=5):
    """Points of (lo, hi) inside the widest eigenvalue-free gap."""
    cuts = np.concatenate([[lo], eigvals[(eigvals > lo) & (eigvals < hi)], [hi]])
    k = int(np.argmax(np.diff(cuts)))
    a, b = cuts[k], cuts[k + 1]
    return np.linspace(a, b, points + 2)[1:-1]


def task_lap(inst: Instance, task: dict) -> TaskResult:
    b = inst.bundle()
    out = TaskResult()
    E, kappa = task["E"], task["kappa"]
    e = task.get("e", 0.5)
    try:
        triple = ml.build_M(b.H.matrix, b.sampled_prime().matrix, b.A.matrix, E, kappa, e=e)
    except ValueError as exc:
        out.checks.append(Check("mourre_operator_M", str(exc), False))
        return out
    out.checks.append(Check("mourre_operator_M", triple.min_M - e, True))
    eps = np.asarray(task.get("epsilon", [0.1, 0.01, 1e-3, 1e-4, 1e-6, 1e-9, 1e-12]))
    eta = task.get("eta_min", 0.02)
    re_grid = np.asarray(task["re_grid"]) if "re_grid" in task else _default_re_grid(
        b.eigenvalues, E - kappa / 2, E + kappa / 2
    )
    rng = np.random.default_rng(0)
    u = rng.normal(size=b.dim) + 0j
    u /= np.linalg.norm(u)
    probe = ml.lap_probe(triple, u, re_grid + 1j * eta, eps)
    stab = ml.lap_stability(triple, u, re_grid, eta, eps)
    out.checks += [
        Check("regularized_resolvent_limit", float(probe.limit_gaps.max()), bool(probe.limit_gaps.max() < 1e-8)),
        Check("lap_constant_stability", stab.ratio, stab.stable, asserted=probe.passed["no_near_spectrum"]),
        Check("eigenvalue_free_grid", int(probe.near_spectrum.sum()), probe.passed["no_near_spectrum"], asserted=False),
    ]
    out.report = {
        "C_M": triple.C_M,
        "e": e,
        "eta": triple.eta,
        "fitted_constant": probe.fitted_constant,
        "lemma_inv_constant": probe.lemma_inv_constant,
        "lemma4_constant": probe.lemma4_constant,
        "stability_ratio": stab.ratio,
        "m4_residual": ml.m4_residual(triple.T, triple.A, [1j, 1 + 1j, -1j]),
    }
    cols = ["epsilon", "re_z", "im_z", "R_norm", "M_half_R_norm", "abs_F"]
    out.tables["lap"] = (cols, [[r[c] for c in cols] for r in probe.rows()])
    return out


def task_kms(inst: Instance, task: dict) -> TaskResult:
    system = inst.doubled(task["beta"])
    kms = liouville.kms_vector(system)
    out = TaskResult()
    out.checks.append(Check("jlj_antisymmetry", system.jlj_defect, system.jlj_defect < EXACT_TOL))
    out.checks.append(Check("kms_residual", kms.residual, True, asserted=False))
    out.report = {
        "residual": kms.residual,
        "overlap_re": kms.overlap.real,
        "overlap_im": kms.overlap.imag,
        "convention": kms.convention,
        "dimension": system.dim,
    }
    re, im = _complex_cols(kms.vector)
    out.tables["kms"] = (["index", "omega_re", "omega_im"], [[i, a, c] for i, (a, c) in enumerate(zip(re, im))])
    return out


def task_evolve(inst: Instance, task: dict) -> TaskResult:
    b = inst.bundle()
    psi = np.zeros(b.dim, dtype=complex)
    psi[(b.nu - 1) * b.basis.dim + b.basis.vacuum_index] = 1.0
    rep = hamiltonian.evolve_and_approach(b, psi, psi, np.asarray(task["times"], dtype=float))
    out = TaskResult()
    out.report = {"limit_mean_re": rep.limit_mean.real, "limit_mean_im": rep.limit_mean.imag,
                  "limit_mean_square": rep.limit_mean_square}
    out.checks.append(Check("initial_trace_normalized", abs(rep.trace[0] - 1) if rep.times[0] == 0 else 0.0,
                            rep.times[0] != 0 or abs(rep.trace[0] - 1) < 1e-12))
    tr_re, tr_im = _complex_cols(rep.trace)
    ce_re, ce_im = _complex_cols(rep.cesaro)
    out.tables["evolve"] = (
        ["time", "trace_re", "trace_im", "cesaro_re", "cesaro_im"],
        [list(row) for row in zip(rep.times.tolist(), tr_re, tr_im, ce_re, ce_im)],
    )
    return out


def task_vanhove(inst: Instance, task: dict) -> TaskResult:
    inst.check_dimension(doubled=True)
    beta = task.get("beta", 1.0)
    rep = liouville.vanhove_oracle(inst.profile, inst.modes, beta, inst.n_total_max)
    out = TaskResult()
    gap = abs(rep.truncated_sigma - rep.energy_shift)
    out.checks.append(Check("sigma_vs_closed_form", gap, gap < 1e-6, asserted=False))
    out.report = {
        "Sigma": rep.truncated_sigma,
        "energy_shift": rep.energy_shift,
        "dressing_defect": rep.dressing_defect,
        "coherent_number": rep.coherent_number,
    }
    out.tables["vanhove"] = (["quantity", "value"], [[k, v] for k, v in out.report.items()])
    return out


def task_glue_check(inst: Instance, task: dict) -> TaskResult:
    beta = task.get("beta", 1.0)
    glued = liouville.glue(inst.doubled(beta))
    out = TaskResult()
    out.checks += [
        Check("gluing_conjugation", glued.conjugation_defect, glued.conjugation_defect < EXACT_TOL),
        Check("gluing_number", glued.number_defect, glued.number_defect < EXACT_TOL),
        Check("gluing_unitarity", glued.unitarity_defect, glued.unitarity_defect < EXACT_TOL),
    ]
    comm = liouville.liouvillean_commutator(glued, ConjugateSpec(mu=inst.profile.mu))
    out.checks.append(Check("glued_commutator_identity", comm.discrepancy, comm.discrepancy < EXACT_TOL * comm.scale))
    out.report = {"dimension": glued.dim}
    return out


# aggregated invariant suite

INSTANCES = {
    "small": {
        "small": {"energies": [0.0, 1.0]},
        "modes": {"grid": "radial", "count": 2, "omega_max": 3.0},
        "coupling": {"kind": "radial", "p": 0.3, "amplitude": 0.3, "G0": [[0.0, 1.0], [1.0, 0.5]]},
        "truncation": {"n_total_max": 3},
        "task": {"kind": "check-all"},
    },
    "default": {
        "small": {"energies": [0.0, 0.7, 1.5]},
        "modes": {"grid": "radial", "count": 2, "omega_max": 3.0, "ir_levels": 1},
        "coupling": {"kind": "radial", "p": 0.3, "amplitude": 0.2, "G0": [[0.0, 1.0, 0.2], [1.0, 0.3, 0.5], [0.2, 0.5, -0.4]]},
        "truncation": {"n_total_max": 3},
        "task": {"kind": "check-all"},
    },
}


def task_check_all(inst: Instance, task: dict, fault: str | None = None) -> TaskResult:
    out = TaskResult()
    checks = out.checks
    b = inst.bundle()
    rng = np.random.default_rng(0)

    # CCR on the field space below the cutoff
    basis = b.basis
    f = rng.normal(size=basis.mode_count) + 1j * rng.normal(size=basis.mode_count)
    g = rng.normal(size=basis.mode_count) + 1j * rng.normal(size=basis.mode_count)
    a, adag = fock.annihilation(basis, f), fock.creation(basis, g)
    comm = (a @ adag - adag @ a).toarray()
    keep = basis.below_cutoff(1)
    ccr = float(np.abs(comm[np.ix_(keep, keep)] - np.vdot(f, g) * np.eye(keep.size)).max())
    checks.append(Check("ccr", ccr, ccr < EXACT_TOL * (1 + np.abs(f).sum() * np.abs(g).sum())))

    rep = hamiltonian.commutator_observable(b)
    checks.append(Check("commutator_identity", rep.discrepancy, rep.discrepancy < EXACT_TOL * rep.scale))
    checks.append(Check("number_commutator_identity", rep.number_commutator_discrepancy,
                        rep.number_commutator_discrepancy < EXACT_TOL * rep.scale))

    # the formula commutator doubles as the virial operator; the fault flips its field sign
    prime = b.formula_prime(+1.0 if fault == "virial" else -1.0)
    vir = hamiltonian.virial_check(b, prime)
    checks.append(Check("virial", vir.relative, vir.relative < 1e-10))

    beta = task.get("beta", 1.0)
    system = inst.doubled(beta)
    checks.append(Check("jlj_antisymmetry", system.jlj_defect, system.jlj_defect < EXACT_TOL))
    glued = liouville.glue(system)
    glue_defect = max(glued.conjugation_defect, glued.unitarity_defect, glued.number_defect)
    checks.append(Check("gluing_unitarity", glue_defect, glue_defect < EXACT_TOL))

    prof = inst.profile
    hermitian_g0 = prof.is_scalar and np.allclose(prof.G0, prof.G0.conj().T, atol=0)
    if hermitian_g0:
        glued_c = coupling.glued_coupling(prof, inst.modes, beta).coupling
        alt = coupling.glued_coupling_alternative(prof, inst.modes, beta)
        rdef = float(np.abs(glued_c - alt).max())
        checks.append(Check("representation_identity", rdef, rdef < EXACT_TOL))
    else:
        checks.append(Check("representation_identity", "not applicable", True, asserted=False))

    weak = hamiltonian.weak_coupling_certificate(b)
    if weak.reported["applicable"]:
        checks.append(Check("weak_coupling_certificate", weak.min_eigenvalue, weak.passed))
    else:
        checks.append(Check("weak_coupling_certificate", "not applicable", True, asserted=False))

    a_dense = b.A.toarray()
    u = rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)
    u /= np.linalg.norm(u)
    reg = ml.regularizer(a_dense, 1e6, u)
    bound = 1e-5 * max(np.linalg.norm(a_dense @ a_dense @ u), 1e-300)
    checks.append(Check("regularizer", reg.generator_gap, reg.generator_gap < bound))

    ev = b.eigenvalues
    strict = max(ml.strict_resolvent_defect(b.H.toarray(), 1.0, eps, ev[k] + 1j * im)
                 for eps, im, k in [(0.1, 0.05, 0), (1e-3, 0.2, len(ev) // 2)])
    checks.append(Check("strict_lap", strict, strict < 1e-12))
    out.report = {"dimension": b.dim, "doubled_dimension": system.dim}
    return out


TASK_RUNNERS = {
    "spectrum": task_spectrum,
    "mourre": task_mourre,
    "lap": task_lap,
    "kms": task_kms,
    "evolve": task_evolve,
    "vanhove": task_vanhove,
    "glue-check": task_glue_check,
    "check-all": task_check_all,
}


# persistence


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    return x


def output_directory(cfg: dict) -> Path:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.get("output", {}).get("directory", "pflab-output"))


def execute(cfg: dict, fault: str | None = None) -> tuple[dict, TaskResult]:
    """Run the configured task; returns the record and the raw task result (no disk writes)."""
    inst = build_instance(cfg)
    kind = cfg["task"]["kind"]
    start = time.perf_counter()
    if kind == "check-all":
        result = task_check_all(inst, cfg["task"], fault=fault)
    else:
        result = TASK_RUNNERS[kind](inst, cfg["task"])
    wall = time.perf_counter() - start
    passed = all(c.passed for c in result.checks if c.asserted)
    record = {
        "config_hash": config_hash(cfg),
        "version": __version__,
        "task": kind,
        "checks": [c.to_dict() for c in result.checks],
        "report": result.report,
        "wall_time": wall,
        "passed": passed,
    }
    return _jsonable(record), result


def persist(record: dict, result: TaskResult, directory: Path, formats=("json", "csv")):
    directory = Path(directory)
    if "csv" in formats:
        for name, (header, rows) in sorted(result.tables.items()):
            _atomic_write(directory / f"{name}.csv", _csv_text(header, rows))
        rows = [[c.name, c.value, c.passed, c.asserted] for c in result.checks]
        _atomic_write(directory / "checks.csv", _csv_text(["name", "value", "passed", "asserted"], rows))
    _atomic_write(directory / "record.json", json.dumps(record, indent=2, sort_keys=True) + "\n")


def _print_table(checks: list[dict], stream):
    width = max((len(c["name"]) for c in checks), default=4)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        if c["value"] == "not applicable":
            status = "N/A "
        tag = "" if c["asserted"] else " (reported)"
        print(f"{c['name']:<{width}}  {status}  {c['value']}{tag}", file=stream)


def run(source, fault: str | None = None, stream=sys.stdout) -> int:
    """Validate, execute and persist; returns the process exit code."""
    try:
        cfg = load_config(source)
        record, result = execute(cfg, fault=fault)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DimensionCapError as exc:
        print(f"dimension cap: {exc}", file=sys.stderr)
        return 3
    formats = cfg.get("output", {}).get("formats", ["json", "csv"])
    persist(record, result, output_directory(cfg), formats)
    _print_table(record["checks"], stream)
    if not record["passed"]:
        failed = [c["name"] for c in record["checks"] if c["asserted"] and not c["passed"]]
        print(f"invariant failure: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pflab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the task described by a JSON config")
    p_run.add_argument("config")
    p_check = sub.add_parser("check-all", help="run the invariant suite on a built-in instance")
    p_check.add_argument("--instance", choices=sorted(INSTANCES), default="default")
    p_check.add_argument("--inject-fault", choices=["virial"], help=argparse.SUPPRESS)
    p_schema = sub.add_parser("schema", help="print the config schema and output manifest")
    p_schema.add_argument("--outputs", action="store_true", help="print the output manifest instead")
    sub.add_parser("version", help="print the package version")
    args = parser.parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    if args.command == "schema":
        print(json.dumps(OUTPUT_MANIFEST if args.outputs else SCHEMA, indent=2, ensure_ascii=False))
        return 0
    if args.command == "check-all":
        return run(INSTANCES[args.instance], fault=args.inject_fault)
    return run(args.config)


if __name__ == "__main__":
    sys.exit(main())
