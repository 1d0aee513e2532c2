"""Scenario runner.

Stages run in order: modes, fock, states, transfer, demixing,
microsystem, dynamics.  Each produces checks (value, tolerance, pass)
and labeled time series collected in a :class:`ResultManifest`.  Oracle
mode recomputes reduced-formula quantities with full-space traces and
only adds checks and columns; primary results are unchanged.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .decoherence import (
    LindbladModel,
    choi_matrix,
    dephasing_model,
    lindblad_evolve,
    step_map,
    thermal_damping_model,
)
from .demixing import (
    admissible_family,
    build_transfer_term,
    extract_transfer_amplitudes,
    full_cross_residual,
    mixture_decompose,
    random_sector_hermitian,
    state_from_term,
    _Evolver,
)
from .errors import LabError
from .fock import annihilators, build_basis, creators, number_op, one_body
from .kernel import dagger, unitary
from .microsystem import (
    depletion,
    depletion_bound,
    identity_transfer_bound,
    diagonalize_w,
    dressed_observable,
    effective_w,
    full_space_expectation,
    heisenberg_equivalence,
    sigma,
    sigma_spectral,
    transferred_observable,
)
from .modes import BoxSpec, box_eigenmodes, cell_kernel, partition_cells
from .preparation import (
    PreparationChannel,
    PreparationSpec,
    RelevantVariableSet,
    exact_state,
    expanded_state,
    first_order_transfer,
    fit_state_parameters,
    gibbs_state,
    prepared_exponent,
    split_exponent,
)

log = logging.getLogger(__name__)

# name -> (default tolerance, oracle only, description)
CHECKS = {
    "mode_orthonormality": (1e-10, False, "max |<u_h|u_k> - delta_hk| over both regions"),
    "fit_residual": (1e-8, False, "max relevant-variable residual of fitted Gibbs states"),
    "transfer_invariants": (1e-12, False, "lowering defect of D_h and |[C, N]|"),
    "expanded_positivity": (1e-12, False, "negativity depth of the expanded state"),
    "cross_term": (1e-12, False, "max |Tr[O C rho1 (x) rho2]| over the observable family"),
    "transfer_positivity": (1e-10, False, "negativity of transferred identity and N1"),
    "identity_transfer": (1e-12, False, "||A_id - 1|| in excess of depletion plus cap-truncation bound"),
    "heisenberg_equivalence": (1e-10, False, "||U a_psi^dag U^dag - a_psi_t^dag|| over times"),
    "dressed_decomposition": (1e-12, False, "three-term dressed-observable identity on safe states"),
    "lindblad_trace_drift": (1e-9, False, "trace drift of the one-particle trajectory"),
    "lindblad_positivity": (1e-10, False, "negativity depth along the trajectory"),
    "lindblad_choi": (1e-8, False, "negativity of the Choi matrix of the exact step map"),
    "lindblad_purity_monotone": (1e-12, False, "largest purity increase step (unital models)"),
    "mixture_equivalence": (1e-10, True, "max |<O>_state - <O>_mixture| over family and times"),
    "reduced_vs_full": (1e-10, True, "one-particle formula vs full-space trace"),
    "sigma_vs_full": (1e-10, True, "sigma vs full-space branch trace"),
}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def as_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "pass": self.passed}


@dataclass
class Series:
    """Labeled columns of equal length; string columns are allowed."""

    columns: tuple
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.columns:
            self.data.setdefault(c, [])

    def append(self, **row):
        if set(row) != set(self.columns):
            raise KeyError(f"row keys {sorted(row)} != columns {list(self.columns)}")
        for c in self.columns:
            self.data[c].append(row[c])

    def __len__(self):
        return len(self.data[self.columns[0]]) if self.columns else 0

    def column(self, name):
        return list(self.data[name])

    def rows(self):
        return list(zip(*(self.data[c] for c in self.columns)))


@dataclass
class ResultManifest:
    scenario_hash: str
    version: str
    scenario: dict
    run: dict
    dimensions: dict
    info: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self):
        return {
            "scenario_hash": self.scenario_hash,
            "version": self.version,
            "scenario": self.scenario,
            "run": self.run,
            "dimensions": self.dimensions,
            "info": self.info,
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "warnings": list(self.warnings),
            "series": {k: {"columns": list(s.columns), "rows": len(s)} for k, s in self.series.items()},
        }


class StageError(LabError):
    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        super().__init__(f"stage '{stage}' failed: {type(error).__name__}: {error}")


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


class _Run:
    def __init__(self, scenario, oracle, seed):
        self.sc = scenario
        self.oracle = oracle
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.tol = {k: scenario.tolerances.get(k, v[0]) for k, v in CHECKS.items()}
        self.manifest = ResultManifest(
            scenario_hash=scenario.digest,
            version=__version__,
            scenario=scenario.canonical(),
            run={"oracle": oracle, "seed": seed},
            dimensions={},
        )

    def check(self, name, value):
        self.manifest.checks.append(Check(name, float(value), self.tol[name]))

    def info(self, name, value):
        self.manifest.info[name] = float(value)

    # -- stages ---------------------------------------------------------------
    def modes(self):
        sc = self.sc
        self.mode_sets = []
        self.kernels = []
        gap = 0.0
        for cfg in (sc.region1, sc.region2):
            spec = BoxSpec(cfg.length, cfg.mass, sc.hbar, cfg.modes)
            m = box_eigenmodes(spec, cfg.grid_points)
            gap = max(gap, float(np.max(np.abs(m.gram() - np.eye(m.count)))))
            self.mode_sets.append(m)
            cells = partition_cells(cfg.length, sc.observables.cells)
            self.kernels.append([cell_kernel(m, c, "density").matrix for c in cells])
        self.check("mode_orthonormality", gap)

    def fock(self):
        sc = self.sc
        self.basis = build_basis(sc.region1.modes, sc.region2.modes, sc.statistics,
                                 region_caps=(sc.region1.cap, sc.region2.cap))
        self.rb = (self.basis.region_basis(1), self.basis.region_basis(2))
        self.N = tuple(number_op(b, 1) for b in self.rb)
        self.H = tuple(one_body(b, np.diag(m.energies), 1) for b, m in zip(self.rb, self.mode_sets))
        d1, d2 = self.basis.region_dims
        self.manifest.dimensions = {"full": self.basis.dim, "region1": d1, "region2": d2,
                                    "estimate": sc.dimension_estimate}

    def _region_state(self, r, cfg):
        pairs = [("number", self.N[r]), ("energy", self.H[r])]
        if cfg.zeta is not None:
            vs = RelevantVariableSet.from_pairs(pairs)
            return gibbs_state(vs, [cfg.zeta["number"], cfg.zeta["energy"]]), None
        keys = [k for k in ("number", "energy") if k in cfg.targets]
        vs = RelevantVariableSet.from_pairs([p for p in pairs if p[0] in keys])
        fit = fit_state_parameters(vs, [cfg.targets[k] for k in keys], tol=self.tol["fit_residual"] * 0.1)
        for k, z in zip(keys, fit.zeta):
            self.info(f"state{r + 1}_zeta_{k}", z)
        self.info(f"state{r + 1}_fit_iterations", fit.iterations)
        return gibbs_state(vs, fit.zeta), fit.residual

    def states(self):
        sc = self.sc
        if sc.transfer.preparation is not None:
            return self._prepared()
        rho1, f1 = self._region_state(0, sc.state1)
        rho2, f2 = self._region_state(1, sc.state2)
        fits = [f for f in (f1, f2) if f is not None]
        if fits:
            self.check("fit_residual", max(fits))
        self.rho1, self.rho2 = rho1, rho2
        self.amplitudes = np.array(sc.transfer_matrix(), dtype=complex)

    def _prepared(self):
        """Region states and transfer amplitudes from a correlating preparation.

        ``coupling: drive`` treats the cross-region operator ``X`` as a
        relevant variable driven with constant amplitude; ``hamiltonian``
        adds ``strength * X`` to the Hamiltonian that evolves the driven
        region-1 number during the preparation.
        """
        sc = self.sc
        p = sc.transfer.preparation
        b = self.basis
        hop = np.array(p.hopping, dtype=float)
        ad1 = creators(b, 1)
        a2 = annihilators(b, 2)
        X = sum(hop[h, n] * ad1[h] @ a2[n] for h in range(b.M1) for n in range(b.M2))
        X = X + dagger(X)
        ops = [b.embed(self.N[0], 1), b.embed(self.H[0], 1), b.embed(self.N[1], 2),
               b.embed(self.H[1], 2), X]
        vs = RelevantVariableSet(("N1", "H1", "N2", "H2", "hopping"), tuple(ops))
        z1, z2 = sc.state1.zeta, sc.state2.zeta
        zeta = np.array([z1["number"], z1["energy"], z2["number"], z2["energy"], 0.0])
        H = ops[1] + ops[3]
        if p.coupling == "drive":
            channel = PreparationChannel(4, p.strength, np.ones(p.steps + 1))
        else:
            H = H + p.strength * X
            channel = PreparationChannel(0, 1.0, np.ones(p.steps + 1))
        prep = PreparationSpec(
            T=-p.duration, t0=0.0, steps=p.steps, zeta_t0=zeta, zeta_T=np.zeros(5),
            channels=(channel,), hbar=sc.hbar,
        )
        S = prepared_exponent(vs, prep, H)
        split = split_exponent(S, b)
        C, rho1, rho2 = first_order_transfer(split)
        d, resid = extract_transfer_amplitudes(C, b)
        self.info("prepared_cross_norm", np.linalg.norm(split.C12))
        self.info("prepared_nontransfer_norm", resid)
        exact = exact_state(S)
        self.info("prepared_first_order_error", np.linalg.norm(exact - expanded_state(rho1, rho2, C)))
        self.rho1, self.rho2 = rho1, rho2
        self.amplitudes = d

    def transfer(self):
        self.term = build_transfer_term(self.basis, self.amplitudes)
        low, cons = self.term.invariant_residuals()
        self.check("transfer_invariants", max(low, cons))

    def demixing(self):
        sc = self.sc
        b = self.basis
        self.mix = mixture_decompose(self.rho1, self.rho2, self.term)
        self.info("lambda", self.mix.lam)
        self.info("branch_weight", self.mix.branch_weight)
        self.rho_full = state_from_term(self.rho1, self.rho2, self.term)
        floor = float(np.linalg.eigvalsh(self.rho_full)[0])
        self.check("expanded_positivity", max(0.0, -floor))
        self.family = admissible_family(
            b, sc.observables.family_size, self.rng, self.kernels[0], self.kernels[1],
            self.mode_sets[0].energies, self.mode_sets[1].energies,
        )
        cross = max((full_cross_residual(f.full, self.term, self.rho1, self.rho2)
                     for f in self.family), default=0.0)
        self.check("cross_term", cross)

        cols = ["observable", "time", "mixture"]
        if self.oracle:
            cols += ["full", "deviation"]
        series = Series(tuple(cols))
        ev = _Evolver(b.embed(self.H[0], 1), b.embed(self.H[1], 2), sc.hbar)
        worst = 0.0
        for t in sc.evolution.times:
            A = ev(self.mix.uncorrelated, t)
            B = ev(self.mix.branch, t)
            full = ev(self.rho_full, t) if self.oracle else None
            for f in self.family:
                mixed = float(np.real(self.mix.lam * np.trace(f.full @ A)
                                      + (1 - self.mix.lam) * np.trace(f.full @ B)))
                row = {"observable": f.label, "time": t, "mixture": mixed}
                if self.oracle:
                    ref = float(np.real(np.trace(f.full @ full)))
                    row.update(full=ref, deviation=abs(ref - mixed))
                    worst = max(worst, abs(ref - mixed))
                series.append(**row)
        self.manifest.series["expectations"] = series
        if self.oracle:
            self.check("mixture_equivalence", worst)

    def microsystem(self):
        sc = self.sc
        b1 = self.rb[0]
        rho1, rho2, term = self.rho1, self.rho2, self.term
        H1 = self.H[0]
        w = effective_w(term, rho2)
        s = sigma(term, rho1, rho2)
        lam, psis = diagonalize_w(w)
        self.info("sigma", s)
        self.info("sigma_spectral", 1.0 / sigma_spectral(w, rho1, b1, sc.statistics))
        self.info("w_purity", w.purity)
        self.info("w_rank", len(lam))
        deps = [depletion(rho1, psis[:, i], b1) for i in range(len(lam))]
        for i, dep in enumerate(deps):
            if dep > sc.depletion_threshold:
                msg = (f"emitted mode {i + 1} has depletion {dep:.4g} above the threshold "
                       f"{sc.depletion_threshold}; the detector is not empty")
                self.manifest.warnings.append(msg)
                log.warning(msg)
        self.info("depletion_bound", depletion_bound(rho1, b1))
        bound = identity_transfer_bound(rho1, b1)
        self.info("identity_transfer_bound", bound)

        eye = np.eye(b1.dim)
        A_id = transferred_observable(eye, rho1, H1, term, 0.0).matrix
        A_n = transferred_observable(self.N[0], rho1, H1, term, 0.0).matrix
        neg = max(0.0, -min(np.linalg.eigvalsh(0.5 * (X + dagger(X)))[0] for X in (A_id, A_n)))
        self.check("transfer_positivity", neg)
        self.check("identity_transfer", max(0.0, np.linalg.norm(A_id - np.eye(len(A_id)), 2) - bound))

        psi0 = psis[:, 0]
        self.check("heisenberg_equivalence",
                   max(heisenberg_equivalence(psi0, b1, H1, t, sc.hbar) for t in sc.evolution.times))
        probes = [self.N[0], random_sector_hermitian(b1, self.rng)]
        self.check("dressed_decomposition",
                   max(dressed_observable(A, psi0, b1).deviation() for A in probes))

        members = [f for f in self.family if f.region1_only]
        cols = ["observable", "time", "reduced"] + (["full", "deviation"] if self.oracle else [])
        series = Series(tuple(cols))
        worst = 0.0
        mats = {}
        for t in sc.evolution.times:
            for f in members:
                At = transferred_observable(f.local1, rho1, H1, term, t, sc.hbar).matrix
                value = s * float(np.real(np.trace(At @ w.w)))
                row = {"observable": f.label, "time": t, "reduced": value}
                if self.oracle:
                    ref = full_space_expectation(f.local1, term, rho1, rho2, H1, t, sc.hbar)
                    row.update(full=ref, deviation=abs(ref - value))
                    worst = max(worst, abs(ref - value))
                series.append(**row)
        self.manifest.series["reduced"] = series
        if self.oracle:
            self.check("reduced_vs_full", worst)
            b = self.basis
            rho = np.kron(rho1, rho2)
            num = sum(float(np.real(np.trace(dagger(D) @ D @ rho))) for D in term.lowering)
            full_sigma = num / float(np.real(np.trace(term.operator @ rho @ dagger(term.operator))))
            self.info("sigma_full", full_sigma)
            self.check("sigma_vs_full", abs(full_sigma - s))

        ms = Series(("time", "sigma", "purity", "coherence", "depletion"))
        W = self.mode_sets[0].energies
        for t in sc.evolution.times:
            U = np.diag(np.exp(-1j * W * t / sc.hbar))
            wt = U @ w.w @ dagger(U)
            Uf = unitary(H1, t, sc.hbar)
            rho1_t = Uf @ rho1 @ dagger(Uf)
            dep = sum(l * depletion(rho1_t, U @ psis[:, i], b1) for i, l in enumerate(lam))
            ms.append(time=t, sigma=s, purity=float(np.real(np.trace(wt @ wt))),
                      coherence=float(np.sum(np.abs(wt)) - np.sum(np.abs(np.diag(wt)))),
                      depletion=dep)
        self.manifest.series["microsystem"] = ms
        self.w = w

    def dynamics(self):
        cfg = self.sc.lindblad
        if cfg.model == "none":
            return
        W = self.mode_sets[0].energies
        hbar = self.sc.hbar
        if cfg.model == "dephasing":
            model = dephasing_model(W, cfg.gamma, hbar)
        else:
            free = LindbladModel(np.diag(W).astype(complex), hbar=hbar)
            model = free + thermal_damping_model(W, cfg.gamma, cfg.beta, hbar)
        traj = lindblad_evolve(self.w, model, cfg.dt, cfg.steps, cfg.method)
        purity = traj.column("purity")
        self.check("lindblad_trace_drift", traj.trace_drift())
        self.check("lindblad_positivity", max(0.0, -float(traj.column("min_eig").min())))
        choi = choi_matrix(step_map(model, cfg.dt), model.dim)
        self.check("lindblad_choi", max(0.0, -float(np.linalg.eigvalsh(0.5 * (choi + dagger(choi)))[0])))
        if model.is_unital():
            rise = float(np.max(np.diff(purity))) if len(purity) > 1 else 0.0
            self.check("lindblad_purity_monotone", max(0.0, rise))
        s = Series(("time", "trace", "purity", "coherence", "min_eig"))
        for t, tr, p, c, m in zip(traj.times, traj.column("trace"), purity,
                                  traj.column("coherence"), traj.column("min_eig")):
            s.append(time=float(t), trace=float(tr), purity=float(p), coherence=float(c), min_eig=float(m))
        self.manifest.series["lindblad"] = s


STAGES = ("modes", "fock", "states", "transfer", "demixing", "microsystem", "dynamics")


def run(scenario, oracle=None, seed=None):
    """Execute every stage of a scenario and collect the manifest.

    ``oracle`` and ``seed`` override the scenario's own settings.
    """
    oracle = scenario.oracle if oracle is None else bool(oracle)
    seed = scenario.seed if seed is None else int(seed)
    r = _Run(scenario, oracle, seed)
    for name in STAGES:
        with _stage(name):
            getattr(r, name)()
    return r.manifest
