"""Acceptance criteria: quantitative checks at desk scale.

Each criterion is a function returning a CriterionResult; the registry at
the bottom is shared by the test suite and the `lyapvar validate` command.
`quick` mode divides the Monte Carlo budgets by ~16 and widens tolerances
threefold.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import closedform, mellin, montecarlo, sl2core, spectral
from .ensembles import (
    CompoundPoisson,
    GaussianWhiteNoise,
    ParameterLaw,
    an_subgroup_ensemble,
    frisch_lloyd_ensemble,
    ktilde_a_ensemble,
    ktilde_subgroup_ensemble,
)

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all"]


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    details: List[str] = field(default_factory=list)
    runtime: float = 0.0

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return f"[{state}] criterion {self.cid:2d} ({self.name}) in {self.runtime:.1f}s"


class _Checker:
    def __init__(self):
        self.lines = []
        self.ok = True

    def check(self, label, value, target, tolerance, relative=True):
        if relative:
            err = abs(value - target) / abs(target)
            passed = err <= tolerance
            self.lines.append(
                f"{label}: {value:.6g} vs {target:.6g} (rel err {err:.2%}, tol {tolerance:.0%})"
                + ("" if passed else "  <-- FAIL"))
        else:
            err = abs(value - target)
            passed = err <= tolerance
            self.lines.append(
                f"{label}: {value:.6g} vs {target:.6g} (abs err {err:.3g}, tol {tolerance:.3g})"
                + ("" if passed else "  <-- FAIL"))
        self.ok = self.ok and passed
        return passed

    def check_bound(self, label, value, bound, below=True):
        passed = value <= bound if below else value >= bound
        rel = "<=" if below else ">="
        self.lines.append(f"{label}: {value:.6g} {rel} {bound:.6g}"
                          + ("" if passed else "  <-- FAIL"))
        self.ok = self.ok and passed
        return passed


def _gle_extrapolated(ensemble, n: int, replicas_small: int, replicas_big: int,
                      q: float, seed: int):
    """Two-point Richardson in n removes the O(1/n) startup transient."""
    a = montecarlo.gle_direct(ensemble, n, replicas_small, q, seed)
    b = montecarlo.gle_direct(ensemble, 2 * n, replicas_big, q, seed + 1)
    rate = 2.0 * b.rate - a.rate
    se = math.hypot(2.0 * b.se, a.se)
    return rate, se, min(a.ess, b.ess)


# ---------------------------------------------------------------------------

def criterion_ou(quick: bool = False) -> CriterionResult:
    """1. Ornstein-Uhlenbeck calibration of the Monte Carlo machinery."""
    t0 = time.time()
    c = _Checker()
    replicas = 6_000 if quick else 100_000
    tol = 3.0 if quick else 1.0
    est = montecarlo.ou_selftest(kappa=1.0, horizon=100.0, dt=0.005,
                                 replicas=replicas, seed=2024, q=0.5)
    c.check("gamma1", est.gamma1, 0.5, 0.02 * tol)
    c.check("gamma2", est.gamma2, 0.25, 0.05 * tol)
    c.check("Lambda(0.5)", est.gle_rate, 1.0 - math.sqrt(0.5), 0.05 * tol)
    return CriterionResult(1, "OU calibration", c.ok, c.lines, time.time() - t0)


def criterion_structure(quick: bool = False) -> CriterionResult:
    """2. Exact SL(2,R) structure identities."""
    t0 = time.time()
    c = _Checker()
    rng = np.random.default_rng(7)
    subs = [sl2core.Subgroup.K, sl2core.Subgroup.KTILDE, sl2core.Subgroup.A,
            sl2core.Subgroup.N, sl2core.Subgroup.NMINUS]

    worst = 0.0
    for z in rng.uniform(-4, 4, 100):
        for i in subs:
            for j in subs:
                if i is j or abs(z) < 0.1 or abs(abs(z) - 1) < 0.1:
                    continue
                worst = max(worst, abs(sl2core.lie_residual(i, j, float(z))))
    c.check_bound("Lie-algebra Wronskian residual", worst, 1e-12)

    worst = 0.0
    for _ in range(1000):
        p1 = sl2core.IwasawaParams(rng.normal(), rng.normal(0, 0.7), rng.normal())
        p2 = sl2core.IwasawaParams(rng.normal(), rng.normal(0, 0.7), rng.normal())
        m1, m2 = sl2core.compose_iwasawa(p1), sl2core.compose_iwasawa(p2)
        z = float(rng.normal(0, 2))
        lhs = sl2core.cocycle(sl2core.JacobianKind.K, m2 @ m1, z)
        z1 = sl2core.mobius_apply(m1, z)
        rhs = sl2core.cocycle(sl2core.JacobianKind.K, m2, z1) + \
            sl2core.cocycle(sl2core.JacobianKind.K, m1, z)
        worst = max(worst, abs(lhs - rhs))
    c.check_bound("cocycle chain rule", worst, 1e-10)

    worst = 0.0
    for _ in range(300):
        p = sl2core.IwasawaParams(rng.normal(), rng.normal(0, 0.7), rng.normal())
        m = sl2core.compose_iwasawa(p)
        z = float(rng.normal(0, 2))
        jk = sl2core.jacobian(sl2core.JacobianKind.K, m, z)
        worst = max(worst, abs(sl2core.norm_after(m, z) - jk ** -0.5))
    c.check_bound("norm identity ||Mx|| = J_K^(-1/2)", worst, 1e-12)

    worst = 0.0
    for kind in sl2core.JacobianKind:
        for sub in subs:
            for z in rng.uniform(0.15, 4, 100) * rng.choice([-1, 1], 100):
                if abs(abs(z) - 1.0) < 0.05:
                    continue
                worst = max(worst, abs(sl2core.h_fun(kind, sub, float(z))
                                       - sl2core.h_from_density(kind, sub, float(z))))
    c.check_bound("multiplier-table identity", worst, 1e-12)
    return CriterionResult(2, "exact structure", c.ok, c.lines, time.time() - t0)


def criterion_subgroup_gle(quick: bool = False) -> CriterionResult:
    """3. Boost-subgroup and AN-subgroup cumulants and the AN GLE at q=1."""
    t0 = time.time()
    c = _Checker()
    div = 8 if quick else 1

    e = ktilde_subgroup_ensemble(k=1.0, rho=2.0)
    est = montecarlo.product_cumulants(e, n=2000, replicas=8000 // div, seed=31)
    c.check_bound("Ktilde mean |dev|/SE", abs(est.mean_rate - 0.5) / est.mean_se, 3.0)
    c.check_bound("Ktilde var |dev|/SE", abs(est.var_rate - 0.25) / est.var_se, 3.0)

    ean = an_subgroup_ensemble(ParameterLaw.gaussian(-1.0, 0.25),
                               ParameterLaw.gaussian(0.0, 0.25))
    est = montecarlo.product_cumulants(ean, n=2000, replicas=8000 // div, seed=32)
    c.check_bound("AN mean |dev|/SE", abs(est.mean_rate - 1.0) / est.mean_se, 3.0)
    c.check_bound("AN var |dev|/SE", abs(est.var_rate - 0.25) / est.var_se, 3.0)

    theory = closedform.an_gle(ParameterLaw.gaussian(-1.0, 0.25), 1.0)
    rate, se, ess = _gle_extrapolated(ean, n=20, replicas_small=400_000 // div,
                                      replicas_big=3_000_000 // div, q=1.0, seed=33)
    c.check_bound(f"AN GLE(q=1) |dev|/SE (est {rate:.4f} vs {theory}, ess {ess:.0f})",
                  abs(rate - theory) / se, 3.0)
    return CriterionResult(3, "subgroup GLEs", c.ok, c.lines, time.time() - t0)


def criterion_spectral_vs_mc(quick: bool = False) -> CriterionResult:
    """4. Frisch-Lloyd spectral cumulants against direct simulation."""
    t0 = time.time()
    c = _Checker()
    div = 16 if quick else 1
    rho, vbar = 1.0, 0.01
    law = ParameterLaw.exponential(vbar)
    model = CompoundPoisson(rho=rho, weight_law=law)
    budgets = {
        1.0: dict(x=30000.0, r_proc=800, n=30000, r_prod=800),
        4.0: dict(x=40000.0, r_proc=2000, n=40000, r_prod=1000),
        -4.0: dict(x=2000.0, r_proc=800, n=2000, r_prod=800),
    }
    for energy, budget in budgets.items():
        rep = spectral.spectral_report(model, energy)
        sign = +1 if energy > 0 else -1
        k = math.sqrt(abs(energy))
        e = frisch_lloyd_ensemble(k, rho, law, energy_sign=sign)
        proc = montecarlo.process_cumulants(
            e, length=budget["x"] / div, replicas=budget["r_proc"], seed=41)
        c.check_bound(f"E={energy} gamma1 |dev|/SE",
                      abs(proc.mean_rate - rep.gamma1) / proc.mean_se, 3.0)
        c.check_bound(f"E={energy} gamma2 |dev|/SE",
                      abs(proc.var_rate - rep.gamma2) / proc.var_se, 3.0)
        if not quick:
            c.check_bound(f"E={energy} gamma1 SE/value",
                          proc.mean_se / rep.gamma1, 0.05)
            c.check_bound(f"E={energy} gamma2 SE/value",
                          proc.var_se / rep.gamma2, 0.05)
        prod = montecarlo.product_cumulants(
            e, n=int(budget["n"] / div), replicas=budget["r_prod"], seed=42)
        c.check_bound(f"E={energy} per-step var |dev|/SE",
                      abs(prod.var_rate - rep.var_per_step) / prod.var_se, 3.0)
        if energy > 0:
            hist = montecarlo.invariant_density(
                e, burn_in=300, samples=2_000_000 // div, seed=43,
                thresholds=k * np.array([8.0, 16.0, 32.0]))
            c.check(f"E={energy} Rice tail vs IDoS", hist.tail_statistic,
                    rep.idos, 0.05 * (3 if quick else 1))
        else:
            hist = montecarlo.invariant_density(
                e, burn_in=300, samples=500_000 // div, seed=43)
            c.check_bound(f"E={energy} Rice tail (IDoS=0)",
                          hist.tail_statistic, 1e-3)
    return CriterionResult(4, "spectral vs MC (Frisch-Lloyd)", c.ok, c.lines,
                           time.time() - t0)


def criterion_halperin(quick: bool = False) -> CriterionResult:
    """5. White-noise model against its asymptotic formulas."""
    t0 = time.time()
    c = _Checker()
    m = GaussianWhiteNoise(sigma=2.0)
    rep = spectral.spectral_report(m, 50.0)
    c.check("gamma1(E=50)", rep.gamma1, 0.005, 0.10)
    c.check("gamma2(E=50)", rep.gamma2, 0.005, 0.10)
    rep = spectral.spectral_report(m, -50.0)
    c.check("gamma1(E=-50)", rep.gamma1, 7.0661, 0.01)
    c.check("gamma2(E=-50)", rep.gamma2, 0.01, 0.10)
    return CriterionResult(5, "Halperin asymptotics", c.ok, c.lines, time.time() - t0)


def criterion_airy(quick: bool = False) -> CriterionResult:
    """6. Recessive solution against an independent Airy evaluator."""
    from scipy.special import airy as scipy_airy
    t0 = time.time()
    c = _Checker()
    sigma = 2.0
    for energy in (1.0, -2.0):
        sol = spectral.solve_recessive(GaussianWhiteNoise(sigma=sigma), energy)
        svals = np.linspace(0.0, 2.0, 21)
        scale = (2.0 / sigma) ** (2.0 / 3.0)
        args = scale * (-energy - 0.5j * sigma * svals)
        ai, _, bi, _ = scipy_airy(args)
        oracle = ai - 1j * bi
        oracle = oracle / oracle[0]
        got = sol.fhat(svals)
        err = float(np.max(np.abs(got - oracle) / np.abs(oracle)))
        c.check_bound(f"E={energy} Airy relative error", err, 1e-6)
    return CriterionResult(6, "Airy oracle", c.ok, c.lines, time.time() - t0)


def criterion_concentrated(quick: bool = False) -> CriterionResult:
    """7. Concentrated impurities: spectral vs log-regime vs phase formalism."""
    t0 = time.time()
    c = _Checker()
    rho, vbar, k = 1.0, 100.0, 3.0
    model = CompoundPoisson(rho=rho, weight_law=ParameterLaw.exponential(vbar))
    rep = spectral.spectral_report(model, k * k)
    c.check("spectral gamma1 vs 2.235", rep.gamma1, 2.235, 0.10)
    c.check("spectral gamma2 vs 7.463", rep.gamma2, 7.463, 0.10)
    pf1, pf2 = closedform.phase_formalism_estimate(
        rho, ParameterLaw.exponential(vbar), k, +1)
    c.check("phase formalism gamma1 vs spectral", pf1, rep.gamma1, 0.10)
    c.check("phase formalism gamma2 vs spectral", pf2, rep.gamma2, 0.10)
    c.check("phase formalism gamma1 vs 2.235", pf1, 2.235, 0.10)
    c.check("phase formalism gamma2 vs 7.463", pf2, 7.463, 0.10)
    return CriterionResult(7, "concentrated regime", c.ok, c.lines, time.time() - t0)


def criterion_deych(quick: bool = False) -> CriterionResult:
    """8. Deych criterion counterexample inside rho << k << vbar."""
    t0 = time.time()
    c = _Checker()
    model = CompoundPoisson(rho=1.0, weight_law=ParameterLaw.exponential(100.0))
    rep = spectral.spectral_report(model, 196.0)
    ratio, deych = closedform.sps_diagnostics(rep.gamma1, rep.gamma2, rep.idos)
    c.check_bound("gamma2/gamma1", ratio, 2.0, below=False)
    c.check_bound("pi N / gamma1", deych, 10.0, below=False)
    return CriterionResult(8, "Deych counterexample", c.ok, c.lines, time.time() - t0)


def criterion_symmetry(quick: bool = False) -> CriterionResult:
    """9. Moment symmetry at q=-2: holds for KN, fails for AN."""
    t0 = time.time()
    c = _Checker()
    div = 8 if quick else 1

    e = frisch_lloyd_ensemble(1.0, 1.0, ParameterLaw.exponential(0.01), +1)
    rate, se, _ = _gle_extrapolated(e, n=150, replicas_small=20_000 // div,
                                    replicas_big=40_000 // div, q=-2.0, seed=91)
    c.check_bound(f"KN rate at q=-2 ({rate:.2e} +- {se:.1e}) |dev|/SE",
                  abs(rate) / se, 3.0)

    ean = an_subgroup_ensemble(ParameterLaw.gaussian(-1.0, 0.25),
                               ParameterLaw.gaussian(0.0, 0.25))
    theory = 2.0 * (-1.0) + 0.5
    rate, se, ess = _gle_extrapolated(ean, n=8, replicas_small=2_000_000 // div,
                                      replicas_big=12_000_000 // div, q=-2.0, seed=92)
    c.check_bound(f"AN rate at q=-2 (est {rate:.4f} vs {theory}, ess {ess:.0f}) |dev|/SE",
                  abs(rate - theory) / se, 3.0)
    c.check_bound("AN symmetry violation (rate far from 0)", rate, -1.0)
    return CriterionResult(9, "q=-2 symmetry", c.ok, c.lines, time.time() - t0)


def criterion_mellin(quick: bool = False) -> CriterionResult:
    """10. Mellin-route Lyapunov exponent against direct simulation."""
    t0 = time.time()
    c = _Checker()
    div = 8 if quick else 1
    law = ParameterLaw.gaussian(-0.1, 0.05)
    sol = mellin.invariant_mellin(law, rho=1.0, k=1.0, S=3)
    lam = mellin.lyapunov_mellin(sol)
    e = ktilde_a_ensemble(k=1.0, rho=1.0, w_law=law)
    mc = montecarlo.product_cumulants(e, n=4000, replicas=6000 // div, seed=101)
    c.check_bound(f"lambda1 (mellin {lam:.5f} vs MC {mc.mean_rate:.5f}) |dev|/SE",
                  abs(lam - mc.mean_rate) / mc.mean_se, 3.0)
    # boundary-placement independence (analogue of seed independence: the
    # stationary solve must not depend on where the mesh window ends)
    wide = mellin.invariant_mellin(law, rho=1.0, k=1.0, S=3,
                                   u_max=sol.diagnostics["u_max"] + 0.5,
                                   h_tail=sol.diagnostics["h_tail"])
    base = mellin.invariant_mellin(law, rho=1.0, k=1.0, S=3,
                                   u_max=sol.diagnostics["u_max"],
                                   h_tail=sol.diagnostics["h_tail"])
    drift = max(abs(wide[1] - base[1]), abs(wide[-1] - base[-1]))
    c.check_bound("window-placement drift of fcheck(+-1)", drift, 1e-10)
    return CriterionResult(10, "Mellin route", c.ok, c.lines, time.time() - t0)


def criterion_continuum_residual(quick: bool = False) -> CriterionResult:
    """11. Exact AN eigenfunction annihilates the continuum operator."""
    t0 = time.time()
    c = _Checker()
    rng = np.random.default_rng(111)
    worst = 0.0
    for _ in range(100):
        wbar = float(-rng.uniform(0.1, 1.5))
        q = float(rng.uniform(0.0, 1.0))
        z = float(rng.normal(0, 2))
        spec = closedform.ContinuumSpec(
            mu=(0.0, wbar, 0.0),
            cov=((0.0, 0.0, 0.0), (0.0, 0.25, 0.0), (0.0, 0.0, 1.0)))
        a2, a1, a0 = closedform.continuum_coefficients(spec, q, z)
        lam = -q * wbar + q * q / 8.0
        expo = -0.5 + 2.0 * wbar - 0.5 * q
        phi = (1.0 + z * z) ** expo
        ratio = 2.0 * expo * z / (1.0 + z * z)            # phi'/phi
        dratio = 2.0 * expo * (1.0 - z * z) / (1.0 + z * z) ** 2
        dphi = ratio * phi
        d2phi = (dratio + ratio * ratio) * phi
        resid = a2 * d2phi + a1 * dphi + (a0 - lam) * phi
        worst = max(worst, abs(resid) / max(abs(phi), 1e-30))
    c.check_bound("continuum operator residual", worst, 1e-10)
    return CriterionResult(11, "continuum residual", c.ok, c.lines, time.time() - t0)


def criterion_sps(quick: bool = False) -> CriterionResult:
    """12. Single-parameter scaling at high energy for both models."""
    t0 = time.time()
    c = _Checker()
    rep = spectral.spectral_report(GaussianWhiteNoise(sigma=2.0), 100.0)
    c.check_bound("Halperin gamma2/gamma1 low", rep.gamma2 / rep.gamma1, 0.85, below=False)
    c.check_bound("Halperin gamma2/gamma1 high", rep.gamma2 / rep.gamma1, 1.15)
    model = CompoundPoisson(rho=1.0, weight_law=ParameterLaw.exponential(0.01))
    rep = spectral.spectral_report(model, 100.0)
    c.check_bound("Frisch-Lloyd gamma2/gamma1 low", rep.gamma2 / rep.gamma1, 0.85, below=False)
    c.check_bound("Frisch-Lloyd gamma2/gamma1 high", rep.gamma2 / rep.gamma1, 1.15)
    return CriterionResult(12, "high-energy SPS", c.ok, c.lines, time.time() - t0)


CRITERIA = [
    (1, "OU calibration", criterion_ou),
    (2, "exact structure", criterion_structure),
    (3, "subgroup GLEs", criterion_subgroup_gle),
    (4, "spectral vs MC", criterion_spectral_vs_mc),
    (5, "Halperin asymptotics", criterion_halperin),
    (6, "Airy oracle", criterion_airy),
    (7, "concentrated regime", criterion_concentrated),
    (8, "Deych counterexample", criterion_deych),
    (9, "q=-2 symmetry", criterion_symmetry),
    (10, "Mellin route", criterion_mellin),
    (11, "continuum residual", criterion_continuum_residual),
    (12, "high-energy SPS", criterion_sps),
]


def run_criterion(cid: int, quick: bool = False) -> CriterionResult:
    for num, _, fn in CRITERIA:
        if num == cid:
            return fn(quick)
    raise KeyError(f"no criterion {cid}")


def run_all(quick: bool = False, ids: Optional[List[int]] = None) -> List[CriterionResult]:
    results = []
    for num, _, fn in CRITERIA:
        if ids is not None and num not in ids:
            continue
        results.append(fn(quick))
    return results
