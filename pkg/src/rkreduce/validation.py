"""Numbered acceptance checks shared by `rkreduce validate` and the test suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import distributions as D
from .applications import MaskedVector, denoise_transform, dp_settings, dp_transform_batch
from .applications import moe_to_phase_retrieval, synthetic_moe
from .diagnostics import (
    check_pq_bound,
    check_tail_bound,
    exp_tail_bound,
    laplace_second_moment_bound,
    laplace_tail_bound,
    plugin_vs_rk,
    tv_histogram,
    tv_quadrature,
)
from .reductions import (
    MeanFunction,
    ReductionPlan,
    plan_exp_to_gaussian,
    plan_exp_to_laplace,
    plan_exp_to_logistic,
    plan_laplace_to_gaussian,
    plan_uniform_to_gaussian,
    run_reduction,
)
from .rejection import constant, echo_input, max_ratio, rk_output_law
from .rng import DOMAIN_SOURCE, CounterRNG
from .signed_kernels import kernel_p, kernel_q

THETA_FIG1 = (-5.0, -2.5, 0.0, 2.5, 5.0)
THETA_FIG2 = (-0.5, -0.25, 0.0, 0.25, 0.5)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.name}"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "pass": self.passed,
                "seconds": self.seconds, "details": self.details}


# --- presets ----------------------------------------------------------------------


def fig1_plan() -> ReductionPlan:
    return plan_laplace_to_gaussian(1.0, sigma=5.0, N=20, M=2.0, y0=constant(0.0))


def fig2_plan() -> ReductionPlan:
    return plan_uniform_to_gaussian(MeanFunction("abs", 10.0), sigma_override=10.0, N=3000, M=30.0,
                                    y0=constant(0.0))


PRESETS: dict[str, dict] = {
    "fig1": {"plan": fig1_plan, "thetas": THETA_FIG1, "K": 500_000, "K_quick": 50_000},
    "fig2": {"plan": fig2_plan, "thetas": THETA_FIG2, "K": 1_000_000, "K_quick": 50_000},
}


def source_draws(plan: ReductionPlan, theta: float, K: int, rng: CounterRNG) -> np.ndarray:
    return plan.source(theta).sample(rng, np.arange(K), DOMAIN_SOURCE)


def simulate_theta(plan: ReductionPlan, theta: float, K: int, seed: int, j: int, threads: int = 1):
    """Source draws and RK outputs for one theta; child streams are keyed by j."""
    rng = CounterRNG(seed).spawn(j)
    xs = source_draws(plan, theta, K, rng)
    ys, batch = run_reduction(plan, xs, rng, threads=threads)
    return xs, ys, batch


# --- criteria ---------------------------------------------------------------------


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        ok, details = fn()
    except Exception as exc:  # a raised error is a failed check, reported with its message
        ok, details = False, {"error": f"{type(exc).__name__}: {exc}"}
    return CriterionResult(number, name, bool(ok), details, time.perf_counter() - t0)


def law_cells(plan: ReductionPlan, x: float, ncell: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Cut points near the law's ncell-quantiles and the exact cell probabilities.

    Cuts come from a trapezoid CDF of S+ on a fine grid; only the cell masses
    at those cuts need to be exact.
    """
    p = kernel_p(plan.kernel, x)
    lo, hi = plan.kernel.window(x)
    y = np.linspace(lo, hi, 200_001)
    with np.errstate(under="ignore"):
        dens = np.clip(plan.kernel.eval(y, x), 0.0, None)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(y))])
    cuts = np.interp(np.arange(1, ncell) / ncell, cum / cum[-1], y)
    F = lambda c: rk_output_law(x, plan.kernel, plan.base, plan.cfg, (-math.inf, c), p)
    edges = np.concatenate([[-math.inf], cuts, [math.inf]])
    cdf = np.array([0.0] + [F(c) for c in cuts] + [1.0])
    return edges, np.diff(cdf)


def criterion_1(quick: bool = False, seed: int = 1) -> CriterionResult:
    K = 10_000 if quick else 1_000_000

    def run():
        plan = plan_laplace_to_gaussian(1.0, sigma=5.0, N=20, M=2.0, y0=echo_input())
        rng = CounterRNG(seed)
        out = {}
        ok = True
        for j, x in enumerate((-2.0, 0.0, 3.0)):
            edges, probs = law_cells(plan, x)
            ys, _ = run_reduction(plan, np.full(K, x), rng.spawn(j))
            counts = np.histogram(ys, bins=edges)[0]
            chi2, pval = stats.chisquare(counts, probs / probs.sum() * K)
            out[str(x)] = {"chi2": float(chi2), "p_value": float(pval)}
            ok &= pval > 1e-3
        return ok, out

    return _timed(1, "rejection-kernel output law matches its closed form (chi-square)", run)


def fig_check(preset: str, K: int, seed: int, tv_max: float, mean_tol: float, var_rel: float | None,
              threads: int = 1) -> tuple[bool, dict]:
    cfg = PRESETS[preset]
    plan = cfg["plan"]()
    ok = True
    rows = {}
    for j, th in enumerate(cfg["thetas"]):
        _, ys, batch = simulate_theta(plan, th, K, seed, j, threads)
        tgt = plan.target(th)
        tv = tv_histogram(ys, tgt)
        mean, var = float(ys.mean()), float(ys.var())
        row = {"tv": tv.estimate, "mc_std_error": tv.mc_std_error, "mean": mean, "var": var,
               "target_mean": tgt.mean_hint, "acceptance": batch.summary()["acceptance_fraction"]}
        good = tv.estimate <= tv_max
        if mean_tol is not None:
            good &= abs(mean - tgt.mean_hint) <= mean_tol
        if var_rel is not None:
            good &= abs(var / tgt.sd_hint**2 - 1.0) <= var_rel
        row["pass"] = bool(good)
        rows[repr(th)] = row
        ok &= good
    return ok, rows


def criterion_2(quick: bool = False, seed: int = 42, threads: int = 1) -> CriterionResult:
    if quick:
        # a tenth of the samples: TV noise roughly triples, so the thresholds follow
        run = lambda: fig_check("fig1", 50_000, seed, 0.08, 0.1, 0.06, threads)
    else:
        run = lambda: fig_check("fig1", 500_000, seed, 0.05, 0.03, 0.02, threads)
    return _timed(2, "fig1 preset: TV, mean and variance per theta", run)


def criterion_3(quick: bool = False, seed: int = 42, threads: int = 1) -> CriterionResult:
    if quick:
        run = lambda: fig_check("fig2", 50_000, seed, 0.08, None, None, threads)
    else:
        run = lambda: fig_check("fig2", 1_000_000, seed, 0.05, 0.1, None, threads)
    return _timed(3, "fig2 preset: TV and mean per theta", run)


def criterion_4(quick: bool = False) -> CriterionResult:
    def run():
        out = {}
        ok = True
        grid = np.linspace(-10.0, 10.0, 11 if quick else 21)
        for eps in (0.1, 0.01, 0.001):
            plan = plan_laplace_to_gaussian(1.0, eps)
            s = plan.params["sigma"]
            rep = check_pq_bound(plan.kernel, grid, lambda x: 6.0 * math.exp(-s * s / 2.0))
            good = plan.certified_bound <= eps and rep.passed
            out[repr(eps)] = {"N": plan.cfg.N, "sigma": s, "certified_bound": plan.certified_bound,
                              "max_lhs": max(rep.lhs), "rhs": rep.rhs[0], "pass": good}
            ok &= good
        return ok, out

    return _timed(4, "Laplace-to-Gaussian certificate and p/q bound", run)


def criterion_5(quick: bool = False) -> CriterionResult:
    def run():
        out = {}
        ok = True
        grid = np.linspace(-5.0, 5.0, 11)
        for s in (D.PI_SQRT3, 2.0, 5.0):
            plan = plan_exp_to_logistic(s, N=10)
            dev = max(max(abs(kernel_p(plan.kernel, x, closed=False) - 1.0),
                          abs(kernel_q(plan.kernel, x, closed=False))) for x in grid)
            out[repr(s)] = dev
            ok &= dev <= 1e-8
        return ok, out

    return _timed(5, "exponential-to-logistic kernel is a Markov kernel", run)


def criterion_6(quick: bool = False) -> CriterionResult:
    def run():
        out = {}
        ok = True
        for eta in (0.1, 0.02):
            t = D.mollified_laplace_psi(eta)
            tv = tv_quadrature(t.standard_density(), D.laplace(0.0, 1.0), (-30.0, 30.0), points=[0.0])
            plan = plan_exp_to_laplace(1.0, eta)
            xs = np.linspace(-5.0, 5.0, 101)
            ys = np.linspace(-30.0, 30.0, 101)
            r = max_ratio(plan.kernel, plan.base, xs, ys)
            good = tv <= eta / 2.0 and r <= 35.0
            out[repr(eta)] = {"tv": tv, "half_eta": eta / 2.0, "max_ratio": r, "pass": good}
            ok &= good
        return ok, out

    return _timed(6, "mollified Laplace: approximation error and M = 35", run)


def criterion_7(quick: bool = False, seed: int = 7) -> CriterionResult:
    K = 10_000 if quick else 100_000
    tgrid = (1.0, 2.0, 4.0, 8.0, 12.0)

    def run():
        rng = CounterRNG(seed)
        pe = plan_exp_to_gaussian(sigma=3.0, N=48)
        xs = source_draws(pe, 0.0, K, rng.spawn(0))
        ye, _ = run_reduction(pe, xs, rng.spawn(1))
        re = check_tail_bound(ye, 0.0, exp_tail_bound(3.0), tgrid, name="exp_tail")
        pl = plan_laplace_to_gaussian(1.0, sigma=5.0, N=20)
        xl = source_draws(pl, 0.0, K, rng.spawn(2))
        yl, _ = run_reduction(pl, xl, rng.spawn(3))
        rl = check_tail_bound(yl, 0.0, laplace_tail_bound(1.0, 5.0), tgrid, name="laplace_tail")
        return re.passed and rl.passed, {"exp": re.to_dict(), "laplace": rl.to_dict()}

    return _timed(7, "tail bounds for exponential and Laplace sources", run)


def criterion_8(quick: bool = False) -> CriterionResult:
    def run():
        r = plugin_vs_rk(1.0, 0.01)
        return r["plugin_exceeds_rk"] and r["plugin_exceeds_floor"], r

    return _timed(8, "plug-in TV exceeds the RK certificate and the characteristic-function floor", run)


def criterion_9(quick: bool = False, seed: int = 9) -> CriterionResult:
    K = 10_000 if quick else 100_000
    b, delta = 1.0, 0.05

    def run():
        rng = CounterRNG(seed)
        g = D.laplace(0.0, b).sample(rng.spawn(0), np.arange(K), DOMAIN_SOURCE)
        h = dp_transform_batch(g, b, delta, rng.spawn(1))
        st = dp_settings(b, delta)
        mean, se = float(h.mean()), float(h.std(ddof=1) / math.sqrt(K))
        m2 = float(np.mean(h * h))
        m2_bound = laplace_second_moment_bound(b, math.sqrt(st["sigma_sq"]))
        tv = tv_histogram(h, D.gaussian(0.0, math.sqrt(2.0 * math.log(240.0))))
        L = math.log(12.0 / delta)
        closed = math.sqrt(2 * b * b * L + 2 * b * b + (b * b / 4) * delta * L**1.5)
        d = {"mean": mean, "se": se, "second_moment": m2, "second_moment_bound": m2_bound,
             "tv": tv.estimate, "tv_allowance": delta + tv.budget,
             "certificate": st["certificate"], "certificate_closed_form": closed}
        ok = (abs(mean) <= 5 * se and m2 <= m2_bound and tv.estimate <= delta + tv.budget
              and abs(st["certificate"] - closed) <= 1e-12)
        return ok, d

    return _timed(9, "DP transform: mean, second moment, TV and certificate", run)


def criterion_10(quick: bool = False, seed: int = 10) -> CriterionResult:
    reps = 20 if quick else 100

    def run():
        rng = CounterRNG(seed)
        target = D.gaussian_psi(3.0)
        bad_mask = bad_cov = 0
        for r in range(reps):
            u = rng.spawn(3000 + r).uniforms(np.arange(30), 0, 2, DOMAIN_SOURCE)
            # theta* plus unit exponential noise shifted to mean zero
            obs = MaskedVector.from_observed(np.arange(30.0) - np.log(u[:, 0]) - 1.0, u[:, 1] < 0.6)
            out = denoise_transform(obs, target, 0.01, seed=rng.spawn(r))
            unobs = ~obs.mask
            if not (np.array_equal(out.mask, obs.mask)
                    and out.values[unobs].tobytes() == obs.values[unobs].tobytes()):
                bad_mask += 1
            data = synthetic_moe(20, [0.2, -0.1, 0.3], seed=rng.spawn(1000 + r),
                                 gate="rademacher" if r % 2 else "x_dependent")
            res = moe_to_phase_retrieval(data, 0.1, seed=rng.spawn(2000 + r))
            if any(a.x.tobytes() != b.x.tobytes() for a, b in zip(data, res)):
                bad_cov += 1
        return bad_mask == 0 and bad_cov == 0, {"replications": reps, "mask_violations": bad_mask,
                                                "covariate_violations": bad_cov}

    return _timed(10, "structure preservation in denoising and mixture-of-experts", run)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def plan_check(plan: ReductionPlan, seed: int, K: int = 10_000) -> CriterionResult:
    """Run a user plan on source draws at theta = 0 and compare against its target."""

    def run():
        _, ys, batch = simulate_theta(plan, 0.0, K, seed, 0)
        tv = tv_histogram(ys, plan.target(0.0))
        allowed = plan.certified_bound + tv.budget
        return tv.estimate <= allowed, {"tv": tv.estimate, "allowed": allowed, "summary": batch.summary()}

    return _timed(0, f"user plan {plan.family}", run)


def run_suite(quick: bool = False, seed: int = 42, threads: int = 1) -> list[CriterionResult]:
    out = []
    for fn in CRITERIA:
        if fn in (criterion_2, criterion_3):
            out.append(fn(quick, seed, threads))
        else:
            out.append(fn(quick))
    return out
