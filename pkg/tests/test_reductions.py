import json
import math

import numpy as np
import pytest

from rkreduce import distributions as D
from rkreduce.diagnostics import tv_histogram
from rkreduce.reductions import (
    EMPIRICAL,
    THEOREM,
    MeanFunction,
    alpha_constants,
    plan_exp_to_gaussian,
    plan_exp_to_laplace,
    plan_exp_to_logistic,
    plan_from_json,
    plan_laplace_to_gaussian,
    plan_laplace_to_gaussian_product,
    plan_uniform_to_gaussian,
    plugin_batch,
    plugin_reduce,
    run_reduction,
    uniform_sigma_threshold,
)
from rkreduce.rejection import max_ratio
from rkreduce.rng import CounterRNG
from rkreduce.signed_kernels import kernel_p, kernel_q
from rkreduce.validation import fig1_plan, fig2_plan, simulate_theta, source_draws


# --- parameter selection ------------------------------------------------------


@pytest.mark.parametrize("eps,N", [(0.1, 8), (0.01, 12), (0.001, 17)])
def test_laplace_plan_constants(eps, N):
    p = plan_laplace_to_gaussian(1.0, eps)
    assert p.cfg.N == N == math.ceil(2 * math.log(4 / eps))
    assert p.cfg.M == 2.0
    assert p.params["sigma"] ** 2 == pytest.approx(2 * math.log(12 / eps), rel=1e-14)
    assert p.cfg.y0.kind == "echo_input"
    assert p.mode == THEOREM and p.certified_bound <= eps


def test_laplace_plan_eps_001_values():
    p = plan_laplace_to_gaussian(1.0, 0.01)
    assert p.params["sigma"] ** 2 == pytest.approx(14.18, abs=5e-3)
    assert p.certified_bound == pytest.approx(2 * math.exp(-6) + 6 * math.exp(-math.log(1200)), rel=1e-12)
    assert plan_laplace_to_gaussian(1.0, 0.005).params["sigma"] > plan_laplace_to_gaussian(1.0, 0.5).params["sigma"]


def test_laplace_plan_scales_with_b():
    p = plan_laplace_to_gaussian(2.5, 0.01)
    assert p.params["sigma"] == pytest.approx(2.5 * plan_laplace_to_gaussian(1.0, 0.01).params["sigma"])


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 2.0])
def test_eps_range(bad):
    with pytest.raises(ValueError):
        plan_laplace_to_gaussian(1.0, bad)


def test_product_plan_splits_eps():
    plans = plan_laplace_to_gaussian_product([1.0, 2.0, 0.5], 0.03)
    assert [p.epsilon for p in plans] == pytest.approx([0.01] * 3)
    assert sum(p.certified_bound for p in plans) <= 0.03
    with pytest.raises(ValueError):
        plan_laplace_to_gaussian_product([], 0.1)


def test_exp_gaussian_plan():
    p = plan_exp_to_gaussian(0.01)
    assert p.params["sigma"] == pytest.approx(math.sqrt(2 * math.log(400)), rel=1e-14)
    assert p.params["sigma"] == pytest.approx(3.46, abs=5e-3)
    assert p.cfg.M == 4.0 and p.cfg.N == 48 == math.ceil(8 * math.log(400))
    assert p.cfg.y0.kind == "input_plus" and p.cfg.y0.value == 1.0
    for eps in (0.1, 0.01):
        assert plan_exp_to_gaussian(eps).certified_bound <= eps


def test_exp_logistic_plan():
    p = plan_exp_to_logistic(2.0, 0.01)
    assert p.cfg.N == 22 == math.ceil(4 * math.log(200))
    assert p.certified_bound == pytest.approx(2 * math.exp(-22 / 4))
    assert p.certified_bound <= 0.01
    plan_exp_to_logistic(D.PI_SQRT3, 0.01)
    with pytest.raises(ValueError):
        plan_exp_to_logistic(1.0, 0.01)


def test_exp_logistic_exactness_witness():
    k = plan_exp_to_logistic(2.0, 0.01).kernel
    for x in np.linspace(-5, 5, 6):
        assert kernel_p(k, x, closed=False) == pytest.approx(1.0, abs=1e-8)
        assert kernel_q(k, x, closed=False) == pytest.approx(0.0, abs=1e-8)


def test_exp_laplace_plan():
    p = plan_exp_to_laplace(1.0, 0.02)
    assert p.params["eta"] == 0.02
    assert p.cfg.M == 35.0 and p.cfg.N == math.ceil(35 * math.log(200)) == 186
    assert p.certified_bound <= 0.02
    with pytest.raises(ValueError):
        plan_exp_to_laplace(0.5, 0.02)


def test_exp_laplace_ratio_below_35():
    p = plan_exp_to_laplace(1.0, 0.02)
    r = max_ratio(p.kernel, p.base, np.linspace(-5, 5, 101), np.linspace(-30, 30, 101))
    assert 1.0 < r <= 35.0


def test_alpha_constants():
    fn = MeanFunction("abs", 1.0)
    assert alpha_constants(fn.f, fn.fprime, 0.0) == (0.5, 1.0)
    fn = MeanFunction("abs", 10.0)
    assert alpha_constants(fn.f, fn.fprime, 0.0) == (5.0, 10.0)
    assert uniform_sigma_threshold(10.0, 0.1) == pytest.approx(100 * math.sqrt(2 * math.log(200)))
    assert uniform_sigma_threshold(10.0, 0.1) == pytest.approx(325.5247, abs=1e-4)


def test_uniform_theorem_plan():
    p = plan_uniform_to_gaussian(MeanFunction("abs", 10.0), 0.1)
    assert p.mode == THEOREM
    assert p.cfg.M == 30.0 and p.cfg.N == math.ceil(60 * math.log(40))
    assert p.certified_bound <= 0.1
    assert any("verified on a grid" in n for n in p.notes)


def test_uniform_empirical_below_threshold():
    p = plan_uniform_to_gaussian(MeanFunction("abs", 10.0), 0.1, sigma_override=50.0)
    assert p.mode == EMPIRICAL and p.certified_bound == math.inf


def test_figure_presets():
    f1 = fig1_plan()
    assert (f1.params["sigma"], f1.cfg.M, f1.cfg.N) == (5.0, 2.0, 20)
    assert f1.mode == THEOREM
    f2 = fig2_plan()
    assert (f2.params["sigma"], f2.cfg.M, f2.cfg.N) == (10.0, 30.0, 3000)
    assert f2.mode == EMPIRICAL and f2.certified_bound == math.inf
    assert any("empirical" in n for n in f2.notes)


@pytest.mark.parametrize("make", [
    lambda: plan_laplace_to_gaussian(1.0, 0.01),
    lambda: plan_exp_to_gaussian(0.05),
    lambda: plan_exp_to_logistic(2.0, 0.01),
    lambda: plan_exp_to_laplace(1.5, 0.05),
    fig1_plan,
    fig2_plan,
])
def test_plan_json_round_trip(make):
    p = make()
    text = json.dumps(p.to_dict())
    q = plan_from_json(text)
    assert q.to_dict() == p.to_dict()


def test_plan_json_unknown_family():
    with pytest.raises(ValueError):
        plan_from_json(json.dumps({"family": "nope"}))


# --- drivers --------------------------------------------------------------------


def test_run_reduction_empty_and_deterministic():
    p = plan_laplace_to_gaussian(1.0, 0.01)
    y, b = run_reduction(p, [], 1)
    assert y.size == 0 and b.summary()["count"] == 0
    xs = np.linspace(-3, 3, 101)
    assert np.array_equal(run_reduction(p, xs, 5)[0], run_reduction(p, xs, 5)[0])


def test_plugin_reduce():
    rng = CounterRNG(0)
    assert plugin_reduce(2.0, 1e-300, rng.stream(0)) == 2.0
    y = plugin_batch(np.full(1_000_000, 2.0), 5.0, rng)
    assert abs(y.mean() - 2.0) <= 5 * 5.0 / 1000
    assert y.std() == pytest.approx(5.0, rel=5e-3)


def test_fig1_theta_minus_five():
    plan = fig1_plan()
    _, ys, _ = simulate_theta(plan, -5.0, 500_000, seed=3, j=0)
    tv = tv_histogram(ys, D.gaussian(-5.0, 5.0))
    assert tv.estimate <= 0.05


THEOREM_PLANS = {
    "laplace": lambda: plan_laplace_to_gaussian(1.0, 0.01),
    "exp_gaussian": lambda: plan_exp_to_gaussian(0.01),
    "exp_logistic": lambda: plan_exp_to_logistic(2.0, 0.01),
    "exp_laplace": lambda: plan_exp_to_laplace(1.0, 0.02),
}


@pytest.mark.parametrize("name", sorted(THEOREM_PLANS))
def test_theorem_plans_within_certificate(name):
    plan = THEOREM_PLANS[name]()
    rng = CounterRNG(77)
    K = 100_000
    for j, th in enumerate((-5.0, -2.5, 0.0, 2.5, 5.0)):
        xs = source_draws(plan, th, K, rng.spawn(100 + j))
        ys, _ = run_reduction(plan, xs, rng.spawn(j))
        tv = tv_histogram(ys, plan.target(th))
        assert tv.estimate <= plan.certified_bound + tv.budget, (name, th, tv)


def test_uniform_theorem_plan_within_certificate():
    plan = plan_uniform_to_gaussian(MeanFunction("abs", 10.0), 0.1)
    rng = CounterRNG(78)
    for j, th in enumerate((-0.5, -0.25, 0.0, 0.25, 0.5)):
        xs = source_draws(plan, th, 100_000, rng.spawn(100 + j))
        ys, _ = run_reduction(plan, xs, rng.spawn(j))
        tv = tv_histogram(ys, plan.target(th))
        assert tv.estimate <= plan.certified_bound + tv.budget


# --- fig2 settings: exact output mean from an independent kernel formula ------------


def _phi(t, s):
    return np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2 * math.pi))


def _fig2_kernel(y, x, s=10.0):
    g = 2 * _phi(y - 5.0, s) - _phi(y, s)
    if abs(x) >= 0.5:
        return g
    t = y - 10 * (0.5 + x) if x <= 0 else y - 10 * (0.5 - x)
    return g - 10 * _phi(t, s) * t / s**2


def _gl(a, b, n):
    z, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * z + 0.5 * (a + b), 0.5 * (b - a) * w


def _fig2_exact_mean(theta):
    # the cap N = 3000 leaves (1 - p/30)^3000 < 1e-40, so the y0 atom is dropped
    ys, wy = [], []
    for a in np.arange(-200.0, 200.0, 2.0):
        n, w = _gl(a, a + 2.0, 24)
        ys.append(n)
        wy.append(w)
    ys, wy = np.concatenate(ys), np.concatenate(wy)
    total = 0.0
    lo, hi = theta - 0.5, theta + 0.5
    cuts = [lo] + [c for c in (-0.5, 0.0, 0.5) if lo < c < hi] + [hi]
    for a, b in zip(cuts[:-1], cuts[1:]):
        xn, xw = _gl(a, b, 40)
        for x, w in zip(xn, xw):
            sp = np.clip(_fig2_kernel(ys, x), 0, None)
            total += w * (sp * ys * wy).sum() / (sp * wy).sum()
    return total


FIG2_EXACT_MEANS = {-0.5: 4.6623, -0.25: 2.3876, 0.0: 0.0753, 0.25: 2.3876, 0.5: 4.6623}


def test_fig2_exact_mean_oracle_frozen():
    for th, m in FIG2_EXACT_MEANS.items():
        assert _fig2_exact_mean(th) == pytest.approx(m, abs=2e-4)


@pytest.mark.parametrize("theta", [-0.5, 0.0, 0.25])
def test_fig2_sampler_mean_matches_exact_law(theta):
    plan = fig2_plan()
    _, ys, _ = simulate_theta(plan, theta, 100_000, seed=12, j=3)
    se = ys.std() / math.sqrt(ys.size)
    assert abs(ys.mean() - FIG2_EXACT_MEANS[theta]) <= 5 * se
