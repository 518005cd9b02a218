"""Measurement layer: TV estimates, p/q and tail-bound checks, plug-in baseline."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import distributions as D
from .numerics import integrate, sign_regions
from .reductions import plan_laplace_to_gaussian
from .signed_kernels import SignedKernelSpec, kernel_p, kernel_pq, kernel_q

Array = np.ndarray
PdfLike = Union[D.ScalarDensity, Callable[[Array], Array]]

DEFAULT_BINS = 200
DEFAULT_SPAN = 6.0
MIN_SAMPLES = 10_000
SE_MULT_TV = 3.0
SE_MULT_TAIL = 4.0


@dataclass(frozen=True)
class TvEstimate:
    """Histogram TV with its error bookkeeping.

    `mc_std_error` follows the sqrt(bins / (4K)) convention. `bias_budget`
    bounds how far binning can pull the estimate below the true distance.
    `budget` is the allowance used when an estimate is compared against an
    upper bound.
    """

    estimate: float
    bins: int
    range: tuple[float, float]
    mc_std_error: float
    bias_budget: float
    samples: int

    @property
    def budget(self) -> float:
        return SE_MULT_TV * self.mc_std_error

    def to_dict(self) -> dict:
        d = asdict(self)
        d["range"] = list(self.range)
        d["budget"] = self.budget
        return d


def _pdf(d: PdfLike) -> Callable[[Array], Array]:
    return d.pdf if isinstance(d, D.ScalarDensity) else d


def default_range(target: D.ScalarDensity, span: float = DEFAULT_SPAN) -> tuple[float, float]:
    if target.mean_hint is None or target.sd_hint is None:
        raise ValueError(f"{target.name} has no mean/sd hints; pass range explicitly")
    return target.mean_hint - span * target.sd_hint, target.mean_hint + span * target.sd_hint


def _cell_masses(target: D.ScalarDensity, edges: Array) -> tuple[Array, float, float]:
    if target.cdf is not None:
        c = np.asarray(target.cdf(edges), float)
        return np.diff(c), float(c[0]), float(1.0 - c[-1])
    inner = np.array([D.density_quadrature(target, a, b) for a, b in zip(edges[:-1], edges[1:])])
    left = D.density_quadrature(target, -math.inf, edges[0]) if target.support[0] < edges[0] else 0.0
    right = D.density_quadrature(target, edges[-1], math.inf) if target.support[1] > edges[-1] else 0.0
    return inner, left, right


def tv_histogram(
    samples,
    target: D.ScalarDensity,
    bins: int = DEFAULT_BINS,
    range: Optional[tuple[float, float]] = None,
    min_samples: int = MIN_SAMPLES,
) -> TvEstimate:
    """Half the L1 distance between binned sample and target masses.

    The two tails outside `range` count as two extra cells.
    """
    s = np.asarray(samples, float).reshape(-1)
    K = s.size
    if K < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {K}")
    lo, hi = default_range(target) if range is None else (float(range[0]), float(range[1]))
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi) or bins < 1:
        raise ValueError(f"degenerate histogram range ({lo}, {hi}) or bins={bins}")
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    emp = counts / K
    emp_left = np.count_nonzero(s < lo) / K
    emp_right = np.count_nonzero(s > hi) / K
    q, q_left, q_right = _cell_masses(target, edges)
    est = 0.5 * (np.abs(emp - q).sum() + abs(emp_left - q_left) + abs(emp_right - q_right))
    est = float(min(max(est, 0.0), 1.0))
    # binning bias: h/4 times the total variation of the target pdf on the range
    fine = np.linspace(lo, hi, 40 * bins + 1)
    var_pdf = float(np.abs(np.diff(target.pdf(fine))).sum())
    bias = min((hi - lo) / bins / 4.0 * var_pdf, 1.0 - est)
    return TvEstimate(est, int(bins), (lo, hi), math.sqrt(bins / (4.0 * K)), max(bias, 0.0), int(K))


def tv_quadrature(
    p: PdfLike,
    q: PdfLike,
    window: tuple[float, float],
    points: Sequence[float] = (),
    n_scan: int = 4001,
) -> float:
    """0.5 * integral of |p - q| over the real line.

    Sign changes of p - q are located inside `window`; the pieces beyond
    the window are integrated as they are.
    """
    fp, fq = _pdf(p), _pdf(q)
    diff = lambda y: np.asarray(fp(y), float) - np.asarray(fq(y), float)
    lo, hi = window
    cuts = []
    for a, b in sign_regions(diff, lo, hi, n=n_scan):
        cuts += [a, b]
    cuts = sorted({c for c in cuts if math.isfinite(c)} | {lo, hi})
    edges = [-math.inf] + cuts + [math.inf]
    pts = [t for t in points if math.isfinite(t)] + list(np.linspace(lo, hi, 21))
    f = lambda y: abs(float(diff(np.array(y))))
    return 0.5 * sum(integrate(f, a, b, points=pts) for a, b in zip(edges[:-1], edges[1:]) if a < b)


# --- bound checks -------------------------------------------------------------


@dataclass
class CheckReport:
    check: str
    grid: list
    lhs: list
    rhs: list
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return {"check": self.check, "grid": self.grid, "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _report(name: str, grid, lhs, rhs) -> CheckReport:
    grid = [float(v) for v in grid]
    lhs = [float(v) for v in lhs]
    rhs = [float(v) for v in rhs]
    slack = min((r - l for l, r in zip(lhs, rhs)), default=math.inf)
    return CheckReport(name, grid, lhs, rhs, float(slack), all(l <= r for l, r in zip(lhs, rhs)))


def check_pq_bound(
    kernel: SignedKernelSpec,
    x_grid,
    bound_fn: Callable[[float], float],
    closed: bool = False,
    name: str = "pq_bound",
) -> CheckReport:
    """|p(x) - 1| + q(x) <= bound_fn(x) at every grid point.

    By default p and q come from quadrature even when the kernel has closed
    forms, so the check is independent of them.
    """
    lhs, rhs = [], []
    for x in x_grid:
        x = float(x)
        if closed:
            pv, qv = kernel_pq(kernel, x)
        else:
            pv, qv = kernel_p(kernel, x, closed=False), kernel_q(kernel, x, closed=False)
        lhs.append(abs(pv - 1.0) + qv)
        rhs.append(bound_fn(x))
    return _report(name, x_grid, lhs, rhs)


def check_tail_bound(
    samples,
    center,
    bound: Callable[[float], float],
    t_grid,
    se_mult: float = SE_MULT_TAIL,
    name: str = "tail_bound",
) -> CheckReport:
    """Empirical P(|Y - center| >= t) against bound(t) plus se_mult binomial SEs.

    The SE is taken under the bound itself (clipped to [0, 1]).
    """
    s = np.asarray(samples, float).reshape(-1)
    dev = np.abs(s - np.asarray(center, float))
    K = s.size
    lhs, rhs = [], []
    for t in t_grid:
        b = float(bound(float(t)))
        pb = min(max(b, 0.0), 1.0)
        lhs.append(np.count_nonzero(dev >= t) / K)
        rhs.append(b + se_mult * math.sqrt(pb * (1.0 - pb) / K))
    return _report(name, t_grid, lhs, rhs)


def exp_tail_bound(sigma: float) -> Callable[[float], float]:
    """3 exp(-t^2/(8 sigma^2)) + 5 exp(-t/2): exponential source, sigma >= 2, y0 = x + 1."""
    return lambda t: 3.0 * math.exp(-t * t / (8.0 * sigma * sigma)) + 5.0 * math.exp(-t / 2.0)


def laplace_tail_bound(b: float, sigma: float) -> Callable[[float], float]:
    """2 exp(-t^2/(8 sigma^2)) + 3 exp(-t/(2b)): Laplace source, y0 = x."""
    return lambda t: 2.0 * math.exp(-t * t / (8.0 * sigma * sigma)) + 3.0 * math.exp(-t / (2.0 * b))


def laplace_second_moment_bound(b: float, sigma: float) -> float:
    """2b^2 + sigma^2 (1 + (sigma/b) exp(-sigma^2/(2b^2)))."""
    return 2.0 * b * b + sigma * sigma * (1.0 + (sigma / b) * math.exp(-sigma * sigma / (2.0 * b * b)))


# --- plug-in baseline -----------------------------------------------------------


def convolved_pdf(noise: D.ScalarDensity, sigma: float) -> Callable[[Array], Array]:
    """Density of W + sigma Z by direct quadrature of the convolution."""
    pts = noise.quad_points()

    def one(y: float) -> float:
        g = lambda w: float(noise.pdf(w)) * math.exp(-0.5 * ((y - w) / sigma) ** 2)
        lo, hi = noise.support
        inner = sorted({p for p in pts + [y, y - 8 * sigma, y + 8 * sigma] if lo < p < hi})
        val = integrate(g, lo, hi, points=inner, atol=1e-14)
        return val / (sigma * math.sqrt(2.0 * math.pi))

    vec = np.vectorize(one, otypes=[float])
    return lambda y: vec(np.asarray(y, float))


def plugin_tv(noise: D.ScalarDensity, sigma: float, n_scan: int = 401) -> float:
    """Exact TV between the plug-in law W + sigma Z and sigma Z."""
    conv = convolved_pdf(noise, sigma)
    target = D.gaussian(0.0, sigma)
    w = 12.0 * max(sigma, noise.sd_hint or 1.0)
    return tv_quadrature(conv, target, (-w, w), points=[0.0], n_scan=n_scan)


def laplace_cf(b: float = 1.0) -> Callable[[float], complex]:
    return lambda t: 1.0 / (1.0 + (b * t) ** 2)


def char_function_floor(sigma: float, cf: Callable[[float], complex]) -> float:
    """exp(-t^2 sigma^2 / 2) |G_W(t) - 1| at t = 1/sigma."""
    t = 1.0 / sigma
    return math.exp(-0.5 * t * t * sigma * sigma) * abs(cf(t) - 1.0)


def plugin_vs_rk(source_b: float, eps: float) -> dict:
    """Plug-in TV against the RK certificate at the Laplace-to-Gaussian sigma for eps."""
    plan = plan_laplace_to_gaussian(source_b, eps)
    sigma = plan.params["sigma"]
    tv = plugin_tv(D.laplace(0.0, source_b), sigma)
    floor = char_function_floor(sigma, laplace_cf(source_b))
    return {
        "check": "plugin_vs_rk",
        "b": source_b,
        "epsilon": eps,
        "sigma": sigma,
        "plugin_tv": tv,
        "rk_bound": plan.certified_bound,
        "cf_floor": floor,
        "plugin_exceeds_rk": tv > plan.certified_bound,
        "plugin_exceeds_floor": tv >= floor,
        "pass": tv > plan.certified_bound,
    }
