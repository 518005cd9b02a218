"""Certified reduction plans, the batch driver and the plug-in baseline."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import distributions as D
from .rejection import (
    BaseMeasure,
    RejectionConfig,
    RkBatch,
    Y0Policy,
    deficiency_bound,
    echo_input,
    fixed_gaussian_base,
    gaussian_base,
    input_plus,
    laplace_base,
    logconcave_base,
    max_ratio,
    rk_batch,
)
from .rng import DOMAIN_AUX, CounterRNG, Stream
from .signed_kernels import (
    SignedKernelSpec,
    exp_logconcave_kernel,
    gaussian_mean_parts,
    kernel_pq,
    laplace_gaussian_kernel,
    uniform_kernel,
)

Array = np.ndarray

THEOREM = "theorem"
EMPIRICAL = "empirical"


def ceil_n(value: float) -> int:
    # guard against 12.000000000000002 style rounding before taking the ceiling
    return int(math.ceil(round(value, 9)))


@dataclass
class ReductionPlan:
    family: str
    params: dict
    kernel: SignedKernelSpec
    base: BaseMeasure
    cfg: RejectionConfig
    epsilon: float
    certified_bound: float
    mode: str
    source: Callable[[float], D.ScalarDensity]
    target: Callable[[float], D.ScalarDensity]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "M": self.cfg.M,
            "N": self.cfg.N,
            "y0": self.cfg.y0.to_dict(),
            "epsilon": self.epsilon,
            "certified_bound": self.certified_bound,
            "mode": self.mode,
            "kernel": self.kernel.label,
            "base": self.base.label,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _finish(plan: ReductionPlan) -> ReductionPlan:
    if plan.mode == THEOREM and not plan.certified_bound <= plan.epsilon:
        raise ValueError(
            f"certified bound {plan.certified_bound:.3g} exceeds epsilon {plan.epsilon:.3g}; "
            "loosen epsilon or drop the overrides"
        )
    if plan.mode == EMPIRICAL:
        plan.notes.append("empirical mode: constants are below the theorem thresholds, no certificate")
    return plan


def _check_eps(eps: Optional[float]) -> None:
    if eps is not None and not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")


# --- Laplace -> Gaussian ----------------------------------------------------


def laplace_gaussian_certificate(b: float, sigma: float, N: int, M: float = 2.0) -> float:
    """2 exp(-N/M) + 6 exp(-sigma^2 / (2 b^2)); p(x) >= 1 so inf_p = 1."""
    return deficiency_bound(1.0, 6.0 * math.exp(-(sigma * sigma) / (2.0 * b * b)), 0.0, M, N)


def plan_laplace_to_gaussian(
    b: float,
    eps: Optional[float] = None,
    sigma: Optional[float] = None,
    N: Optional[int] = None,
    M: float = 2.0,
    y0: Optional[Y0Policy] = None,
) -> ReductionPlan:
    """Lap(theta, b) -> N(theta, sigma^2).

    Defaults: sigma^2 = 2 b^2 log(12/eps), M = 2, N = ceil(2 log(4/eps)), y0 = x.
    Overrides keep the certificate whenever M >= 2, since the bound holds for
    any sigma >= b and N >= 1.
    """
    _check_eps(eps)
    if b <= 0:
        raise ValueError("b must be positive")
    if eps is None and (sigma is None or N is None):
        raise ValueError("give eps, or both sigma and N")
    if sigma is None:
        sigma = math.sqrt(2.0 * b * b * math.log(12.0 / eps))
    if N is None:
        N = ceil_n(2.0 * math.log(4.0 / eps))
    kernel = laplace_gaussian_kernel(b, sigma)
    cfg = RejectionConfig(M, int(N), y0 or echo_input())
    bound = laplace_gaussian_certificate(b, sigma, cfg.N, 2.0) if M >= 2.0 else math.inf
    return _finish(ReductionPlan(
        family="laplace_gaussian",
        params={"b": b, "sigma": sigma},
        kernel=kernel,
        base=gaussian_base(sigma),
        cfg=cfg,
        epsilon=eps if eps is not None else bound,
        certified_bound=bound,
        mode=THEOREM if math.isfinite(bound) else EMPIRICAL,
        source=lambda th: D.laplace(th, b),
        target=lambda th: D.gaussian(th, sigma),
    ))


def plan_laplace_to_gaussian_product(b: Sequence[float], eps: float) -> list[ReductionPlan]:
    """Coordinatewise plans for a product Laplace source, eps split evenly (union bound)."""
    _check_eps(eps)
    d = len(b)
    if d == 0:
        raise ValueError("need at least one coordinate")
    return [plan_laplace_to_gaussian(bj, eps / d) for bj in b]


# --- exponential -> log-concave -------------------------------------------


def _exp_plan(
    family: str,
    target: D.LogConcaveTarget,
    eps: Optional[float],
    M: float,
    N: int,
    base: BaseMeasure,
    bound: float,
    y0: Optional[Y0Policy],
    params: dict,
    truth: Optional[Callable[[float], D.ScalarDensity]] = None,
) -> ReductionPlan:
    return _finish(ReductionPlan(
        family=family,
        params=params,
        kernel=exp_logconcave_kernel(target),
        base=base,
        cfg=RejectionConfig(M, int(N), y0 or input_plus(1.0)),
        epsilon=eps if eps is not None else bound,
        certified_bound=bound,
        mode=THEOREM,
        source=D.shifted_exponential,
        target=truth or target.density,
    ))


def plan_exp_to_gaussian(
    eps: Optional[float] = None,
    sigma: Optional[float] = None,
    N: Optional[int] = None,
    y0: Optional[Y0Policy] = None,
) -> ReductionPlan:
    """Shifted Exp(1) -> N(theta, sigma^2) with sigma = sqrt(2 log(4/eps)), M = 4, N = ceil(8 log(4/eps))."""
    _check_eps(eps)
    if eps is None and (sigma is None or N is None):
        raise ValueError("give eps, or both sigma and N")
    if sigma is None:
        sigma = math.sqrt(2.0 * math.log(4.0 / eps))
    if sigma < 1.0:
        raise ValueError("the M = 4 constant needs sigma >= 1")
    if N is None:
        N = ceil_n(8.0 * math.log(4.0 / eps))
    target = D.gaussian_psi(sigma)
    tau = D.logconcave_tau(target)
    bound = deficiency_bound(1.0 - tau, tau, 0.0, 4.0, int(N))
    return _exp_plan("exp_gaussian", target, eps, 4.0, N, logconcave_base(target), bound, y0,
                     {"sigma": sigma, "tau": tau})


def plan_exp_to_logistic(
    sigma: float,
    eps: Optional[float] = None,
    N: Optional[int] = None,
    y0: Optional[Y0Policy] = None,
) -> ReductionPlan:
    """Shifted Exp(1) -> logistic(theta, sigma^2); exact kernel, so only the cap costs anything."""
    _check_eps(eps)
    if sigma < D.PI_SQRT3:
        raise ValueError(f"sigma={sigma} is below pi/sqrt(3); the logistic kernel is not a Markov kernel there")
    if N is None:
        if eps is None:
            raise ValueError("give eps or N")
        N = ceil_n(4.0 * math.log(2.0 / eps))
    target = D.logistic_psi(sigma)
    bound = deficiency_bound(1.0, 0.0, 0.0, 4.0, int(N))
    return _exp_plan("exp_logistic", target, eps, 4.0, N, logconcave_base(target), bound, y0,
                     {"sigma": sigma}, truth=lambda th: D.logistic(th, sigma))


def plan_exp_to_laplace(
    sigma: float,
    eps: float,
    N: Optional[int] = None,
    y0: Optional[Y0Policy] = None,
) -> ReductionPlan:
    """Shifted Exp(1) -> Laplace(theta, sigma) through the eta = eps mollified surrogate."""
    _check_eps(eps)
    if sigma < 1.0:
        raise ValueError("the M = 35 constant needs sigma >= 1")
    if N is None:
        N = ceil_n(35.0 * math.log(4.0 / eps))
    eta = eps
    target = D.mollified_laplace_psi(eta, sigma)
    bound = deficiency_bound(1.0, 0.0, 0.0, 35.0, int(N)) + eta / 2.0
    plan = _exp_plan("exp_laplace", target, eps, 35.0, N, laplace_base(2.0 * sigma, 1.0), bound, y0,
                     {"sigma": sigma, "eta": eta}, truth=lambda th: D.laplace(th, sigma))
    plan.notes.append(f"kernel targets the eta={eta!r} mollified Laplace; mollification costs eta/2 in TV")
    return plan


# --- uniform -> Gaussian with nonlinear mean ---------------------------------


@dataclass(frozen=True)
class MeanFunction:
    """f on [-1/2, 1/2] with derivative off theta0; `kind`/`scale` make it serializable."""

    kind: str
    scale: float = 1.0

    def f(self, t):
        t = np.asarray(t, float)
        if self.kind == "abs":
            return self.scale * np.abs(t)
        if self.kind == "linear":
            return self.scale * t
        if self.kind == "square":
            return self.scale * t * t
        raise ValueError(f"unknown mean function {self.kind!r}")

    def fprime(self, t):
        t = np.asarray(t, float)
        if self.kind == "abs":
            return self.scale * np.sign(t)
        if self.kind == "linear":
            return self.scale * np.ones_like(t)
        return 2.0 * self.scale * t

    @property
    def theta0(self) -> float:
        return 0.0


def alpha_constants(f: Callable, fprime: Callable, theta0: float, n: int = 4096) -> tuple[float, float]:
    """Grid maxima of |f| on [-1/2, 1/2] and |f'| off theta0 (lower bounds on the true sups)."""
    grid = np.concatenate([np.linspace(-0.5, 0.5, n), [-0.5, 0.5, theta0 - 1e-9, theta0 + 1e-9]])
    grid = grid[(grid >= -0.5) & (grid <= 0.5)]
    a0 = float(np.max(np.abs(f(grid))))
    off = grid[grid != theta0]
    a1 = float(np.max(np.abs(fprime(off))))
    return a0, a1


def uniform_sigma_threshold(alpha1: float, eps: float) -> float:
    return 10.0 * alpha1 * math.sqrt(2.0 * math.log(20.0 / eps))


def uniform_gaussian_certificate(alpha1: float, sigma: float, N: int) -> float:
    """eps/2 + 10 exp(-sigma^2/(200 alpha1^2)) written through the deficiency bound (inf p >= 1/2)."""
    return deficiency_bound(0.5, 10.0 * math.exp(-(sigma * sigma) / (200.0 * alpha1 * alpha1)), 0.0, 30.0, N)


def plan_uniform_to_gaussian(
    fn: MeanFunction,
    eps: Optional[float] = None,
    sigma_override: Optional[float] = None,
    N: Optional[int] = None,
    M: float = 30.0,
    y0: Optional[Y0Policy] = None,
    verify_grid: int = 21,
) -> ReductionPlan:
    """Unif[theta - 1/2, theta + 1/2] -> N(f(theta), sigma^2), theta in [-1/2, 1/2].

    Theorem mode uses sigma = 10 alpha1 sqrt(2 log(20/eps)), M = 30 and
    N = ceil(60 log(4/eps)). If that sigma falls short of 40 max(alpha0, alpha1)
    the M = 30 ratio bound and the p/q bound are checked numerically on a grid
    before the certificate is issued. Any sigma below the threshold gives an
    empirical-mode plan.
    """
    _check_eps(eps)
    theta0 = fn.theta0
    a0, a1 = alpha_constants(fn.f, fn.fprime, theta0)
    notes = [f"alpha0={a0!r}, alpha1={a1!r}"]
    thr = uniform_sigma_threshold(a1, eps) if (eps is not None and a1 > 0) else math.inf
    sigma = thr if sigma_override is None else float(sigma_override)
    if not math.isfinite(sigma):
        raise ValueError("sigma is undetermined: give eps (with a non-constant f) or sigma_override")
    if N is None:
        if eps is None:
            raise ValueError("give eps or N")
        N = ceil_n(60.0 * math.log(4.0 / eps))
    parts = gaussian_mean_parts(fn.f, fn.fprime, sigma, theta0, a0)
    kernel = uniform_kernel(parts)
    base = fixed_gaussian_base(0.0, math.sqrt(2.0) * sigma)
    mode = THEOREM if (sigma >= thr * (1 - 1e-12) and M >= 30.0) else EMPIRICAL
    bound = math.inf
    if mode == THEOREM:
        bound = uniform_gaussian_certificate(a1, sigma, int(N))
        if sigma < 40.0 * max(a0, a1):
            _verify_uniform(kernel, base, a1, sigma, verify_grid)
            notes.append(
                f"sigma={sigma:.6g} < 40*max(alpha0, alpha1); ratio <= 30 and the p/q bound were verified on a grid"
            )
    return _finish(ReductionPlan(
        family="uniform_gaussian",
        params={"f": fn.kind, "scale": fn.scale, "theta0": theta0, "sigma": sigma, "alpha0": a0, "alpha1": a1},
        kernel=kernel,
        base=base,
        cfg=RejectionConfig(M, int(N), y0 or echo_input()),
        epsilon=eps if eps is not None else bound,
        certified_bound=bound,
        mode=mode,
        source=D.uniform_location,
        target=lambda th: D.gaussian(float(fn.f(th)), sigma),
        notes=notes,
    ))


def _verify_uniform(kernel: SignedKernelSpec, base: BaseMeasure, a1: float, sigma: float, n: int) -> None:
    xs = np.linspace(-1.0, 1.0, n)
    ys = np.linspace(-12.0 * sigma, 12.0 * sigma, 4001)
    r = max_ratio(kernel, base, xs, ys)
    if r > 30.0:
        raise ValueError(f"grid ratio {r:.4g} exceeds M = 30")
    rhs = 10.0 * math.exp(-(sigma * sigma) / (200.0 * a1 * a1))
    for x in xs:
        pv, qv = kernel_pq(kernel, x)
        lhs = abs(pv - 1.0) + qv
        if lhs > rhs:
            raise ValueError(f"|p-1| + q = {lhs:.4g} exceeds {rhs:.4g} at x = {x}")


# --- serialization ------------------------------------------------------------


def plan_from_dict(d: dict) -> ReductionPlan:
    fam = d["family"]
    p = d.get("params", {})
    y0 = Y0Policy(**d["y0"]) if "y0" in d else None
    eps = d.get("epsilon")
    if eps is not None and not 0 < eps < 1:
        eps = None
    N = d.get("N")
    if fam == "laplace_gaussian":
        return plan_laplace_to_gaussian(p["b"], eps, sigma=p.get("sigma"), N=N, M=d.get("M", 2.0), y0=y0)
    if fam == "exp_gaussian":
        return plan_exp_to_gaussian(eps, sigma=p.get("sigma"), N=N, y0=y0)
    if fam == "exp_logistic":
        return plan_exp_to_logistic(p["sigma"], eps, N=N, y0=y0)
    if fam == "exp_laplace":
        return plan_exp_to_laplace(p["sigma"], eps if eps is not None else p["eta"], N=N, y0=y0)
    if fam == "uniform_gaussian":
        fn = MeanFunction(p.get("f", "abs"), p.get("scale", 1.0))
        return plan_uniform_to_gaussian(fn, eps, sigma_override=p.get("sigma"), N=N, M=d.get("M", 30.0), y0=y0)
    raise ValueError(f"unknown plan family {fam!r}")


def plan_from_json(text: str) -> ReductionPlan:
    return plan_from_dict(json.loads(text))


# --- drivers ----------------------------------------------------------------


def run_reduction(
    plan: ReductionPlan,
    xs,
    seed: int | CounterRNG,
    threads: int = 1,
    indices: Optional[Sequence[int]] = None,
    chunk: int = 1 << 16,
) -> tuple[Array, RkBatch]:
    """Apply the plan's rejection kernel to every x with one RNG stream per row index."""
    rng = seed if isinstance(seed, CounterRNG) else CounterRNG(seed)
    xs = np.asarray(xs, dtype=float).reshape(-1)
    idx = np.arange(xs.size, dtype=np.uint64) if indices is None else np.asarray(indices, dtype=np.uint64)
    if xs.size == 0:
        empty = RkBatch(np.empty(0), np.empty(0, bool), np.empty(0, np.int64))
        return empty.y, empty
    bounds = [(s, min(s + chunk, xs.size)) for s in range(0, xs.size, chunk)]
    work = lambda ab: rk_batch(xs[ab[0]:ab[1]], plan.kernel, plan.base, plan.cfg, rng, idx[ab[0]:ab[1]])
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(ab) for ab in bounds]
    out = RkBatch(
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.accepted for p in parts]),
        np.concatenate([p.iterations for p in parts]),
    )
    return out.y, out


def plugin_reduce(x: float, sigma: float, stream: Stream) -> float:
    """x + sigma Z with Z standard normal."""
    return float(x + sigma * special.ndtri(stream.uniforms(1)[0]))


def plugin_batch(xs, sigma: float, rng: CounterRNG, domain: int = DOMAIN_AUX) -> Array:
    xs = np.asarray(xs, dtype=float).reshape(-1)
    u = rng.uniforms(np.arange(xs.size), 0, 1, domain)[:, 0]
    return xs + sigma * special.ndtri(u)
