"""The rejection-kernel sampler, its exact output law and the deficiency bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .distributions import LOG_SQRT_2PI, LogConcaveTarget
from .numerics import integrate
from .rng import DOMAIN_RK, CounterRNG, Stream
from .signed_kernels import SignedKernelSpec, kernel_p

Array = np.ndarray

RATIO_SLACK = 1e-9
_LOG_SLACK = math.log1p(RATIO_SLACK)


class MViolated(RuntimeError):
    """Raised when S+(y|x) / (M P(y|x)) exceeds one, which voids the guarantee."""

    def __init__(self, x: float, y: float, ratio: float, M: float):
        super().__init__(f"M violated: ratio S+/(M*P) = {ratio:.6g} > 1 at x={x!r}, y={y!r} (M={M!r})")
        self.x, self.y, self.ratio, self.M = x, y, ratio, M


@dataclass(frozen=True)
class BaseMeasure:
    """Proposal family P(.|x), sampled by transforming U(0,1) draws."""

    label: str
    logpdf: Callable[[Array, Array], Array]
    from_uniforms: Callable[[Array, Array], Array]
    n_uniforms: int = 1

    def pdf(self, y, x) -> Array:
        return np.exp(self.logpdf(np.asarray(y, float), np.asarray(x, float)))

    def sample(self, x: float, stream: Stream) -> float:
        u = stream.uniforms(self.n_uniforms)[None, :]
        return float(self.from_uniforms(np.array([x], float), u)[0])


def gaussian_base(sd: float, shift: float = 0.0) -> BaseMeasure:
    """N(x + shift, sd^2)."""
    c = LOG_SQRT_2PI + math.log(sd)
    return BaseMeasure(
        label=f"normal(x+{shift!r},{sd!r}^2)",
        logpdf=lambda y, x: -0.5 * ((y - x - shift) / sd) ** 2 - c,
        from_uniforms=lambda x, u: x + shift + sd * special.ndtri(u[:, 0]),
    )


def fixed_gaussian_base(mean: float, sd: float) -> BaseMeasure:
    """N(mean, sd^2), the same for every x."""
    c = LOG_SQRT_2PI + math.log(sd)
    return BaseMeasure(
        label=f"normal({mean!r},{sd!r}^2)",
        logpdf=lambda y, x: -0.5 * ((y - mean) / sd) ** 2 - c + 0.0 * x,
        from_uniforms=lambda x, u: mean + sd * special.ndtri(u[:, 0]) + 0.0 * x,
    )


def laplace_base(scale: float, shift: float = 0.0) -> BaseMeasure:
    """Laplace centred at x + shift with the given scale."""
    c = math.log(2.0 * scale)
    return BaseMeasure(
        label=f"laplace(x+{shift!r},{scale!r})",
        logpdf=lambda y, x: -np.abs(y - x - shift) / scale - c,
        from_uniforms=lambda x, u: x + shift + scale * np.where(
            u[:, 0] < 0.5, np.log(2.0 * u[:, 0]), -np.log(2.0 * (1.0 - u[:, 0]))
        ),
    )


def logconcave_base(target: LogConcaveTarget) -> BaseMeasure:
    """(1/2sigma) exp(-psi((y - x - 1)/(2 sigma))): the target shape at twice the scale."""
    s2 = 2.0 * target.sigma
    return BaseMeasure(
        label=f"{target.name}(x+1, scale {s2!r})",
        logpdf=lambda y, x: -target.psi((y - x - 1.0) / s2) - math.log(s2),
        from_uniforms=lambda x, u: x + 1.0 + s2 * target.z_from_uniforms(u),
        n_uniforms=target.n_uniforms,
    )


@dataclass(frozen=True)
class Y0Policy:
    kind: str = "echo_input"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "echo_input", "input_plus"):
            raise ValueError(f"unknown y0 policy {self.kind!r}")

    def apply(self, x: Array) -> Array:
        x = np.asarray(x, float)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "echo_input":
            return x.copy()
        return x + self.value

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


def constant(value: float) -> Y0Policy:
    return Y0Policy("constant", float(value))


def echo_input() -> Y0Policy:
    return Y0Policy("echo_input")


def input_plus(shift: float) -> Y0Policy:
    return Y0Policy("input_plus", float(shift))


@dataclass(frozen=True)
class RejectionConfig:
    M: float
    N: int
    y0: Y0Policy = Y0Policy()

    def __post_init__(self):
        if not self.M >= 1:
            raise ValueError("M must be at least 1")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")


@dataclass(frozen=True)
class RkTrace:
    accepted: bool
    iterations_used: int
    output: float


@dataclass
class RkBatch:
    y: Array
    accepted: Array
    iterations: Array

    def traces(self) -> list[RkTrace]:
        return [RkTrace(bool(a), int(i), float(v)) for v, a, i in zip(self.y, self.accepted, self.iterations)]

    def summary(self) -> dict:
        n = int(self.y.size)
        return {
            "count": n,
            "accepted": int(self.accepted.sum()),
            "acceptance_fraction": float(self.accepted.mean()) if n else float("nan"),
            "mean_iterations": float(self.iterations.mean()) if n else float("nan"),
            "max_iterations": int(self.iterations.max()) if n else 0,
        }


def rk_batch(
    xs,
    kernel: SignedKernelSpec,
    base: BaseMeasure,
    cfg: RejectionConfig,
    rng: CounterRNG,
    indices: Optional[Sequence[int]] = None,
    domain: int = DOMAIN_RK,
) -> RkBatch:
    """Run the rejection kernel independently on every x.

    Sample i reads its uniforms from stream `indices[i]` only: attempt t uses
    counters t*B, ..., t*B + B - 1 with B = ceil((1 + base.n_uniforms)/2); the
    first uniform is the acceptance draw, the rest feed the base sampler.
    Results therefore do not depend on how rows are batched.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    n = xs.size
    idx = np.arange(n, dtype=np.uint64) if indices is None else np.asarray(indices, dtype=np.uint64).reshape(-1)
    if idx.size != n:
        raise ValueError("indices and xs must have equal length")
    per = 1 + base.n_uniforms
    stride = (per + 1) // 2
    log_m = math.log(cfg.M)
    out = cfg.y0.apply(xs)
    accepted = np.zeros(n, dtype=bool)
    iters = np.full(n, int(cfg.N), dtype=np.int64)
    active = np.arange(n)
    for t in range(int(cfg.N)):
        if active.size == 0:
            break
        xa = xs[active]
        u = rng.uniforms(idx[active], t * stride, per, domain)
        y = base.from_uniforms(xa, u[:, 1:])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_ratio = kernel.log_positive(y, xa) - log_m - base.logpdf(y, xa)
        bad = log_ratio > _LOG_SLACK
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise MViolated(float(xa[j]), float(y[j]), float(np.exp(log_ratio[j])), cfg.M)
        ok = np.log(u[:, 0]) <= log_ratio
        hit = active[ok]
        out[hit] = y[ok]
        accepted[hit] = True
        iters[hit] = t + 1
        active = active[~ok]
    return RkBatch(out, accepted, iters)


def rk_sample(
    x: float,
    kernel: SignedKernelSpec,
    base: BaseMeasure,
    cfg: RejectionConfig,
    stream: Stream,
) -> RkTrace:
    """One run of the rejection kernel on input x, drawing from `stream`'s index."""
    b = rk_batch([x], kernel, base, cfg, stream.rng, [stream.index], DOMAIN_RK)
    return b.traces()[0]


def rk_output_law(
    x: float,
    kernel: SignedKernelSpec,
    base: BaseMeasure,
    cfg: RejectionConfig,
    C: tuple[float, float],
    p: Optional[float] = None,
) -> float:
    """Exact probability that the output lands in the closed interval C."""
    a, b = C
    p = kernel_p(kernel, x) if p is None else p
    g = (1.0 - p / cfg.M) ** cfg.N
    mass = 0.0
    f = lambda y: float(kernel.eval(np.array(y), np.array(x)))
    pts = kernel.quad_points(x)
    for lo, hi in kernel.positive_region(x):
        lo, hi = max(lo, a), min(hi, b)
        if lo < hi:
            mass += integrate(f, lo, hi, points=pts)
    y0 = float(cfg.y0.apply(np.array([x]))[0])
    return mass / p * (1.0 - g) + (g if a <= y0 <= b else 0.0)


def deficiency_bound(inf_p: float, sup_abs_dev: float, varsigma: float, M: float, N: int) -> float:
    """2 exp(-N inf_p / M) + varsigma + sup_abs_dev."""
    if not 0 < inf_p <= M:
        raise ValueError("inf_p must lie in (0, M]")
    return 2.0 * math.exp(-N * inf_p / M) + varsigma + sup_abs_dev


def max_ratio(kernel: SignedKernelSpec, base: BaseMeasure, xs, ys) -> float:
    """sup over the (x, y) grid of S+(y|x) / P(y|x)."""
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float), indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lr = kernel.log_positive(Y, X) - base.logpdf(Y, X)
    lr = lr[np.isfinite(lr)]
    return float(np.exp(lr.max())) if lr.size else 0.0
