"""Signed kernels S*(y|x) and their positive/negative masses p(x), q(x)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .distributions import LOG_SQRT_2PI, LogConcaveTarget, logconcave_kappa, tail_mass
from .numerics import integrate, sign_regions

Array = np.ndarray
Interval = tuple[float, float]


def _arr(x) -> Array:
    return np.asarray(x, dtype=float)


def _log_positive(s: Array) -> Array:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, np.log(np.where(s > 0, s, 1.0)), -np.inf)


@dataclass(frozen=True)
class SignedKernelSpec:
    """A conditional signed density y -> S*(y|x) with sign structure.

    `eval` and `log_pos` broadcast over numpy arrays of y and x. `window(x)`
    bounds the y-range outside of which the kernel is negligible; it drives
    sign scanning and quadrature splitting when no closed form exists.
    """

    label: str
    eval: Callable[[Array, Array], Array]
    window: Callable[[float], Interval]
    log_pos: Optional[Callable[[Array, Array], Array]] = None
    region: Optional[Callable[[float], list[Interval]]] = None
    p_closed: Optional[Callable[[float], float]] = None
    q_closed: Optional[Callable[[float], float]] = None
    dim: int = 1

    def log_positive(self, y, x) -> Array:
        if self.log_pos is not None:
            return self.log_pos(y, x)
        return _log_positive(self.eval(y, x))

    def positive_region(self, x: float) -> list[Interval]:
        if self.region is not None:
            return self.region(x)
        lo, hi = self.window(x)
        return sign_regions(lambda ys: self.eval(ys, x), lo, hi)

    def quad_points(self, x: float) -> list[float]:
        lo, hi = self.window(x)
        pts = list(np.linspace(lo, hi, 41))
        for a, b in self.positive_region(x):
            pts += [a, b]
        return [p for p in pts if math.isfinite(p)]


def _complement(regions: Sequence[Interval]) -> list[Interval]:
    out = []
    left = -math.inf
    for a, b in regions:
        if a > left:
            out.append((left, a))
        left = b
    if left < math.inf:
        out.append((left, math.inf))
    return out


def _signed_integral(k: SignedKernelSpec, x: float, intervals: Sequence[Interval]) -> float:
    f = lambda y: float(k.eval(np.array(y), np.array(x)))
    pts = k.quad_points(x)
    return sum(integrate(f, a, b, points=pts) for a, b in intervals if a < b)


def kernel_p(k: SignedKernelSpec, x: float, closed: bool = True) -> float:
    """Mass of the positive part of S*(.|x)."""
    if closed and k.p_closed is not None:
        return float(k.p_closed(x))
    if k.dim != 1:
        raise ValueError("quadrature p/q is only available for scalar kernels")
    return _signed_integral(k, x, k.positive_region(x))


def kernel_q(k: SignedKernelSpec, x: float, closed: bool = True) -> float:
    """Mass of the negative part of S*(.|x), as a nonnegative number."""
    if closed and k.q_closed is not None:
        return float(k.q_closed(x))
    if k.dim != 1:
        raise ValueError("quadrature p/q is only available for scalar kernels")
    return -_signed_integral(k, x, _complement(k.positive_region(x)))


def kernel_pq(k: SignedKernelSpec, x: float) -> tuple[float, float]:
    """(p(x), q(x)) sharing one sign scan when no closed form is available."""
    if k.p_closed is not None and k.q_closed is not None:
        return float(k.p_closed(x)), float(k.q_closed(x))
    regions = k.positive_region(x)
    return _signed_integral(k, x, regions), -_signed_integral(k, x, _complement(regions))


# --- Laplace source, Gaussian target -------------------------------------


def _phi(t: Array, s: float) -> Array:
    return np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))


def laplace_sign_halfwidth(b: float, sigma: float) -> float:
    return sigma * math.sqrt(sigma * sigma + b * b) / b


def laplace_gaussian_q(b: float, sigma: float) -> float:
    a = math.sqrt(1.0 + (sigma / b) ** 2)
    phi_a = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    return 2.0 * ((b / sigma) ** 2 * a * phi_a - float(special.ndtr(-a)))


def laplace_gaussian_kernel(b: float, sigma: float) -> SignedKernelSpec:
    """S*(y|x) = phi_sigma(y-x) (1 + b^2/sigma^2 - b^2 (y-x)^2 / sigma^4)."""
    if b <= 0 or sigma <= 0:
        raise ValueError("b and sigma must be positive")
    if sigma < b:
        raise ValueError(f"sigma={sigma} < b={b}: the Laplace-to-Gaussian kernel needs sigma >= b")
    c0 = 1.0 + (b / sigma) ** 2
    c2 = b * b / sigma**4
    half = laplace_sign_halfwidth(b, sigma)
    q = laplace_gaussian_q(b, sigma)

    def ev(y, x):
        t = _arr(y) - _arr(x)
        return _phi(t, sigma) * (c0 - c2 * t * t)

    def log_pos(y, x):
        t = _arr(y) - _arr(x)
        return -0.5 * (t / sigma) ** 2 - LOG_SQRT_2PI - math.log(sigma) + _log_positive(c0 - c2 * t * t)

    return SignedKernelSpec(
        label=f"laplace_gaussian(b={b!r},sigma={sigma!r})",
        eval=ev,
        log_pos=log_pos,
        window=lambda x: (x - 40.0 * sigma, x + 40.0 * sigma),
        region=lambda x: [(x - half, x + half)],
        p_closed=lambda x: 1.0 + q,
        q_closed=lambda x: q,
    )


def laplace_gaussian_product_kernel(b: Sequence[float], sigma: Sequence[float]) -> SignedKernelSpec:
    """Coordinatewise product of 1-D Laplace-to-Gaussian kernels on R^d.

    The positive part of a product is not the product of positive parts:
    with P_j = p_j + q_j and D_j = p_j - q_j (= 1), p = (prod P + prod D)/2.
    """
    b = [float(v) for v in b]
    sigma = [float(v) for v in sigma]
    if len(b) != len(sigma) or not b:
        raise ValueError("b and sigma must be nonempty and of equal length")
    parts = [laplace_gaussian_kernel(bj, sj) for bj, sj in zip(b, sigma)]
    d = len(parts)
    pq = [(parts[j].p_closed(0.0), parts[j].q_closed(0.0)) for j in range(d)]
    tot = math.prod(p + q for p, q in pq)
    net = math.prod(p - q for p, q in pq)

    def ev(y, x):
        y, x = _arr(y), _arr(x)
        if y.shape[-1] != d or x.shape[-1] != d:
            raise ValueError(f"expected trailing dimension {d}")
        out = np.ones(np.broadcast_shapes(y.shape, x.shape)[:-1])
        for j, kj in enumerate(parts):
            out = out * kj.eval(y[..., j], x[..., j])
        return out

    return SignedKernelSpec(
        label=f"laplace_gaussian_product(d={d})",
        eval=ev,
        window=lambda x: (-math.inf, math.inf),
        p_closed=lambda x: 0.5 * (tot + net),
        q_closed=lambda x: 0.5 * (tot - net),
        dim=d,
    )


# --- exponential / Erlang sources -----------------------------------------


def exp_logconcave_kernel(target: LogConcaveTarget) -> SignedKernelSpec:
    """S*(y|x) = exp(-psi(z)) (1 - psi'(z)/sigma) / sigma, z = (y - x - 1)/sigma."""
    s = target.sigma
    kappa = logconcave_kappa(target)
    if kappa == math.inf:
        tail = 0.0
        edge = 0.0
    else:
        tail = tail_mass(target, kappa)
        edge = float(np.exp(-target.psi(np.array(kappa)))) / s

    def ev(y, x):
        z = (_arr(y) - _arr(x) - 1.0) / s
        return np.exp(-target.psi(z)) * (1.0 - target.psi_prime(z) / s) / s

    def log_pos(y, x):
        z = (_arr(y) - _arr(x) - 1.0) / s
        return -target.psi(z) - math.log(s) + _log_positive(1.0 - target.psi_prime(z) / s)

    return SignedKernelSpec(
        label=f"exp_logconcave({target.name},sigma={s!r})",
        eval=ev,
        log_pos=log_pos,
        window=lambda x: (x + 1.0 - 60.0 * s, x + 1.0 + 60.0 * s),
        region=lambda x: [(-math.inf, s * kappa + x + 1.0)],
        p_closed=lambda x: 1.0 - tail + edge,
        q_closed=lambda x: edge - tail,
    )


def gaussian_theta_derivs(sigma: float) -> Callable[[int, Array, Array], Array]:
    """j-th theta-derivative of phi_sigma(y - theta): sigma^-j He_j(t/sigma) phi_sigma(t)."""

    def derivs(j: int, y, theta):
        t = (_arr(y) - _arr(theta)) / sigma
        h_prev, h = np.zeros_like(t), np.ones_like(t)
        for n in range(j):
            h_prev, h = h, t * h - n * h_prev
        return h * _phi(t * sigma, sigma) / sigma**j

    return derivs


def erlang_kernel(
    lam: float,
    k: int,
    target_derivs: Callable[[int, Array, Array], Array],
    window: Callable[[float], Interval] | None = None,
) -> SignedKernelSpec:
    """S*(y|x) = sum_j C(k,j) (-1)^j lam^-j d^j/dtheta^j v(y; theta) at theta = x."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    if lam <= 0:
        raise ValueError("lam must be positive")
    coef = [math.comb(k, j) * (-1.0 / lam) ** j for j in range(k + 1)]

    def ev(y, x):
        return sum(c * target_derivs(j, y, x) for j, c in enumerate(coef))

    return SignedKernelSpec(
        label=f"erlang(lam={lam!r},k={k})",
        eval=ev,
        window=window or (lambda x: (x - 60.0, x + 60.0)),
    )


# --- uniform source --------------------------------------------------------


@dataclass(frozen=True)
class UniformKernelParts:
    theta0: float
    g_plus: Callable[[Array], Array]
    g_minus: Callable[[Array], Array]
    v: Callable[[Array, Array], Array]
    dv_dtheta: Callable[[Array, Array], Array]
    window: Interval = (-1e3, 1e3)

    def identity_gap(self, ys: Array) -> float:
        """Max violation of g+(1-2t0) + g-(1+2t0) = 2v(.;1/2) + 2v(.;-1/2) - 2v(.;t0)."""
        t0 = self.theta0
        lhs = self.g_plus(ys) * (1 - 2 * t0) + self.g_minus(ys) * (1 + 2 * t0)
        rhs = 2 * self.v(ys, 0.5) + 2 * self.v(ys, -0.5) - 2 * self.v(ys, t0)
        return float(np.max(np.abs(lhs - rhs)))


def gaussian_mean_parts(
    f: Callable[[Array], Array],
    fprime: Callable[[Array], Array],
    sigma: float,
    theta0: float,
    alpha0: float | None = None,
) -> UniformKernelParts:
    """Parts for the target N(f(theta), sigma^2), with g+ = g- = v(.;1/2) + v(.;-1/2) - v(.;theta0)."""

    def v(y, th):
        return _phi(_arr(y) - f(_arr(th)), sigma)

    def dv(y, th):
        th = _arr(th)
        t = _arr(y) - f(th)
        return _phi(t, sigma) * t / sigma**2 * fprime(th)

    def g(y):
        return v(y, 0.5) + v(y, -0.5) - v(y, theta0)

    if alpha0 is None:
        grid = np.linspace(-0.5, 0.5, 1025)
        alpha0 = float(np.max(np.abs(f(grid))))
    return UniformKernelParts(theta0, g, g, v, dv, (-alpha0 - 40.0 * sigma, alpha0 + 40.0 * sigma))


def uniform_kernel(parts: UniformKernelParts, check_grid: Array | None = None) -> SignedKernelSpec:
    """Four-branch kernel on x-regions (-inf, t0-1/2], (t0-1/2, 0], (0, t0+1/2), [t0+1/2, inf)."""
    t0 = parts.theta0
    if not -0.5 <= t0 <= 0.5:
        raise ValueError("theta0 must lie in [-1/2, 1/2]")
    ys = np.linspace(*parts.window, 2001) if check_grid is None else check_grid
    gap = parts.identity_gap(ys)
    if gap > 1e-10:
        raise ValueError(f"g+/g- violate their defining identity (max gap {gap:.3e})")

    def ev(y, x):
        y, x = np.broadcast_arrays(_arr(y), _arr(x))
        out = np.empty(y.shape)
        b1 = x <= t0 - 0.5
        b2 = (x > t0 - 0.5) & (x <= 0)
        b3 = (x > 0) & (x < t0 + 0.5)
        b4 = x >= t0 + 0.5
        # derivative terms only on their own branches, so theta0 is never hit
        out[b1] = parts.g_minus(y[b1])
        out[b2] = parts.g_plus(y[b2]) - parts.dv_dtheta(y[b2], x[b2] + 0.5)
        out[b3] = parts.dv_dtheta(y[b3], x[b3] - 0.5) + parts.g_minus(y[b3])
        out[b4] = parts.g_plus(y[b4])
        return out

    return SignedKernelSpec(
        label=f"uniform(theta0={t0!r})",
        eval=ev,
        window=lambda x: parts.window,
    )


def moe_phase_kernel(sigma: float) -> SignedKernelSpec:
    """Absolute-value specialization used for mixtures of experts (z response, w input)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def ev(z, w):
        z, w = np.broadcast_arrays(_arr(z), _arr(w))
        base = 2.0 * _phi(z - 0.5, sigma) - _phi(z, sigma)
        left = z - w - 0.5
        right = z + w - 0.5
        corr = np.where(
            (w > -0.5) & (w <= 0),
            _phi(left, sigma) * left / sigma**2,
            np.where((w > 0) & (w < 0.5), _phi(right, sigma) * right / sigma**2, 0.0),
        )
        return base - corr

    return SignedKernelSpec(
        label=f"moe_phase(sigma={sigma!r})",
        eval=ev,
        window=lambda x: (-40.0 * sigma, 40.0 * sigma + 1.0),
    )
