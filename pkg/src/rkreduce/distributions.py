"""One-dimensional densities, samplers and the log-concave psi machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import special

from .numerics import integrate
from .rng import Stream

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
PI_SQRT3 = math.pi / math.sqrt(3.0)

Array = np.ndarray


def _as_array(x) -> Array:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ScalarDensity:
    """A 1-D density with support, log-density and a uniform-driven sampler.

    `from_uniforms` maps an (n, n_uniforms) array of U(0,1) draws to n variates;
    every sampler in the package goes through it, so scalar and batch paths
    consume the same random numbers.
    """

    name: str
    logpdf: Callable[[Array], Array]
    from_uniforms: Callable[[Array], Array]
    n_uniforms: int
    support: tuple[float, float] = (-math.inf, math.inf)
    mean_hint: Optional[float] = None
    sd_hint: Optional[float] = None
    cdf: Optional[Callable[[Array], Array]] = None
    breakpoints: tuple[float, ...] = ()

    def pdf(self, x) -> Array:
        x = _as_array(x)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.exp(self.logpdf(x))
        return np.where(inside, out, 0.0)

    def sampler(self, stream: Stream) -> float:
        return float(self.from_uniforms(stream.uniforms(self.n_uniforms)[None, :])[0])

    def sample(self, rng, index, domain: int) -> Array:
        """Vectorized draws, one per stream index."""
        u = rng.uniforms(index, 0, self.n_uniforms, domain)
        return self.from_uniforms(u)

    def quad_points(self) -> list[float]:
        pts = list(self.breakpoints)
        if self.mean_hint is not None:
            s = self.sd_hint or 1.0
            pts += [self.mean_hint + k * s for k in (-8, -2, 0, 2, 8)]
        return pts

    def mass(self, a: float, b: float) -> float:
        if self.cdf is not None:
            return float(self.cdf(np.array(b)) - self.cdf(np.array(a)))
        return density_quadrature(self, a, b)


def density_quadrature(d: ScalarDensity, a: float, b: float) -> float:
    """Integral of d.pdf over [a, b] (clipped to the support)."""
    if not a < b:
        raise ValueError("need a < b")
    lo, hi = max(a, d.support[0]), min(b, d.support[1])
    if not lo < hi:
        return 0.0
    return integrate(lambda t: float(d.pdf(t)), lo, hi, points=d.quad_points())


def gaussian(mu: float = 0.0, sd: float = 1.0) -> ScalarDensity:
    if sd <= 0:
        raise ValueError("sd must be positive")
    return ScalarDensity(
        name=f"normal({mu!r},{sd!r})",
        logpdf=lambda x: -0.5 * ((_as_array(x) - mu) / sd) ** 2 - LOG_SQRT_2PI - math.log(sd),
        from_uniforms=lambda u: mu + sd * special.ndtri(u[:, 0]),
        n_uniforms=1,
        mean_hint=mu,
        sd_hint=sd,
        cdf=lambda x: special.ndtr((_as_array(x) - mu) / sd),
    )


def _laplace_ppf(u: Array) -> Array:
    # inverse CDF of the standard Laplace law, accurate in both tails
    return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))


def laplace(mu: float = 0.0, b: float = 1.0) -> ScalarDensity:
    if b <= 0:
        raise ValueError("b must be positive")

    def cdf(x):
        t = (_as_array(x) - mu) / b
        return np.where(t < 0, 0.5 * np.exp(np.minimum(t, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(t, 0.0)))

    return ScalarDensity(
        name=f"laplace({mu!r},{b!r})",
        logpdf=lambda x: -np.abs(_as_array(x) - mu) / b - math.log(2.0 * b),
        from_uniforms=lambda u: mu + b * _laplace_ppf(u[:, 0]),
        n_uniforms=1,
        mean_hint=mu,
        sd_hint=math.sqrt(2.0) * b,
        cdf=cdf,
        breakpoints=(mu,),
    )


def shifted_exponential(theta: float = 0.0) -> ScalarDensity:
    """Exp(1) shifted to have mean theta: density exp(-(x - theta + 1)) on x >= theta - 1."""
    lo = theta - 1.0

    def logpdf(x):
        x = _as_array(x)
        with np.errstate(invalid="ignore"):
            return np.where(x >= lo, -(x - lo), -np.inf)

    return ScalarDensity(
        name=f"shifted_exponential({theta!r})",
        logpdf=logpdf,
        from_uniforms=lambda u: lo - np.log(u[:, 0]),
        n_uniforms=1,
        support=(lo, math.inf),
        mean_hint=theta,
        sd_hint=1.0,
        cdf=lambda x: np.where(_as_array(x) >= lo, -np.expm1(-np.maximum(_as_array(x) - lo, 0.0)), 0.0),
        breakpoints=(lo,),
    )


def erlang(theta: float = 0.0, lam: float = 1.0, k: int = 1) -> ScalarDensity:
    """Erlang(lam, k) location family: density of theta plus a sum of k Exp(lam) draws."""
    if k < 1 or lam <= 0:
        raise ValueError("need k >= 1 and lam > 0")
    logc = k * math.log(lam) - math.lgamma(k)

    def logpdf(x):
        t = _as_array(x) - theta
        with np.errstate(divide="ignore", invalid="ignore"):
            v = logc + (k - 1) * np.log(np.where(t > 0, t, 1.0)) - lam * t
        if k == 1:
            return np.where(t >= 0, v, -np.inf)
        return np.where(t > 0, v, -np.inf)

    return ScalarDensity(
        name=f"erlang({theta!r},{lam!r},{k})",
        logpdf=logpdf,
        from_uniforms=lambda u: theta - np.log(u[:, :k]).sum(axis=1) / lam,
        n_uniforms=k,
        support=(theta, math.inf),
        mean_hint=theta + k / lam,
        sd_hint=math.sqrt(k) / lam,
        cdf=lambda x: special.gammainc(k, lam * np.maximum(_as_array(x) - theta, 0.0)),
        breakpoints=(theta,),
    )


def uniform_location(theta: float = 0.0) -> ScalarDensity:
    """Uniform on [theta - 1/2, theta + 1/2]."""
    lo, hi = theta - 0.5, theta + 0.5

    def logpdf(x):
        x = _as_array(x)
        return np.where((x >= lo) & (x <= hi), 0.0, -np.inf)

    return ScalarDensity(
        name=f"uniform_location({theta!r})",
        logpdf=logpdf,
        from_uniforms=lambda u: lo + u[:, 0],
        n_uniforms=1,
        support=(lo, hi),
        mean_hint=theta,
        sd_hint=math.sqrt(1.0 / 12.0),
        cdf=lambda x: np.clip(_as_array(x) - lo, 0.0, 1.0),
        breakpoints=(lo, hi),
    )


def logistic(mu: float = 0.0, sd: float = 1.0) -> ScalarDensity:
    """Logistic law parameterized by mean and standard deviation."""
    s = sd / PI_SQRT3

    def logpdf(x):
        a = (_as_array(x) - mu) / s
        return -a - 2.0 * np.logaddexp(0.0, -a) - math.log(s)

    return ScalarDensity(
        name=f"logistic({mu!r},{sd!r})",
        logpdf=logpdf,
        from_uniforms=lambda u: mu + s * (np.log(u[:, 0]) - np.log1p(-u[:, 0])),
        n_uniforms=1,
        mean_hint=mu,
        sd_hint=sd,
        cdf=lambda x: special.expit((_as_array(x) - mu) / s),
    )


# --- log-concave targets -------------------------------------------------


@dataclass(frozen=True)
class LogConcaveTarget:
    """Location-scale family v(y; theta) = exp(-psi((y - theta)/sigma)) / sigma.

    `psi_prime_sup` is the supremum of psi' when known in closed form, and
    `sup_attained` says whether psi' ever reaches it; kappa uses both to
    decide the infinite branch exactly instead of by floating-point luck.
    `z_from_uniforms` samples the standardized density exp(-psi).
    """

    name: str
    psi: Callable[[Array], Array]
    psi_prime: Callable[[Array], Array]
    sigma: float
    z_from_uniforms: Callable[[Array], Array]
    n_uniforms: int = 1
    psi_prime_sup: Optional[float] = None
    sup_attained: bool = False
    unit_variance: bool = True
    eta: Optional[float] = None
    psi0: float = field(init=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "psi0", float(self.psi(np.array(0.0))))

    def with_sigma(self, sigma: float) -> "LogConcaveTarget":
        return replace(self, sigma=sigma)

    def logv(self, y, theta) -> Array:
        return -self.psi((_as_array(y) - theta) / self.sigma) - math.log(self.sigma)

    def v(self, y, theta) -> Array:
        return np.exp(self.logv(y, theta))

    def dv_dtheta(self, y, theta) -> Array:
        z = (_as_array(y) - theta) / self.sigma
        return np.exp(-self.psi(z)) * self.psi_prime(z) / self.sigma**2

    def standard_density(self) -> ScalarDensity:
        """The law of Z with density exp(-psi(z))."""
        return ScalarDensity(
            name=f"{self.name}-standard",
            logpdf=lambda z: -self.psi(_as_array(z)),
            from_uniforms=self.z_from_uniforms,
            n_uniforms=self.n_uniforms,
            mean_hint=0.0,
            sd_hint=1.0,
        )

    def density(self, theta: float = 0.0) -> ScalarDensity:
        """v(.; theta) as a ScalarDensity."""
        s = self.sigma
        return ScalarDensity(
            name=f"{self.name}(theta={theta!r},sigma={s!r})",
            logpdf=lambda y: self.logv(y, theta),
            from_uniforms=lambda u: theta + s * self.z_from_uniforms(u),
            n_uniforms=self.n_uniforms,
            mean_hint=theta,
            sd_hint=s,
        )


def gaussian_psi(sigma: float = 1.0) -> LogConcaveTarget:
    return LogConcaveTarget(
        name="gaussian",
        psi=lambda z: 0.5 * _as_array(z) ** 2 + LOG_SQRT_2PI,
        psi_prime=lambda z: _as_array(z) * 1.0,
        sigma=sigma,
        z_from_uniforms=lambda u: special.ndtri(u[:, 0]),
        psi_prime_sup=math.inf,
        sup_attained=False,
    )


def logistic_psi(sigma: float = 1.0) -> LogConcaveTarget:
    """Unit-variance logistic psi; psi' = (pi/sqrt3) tanh(a/2) with a = pi z / sqrt3."""

    def psi(z):
        a = PI_SQRT3 * _as_array(z)
        return a + 2.0 * np.logaddexp(0.0, -a) - math.log(PI_SQRT3)

    return LogConcaveTarget(
        name="logistic",
        psi=psi,
        psi_prime=lambda z: PI_SQRT3 * np.tanh(0.5 * PI_SQRT3 * _as_array(z)),
        sigma=sigma,
        z_from_uniforms=lambda u: (np.log(u[:, 0]) - np.log1p(-u[:, 0])) / PI_SQRT3,
        psi_prime_sup=PI_SQRT3,
        sup_attained=False,
    )


def _mollified_logs(z: Array, eta: float) -> tuple[Array, Array]:
    # log of the two halves of (Laplace * N(0, eta^2))(z); log_ndtr keeps the
    # Gaussian tails finite where e^{+-z} alone would overflow
    z = _as_array(z)
    h = 0.5 * eta * eta - math.log(2.0)
    l1 = h + z + special.log_ndtr(-(z + eta * eta) / eta)
    l2 = h - z + special.log_ndtr(-(eta * eta - z) / eta)
    return l1, l2


def mollified_laplace_psi(eta: float, sigma: float = 1.0) -> LogConcaveTarget:
    """psi_eta = -log density of Y + eta G, Y ~ Laplace(0, 1), G ~ N(0, 1).

    This law has variance 2 + eta^2, so it is flagged as not unit-variance.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")

    def psi(z):
        l1, l2 = _mollified_logs(z, eta)
        return -np.logaddexp(l1, l2)

    def psi_prime(z):
        l1, l2 = _mollified_logs(z, eta)
        return np.tanh(0.5 * (l2 - l1))

    return LogConcaveTarget(
        name=f"mollified_laplace(eta={eta!r})",
        psi=psi,
        psi_prime=psi_prime,
        sigma=sigma,
        z_from_uniforms=lambda u: _laplace_ppf(u[:, 0]) + eta * special.ndtri(u[:, 1]),
        n_uniforms=2,
        psi_prime_sup=1.0,
        sup_attained=False,
        unit_variance=False,
        eta=eta,
    )


KAPPA_BRACKET = 50.0
KAPPA_MAX_DOUBLINGS = 20


def logconcave_kappa(target: LogConcaveTarget) -> float:
    """inf{z : psi'(z) = sigma}, or +inf when psi' stays below sigma."""
    s = target.sigma
    if target.psi_prime_sup is not None and not target.sup_attained and s >= target.psi_prime_sup:
        return math.inf
    dpsi = lambda z: float(target.psi_prime(np.array(z)))
    lo, hi = -KAPPA_BRACKET, KAPPA_BRACKET
    for _ in range(KAPPA_MAX_DOUBLINGS):
        if dpsi(hi) >= s:
            break
        hi *= 2.0
    if dpsi(hi) < s - 1e-12:
        return math.inf
    for _ in range(KAPPA_MAX_DOUBLINGS):
        if dpsi(lo) < s:
            break
        lo *= 2.0
    if dpsi(lo) >= s:
        return lo
    # bisection on the predicate psi' >= sigma lands on the left end of any flat piece
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return hi
        if dpsi(mid) >= s:
            hi = mid
        else:
            lo = mid


def tail_mass(target: LogConcaveTarget, z0: float) -> float:
    """Integral of exp(-psi) over [z0, inf)."""
    if z0 == math.inf:
        return 0.0
    f = lambda z: float(np.exp(-target.psi(np.array(z))))
    return integrate(f, z0, math.inf, points=[z0 + 1.0, z0 + 5.0, z0 + 20.0])


def logconcave_tau(target: LogConcaveTarget, kappa: Optional[float] = None) -> float:
    k = logconcave_kappa(target) if kappa is None else kappa
    if k == math.inf:
        return 0.0
    return 2.0 * tail_mass(target, k) + (2.0 / target.sigma) * float(np.exp(-target.psi(np.array(k))))
