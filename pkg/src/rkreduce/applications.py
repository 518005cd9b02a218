"""End-to-end pipelines: mixture of experts to phase retrieval, denoising, DP transform."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import distributions as D
from .reductions import _verify_uniform, ceil_n, uniform_gaussian_certificate
from .rejection import (
    BaseMeasure,
    RejectionConfig,
    echo_input,
    fixed_gaussian_base,
    gaussian_base,
    input_plus,
    laplace_base,
    logconcave_base,
    rk_batch,
)
from .rng import DOMAIN_SOURCE, CounterRNG
from .signed_kernels import SignedKernelSpec, exp_logconcave_kernel, laplace_gaussian_kernel, moe_phase_kernel

Array = np.ndarray

UNOBSERVED = "★"


def _rng(seed) -> CounterRNG:
    return seed if isinstance(seed, CounterRNG) else CounterRNG(int(seed))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


# --- data types -----------------------------------------------------------------


@dataclass(frozen=True)
class LabeledSample:
    x: Array
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, float)
        if x.ndim != 1 or not np.all(np.isfinite(x)) or not math.isfinite(self.y):
            raise ValueError("LabeledSample needs a finite 1-D x and a finite y")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class MaskedVector:
    """Entries with an observation mask; unobserved values are stored as NaN."""

    values: Array
    mask: Array

    def __post_init__(self):
        v = np.asarray(self.values, float)
        m = np.asarray(self.mask, bool)
        if v.shape != m.shape or v.ndim != 1:
            raise ValueError("values and mask must be 1-D of equal length")
        if not np.array_equal(np.isfinite(v), m):
            raise ValueError("values must be finite exactly where mask is true")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_observed(cls, values, mask) -> "MaskedVector":
        m = np.asarray(mask, bool)
        return cls(np.where(m, np.asarray(values, float), np.nan), m)

    @classmethod
    def parse(cls, tokens: Sequence[str]) -> "MaskedVector":
        vals = [math.nan if t.strip() == UNOBSERVED else float(t) for t in tokens]
        return cls(np.array(vals, float), np.array([t.strip() != UNOBSERVED for t in tokens], bool))

    def render(self) -> list[str]:
        return [repr(float(v)) if m else UNOBSERVED for v, m in zip(self.values, self.mask)]

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class DpTransformResult:
    h: float
    sigma_sq: float
    accuracy_certificate: float
    delta: float

    def to_dict(self) -> dict:
        return {"h": self.h, "sigma_sq": self.sigma_sq, "accuracy_certificate": self.accuracy_certificate,
                "delta": self.delta}


# --- mixture of experts -> phase retrieval ------------------------------------------


@dataclass(frozen=True)
class MoeSettings:
    n: int
    delta: float
    sigma: float
    M: float
    N: int
    per_sample_eps: float
    per_sample_bound: float
    constant_note: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def moe_settings(n: int, delta: float) -> MoeSettings:
    """sigma = 10 sqrt(2 log(20 n / delta)), M = 30, N = ceil(60 log(4 n / delta)).

    This is the uniform-to-Gaussian threshold with alpha1 = 1 (f = |.|) at
    eps = delta / n, one admissible choice for the otherwise free constant.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    _check_delta(delta)
    eps = delta / n
    sigma = 10.0 * math.sqrt(2.0 * math.log(20.0 * n / delta))
    N = ceil_n(60.0 * math.log(4.0 * n / delta))
    bound = uniform_gaussian_certificate(1.0, sigma, N)
    return MoeSettings(n, delta, sigma, 30.0, N, eps, bound,
                       "sigma constant instantiated from the uniform-to-Gaussian threshold with alpha0=1/2, alpha1=1")


@functools.lru_cache(maxsize=32)
def _moe_parts(sigma: float) -> tuple[SignedKernelSpec, BaseMeasure]:
    kernel = moe_phase_kernel(sigma)
    base = fixed_gaussian_base(0.0, math.sqrt(2.0) * sigma)
    if sigma < 40.0:
        # below 40 max(alpha0, alpha1) the ratio and p/q bounds are checked numerically
        _verify_uniform(kernel, base, 1.0, sigma, 21)
    return kernel, base


def moe_to_phase_retrieval(
    data: Sequence[LabeledSample],
    delta: float,
    seed=0,
    beta_bound_check: bool = False,
    beta_star: Optional[Array] = None,
) -> list[LabeledSample]:
    """Replace every response by a rejection-kernel draw; covariates pass through as-is."""
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    st = moe_settings(n, delta)
    if beta_bound_check:
        if beta_star is None:
            raise ValueError("beta_bound_check needs beta_star")
        worst = max(abs(float(s.x @ np.asarray(beta_star, float))) for s in data)
        if worst > 0.5:
            raise ValueError(f"max |<x_i, beta>| = {worst:.4g} exceeds 1/2")
    kernel, base = _moe_parts(st.sigma)
    ys = np.array([s.y for s in data], float)
    batch = rk_batch(ys, kernel, base, RejectionConfig(st.M, st.N, echo_input()), _rng(seed))
    return [LabeledSample(s.x, float(y)) for s, y in zip(data, batch.y)]


def synthetic_moe(
    n: int,
    beta_star,
    seed=0,
    gate: str = "rademacher",
    gate_vector=None,
) -> list[LabeledSample]:
    """y = R <x, beta> + Unif[-1/2, 1/2] with |<x, beta>| <= 1/2.

    Rows of x are standard normal, shrunk where needed to respect the bound.
    `gate` is "rademacher" (R independent of x) or "x_dependent"
    (R = sign <x, gate_vector>, ties to +1).
    """
    beta = np.asarray(beta_star, float)
    d = beta.size
    rng = _rng(seed).spawn(DOMAIN_SOURCE)
    u = rng.uniforms(np.arange(n), 0, d + 2, DOMAIN_SOURCE)
    x = special.ndtri(u[:, :d])
    proj = x @ beta
    scale = np.minimum(1.0, 0.5 / np.maximum(np.abs(proj), 1e-300))
    x = x * scale[:, None]
    proj = x @ beta
    if gate == "rademacher":
        r = np.where(u[:, d] < 0.5, -1.0, 1.0)
    elif gate == "x_dependent":
        gv = np.ones(d) if gate_vector is None else np.asarray(gate_vector, float)
        r = np.where(x @ gv < 0, -1.0, 1.0)
    else:
        raise ValueError(f"unknown gate {gate!r}")
    y = r * proj + (u[:, d + 1] - 0.5)
    return [LabeledSample(x[i], float(y[i])) for i in range(n)]


# --- denoising with missing entries -------------------------------------------------

# closed-form M constants for the shipped psi (valid for sigma >= 1)
_M_CONSTANTS = {"gaussian": 4.0, "logistic": 4.0, "mollified": 35.0}
M_SAFETY = 1.05


def m_lower_bound(target: D.LogConcaveTarget, kappa: Optional[float] = None, n: int = 200_001) -> float:
    """Grid value of 2 e^{psi(0)/2} sup_{z <= kappa} e^{-psi(z)/2} (1 - psi'(z)/sigma)."""
    k = D.logconcave_kappa(target) if kappa is None else kappa
    hi = min(k, 200.0)
    z = np.linspace(-200.0, hi, n)
    vals = np.exp(-0.5 * target.psi(z)) * (1.0 - target.psi_prime(z) / target.sigma)
    return 2.0 * math.exp(0.5 * target.psi0) * float(np.max(vals))


def _family(target: D.LogConcaveTarget) -> str:
    if target.eta is not None:
        return "mollified"
    return target.name


@dataclass(frozen=True)
class DenoiseSettings:
    M: float
    N: int
    tau: float
    eps: float
    base: str
    M_source: str


def denoise_parts(target: D.LogConcaveTarget, eps: float) -> tuple[SignedKernelSpec, BaseMeasure, DenoiseSettings]:
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    tau = D.logconcave_tau(target)
    if tau >= 1.0:
        raise ValueError(f"σ too small for certified mode (tau = {tau:.4g} >= 1)")
    fam = _family(target)
    if fam == "mollified":
        if target.sigma < 1.0:
            raise ValueError("σ too small for certified mode (mollified Laplace needs sigma >= 1)")
        base = laplace_base(2.0 * target.sigma, 1.0)
        M, src = _M_CONSTANTS[fam], "constant"
    else:
        base = logconcave_base(target)
        if fam in _M_CONSTANTS and target.sigma >= 1.0:
            M, src = _M_CONSTANTS[fam], "constant"
        else:
            M, src = max(1.0, M_SAFETY * m_lower_bound(target)), "grid"
    N = ceil_n(M * math.log(2.0 / eps) / (1.0 - tau))
    return exp_logconcave_kernel(target), base, DenoiseSettings(M, N, tau, eps, base.label, src)


def denoise_transform(obs: MaskedVector, target: D.LogConcaveTarget, eps: float, seed=0) -> MaskedVector:
    """Swap exponential noise for log-concave noise on the observed entries only."""
    kernel, base, st = denoise_parts(target, eps)
    out = obs.values.copy()
    idx = np.flatnonzero(obs.mask)
    if idx.size:
        cfg = RejectionConfig(st.M, st.N, input_plus(1.0))
        out[idx] = rk_batch(obs.values[idx], kernel, base, cfg, _rng(seed), idx).y
    return MaskedVector(out, obs.mask.copy())


def denoise_certificate(obs: MaskedVector, target: D.LogConcaveTarget, eps: float) -> float:
    """|Omega| (eps + tau(sigma))."""
    return int(obs.mask.sum()) * (eps + D.logconcave_tau(target))


# --- Laplace mechanism -> Gaussian mechanism ----------------------------------------


def dp_settings(b: float, delta: float) -> dict:
    _check_delta(delta)
    if not b > 0:
        raise ValueError("b must be positive")
    L = math.log(12.0 / delta)
    sigma_sq = 2.0 * b * b * L
    cert = math.sqrt(sigma_sq + 2.0 * b * b + 0.25 * b * b * delta * L**1.5)
    return {"sigma_sq": sigma_sq, "M": 2.0, "N": ceil_n(2.0 * math.log(48.0 / delta)), "certificate": cert}


def dp_transform_batch(g_out, b: float, delta: float, seed=0, indices=None) -> Array:
    """Vectorized h for many independent mechanism outputs (one stream per index)."""
    st = dp_settings(b, delta)
    sigma = math.sqrt(st["sigma_sq"])
    cfg = RejectionConfig(st["M"], st["N"], echo_input())
    g = np.asarray(g_out, float).reshape(-1)
    return rk_batch(g, laplace_gaussian_kernel(b, sigma), gaussian_base(sigma), cfg, _rng(seed), indices).y


def dp_laplace_to_gaussian(g_out: float, b: float, delta: float, seed=0, index: int = 0) -> DpTransformResult:
    """Post-process a Laplace(., b) mechanism output into an approximate Gaussian one.

    Only g_out, b and delta are consumed; neither the query nor the data are needed.
    """
    st = dp_settings(b, delta)
    h = float(dp_transform_batch([g_out], b, delta, seed, [index])[0])
    return DpTransformResult(h, st["sigma_sq"], st["certificate"], float(delta))


# --- risk transfer ----------------------------------------------------------------


def risk_gap_bound(
    tv: float,
    Lbar: float,
    p: float,
    moment_tilde: float,
    moment_hat: float,
    tail_tilde: float,
    tail_hat: float,
) -> float:
    """Lbar tv + m~^{1/p} t~^{1/q} + m^^{1/p} t^^{1/q}, 1/q = 1 - 1/p."""
    if p < 1:
        raise ValueError("p must be at least 1")
    inv_q = 1.0 - 1.0 / p
    return (Lbar * tv + moment_tilde ** (1.0 / p) * tail_tilde**inv_q
            + moment_hat ** (1.0 / p) * tail_hat**inv_q)
