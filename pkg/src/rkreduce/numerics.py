"""Adaptive quadrature and small root-finding helpers shared by every module."""

from __future__ import annotations

import math
import warnings
from typing import Callable, Iterable

import numpy as np
from scipy import integrate as _spi

ATOL = 1e-10
RTOL = 1e-8


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    points: Iterable[float] = (),
    atol: float = ATOL,
    rtol: float = RTOL,
    limit: int = 400,
) -> float:
    """Adaptive Gauss-Kronrod integral of f over [a, b], split at `points`.

    Infinite end pieces go through QUADPACK's variable substitution. Any
    convergence warning is promoted to QuadratureError.
    """
    if not a < b:
        if a == b:
            return 0.0
        raise ValueError("integration bounds must satisfy a < b")
    cuts = sorted({float(p) for p in points if a < p < b and math.isfinite(p)})
    edges = [a, *cuts, b]
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == hi:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", _spi.IntegrationWarning)
            try:
                val, e = _spi.quad(f, lo, hi, epsabs=atol, epsrel=rtol, limit=limit)
            except _spi.IntegrationWarning as w:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    _, e = _spi.quad(f, lo, hi, epsabs=atol, epsrel=rtol, limit=limit)
                raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge: {w}", e) from None
        total += val
        err += e
    return total


def sign_regions(
    g: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    n: int = 4001,
    tol: float = 1e-10,
) -> list[tuple[float, float]]:
    """Intervals inside [lo, hi] where g >= 0, found on a grid and refined by bisection.

    Ends that touch lo or hi are reported as -inf / +inf, since every caller
    scans far enough out that the sign is settled there.
    """
    ys = np.linspace(lo, hi, n)
    vals = np.asarray(g(ys), dtype=float)
    nz = np.flatnonzero(vals != 0)
    if nz.size == 0:
        return [(-math.inf, math.inf)]
    # exact zeros are underflow, not sign information: carry the nearest sign forward
    idx = np.maximum.accumulate(np.where(vals != 0, np.arange(n), -1))
    idx[idx < 0] = nz[0]
    pos = vals[idx] > 0
    out: list[tuple[float, float]] = []
    start = -math.inf if pos[0] else None
    for i in range(1, n):
        if pos[i] == pos[i - 1]:
            continue
        a, b = ys[i - 1], ys[i]
        pa = pos[i - 1]
        while b - a > tol * max(1.0, abs(a)):
            m = 0.5 * (a + b)
            gm = float(g(np.array([m]))[0])
            if gm == 0 or (gm > 0) == pa:
                a = m
            else:
                b = m
        edge = float(0.5 * (a + b))
        if pos[i]:
            start = edge
        else:
            out.append((start, edge))
            start = None
    if start is not None:
        out.append((start, math.inf))
    return out
