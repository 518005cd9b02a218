"""Counter-based random numbers (Philox4x32-10), vectorized over numpy arrays.

Every draw is a pure function of (key, stream index, counter), so a sample's
random numbers do not depend on batch layout, thread count or on which other
rows are processed in the same run.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# counter word 1 carries a domain tag so that unrelated uses of one key never collide
DOMAIN_RK = 0
DOMAIN_SOURCE = 1
DOMAIN_AUX = 2
DOMAIN_SPLIT = 0x5EED


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = 10):
    """Philox4x32 block function on uint64 arrays holding 32-bit words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in (c0, c1, c2, c3))
    k0 = np.asarray(k0, dtype=np.uint64) & _MASK
    k1 = np.asarray(k1, dtype=np.uint64) & _MASK
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _S32) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return c0, c1, c2, c3


def _to_open_unit(hi, lo):
    # 53 bits from two words, shifted off zero: values lie strictly inside (0, 1)
    k = ((hi >> np.uint64(5)) << np.uint64(26)) | (lo >> np.uint64(6))
    return (k.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def _split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


class CounterRNG:
    """Keyed counter-based generator; `spawn` derives independent child keys."""

    def __init__(self, seed: int = 0, _key: tuple[int, int] | None = None):
        self.seed = int(seed)
        self.key = _key if _key is not None else _split_seed(seed)

    def spawn(self, tag: int) -> "CounterRNG":
        tag = int(tag) & 0xFFFFFFFFFFFFFFFF
        w = philox4x32(tag & 0xFFFFFFFF, DOMAIN_SPLIT, tag >> 32, 0, *self.key)
        return CounterRNG(self.seed, (int(w[0]), int(w[1])))

    def block(self, index, counter, domain: int = DOMAIN_RK) -> np.ndarray:
        """Two uniforms in (0, 1) per (index, counter) pair, shape (n, 2)."""
        index = np.atleast_1d(np.asarray(index, dtype=np.uint64))
        counter = np.broadcast_to(np.asarray(counter, dtype=np.uint64), index.shape)
        w0, w1, w2, w3 = philox4x32(counter, np.uint64(domain), index & _MASK, index >> _S32, *self.key)
        return np.stack([_to_open_unit(w0, w1), _to_open_unit(w2, w3)], axis=-1)

    def uniforms(self, index, start: int, count: int, domain: int = DOMAIN_RK) -> np.ndarray:
        """`count` uniforms per index, taken from counters start, start+1, ...; shape (n, count)."""
        index = np.atleast_1d(np.asarray(index, dtype=np.uint64))
        nblocks = (count + 1) // 2
        cols = [self.block(index, start + j, domain) for j in range(nblocks)]
        out = np.concatenate(cols, axis=-1) if cols else np.empty((index.size, 0))
        return out[:, :count]

    def stream(self, index: int, domain: int = DOMAIN_AUX) -> "Stream":
        return Stream(self, index, domain)


class Stream:
    """Sequential view of one (key, index) stream, for scalar code paths."""

    def __init__(self, rng: CounterRNG, index: int, domain: int):
        self.rng = rng
        self.index = int(index)
        self.domain = domain
        self.counter = 0

    def uniforms(self, count: int) -> np.ndarray:
        u = self.rng.uniforms(self.index, self.counter, count, self.domain)[0]
        self.counter += (count + 1) // 2
        return u

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])
