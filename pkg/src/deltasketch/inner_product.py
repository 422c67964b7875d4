"""Inner products <f, g> +- eps ||f||_1 ||g||_1 for two alpha-property streams.

Each stream is sampled on the interval schedule of the L1 estimator (with
an exact position counter): interval r = [s^r, s^(r+2)) samples unit
updates at rate s^-r, and only the two intervals containing the current
position are kept.  A sampled update goes, unscaled, into a k-bucket
Countsketch vector of its interval.  Before hashing, the item identity is
reduced modulo a random prime P_r; sampled identities stay distinct with
high probability while the hash input shrinks to O(log s) bits.  Both
streams must use the same primes and hash functions, which is what
``IPSharedSeed`` provides.  The estimate is the dot product of the two
bucket vectors, rescaled by both sampling rates.
"""

from __future__ import annotations

import math

import numpy as np

from .hashing import (
    MERSENNE61,
    KWiseHash,
    SignHash,
    bits_low_first,
    derive_seed,
    mod_reduce_streaming,
    rng_for,
    sample_prime,
)
from .l1_estimator import pow2ceil
from .sampling import LevelScheduler

_PRIME_CAP = MERSENNE61 - 1


class IntervalMismatch(ValueError):
    """The two sketches share no live interval."""


class IPSharedSeed:
    """Primes and hash functions per interval index, shared by both streams."""

    def __init__(
        self,
        n: int,
        eps: float,
        alpha: float = 1.0,
        seed: int = 0,
        c_k: float = 8.0,
        s: int | None = None,
        c_s: float = 1.0,
    ):
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        self.n = n
        self.eps = eps
        self.alpha = alpha
        self.seed = int(seed)
        self.k = max(1, math.ceil(c_k / eps))
        if s is None:
            s = pow2ceil(c_s * alpha**2 * math.log2(n) ** 7 / eps**10)
        self.s = int(s)
        self._levels: dict[int, tuple[int, KWiseHash, SignHash]] = {}

    def prime_range(self) -> tuple[int, int]:
        D = 100 * self.s**4
        lo, hi = D, D**3
        hi = min(hi, _PRIME_CAP)
        lo = min(lo, hi // 2)
        return lo, hi

    def level(self, r: int) -> tuple[int, KWiseHash, SignHash]:
        """(P_r, h_r, sigma_r) for interval r, created on first use."""
        if r not in self._levels:
            lo, hi = self.prime_range()
            prime = sample_prime(lo, hi, rng_for(self.seed, "ip-prime", r)).value
            h = KWiseHash(4, self.k, derive_seed(self.seed, "ip-h", r), domain=prime)
            g = SignHash(4, derive_seed(self.seed, "ip-g", r))
            self._levels[r] = (prime, h, g)
        return self._levels[r]


class IPSketch:
    """Sampled Countsketch vectors for the (at most two) live intervals."""

    def __init__(self, shared: IPSharedSeed, seed: int = 0):
        self.shared = shared
        self.scheduler = LevelScheduler(shared.s, mode="exact")
        self.rng = rng_for(seed, "ip-sample")
        self.cs: dict[int, np.ndarray] = {}
        self.samples: dict[int, int] = {}
        self.retired: list[tuple[int, int]] = []
        self.peak_counter = 0

    def update(self, index: int, delta: int) -> None:
        """One update, reducing the identity bit by bit as the paper does."""
        self._update(np.array([index]), np.array([delta]), streaming=True)

    def update_many(self, index, delta) -> None:
        self._update(np.asarray(index, dtype=np.int64), np.asarray(delta, dtype=np.int64), streaming=False)

    def _update(self, index: np.ndarray, delta: np.ndarray, streaming: bool) -> None:
        if len(delta) == 0:
            return
        if np.any(delta == 0):
            raise ValueError("zero delta")
        n = self.shared.n
        for seg in self.scheduler.advance(np.abs(delta)):
            for r in seg.retired:
                self.retired.append((r, self.samples.pop(r)))
                del self.cs[r]
            for r in seg.spawned:
                self.cs[r] = np.zeros(self.shared.k, dtype=np.int64)
                self.samples[r] = 0
            idx = index[seg.k_lo : seg.k_hi]
            signed = np.sign(delta[seg.k_lo : seg.k_hi]) * seg.counts
            # units per (item, sign) in this stretch
            ins = np.bincount(idx, weights=np.maximum(signed, 0), minlength=n).astype(np.int64)
            dels = np.bincount(idx, weights=np.maximum(-signed, 0), minlength=n).astype(np.int64)
            items = np.flatnonzero(ins + dels)
            for r in seg.live:
                rate = self.scheduler.rate(r)
                if rate >= 1.0:
                    kept = ins[items] - dels[items]
                    n_kept = int(ins[items].sum() + dels[items].sum())
                else:
                    a = self.rng.binomial(ins[items], rate)
                    b = self.rng.binomial(dels[items], rate)
                    kept, n_kept = a - b, int(a.sum() + b.sum())
                self.samples[r] += n_kept
                mask = kept != 0
                if not mask.any():
                    continue
                prime, h, g = self.shared.level(r)
                ids = items[mask]
                if streaming:
                    reduced = np.array([mod_reduce_streaming(bits_low_first(int(i)), prime) for i in ids])
                else:
                    reduced = ids % prime
                np.add.at(self.cs[r], h(reduced), g(reduced) * kept[mask])
                self.peak_counter = max(self.peak_counter, int(np.abs(self.cs[r]).max()))

    def consume(self, stream) -> "IPSketch":
        self.update_many(stream.index, stream.delta)
        return self

    def live(self) -> tuple:
        return tuple(sorted(self.cs))

    def max_counter_bits(self) -> int:
        return int(self.peak_counter).bit_length()

    def samples_stored(self) -> int:
        return int(sum(self.samples.values()))


def ip_update(sk: IPSketch, index: int, delta: int) -> None:
    sk.update(index, delta)


def ip_estimate(sk_f: IPSketch, sk_g: IPSketch, shared: IPSharedSeed | None = None) -> float:
    """Rescaled dot product of the oldest interval live in both sketches."""
    if sk_f.shared is not sk_g.shared or (shared is not None and shared is not sk_f.shared):
        raise ValueError("both sketches must be driven by one IPSharedSeed")
    if not sk_f.cs or not sk_g.cs:
        # an empty stream has f = 0
        return 0.0
    common = set(sk_f.cs) & set(sk_g.cs)
    if not common:
        raise IntervalMismatch(f"live intervals {sk_f.live()} and {sk_g.live()} do not overlap")
    r = min(common)
    rate = sk_f.scheduler.rate(r)
    return float(np.dot(sk_f.cs[r].astype(np.float64), sk_g.cs[r].astype(np.float64))) / (rate * rate)
