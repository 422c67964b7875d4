"""(1 +- eps) estimation of ||f||_1 for alpha-property streams.

Strict turnstile: the signed running sum equals ||f||_1, so it suffices to
count it from a uniform sample.  Level j samples each unit update with
probability s^-j while a Morris counter's estimate of the position sits in
[s^j, s^(j+2)); at the end the level that has lived longest is rescaled.
By the alpha-property the prefix it missed is a negligible share of the
stream, and it holds about s^2 samples, so its counters need only
O(log(alpha/eps) + log log n) bits.

General turnstile: the 1-stable sketch y = A f with Cauchy entries, read
out through the median |y'_i| of a few extra rows and the
-ln(mean cos(y_i / y'_med)) correction.  Each row keeps a binomially
thinned count of its integerised input instead of the exact value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hashing import derive_seed, pairwise_seeds, rng_for, stable_vector
from .sampling import LevelScheduler, MorrisCounter, morris_estimate, morris_tick  # noqa: F401

_SATURATION = 1 << 62


def pow2ceil(x: float) -> int:
    return 1 << max(1, math.ceil(math.log2(max(2.0, x))))


def default_level_base(alpha: float, eps: float, delta: float, n: int, c_lvl: float = 1.0) -> int:
    """s = c * alpha^2 log^3 n / (delta eps^2), rounded up to a power of two."""
    return pow2ceil(c_lvl * alpha**2 * math.log2(n) ** 3 / (delta * eps**2))


@dataclass(frozen=True)
class StrictL1Config:
    n: int
    eps: float
    delta: float = 0.1
    alpha: float = 1.0
    c_lvl: float = 1.0
    s: int | None = None
    clock: str = "morris"

    @property
    def base(self) -> int:
        if self.s is not None:
            return self.s
        return default_level_base(self.alpha, self.eps, self.delta, self.n, self.c_lvl)


class StrictL1Estimator:
    """Interval sampler for strict-turnstile streams (Morris-clocked)."""

    def __init__(self, config: StrictL1Config, seed: int = 0):
        self.config = config
        self.scheduler = LevelScheduler(config.base, mode=config.clock, seed=derive_seed(seed, "clock"))
        self.rng = rng_for(seed, "strict-l1")
        self.counters: dict[int, list[int]] = {}
        self.retired: list[tuple[int, int, int]] = []
        self.peak_counter = 0

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        delta = np.asarray(delta, dtype=np.int64)
        if len(delta) == 0:
            return
        if np.any(delta == 0):
            raise ValueError("zero delta")
        sched = self.scheduler
        for seg in sched.advance(np.abs(delta)):
            for j in seg.retired:
                c = self.counters.pop(j)
                self.retired.append((j, c[0], c[1]))
            for j in seg.spawned:
                self.counters[j] = [0, 0]
            part = delta[seg.k_lo : seg.k_hi]
            ins = int(seg.counts[part > 0].sum())
            dels = int(seg.counts[part < 0].sum())
            for j in seg.live:
                rate = sched.rate(j)
                c = self.counters[j]
                if rate >= 1.0:
                    c[0] += ins
                    c[1] += dels
                else:
                    c[0] += int(self.rng.binomial(ins, rate))
                    c[1] += int(self.rng.binomial(dels, rate))
                self.peak_counter = max(self.peak_counter, c[0], c[1])

    def consume(self, stream) -> "StrictL1Estimator":
        self.update_many(stream.index, stream.delta)
        return self

    def oldest_level(self) -> int:
        j = self.scheduler.oldest()
        if j is None:
            raise RuntimeError("no live level: the stream is empty")
        return j

    def estimate(self) -> float:
        if not self.counters:
            if self.scheduler.t == 0:
                return 0.0
            raise RuntimeError("no live level")
        j = self.oldest_level()
        c = self.counters[j]
        return (c[0] - c[1]) / self.scheduler.rate(j)

    def max_counter_bits(self) -> int:
        return int(self.peak_counter).bit_length()

    def samples_stored(self) -> int:
        return int(sum(c[0] + c[1] for c in self.counters.values()))


def strict_l1_update(st: StrictL1Estimator, index: int, delta: int) -> None:
    st.update(index, delta)


def strict_l1_estimate(st: StrictL1Estimator) -> float:
    return st.estimate()


@dataclass(frozen=True)
class GeneralL1Config:
    n: int
    eps: float
    delta: float = 0.1
    alpha: float = 1.0
    c_r: float = 4.0
    rows_med: int = 15
    k_ind: int | None = None
    m_max: int = 1 << 20
    c_lvl: float = 1.0
    s: int | None = None
    clock: str = "morris"

    @property
    def rows(self) -> int:
        return max(1, math.ceil(self.c_r / self.eps**2))

    @property
    def kwise(self) -> int:
        if self.k_ind is not None:
            return self.k_ind
        inv = max(4.0, 1.0 / self.eps)
        return max(4, math.ceil(math.log2(inv) / math.log2(math.log2(inv))) + 2)

    @property
    def delta_prec(self) -> float:
        return self.eps / self.m_max

    @property
    def base(self) -> int:
        if self.s is not None:
            return self.s
        return default_level_base(self.alpha, self.eps, self.delta, self.n, self.c_lvl)


class GeneralL1Estimator:
    """Cauchy sketch with sampled, integerised row accumulators."""

    def __init__(self, config: GeneralL1Config, seed: int = 0):
        self.config = config
        r, r2 = config.rows, config.rows_med
        main_seeds = pairwise_seeds(derive_seed(seed, "rows"), r)
        med_seeds = pairwise_seeds(derive_seed(seed, "rows-med"), r2)
        prec = config.delta_prec
        A = np.stack([stable_vector(s, config.n, prec, config.kwise) for s in main_seeds])
        A2 = np.stack([stable_vector(s, config.n, prec, 2) for s in med_seeds])
        # entries are multiples of delta_prec; keep them as exact integers
        self.A_int = np.rint(np.vstack([A, A2]) / prec).astype(np.int64)
        self.r, self.r2 = r, r2
        self.scheduler = LevelScheduler(config.base, mode=config.clock, seed=derive_seed(seed, "clock"))
        self.rng = rng_for(seed, "general-l1")
        self.acc: dict[int, np.ndarray] = {}
        self.failed = False
        self.peak_counter = 0
        self.n_updates = 0

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(delta) == 0:
            return
        if np.any(delta == 0):
            raise ValueError("zero delta")
        self.n_updates += len(delta)
        sched = self.scheduler
        n = self.config.n
        for seg in sched.advance(np.abs(delta)):
            for j in seg.retired:
                del self.acc[j]
            for j in seg.spawned:
                self.acc[j] = np.zeros(self.A_int.shape[0], dtype=np.int64)
            idx = index[seg.k_lo : seg.k_hi]
            sgn = delta[seg.k_lo : seg.k_hi] > 0
            ins = np.bincount(idx[sgn], weights=seg.counts[sgn], minlength=n)
            dels = np.bincount(idx[~sgn], weights=seg.counts[~sgn], minlength=n)
            items = np.flatnonzero(ins + dels)
            ins = ins[items].astype(np.int64)
            dels = dels[items].astype(np.int64)
            a = self.A_int[:, items]
            ap, am = np.maximum(a, 0), np.maximum(-a, 0)
            # masses of the integerised positive and negative updates per row
            shadow = np.abs(a).astype(np.float64) @ (ins + dels).astype(np.float64)
            if shadow.max(initial=0) >= _SATURATION:
                self.failed = True
                return
            pos = ap @ ins + am @ dels
            neg = am @ ins + ap @ dels
            for j in seg.live:
                rate = sched.rate(j)
                if rate >= 1.0:
                    self.acc[j] += pos - neg
                else:
                    self.acc[j] += self.rng.binomial(pos, rate) - self.rng.binomial(neg, rate)
                self.peak_counter = max(self.peak_counter, int(np.abs(self.acc[j]).max()))

    def consume(self, stream) -> "GeneralL1Estimator":
        self.update_many(stream.index, stream.delta)
        return self

    def sketch_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Rescaled (y, y') of the oldest live level, in units of f."""
        j = self.scheduler.oldest()
        if j is None:
            z = np.zeros(self.A_int.shape[0])
        else:
            z = self.acc[j] / self.scheduler.rate(j) * self.config.delta_prec
        return z[: self.r], z[self.r :]

    def estimate(self) -> float:
        """The estimate, 0.0 on an empty sketch and nan when it fails."""
        if self.failed:
            return math.nan
        y, y2 = self.sketch_values()
        y_med = float(np.median(np.abs(y2)))
        if y_med == 0.0:
            return 0.0
        mean_cos = float(np.mean(np.cos(y / y_med)))
        if mean_cos <= 0.0:
            return math.nan
        return y_med * -math.log(mean_cos)

    def max_counter_bits(self) -> int:
        return int(self.peak_counter).bit_length()


def general_l1_update(st: GeneralL1Estimator, index: int, delta: int) -> None:
    st.update(index, delta)


def general_l1_estimate(st: GeneralL1Estimator) -> float:
    return st.estimate()
