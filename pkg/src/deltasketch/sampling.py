"""Uniform update sampling, Morris counting and the level scheduler.

Sketches in this package never see every update: they keep binomially
thinned counts.  An update (i, delta) stands for |delta| consecutive unit
updates, and thinning it at rate q draws Bin(|delta|, q) survivors.  Since
a sum of independent Bin(a, q) and Bin(b, q) is Bin(a + b, q), a batch of
updates that land in the same counter during a stretch of constant rate
can be thinned with a single draw.  ``split_units`` cuts a batch at the
positions where the rate or the set of live levels changes so callers can
use that identity.

``LevelScheduler`` runs the interval construction used by the strict L1
estimator, the general L1 estimator and the inner-product sketch: level j
samples at rate s^-j while the position estimate lies in [s^j, s^(j+2)),
so at most two levels are live and the older one has seen all but a
vanishing prefix of the stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def split_units(abs_delta: np.ndarray, t0: int, cuts) -> list[tuple[int, int, int, int, np.ndarray]]:
    """Cut a batch of updates at unit positions.

    The batch covers unit positions t0+1 .. t0+sum(abs_delta).  A cut c
    sends units at positions > c to the next piece.  Returns a list of
    (lo, hi, k_lo, k_hi, counts): units in (lo, hi] come from updates
    k_lo..k_hi-1, with ``counts`` units taken from each.
    """
    abs_delta = np.asarray(abs_delta, dtype=np.int64)
    if len(abs_delta) == 0:
        return []
    end = t0 + np.cumsum(abs_delta)
    start = end - abs_delta
    total_end = int(end[-1])
    bounds = [t0] + sorted({int(c) for c in cuts if t0 < c < total_end}) + [total_end]
    pieces = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        k_lo = int(np.searchsorted(end, lo, side="right"))
        k_hi = int(np.searchsorted(start, hi, side="left"))
        counts = np.minimum(end[k_lo:k_hi], hi) - np.maximum(start[k_lo:k_hi], lo)
        pieces.append((lo, hi, k_lo, k_hi, counts))
    return pieces


def thin(counts, rate: float, rng: np.random.Generator):
    """Bin(counts, rate) survivors, skipping the draw when rate is 1."""
    if rate >= 1.0:
        return np.asarray(counts, dtype=np.int64).copy()
    return rng.binomial(np.asarray(counts, dtype=np.int64), rate).astype(np.int64)


def sampling_lemma_rate(alpha: float, eps: float, delta: float, m: int) -> float:
    """Smallest rate alpha^2 eps^-3 log(1/delta) / m at which the lemma applies."""
    return min(1.0, alpha * alpha * math.log(1.0 / delta) / (eps**3 * m))


def sample_substream(index: np.ndarray, delta: np.ndarray, n: int, rate: float, rng) -> np.ndarray:
    """Frequency vector of a uniformly sampled substream, scaled by 1/rate.

    Each unit update survives independently with probability ``rate``.
    """
    if not 0 < rate <= 1:
        raise ValueError("rate must be in (0, 1]")
    index = np.asarray(index, dtype=np.int64)
    delta = np.asarray(delta, dtype=np.int64)
    ins = np.bincount(index, weights=np.where(delta > 0, delta, 0), minlength=n).astype(np.int64)
    dels = np.bincount(index, weights=np.where(delta < 0, -delta, 0), minlength=n).astype(np.int64)
    kept = thin(ins, rate, rng) - thin(dels, rate, rng)
    return kept / rate


class MorrisCounter:
    """Approximate counter storing only an exponent v; estimate 2^v - 1."""

    def __init__(self):
        self.v = 0

    def tick(self, rng: np.random.Generator) -> None:
        if self.v == 0 or rng.random() < 2.0 ** (-self.v):
            self.v += 1

    def estimate(self) -> int:
        return (1 << self.v) - 1

    def jumps(self, t0: int, t1: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        """Advance over unit positions t0+1..t1; returns (position, new v) per increment.

        Uses geometric skips, which have the same law as one coin per unit.
        """
        out = []
        t = t0
        while True:
            q = 2.0 ** (-self.v)
            gap = 1 if q >= 1.0 else int(rng.geometric(q))
            if t + gap > t1:
                break
            t += gap
            self.v += 1
            out.append((t, self.v))
        return out

    def advance(self, units: int, rng: np.random.Generator) -> None:
        self.jumps(0, units, rng)


def morris_tick(c: MorrisCounter, rng) -> None:
    c.tick(rng)


def morris_estimate(c: MorrisCounter) -> int:
    return c.estimate()


@dataclass
class Segment:
    lo: int
    hi: int
    k_lo: int
    k_hi: int
    counts: np.ndarray
    live: tuple
    spawned: tuple = ()
    retired: tuple = ()


@dataclass
class LevelScheduler:
    """Live-level bookkeeping for exponentially growing sampling intervals.

    ``mode`` selects the position proxy: ``"morris"`` (the paper's
    construction) or ``"exact"`` (a plain counter, for tests and the
    inner-product sketch).
    """

    s: int
    mode: str = "morris"
    seed: int = 0
    t: int = 0
    live: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.s < 2 or self.s & (self.s - 1):
            raise ValueError("s must be a power of two >= 2")
        if self.mode not in ("morris", "exact"):
            raise ValueError("mode must be 'morris' or 'exact'")
        self.morris = MorrisCounter()
        self.rng = np.random.default_rng(self.seed)
        self.log_s = self.s.bit_length() - 1

    def position_estimate(self) -> int:
        return self.morris.estimate() if self.mode == "morris" else self.t

    def levels_for(self, est: int) -> tuple:
        """Levels j with s^j <= est < s^(j+2)."""
        if est < 1:
            return ()
        a = (int(est).bit_length() - 1) // self.log_s  # floor(log_s est)
        return tuple(j for j in (a - 1, a) if j >= 0)

    def rate(self, j: int) -> float:
        return 2.0 ** (-self.log_s * j)

    def oldest(self):
        if not self.live:
            return None
        return min(self.live, key=lambda j: (self.live[j], j))

    def _change_points(self, t0: int, t1: int) -> list[tuple[int, int]]:
        """(position, estimate) pairs where the estimate may change in (t0, t1]."""
        if self.mode == "morris":
            return [(pos, (1 << v) - 1) for pos, v in self.morris.jumps(t0, t1, self.rng)]
        pts = []
        j = 0
        while True:
            edge = self.s**j
            if edge > t1:
                break
            if edge > t0:
                pts.append((edge, edge))
            j += 1
        # retirement happens one unit past s^(j+2); those are powers of s too,
        # already covered above since levels_for uses the half-open window
        return pts

    def advance(self, abs_delta: np.ndarray) -> list[Segment]:
        abs_delta = np.asarray(abs_delta, dtype=np.int64)
        if len(abs_delta) == 0:
            return []
        t0 = self.t
        t1 = t0 + int(abs_delta.sum())
        changes = self._change_points(t0, t1)
        # each change takes effect at its own unit, so the cut sits one unit earlier
        cuts = [pos - 1 for pos, _ in changes]
        est_at = {pos - 1: est for pos, est in changes}
        pieces = split_units(abs_delta, t0, cuts)
        segments = []
        for lo, hi, k_lo, k_hi, counts in pieces:
            if lo in est_at:
                self._set_live(self.levels_for(est_at[lo]), lo + 1)
            segments.append(Segment(lo, hi, k_lo, k_hi, counts, tuple(sorted(self.live)), *self._pending()))
        self.t = t1
        return segments

    def _set_live(self, target: tuple, when: int) -> None:
        spawned, retired = [], []
        for j in list(self.live):
            if j not in target:
                self.history.append((j, self.live.pop(j), when))
                retired.append(j)
        for j in target:
            if j not in self.live:
                self.live[j] = when
                spawned.append(j)
        self._events = (tuple(spawned), tuple(retired))

    def _pending(self):
        ev = getattr(self, "_events", ((), ()))
        self._events = ((), ())
        return ev
