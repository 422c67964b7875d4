"""(1 +- eps) L0 estimation for alpha-property strict-turnstile streams.

Items are spread over rows by lsb(h1(i)), so row r sees each item with
probability 2^-(r+1).  Row r hashes its items into K buckets whose cells
hold random linear combinations mod a random prime p; a cell is nonzero
exactly when some surviving item lands in it (up to a 1/p chance of
cancellation).  Counting nonzero cells T in a row with a moderate load
and inverting the balls-in-bins mean K (1 - (1 - 1/K)^A) gives A.

Under the L0 alpha-property the stream only ever touches alpha L0 items,
so a running F0 estimate brackets L0 to within a factor O(alpha) at every
time.  The matrix therefore keeps only the O(log(alpha/eps)) rows around
log(16 L0 / K); a row is born zeroed when the window reaches it and any
update that lands on an absent row is dropped.

The end-of-stream driver uses three branches: an exact counter when few
items were ever touched, a single wide row when L0 is small relative to K,
and the windowed matrix otherwise.  The matrix needs a row index from a
constant-factor estimate R, supplied by per-level exact small-L0
structures kept on a window of their own.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .hashing import MERSENNE61, HashBank, KWiseHash, bucket_summod, derive_seed, mulmod, rng_for, sample_prime

_PRIME_CAP = 1 << 61


class _Large:
    def __repr__(self) -> str:
        return "LARGE"


LARGE = _Large()


def lsb(x: int, log_n: int) -> int:
    """0-based index of the lowest set bit; lsb(0) = log n."""
    x = int(x)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return int(log_n)
    return (x & -x).bit_length() - 1


def lsb_array(x: np.ndarray, log_n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    low = x & -x
    out = np.full(x.shape, int(log_n), dtype=np.int64)
    nz = low > 0
    out[nz] = np.log2(low[nz]).astype(np.int64)
    return out


def expected_nonzero(A: float, K: int) -> float:
    """E[# occupied bins] after A balls into K bins."""
    return K * (1.0 - (1.0 - 1.0 / K) ** A)


def invert_nonzero(T: int, K: int) -> float:
    """Ball count whose expected occupancy is T: ln(1 - T/K) / ln(1 - 1/K)."""
    if T < 0 or T > K:
        raise ValueError("T outside [0, K]")
    if T == K:
        raise ValueError("all bins occupied: the row is saturated")
    if T == 0:
        return 0.0
    return math.log1p(-T / K) / math.log1p(-1.0 / K)


def loglog_threshold(n: int) -> float:
    """8 log n / log log n, the small-F0 cutoff."""
    ln = math.log2(n)
    return 8 * ln / max(1.0, math.log2(ln))


def _mod_prime(seed: int, lo: int, hi: int, key: str) -> int:
    hi = min(hi, _PRIME_CAP)
    lo = min(lo, hi // 2)
    return sample_prime(lo, hi, rng_for(seed, key)).value


def _add_mod(cells: np.ndarray, flat_idx: np.ndarray, values: np.ndarray, p: int) -> None:
    """cells.flat[idx] += values mod p, for residues in [0, p)."""
    if len(flat_idx) == 0:
        return
    uniq, inv = np.unique(flat_idx, return_inverse=True)
    sums = bucket_summod(inv, values, len(uniq), p)
    flat = cells.reshape(-1)
    flat[uniq] = (flat[uniq] + sums) % np.uint64(p)


# -- rough F0 tracker


class RoughF0:
    """Nondecreasing F0 estimate in [F0, 8 F0] from k minimum hash values.

    Hashes go to [N] with N about n^3, so distinct items collide with
    negligible probability.  Below k distinct hashes the count is exact;
    above it the KMV estimate (k-1) N / v_k is scaled by sqrt(8) so that a
    factor-sqrt(8) error either way stays in the contract.  The output is a
    running max, which makes it monotone.
    """

    def __init__(self, n: int, seed: int, k: int = 64):
        self.n = n
        self.k = k
        self.N = min(MERSENNE61, max(1 << 20, n**3))
        self.h = KWiseHash(2, self.N, derive_seed(seed, "rough-f0"))
        self._heap: list[int] = []  # negated values: max-heap of the k smallest
        self._members: set[int] = set()
        self.value = 0.0

    def _raw(self) -> float:
        if len(self._heap) < self.k:
            return float(len(self._heap))
        vk = -self._heap[0] + 1
        return math.sqrt(8.0) * (self.k - 1) * self.N / vk

    def _offer(self, v: int) -> bool:
        if v in self._members:
            return False
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, -v)
            self._members.add(v)
            return True
        if v < -self._heap[0]:
            out = -heapq.heappushpop(self._heap, -v)
            self._members.discard(out)
            self._members.add(v)
            return True
        return False

    def update_many(self, index) -> np.ndarray:
        """Feed items; returns the estimate after each one."""
        index = np.asarray(index, dtype=np.int64)
        out = np.empty(len(index), dtype=np.float64)
        if len(index) == 0:
            return out
        items, first = np.unique(index, return_index=True)
        order = np.argsort(first)
        items, first = items[order], first[order]
        hv = self.h(items)
        before = self.value
        pos, vals = [], []
        for f_pos, v in zip(first.tolist(), hv.tolist()):
            if self._offer(v):
                est = self._raw()
                if est > self.value:
                    self.value = est
                    pos.append(f_pos)
                    vals.append(est)
        if not pos:
            out[:] = before
            return out
        # step function: the value at each update is the last change at or before it
        steps = np.searchsorted(np.array(pos), np.arange(len(index)), side="right") - 1
        return np.where(steps >= 0, np.array(vals)[np.maximum(steps, 0)], before)

    def update(self, index: int) -> float:
        return float(self.update_many(np.array([index]))[-1])

    def query(self) -> float:
        return self.value


def rough_f0_update(tr: RoughF0, index: int, delta: int = 1) -> None:
    tr.update(index)


def rough_f0_query(tr: RoughF0) -> float:
    return tr.query()


# -- rows kept on a sliding window


class SlidingRows:
    """Rows r in [lo_t, hi_t] at time t, with both ends nondecreasing in t.

    A row is created at the first time the window reaches it and dropped
    once the window passes it; it never comes back.  Only rows in
    [bottom, top] exist at all.  ``make`` builds an empty row.
    """

    def __init__(self, top: int, width: int = 0, dtype=np.uint64, bottom: int = 0, make=None):
        self.top = top
        self.bottom = bottom
        self.make = make if make is not None else (lambda: np.zeros(width, dtype=dtype))
        self.rows: dict = {}
        self.birth: dict[int, int] = {}
        self.t = 0
        self.max_live = 0

    def slide(self, lo_t: np.ndarray, hi_t: np.ndarray) -> None:
        """Move the window over one batch of len(lo_t) updates."""
        m = len(lo_t)
        if m == 0:
            return
        lo_t = np.clip(lo_t, self.bottom, self.top + 1)
        hi_t = np.clip(hi_t, self.bottom - 1, self.top)
        self.max_live = max(self.max_live, int(np.maximum(0, hi_t - lo_t + 1).max()))
        lo_end, hi_end = int(lo_t[-1]), int(hi_t[-1])
        for r in [r for r in self.rows if r < lo_end]:
            del self.rows[r]
            del self.birth[r]
        for r in range(lo_end, hi_end + 1):
            if r not in self.rows:
                self.rows[r] = self.make()
                self.birth[r] = self.t + int(np.searchsorted(hi_t, r, side="left"))
        self.t += m

    def advance(self, lo_t: np.ndarray, hi_t: np.ndarray, row_of_update: np.ndarray) -> np.ndarray:
        """Slide over one batch; returns the mask of updates landing on a live row."""
        t0 = self.t
        self.slide(lo_t, hi_t)
        births = np.full(self.top + 2, np.iinfo(np.int64).max, dtype=np.int64)
        for r, b in self.birth.items():
            births[r] = b
        rows = np.clip(row_of_update, 0, self.top + 1)
        return t0 + np.arange(len(lo_t)) >= births[rows]

    def live(self) -> tuple:
        return tuple(sorted(self.rows))


# -- small branches


class SmallF0:
    """Exact L0 while at most c distinct hashed identities have appeared."""

    def __init__(self, n: int, seed: int, c_C: float = 32.0, m_M: int = 1 << 40, kind: str = "strict"):
        self.c = loglog_threshold(n)
        self.C = max(4, math.ceil(c_C * self.c**2))
        self.h = KWiseHash(2, self.C, derive_seed(seed, "small-f0-h"))
        P = int(100**2 * self.c * math.log2(m_M))
        self.p = _mod_prime(seed, P, P**3, "small-f0-p")
        self.kind = kind
        self.coef = KWiseHash(2, self.p - 1, derive_seed(seed, "small-f0-u"))
        self.cells = np.zeros(self.C, dtype=np.uint64)
        self.seen: set[int] = set()
        self.large = False

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if self.large or len(index) == 0:
            return
        b = self.h(index)
        self.seen.update(np.unique(b).tolist())
        if len(self.seen) > self.c:
            self.large = True
            return
        vals = (delta % self.p).astype(np.uint64)
        if self.kind == "general":
            vals = mulmod(vals, self.coef(index).astype(np.uint64) + np.uint64(1), self.p)
        _add_mod(self.cells, b, vals, self.p)

    def query(self):
        if self.large:
            return LARGE
        return int(np.count_nonzero(self.cells))


def small_f0_query(br: SmallF0):
    return br.query()


class SmallL0:
    """One row of width 2K over the whole stream; LARGE once L0 > K/16 looks likely."""

    def __init__(self, n: int, eps: float, seed: int, p: int, k_ind: int = 2):
        self.K = max(1, math.ceil(1 / eps**2))
        self.width = 2 * self.K
        self.p = p
        self.h = KWiseHash(k_ind, self.width, derive_seed(seed, "small-l0-h"))
        self.u = KWiseHash(2, p - 1, derive_seed(seed, "small-l0-u"))
        self.cells = np.zeros(self.width, dtype=np.uint64)

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(index) == 0:
            return
        coef = self.u(index).astype(np.uint64) + np.uint64(1)
        vals = mulmod((delta % self.p).astype(np.uint64), coef, self.p)
        _add_mod(self.cells, self.h(index), vals, self.p)

    def query(self):
        T = int(np.count_nonzero(self.cells))
        if T >= self.width:
            return LARGE
        est = invert_nonzero(T, self.width)
        if est > self.K / 16:
            return LARGE
        return est


def small_l0_query(br: SmallL0):
    return br.query()


# -- constant-factor estimate


class ConstL0:
    """R in [L0, 100 L0] from exact small-L0 structures on lsb levels.

    Level j takes the items with lsb(h(i)) = j.  Its structure hashes them
    with 4 pairwise functions into c^2 buckets of modular counters and
    reports the largest nonzero count among the 4 rows, which equals the
    level's L0 when that is at most c (unless all 4 rows collide).  Only
    levels within 2 log(400 alpha) of log L0-bar are kept.
    """

    c = 132
    reps = 4

    def __init__(self, n: int, alpha: float, seed: int, p: int):
        self.log_n = int(round(math.log2(n)))
        self.alpha = alpha
        self.p = p
        self.buckets = self.c**2
        self.h = KWiseHash(2, n, derive_seed(seed, "const-l0-lvl"))
        self.g = HashBank(self.reps, 2, self.buckets, derive_seed(seed, "const-l0-g"), "const-l0")
        self.half = 2 * math.log2(400 * alpha)
        self.levels = SlidingRows(self.log_n, self.reps * self.buckets)

    def window(self, lbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        center = np.log2(np.maximum(lbar, 1.0))
        return np.ceil(center - self.half).astype(np.int64), np.floor(center + self.half).astype(np.int64)

    def update_many(self, index, delta, lbar) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        lvl = lsb_array(self.h(index), self.log_n)
        lo, hi = self.window(lbar)
        keep = self.levels.advance(lo, hi, lvl)
        if not keep.any():
            return
        idx, d, lvl = index[keep], delta[keep], lvl[keep]
        cols = self.g(idx)  # (reps, m)
        vals = (d % self.p).astype(np.uint64)
        offs = (np.arange(self.reps) * self.buckets)[:, None]
        for j in np.unique(lvl).tolist():
            sel = lvl == j
            flat = (cols[:, sel] + offs).ravel()
            _add_mod(self.levels.rows[j], flat, np.tile(vals[sel], self.reps), self.p)

    def level_counts(self) -> dict[int, int]:
        out = {}
        for j, row in self.levels.rows.items():
            nz = np.count_nonzero(row.reshape(self.reps, self.buckets), axis=1)
            out[j] = int(nz.max())
        return out

    def query(self) -> float:
        hits = [j for j, cnt in self.level_counts().items() if cnt > 8]
        if not hits:
            return 50.0
        return (20000 / 99) * 2.0 ** max(hits)


def const_l0_query(tr: ConstL0) -> float:
    return tr.query()


# -- the windowed matrix and the driver


@dataclass(frozen=True)
class L0Config:
    n: int
    eps: float
    alpha: float = 1.0
    bins_mult: int = 1
    k_ind: int | None = None
    m_M: int = 1 << 40
    kind: str = "strict"
    rough_k: int = 64

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.kind not in ("strict", "general"):
            raise ValueError("kind must be 'strict' or 'general'")

    @property
    def K(self) -> int:
        return max(1, math.ceil(1 / self.eps**2))

    @property
    def K_main(self) -> int:
        return self.K * self.bins_mult

    @property
    def kwise(self) -> int:
        if self.k_ind is not None:
            return self.k_ind
        inv = max(4.0, 1 / self.eps)
        return max(2, math.ceil(math.log2(inv) / math.log2(math.log2(inv))))

    @property
    def half_width(self) -> float:
        return 2 * math.log2(4 * self.alpha / self.eps)


class L0Estimator:
    """All branches of the L0 sketch for one repetition."""

    def __init__(self, config: L0Config, seed: int = 0):
        self.config = config
        n = config.n
        self.log_n = int(round(math.log2(n)))
        K = config.K_main
        self.h1 = KWiseHash(2, n, derive_seed(seed, "h1"))
        self.h2 = KWiseHash(2, min(MERSENNE61 - 1, K**3), derive_seed(seed, "h2"))
        self.h3 = KWiseHash(config.kwise, K, derive_seed(seed, "h3"))
        self.h4 = KWiseHash(2, K, derive_seed(seed, "h4"))
        D = int(100 * K * math.log2(config.m_M))
        self.p = _mod_prime(seed, D, D**3, "l0-p")
        self.u = rng_for(seed, "l0-u").integers(1, self.p, size=K, dtype=np.uint64)
        self.rough = RoughF0(n, derive_seed(seed, "rough"), k=config.rough_k)
        self.floor = loglog_threshold(n)
        self.matrix = SlidingRows(self.log_n, K)
        self.small_f0 = SmallF0(n, derive_seed(seed, "sf0"), m_M=config.m_M, kind=config.kind)
        self.small_l0 = SmallL0(n, config.eps, derive_seed(seed, "sl0"), self.p)
        self.const = ConstL0(n, config.alpha, derive_seed(seed, "cl0"), self.p)
        self.lbar_history: list[tuple[int, float]] = []

    def window(self, lbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        center = np.log2(16 * lbar / self.config.K_main)
        w = self.config.half_width
        return np.ceil(center - w).astype(np.int64), np.floor(center + w).astype(np.int64)

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(index) == 0:
            return
        t0 = self.matrix.t
        lbar = np.maximum(self.rough.update_many(index), self.floor)
        change = np.flatnonzero(np.diff(lbar, prepend=-1.0))
        self.lbar_history.extend(zip((t0 + change).tolist(), lbar[change].tolist()))
        self.small_f0.update_many(index, delta)
        self.small_l0.update_many(index, delta)
        self.const.update_many(index, delta, lbar)
        rows = lsb_array(self.h1(index), self.log_n)
        lo, hi = self.window(lbar)
        keep = self.matrix.advance(lo, hi, rows)
        if not keep.any():
            return
        idx, d, rows = index[keep], delta[keep], rows[keep]
        key = self.h2(idx)
        col = self.h3(key)
        vals = mulmod((d % self.p).astype(np.uint64), self.u[self.h4(key)], self.p)
        for r in np.unique(rows).tolist():
            sel = rows == r
            _add_mod(self.matrix.rows[r], col[sel], vals[sel], self.p)

    def consume(self, stream) -> "L0Estimator":
        self.update_many(stream.index, stream.delta)
        return self

    def row_index(self, R: float) -> int:
        # rows stop at log n
        return min(self.log_n, max(0, int(round(math.log2(16 * R / self.config.K_main)))))

    def main_estimate(self, R: float | None = None) -> float:
        if R is None:
            R = self.const.query()
        i = self.row_index(R)
        if i not in self.matrix.rows:
            raise RuntimeError(f"row {i} is not retained (live rows {self.matrix.live()})")
        T = int(np.count_nonzero(self.matrix.rows[i]))
        return 2.0 ** (i + 1) * invert_nonzero(T, self.config.K_main)

    def estimate(self) -> tuple[float, str]:
        """(estimate, branch) for this repetition."""
        v = self.small_f0.query()
        if v is not LARGE:
            return float(v), "small_f0"
        v = self.small_l0.query()
        if v is not LARGE:
            return float(v), "small_l0"
        return self.main_estimate(), "main"

    def max_counter_bits(self) -> int:
        peak = max((int(r.max()) for r in self.matrix.rows.values()), default=0)
        return peak.bit_length()

    def retained_rows(self) -> int:
        return self.matrix.max_live


def alpha_l0_update(st: L0Estimator, index: int, delta: int) -> None:
    st.update(index, delta)


def alpha_l0_estimate(st: L0Estimator, R: float | None = None) -> float:
    return st.main_estimate(R)


def l0_full(stream, eps: float, alpha: float = 1.0, seed: int = 0, reps: int = 3, **kw) -> float:
    """Median over ``reps`` independent repetitions of the branch driver."""
    cfg = L0Config(n=stream.config.n, eps=eps, alpha=alpha, **kw)
    vals = [
        L0Estimator(cfg, derive_seed(seed, "l0-rep", r)).consume(stream).estimate()[0] for r in range(reps)
    ]
    return float(np.median(vals))
