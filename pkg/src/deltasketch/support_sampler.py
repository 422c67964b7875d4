"""Support sampling for L0 alpha-property strict-turnstile streams.

Level j holds the items with h(i) <= 2^j, about 2^j of the n ids, and
keeps an s-sparse recovery sketch of the stream suffix since the level
was born.  A rough running estimate R of L0 picks the level whose
suffix should hold about s/3 live items; under the alpha-property only
O(log(alpha/eps)) levels around it are needed at any time, plus a fixed
band of top levels that cover small streams completely.  At the end
every level that decodes contributes its strictly positive coordinates:
in a strict-turnstile stream a positive suffix count means f_i > 0.

The recovery sketch has 3 rows of 2s buckets.  A bucket keeps the sum of
deltas, the index-weighted sum and a fingerprint sum of delta * r^i mod
a random 60-bit prime.  Decoding peels buckets that hold a single item,
checked by the fingerprint, and returns DENSE if anything is left.
"""

from __future__ import annotations

import math

import numpy as np

from .hashing import HashBank, KWiseHash, derive_seed, mulmod, rng_for, sample_prime, to_residue
from .l0_estimator import RoughF0, SlidingRows, _add_mod


class _Dense:
    def __repr__(self) -> str:
        return "DENSE"


DENSE = _Dense()


class SRParams:
    """Hashes, base r and prime P shared by sketches that must add up."""

    def __init__(self, n: int, s: int, seed: int, rows: int = 3):
        if s < 1:
            raise ValueError("s must be positive")
        self.n, self.s, self.rows = n, s, rows
        self.width = 2 * s
        self.bank = HashBank(rows, 4, self.width, derive_seed(seed, "sr-h"), "sr")
        rng = rng_for(seed, "sr-fp")
        self.P = sample_prime(1 << 60, 1 << 61, rng).value
        self.r = int(rng.integers(2, self.P - 1))

    def cells(self, items: np.ndarray) -> np.ndarray:
        """Flat cell ids (rows, m) for the items."""
        return self.bank(items) + (np.arange(self.rows) * self.width)[:, None]

    def powers(self, items: np.ndarray) -> np.ndarray:
        """r^i mod P for each item."""
        uniq, inv = np.unique(np.asarray(items, dtype=np.int64), return_inverse=True)
        vals = np.array([pow(self.r, i, self.P) for i in uniq.tolist()], dtype=np.uint64)
        return vals[inv.reshape(-1)]

    def fingerprint(self, items: np.ndarray, delta: np.ndarray) -> np.ndarray:
        return mulmod(to_residue(delta, self.P), self.powers(items), self.P)


class SparseRecoverySketch:
    def __init__(self, params: SRParams):
        self.params = params
        size = params.rows * params.width
        self.count = np.zeros(size, dtype=np.int64)
        self.isum = np.zeros(size, dtype=np.int64)
        self.fp = np.zeros(size, dtype=np.uint64)

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta, cells=None, fp=None) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(index) == 0:
            return
        pr = self.params
        if cells is None:
            cells = pr.cells(index)
        if fp is None:
            fp = pr.fingerprint(index, delta)
        rows = pr.rows
        flat = cells.ravel()
        np.add.at(self.count, flat, np.tile(delta, rows))
        np.add.at(self.isum, flat, np.tile(delta * index, rows))
        _add_mod(self.fp, flat, np.tile(fp, rows), pr.P)

    def __add__(self, other: "SparseRecoverySketch") -> "SparseRecoverySketch":
        if other.params is not self.params:
            raise ValueError("sketches must share parameters")
        out = SparseRecoverySketch(self.params)
        out.count = self.count + other.count
        out.isum = self.isum + other.isum
        out.fp = (self.fp + other.fp) % np.uint64(self.params.P)
        return out

    def copy(self) -> "SparseRecoverySketch":
        return self + SparseRecoverySketch(self.params)

    def is_zero(self) -> bool:
        return not (self.count.any() or self.isum.any() or self.fp.any())

    def decode(self):
        """{index: value} if the sketched vector is s-sparse, else DENSE."""
        pr = self.params
        # each item fills at most one bucket per row
        occupied = np.count_nonzero(self.count.reshape(pr.rows, pr.width) | self.fp.reshape(pr.rows, pr.width).view(np.int64), axis=1)
        if occupied.max(initial=0) > pr.s:
            return DENSE
        work = self.copy()
        found: dict[int, int] = {}
        while True:
            c, isum = work.count, work.isum
            cand = np.flatnonzero(c)
            if len(cand) == 0:
                break
            cc, ii = c[cand], isum[cand]
            whole = ii % cc == 0
            idx = np.where(whole, ii // np.where(cc == 0, 1, cc), -1)
            ok = whole & (idx >= 0) & (idx < pr.n)
            if not ok.any():
                break
            cand, cc, idx = cand[ok], cc[ok], idx[ok]
            pure = work.fp[cand] == pr.fingerprint(idx, cc)
            if not pure.any():
                break
            idx, cc = idx[pure], cc[pure]
            idx, first = np.unique(idx, return_index=True)
            cc = cc[first]
            for i, v in zip(idx.tolist(), cc.tolist()):
                found[i] = found.get(i, 0) + v
            work.update_many(idx, -cc)
            if len(found) > pr.s:
                return DENSE
        if not work.is_zero():
            return DENSE
        out = {i: v for i, v in found.items() if v != 0}
        if len(out) > pr.s:
            return DENSE
        return out


def sr_update(sk: SparseRecoverySketch, i: int, delta: int) -> None:
    sk.update(i, delta)


def sr_decode(sk: SparseRecoverySketch):
    return sk.decode()


class _Instance:
    """One copy of the leveled sampler."""

    def __init__(self, n: int, s: int, alpha: float, eps: float, seed: int):
        self.n = n
        self.log_n = int(round(math.log2(n)))
        L = self.log_n
        self.h = KWiseHash(2, n, derive_seed(seed, "ss-h"))
        self.params = SRParams(n, s, derive_seed(seed, "ss-sr"))
        self.rough = RoughF0(n, derive_seed(seed, "ss-rough"))
        self.half = 2 * math.log2(alpha / eps)
        ll = math.log2(max(2.0, math.log2(n)))
        self.band = min(L, math.ceil(math.log2(n * s * ll / (24 * math.log2(n)))))
        self.s = s
        self.permanent = {j: SparseRecoverySketch(self.params) for j in range(self.band, L + 1)}
        # windowed levels j < band, indexed by L - j so the window moves up
        self.window = SlidingRows(L, bottom=L - self.band + 1, make=lambda: SparseRecoverySketch(self.params))
        self.retired: list[int] = []

    def levels(self) -> dict[int, SparseRecoverySketch]:
        out = {self.log_n - r: sk for r, sk in self.window.rows.items()}
        out.update(self.permanent)
        return out

    def update_many(self, index: np.ndarray, delta: np.ndarray) -> None:
        L = self.log_n
        R = np.maximum(self.rough.update_many(index), 1.0)
        center = np.log2(self.n * self.s / (3 * R))
        lo_j = np.ceil(center - self.half).astype(np.int64)
        hi_j = np.floor(center + self.half).astype(np.int64)
        before = set(self.window.rows)
        t0 = self.window.t
        self.window.slide(L - hi_j, L - lo_j)
        self.retired.extend(sorted(L - r for r in before - set(self.window.rows)))
        # item i belongs to I_j for every j >= ceil(log2 h(i)), h(i) in [1, n]
        hv = self.h(index) + 1
        jmin = np.ceil(np.log2(hv)).astype(np.int64)
        cells = self.params.cells(index)
        fp = self.params.fingerprint(index, delta)
        times = t0 + np.arange(len(index))
        for j, sk in self.levels().items():
            sel = jmin <= j
            if j < self.band:
                sel &= times >= self.window.birth[L - j]
            if sel.any():
                sk.update_many(index[sel], delta[sel], cells[:, sel], fp[sel])

    def recover(self) -> set:
        out = set()
        for sk in self.levels().values():
            vec = sk.decode()
            if vec is DENSE:
                continue
            out.update(i for i, v in vec.items() if v > 0)
        return out


class SupportSampler:
    """Union over ceil(ln(1/delta) / ln(3/2)) independent copies."""

    eps = 1 / 48

    def __init__(self, n: int, k: int, delta: float = 0.1, alpha: float = 1.0, seed: int = 0, c_s: int = 205):
        if k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.n, self.k, self.delta = n, k, delta
        self.s = c_s * k
        copies = max(1, math.ceil(math.log(1 / delta) / math.log(1.5)))
        self.instances = [
            _Instance(n, self.s, alpha, self.eps, derive_seed(seed, "ss-copy", c)) for c in range(copies)
        ]

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(index) == 0:
            return
        for inst in self.instances:
            inst.update_many(index, delta)

    def consume(self, stream) -> "SupportSampler":
        self.update_many(stream.index, stream.delta)
        return self

    def query(self) -> set:
        out = set()
        for inst in self.instances:
            out |= inst.recover()
        return out


def ss_update(st: SupportSampler, index: int, delta: int) -> None:
    st.update(index, delta)


def ss_query(st: SupportSampler) -> set:
    return st.query()
