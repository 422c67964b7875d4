"""CSSampSim: Countsketch rows fed by independent uniform samples.

A d x 6k table holds a pair of nonnegative counters (a+, a-) per cell.
Every row samples each unit update independently with probability 2^-p,
and a sampled update adds |delta * g_i(item)| to a+ or a- of cell
(i, h_i(item)) depending on the sign of delta * g_i(item).  The rate
halves on a doubling schedule; at each halving every counter is thinned
to Bin(counter, 1/2), so the table always looks as if it had sampled the
whole prefix at the current rate.  Queries rescale by 2^p and take the
median over rows.

When alpha-property holds the rescaled sample keeps every |f_i| to within
eps ||f||_1 while the counters stay polynomial in S, which is the point:
O(log(alpha log n / eps)) bits per counter instead of O(log n).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .hashing import HashBank, KWiseHash, SignHash, derive_seed, rng_for
from .sampling import split_units

_BLOB_VERSION = 1
_COUNTER_CAP = 1 << 62


class SketchFailed(RuntimeError):
    """A counter passed the saturation bound; the sketch refuses to answer."""


@dataclass(frozen=True)
class CSSSConfig:
    n: int
    k: int
    eps: float
    alpha: float = 1.0
    c_d: float = 2.0
    c_T: float = 1.0
    c_S: float = 1.0
    # halving clock: "S" halves at t = 2^r S + 1, "logS" at t = 2^r log2(S) + 1
    schedule: str = "S"

    def __post_init__(self):
        if self.n < 2 or self.k < 1:
            raise ValueError("need n >= 2 and k >= 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if min(self.c_d, self.c_T, self.c_S) <= 0:
            raise ValueError("constants must be positive")
        if self.schedule not in ("S", "logS"):
            raise ValueError("schedule must be 'S' or 'logS'")

    @property
    def log_n(self) -> float:
        return math.log2(self.n)

    @property
    def width(self) -> int:
        return 6 * self.k

    @property
    def d(self) -> int:
        return max(1, math.ceil(self.c_d * self.log_n))

    @property
    def T(self) -> float:
        return self.c_T * (4.0 / self.eps**2 + self.log_n)

    @property
    def S(self) -> float:
        return max(1.0, self.c_S * (self.alpha**2 / self.eps**2) * self.T**2 * self.log_n)

    @property
    def epoch(self) -> int:
        """Base B of the halving clock: the rate drops at t = 2^r B + 1."""
        if self.schedule == "logS":
            return max(1, math.ceil(math.log2(self.S)))
        return math.ceil(self.S)

    @property
    def saturation(self) -> int:
        return min(_COUNTER_CAP, math.ceil(self.S) ** 3)


class CSSSTable:
    """The sampled Countsketch table with its hash functions and clock."""

    def __init__(self, config: CSSSConfig, seed: int = 0):
        self.config = config
        self.seed = int(seed)
        d, w = config.d, config.width
        # rows 0..d-1 pick buckets, rows d..2d-1 pick signs
        self.hg = HashBank(2 * d, 4, w, seed, "csss-hg")
        self.plus = np.zeros((d, w), dtype=np.int64)
        self.minus = np.zeros((d, w), dtype=np.int64)
        self.p_exp = 0
        self.t = 0
        self.failed = False
        self.sampled_units = 0
        self.rng = rng_for(seed, "csss-rng")
        self._cache_items = None

    # -- hashing helpers

    def buckets(self, items) -> tuple[np.ndarray, np.ndarray]:
        """(d, len) arrays of bucket indices and signs for the given items."""
        items = np.asarray(items, dtype=np.int64)
        d = self.config.d
        v = self.hg.field_values(items)
        H = (v[:d] % np.uint64(self.config.width)).astype(np.int64)
        G = 1 - 2 * (v[d:] & np.uint64(1)).astype(np.int64)
        return H, G

    def _item_hashes(self):
        if self._cache_items is None:
            self._cache_items = self.buckets(np.arange(self.config.n))
        return self._cache_items

    # -- updates

    def _cut(self) -> int:
        """Last unit position sampled at the current rate."""
        return (1 << (self.p_exp + 1)) * self.config.epoch

    def _halve(self) -> None:
        self.plus = self.rng.binomial(self.plus, 0.5).astype(np.int64)
        self.minus = self.rng.binomial(self.minus, 0.5).astype(np.int64)
        self.p_exp += 1

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        """Feed a batch of updates; identical in law to feeding them one by one."""
        if self.failed:
            raise SketchFailed("CSSS counter saturated")
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        if len(index) == 0:
            return
        if np.any(delta == 0):
            raise ValueError("zero delta")
        if index.min() < 0 or index.max() >= self.config.n:
            raise ValueError("index outside the universe")
        Hall, Gall = self._item_hashes()
        n = self.config.n
        absd = np.abs(delta)
        pos = delta > 0
        t0 = self.t
        t_end = t0 + int(absd.sum())
        cuts = []
        c = self._cut()
        while c < t_end:
            cuts.append(c)
            c *= 2
        for lo, hi, k_lo, k_hi, counts in split_units(absd, t0, cuts):
            while lo >= self._cut():
                self._halve()
            # per-cell sums only depend on per-(item, sign) unit totals
            idx, p = index[k_lo:k_hi], pos[k_lo:k_hi]
            ins = np.bincount(idx[p], weights=counts[p], minlength=n).astype(np.int64)
            dels = np.bincount(idx[~p], weights=counts[~p], minlength=n).astype(np.int64)
            a, b = np.flatnonzero(ins), np.flatnonzero(dels)
            items = np.concatenate([a, b])
            signs = Gall[:, items] * np.concatenate([np.ones(len(a), np.int64), -np.ones(len(b), np.int64)])
            self._ingest(Hall[:, items], signs, np.concatenate([ins[a], dels[b]]))
        self.t = t_end
        if max(self.plus.max(initial=0), self.minus.max(initial=0)) > self.config.saturation:
            self.failed = True

    def _ingest(self, H: np.ndarray, signs: np.ndarray, counts: np.ndarray) -> None:
        d, w = self.plus.shape
        rows = np.repeat(np.arange(d), H.shape[1])
        cells = rows * w + H.ravel()
        cnt = np.tile(counts, d)
        pos = signs.ravel() > 0
        # bincount sums in float64, exact for batches below 2^53 units
        add_plus = np.bincount(cells[pos], weights=cnt[pos], minlength=d * w).astype(np.int64)
        add_minus = np.bincount(cells[~pos], weights=cnt[~pos], minlength=d * w).astype(np.int64)
        rate = 2.0 ** (-self.p_exp)
        if rate < 1.0:
            add_plus = self.rng.binomial(add_plus, rate)
            add_minus = self.rng.binomial(add_minus, rate)
        self.sampled_units += int(add_plus.sum() + add_minus.sum())
        self.plus += add_plus.reshape(d, w)
        self.minus += add_minus.reshape(d, w)

    def consume(self, stream) -> "CSSSTable":
        self.update_many(stream.index, stream.delta)
        return self

    # -- queries

    def _check(self) -> None:
        if self.failed:
            raise SketchFailed("CSSS counter saturated")

    def scaled_rows(self) -> np.ndarray:
        """Signed cell values 2^p (a+ - a-) as a (d, 6k) float array."""
        return np.ldexp((self.plus - self.minus).astype(np.float64), self.p_exp)

    def row_estimates(self, items) -> np.ndarray:
        self._check()
        items = np.asarray(items, dtype=np.int64)
        Hall, Gall = self._item_hashes()
        H, G = Hall[:, items], Gall[:, items]
        diff = np.take_along_axis(self.plus - self.minus, H, axis=1)
        return np.ldexp((G * diff).astype(np.float64), self.p_exp)

    def query_many(self, items) -> np.ndarray:
        vals = np.sort(self.row_estimates(items), axis=0)
        return vals[(vals.shape[0] - 1) // 2]

    def query(self, j: int) -> float:
        return float(self.query_many(np.array([j]))[0])

    def estimates(self) -> np.ndarray:
        return self.query_many(np.arange(self.config.n))

    def topk(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Best k-sparse approximation: (items, estimates), largest |y*| first."""
        y = self.estimates()
        order = np.lexsort((np.arange(len(y)), -np.abs(y)))[:k]
        return order, y[order]

    # -- space proxies and serialisation

    def max_counter(self) -> int:
        return int(max(self.plus.max(initial=0), self.minus.max(initial=0)))

    def max_counter_bits(self) -> int:
        return self.max_counter().bit_length()

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        header = {
            "version": _BLOB_VERSION,
            "config": asdict(self.config),
            "seed": self.seed,
            "p_exp": self.p_exp,
            "t": self.t,
            "failed": self.failed,
            "sampled_units": self.sampled_units,
            "rng": self.rng.bit_generator.state,
        }
        np.savez(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                 plus=self.plus, minus=self.minus)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CSSSTable":
        with np.load(io.BytesIO(blob)) as data:
            header = json.loads(data["header"].tobytes().decode())
            if header.get("version") != _BLOB_VERSION:
                raise ValueError(f"unsupported CSSS blob version {header.get('version')}")
            tbl = cls(CSSSConfig(**header["config"]), header["seed"])
            tbl.plus = data["plus"].copy()
            tbl.minus = data["minus"].copy()
        tbl.p_exp = header["p_exp"]
        tbl.t = header["t"]
        tbl.failed = header["failed"]
        tbl.sampled_units = header["sampled_units"]
        tbl.rng.bit_generator.state = header["rng"]
        return tbl


class PlainCSRow:
    """One exact Countsketch row: bucket b holds sum of g(i) f_i over h(i) = b."""

    def __init__(self, width: int, seed: int, n: int | None = None):
        self.width = int(width)
        self.h = KWiseHash(2, self.width, derive_seed(seed, "row-h"))
        self.g = SignHash(4, derive_seed(seed, "row-g"))
        self.buckets = np.zeros(self.width, dtype=np.int64)

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        np.add.at(self.buckets, self.h(index), self.g(index) * np.asarray(delta, dtype=np.int64))

    def update(self, index: int, delta: int) -> None:
        self.buckets[self.h(index)] += self.g(index) * delta

    def estimate(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        return self.g(items) * self.buckets[self.h(items)]

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.buckets.astype(np.float64) ** 2)))


def csss_update(tbl: CSSSTable, index: int, delta: int) -> None:
    tbl.update(index, delta)


def csss_query(tbl: CSSSTable, j: int) -> float:
    return tbl.query(j)


def csss_topk(tbl: CSSSTable, k: int):
    return tbl.topk(k)


def residual_row_norms(tbl: CSSSTable, items: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row L2 norms of ``tbl`` after feeding the vector -values on ``items``.

    The table is left untouched; the subtraction happens on a copy of the
    rescaled rows.
    """
    tbl._check()
    rows = tbl.scaled_rows()
    if len(items):
        Hall, Gall = tbl._item_hashes()
        items = np.asarray(items, dtype=np.int64)
        H, G = Hall[:, items], Gall[:, items]
        d, w = rows.shape
        cells = (np.arange(d)[:, None] * w + H).ravel()
        flat = rows.ravel()
        np.add.at(flat, cells, (-G * np.asarray(values, dtype=np.float64)).ravel())
        rows = flat.reshape(d, w)
    return np.sqrt(np.sum(rows**2, axis=1))


def estimate_tail_error(cs1: CSSSTable, cs2: CSSSTable, l1: float, k: int | None = None) -> float:
    """Estimate v with Err_2^k(f) <= v <= 45 sqrt(k) eps l1 + 20 Err_2^k(f).

    Takes the top-k approximation from ``cs1``, subtracts it from the rows
    of ``cs2``, and returns 2 * median row norm + 5 eps l1.
    """
    if cs1.config != cs2.config:
        raise ValueError("both tables must share a configuration")
    k = cs1.config.k if k is None else k
    items, values = cs1.topk(k)
    norms = np.sort(residual_row_norms(cs2, items, values))
    med = norms[(len(norms) - 1) // 2]
    return float(2.0 * med + 5.0 * cs1.config.eps * l1)


def tail_error(f: np.ndarray, k: int) -> float:
    """Err_2^k(f): L2 norm of f without its k largest-magnitude entries."""
    a = np.sort(np.abs(np.asarray(f, dtype=np.float64)))[::-1]
    return float(np.sqrt(np.sum(a[k:] ** 2)))
