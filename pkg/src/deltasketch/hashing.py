"""Hash families and modular arithmetic shared by every sketch.

Hashes are polynomials of degree k-1 over the Mersenne field Z_p with
p = 2^61 - 1, which gives k-wise independence over the seed.  Evaluation
is vectorised over numpy uint64 arrays; the Mersenne modulus lets a
61x61-bit product be reduced with shifts and masks instead of division.

For moduli that are not Mersenne (random primes used by fingerprints and
the L0 cells) ``mulmod`` uses the long-double quotient trick, which is
exact for moduli below 2^61 on platforms with an 80-bit long double.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import sympy

MERSENNE61 = (1 << 61) - 1
_P61 = np.uint64(MERSENNE61)
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)
_U31 = np.uint64(31)
_U30 = np.uint64(30)
_U61 = np.uint64(61)

_LONGDOUBLE_OK = np.finfo(np.longdouble).nmant >= 63


def derive_seed(seed: int, *keys) -> int:
    """Child seed for a named component, stable across processes."""
    h = hashlib.blake2b(digest_size=8)
    h.update((int(seed) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    for key in keys:
        if isinstance(key, str):
            h.update(b"s" + key.encode() + b"\0")
        else:
            h.update(b"i" + (int(key) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def _reduce61(x: np.ndarray) -> np.ndarray:
    x = (x & _P61) + (x >> _U61)
    x = (x & _P61) + (x >> _U61)
    return np.where(x >= _P61, x - _P61, x)


def mulmod61(a, b) -> np.ndarray:
    """a*b mod 2^61-1 for uint64 arrays with entries below 2^61."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a1, a0 = a >> _U31, a & _MASK31
    b1, b0 = b >> _U31, b & _MASK31
    mid = a1 * b0 + a0 * b1
    # 2^62 = 2 (mod p) and mid*2^31 = (mid >> 30) + (mid & (2^30-1)) << 31
    x = (a1 * b1 << np.uint64(1)) + (mid >> _U30) + ((mid & _MASK30) << _U31) + _reduce61(a0 * b0)
    return _reduce61(x)


def mulmod(a, b, p: int) -> np.ndarray:
    """a*b mod p for arrays of residues in [0, p), any prime p < 2^61."""
    if p <= 0 or p >= 1 << 61:
        raise ValueError("modulus must be in (0, 2^61)")
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if p < 1 << 31:
        return (a * b) % np.uint64(p)
    if p == MERSENNE61:
        return mulmod61(a, b)
    if not _LONGDOUBLE_OK:
        out = [(int(x) * int(y)) % p for x, y in zip(a.ravel(), b.ravel())]
        return np.array(out, dtype=np.uint64).reshape(np.broadcast(a, b).shape)
    q = np.floor(a.astype(np.longdouble) * b.astype(np.longdouble) / np.longdouble(p))
    q = q.astype(np.uint64)
    # wraparound is intended: the true remainder fits in int64
    with np.errstate(over="ignore"):
        r = (a * b - q * np.uint64(p)).view(np.int64)
    pi = np.int64(p)
    r = np.where(r < 0, r + pi, r)
    r = np.where(r < 0, r + pi, r)
    r = np.where(r >= pi, r - pi, r)
    r = np.where(r >= pi, r - pi, r)
    return r.astype(np.uint64)


def powmod(base, exponent, p: int) -> np.ndarray:
    """Elementwise base**exponent mod p by square-and-multiply."""
    base = np.asarray(base, dtype=np.uint64) % np.uint64(p)
    e = np.asarray(exponent, dtype=np.uint64).copy()
    base, e = np.broadcast_arrays(base, e)
    base = base.copy()
    e = e.copy()
    result = np.full(base.shape, 1 % p, dtype=np.uint64)
    while np.any(e):
        odd = (e & np.uint64(1)).astype(bool)
        if odd.any():
            result[odd] = mulmod(result[odd], base[odd], p)
        e >>= np.uint64(1)
        base = mulmod(base, base, p)
    return result


def to_residue(x, p: int) -> np.ndarray:
    """Signed integers mapped into [0, p)."""
    return (np.asarray(x, dtype=np.int64) % np.int64(p)).astype(np.uint64)


def summod(values, p: int) -> int:
    """Sum of residues mod p without overflowing 64 bits."""
    v = np.asarray(values, dtype=np.uint64)
    hi = int((v >> _U31).sum(dtype=np.uint64))
    lo = int((v & _MASK31).sum(dtype=np.uint64))
    return ((hi % p) * (1 << 31) + lo) % p


def bucket_summod(buckets, values, size: int, p: int) -> np.ndarray:
    """Per-bucket sums of residues mod p; returns uint64 array of ``size``."""
    v = np.asarray(values, dtype=np.uint64)
    b = np.asarray(buckets, dtype=np.int64)
    hi = np.zeros(size, dtype=np.uint64)
    lo = np.zeros(size, dtype=np.uint64)
    np.add.at(hi, b, v >> _U31)
    np.add.at(lo, b, v & _MASK31)
    hi %= np.uint64(p)
    lo %= np.uint64(p)
    return (mulmod(hi, np.uint64((1 << 31) % p), p) + lo) % np.uint64(p)


class KWiseHash:
    """Degree k-1 polynomial over GF(2^61-1), reduced into ``range(out)``.

    ``domain`` is only checked, never used in the arithmetic: any key below
    the field prime is a valid input.
    """

    def __init__(self, k: int, out: int, seed: int, domain: int | None = None):
        if k < 1:
            raise ValueError("k must be at least 1")
        if out < 1:
            raise ValueError("range must be positive")
        if domain is not None and domain > MERSENNE61:
            raise ValueError("domain exceeds the field size")
        self.k = int(k)
        self.out = int(out)
        self.seed = int(seed)
        self.domain = domain
        rng = rng_for(seed, "kwise", k)
        self.coeffs = rng.integers(0, MERSENNE61, size=self.k, dtype=np.uint64)
        self._coeffs_int = [int(c) for c in self.coeffs]

    @classmethod
    def from_coeffs(cls, coeffs, out: int) -> "KWiseHash":
        obj = cls.__new__(cls)
        obj.k = len(coeffs)
        obj.out = int(out)
        obj.seed = None
        obj.domain = None
        obj.coeffs = np.asarray(coeffs, dtype=np.uint64).copy()
        obj._coeffs_int = [int(c) for c in obj.coeffs]
        return obj

    @property
    def field_prime(self) -> int:
        return MERSENNE61

    def field_value(self, x):
        """Raw polynomial value in [0, 2^61-1) before range reduction."""
        if np.isscalar(x) or isinstance(x, int):
            xi = int(x) % MERSENNE61
            acc = 0
            for c in reversed(self._coeffs_int):
                acc = (acc * xi + c) % MERSENNE61
            return acc
        xs = np.asarray(x)
        if xs.dtype.kind == "i" and xs.size and xs.min() < 0:
            raise ValueError("keys must be nonnegative")
        xs = xs.astype(np.uint64) % _P61
        acc = np.full(xs.shape, self.coeffs[-1], dtype=np.uint64)
        for c in self.coeffs[-2::-1]:
            acc = mulmod61(acc, xs) + c
            acc = np.where(acc >= _P61, acc - _P61, acc)
        return acc

    def __call__(self, x):
        v = self.field_value(x)
        if isinstance(v, int):
            return v % self.out
        return (v % np.uint64(self.out)).astype(np.int64)

    def unit(self, x):
        """Map keys to floats strictly inside (0, 1)."""
        v = self.field_value(x)
        return (np.asarray(v, dtype=np.float64) + 0.5) / MERSENNE61


class HashBank:
    """``rows`` independent k-wise hashes evaluated together.

    Calling the bank on keys of shape (m,) returns an array of shape
    (rows, m).  Row r is the same function as ``bank.row(r)``.
    """

    def __init__(self, rows: int, k: int, out: int, seed: int, key: str = "bank"):
        if rows < 1 or k < 1 or out < 1:
            raise ValueError("rows, k and range must be positive")
        self.rows, self.k, self.out = int(rows), int(k), int(out)
        rng = rng_for(seed, key, rows, k)
        self.coeffs = rng.integers(0, MERSENNE61, size=(self.rows, self.k), dtype=np.uint64)

    def field_values(self, x) -> np.ndarray:
        xs = np.asarray(x).astype(np.uint64) % _P61
        acc = np.repeat(self.coeffs[:, -1:], len(xs), axis=1)
        for j in range(self.k - 2, -1, -1):
            acc = mulmod61(acc, xs[None, :]) + self.coeffs[:, j : j + 1]
            acc = np.where(acc >= _P61, acc - _P61, acc)
        return acc

    def __call__(self, x) -> np.ndarray:
        return (self.field_values(x) % np.uint64(self.out)).astype(np.int64)

    def signs(self, x) -> np.ndarray:
        return 1 - 2 * (self.field_values(x) & np.uint64(1)).astype(np.int64)

    def row(self, r: int) -> "KWiseHash":
        return KWiseHash.from_coeffs(self.coeffs[r], self.out)


class SignHash:
    """k-wise independent +-1 values from the low bit of a field hash."""

    def __init__(self, k: int, seed: int):
        self._h = KWiseHash(k, 2, seed)

    def __call__(self, x):
        v = self._h(x)
        if isinstance(v, int):
            return 1 - 2 * v
        return 1 - 2 * v


def kwise_eval(h: KWiseHash, x):
    return h(x)


def pairwise_seeds(seed: int, count: int) -> list[int]:
    """Row seeds a*r + b mod p drawn from a pairwise independent family."""
    rng = rng_for(seed, "pairwise-rows")
    a = int(rng.integers(1, MERSENNE61))
    b = int(rng.integers(0, MERSENNE61))
    return [(a * r + b) % MERSENNE61 for r in range(count)]


@dataclass(frozen=True)
class RandomPrime:
    lo: int
    hi: int
    value: int

    def __int__(self) -> int:
        return self.value


def is_prime(x: int) -> bool:
    return bool(sympy.isprime(int(x)))


def sample_prime(lo: int, hi: int, rng: np.random.Generator) -> RandomPrime:
    """Uniform prime in [lo, hi] by rejection sampling on uniform integers."""
    lo, hi = int(lo), int(hi)
    if lo < 2 or hi < lo:
        raise ValueError("need 2 <= lo <= hi")
    first = sympy.nextprime(lo - 1)
    if first > hi:
        raise ValueError(f"no prime in [{lo}, {hi}]")
    span = hi - lo + 1
    while True:
        if span < 1 << 62:
            x = lo + int(rng.integers(0, span))
        else:
            x = lo + int.from_bytes(rng.bytes(16), "little") % span
        if sympy.isprime(x):
            return RandomPrime(lo, hi, x)


def bits_low_first(x: int):
    x = int(x)
    if x < 0:
        raise ValueError("x must be nonnegative")
    while x:
        yield x & 1
        x >>= 1


def mod_reduce_streaming(bits, p: int) -> int:
    """x mod p from x's bits, least significant first.

    Keeps one residue accumulator and the running power 2^t mod p.
    """
    if p < 1 or p >= 1 << 62:
        raise ValueError("need 1 <= p < 2^62")
    acc = 0
    power = 1 % p
    for b in bits:
        if b:
            acc += power
            if acc >= p:
                acc -= p
        power <<= 1
        if power >= p:
            power -= p
    return acc


def stable_round(value, delta_prec: float):
    return np.round(np.asarray(value, dtype=np.float64) / delta_prec) * delta_prec


@dataclass(frozen=True)
class StableVariate:
    theta: float
    value: float

    @classmethod
    def from_theta(cls, theta: float, delta_prec: float) -> "StableVariate":
        if delta_prec <= 0:
            raise ValueError("delta_prec must be positive")
        return cls(float(theta), float(stable_round(math.tan(theta), delta_prec)))


def stable_draw(seed: int, index: int, delta_prec: float, k: int = 8) -> StableVariate:
    """Cauchy variate tan(theta) for item ``index`` of the stream seeded by ``seed``."""
    if delta_prec <= 0:
        raise ValueError("delta_prec must be positive")
    h = KWiseHash(k, 2, seed)
    u = float(h.unit(int(index)))
    return StableVariate.from_theta(math.pi * (u - 0.5), delta_prec)


def stable_vector(seed: int, n: int, delta_prec: float, k: int = 8) -> np.ndarray:
    """The ``stable_draw`` values for items 0..n-1, vectorised."""
    if delta_prec <= 0:
        raise ValueError("delta_prec must be positive")
    h = KWiseHash(k, 2, seed)
    u = h.unit(np.arange(n, dtype=np.uint64))
    return stable_round(np.tan(np.pi * (u - 0.5)), delta_prec)
