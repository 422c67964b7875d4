"""Precision-sampling L1 sampler for strict-turnstile streams.

Each item gets a scalar t_i uniform in (0, 1] and the sketch tracks the
scaled vector z_i = f_i / t_i with two CSSS tables, plus exact running
sums r = ||f||_1 and q = ||z||_1.  Item i crosses |z_i| >= r / eps with
probability eps |f_i| / ||f||_1, so reporting the largest |y*_i| when it
clears that threshold samples i proportionally to its weight.  Two checks
guard the answer: the tail error estimate v must be small (otherwise the
CSSS estimates are not trusted) and the maximum must be a visible share
of q.

t_i is j_i / Q with Q = n^3 and j_i in [1, Q], so z is kept in fixed
point with denominator Q and r, q stay exact integers.
"""

from __future__ import annotations

import math

import numpy as np

from .csss import CSSSConfig, CSSSTable, estimate_tail_error
from .hashing import KWiseHash, derive_seed
from .l1_estimator import GeneralL1Config, GeneralL1Estimator


class _Fail:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "FAIL"

    def __bool__(self) -> bool:
        return False


FAIL = _Fail()

# heaviness constant: below calibrate_c_prop on uniform f for n in [16, 2^16], eps <= 1/4
C_PROP = 32.0


class PrecisionScaler:
    """t_i = j_i / Q with j_i = 1 + h(i) mod Q for a k-wise hash h."""

    def __init__(self, n: int, eps: float, seed: int, k_ind: int | None = None):
        self.n = int(n)
        self.Q = self.n**3
        if k_ind is None:
            k_ind = max(2, math.ceil(2 * math.log2(1 / eps)))
        self.k_ind = k_ind
        self.h = KWiseHash(k_ind, self.Q, seed)
        self.j = self.h(np.arange(self.n)) + 1
        # z per unit of f, in units of 1/Q
        self.scale = np.rint(float(self.Q) ** 2 / self.j).astype(np.int64)

    def t(self, i=None):
        if i is None:
            return self.j / self.Q
        return self.j[i] / self.Q


class L1Sampler:
    def __init__(
        self,
        n: int,
        eps: float,
        seed: int = 0,
        k: int | None = None,
        alpha: float = 1.0,
        c_prop: float = C_PROP,
        mode: str = "strict",
        c_d: float = 2.0,
        c_S: float = 1.0,
        k_ind: int | None = None,
    ):
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if mode not in ("strict", "general"):
            raise ValueError("mode must be 'strict' or 'general'")
        if n**6 >= 1 << 62:
            raise ValueError("n^6 must fit a 62-bit counter")
        self.n, self.eps, self.mode = n, eps, mode
        self.c_prop = c_prop
        self.log_n = math.log2(n)
        self.eps_c = eps**3 / self.log_n**2
        if k is None:
            k = max(4, math.ceil(4 * math.log2(1 / eps)))
        self.k = k
        self.scaler = PrecisionScaler(n, eps, derive_seed(seed, "l1s-t"), k_ind)
        self.Q = self.scaler.Q
        cfg = CSSSConfig(n=n, k=k, eps=self.eps_c, alpha=alpha, c_d=c_d, c_S=c_S)
        self.cs1 = CSSSTable(cfg, derive_seed(seed, "l1s-cs1"))
        self.cs2 = CSSSTable(cfg, derive_seed(seed, "l1s-cs2"))
        self.r = 0
        self.q_units = 0
        self.r_est = self.q_est = None
        if mode == "general":
            # constant-factor norms suffice; z is fed rounded to whole units
            self.r_est = GeneralL1Estimator(GeneralL1Config(n=n, eps=0.25, c_r=8), derive_seed(seed, "l1s-r"))
            self.q_est = GeneralL1Estimator(
                GeneralL1Config(n=n, eps=0.25, c_r=8, m_max=1 << 12), derive_seed(seed, "l1s-q")
            )

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        index = np.asarray(index, dtype=np.int64)
        delta = np.asarray(delta, dtype=np.int64)
        w = delta * self.scaler.scale[index]
        self.cs1.update_many(index, w)
        self.cs2.update_many(index, w)
        self.r += int(delta.sum())
        self.q_units += int(w.sum())
        if self.r_est is not None:
            self.r_est.update_many(index, delta)
            wz = delta * np.maximum(1, np.rint(self.Q / self.scaler.j[index]).astype(np.int64))
            self.q_est.update_many(index, wz)

    def consume(self, stream) -> "L1Sampler":
        self.update_many(stream.index, stream.delta)
        return self

    def norms(self) -> tuple[float, float]:
        """(r, q) in units of f and z."""
        if self.mode == "strict":
            return float(self.r), self.q_units / self.Q
        return self.r_est.estimate(), self.q_est.estimate()

    def query(self):
        """(index, estimate of f_index), or FAIL."""
        r, q = self.norms()
        if not r > 0 or not q > 0:
            return FAIL
        y = self.cs1.estimates() / self.Q
        v = estimate_tail_error(self.cs1, self.cs2, q * self.Q) / self.Q
        sk = math.sqrt(self.k)
        if v > sk * r + 45 * sk * self.eps_c * q:
            return FAIL
        i = int(np.argmax(np.abs(y)))
        need = max(r / self.eps, (self.c_prop / 2) * (self.eps**2 / self.log_n**2) * q)
        if abs(y[i]) < need:
            return FAIL
        return i, float(self.scaler.t(i) * y[i])


def l1s_update(st: L1Sampler, index: int, delta: int) -> None:
    st.update(index, delta)


def l1s_query(st: L1Sampler):
    return st.query()


def instance_count(eps: float, delta: float, c: float = 2.0) -> int:
    return max(1, math.ceil(c * (1 / eps) * math.log(1 / delta)))


def l1s_sample(stream, eps: float, delta: float, seed: int = 0, c: float = 2.0, **kw):
    """First non-FAIL answer among c (1/eps) ln(1/delta) independent samplers."""
    for inst in range(instance_count(eps, delta, c)):
        st = L1Sampler(stream.config.n, eps, seed=derive_seed(seed, "l1s-inst", inst), **kw)
        out = st.consume(stream).query()
        if out is not FAIL:
            return out
    return FAIL


def heaviness_ratios(f: np.ndarray, eps: float, trials: int, seed: int = 0) -> np.ndarray:
    """max_j |z_j| / ((eps^2 / log^2 n) ||z||_1) for fresh uniform scalings."""
    f = np.abs(np.asarray(f, dtype=np.float64))
    n = len(f)
    rng = np.random.default_rng(derive_seed(seed, "c-prop"))
    t = 1.0 - rng.random((trials, n))
    z = f / t
    scale = eps**2 / math.log2(max(n, 2)) ** 2
    return z.max(axis=1) / (scale * z.sum(axis=1))


def calibrate_c_prop(f: np.ndarray, eps: float, trials: int = 10000, seed: int = 0) -> float:
    """Largest c with max |z_j| >= c (eps^2/log^2 n) ||z||_1 in a 1 - eps share of draws."""
    return float(np.quantile(heaviness_ratios(f, eps, trials, seed), eps))
