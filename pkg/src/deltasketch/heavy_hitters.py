"""L1 eps-heavy hitters on top of CSSS.

Run CSSS with k = 32/eps and accuracy eps/32, so every estimate is within
(eps/8)||f||_1 of the truth.  Given R within (1 +- 1/8) of ||f||_1, the
cut |y*_i| >= 3 eps R / 4 keeps every item with |f_i| >= eps ||f||_1 and
drops every item with |f_i| < (eps/2) ||f||_1.

In a strict-turnstile stream the running sum of deltas is exactly ||f||_1.
In a general-turnstile stream R comes from the Cauchy L1 estimator run at
accuracy 1/8.
"""

from __future__ import annotations

import math

import numpy as np

from .csss import CSSSConfig, CSSSTable
from .hashing import derive_seed
from .l1_estimator import GeneralL1Config, GeneralL1Estimator


class NormUnavailable(RuntimeError):
    """The general-mode norm estimator failed to produce a value."""


class HeavyHitters:
    def __init__(
        self,
        n: int,
        eps: float,
        alpha: float = 1.0,
        mode: str = "strict",
        seed: int = 0,
        c_d: float = 2.0,
        c_T: float = 1.0,
        c_S: float = 1.0,
        norm_eps: float = 1 / 8,
        norm_rows: float = 12.0,
        norm_delta: float = 0.1,
    ):
        if mode not in ("strict", "general"):
            raise ValueError("mode must be 'strict' or 'general'")
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        self.eps = eps
        self.mode = mode
        self.config = CSSSConfig(
            n=n, k=math.ceil(32 / eps), eps=eps / 32, alpha=alpha, c_d=c_d, c_T=c_T, c_S=c_S
        )
        self.csss = CSSSTable(self.config, derive_seed(seed, "hh-csss"))
        self.r_exact = 0
        self.r_est = None
        if mode == "general":
            cfg = GeneralL1Config(n=n, eps=norm_eps, delta=norm_delta, alpha=alpha, c_r=norm_rows)
            self.r_est = GeneralL1Estimator(cfg, derive_seed(seed, "hh-norm"))

    def update(self, index: int, delta: int) -> None:
        self.update_many(np.array([index]), np.array([delta]))

    def update_many(self, index, delta) -> None:
        delta = np.asarray(delta, dtype=np.int64)
        self.csss.update_many(index, delta)
        self.r_exact += int(delta.sum())
        if self.r_est is not None:
            self.r_est.update_many(index, delta)

    def consume(self, stream) -> "HeavyHitters":
        self.update_many(stream.index, stream.delta)
        return self

    def norm(self) -> float:
        if self.mode == "strict":
            return float(self.r_exact)
        value = self.r_est.estimate()
        if math.isnan(value):
            raise NormUnavailable("general L1 estimator failed")
        return value

    def query(self, eps: float | None = None, R: float | None = None) -> np.ndarray:
        """Sorted item ids with |y*_i| >= 3 eps R / 4 (and y*_i nonzero)."""
        eps = self.eps if eps is None else eps
        R = self.norm() if R is None else R
        y = self.csss.estimates()
        keep = (np.abs(y) >= 0.75 * eps * R) & (y != 0)
        return np.flatnonzero(keep)


def hh_update(st: HeavyHitters, index: int, delta: int) -> None:
    st.update(index, delta)


def hh_query(st: HeavyHitters, eps: float | None = None) -> set:
    return set(st.query(eps).tolist())


def hh_general_norm(st: HeavyHitters) -> float:
    if st.mode != "general":
        raise ValueError("hh_general_norm needs a general-mode sketch")
    return st.norm()
