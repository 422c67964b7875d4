"""Turnstile streams, the exact oracle, and synthetic stream generators.

A stream is a sequence of updates (i, delta) to a frequency vector f over
a universe of size n.  ``ExactState`` keeps f together with the insertion
totals I and deletion magnitudes D, so f = I - D always holds.  A stream
has the L_p alpha-property when ||I + D||_p <= alpha ||f||_p; for p = 1
and unit updates this reads m <= alpha ||f||_1.

Streams are stored column-wise (``index`` and ``delta`` int64 arrays) so
sketches can consume them in batches.  Updates with |delta| > 1 are kept
as-is; the sketches expand them into consecutive unit updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator

import numpy as np

KINDS = ("strict-turnstile", "general-turnstile", "insertion-only")
SHAPES = ("uniform", "zipf", "single-heavy", "adversarial-cancel")


class StreamError(ValueError):
    """Invalid update or stream for the declared configuration."""


def is_power_of_two(x: int) -> bool:
    return x >= 1 and x & (x - 1) == 0


@dataclass(frozen=True)
class Update:
    index: int
    delta: int

    def __post_init__(self):
        if self.index < 0:
            raise StreamError("index must be nonnegative")
        if self.delta == 0:
            raise StreamError("delta must be nonzero")


@dataclass(frozen=True)
class StreamConfig:
    n: int
    m_max: int = 1 << 24
    M: int = 1 << 20
    kind: str = "strict-turnstile"

    def __post_init__(self):
        if not is_power_of_two(self.n):
            raise StreamError(f"n must be a power of two, got {self.n}")
        if self.kind not in KINDS:
            raise StreamError(f"unknown stream kind {self.kind!r}")
        if self.M < 1 or self.m_max < 1:
            raise StreamError("M and m_max must be positive")

    @property
    def log_n(self) -> int:
        return self.n.bit_length() - 1


class ExactState:
    """Brute-force oracle: exact f, I, D and the update count t."""

    def __init__(self, config: StreamConfig):
        self.config = config
        self.f = np.zeros(config.n, dtype=np.int64)
        self.I = np.zeros(config.n, dtype=np.int64)
        self.D = np.zeros(config.n, dtype=np.int64)
        self.t = 0

    def check(self, u: Update) -> None:
        cfg = self.config
        if u.index >= cfg.n:
            raise StreamError(f"index {u.index} outside [0, {cfg.n})")
        if abs(u.delta) > cfg.M:
            raise StreamError(f"|delta| = {abs(u.delta)} exceeds M = {cfg.M}")
        if cfg.kind == "insertion-only" and u.delta < 0:
            raise StreamError("deletion in an insertion-only stream")
        if cfg.kind == "strict-turnstile" and self.f[u.index] + u.delta < 0:
            raise StreamError(
                f"update ({u.index}, {u.delta}) drives f[{u.index}] = {self.f[u.index]} negative"
            )

    def apply(self, u: Update) -> "ExactState":
        self.check(u)
        self.f[u.index] += u.delta
        if u.delta > 0:
            self.I[u.index] += u.delta
        else:
            self.D[u.index] -= u.delta
        self.t += 1
        return self

    def replay(self, stream: "Stream") -> "ExactState":
        """Apply a whole stream; validates every prefix for strict kinds."""
        if stream.config.n != self.config.n:
            raise StreamError("universe size mismatch")
        idx, dl = stream.index, stream.delta
        if len(idx) == 0:
            return self
        if idx.min() < 0 or idx.max() >= self.config.n:
            raise StreamError("index outside the universe")
        if np.any(dl == 0):
            raise StreamError("zero delta in stream")
        if np.abs(dl).max() > self.config.M:
            raise StreamError("update magnitude exceeds M")
        kind = self.config.kind
        if kind == "insertion-only" and dl.min() < 0:
            raise StreamError("deletion in an insertion-only stream")
        if kind == "strict-turnstile":
            bad = first_negative_prefix(idx, dl, self.f)
            if bad is not None:
                raise StreamError(f"update {bad} drives f[{idx[bad]}] negative")
        np.add.at(self.f, idx, dl)
        np.add.at(self.I, idx, np.where(dl > 0, dl, 0))
        np.add.at(self.D, idx, np.where(dl < 0, -dl, 0))
        self.t += len(idx)
        return self

    def copy(self) -> "ExactState":
        other = ExactState(self.config)
        other.f[:] = self.f
        other.I[:] = self.I
        other.D[:] = self.D
        other.t = self.t
        return other

    @property
    def l1(self) -> int:
        return int(np.abs(self.f).sum())

    @property
    def l0(self) -> int:
        return int(np.count_nonzero(self.f))

    @property
    def f0(self) -> int:
        return int(np.count_nonzero(self.I + self.D))

    @property
    def units(self) -> int:
        """Stream length counted in unit updates, ||I + D||_1."""
        return int((self.I + self.D).sum())


def apply_update(state: ExactState, u: Update) -> ExactState:
    return state.apply(u)


def first_negative_prefix(index: np.ndarray, delta: np.ndarray, start=None) -> int | None:
    """Position of the first update leaving some f_i < 0, or None."""
    if len(index) == 0:
        return None
    order = np.argsort(index, kind="stable")
    si, sd = index[order], delta[order]
    running = np.cumsum(sd)
    heads = np.flatnonzero(np.r_[True, si[1:] != si[:-1]])
    offsets = np.repeat(running[heads] - sd[heads], np.diff(np.r_[heads, len(si)]))
    running = running - offsets
    if start is not None:
        running = running + start[si]
    neg = running < 0
    if not neg.any():
        return None
    return int(order[neg].min())


def alpha_lp(state: ExactState, p: int):
    """||I + D||_p / ||f||_p with the infinity and empty-stream conventions."""
    if p not in (0, 1):
        raise ValueError("p must be 0 or 1")
    touched = state.I + state.D
    if p == 1:
        num, den = int(touched.sum()), int(np.abs(state.f).sum())
    else:
        num, den = int(np.count_nonzero(touched)), int(np.count_nonzero(state.f))
    if den == 0:
        return 1 if num == 0 else math.inf
    return Fraction(num, den)


def strong_alpha(state: ExactState):
    """max_i (I_i + D_i) / |f_i| over touched coordinates."""
    touched = state.I + state.D
    mask = touched > 0
    if not mask.any():
        return 1
    absf = np.abs(state.f[mask])
    if np.any(absf == 0):
        return math.inf
    num = touched[mask]
    k = int(np.argmax(num / absf))
    best = Fraction(int(num[k]), int(absf[k]))
    # exact tie-break against float rounding
    close = np.flatnonzero(num / absf >= float(best) * (1 - 1e-12))
    return max(Fraction(int(num[j]), int(absf[j])) for j in close)


@dataclass
class Stream:
    config: StreamConfig
    index: np.ndarray
    delta: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = np.ascontiguousarray(self.index, dtype=np.int64)
        self.delta = np.ascontiguousarray(self.delta, dtype=np.int64)
        if self.index.shape != self.delta.shape or self.index.ndim != 1:
            raise StreamError("index and delta must be equal-length vectors")

    def __len__(self) -> int:
        return len(self.index)

    def __iter__(self) -> Iterator[Update]:
        for i, d in zip(self.index.tolist(), self.delta.tolist()):
            yield Update(i, d)

    @classmethod
    def from_updates(cls, config: StreamConfig, updates, metadata=None) -> "Stream":
        pairs = [(u.index, u.delta) if isinstance(u, Update) else tuple(u) for u in updates]
        arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(config, arr[:, 0], arr[:, 1], dict(metadata or {}))

    @property
    def units(self) -> int:
        return int(np.abs(self.delta).sum())

    def exact(self) -> ExactState:
        return ExactState(self.config).replay(self)

    def frequencies(self) -> np.ndarray:
        f = np.zeros(self.config.n, dtype=np.int64)
        np.add.at(f, self.index, self.delta)
        return f

    def __add__(self, other: "Stream") -> "Stream":
        if other.config.n != self.config.n:
            raise StreamError("cannot concatenate streams over different universes")
        return Stream(
            self.config,
            np.concatenate([self.index, other.index]),
            np.concatenate([self.delta, other.delta]),
        )

    def write(self, path) -> None:
        write_stream(self, path)


def write_stream(stream: Stream, path) -> None:
    cfg = stream.config
    lines = [f"# n={cfg.n} kind={cfg.kind} M={cfg.M}\n"]
    lines.extend(f"{i}\t{d}\n" for i, d in zip(stream.index.tolist(), stream.delta.tolist()))
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_stream(path) -> Stream:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise StreamError("missing '# n=<int> kind=<str> M=<int>' header")
    header = {}
    for token in lines[0][1:].split():
        key, _, value = token.partition("=")
        header[key] = value
    try:
        config = StreamConfig(n=int(header["n"]), kind=header["kind"], M=int(header["M"]))
    except KeyError as exc:
        raise StreamError(f"header is missing {exc.args[0]!r}") from None
    body = [ln for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    if not body:
        return Stream(config, np.zeros(0, np.int64), np.zeros(0, np.int64))
    try:
        arr = np.array([ln.split("\t") for ln in body], dtype=np.int64)
    except ValueError:
        raise StreamError("malformed update line; expected '<index>\\t<delta>'") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise StreamError("malformed update line; expected '<index>\\t<delta>'")
    stream = Stream(config, arr[:, 0], arr[:, 1])
    ExactState(config).replay(stream)
    return stream


# ---------------------------------------------------------------- generators


def _shape_weights(shape: str, support: int, rng, zipf_s: float, heavy_frac: float) -> np.ndarray:
    if shape in ("uniform", "adversarial-cancel"):
        w = np.ones(support)
    elif shape == "zipf":
        w = 1.0 / np.arange(1, support + 1) ** zipf_s
    elif shape == "single-heavy":
        if support == 1:
            return np.ones(1)
        w = np.full(support, (1.0 - heavy_frac) / (support - 1))
        w[0] = heavy_frac
    else:
        raise StreamError(f"unknown shape {shape!r}")
    return w / w.sum()


def _apportion(total: int, weights: np.ndarray, minimum: int = 0) -> np.ndarray:
    """Integer split of ``total`` proportional to weights (largest remainder)."""
    k = len(weights)
    base = np.full(k, minimum, dtype=np.int64)
    rest = total - minimum * k
    if rest < 0:
        raise StreamError("not enough mass for the requested support")
    raw = weights * rest
    out = np.floor(raw).astype(np.int64)
    short = rest - int(out.sum())
    if short:
        order = np.argsort(-(raw - out), kind="stable")
        out[order[:short]] += 1
    return base + out


def _order_events(items, signs, rng, strict: bool, front=None) -> tuple[np.ndarray, np.ndarray]:
    """Random interleaving of unit events; strict order keeps prefixes >= 0.

    Events flagged in ``front`` are placed first (in their own random order).
    """
    m = len(items)
    keys = rng.random(m)
    if front is not None:
        keys = keys + np.where(front, 0.0, 1.0)
    pos = np.empty(m, dtype=np.int64)
    pos[np.argsort(keys, kind="stable")] = np.arange(m)
    if strict:
        # pair the j-th deletion of each item with its j-th insertion and swap
        # the two time slots when the deletion came first
        order = np.lexsort((pos, signs < 0, items))
        it, sg, ps = items[order], signs[order], pos[order]
        grp = np.r_[True, (it[1:] != it[:-1]) | (sg[1:] != sg[:-1])]
        starts = np.flatnonzero(grp)
        rank = np.arange(m) - np.repeat(starts, np.diff(np.r_[starts, m]))
        ins = np.flatnonzero(sg > 0)
        dels = np.flatnonzero(sg < 0)
        key_ins = it[ins] * (m + 1) + rank[ins]
        key_del = it[dels] * (m + 1) + rank[dels]
        match = np.searchsorted(key_ins, key_del)
        a, b = ps[ins[match]], ps[dels]
        ps[ins[match]] = np.minimum(a, b)
        ps[dels] = np.maximum(a, b)
        pos = np.empty(m, dtype=np.int64)
        pos[order] = ps
    out_items = np.empty(m, dtype=np.int64)
    out_signs = np.empty(m, dtype=np.int64)
    out_items[pos] = items
    out_signs[pos] = signs
    return out_items, out_signs


def generate_stream(
    config: StreamConfig,
    target_alpha: float,
    p: int = 1,
    length: int = 1000,
    shape: str = "uniform",
    seed: int = 0,
    support: int | None = None,
    zipf_s: float = 1.1,
    heavy_frac: float = 0.5,
    require_deletions: bool = False,
) -> Stream:
    """Synthetic unit-update stream of ``length`` updates with alpha_lp <= target.

    For p=1 the final mass is ceil(length/alpha) and the remainder is spent
    on insert/delete pairs spread over the support in proportion to the
    final weights, so the strong alpha-property holds approximately too.
    For p=0, floor((alpha-1) * support) extra items are inserted and then
    fully deleted.  ``adversarial-cancel`` puts all the cancelling traffic
    at the front of the stream.
    """
    if target_alpha < 1:
        raise StreamError("target_alpha must be at least 1")
    if p not in (0, 1):
        raise StreamError("p must be 0 or 1")
    if shape not in SHAPES:
        raise StreamError(f"unknown shape {shape!r}")
    if length < 1:
        raise StreamError("length must be positive")
    insertion_only = config.kind == "insertion-only"
    if require_deletions and (insertion_only or target_alpha == 1):
        raise StreamError("deletions requested but alpha = 1 (or insertion-only) forbids them")
    rng = np.random.default_rng(seed)
    n = config.n
    strict = config.kind != "general-turnstile"
    alpha = 1.0 if insertion_only else float(target_alpha)

    if p == 1:
        mass = length if alpha == 1 else max(1, math.ceil(length / alpha))
        if (length - mass) % 2:
            mass += 1
        if mass > length:
            mass = length
        churn = (length - mass) // 2
        k = support if support is not None else min(n, max(1, mass // 4))
        k = min(k, n, mass)
        live = rng.choice(n, size=k, replace=False)
        w = _shape_weights(shape, k, rng, zipf_s, heavy_frac)
        final = _apportion(mass, w, minimum=1 if mass >= k else 0)
        if shape == "adversarial-cancel":
            # cancelling traffic goes to items outside the final support when possible
            spare = np.setdiff1d(np.arange(n), live)
            pool = spare if len(spare) else live
            c_items = rng.choice(pool, size=churn) if churn else np.zeros(0, np.int64)
            churn_per = np.bincount(c_items, minlength=n)[pool] if churn else np.zeros(len(pool), np.int64)
            churn_items = pool
        else:
            churn_per = _apportion(churn, final / final.sum()) if churn else np.zeros(k, np.int64)
            churn_items = live
        zombies = np.zeros(0, dtype=np.int64)
    else:
        k = support if support is not None else max(1, min(n // 2, length // 4))
        z = 0 if alpha == 1 else int(math.floor((alpha - 1) * k))
        z = min(z, n - k, length // 4)
        if 2 * z + k > length:
            raise StreamError("length too short for the requested support and alpha")
        chosen = rng.choice(n, size=k + z, replace=False)
        live, zombies = chosen[:k], chosen[k:]
        mass = length - 2 * z
        w = _shape_weights(shape, k, rng, zipf_s, heavy_frac)
        final = _apportion(mass, w, minimum=1)
        churn_items = zombies
        churn_per = np.ones(len(zombies), dtype=np.int64)

    signs_final = np.ones(len(live), dtype=np.int64)
    if config.kind == "general-turnstile":
        signs_final = rng.choice(np.array([-1, 1]), size=len(live))

    # unit events: the final mass, then churn pairs
    items = [np.repeat(live, final)]
    signs = [np.repeat(signs_final, final)]
    front = [np.zeros(int(final.sum()), dtype=bool)]
    churn_sign = np.ones(len(churn_items), dtype=np.int64)
    if config.kind == "general-turnstile":
        if p == 1 and shape != "adversarial-cancel":
            churn_sign = signs_final
        else:
            churn_sign = rng.choice(np.array([-1, 1]), size=len(churn_items))
    for sgn in (1, -1):
        items.append(np.repeat(churn_items, churn_per))
        signs.append(np.repeat(churn_sign * sgn, churn_per))
        front.append(np.full(int(churn_per.sum()), shape == "adversarial-cancel"))
    items = np.concatenate(items)
    signs = np.concatenate(signs)
    front = np.concatenate(front)
    if strict and np.any(signs[: int(final.sum())] < 0):
        raise StreamError("strict stream with negative final frequency")
    ev_items, ev_signs = _order_events(items, signs, rng, strict=strict, front=front)
    stream = Stream(config, ev_items, ev_signs)
    state = stream.exact()
    realized = alpha_lp(state, p)
    stream.metadata = {
        "target_alpha": float(target_alpha),
        "p": p,
        "shape": shape,
        "seed": int(seed),
        "realized_alpha": float(realized),
        "realized_strong_alpha": float(strong_alpha(state)),
        "length": len(stream),
    }
    if realized > target_alpha:
        raise StreamError(f"generator overshot alpha: {float(realized)} > {target_alpha}")
    return stream


def planted_stream(
    config: StreamConfig,
    final: dict[int, int] | np.ndarray,
    alpha: float = 1.0,
    seed: int = 0,
    churn_items: np.ndarray | None = None,
) -> Stream:
    """Stream with the given final frequencies and (alpha-1)/2 churn per unit.

    Churn pairs land on the final support in proportion to |f_i| unless
    ``churn_items`` is supplied.
    """
    rng = np.random.default_rng(seed)
    n = config.n
    if isinstance(final, dict):
        vec = np.zeros(n, dtype=np.int64)
        for i, v in final.items():
            vec[i] = v
    else:
        vec = np.asarray(final, dtype=np.int64)
    live = np.flatnonzero(vec)
    mags = np.abs(vec[live])
    sgn = np.sign(vec[live])
    mass = int(mags.sum())
    churn = int(math.floor((alpha - 1) * mass / 2))
    if churn_items is None:
        c_items, c_sign = live, sgn
        per = _apportion(churn, mags / max(mass, 1)) if churn and mass else np.zeros(len(live), np.int64)
    else:
        c_items = np.asarray(churn_items, dtype=np.int64)
        c_sign = np.ones(len(c_items), dtype=np.int64)
        per = _apportion(churn, np.full(len(c_items), 1.0 / len(c_items))) if churn else np.zeros(len(c_items), np.int64)
    items = np.concatenate([np.repeat(live, mags), np.repeat(c_items, per), np.repeat(c_items, per)])
    signs = np.concatenate([np.repeat(sgn, mags), np.repeat(c_sign, per), np.repeat(-c_sign, per)])
    strict = config.kind != "general-turnstile"
    ev_items, ev_signs = _order_events(items, signs, rng, strict=strict)
    stream = Stream(config, ev_items, ev_signs)
    state = stream.exact()
    stream.metadata = {
        "realized_alpha": float(alpha_lp(state, 1)),
        "realized_strong_alpha": float(strong_alpha(state)),
        "seed": int(seed),
    }
    return stream
