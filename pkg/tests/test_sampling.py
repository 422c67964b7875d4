import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from deltasketch.sampling import (
    LevelScheduler,
    MorrisCounter,
    morris_estimate,
    morris_tick,
    sample_substream,
    sampling_lemma_rate,
    split_units,
)
from deltasketch.stream import StreamConfig, generate_stream


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=30), st.lists(st.integers(0, 200), max_size=6),
       st.integers(0, 50))
def test_split_units_partitions_every_unit(sizes, cuts, t0):
    sizes = np.array(sizes)
    pieces = split_units(sizes, t0, cuts)
    # rebuild the unit -> update map and compare with the naive expansion
    owner = np.repeat(np.arange(len(sizes)), sizes)
    rebuilt = []
    prev_hi = t0
    for lo, hi, k_lo, k_hi, counts in pieces:
        assert lo == prev_hi and counts.sum() == hi - lo
        rebuilt.extend(np.repeat(np.arange(k_lo, k_hi), counts).tolist())
        prev_hi = hi
        for c in cuts:
            assert not lo < c < hi
    assert rebuilt == owner.tolist()


def test_morris_zero_and_monotone():
    c = MorrisCounter()
    assert morris_estimate(c) == 0
    rng = np.random.default_rng(0)
    last = 0
    for _ in range(5000):
        morris_tick(c, rng)
        assert morris_estimate(c) >= last
        last = morris_estimate(c)


def test_morris_geometric_skips_match_coin_flips():
    # same law: compare mean 2^v after t ticks with the one-coin-per-unit counter
    rng = np.random.default_rng(1)
    t, runs = 500, 3000
    fast, slow = [], []
    for _ in range(runs):
        a = MorrisCounter()
        a.advance(t, rng)
        fast.append(2.0**a.v)
        b = MorrisCounter()
        for _ in range(t):
            b.tick(rng)
        slow.append(2.0**b.v)
    assert abs(np.mean(fast) - (t + 1)) / (t + 1) < 0.1
    assert abs(np.mean(slow) - (t + 1)) / (t + 1) < 0.1


def test_scheduler_exact_windows_are_half_open():
    sch = LevelScheduler(4, mode="exact")
    for t in range(1, 300):
        sch.advance(np.array([1]))
        want = {j for j in range(6) if 4**j <= t < 4 ** (j + 2)}
        assert set(sch.live) == want, t
    assert len(sch.live) <= 2


def test_scheduler_segments_cover_batch():
    sch = LevelScheduler(4, mode="morris", seed=3)
    sizes = np.random.default_rng(2).integers(1, 5, 400)
    segs = sch.advance(sizes)
    assert sum(int(s.counts.sum()) for s in segs) == sizes.sum()
    assert all(len(s.live) <= 2 for s in segs)


def test_oldest_level_covers_most_of_stream():
    # with an exact clock the oldest live level was born before s^(j+1)
    s = 16
    for m in (100, 1000, 5000, 70000):
        sch = LevelScheduler(s, mode="exact")
        sch.advance(np.ones(m, dtype=np.int64))
        j = sch.oldest()
        born = sch.live[j]
        assert m - born + 1 >= (1 - 2 / s) * m or m < s * s


def test_sampling_lemma_small_case():
    cfg = StreamConfig(n=128)
    eps, delta = 0.1, 0.01
    hits = 0
    for seed in range(30):
        s = generate_stream(cfg, 4.0, length=20000, seed=seed)
        f = s.frequencies()
        rate = sampling_lemma_rate(4.0, eps, delta, s.units)
        fs = sample_substream(s.index, s.delta, 128, rate, np.random.default_rng(seed))
        hits += np.abs(fs - f).max() <= eps * np.abs(f).sum()
    assert hits >= 28


def test_full_rate_is_exact():
    s = generate_stream(StreamConfig(n=64), 2.0, length=500, seed=0)
    out = sample_substream(s.index, s.delta, 64, 1.0, np.random.default_rng(0))
    assert np.array_equal(out, s.frequencies())
    assert math.isclose(sampling_lemma_rate(1, 0.5, 0.5, 1), 1.0)
