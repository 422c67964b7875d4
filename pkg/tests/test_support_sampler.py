import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from deltasketch.hashing import KWiseHash
from deltasketch.stream import StreamConfig, generate_stream, planted_stream
from deltasketch.support_sampler import (
    DENSE,
    SparseRecoverySketch,
    SRParams,
    SupportSampler,
    _Instance,
    sr_decode,
    sr_update,
    ss_query,
    ss_update,
)


def test_empty_and_single():
    pr = SRParams(1024, 8, seed=1)
    sk = SparseRecoverySketch(pr)
    assert sr_decode(sk) == {}
    sr_update(sk, 77, 5)
    assert sr_decode(sk) == {77: 5}
    sr_update(sk, 77, -5)
    assert sr_decode(sk) == {}


def test_negative_values_recovered():
    sk = SparseRecoverySketch(SRParams(1024, 8, seed=2))
    sk.update_many(np.array([3, 9, 3]), np.array([4, -2, 1]))
    assert sr_decode(sk) == {3: 5, 9: -2}


def test_sparse_and_dense_plants():
    s, n = 40, 1 << 14
    exact = dense = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pr = SRParams(n, s, seed=seed)
        items = rng.choice(n, 3 * s, replace=False)
        vals = rng.integers(1, 20, 3 * s)
        a = SparseRecoverySketch(pr)
        a.update_many(items[:s], vals[:s])
        exact += a.decode() == dict(zip(items[:s].tolist(), vals[:s].tolist()))
        b = SparseRecoverySketch(pr)
        b.update_many(items, vals)
        dense += b.decode() is DENSE
    assert exact >= 95 and dense >= 95


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 511), st.integers(-5, 5).filter(bool)), max_size=40),
       st.lists(st.tuples(st.integers(0, 511), st.integers(-5, 5).filter(bool)), max_size=40))
def test_linearity(u1, u2):
    pr = SRParams(512, 16, seed=7)
    a, b, c = SparseRecoverySketch(pr), SparseRecoverySketch(pr), SparseRecoverySketch(pr)
    for sk, ups in ((a, u1), (b, u2), (c, u1 + u2)):
        for i, d in ups:
            sk.update(i, d)
    ab = a + b
    assert np.array_equal(ab.count, c.count) and np.array_equal(ab.isum, c.isum)
    assert np.array_equal(ab.fp, c.fp)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.integers(0, 511), st.integers(-9, 9).filter(bool), max_size=16))
def test_decode_never_lies(vec):
    sk = SparseRecoverySketch(SRParams(512, 16, seed=11))
    for i, v in vec.items():
        sk.update(i, v)
    out = sk.decode()
    assert out is DENSE or out == vec


def test_levels_nest_and_top_level_is_everything():
    inst = _Instance(1024, 40, 2.0, 1 / 48, seed=3)
    hv = inst.h(np.arange(1024)) + 1
    jmin = np.ceil(np.log2(hv)).astype(int)
    assert jmin.max() <= inst.log_n
    # an item with h(i) = 0 would sit in every level
    assert np.all(jmin[hv == 1] == 0)


def test_level_population():
    n, L0, j = 1 << 14, 1000, 10
    supp = np.random.default_rng(0).choice(n, L0, replace=False)
    counts = [np.count_nonzero(KWiseHash(2, n, seed)(supp) + 1 <= 2**j) for seed in range(300)]
    mean = L0 * 2**j / n
    assert abs(np.mean(counts) - mean) <= 4 * math.sqrt(mean / 300)


def test_retired_levels_never_return():
    # a narrow window (eps = 1/2) so levels actually retire at this size
    inst = _Instance(1 << 12, 40, 1.0, 0.5, seed=5)
    s = generate_stream(StreamConfig(n=1 << 12), 1.0, p=0, length=6000, seed=2, support=3000)
    gone = set()
    for lo in range(0, len(s), 100):
        inst.update_many(s.index[lo : lo + 100], s.delta[lo : lo + 100])
        gone.update(inst.retired)
        assert gone.isdisjoint(inst.levels())
    assert gone


def test_empty_stream():
    assert ss_query(SupportSampler(1024, 5, seed=1)) == set()


def test_sparse_stream_recovers_support():
    final = {i * 37 % 1024: i + 1 for i in range(50)}
    s = planted_stream(StreamConfig(n=1024), final, alpha=3.0, seed=0)
    st_ = SupportSampler(1024, 5, alpha=3.0, seed=4).consume(s)
    ss_update(st_, 1000, 1)
    ss_update(st_, 1000, -1)
    assert ss_query(st_) == set(final)


def test_sound_and_large_enough():
    n = 1 << 14
    ok = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        final = {int(i): int(rng.integers(1, 4)) for i in perm[:1000]}
        s = planted_stream(StreamConfig(n=n), final, alpha=4.0, seed=seed, churn_items=perm[1000:3000])
        U = SupportSampler(n, 20, delta=0.1, alpha=4.0, seed=seed).consume(s).query()
        assert U <= set(final)
        ok += len(U) >= 20
    assert ok >= 9
