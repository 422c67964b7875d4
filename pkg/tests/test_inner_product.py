import numpy as np
import pytest

from deltasketch.inner_product import IntervalMismatch, IPSharedSeed, IPSketch, ip_estimate, ip_update
from deltasketch.stream import StreamConfig, generate_stream, planted_stream


def test_point_mass_rate_one():
    shared = IPSharedSeed(64, 0.25, s=256, seed=1)
    a, b = IPSketch(shared, 1), IPSketch(shared, 2)
    for _ in range(7):
        ip_update(a, 5, 1)
        ip_update(b, 5, 1)
    assert ip_estimate(a, b) == 49


def test_empty_streams():
    shared = IPSharedSeed(64, 0.25, s=16)
    assert ip_estimate(IPSketch(shared), IPSketch(shared)) == 0.0


def test_requires_shared_seed():
    a = IPSketch(IPSharedSeed(64, 0.25, s=16, seed=1))
    b = IPSketch(IPSharedSeed(64, 0.25, s=16, seed=1))
    with pytest.raises(ValueError):
        ip_estimate(a, b)


def test_rate_one_equals_plain_countsketch_dot():
    cfg = StreamConfig(n=512)
    sf = generate_stream(cfg, 3.0, length=3000, seed=1)
    sg = generate_stream(cfg, 3.0, length=3000, seed=2)
    shared = IPSharedSeed(512, 0.25, s=256, seed=3)
    est = ip_estimate(IPSketch(shared, 1).consume(sf), IPSketch(shared, 2).consume(sg))
    prime, h, g = shared.level(0)
    assert prime > 512
    F, G = {}, {}
    for vec, acc in ((sf.frequencies(), F), (sg.frequencies(), G)):
        for i, v in enumerate(vec.tolist()):
            if v:
                acc[h(i)] = acc.get(h(i), 0) + g(i) * v
    assert est == sum(F[b] * G.get(b, 0) for b in F)


def test_streaming_reduction_matches_batch():
    shared = IPSharedSeed(256, 0.25, s=64, seed=4)
    s = generate_stream(StreamConfig(n=256), 2.0, length=600, seed=5)
    a = IPSketch(shared, 9).consume(s)
    b = IPSketch(shared, 9)
    for u in s:
        b.update(u.index, u.delta)
    assert a.live() == b.live() == (0, 1)
    # level 0 samples at rate 1, so the two paths must agree cell for cell
    assert np.array_equal(a.cs[0], b.cs[0])


def test_intervals_retire_and_spawn():
    shared = IPSharedSeed(64, 0.25, s=4, seed=0)
    sk = IPSketch(shared, 0)
    seen = []
    for t in range(1, 100):
        sk.update(t % 64, 1)
        seen.append(sk.live())
        assert len(sk.live()) <= 2
    assert seen[0] == (0,) and seen[-1] == (2, 3)
    assert [r for r, _ in sk.retired] == [0, 1]


def test_interval_mismatch():
    shared = IPSharedSeed(64, 0.25, s=4, seed=0)
    a, b = IPSketch(shared), IPSketch(shared)
    a.update_many(np.zeros(3, np.int64), np.ones(3, np.int64))
    b.update_many(np.zeros(300, np.int64), np.ones(300, np.int64))
    with pytest.raises(IntervalMismatch):
        ip_estimate(a, b)


def test_samples_per_interval_at_most_2s2():
    s = 8
    stored = []
    for seed in range(30):
        shared = IPSharedSeed(64, 0.25, s=s, seed=seed)
        sk = IPSketch(shared, seed)
        sk.update_many(np.arange(20000) % 64, np.ones(20000, np.int64))
        stored.extend(c for _, c in sk.retired)
    assert np.mean(stored) <= 2 * s * s


def test_disjoint_supports():
    cfg = StreamConfig(n=4096)
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(4096)
        f = {int(i): int(rng.integers(1, 50)) for i in perm[:200]}
        g = {int(i): int(rng.integers(1, 50)) for i in perm[200:400]}
        sf = planted_stream(cfg, f, alpha=2.0, seed=seed)
        sg = planted_stream(cfg, g, alpha=2.0, seed=seed + 1000)
        shared = IPSharedSeed(4096, 0.25, alpha=2.0, s=256, seed=seed)
        est = ip_estimate(IPSketch(shared, 1).consume(sf), IPSketch(shared, 2).consume(sg))
        ok += abs(est) <= 0.25 * sum(f.values()) * sum(g.values())
    assert ok >= 75


def test_identities_stay_distinct_mod_prime():
    ok = 0
    for seed in range(100):
        shared = IPSharedSeed(1 << 16, 0.25, s=256, seed=seed)
        prime = shared.level(1)[0]
        ids = np.random.default_rng(seed).choice(1 << 16, 2000, replace=False)
        ok += len(np.unique(ids % prime)) == len(ids)
    assert ok >= 99
