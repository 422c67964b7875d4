import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltasketch.csss import (
    CSSSConfig,
    CSSSTable,
    PlainCSRow,
    SketchFailed,
    csss_query,
    csss_topk,
    csss_update,
    estimate_tail_error,
    tail_error,
)
from deltasketch.sampling import sample_substream
from deltasketch.stream import StreamConfig, generate_stream, planted_stream


def config_with_S(S, n=256, k=4, eps=0.1, alpha=1.0, **kw):
    base = CSSSConfig(n=n, k=k, eps=eps, alpha=alpha, **kw).S
    return CSSSConfig(n=n, k=k, eps=eps, alpha=alpha, c_S=S / base, **kw)


def brute_countsketch(tbl, f):
    """Median over rows of the exact Countsketch, evaluated item by item."""
    d, w = tbl.config.d, tbl.config.width
    out = np.zeros(len(f))
    rows = []
    for r in range(d):
        h, g = tbl.hg.row(r), tbl.hg.row(d + r)
        b = [0] * w
        for i, v in enumerate(f):
            if v:
                b[h(i) % w] += (1 - 2 * (g.field_value(i) & 1)) * int(v)
        rows.append([(1 - 2 * (g.field_value(i) & 1)) * b[h(i) % w] for i in range(len(f))])
    rows = np.sort(np.array(rows, dtype=np.float64), axis=0)
    out[:] = rows[(d - 1) // 2]
    return out


def test_empty_table_queries_zero():
    tbl = CSSSTable(CSSSConfig(n=64, k=2, eps=0.1))
    assert csss_query(tbl, 5) == 0
    assert not tbl.estimates().any()


def test_single_item_exact():
    tbl = CSSSTable(CSSSConfig(n=64, k=2, eps=0.1), seed=3)
    for _ in range(7):
        csss_update(tbl, 9, 1)
    assert tbl.p_exp == 0 and csss_query(tbl, 9) == 7
    # every row stores the 7 units in the plus or minus cell of the item
    H, G = tbl.buckets(np.array([9]))
    for r in range(tbl.config.d):
        cell = (tbl.plus if G[r, 0] > 0 else tbl.minus)[r, H[r, 0]]
        assert cell == 7


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 31), st.integers(1, 4)), min_size=1, max_size=40), st.integers(0, 1000))
def test_unsampled_equals_plain_countsketch(ups, seed):
    cfg = CSSSConfig(n=32, k=2, eps=0.1)
    tbl = CSSSTable(cfg, seed)
    f = np.zeros(32, dtype=np.int64)
    for i, d in ups:
        tbl.update(i, d)
        f[i] += d
    assert tbl.p_exp == 0
    assert np.array_equal(tbl.estimates(), brute_countsketch(tbl, f))


def test_batch_and_single_updates_agree_before_sampling():
    s = generate_stream(StreamConfig(n=128), 3.0, length=400, seed=1)
    cfg = CSSSConfig(n=128, k=4, eps=0.1)
    a = CSSSTable(cfg, 5).consume(s)
    b = CSSSTable(cfg, 5)
    for u in s:
        b.update(u.index, u.delta)
    assert np.array_equal(a.plus, b.plus) and np.array_equal(a.minus, b.minus)


def test_rate_drops_at_boundary():
    cfg = config_with_S(100)
    B = cfg.epoch
    tbl = CSSSTable(cfg, 1)
    tbl.update_many(np.zeros(2 * B, dtype=np.int64), np.ones(2 * B, dtype=np.int64))
    assert tbl.p_exp == 0
    tbl.update(0, 1)
    assert tbl.p_exp == 1


def test_first_halving_halves_counters_in_expectation():
    cfg = config_with_S(50, n=16, k=1)
    B = cfg.epoch
    vals = []
    for seed in range(400):
        tbl = CSSSTable(cfg, seed)
        tbl.update_many(np.zeros(2 * B + 1, dtype=np.int64), np.ones(2 * B + 1, dtype=np.int64))
        assert tbl.p_exp == 1
        vals.extend((tbl.plus + tbl.minus).sum(axis=1).tolist())
    # units 1..2B are halved, unit 2B+1 is kept with probability 1/2
    mean = (2 * B + 1) / 2
    sigma = math.sqrt((2 * B + 1) / 4 / len(vals))
    assert abs(np.mean(vals) - mean) <= 4 * sigma


def test_logS_schedule_halves_earlier():
    a = config_with_S(1 << 20, schedule="logS")
    b = config_with_S(1 << 20)
    assert a.epoch == 20 and b.epoch == 1 << 20


def test_saturation_fails_sketch():
    cfg = CSSSConfig(n=16, k=1, eps=0.5, c_S=1e-12)
    assert cfg.saturation == 1
    tbl = CSSSTable(cfg)
    tbl.update(3, 2)
    with pytest.raises(SketchFailed):
        tbl.query(3)
    with pytest.raises(SketchFailed):
        tbl.update(3, 1)


def test_topk_exact_regime_recovers_sparse_vector():
    final = {3: 40, 17: 25, 60: 10}
    s = planted_stream(StreamConfig(n=64), final, alpha=2.0, seed=0)
    tbl = CSSSTable(CSSSConfig(n=64, k=4, eps=0.1), 2).consume(s)
    items, vals = csss_topk(tbl, 3)
    assert dict(zip(items.tolist(), vals.tolist())) == final


def test_topk_dominant_item():
    s = planted_stream(StreamConfig(n=256), {i: 1 for i in range(40)} | {100: 500}, alpha=2.0, seed=3)
    tbl = CSSSTable(config_with_S(300, n=256, k=4), 1).consume(s)
    assert tbl.p_exp > 0
    assert csss_topk(tbl, 1)[0][0] == 100


def test_topk_l2_bound_on_random_streams():
    k = 16
    ok = 0
    for seed in range(20):
        s = generate_stream(StreamConfig(n=1024), 4.0, length=30000, shape="zipf", seed=seed)
        f = s.frequencies()
        cfg = config_with_S(2000, n=1024, k=k, alpha=4.0)
        items, vals = CSSSTable(cfg, seed).consume(s).topk(k)
        yhat = np.zeros(1024)
        yhat[items] = vals
        l1 = np.abs(f).sum()
        ok += np.linalg.norm(f - yhat) <= 5 * (math.sqrt(k) * cfg.eps * l1 + tail_error(f, k))
    assert ok == 20


def test_query_error_bound_small():
    k = 16
    ok = 0
    for seed in range(20):
        s = generate_stream(StreamConfig(n=1024), 4.0, length=30000, shape="uniform", seed=seed)
        f = s.frequencies()
        cfg = config_with_S(2000, n=1024, k=k, alpha=4.0)
        tbl = CSSSTable(cfg, seed).consume(s)
        bound = 2 * (tail_error(f, k) / math.sqrt(k) + cfg.eps * np.abs(f).sum())
        ok += np.abs(tbl.estimates() - f).max() <= bound
        assert tbl.max_counter() <= cfg.saturation
    assert ok >= 18


def test_tail_error_oracle():
    assert tail_error(np.array([5, -4, 3, 0]), 1) == 5.0
    assert tail_error(np.zeros(5), 2) == 0.0


def test_tail_estimate_zero_stream():
    cfg = CSSSConfig(n=32, k=2, eps=0.1)
    assert estimate_tail_error(CSSSTable(cfg, 1), CSSSTable(cfg, 2), 0.0) == 0.0


def test_tail_estimate_sparse_exact():
    cfg = CSSSConfig(n=64, k=4, eps=0.1)
    s = planted_stream(StreamConfig(n=64), {1: 9, 5: 3, 30: 14}, alpha=3.0, seed=1)
    l1 = 26
    v = estimate_tail_error(CSSSTable(cfg, 1).consume(s), CSSSTable(cfg, 2).consume(s), l1)
    assert v <= 45 * math.sqrt(cfg.k) * cfg.eps * l1
    assert v == pytest.approx(5 * cfg.eps * l1)


def test_sampled_rows_obey_sampling_and_tail_bounds():
    # each row sees an independent Bernoulli(2^-p) sample of the unit updates
    n, eps, T = 256, 0.2, 4 / 0.2**2 + 8
    tail_ok = lemma_ok = 0
    for seed in range(100):
        s = generate_stream(StreamConfig(n=n), 2.0, length=20000, shape="zipf", seed=seed)
        f = s.frequencies()
        l1 = np.abs(f).sum()
        fs = sample_substream(s.index, s.delta, n, 0.25, np.random.default_rng(seed))
        lemma_ok += np.abs(fs - f).max() < eps * l1
        small = np.abs(f) < l1 / T
        tail_ok += np.linalg.norm(fs[small]) <= 2 * l1 / math.sqrt(T)
    assert lemma_ok >= 99 and tail_ok >= 95


def test_blob_roundtrip():
    s = generate_stream(StreamConfig(n=128), 2.0, length=3000, seed=2)
    cfg = config_with_S(200, n=128)
    tbl = CSSSTable(cfg, 4).consume(s)
    back = CSSSTable.from_bytes(tbl.to_bytes())
    assert np.array_equal(back.estimates(), tbl.estimates())
    more = generate_stream(StreamConfig(n=128), 1.0, length=500, seed=3)
    assert np.array_equal(back.consume(more).plus, tbl.consume(more).plus)


def test_plain_row_is_exact():
    row = PlainCSRow(16, seed=1)
    f = np.zeros(64, dtype=np.int64)
    rng = np.random.default_rng(0)
    for _ in range(200):
        i, d = int(rng.integers(64)), int(rng.integers(-3, 4)) or 1
        row.update(i, d)
        f[i] += d
    want = np.zeros(16, dtype=np.int64)
    for i in range(64):
        want[row.h(i)] += row.g(i) * f[i]
    assert np.array_equal(row.buckets, want)
