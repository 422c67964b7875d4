import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltasketch.hashing import (
    MERSENNE61,
    HashBank,
    KWiseHash,
    SignHash,
    StableVariate,
    bits_low_first,
    bucket_summod,
    derive_seed,
    is_prime,
    kwise_eval,
    mod_reduce_streaming,
    mulmod,
    mulmod61,
    powmod,
    sample_prime,
    stable_draw,
    stable_vector,
    summod,
)


def horner(coeffs, x, p=MERSENNE61):
    acc = 0
    for c in reversed([int(c) for c in coeffs]):
        acc = (acc * x + c) % p
    return acc


def test_k1_is_constant():
    h = KWiseHash(1, 97, seed=5)
    vals = {kwise_eval(h, x) for x in range(50)}
    assert vals == {int(h.coeffs[0]) % 97}


def test_x17_matches_bigint_polynomial():
    h = KWiseHash(6, 1000, seed=123)
    assert h(17) == horner(h.coeffs, 17) % 1000
    assert int(h(np.array([17]))[0]) == h(17)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**40), st.integers(0, 2**32))
def test_vector_and_scalar_agree(k, x, seed):
    h = KWiseHash(k, 12345, seed)
    assert int(h(np.array([x], dtype=np.uint64))[0]) == h(x) == horner(h.coeffs, x) % 12345


def test_same_seed_same_function():
    a, b = KWiseHash(4, 1 << 20, 99), KWiseHash(4, 1 << 20, 99)
    xs = np.arange(1000)
    assert np.array_equal(a(xs), b(xs))
    assert derive_seed(7, "a", 3) == derive_seed(7, "a", 3) != derive_seed(7, "a", 4)


def test_bank_rows_match_single_hashes():
    bank = HashBank(5, 4, 77, seed=3)
    xs = np.arange(300)
    out = bank(xs)
    for r in range(5):
        assert np.array_equal(out[r], bank.row(r)(xs))


def test_pairwise_collision_rate():
    # 10^5 independent functions from the family, one pair of keys
    out, trials = 64, 100_000
    vals = HashBank(trials, 2, out, seed=11)(np.array([3, 1000]))
    rate = np.mean(vals[:, 0] == vals[:, 1])
    sigma = math.sqrt((1 / out) * (1 - 1 / out) / trials)
    assert abs(rate - 1 / out) <= 3 * sigma


def test_sign_hash_balanced():
    g = SignHash(4, 8)
    s = g(np.arange(20000))
    assert set(np.unique(s)) == {-1, 1}
    assert abs(s.mean()) < 0.03


def test_mulmod61_against_bigint():
    rng = np.random.default_rng(0)
    a = rng.integers(0, MERSENNE61, 1000, dtype=np.uint64)
    b = rng.integers(0, MERSENNE61, 1000, dtype=np.uint64)
    got = mulmod61(a, b)
    assert all(int(g) == int(x) * int(y) % MERSENNE61 for g, x, y in zip(got, a, b))


@pytest.mark.parametrize("p", [5, 1_000_000_007, (1 << 60) + 33, (1 << 61) - 1])
def test_mulmod_against_bigint(p):
    rng = np.random.default_rng(p % 1000)
    a = rng.integers(0, p, 500, dtype=np.uint64)
    b = rng.integers(0, p, 500, dtype=np.uint64)
    got = mulmod(a, b, p)
    assert all(int(g) == int(x) * int(y) % p for g, x, y in zip(got, a, b))
    e = rng.integers(0, 1 << 40, 20)
    assert all(int(g) == pow(int(x), int(k), p) for g, x, k in zip(powmod(a[:20], e, p), a[:20], e))


def test_summod_and_bucket_summod():
    p = (1 << 61) - 1
    rng = np.random.default_rng(1)
    v = rng.integers(0, p, 2000, dtype=np.uint64)
    b = rng.integers(0, 7, 2000)
    assert summod(v, p) == sum(int(x) for x in v) % p
    got = bucket_summod(b, v, 7, p)
    for j in range(7):
        assert int(got[j]) == sum(int(x) for x, bj in zip(v, b) if bj == j) % p


def test_sample_prime_examples():
    rng = np.random.default_rng(0)
    assert sample_prime(2, 3, rng).value in (2, 3)
    for _ in range(20):
        assert is_prime(sample_prime(100, 10**6, rng).value)
    seen = {sample_prime(10**3 + 1, 10**4 - 1, rng).value for _ in range(100)}
    assert len(seen) >= 2
    with pytest.raises(ValueError):
        sample_prime(24, 28, rng)


def test_mod_reduce_examples():
    assert mod_reduce_streaming(bits_low_first(6), 5) == 1
    assert mod_reduce_streaming(bits_low_first(0), 7) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**128 - 1), st.sampled_from([3, 10**9 + 7, (1 << 61) - 1]))
def test_mod_reduce_bigint(x, p):
    assert mod_reduce_streaming(bits_low_first(x), p) == x % p


def test_stable_examples():
    assert StableVariate.from_theta(0.0, 1e-6).value == 0.0
    assert abs(StableVariate.from_theta(math.pi / 4, 1e-6).value - 1) <= 1e-6
    v = stable_draw(3, 42, 1e-6)
    assert -math.pi / 2 < v.theta < math.pi / 2


def test_stable_median_abs_is_one():
    vals = stable_vector(17, 100_000, 1e-9)
    assert abs(np.median(np.abs(vals)) - 1) <= 0.03


def test_random_linear_form_vanishes_with_prob_1_over_q():
    # sum_i x_i u_i mod q for fixed nonzero x and uniform u is zero w.p. 1/q
    q, trials = 11, 50_000
    rng = np.random.default_rng(2)
    x = np.array([3, 5, 1, 9], dtype=np.uint64)
    u = rng.integers(0, q, (trials, 4), dtype=np.uint64)
    s = mulmod(u, np.broadcast_to(x, u.shape), q).sum(axis=1) % q
    rate = np.mean(s == 0)
    assert abs(rate - 1 / q) <= 3 * math.sqrt((1 / q) * (1 - 1 / q) / trials)
