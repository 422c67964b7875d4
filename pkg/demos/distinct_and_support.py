"""Counting and sampling the live support of a stream with churn.

Half the items ever touched are fully deleted again, so the number of
distinct items seen is twice the number still alive.

Run: python3 demos/distinct_and_support.py
"""

import numpy as np

from deltasketch.l0_estimator import l0_full
from deltasketch.stream import StreamConfig, planted_stream
from deltasketch.support_sampler import SupportSampler

n, live = 1 << 16, 1024
rng = np.random.default_rng(0)
perm = rng.permutation(n)
final = {int(i): int(rng.integers(1, 5)) for i in perm[:live]}
stream = planted_stream(StreamConfig(n=n), final, alpha=4.0, seed=0, churn_items=perm[live : 2 * live])
touched = len(np.unique(stream.index))
print(f"{len(stream)} updates touching {touched} items, {live} still nonzero")

for mult in (1, 1024):
    est = l0_full(stream, 0.25, 4.0, seed=5, bins_mult=mult)
    print(f"L0 estimate with {mult}x bins: {est:.0f}")

U = SupportSampler(n, 20, delta=0.1, alpha=4.0, seed=2).consume(stream).query()
print(f"support sample of size {len(U)}, all live: {U <= set(final)}")
