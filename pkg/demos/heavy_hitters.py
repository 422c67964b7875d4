"""Heavy hitters and point queries on a bounded-deletion stream.

Run: python3 demos/heavy_hitters.py
"""

import numpy as np

from deltasketch.csss import CSSSConfig, CSSSTable, tail_error
from deltasketch.heavy_hitters import HeavyHitters
from deltasketch.stream import StreamConfig, generate_stream

n, alpha = 4096, 4.0
stream = generate_stream(StreamConfig(n=n), alpha, length=100_000, shape="zipf", seed=1)
f = stream.frequencies()
print(f"{len(stream)} updates, ||f||_1 = {f.sum()}, {np.count_nonzero(f)} live items")

cfg = CSSSConfig(n=n, k=64, eps=0.1, alpha=alpha, c_S=1e-5)
tbl = CSSSTable(cfg, seed=7).consume(stream)
err = np.abs(tbl.estimates() - f).max()
bound = 2 * (tail_error(f, cfg.k) / cfg.k**0.5 + cfg.eps * f.sum())
print(f"CSSS: {cfg.d} rows x {cfg.width} buckets, worst point error {err:.1f} (bound {bound:.1f}), "
      f"widest counter {tbl.max_counter_bits()} bits")

hh = HeavyHitters(n, 0.05, alpha=alpha, seed=3).consume(stream)
found = sorted(int(i) for i in hh.query())
true = sorted(np.flatnonzero(f >= 0.05 * f.sum()).tolist())
print(f"items above 5% of the mass: {true}")
print(f"reported:                   {found}")
