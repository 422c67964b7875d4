"""Join-size style inner product of two streams sharing one seed.

Run: python3 demos/inner_product.py
"""

from deltasketch.inner_product import IPSharedSeed, IPSketch, ip_estimate
from deltasketch.stream import StreamConfig, generate_stream

cfg = StreamConfig(n=4096)
sf = generate_stream(cfg, 4.0, length=20_000, shape="zipf", seed=1)
sg = generate_stream(cfg, 4.0, length=20_000, shape="zipf", seed=2)
f, g = sf.frequencies(), sg.frequencies()

shared = IPSharedSeed(4096, 0.25, alpha=4.0, s=64, seed=9)
a, b = IPSketch(shared, 1).consume(sf), IPSketch(shared, 2).consume(sg)
print(f"<f, g> = {int(f @ g)}, estimate {ip_estimate(a, b):.0f}, allowed error {0.25 * f.sum() * g.sum():.0f}")
# a second sketch of f itself gives the second moment
a2 = IPSketch(shared, 3).consume(sf)
print(f"<f, f> = {int(f @ f)}, estimate {ip_estimate(a, a2):.0f}")
print(f"live intervals: f {a.live()}, g {b.live()}")
