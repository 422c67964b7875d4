"""How stored counter width and retained rows scale with the deletion ratio.

Writes one report per algorithm and alpha, then a CSV trade-off table.

Run: python3 demos/alpha_sweep.py [out_dir]
"""

import sys
from pathlib import Path

from deltasketch.harness import ExperimentSpec, emit_tradeoff_table, run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "sweep_out")
out.mkdir(exist_ok=True)
summaries = []
for a in (1, 2, 4, 8, 16):
    summaries.append(run_experiment(ExperimentSpec(
        "csss", {"n": 1024, "length": 200_000, "shape": "zipf", "alpha": a, "p": 1},
        {"eps": 0.1, "k": 16, "alpha": a, "c_S": 1e-6}, trials=2, seed=11,
        output=str(out / f"csss_a{a}.jsonl"))))
    summaries.append(run_experiment(ExperimentSpec(
        "l0est", {"n": 1 << 20, "length": 8000, "alpha": a, "p": 0, "support": 2000},
        {"eps": 0.5, "alpha": a}, trials=2, seed=11, output=str(out / f"l0_a{a}.jsonl"))))

rows = emit_tradeoff_table(summaries, out / "tradeoff.csv")
print(f"{'algorithm':<8} {'alpha':>5} {'bits':>5} {'rows':>5} {'error':>5}")
for r in rows:
    print(f"{r['algorithm']:<8} {r['alpha']:>5} {r['max_counter_bits']:>5} {r['retained_rows']:>5} {r['observed_error']:>8.3f}")
print(f"table written to {out / 'tradeoff.csv'}")
