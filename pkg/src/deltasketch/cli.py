"""Command-line driver: ``deltasketch <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import ExperimentSpec, emit_tradeoff_table, read_report, run_experiment
from .l1_sampler import C_PROP, calibrate_c_prop
from .stream import SHAPES, StreamConfig, generate_stream, read_stream


def _stream_args(p: argparse.ArgumentParser, p_default: int = 1) -> None:
    p.add_argument("--input", help="stream file; every trial reuses it")
    p.add_argument("--n", type=int, default=1024, help="universe size (power of two)")
    p.add_argument("--length", type=int, default=10000)
    p.add_argument("--shape", choices=sorted(SHAPES), default="zipf")
    p.add_argument("--stream-alpha", type=float, default=None, help="alpha of generated streams (default: --alpha)")
    p.add_argument("--p", type=int, choices=(0, 1), default=p_default, help="norm of the generated alpha-property")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deltasketch", description="Sketches for bounded-deletion streams.")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--report", help="JSONL report path (default: print the summary only)")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--timing", action="store_true", help="record wall time per trial (reports stop being reproducible)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write a synthetic stream")
    g.add_argument("--n", type=int, default=1024)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--p", type=int, choices=(0, 1), default=1)
    g.add_argument("--length", type=int, default=10000)
    g.add_argument("--shape", choices=sorted(SHAPES), default="zipf")
    g.add_argument("--kind", default="strict-turnstile",
                   choices=("insertion-only", "strict-turnstile", "general-turnstile"))
    g.add_argument("--out", required=True)

    h = sub.add_parser("hh", help="L1 heavy hitters")
    h.add_argument("--eps", type=float, default=0.1)
    h.add_argument("--alpha", type=float, default=2.0)
    h.add_argument("--mode", choices=("strict", "general"), default="strict")
    _stream_args(h)

    i = sub.add_parser("ip", help="inner product of two streams")
    i.add_argument("--eps", type=float, default=0.25)
    i.add_argument("--alpha", type=float, default=2.0)
    i.add_argument("--s", type=int, default=256, help="interval base (power of two)")
    _stream_args(i)

    s = sub.add_parser("l1sample", help="precision-sampling L1 sampler")
    s.add_argument("--eps", type=float, default=0.25)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--c-prop", type=float, default=C_PROP)
    s.add_argument("--calibrate", action="store_true", help="print a calibrated c_prop for the stream and exit")
    _stream_args(s)

    e = sub.add_parser("l1est", help="L1 norm estimation")
    e.add_argument("--eps", type=float, default=0.2)
    e.add_argument("--alpha", type=float, default=2.0)
    e.add_argument("--mode", choices=("strict", "general"), default="strict")
    e.add_argument("--s", type=int, default=None)
    _stream_args(e)

    z = sub.add_parser("l0est", help="L0 estimation")
    z.add_argument("--eps", type=float, default=0.25)
    z.add_argument("--alpha", type=float, default=2.0)
    z.add_argument("--bins-mult", type=int, default=1)
    _stream_args(z, p_default=0)

    u = sub.add_parser("suppsample", help="support sampling")
    u.add_argument("--k", type=int, default=20)
    u.add_argument("--delta", type=float, default=0.1)
    u.add_argument("--alpha", type=float, default=2.0)
    _stream_args(u, p_default=0)

    t = sub.add_parser("table", help="CSV trade-off table from reports")
    t.add_argument("reports", nargs="+")
    t.add_argument("--out", default="-")
    return ap


def _spec(args) -> ExperimentSpec:
    params = {k: v for k, v in vars(args).items()
              if k in ("eps", "alpha", "mode", "s", "delta", "k", "c_prop", "bins_mult") and v is not None}
    if args.input:
        stream = {"input": args.input}
    else:
        stream = {
            "n": args.n,
            "length": args.length,
            "shape": args.shape,
            "alpha": args.stream_alpha if args.stream_alpha is not None else args.alpha,
            "p": args.p,
        }
    return ExperimentSpec(args.cmd, stream, params, args.trials, args.seed, args.report, args.timing)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "gen":
        cfg = StreamConfig(n=args.n, kind=args.kind)
        stream = generate_stream(cfg, args.alpha, p=args.p, length=args.length, shape=args.shape, seed=args.seed)
        stream.write(args.out)
        print(json.dumps({"updates": len(stream), **stream.metadata}, sort_keys=True))
        return 0
    if args.cmd == "table":
        rows = emit_tradeoff_table([read_report(p)[1] for p in args.reports],
                                   None if args.out == "-" else args.out)
        if args.out == "-":
            import csv

            w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else [])
            w.writeheader()
            w.writerows(rows)
        return 0
    if args.cmd == "l1sample" and args.calibrate:
        spec = _spec(args)
        from .harness import make_stream

        f = make_stream(spec.stream, args.seed).frequencies()
        print(json.dumps({"c_prop": calibrate_c_prop(np.abs(f[f != 0]), args.eps, seed=args.seed)}))
        return 0
    summary = run_experiment(_spec(args))
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
