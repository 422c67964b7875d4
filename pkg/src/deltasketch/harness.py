"""Experiment runner: trials, oracle comparison and reports.

A trial draws a stream (or reuses a fixed input), runs one sketch over it,
replays the exact state, and records the truth, the sketch output, an
error figure and whether the module's contract held.  Reports are JSON
lines, one per trial, closed by a summary line.  Everything random flows
from the experiment seed, so the same spec gives the same bytes; wall time
is only recorded when asked for, since it would break that.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .csss import CSSSConfig, CSSSTable, tail_error
from .hashing import derive_seed
from .heavy_hitters import HeavyHitters
from .inner_product import IPSharedSeed, IPSketch, ip_estimate
from .l0_estimator import L0Config, L0Estimator
from .l1_estimator import GeneralL1Config, GeneralL1Estimator, StrictL1Config, StrictL1Estimator
from .l1_sampler import C_PROP, FAIL, L1Sampler, instance_count
from .stream import Stream, StreamConfig, alpha_lp, generate_stream, read_stream
from .support_sampler import SupportSampler

SCHEMA_VERSION = 1
TABLE_FIELDS = ("algorithm", "alpha", "eps", "observed_error", "max_counter_bits", "samples_stored")


class SchemaError(ValueError):
    """A report does not carry the fields a consumer needs."""


@dataclass
class ExperimentSpec:
    algorithm: str
    stream: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    trials: int = 10
    seed: int = 0
    output: str | None = None
    timing: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls(**json.loads(text))


def _worker_count() -> int:
    raw = os.environ.get("DELTASKETCH_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def make_stream(stream_spec: dict, seed: int) -> Stream:
    """A stream from its spec: either ``input`` (a file) or generator arguments."""
    if "input" in stream_spec:
        return read_stream(stream_spec["input"])
    spec = dict(stream_spec)
    cfg = StreamConfig(n=int(spec.pop("n", 1024)), kind=spec.pop("kind", "strict-turnstile"))
    alpha = float(spec.pop("alpha", 2.0))
    return generate_stream(cfg, alpha, seed=seed, **spec)


# -- one trial per algorithm; each returns the report fields


def _trial_csss(stream, p, seed):
    f = stream.frequencies()
    cfg = CSSSConfig(
        n=stream.config.n,
        k=int(p.get("k", 64)),
        eps=float(p.get("eps", 0.1)),
        alpha=float(p.get("alpha", 1.0)),
        c_S=float(p.get("c_S", 1.0)),
    )
    tbl = CSSSTable(cfg, seed).consume(stream)
    y = tbl.estimates()
    l1 = float(np.abs(f).sum())
    bound = 2 * (tail_error(f, cfg.k) / math.sqrt(cfg.k) + cfg.eps * l1)
    worst = float(np.abs(y - f).max())
    return {
        "truth": {"l1": l1},
        "output": {"max_abs_error": worst},
        "error": worst / bound if bound else 0.0,
        "passed": worst <= bound,
        "max_counter_bits": tbl.max_counter_bits(),
        "samples_stored": tbl.sampled_units,
        "retained_rows": cfg.d,
    }


def _trial_hh(stream, p, seed):
    f = stream.frequencies()
    eps = float(p.get("eps", 0.1))
    hh = HeavyHitters(stream.config.n, eps, alpha=float(p.get("alpha", 1.0)), mode=p.get("mode", "strict"), seed=seed)
    out = set(hh.consume(stream).query().tolist())
    l1 = np.abs(f).sum()
    must = set(np.flatnonzero(np.abs(f) >= eps * l1).tolist())
    allowed = set(np.flatnonzero(np.abs(f) >= eps * l1 / 2).tolist())
    bad = len(must - out) + len(out - allowed)
    return {
        "truth": {"heavy": sorted(must)},
        "output": {"reported": sorted(out)},
        "error": bad,
        "passed": bad == 0,
        "max_counter_bits": hh.csss.max_counter_bits(),
        "samples_stored": hh.csss.sampled_units,
    }


def _trial_ip(stream, p, seed, stream_g=None):
    f = stream.frequencies()
    g = stream_g.frequencies()
    eps = float(p.get("eps", 0.25))
    shared = IPSharedSeed(stream.config.n, eps, alpha=float(p.get("alpha", 1.0)), seed=seed, s=p.get("s"))
    a = IPSketch(shared, derive_seed(seed, "f")).consume(stream)
    b = IPSketch(shared, derive_seed(seed, "g")).consume(stream_g)
    est = ip_estimate(a, b)
    truth = int(np.dot(f, g))
    scale = float(np.abs(f).sum() * np.abs(g).sum())
    err = abs(est - truth) / scale if scale else 0.0
    return {
        "truth": {"ip": truth},
        "output": {"estimate": est},
        "error": err,
        "passed": err <= eps,
        "max_counter_bits": max(a.max_counter_bits(), b.max_counter_bits()),
        "samples_stored": a.samples_stored() + b.samples_stored(),
    }


def _trial_l1sample(stream, p, seed):
    f = stream.frequencies()
    eps = float(p.get("eps", 0.25))
    delta = float(p.get("delta", 0.1))
    out, bits, used = FAIL, 0, 0
    for inst in range(instance_count(eps, delta)):
        st = L1Sampler(stream.config.n, eps, seed=derive_seed(seed, "inst", inst), c_prop=float(p.get("c_prop", C_PROP)))
        out = st.consume(stream).query()
        bits = max(bits, st.cs1.max_counter_bits(), st.cs2.max_counter_bits())
        used = inst + 1
        if out is not FAIL:
            break
    if out is FAIL:
        return {"truth": {}, "output": "FAIL", "error": None, "passed": False,
                "max_counter_bits": bits, "samples_stored": used}
    i, v = out
    err = abs(v - f[i]) / abs(f[i]) if f[i] else math.inf
    return {
        "truth": {"f_i": int(f[i])},
        "output": {"index": i, "estimate": v},
        "error": err,
        "passed": bool(f[i] != 0 and err <= 2 * eps),
        "max_counter_bits": bits,
        "samples_stored": used,
    }


def _trial_l1est(stream, p, seed):
    l1 = int(np.abs(stream.frequencies()).sum())
    eps = float(p.get("eps", 0.2))
    alpha = float(p.get("alpha", 1.0))
    if p.get("mode", "strict") == "strict":
        st = StrictL1Estimator(StrictL1Config(n=stream.config.n, eps=eps, alpha=alpha, s=p.get("s")), seed)
        tol = eps
    else:
        st = GeneralL1Estimator(GeneralL1Config(n=stream.config.n, eps=eps, alpha=alpha, s=p.get("s")), seed)
        tol = 2 * eps
    est = st.consume(stream).estimate()
    err = abs(est - l1) / l1 if l1 else abs(est)
    return {
        "truth": {"l1": l1},
        "output": {"estimate": est},
        "error": None if math.isnan(err) else err,
        "passed": bool(err <= tol),
        "max_counter_bits": st.max_counter_bits(),
        "samples_stored": int(getattr(st, "samples_stored", lambda: 0)()),
    }


def _trial_l0est(stream, p, seed):
    l0 = int(np.count_nonzero(stream.frequencies()))
    eps = float(p.get("eps", 0.25))
    cfg = L0Config(n=stream.config.n, eps=eps, alpha=float(p.get("alpha", 1.0)), bins_mult=int(p.get("bins_mult", 1)))
    reps = [L0Estimator(cfg, derive_seed(seed, "rep", r)).consume(stream) for r in range(int(p.get("reps", 3)))]
    try:
        vals = [r.estimate() for r in reps]
    except (RuntimeError, ValueError) as exc:
        return {"truth": {"l0": l0}, "output": {"failure": str(exc)}, "error": None, "passed": False,
                "max_counter_bits": max(r.max_counter_bits() for r in reps), "samples_stored": 0,
                "retained_rows": max(r.retained_rows() for r in reps)}
    est = float(np.median([v for v, _ in vals]))
    err = abs(est - l0) / l0 if l0 else abs(est)
    return {
        "truth": {"l0": l0},
        "output": {"estimate": est, "branches": [b for _, b in vals]},
        "error": err,
        "passed": bool(err <= eps),
        "max_counter_bits": max(r.max_counter_bits() for r in reps),
        "samples_stored": 0,
        "retained_rows": max(r.retained_rows() for r in reps),
    }


def _trial_suppsample(stream, p, seed):
    f = stream.frequencies()
    k = int(p.get("k", 20))
    ss = SupportSampler(
        stream.config.n, k, delta=float(p.get("delta", 0.1)), alpha=float(p.get("alpha", 1.0)), seed=seed
    )
    U = ss.consume(stream).query()
    sound = all(f[i] != 0 for i in U)
    need = min(k, int(np.count_nonzero(f)))
    return {
        "truth": {"l0": int(np.count_nonzero(f))},
        "output": {"size": len(U), "sound": sound},
        "error": 0 if sound else 1,
        "passed": bool(sound and len(U) >= need),
        "max_counter_bits": 0,
        "samples_stored": len(U),
    }


TRIALS: dict[str, Callable] = {
    "csss": _trial_csss,
    "hh": _trial_hh,
    "ip": _trial_ip,
    "l1sample": _trial_l1sample,
    "l1est": _trial_l1est,
    "l0est": _trial_l0est,
    "suppsample": _trial_suppsample,
}


def run_trial(spec: ExperimentSpec, trial: int) -> dict:
    tseed = derive_seed(spec.seed, "trial", trial)
    started = time.perf_counter()
    stream = make_stream(spec.stream, derive_seed(tseed, "stream"))
    extra = {}
    if spec.algorithm == "ip":
        extra["stream_g"] = make_stream(spec.stream, derive_seed(tseed, "stream-g"))
    rec = TRIALS[spec.algorithm](stream, spec.params, derive_seed(tseed, "sketch"), **extra)
    row = {
        "schema": SCHEMA_VERSION,
        "kind": "trial",
        "trial": trial,
        "realized_alpha": float(alpha_lp(stream.exact(), 1)),
        **rec,
    }
    if spec.timing:
        row["wall_time"] = time.perf_counter() - started
    return row


def summarize(spec: ExperimentSpec, rows: list[dict]) -> dict:
    errs = np.array([r["error"] for r in rows if r.get("error") is not None], dtype=np.float64)
    errs = errs[np.isfinite(errs)]
    return {
        "schema": SCHEMA_VERSION,
        "kind": "summary",
        "algorithm": spec.algorithm,
        "alpha": float(spec.params.get("alpha", spec.stream.get("alpha", 1.0))),
        "eps": float(spec.params["eps"]) if "eps" in spec.params else None,
        "trials": len(rows),
        "pass_fraction": (sum(r["passed"] for r in rows) / len(rows)) if rows else None,
        "mean_error": float(errs.mean()) if len(errs) else None,
        "p50_error": float(np.percentile(errs, 50)) if len(errs) else None,
        "p90_error": float(np.percentile(errs, 90)) if len(errs) else None,
        "observed_error": float(np.percentile(errs, 90)) if len(errs) else None,
        "max_counter_bits": max((r["max_counter_bits"] for r in rows), default=0),
        "samples_stored": float(np.mean([r["samples_stored"] for r in rows])) if rows else 0.0,
        "retained_rows": max((r.get("retained_rows", 0) for r in rows), default=0),
        # where the report lands is not part of the experiment
        "spec": {k: v for k, v in json.loads(spec.to_json()).items() if k != "output"},
    }


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run every trial, write the JSONL report if ``spec.output`` is set, return the summary."""
    if spec.algorithm not in TRIALS:
        raise ValueError(f"unknown algorithm {spec.algorithm!r}; choose from {sorted(TRIALS)}")
    if spec.trials < 0:
        raise ValueError("trials must be nonnegative")
    workers = min(_worker_count(), max(1, spec.trials))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: run_trial(spec, t), range(spec.trials)))
    else:
        rows = [run_trial(spec, t) for t in range(spec.trials)]
    summary = summarize(spec, rows)
    if spec.output:
        lines = [json.dumps(r, sort_keys=True, default=_jsonable) for r in rows + [summary]]
        Path(spec.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def read_report(path) -> tuple[list[dict], dict]:
    rows = [json.loads(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not rows or rows[-1].get("kind") != "summary":
        raise SchemaError(f"{path}: no summary line")
    return rows[:-1], rows[-1]


def emit_tradeoff_table(summaries, path=None) -> list[dict]:
    """One CSV row per report summary; returns the rows."""
    out = []
    for s in summaries:
        if s.get("schema") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported report schema {s.get('schema')!r}")
        missing = [k for k in TABLE_FIELDS if k not in s]
        if missing:
            raise SchemaError(f"report summary lacks {missing}")
        out.append({k: s[k] for k in TABLE_FIELDS} | {"retained_rows": s.get("retained_rows", 0)})
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(TABLE_FIELDS) + ["retained_rows"])
            w.writeheader()
            w.writerows(out)
    return out
