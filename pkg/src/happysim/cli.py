"""Command-line front end: ``happysim {run,scaling,gen,oracle}``.

Exit status is 0 on success, 2 on configuration / input errors and 1 on I/O
failures; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import TraceEntry, collect_overrides, load_config
from .dram import simulate
from .errors import AddressRangeError, ConfigError, TraceParseError, UsageError
from .metrics import (build_report, footprint, geometric_mean, oracle, reports_to_csv,
                      reports_to_json)
from .policy import make_policy, scaling_table
from .trace import generate, mix, parse, write_trace

STATIC = ("open", "close")

COMPARISON_COLUMNS = ("trace", "policy", "total_latency", "mean_latency", "baseline",
                      "baseline_latency", "normalized_latency", "hit_accuracy", "miss_accuracy")


def _csv(rows, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(round(row[c], 9)) if isinstance(row[c], float) else row[c]
                         for c in columns])
    return buf.getvalue()


def materialize(cfg, names=None):
    """Build every configured trace in order; returns ``[(entry, Trace)]``.

    ``names`` restricts the result (mix components are still built).
    """
    built = {}
    out = []
    for entry in cfg.traces:
        if entry.path is not None:
            path = entry.path if os.path.isabs(entry.path) else os.path.join(cfg.base_dir, entry.path)
            t = parse(path, capacity=cfg.geometry.capacity, name=entry.name)
        elif entry.mix is not None:
            t = mix([built[c] for c in entry.mix], cfg.geometry, name=entry.name)
        else:
            t = generate(entry.spec, cfg.geometry, entry.layout, name=entry.name)
        built[entry.name] = t
        if names is None or entry.name in names:
            out.append((entry, t))
    if names is not None:
        missing = sorted(set(names) - set(built))
        if missing:
            raise ConfigError(f"--trace names not found in [[traces]]: {', '.join(missing)}")
    return out


def _run_job(job):
    trace, cfg, policy_name = job
    pol = make_policy(policy_name, cfg.geometry, cfg.scheme, **cfg.policy_kwargs())
    res = simulate(trace, cfg.geometry, pol, cfg.scheme, mode=cfg.scheduler,
                   queue_capacity=cfg.queue_capacity, bypass_cap=cfg.bypass_cap)
    return build_report(res, trace, cfg.geometry, cfg.scheme, pol,
                        scheduler=cfg.scheduler.value, seed=cfg.seed)


def run_reports(cfg, traces, policies, workers=1):
    """Simulate every (trace, policy) pair; result order is trace-major."""
    jobs = [(t, cfg, p) for _, t in traces for p in policies]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def comparison(reports, baseline_reports, baseline="best_static"):
    """Normalized latency per (trace, policy) plus a GMEAN row per policy.

    Traces whose baseline latency is zero are degenerate: they get an empty
    normalized value and are left out of the geometric mean.
    """
    by_trace = {}
    for rep in baseline_reports:
        by_trace.setdefault(rep.trace, {})[rep.policy] = rep
    rows = []
    for rep in reports:
        base = by_trace[rep.trace]
        if baseline == "best_static":
            name = min(STATIC, key=lambda p: (base[p].total_latency, STATIC.index(p)))
        else:
            name = baseline
        ref = base[name].total_latency
        rows.append({
            "trace": rep.trace, "policy": rep.policy, "total_latency": rep.total_latency,
            "mean_latency": rep.mean_latency, "baseline": name, "baseline_latency": ref,
            "normalized_latency": rep.total_latency / ref if ref else "",
            "hit_accuracy": rep.hit_accuracy, "miss_accuracy": rep.miss_accuracy,
        })
    policies = list(dict.fromkeys(r["policy"] for r in rows))
    for pol in policies:
        mine = [r for r in rows if r["policy"] == pol]
        values = [r["normalized_latency"] if r["normalized_latency"] != "" else 0.0 for r in mine]
        degenerate = [i for i, r in enumerate(mine) if r["normalized_latency"] == ""]
        g, _ = geometric_mean(values, degenerate)
        rows.append({
            "trace": "GMEAN", "policy": pol, "total_latency": sum(r["total_latency"] for r in mine),
            "mean_latency": "", "baseline": baseline, "baseline_latency": "",
            "normalized_latency": g, "hit_accuracy": "", "miss_accuracy": "",
        })
    return rows


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_run(cfg, args):
    traces = [(e, t) for e, t in materialize(cfg) if e.simulate]
    if not traces:
        raise ConfigError("no traces to simulate: add [[traces]] entries or pass --trace")
    reports = run_reports(cfg, traces, cfg.policies, cfg.workers)
    needed = list(STATIC) if cfg.baseline == "best_static" else [cfg.baseline]
    extra = [p for p in needed if p not in cfg.policies]
    base = reports + run_reports(cfg, traces, extra, cfg.workers) if extra else reports
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "reports.csv"), reports_to_csv(reports))
    _write(os.path.join(cfg.out, "reports.json"), reports_to_json(reports, cfg.resolved))
    _write(os.path.join(cfg.out, "comparison.csv"),
           _csv(comparison(reports, base, cfg.baseline), COMPARISON_COLUMNS))
    print(f"wrote {len(reports)} reports for {len(traces)} traces to {cfg.out}")
    return 0


def cmd_scaling(cfg, args):
    sc = cfg.scaling
    intel = cfg.intel.resolve(cfg.geometry)
    rows = scaling_table([gb << 30 for gb in sc["capacities_gb"]], rank_bytes=sc["rank_gb"] << 30,
                         banks=sc["banks"], columns=sc["columns"], line_bytes=sc["line_bytes"],
                         channels=sc["channels"], hybrid_bits=cfg.hybrid_bits,
                         mc_bits=intel.mc_bits, tr_max=intel.tr_max,
                         happy_tr_max=intel.happy_tr_max)
    text = _csv(rows, list(rows[0])) if rows else ""
    if args.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "scaling.csv"), text)
    sys.stdout.write(text)
    return 0


def cmd_gen(cfg, args):
    """Write generator traces; mixes are rebuilt from their parts and skipped.

    Mixed streams can carry several records per cycle, which the gap grammar
    cannot express.
    """
    names = args.trace or None
    items = materialize(cfg, names)
    os.makedirs(cfg.out, exist_ok=True)
    for entry, t in items:
        if entry.path is not None:
            continue
        if entry.mix is not None:
            if names is not None:
                raise ConfigError(f"trace {entry.name!r} is a mix and has no trace-file form")
            print(f"{entry.name}: mix, skipped")
            continue
        path = os.path.join(cfg.out, f"{entry.name}.trace")
        write_trace(t, path)
        print(f"{path}: {len(t)} records")
    return 0


ORACLE_COLUMNS = ("trace", "requests", "oracle_hits", "avoidable_misses", "first_touches",
                  "oracle_misses", "footprint")


def cmd_oracle(cfg, args):
    rows = []
    for entry, t in materialize(cfg):
        b = oracle(t, cfg.geometry, cfg.scheme)
        rows.append({"trace": entry.name, "requests": len(t), "oracle_hits": b.hits,
                     "avoidable_misses": b.avoidable_misses, "first_touches": b.first_touches,
                     "oracle_misses": b.misses, "footprint": footprint(t, cfg.geometry, cfg.scheme)})
    text = _csv(rows, ORACLE_COLUMNS)
    if args.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "oracle.csv"), text)
    sys.stdout.write(text)
    return 0


COMMANDS = {"run": cmd_run, "scaling": cmd_scaling, "gen": cmd_gen, "oracle": cmd_oracle}


def build_parser():
    p = argparse.ArgumentParser(prog="happysim", description="DRAM page-policy simulator")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "run": "simulate policies over traces and write reports",
        "scaling": "predictor storage across memory capacities",
        "gen": "write synthetic traces from the config",
        "oracle": "oracle hit / miss bounds of each trace",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--seed", type=int, help="base seed (run.seed)")
        sp.add_argument("--out", help="output directory (run.out)")
        sp.add_argument("--policy", action="append", default=[], help="policy name, repeatable")
        sp.add_argument("--trace", action="append", default=[],
                        help="trace file, repeatable (gen: name of a [[traces]] entry)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. intel.check_interval=64")
    return p


def _resolve(args, env=None):
    extra = []
    if args.seed is not None:
        extra.append(("run.seed", args.seed, "--seed"))
    if args.out is not None:
        extra.append(("run.out", args.out, "--out"))
    if args.policy:
        extra.append(("policy.names", list(args.policy), "--policy"))
    overrides = collect_overrides(args.set, env=env, extra=extra)
    cfg = load_config(args.config, overrides)
    if args.trace and args.command != "gen":
        entries = []
        for i, path in enumerate(args.trace):
            stem = os.path.splitext(os.path.basename(path))[0]
            name = stem if all(e.name != stem for e in entries) else f"{stem}-{i}"
            entries.append(TraceEntry(name=name, path=os.path.abspath(path)))
        cfg.traces = entries
        cfg.resolved["traces"] = [{"name": e.name, "path": e.path} for e in entries]
    return cfg


def main(argv=None, env=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args, env)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, TraceParseError, AddressRangeError) as exc:
        print(f"happysim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"happysim {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
