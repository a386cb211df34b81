"""All seven policies on a four-workload mix, normalized to the best static one."""

from happysim import POLICY_NAMES, DramGeometry, GeneratorSpec, generate, make_policy, mix, simulate
from happysim.metrics import build_report

geo = DramGeometry()
kinds = ("stream", "uniform", "zipf", "phase")
parts = [generate(GeneratorSpec(k, length=8000, ways=4, mean_gap=80.0, seed=i,
                                coverage=None if k == "stream" else 0.01), geo)
         for i, k in enumerate(kinds)]
workload = mix(parts, geo, name="mix4")

reports = {}
for name in POLICY_NAMES:
    pol = make_policy(name, geo)
    reports[name] = build_report(simulate(workload, geo, pol), workload, geo, "row_locality", pol)

best = min(reports["open"].total_latency, reports["close"].total_latency)
for name, rep in reports.items():
    print(f"{name:15s} norm={rep.total_latency / best:6.3f} hit-acc={rep.hit_accuracy:5.3f} "
          f"miss-acc={rep.miss_accuracy:5.3f} counters={rep.storage_counters}")

# per-workload view of one run
for src, s in sorted(reports["intel_happy"].per_source.items()):
    print(f"  source {src} ({kinds[int(src)]}): {s['requests']} requests, mean latency {s['mean_latency']:.1f}")
