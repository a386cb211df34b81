"""One address stream decoded under the three mapping schemes."""

from happysim import DramGeometry, GeneratorSpec, MappingScheme, generate, make_policy, simulate
from happysim.addrmap import participant_bits
from happysim.metrics import build_report

geo = DramGeometry()
trace = generate(GeneratorSpec("phase", length=30000, coverage=0.005, mean_gap=40.0, seed=7), geo)

for scheme in MappingScheme:
    print(f"{scheme.value}: {len(participant_bits(geo, scheme))} participant bits")
    for name in ("open", "intel_adaptive", "intel_happy"):
        pol = make_policy(name, geo, scheme)
        rep = build_report(simulate(trace, geo, pol, scheme), trace, geo, scheme, pol)
        print(f"  {name:15s} mean latency {rep.mean_latency:7.2f}  hit-acc {rep.hit_accuracy:.3f}"
              f"  miss-acc {rep.miss_accuracy:.3f}")
