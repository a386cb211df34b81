"""Open-page vs close-page on two extremes of row locality."""

from happysim import DramGeometry, GeneratorSpec, generate, make_policy, simulate
from happysim.metrics import oracle

geo = DramGeometry()

# a sequential sweep leaves 127 of every 128 accesses in the open row
stream = generate(GeneratorSpec("stream", length=20000, mean_gap=60.0, seed=1), geo)
# independent rows almost never repeat back to back
uniform = generate(GeneratorSpec("uniform", length=20000, coverage=4096 / geo.total_rows,
                                 mean_gap=60.0, seed=1), geo)

for trace in (stream, uniform):
    b = oracle(trace, geo)
    print(f"{trace.name}: {len(trace)} records, oracle hits {b.hits}, avoidable misses {b.avoidable_misses}")
    for name in ("open", "close"):
        res = simulate(trace, geo, make_policy(name, geo))
        print(f"  {name:6s} hits={res.hits:6d} misses={res.misses:6d} empties={res.empties:6d} "
              f"mean latency={res.mean_latency:8.2f}")

# per-access cost: hit tCL, empty tRCD+tCL, miss tRP+tRCD+tCL
print("hit/empty/miss cycles:", geo.tCL, geo.tRCD + geo.tCL, geo.tRP + geo.tRCD + geo.tCL)
