"""How predictor storage grows with memory size.

Per-row and per-bank tables grow with capacity; the address-bit encodings
grow with log2 of it.
"""

from happysim import scaling_table

rows = scaling_table([gb << 30 for gb in (4, 8, 16, 32, 64, 128, 256, 512)])
print(f"{'GB':>5} {'hybrid':>10} {'happy':>6} {'ratio':>11} {'intel':>6} {'i-happy':>8} {'ratio':>7}")
for r in rows:
    print(f"{r['capacity_bytes'] >> 30:5d} {r['hybrid_counters']:10d} {r['hybrid_happy_counters']:6d} "
          f"{r['hybrid_ratio']:11.1f} {r['intel_adaptive_counters']:6d} "
          f"{r['intel_happy_counters']:8d} {r['intel_ratio']:7.2f}")
