"""Cycle cost, memory and resource scaling of the blocked datapath.

The emulated datapath processes one scalar measurement at a time with
degree of parallelization p: matrix work speeds up by p^2, vector work
by p.  This script sweeps the cost model over problem sizes, fits the
growth law, and shows where the on-chip memory budget runs out.
"""

import numpy as np

from gridkalman.blocked import (
    DEFAULT_ARITH,
    cycle_cost,
    memory_footprint,
    resource_estimate,
)
from gridkalman.testbench import scalability_sweep

report = scalability_sweep(list(range(16, 257, 16)), parallelism=4)
cubic = report.fit("full", 3)
print("cycle count fits, p=4, S=D in 16..256 step 16:")
print(f"  cubic coefficients {np.round(cubic.coefficients, 4)}  "
      f"residual {cubic.residual:.2e}")
quad = report.fit("restricted", 2)
print(f"  quadratic on sizes <= 80: residual {quad.residual:.2e}")

c1 = cycle_cost(128, 128, 4).total
c2 = cycle_cost(256, 256, 4).total
print(f"\ndoubling S=D=128 -> 256 multiplies cycles by {c2 / c1:.3f} "
      f"(theoretical limit 8)")

print("\nwhere do the cycles go at S=D=64, p=4?")
for part, cycles in sorted(cycle_cost(64, 64, 4).breakdown.items(),
                           key=lambda kv: -kv[1]):
    print(f"  {part:20s} {cycles:8d}")

print("\nmemory feasibility under the default budget (D=S, p=1):")
for S in (128, 255, 256, 384):
    fp = memory_footprint(S, S, 1)
    print(f"  S={S:3d}: {fp.words:7d} words  feasible={fp.feasible}")

print("\nDSP-style resource estimate vs parallelism:")
for p in (1, 2, 4, 8, 16):
    print(f"  p={p:2d}: {resource_estimate(p, DEFAULT_ARITH):5d} units")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

sizes = np.array([row.size for row in report.rows])
cycles = np.array([row.cycles for row in report.rows])
plt.figure(figsize=(5.5, 4))
plt.loglog(sizes, cycles, "o", ms=4, label="cycle cost model")
grid = np.linspace(16, 256, 200)
poly = sum(c * grid**i for i, c in enumerate(cubic.coefficients))
plt.loglog(grid, poly, "k-", lw=1, label="cubic fit")
plt.xlabel("problem size S = D")
plt.ylabel("cycles per filter step")
plt.legend()
out = __file__.replace(".py", ".png")
plt.savefig(out, dpi=120, bbox_inches="tight")
print("\nwrote", out)
