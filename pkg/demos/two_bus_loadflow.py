#!/usr/bin/env python3
"""Two-bus load flow against the closed form, plus the nose curve.

A single resistive line r with load P at the far end has the exact
solution V = (1 + sqrt(1 - 4 P r)) / 2, which collapses at P r = 1/4.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from gridkalman.errors import ConvergenceError
from gridkalman.loadflow import solve_network_loadflow
from gridkalman.network import LineSpec, SlackSpec, build_admittance, build_network

r = 0.1
net = build_network([1, 2], 1, [LineSpec(1, 2, series_impedance=r + 0j)],
                    SlackSpec(bus=1, voltage=1.0))
Y = build_admittance(net)

loads = np.linspace(0.0, 2.6, 53)
solved, exact = [], []
for P in loads:
    closed = (1 + np.sqrt(1 - 4 * P * r)) / 2 if 4 * P * r <= 1 else np.nan
    try:
        sol = solve_network_loadflow(net, Y, np.array([0, -P], dtype=complex))
        v = sol.voltages[1].real
    except ConvergenceError:
        v = np.nan
    solved.append(v)
    exact.append(closed)

solved = np.array(solved)
exact = np.array(exact)
ok = ~np.isnan(exact)
print(f"P=0.1: solver {solved[2]:.9f}  closed form {exact[2]:.9f}")
print(f"max |solver - closed form| over solvable loads: "
      f"{np.nanmax(np.abs(solved[ok] - exact[ok])):.2e}")
print(f"solver gives up beyond P = {loads[~np.isnan(solved)][-1]:.2f} "
      f"(transfer limit is {0.25 / r:.2f})")

plt.figure(figsize=(5.5, 4))
plt.plot(loads, exact, "k-", label="closed form")
plt.plot(loads, solved, "o", ms=4, mfc="none", label="fixed point solver")
plt.axvline(0.25 / r, ls=":", color="gray")
plt.xlabel("load P (pu)")
plt.ylabel("|V| at bus 2 (pu)")
plt.legend()
out = __file__.replace(".py", ".png")
plt.savefig(out, dpi=120, bbox_inches="tight")
print("wrote", out)
