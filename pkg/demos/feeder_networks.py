"""Build a synthetic feeder and inspect its admittance and observability."""

import numpy as np

from gridkalman.feeder import make_radial_feeder, suggest_pmu_placement
from gridkalman.network import (
    build_admittance,
    build_measurement_matrix,
    build_selector,
    check_observability,
)

net = make_radial_feeder(10, phases=3, branching_seed=2)
print(f"feeder: {len(net.buses)} buses x {net.n_phases} phases "
      f"= {net.n_nodes} nodes")

Y = build_admittance(net, include_slack_source=False)
print(f"admittance: {Y.matrix.shape}, "
      f"{np.count_nonzero(np.abs(Y.matrix) > 1e-12)} nonzeros")

# how few PMUs can we get away with?
for placement in ("all", "alternate"):
    buses = suggest_pmu_placement(net, placement)
    meas = build_measurement_matrix(build_selector(net, buses), Y)
    obs = check_observability(meas)
    print(f"PMUs at {len(buses):2d} buses ({placement:9s}): "
          f"D={meas.n_measurements:3d} channels, rank {obs.rank}/{meas.n_states}"
          f"{'' if obs.observable else '  <- NOT observable'}")

# a single PMU at the slack cannot pin the whole feeder
meas = build_measurement_matrix(build_selector(net, [1]), Y)
obs = check_observability(meas)
print(f"PMU at slack only: rank {obs.rank}/{meas.n_states} "
      f"(observable: {obs.observable})")

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, ax = plt.subplots(figsize=(5, 4.5))
ax.imshow(np.log10(np.abs(Y.matrix) + 1e-12), cmap="viridis")
ax.set_title("log10 |Y| of the branched feeder")
ax.set_xlabel("node")
ax.set_ylabel("node")
out = __file__.replace(".py", ".png")
fig.savefig(out, dpi=120, bbox_inches="tight")
print("wrote", out)
