"""Synthetic radial feeders with uniform cable parameters.

Real benchmark feeders carry too much incidental detail for library
tests; these generators produce radial chains or random trees whose
every section uses the same cable, which is enough to exercise the
estimator at realistic sizes.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .network import LineSpec, NetworkModel, SlackSpec, build_network

# Self and mutual series impedance of the default cable, pu per section.
DEFAULT_SELF_Z = 0.006 + 0.012j
DEFAULT_MUTUAL_Z = 0.002 + 0.004j


def _cable_block(n_phases: int, self_z: complex, mutual_z: complex):
    if n_phases == 1:
        return self_z
    block = np.full((n_phases, n_phases), mutual_z, dtype=complex)
    np.fill_diagonal(block, self_z)
    return block


def make_radial_feeder(
    n_buses: int,
    phases: int = 3,
    self_impedance: complex = DEFAULT_SELF_Z,
    mutual_impedance: complex = DEFAULT_MUTUAL_Z,
    shunt_susceptance: float = 0.0,
    short_circuit_power: float = 300.0,
    r_over_x: float = 0.1,
    branching_seed=None,
) -> NetworkModel:
    """Build a radial feeder with ``n_buses`` buses, slack at bus 1.

    With ``branching_seed=None`` the feeder is a plain chain
    1-2-...-n; otherwise each new bus attaches to a uniformly random
    existing bus, giving a random tree (still radial).
    """
    if n_buses < 2:
        raise ValidationError("a feeder needs at least two buses")
    buses = list(range(1, n_buses + 1))
    z = _cable_block(phases, self_impedance, mutual_impedance)
    lines = []
    if branching_seed is None:
        parents = range(1, n_buses)
    else:
        rng = np.random.default_rng(branching_seed)
        parents = [int(rng.integers(1, new)) for new in range(2, n_buses + 1)]
    for new, parent in zip(range(2, n_buses + 1), parents):
        lines.append(
            LineSpec(
                from_bus=parent,
                to_bus=new,
                series_impedance=z,
                shunt_susceptance=shunt_susceptance,
            )
        )
    slack = SlackSpec(
        bus=1,
        voltage=1.0,
        short_circuit_power=short_circuit_power,
        r_over_x=r_over_x,
    )
    return build_network(buses, phases, lines, slack)


def suggest_pmu_placement(net: NetworkModel, coverage: str = "alternate"):
    """Default PMU bus sets.

    ``"all"`` instruments every bus; ``"alternate"`` instruments every
    other bus in canonical order, starting at the first, which keeps the
    chain observable with the minimum measurement count (D = S).
    """
    if coverage == "all":
        return list(net.buses)
    if coverage == "alternate":
        return list(net.buses[::2])
    raise ValidationError(f"unknown coverage {coverage!r}")
