"""Multi-phase grid model and linear PMU measurement matrix.

Node ordering is canonical everywhere: bus-major, phase-minor, in the
order buses were listed when the network was built.  State and
measurement vectors stack real parts first, then imaginary parts
([Re; Im] for the state, [Re V; Im V; Re I; Im I] for measurements).
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Nominal phase displacement, in node order within one bus.
PHASE_ANGLES = {
    1: (0.0,),
    3: (0.0, -2.0 * math.pi / 3.0, +2.0 * math.pi / 3.0),
}

# Relative singular-value cutoff for the observability rank test.
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Phasor:
    """A complex quantity stored in rectangular form."""

    re: float
    im: float

    @classmethod
    def from_polar(cls, magnitude: float, angle: float) -> "Phasor":
        return cls(magnitude * math.cos(angle), magnitude * math.sin(angle))

    @property
    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        return math.atan2(self.im, self.re)

    def as_complex(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class LineSpec:
    """Pi-model branch between two buses.

    ``series_impedance`` is either a complex scalar (each phase sees the
    same self impedance, no mutual coupling) or a full
    (n_phases, n_phases) complex matrix.  ``shunt_susceptance`` is the
    total line charging susceptance per phase (scalar or per-phase
    vector); half is lumped at each end.
    """

    from_bus: object
    to_bus: object
    series_impedance: object
    shunt_susceptance: object = 0.0


@dataclass(frozen=True)
class SlackSpec:
    """Slack bus boundary: held voltage plus a Norton source equivalent.

    ``short_circuit_power`` (pu) sets the magnitude of the source
    admittance, ``r_over_x`` its angle; see :func:`slack_admittance`.
    ``voltage`` is one Phasor per phase.
    """

    bus: object
    voltage: tuple
    short_circuit_power: float = 300.0
    r_over_x: float = 0.1


@dataclass(frozen=True)
class NetworkModel:
    buses: tuple
    n_phases: int
    lines: tuple
    slack: SlackSpec

    @property
    def n_nodes(self) -> int:
        return len(self.buses) * self.n_phases

    def bus_index(self, bus) -> int:
        try:
            return self.buses.index(bus)
        except ValueError:
            raise ValidationError(f"unknown bus {bus!r}") from None

    def node_index(self, bus, phase: int) -> int:
        if not 0 <= phase < self.n_phases:
            raise ValidationError(f"phase index {phase} out of range")
        return self.bus_index(bus) * self.n_phases + phase

    def node_labels(self):
        """(bus, phase) pairs in canonical node order."""
        return [(b, p) for b in self.buses for p in range(self.n_phases)]

    def slack_nodes(self) -> np.ndarray:
        i0 = self.bus_index(self.slack.bus) * self.n_phases
        return np.arange(i0, i0 + self.n_phases)

    def slack_voltages(self) -> np.ndarray:
        return np.array([ph.as_complex() for ph in self.slack.voltage])


@dataclass(frozen=True)
class CompoundAdmittance:
    """Node admittance matrix over all (bus, phase) nodes."""

    matrix: np.ndarray


@dataclass(frozen=True)
class SelectorMatrix:
    """0/1 matrix picking measured (bus, phase) nodes in canonical order."""

    gamma: np.ndarray
    pmu_buses: tuple


@dataclass(frozen=True)
class MeasurementMatrix:
    """Linear map from the stacked [Re; Im] state to PMU measurements."""

    H: np.ndarray
    n_states: int
    n_measurements: int


def _normalize_slack_voltage(voltage, n_phases: int) -> tuple:
    """Expand scalar / single-Phasor slack voltage to one Phasor per phase."""
    if isinstance(voltage, Phasor):
        mag, ang = voltage.magnitude, voltage.angle
        return tuple(
            Phasor.from_polar(mag, ang + PHASE_ANGLES[n_phases][p])
            for p in range(n_phases)
        )
    if isinstance(voltage, (int, float)):
        return _normalize_slack_voltage(Phasor(float(voltage), 0.0), n_phases)
    entries = []
    for item in voltage:
        if isinstance(item, Phasor):
            entries.append(item)
        else:
            z = complex(item)
            entries.append(Phasor(z.real, z.imag))
    if len(entries) != n_phases:
        raise ValidationError(
            f"slack voltage needs {n_phases} phases, got {len(entries)}"
        )
    return tuple(entries)


def build_network(buses, phases, lines, slack) -> NetworkModel:
    """Validate and freeze a network description.

    Parameters
    ----------
    buses : sequence
        Bus identifiers; their order fixes the canonical node order.
    phases : int
        Number of phases per bus, 1 or 3.
    lines : sequence of LineSpec
    slack : SlackSpec
        ``slack.voltage`` may be a scalar magnitude, a single Phasor
        (rotated onto the nominal phase displacements), or an explicit
        per-phase tuple.

    Raises
    ------
    ValidationError
        On duplicate bus ids, unknown line endpoints, self-loops,
        a slack bus that does not exist, or a disconnected graph.
    """
    buses = tuple(buses)
    if not buses:
        raise ValidationError("bus set is empty")
    if len(set(buses)) != len(buses):
        raise ValidationError("duplicate bus identifiers")
    if phases not in (1, 3):
        raise ValidationError(f"phase count must be 1 or 3, got {phases}")

    bus_set = set(buses)
    lines = tuple(lines)
    for ln in lines:
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"line at bus {ln.from_bus!r} is a self-loop")
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_set:
                raise ValidationError(f"line endpoint {end!r} is not a bus")

    if slack.bus not in bus_set:
        raise ValidationError(f"slack bus {slack.bus!r} is not a bus")
    slack = SlackSpec(
        bus=slack.bus,
        voltage=_normalize_slack_voltage(slack.voltage, phases),
        short_circuit_power=slack.short_circuit_power,
        r_over_x=slack.r_over_x,
    )
    if slack.short_circuit_power <= 0:
        raise ValidationError("short-circuit power must be positive")

    # connectivity (lines are bidirectional)
    adjacent = {b: set() for b in buses}
    for ln in lines:
        adjacent[ln.from_bus].add(ln.to_bus)
        adjacent[ln.to_bus].add(ln.from_bus)
    seen = {buses[0]}
    stack = [buses[0]]
    while stack:
        for nxt in adjacent[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if seen != bus_set:
        raise ValidationError("network graph is disconnected")

    return NetworkModel(buses=buses, n_phases=phases, lines=lines, slack=slack)


def slack_admittance(short_circuit_power: float, r_over_x: float) -> complex:
    """Norton source admittance equivalent of the upstream grid.

    The source impedance has magnitude ``1 / short_circuit_power`` pu and
    angle ``atan2(1, r_over_x)`` (inductive); the returned admittance is
    its reciprocal, so its angle carries the opposite sign.
    """
    if short_circuit_power <= 0:
        raise ValidationError("short-circuit power must be positive")
    theta = math.atan2(1.0, r_over_x)
    z = cmath.rect(1.0 / short_circuit_power, theta)
    return 1.0 / z


def _series_block(z, n_phases: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        block = np.eye(n_phases, dtype=complex) * complex(z)
    elif z.shape == (n_phases, n_phases):
        block = z
    else:
        raise ValidationError(
            f"series impedance must be scalar or {n_phases}x{n_phases}, "
            f"got shape {z.shape}"
        )
    if np.linalg.cond(block) > 1e14:
        raise ValidationError("series impedance block is singular")
    return block


def _shunt_diag(b, n_phases: int) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        return np.full(n_phases, float(b))
    if b.shape != (n_phases,):
        raise ValidationError(
            f"shunt susceptance must be scalar or length {n_phases}"
        )
    return b


def build_admittance(net: NetworkModel, include_slack_source: bool = True) -> CompoundAdmittance:
    """Assemble the compound node admittance matrix.

    Each line contributes the usual pi-model stamp: the inverse of its
    series impedance block on both diagonal blocks and negated on the
    off-diagonal blocks, plus half the shunt susceptance at each end.
    With ``include_slack_source`` the slack bus diagonal additionally
    receives the Norton admittance from :func:`slack_admittance`, which
    is how the held upstream grid enters the measurement model.

    Returns
    -------
    CompoundAdmittance
        Dense complex matrix of shape (n_nodes, n_nodes).
    """
    P = net.n_phases
    n = net.n_nodes
    Y = np.zeros((n, n), dtype=complex)
    for ln in net.lines:
        yb = np.linalg.inv(_series_block(ln.series_impedance, P))
        sh = 1j * _shunt_diag(ln.shunt_susceptance, P) / 2.0
        i = net.bus_index(ln.from_bus) * P
        j = net.bus_index(ln.to_bus) * P
        Y[i:i + P, i:i + P] += yb + np.diag(sh)
        Y[j:j + P, j:j + P] += yb + np.diag(sh)
        Y[i:i + P, j:j + P] -= yb
        Y[j:j + P, i:i + P] -= yb
    if include_slack_source:
        ysc = slack_admittance(net.slack.short_circuit_power, net.slack.r_over_x)
        for node in net.slack_nodes():
            Y[node, node] += ysc
    return CompoundAdmittance(matrix=Y)


def build_selector(net: NetworkModel, pmu_buses) -> SelectorMatrix:
    """Selector picking the measured (bus, phase) nodes.

    Measured buses are ordered canonically (network bus order), not in
    the order they were listed; duplicates collapse.
    """
    wanted = set(pmu_buses)
    if not wanted:
        raise ValidationError("PMU bus set is empty")
    unknown = wanted - set(net.buses)
    if unknown:
        raise ValidationError(f"unknown PMU buses: {sorted(map(repr, unknown))}")
    measured = tuple(b for b in net.buses if b in wanted)
    P = net.n_phases
    gamma = np.zeros((len(measured) * P, net.n_nodes))
    for r, bus in enumerate(measured):
        for p in range(P):
            gamma[r * P + p, net.node_index(bus, p)] = 1.0
    return SelectorMatrix(gamma=gamma, pmu_buses=measured)


def build_measurement_matrix(selector, admittance) -> MeasurementMatrix:
    """Stack voltage and current rows into the real-valued model matrix.

    With G + jB the compound admittance and Gamma the selector, the
    measurement vector [Re V; Im V; Re I; Im I] at the measured nodes is
    linear in the stacked state [Re V; Im V] of all nodes:

        H = [[Gamma,   0    ],
             [0,       Gamma],
             [Gamma G, -Gamma B],
             [Gamma B,  Gamma G]]
    """
    gamma = selector.gamma if isinstance(selector, SelectorMatrix) else np.asarray(selector, dtype=float)
    Y = admittance.matrix if isinstance(admittance, CompoundAdmittance) else np.asarray(admittance, dtype=complex)
    if gamma.ndim != 2 or Y.shape != (gamma.shape[1], gamma.shape[1]):
        raise ValidationError("selector and admittance dimensions disagree")
    G = Y.real
    B = Y.imag
    gG = gamma @ G
    gB = gamma @ B
    zero = np.zeros_like(gamma)
    H = np.block([[gamma, zero], [zero, gamma], [gG, -gB], [gB, gG]])
    return MeasurementMatrix(H=H, n_states=H.shape[1], n_measurements=H.shape[0])


@dataclass(frozen=True)
class Observability:
    observable: bool
    rank: int


def check_observability(measurement) -> Observability:
    """Numerical rank test of the measurement matrix.

    Rank counts singular values above ``RANK_TOLERANCE`` times the
    largest one; the model is observable when the rank equals the state
    dimension.
    """
    H = measurement.H if isinstance(measurement, MeasurementMatrix) else np.asarray(measurement, dtype=float)
    if H.size == 0:
        raise ValidationError("empty measurement matrix")
    sv = np.linalg.svd(H, compute_uv=False)
    rank = int(np.sum(sv > RANK_TOLERANCE * sv[0]))
    return Observability(observable=rank == H.shape[1], rank=rank)


def dims(net: NetworkModel, pmu_buses) -> tuple:
    """(state size, measurement count) for a PMU placement.

    S = 2 |buses| |phases| and D = 4 |measured buses| |phases|.
    """
    sel = set(pmu_buses)
    if not sel:
        raise ValidationError("PMU bus set is empty")
    unknown = sel - set(net.buses)
    if unknown:
        raise ValidationError(f"unknown PMU buses: {sorted(map(repr, unknown))}")
    S = 2 * len(net.buses) * net.n_phases
    D = 4 * len(sel) * net.n_phases
    return S, D


# ---------------------------------------------------------------------------
# file format


def network_from_dict(doc: dict):
    """Build (NetworkModel, pmu_buses) from the JSON schema.

    Schema::

        {"phases": 1 | 3,
         "buses": [id, ...],
         "lines": [{"from": id, "to": id, "r": ..., "x": ..., "b": ...}],
         "slack": {"bus": id, "voltage": 1.0,
                   "s_sc": 300.0, "r_over_x": 0.1},
         "pmu": [id, ...]}

    ``r``/``x`` are scalars or full per-phase matrices (nested lists);
    ``b`` is a scalar or per-phase list, and defaults to 0.
    """
    try:
        phases = doc["phases"]
        buses = doc["buses"]
        raw_lines = doc["lines"]
        raw_slack = doc["slack"]
    except KeyError as missing:
        raise ValidationError(f"network document lacks key {missing}") from None
    lines = []
    for entry in raw_lines:
        r = np.asarray(entry["r"], dtype=float)
        x = np.asarray(entry["x"], dtype=float)
        if r.shape != x.shape:
            raise ValidationError("line r and x shapes disagree")
        z = r + 1j * x
        lines.append(
            LineSpec(
                from_bus=entry["from"],
                to_bus=entry["to"],
                series_impedance=complex(z) if z.ndim == 0 else z,
                shunt_susceptance=entry.get("b", 0.0),
            )
        )
    slack = SlackSpec(
        bus=raw_slack["bus"],
        voltage=raw_slack.get("voltage", 1.0),
        short_circuit_power=raw_slack.get("s_sc", 300.0),
        r_over_x=raw_slack.get("r_over_x", 0.1),
    )
    net = build_network(buses, phases, lines, slack)
    return net, list(doc.get("pmu", []))


def load_network_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"network file {path} is not valid JSON: {exc}") from None
    return network_from_dict(doc)
