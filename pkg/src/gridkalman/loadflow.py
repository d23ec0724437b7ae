"""Fixed-point load flow for radial distribution feeders.

The solver iterates nodal current injections against a factorized
reduced admittance matrix (slack rows and columns removed).  The slack
voltage enters as a hard boundary condition, so any Norton source term
sitting on the slack diagonal is inert here: it only appears in the
discarded slack-row equations.  The same admittance matrix can therefore
be shared with the measurement model without double counting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConditioningError, ConvergenceError, ValidationError
from .network import CompoundAdmittance, NetworkModel

# Voltages this close to zero make the injected-current update meaningless.
_VOLTAGE_FLOOR = 1e-6


@dataclass(frozen=True)
class LoadFlowOptions:
    tolerance: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")


@dataclass(frozen=True)
class LoadFlowSolution:
    """Converged nodal voltages.

    ``residual`` is the largest power-balance mismatch
    ``|V_i conj((Y V)_i) - S_i|`` over non-slack nodes, in pu.
    """

    voltages: np.ndarray
    iterations: int
    residual: float


class ReducedSystem:
    """Slack-reduced admittance with a reusable LU factorization."""

    def __init__(self, Y, slack_nodes, slack_voltages):
        Y = Y.matrix if isinstance(Y, CompoundAdmittance) else np.asarray(Y, dtype=complex)
        n = Y.shape[0]
        slack_nodes = np.asarray(slack_nodes, dtype=int)
        slack_voltages = np.asarray(slack_voltages, dtype=complex)
        if slack_nodes.size != slack_voltages.size:
            raise ValidationError("slack node and voltage counts disagree")
        keep = np.setdiff1d(np.arange(n), slack_nodes)
        if keep.size == 0:
            raise ValidationError("no non-slack nodes to solve for")
        self.n = n
        self.slack_nodes = slack_nodes
        self.slack_voltages = slack_voltages
        self.keep = keep
        self.Y = Y
        self._Y_rr = Y[np.ix_(keep, keep)]
        self._slack_feed = Y[np.ix_(keep, slack_nodes)] @ slack_voltages
        try:
            self._lu = lu_factor(self._Y_rr)
        except np.linalg.LinAlgError:
            raise ConditioningError("reduced admittance matrix is singular") from None

    def solve_currents(self, injected):
        return lu_solve(self._lu, injected - self._slack_feed)

    def flat_start(self):
        """Every bus starts at the slack phase voltages."""
        V = np.empty(self.n, dtype=complex)
        P = self.slack_voltages.size
        for node in range(self.n):
            V[node] = self.slack_voltages[node % P]
        return V


def power_balance_residual(Y, V, injections, nodes):
    """Max |V conj(YV) - S| over ``nodes``."""
    I = Y @ V
    mismatch = V[nodes] * np.conj(I[nodes]) - injections[nodes]
    return float(np.max(np.abs(mismatch))) if len(nodes) else 0.0


def solve_loadflow(Y, injections, slack_nodes, slack_voltages, opts=None,
                   system: ReducedSystem = None) -> LoadFlowSolution:
    """Solve V for complex power injections at fixed slack voltage.

    Parameters
    ----------
    Y : CompoundAdmittance or complex ndarray
        Node admittance matrix.  Slack-diagonal source terms are ignored
        by construction (see module docstring).
    injections : complex ndarray
        Per-node complex power, generation positive and loads negative;
        entries at slack nodes are ignored.
    slack_nodes, slack_voltages : ndarray
        Held nodes and their complex voltages.
    system : ReducedSystem, optional
        Pre-factorized reduction; pass it when solving many steps on the
        same network.

    Returns
    -------
    LoadFlowSolution
        Converged when both the voltage change and the power-balance
        residual fall below ``opts.tolerance``.

    Raises
    ------
    ConvergenceError
        If the iteration budget runs out (e.g. loads beyond the feeder's
        transfer capability).
    ConditioningError
        If a bus voltage collapses toward zero during iteration.
    """
    opts = opts or LoadFlowOptions()
    sys_ = system or ReducedSystem(Y, slack_nodes, slack_voltages)
    injections = np.asarray(injections, dtype=complex)
    if injections.shape != (sys_.n,):
        raise ValidationError(f"injection vector must have length {sys_.n}")

    keep = sys_.keep
    V = sys_.flat_start()
    s_keep = injections[keep]
    for iteration in range(1, opts.max_iterations + 1):
        v_old = V[keep]
        if np.min(np.abs(v_old)) < _VOLTAGE_FLOOR:
            raise ConditioningError("bus voltage collapsed during load flow")
        injected_current = np.conj(s_keep / v_old)
        v_new = sys_.solve_currents(injected_current)
        V[keep] = v_new
        dv = float(np.max(np.abs(v_new - v_old)))
        residual = power_balance_residual(sys_.Y, V, injections, keep)
        if dv <= opts.tolerance and residual <= opts.tolerance:
            return LoadFlowSolution(voltages=V, iterations=iteration, residual=residual)
    raise ConvergenceError(
        f"load flow did not converge in {opts.max_iterations} iterations "
        f"(residual {residual:.3e})"
    )


def solve_network_loadflow(net: NetworkModel, Y, injections, opts=None,
                           system: ReducedSystem = None) -> LoadFlowSolution:
    """Convenience wrapper taking slack placement from the network model."""
    return solve_loadflow(
        Y, injections, net.slack_nodes(), net.slack_voltages(), opts=opts,
        system=system,
    )


def nodal_currents(Y, V) -> np.ndarray:
    """Injected nodal currents I = Y V."""
    Y = Y.matrix if isinstance(Y, CompoundAdmittance) else np.asarray(Y, dtype=complex)
    V = np.asarray(V, dtype=complex)
    if V.shape != (Y.shape[0],):
        raise ValidationError("voltage vector length does not match Y")
    return Y @ V


# ---------------------------------------------------------------------------
# injection profiles


def read_injection_profile(path, net: NetworkModel, horizon: int) -> np.ndarray:
    """Read a (step, bus, phase, P, Q) CSV into a (horizon, n_nodes) array.

    Rows: ``k,bus,phase,p_pu,q_pu`` with a header line, 0-based step k
    and 1-based phase.  Nodes without a row at a step inject nothing.
    """
    S = np.zeros((horizon, net.n_nodes), dtype=complex)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"injection profile {path} is empty")
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            try:
                k = int(row[0])
                bus = _parse_bus(row[1], net)
                phase = int(row[2]) - 1
                p, q = float(row[3]), float(row[4])
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"bad injection row {row}: {exc}") from None
            if not 0 <= k < horizon:
                raise ValidationError(f"injection step {k} outside horizon {horizon}")
            S[k, net.node_index(bus, phase)] += p + 1j * q
    return S


def _parse_bus(token, net):
    token = token.strip()
    try:
        as_int = int(token)
    except ValueError:
        as_int = None
    if as_int is not None and as_int in net.buses:
        return as_int
    if token in net.buses:
        return token
    raise ValidationError(f"unknown bus {token!r} in injection profile")
