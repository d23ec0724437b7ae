"""File-based testbench: stimuli generation, golden/candidate runs, reports.

The testbench mimics a hardware verification flow.  A scenario config
describes a feeder, PMU placement, injection behaviour and sensor
classes; ``generate_stimuli`` turns it into a stimuli file holding the
true node voltages and the noisy measurement vectors for every step.
Two engines consume the same file: the golden model (``run_golden``, a
batch gain-form filter in binary64) and the unit under test
(``run_mut``, the blocked sequential filter, binary32 by default).
``compare_responses`` reduces both response sets against the stored
truth into quantile reports, and ``scalability_sweep`` evaluates the
cycle-cost model over a size ladder with polynomial fits.

Everything is deterministic from (config, seed): noise substreams are
keyed by (step, channel), reductions have fixed order, and files are
written with shortest round-trip float formatting, so re-running any
stage reproduces its output byte for byte.

File formats (CSV, one record per line, version tag on line one):

stimuli
    ``gridkalman-stimuli,1`` / ``dims,S,D,K,phases`` / ``q,i,v`` /
    ``r,i,v`` / ``h,i,j,v`` (nonzero entries) / optional ``x0,i,v`` and
    ``p0,i,v`` / optional truth ``v,k,i,re,im`` / ``z,k,i,v``.

responses
    ``gridkalman-responses,1`` / ``dims,S,K`` / ``producer,NAME`` /
    ``meta,key,value`` / ``x,k,i,v``.

report
    ``gridkalman-report,1`` / ``dims,nodes,phases,K`` /
    ``meta,key,value`` /
    ``stat,node,bus,phase,metric,min,q25,median,q75,max``.

sweep
    ``gridkalman-sweep,1`` / ``parallelism,p`` / ``row,S,cycles[,wall]``
    / ``fit,range,degree,c0..cdeg,residual``.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial

from .blocked import (
    DEFAULT_ARITH,
    DEFAULT_BUDGET_WORDS,
    ArithConfig,
    cycle_cost,
    sdkf_step_blocked,
)
from .errors import ConditioningError, ConvergenceError, ValidationError
from .filters import (
    A_POSTERIORI,
    FilterState,
    MeasurementFrame,
    dkf_update_gain_form,
    predict,
)
from .loadflow import (
    LoadFlowOptions,
    ReducedSystem,
    read_injection_profile,
    solve_loadflow,
)
from .network import (
    PHASE_ANGLES,
    NetworkModel,
    build_admittance,
    build_measurement_matrix,
    build_selector,
    check_observability,
    load_network_file,
    network_from_dict,
)
from .noise import (
    PolarUncertainty,
    SubstreamRng,
    add_polar_noise,
    build_measurement_covariance,
)
from .opcounts import DKF, SDKF, closed_form_op_count

FORMAT_VERSION = 1
STIMULI_MAGIC = "gridkalman-stimuli"
RESPONSES_MAGIC = "gridkalman-responses"
REPORT_MAGIC = "gridkalman-report"
SWEEP_MAGIC = "gridkalman-sweep"

#: Noise substreams occupy channels [0, K * 4 * measured_nodes); the
#: injection random walk lives far above so the two never collide.
INJECTION_CHANNEL_BASE = 1 << 40

GM_PRODUCER = "GM"
MUT_PRODUCER = "MUT"


def _fmt(x) -> str:
    """Shortest decimal that round-trips the binary64 value."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass(frozen=True)
class RandomWalkInjections:
    """Synthetic per-node P/Q random walk, reflecting no measured
    profile being available: each non-slack node's injection takes a
    Gaussian step per frame and is clipped to ±bound pu."""

    step: float = 2e-3
    bound: float = 0.5

    def __post_init__(self):
        if self.step < 0 or self.bound <= 0:
            raise ValidationError("random walk needs step >= 0 and bound > 0")


@dataclass(frozen=True)
class NoiseSpec:
    """Injected sensor errors and the filter's noise model.

    ``e_rho``/``e_phi`` drive the actual perturbation of the stimuli;
    ``model_e_rho``/``model_e_phi`` (defaulting to the same values)
    drive the R matrix the filters assume.  Keeping them separate lets
    a zero-noise stimulus run against a filter that still models its
    nominal sensor class.
    """

    e_rho: float
    e_phi: float
    q: float
    nominal_current: float = 1.0
    seed: int = 0
    model_e_rho: float = None
    model_e_phi: float = None

    def __post_init__(self):
        if self.e_rho < 0 or self.e_phi < 0:
            raise ValidationError("maximum errors must be non-negative")
        if self.q < 0:
            raise ValidationError("process noise variance must be non-negative")
        if self.nominal_current <= 0:
            raise ValidationError("nominal current must be positive")
        rho, phi = self.model_errors()
        if rho <= 0 and phi <= 0:
            raise ValidationError(
                "the modeled sensor errors are all zero; set model_e_rho/"
                "model_e_phi so the filters see a positive R"
            )

    def model_errors(self):
        rho = self.e_rho if self.model_e_rho is None else self.model_e_rho
        phi = self.e_phi if self.model_e_phi is None else self.model_e_phi
        return rho, phi


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkModel
    pmu_buses: tuple
    noise: NoiseSpec
    horizon: int
    injection_profile: str = None
    random_walk: RandomWalkInjections = field(default_factory=RandomWalkInjections)
    parallelism: int = 4
    precision: int = 32
    arith: ArithConfig = DEFAULT_ARITH
    budget_words: int = DEFAULT_BUDGET_WORDS

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be at least one step")
        if self.parallelism < 1:
            raise ValidationError("parallelism must be at least 1")
        if self.precision not in (32, 64):
            raise ValidationError("precision must be 32 or 64")
        if self.injection_profile is None and self.random_walk is None:
            raise ValidationError("either an injection profile or a random walk is required")


_SCENARIO_KEYS = {"network", "pmu_buses", "noise", "horizon", "injections",
                  "parallelism", "precision", "arith"}


def _resolve_pmu(net: NetworkModel, spec, embedded):
    if spec is None:
        spec = embedded if embedded else "all"
    if isinstance(spec, str):
        if spec == "all":
            return tuple(net.buses)
        if spec == "alternate":
            from .feeder import suggest_pmu_placement

            return tuple(suggest_pmu_placement(net, "alternate"))
        raise ValidationError(f"unknown PMU placement keyword {spec!r}")
    return tuple(spec)


def scenario_from_dict(doc: dict, base_dir: str = ".") -> ScenarioConfig:
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
    if "network" not in doc or "noise" not in doc or "horizon" not in doc:
        raise ValidationError("scenario needs network, noise and horizon")

    raw_net = doc["network"]
    if isinstance(raw_net, str):
        net, embedded_pmu = load_network_file(os.path.join(base_dir, raw_net))
    elif isinstance(raw_net, dict):
        net, embedded_pmu = network_from_dict(raw_net)
    else:
        raise ValidationError("network must be a file path or an inline document")

    pmu = _resolve_pmu(net, doc.get("pmu_buses"), embedded_pmu)

    noise_doc = dict(doc["noise"])
    model_rho = noise_doc.pop("model_e_rho", None)
    model_phi = noise_doc.pop("model_e_phi", None)
    try:
        noise = NoiseSpec(
            e_rho=float(noise_doc.pop("e_rho")),
            e_phi=float(noise_doc.pop("e_phi")),
            q=float(noise_doc.pop("q")),
            nominal_current=float(noise_doc.pop("nominal_current", 1.0)),
            seed=int(noise_doc.pop("seed", 0)),
            model_e_rho=None if model_rho is None else float(model_rho),
            model_e_phi=None if model_phi is None else float(model_phi),
        )
    except KeyError as missing:
        raise ValidationError(f"noise block lacks key {missing}") from None
    if noise_doc:
        raise ValidationError(f"unknown noise keys: {sorted(noise_doc)}")

    profile = None
    walk = RandomWalkInjections()
    inj = doc.get("injections")
    if isinstance(inj, str):
        profile = os.path.join(base_dir, inj)
        walk = None
    elif isinstance(inj, dict):
        inj = dict(inj)
        kind = inj.pop("kind", "random_walk")
        if kind != "random_walk":
            raise ValidationError(f"unknown injection kind {kind!r}")
        walk = RandomWalkInjections(
            step=float(inj.pop("step", 2e-3)),
            bound=float(inj.pop("bound", 0.5)),
        )
        if inj:
            raise ValidationError(f"unknown injection keys: {sorted(inj)}")
    elif inj is not None:
        raise ValidationError("injections must be a profile path or a spec block")

    arith = DEFAULT_ARITH
    budget = DEFAULT_BUDGET_WORDS
    if "arith" in doc:
        arith_doc = dict(doc["arith"])
        budget = int(arith_doc.pop("budget_words", DEFAULT_BUDGET_WORDS))
        valid = set(ArithConfig.__dataclass_fields__)
        bad = set(arith_doc) - valid
        if bad:
            raise ValidationError(f"unknown arith keys: {sorted(bad)}")
        arith = replace(DEFAULT_ARITH, **arith_doc)

    return ScenarioConfig(
        network=net,
        pmu_buses=pmu,
        noise=noise,
        horizon=int(doc["horizon"]),
        injection_profile=profile,
        random_walk=walk,
        parallelism=int(doc.get("parallelism", 4)),
        precision=int(doc.get("precision", 32)),
        arith=arith,
        budget_words=budget,
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario file {path} is not valid JSON: {exc}") from None
    return scenario_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# stimuli


@dataclass(frozen=True)
class StimuliSet:
    """Everything both engines need for a run, plus the truth.

    ``truth`` is optional: synthetic instances (scalability sweeps,
    hand-built unit cases) have measurements without a grid behind
    them.  ``x0``/``p0`` override the default start (flat voltage
    profile, covariance diag(q)); they are required when the state size
    is not an even multiple of the phase count, because no flat profile
    exists then.
    """

    n_states: int
    n_measurements: int
    horizon: int
    phases: int
    q: np.ndarray
    r: np.ndarray
    H: np.ndarray
    z: np.ndarray
    truth: np.ndarray = None
    x0: np.ndarray = None
    p0: np.ndarray = None

    def __post_init__(self):
        S, D, K = self.n_states, self.n_measurements, self.horizon
        if S < 1 or D < 1:
            raise ValidationError("stimuli need S >= 1 and D >= 1")
        if K < 1:
            raise ValidationError("stimuli hold no steps")
        if self.phases not in PHASE_ANGLES:
            raise ValidationError("phases must be 1 or 3")
        if self.q.shape != (S,) or self.r.shape != (D,):
            raise ValidationError("q/r length does not match dims")
        if np.any(self.q < 0) or np.any(self.r <= 0):
            raise ValidationError("q must be >= 0 and r strictly positive")
        if self.H.shape != (D, S):
            raise ValidationError("H shape does not match dims")
        if self.z.shape != (K, D):
            raise ValidationError("z block does not cover horizon x D")
        if self.truth is not None:
            if S % 2:
                raise ValidationError("truth requires an even state size")
            if self.truth.shape != (K, S // 2):
                raise ValidationError("truth block does not cover horizon x S/2")
        for name in ("x0", "p0"):
            v = getattr(self, name)
            if v is not None and v.shape != (S,):
                raise ValidationError(f"{name} length does not match S")
        if self.p0 is not None and np.any(self.p0 < 0):
            raise ValidationError("p0 must be non-negative")
        if self.x0 is None and not self._flat_start_exists():
            raise ValidationError(
                "no flat start for this S/phase combination; provide x0"
            )

    def _flat_start_exists(self) -> bool:
        return self.n_states % 2 == 0 and (self.n_states // 2) % self.phases == 0


def _flat_state(stimuli: StimuliSet) -> FilterState:
    if stimuli.x0 is not None:
        x0 = stimuli.x0.astype(float).copy()
    else:
        n = stimuli.n_states // 2
        angles = PHASE_ANGLES[stimuli.phases]
        theta = np.array([angles[i % stimuli.phases] for i in range(n)])
        x0 = np.concatenate([np.cos(theta), np.sin(theta)])
    p0 = stimuli.p0 if stimuli.p0 is not None else stimuli.q
    return FilterState(x=x0, P=np.diag(p0.astype(float)), phase=A_POSTERIORI, k=0)


def _injection_series(config: ScenarioConfig, rng: SubstreamRng) -> np.ndarray:
    net = config.network
    K = config.horizon
    if config.injection_profile is not None:
        return read_injection_profile(config.injection_profile, net, K)
    walk = config.random_walk
    n = net.n_nodes
    held = np.zeros(n, dtype=bool)
    held[net.slack_nodes()] = True
    p = np.zeros(n)
    q = np.zeros(n)
    series = np.zeros((K, n), dtype=complex)
    for k in range(K):
        for node in range(n):
            if held[node]:
                continue
            gp = rng.normal(INJECTION_CHANNEL_BASE + 2 * node, index=k)
            gq = rng.normal(INJECTION_CHANNEL_BASE + 2 * node + 1, index=k)
            p[node] = min(max(p[node] + walk.step * gp, -walk.bound), walk.bound)
            q[node] = min(max(q[node] + walk.step * gq, -walk.bound), walk.bound)
        series[k] = p + 1j * q
    return series


def generate_stimuli(config: ScenarioConfig, seed: int = None) -> StimuliSet:
    """Simulate the scenario and pack measurements step by step.

    Per step: one load-flow solve gives the true voltages; the selected
    voltage and injected-current phasors are perturbed in polar form;
    the measurement vector is packed [Re V; Im V; Re I; Im I].  Errors
    from a diverging step are re-raised with the step index attached.
    """
    net = config.network
    # The slack Norton source exists to model the upstream grid inside
    # the admittance matrix; the reduced load-flow system eliminates the
    # slack row anyway, and a PMU at the slack bus measures the physical
    # feeder head current, not the fictitious source current.  Both the
    # solver and the measurement model therefore use the bare network.
    Y = build_admittance(net, include_slack_source=False)
    selector = build_selector(net, _resolve_pmu(net, config.pmu_buses, None))
    meas = build_measurement_matrix(selector, Y)
    obs = check_observability(meas)
    if not obs.observable:
        raise ValidationError(
            f"PMU placement leaves the system unobservable "
            f"(rank {obs.rank} of {meas.n_states})"
        )
    S, D = meas.n_states, meas.n_measurements
    K = config.horizon

    seed = config.noise.seed if seed is None else int(seed)
    rng = SubstreamRng(seed)
    injections = _injection_series(config, rng)

    Ymat = Y.matrix
    gamma = selector.gamma
    m_nodes = gamma.shape[0]
    channels_per_step = 4 * m_nodes
    system = ReducedSystem(Ymat, net.slack_nodes(), net.slack_voltages())
    opts = LoadFlowOptions()

    truth = np.empty((K, net.n_nodes), dtype=complex)
    z = np.empty((K, D))
    for k in range(K):
        try:
            sol = solve_loadflow(Ymat, injections[k], net.slack_nodes(),
                                 net.slack_voltages(), opts=opts, system=system)
        except (ConvergenceError, ConditioningError) as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        V = sol.voltages
        truth[k] = V
        v_true = gamma @ V
        i_true = gamma @ (Ymat @ V)
        base = k * channels_per_step
        v_noisy = add_polar_noise(v_true, config.noise.e_rho, config.noise.e_phi,
                                  rng, base_channel=base)
        i_noisy = add_polar_noise(i_true, config.noise.e_rho, config.noise.e_phi,
                                  rng, base_channel=base + 2 * m_nodes)
        z[k] = np.concatenate([v_noisy.real, v_noisy.imag,
                               i_noisy.real, i_noisy.imag])

    model_rho, model_phi = config.noise.model_errors()
    r = build_measurement_covariance(
        selector, net.n_phases,
        PolarUncertainty.from_max_errors(model_rho, model_phi),
        nominal_current=config.noise.nominal_current,
    )
    return StimuliSet(
        n_states=S, n_measurements=D, horizon=K, phases=net.n_phases,
        q=np.full(S, config.noise.q), r=r, H=meas.H, z=z, truth=truth,
    )


def random_instance(n_states: int, n_measurements: int, seed: int,
                    horizon: int = 1) -> StimuliSet:
    """Well-scaled synthetic stimuli with a full-rank H (no truth).

    Used by the scalability sweep and anywhere a grid would be
    overkill.  H is resampled on rank failure, a bounded number of
    times.
    """
    rng = np.random.default_rng(seed)
    S, D = n_states, n_measurements
    for _ in range(20):
        H = rng.normal(0.0, 1.0, size=(D, S))
        if np.linalg.matrix_rank(H) == min(S, D):
            break
    else:
        raise ConditioningError("could not draw a full-rank H in 20 tries")
    q = rng.uniform(0.5e-6, 2e-6, size=S)
    r = rng.uniform(1e-7, 1e-6, size=D)
    x0 = 1.0 + rng.normal(0.0, 1e-3, size=S)
    z = (H @ x0)[None, :] + rng.normal(0.0, np.sqrt(r), size=(horizon, D))
    return StimuliSet(
        n_states=S, n_measurements=D, horizon=horizon, phases=1,
        q=q, r=r, H=H, z=z, x0=x0, p0=q.copy(),
    )


# ---------------------------------------------------------------------------
# engines


@dataclass(frozen=True)
class ResponseSet:
    producer: str
    n_states: int
    horizon: int
    estimates: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimates.shape != (self.horizon, self.n_states):
            raise ValidationError("estimate block does not cover horizon x S")
        if self.horizon < 1:
            raise ValidationError("response set holds no steps")


def run_golden(stimuli: StimuliSet) -> ResponseSet:
    """Reference estimator: binary64 batch gain-form updates."""
    state = _flat_state(stimuli)
    K, S = stimuli.horizon, stimuli.n_states
    X = np.empty((K, S))
    for k in range(K):
        frame = MeasurementFrame(z=stimuli.z[k], H=stimuli.H, R=stimuli.r)
        try:
            state, _ = dkf_update_gain_form(predict(state, stimuli.q), frame)
        except ConditioningError as exc:
            raise ConditioningError(f"step {k}: {exc}") from exc
        X[k] = state.x
    ops = closed_form_op_count(DKF, S, stimuli.n_measurements)
    meta = {
        "algorithm": "batch-gain-form",
        "precision": 64,
        "add_sub_per_step": ops.add_sub,
        "mul_div_per_step": ops.mul_div,
    }
    return ResponseSet(producer=GM_PRODUCER, n_states=S, horizon=K,
                       estimates=X, meta=meta)


def run_mut(stimuli: StimuliSet, parallelism: int = 4, precision: int = 32,
            cfg: ArithConfig = DEFAULT_ARITH) -> ResponseSet:
    """Unit under test: blocked sequential filter."""
    state = _flat_state(stimuli)
    K, S, D = stimuli.horizon, stimuli.n_states, stimuli.n_measurements
    X = np.empty((K, S))
    for k in range(K):
        frame = MeasurementFrame(z=stimuli.z[k], H=stimuli.H, R=stimuli.r)
        try:
            state = sdkf_step_blocked(state, frame, stimuli.q,
                                      p=parallelism, precision=precision)
        except ConditioningError as exc:
            raise ConditioningError(f"step {k}: {exc}") from exc
        X[k] = state.x.astype(np.float64)
    ops = closed_form_op_count(SDKF, S, D)
    meta = {
        "algorithm": "blocked-sequential",
        "precision": precision,
        "parallelism": parallelism,
        "add_sub_per_step": ops.add_sub,
        "mul_div_per_step": ops.mul_div,
        "cycles_per_step": cycle_cost(S, D, parallelism, cfg).total,
    }
    return ResponseSet(producer=MUT_PRODUCER, n_states=S, horizon=K,
                       estimates=X, meta=meta)


# ---------------------------------------------------------------------------
# comparison report


@dataclass(frozen=True)
class QuantileRow:
    node: int
    bus: int
    phase: int
    metric: str
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float


@dataclass(frozen=True)
class ErrorReport:
    n_nodes: int
    phases: int
    horizon: int
    rows: tuple
    meta: dict = field(default_factory=dict)

    def rows_for(self, metric: str):
        return [row for row in self.rows if row.metric == metric]


def _to_complex(estimates: np.ndarray) -> np.ndarray:
    n = estimates.shape[1] // 2
    return estimates[:, :n] + 1j * estimates[:, n:]


def _angle_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """angle(a) - angle(b), wrapped into (-pi, pi].

    Wrapping by conditional shift (rather than through a complex
    product or a modulo) keeps small differences exact: identical
    inputs give exactly zero.
    """
    d = np.angle(a) - np.angle(b)
    d = np.where(d > np.pi, d - 2.0 * np.pi, d)
    return np.where(d <= -np.pi, d + 2.0 * np.pi, d)


def _quantile_rows(samples: np.ndarray, metric: str, phases: int):
    """One row per node over the step axis (linear-interpolation
    quantiles, permutation invariant over samples)."""
    qs = np.quantile(samples, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    rows = []
    for node in range(samples.shape[1]):
        rows.append(QuantileRow(
            node=node, bus=node // phases + 1, phase=node % phases + 1,
            metric=metric, minimum=float(qs[0, node]), q25=float(qs[1, node]),
            median=float(qs[2, node]), q75=float(qs[3, node]),
            maximum=float(qs[4, node]),
        ))
    return rows


def compare_responses(stimuli: StimuliSet, golden: ResponseSet,
                      candidate: ResponseSet) -> ErrorReport:
    """Per-node polar error and mismatch distributions.

    Error is estimate minus truth, mismatch is candidate minus golden,
    both split into magnitude (pu) and phase (rad, wrapped difference).
    """
    if stimuli.truth is None:
        raise ValidationError("stimuli carry no truth; nothing to compare against")
    for rs in (golden, candidate):
        if rs.horizon != stimuli.horizon or rs.n_states != stimuli.n_states:
            raise ValidationError(
                f"{rs.producer} responses do not align with the stimuli"
            )
    gm = _to_complex(golden.estimates)
    mut = _to_complex(candidate.estimates)
    truth = stimuli.truth

    rows = []
    # metric prefixes are positional, not producer tags, so two response
    # sets from the same engine still produce a well-formed report
    for name, est in (("gm", gm), ("mut", mut)):
        rows += _quantile_rows(np.abs(est) - np.abs(truth),
                               f"{name}_magnitude_error", stimuli.phases)
        rows += _quantile_rows(_angle_diff(est, truth),
                               f"{name}_phase_error", stimuli.phases)
    rows += _quantile_rows(np.abs(mut) - np.abs(gm),
                           "magnitude_mismatch", stimuli.phases)
    rows += _quantile_rows(_angle_diff(mut, gm),
                           "phase_mismatch", stimuli.phases)

    meta = {}
    for name, rs in (("gm", golden), ("mut", candidate)):
        for key, value in rs.meta.items():
            meta[f"{name}_{key}"] = value
    return ErrorReport(
        n_nodes=stimuli.n_states // 2, phases=stimuli.phases,
        horizon=stimuli.horizon, rows=tuple(rows), meta=meta,
    )


# ---------------------------------------------------------------------------
# polynomial fits and the scalability sweep


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    residual: float


def fit_polynomial(xs, ys, degree: int) -> FitResult:
    """Least squares through normal equations on a [0,1]-scaled basis.

    The returned coefficients are ascending in the original x; the
    residual is the root-mean-square misfit.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValidationError("xs and ys must be equal-length vectors")
    if degree < 0:
        raise ValidationError("degree must be non-negative")
    if xs.size <= degree:
        raise ValidationError(
            f"{xs.size} points underdetermine a degree-{degree} fit"
        )
    lo = xs.min()
    span = xs.max() - lo
    if span == 0.0 and degree > 0:
        raise ConditioningError("design matrix is rank deficient (all x equal)")
    t = (xs - lo) / span if span > 0 else np.zeros_like(xs)
    V = np.vander(t, degree + 1, increasing=True)
    A = V.T @ V
    if np.linalg.matrix_rank(A) < degree + 1:
        raise ConditioningError("design matrix is rank deficient")
    scaled = np.linalg.solve(A, V.T @ ys)
    if span > 0:
        poly = Polynomial(scaled)(Polynomial([-lo / span, 1.0 / span]))
        coef = poly.coef
    else:
        coef = scaled[:1]
    coefficients = np.zeros(degree + 1)
    coefficients[:coef.size] = coef
    residual = float(np.sqrt(np.mean((V @ scaled - ys) ** 2)))
    return FitResult(coefficients=coefficients, residual=residual)


@dataclass(frozen=True)
class SweepRow:
    size: int
    cycles: int
    wall_seconds: float = None


@dataclass(frozen=True)
class FitEntry:
    range_name: str
    degree: int
    fit: FitResult


@dataclass(frozen=True)
class SweepReport:
    parallelism: int
    rows: tuple
    fits: tuple

    def fit(self, range_name: str, degree: int) -> FitResult:
        for entry in self.fits:
            if entry.range_name == range_name and entry.degree == degree:
                return entry.fit
        raise KeyError((range_name, degree))


#: The short end of the sweep, where the cost curve still looks close
#: to quadratic.
RESTRICTED_SWEEP_LIMIT = 80


def _timed_step(n_states: int, parallelism: int, seed: int) -> float:
    stimuli = random_instance(n_states, n_states, seed)
    state = _flat_state(stimuli)
    frame = MeasurementFrame(z=stimuli.z[0], H=stimuli.H, R=stimuli.r)
    sdkf_step_blocked(state, frame, stimuli.q, p=parallelism, precision=32)
    reps = []
    for _ in range(5):
        t0 = time.perf_counter()
        sdkf_step_blocked(state, frame, stimuli.q, p=parallelism, precision=32)
        reps.append(time.perf_counter() - t0)
    return float(np.median(reps))


def _clamped_fit(xs: np.ndarray, ys: np.ndarray, degree: int) -> FitResult:
    # a two-point ladder still yields a valid (if degenerate) report:
    # fit what the points determine, report zeros for the rest
    effective = min(degree, xs.size - 1)
    fit = fit_polynomial(xs, ys, effective)
    coefficients = np.zeros(degree + 1)
    coefficients[:effective + 1] = fit.coefficients
    return FitResult(coefficients=coefficients, residual=fit.residual)


def scalability_sweep(sizes, parallelism: int = 4, seed: int = 0,
                      measure_wall: bool = False,
                      cfg: ArithConfig = DEFAULT_ARITH) -> SweepReport:
    """Cycle-cost ladder over square problems (D = S) with fits.

    The fitted metric is always the analytic cycle count, which keeps
    sweep outputs reproducible; wall-clock medians (5 repetitions after
    a warm-up) are attached per row when requested but never fitted.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValidationError("no sweep sizes given")
    if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValidationError("sizes must be positive and strictly increasing")
    rows = []
    for idx, S in enumerate(sizes):
        wall = _timed_step(S, parallelism, seed + idx) if measure_wall else None
        rows.append(SweepRow(
            size=S,
            cycles=cycle_cost(S, S, parallelism, cfg).total,
            wall_seconds=wall,
        ))
    xs = np.array(sizes, dtype=float)
    ys = np.array([row.cycles for row in rows], dtype=float)
    fits = []
    for range_name, mask in (("full", np.ones_like(xs, dtype=bool)),
                             ("restricted", xs <= RESTRICTED_SWEEP_LIMIT)):
        if not mask.any():
            continue
        for degree in (2, 3):
            fits.append(FitEntry(
                range_name=range_name, degree=degree,
                fit=_clamped_fit(xs[mask], ys[mask], degree),
            ))
    return SweepReport(parallelism=parallelism, rows=tuple(rows),
                       fits=tuple(fits))


# ---------------------------------------------------------------------------
# file formats


def write_stimuli(stimuli: StimuliSet, path):
    lines = [f"{STIMULI_MAGIC},{FORMAT_VERSION}",
             f"dims,{stimuli.n_states},{stimuli.n_measurements},"
             f"{stimuli.horizon},{stimuli.phases}"]
    for i, v in enumerate(stimuli.q):
        lines.append(f"q,{i},{_fmt(v)}")
    for i, v in enumerate(stimuli.r):
        lines.append(f"r,{i},{_fmt(v)}")
    for i, j in zip(*np.nonzero(stimuli.H)):
        lines.append(f"h,{i},{j},{_fmt(stimuli.H[i, j])}")
    if stimuli.x0 is not None:
        for i, v in enumerate(stimuli.x0):
            lines.append(f"x0,{i},{_fmt(v)}")
    if stimuli.p0 is not None:
        for i, v in enumerate(stimuli.p0):
            lines.append(f"p0,{i},{_fmt(v)}")
    if stimuli.truth is not None:
        for k in range(stimuli.horizon):
            for i, v in enumerate(stimuli.truth[k]):
                lines.append(f"v,{k},{i},{_fmt(v.real)},{_fmt(v.imag)}")
    for k in range(stimuli.horizon):
        for i, v in enumerate(stimuli.z[k]):
            lines.append(f"z,{k},{i},{_fmt(v)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _split_header(path, lines, magic):
    if not lines:
        raise ValidationError(f"{path} is empty")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != magic:
        raise ValidationError(f"{path} is not a {magic} file")
    if head[1] != str(FORMAT_VERSION):
        raise ValidationError(f"{path} has unsupported version {head[1]}")


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [ln.rstrip("\n") for ln in fh if ln.strip()]


def read_stimuli(path) -> StimuliSet:
    lines = _read_lines(path)
    _split_header(path, lines, STIMULI_MAGIC)
    if len(lines) < 2 or not lines[1].startswith("dims,"):
        raise ValidationError(f"{path}: missing dims record")
    try:
        S, D, K, phases = (int(x) for x in lines[1].split(",")[1:])
    except ValueError:
        raise ValidationError(f"{path}: bad dims record {lines[1]!r}") from None
    q = np.full(S, np.nan)
    r = np.full(D, np.nan)
    H = np.zeros((D, S))
    x0 = {}
    p0 = {}
    truth = {}
    z = np.full((K, D), np.nan)
    for ln_no, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        tag = parts[0]
        if tag not in ("q", "r", "h", "x0", "p0", "v", "z"):
            raise ValidationError(f"{path}:{ln_no}: unknown record {tag!r}")
        try:
            if tag == "q":
                q[int(parts[1])] = float(parts[2])
            elif tag == "r":
                r[int(parts[1])] = float(parts[2])
            elif tag == "h":
                H[int(parts[1]), int(parts[2])] = float(parts[3])
            elif tag == "x0":
                x0[int(parts[1])] = float(parts[2])
            elif tag == "p0":
                p0[int(parts[1])] = float(parts[2])
            elif tag == "v":
                truth[(int(parts[1]), int(parts[2]))] = complex(
                    float(parts[3]), float(parts[4]))
            else:
                z[int(parts[1]), int(parts[2])] = float(parts[3])
        except (IndexError, ValueError):
            raise ValidationError(f"{path}:{ln_no}: malformed record {line!r}") from None
    if np.isnan(q).any() or np.isnan(r).any() or np.isnan(z).any():
        raise ValidationError(f"{path}: incomplete q/r/z coverage")

    def _gather(block, n, name):
        if not block:
            return None
        if sorted(block) != list(range(n)):
            raise ValidationError(f"{path}: incomplete {name} coverage")
        return np.array([block[i] for i in range(n)])

    truth_arr = None
    if truth:
        n_nodes = S // 2
        want = {(k, i) for k in range(K) for i in range(n_nodes)}
        if set(truth) != want:
            raise ValidationError(f"{path}: incomplete truth coverage")
        truth_arr = np.array([[truth[(k, i)] for i in range(n_nodes)]
                              for k in range(K)])
    return StimuliSet(
        n_states=S, n_measurements=D, horizon=K, phases=phases,
        q=q, r=r, H=H, z=z, truth=truth_arr,
        x0=_gather(x0, S, "x0"), p0=_gather(p0, S, "p0"),
    )


def _fmt_meta(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return _fmt(value)


def _parse_meta(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_responses(responses: ResponseSet, path):
    lines = [f"{RESPONSES_MAGIC},{FORMAT_VERSION}",
             f"dims,{responses.n_states},{responses.horizon}",
             f"producer,{responses.producer}"]
    for key in sorted(responses.meta):
        lines.append(f"meta,{key},{_fmt_meta(responses.meta[key])}")
    for k in range(responses.horizon):
        for i, v in enumerate(responses.estimates[k]):
            lines.append(f"x,{k},{i},{_fmt(v)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_responses(path) -> ResponseSet:
    lines = _read_lines(path)
    _split_header(path, lines, RESPONSES_MAGIC)
    if len(lines) < 3 or not lines[1].startswith("dims,") \
            or not lines[2].startswith("producer,"):
        raise ValidationError(f"{path}: missing dims/producer records")
    try:
        S, K = (int(x) for x in lines[1].split(",")[1:])
    except ValueError:
        raise ValidationError(f"{path}: bad dims record {lines[1]!r}") from None
    producer = lines[2].split(",", 1)[1]
    meta = {}
    X = np.full((K, S), np.nan)
    for ln_no, line in enumerate(lines[3:], start=4):
        parts = line.split(",")
        if parts[0] not in ("meta", "x"):
            raise ValidationError(f"{path}:{ln_no}: unknown record {parts[0]!r}")
        try:
            if parts[0] == "meta":
                meta[parts[1]] = _parse_meta(",".join(parts[2:]))
            else:
                X[int(parts[1]), int(parts[2])] = float(parts[3])
        except (IndexError, ValueError):
            raise ValidationError(f"{path}:{ln_no}: malformed record {line!r}") from None
    if np.isnan(X).any():
        raise ValidationError(f"{path}: incomplete estimate coverage")
    return ResponseSet(producer=producer, n_states=S, horizon=K,
                       estimates=X, meta=meta)


def write_report(report: ErrorReport, path):
    lines = [f"{REPORT_MAGIC},{FORMAT_VERSION}",
             f"dims,{report.n_nodes},{report.phases},{report.horizon}"]
    for key in sorted(report.meta):
        lines.append(f"meta,{key},{_fmt_meta(report.meta[key])}")
    for row in report.rows:
        lines.append(
            f"stat,{row.node},{row.bus},{row.phase},{row.metric},"
            f"{_fmt(row.minimum)},{_fmt(row.q25)},{_fmt(row.median)},"
            f"{_fmt(row.q75)},{_fmt(row.maximum)}"
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sweep(report: SweepReport, path):
    lines = [f"{SWEEP_MAGIC},{FORMAT_VERSION}",
             f"parallelism,{report.parallelism}"]
    for row in report.rows:
        record = f"row,{row.size},{row.cycles}"
        if row.wall_seconds is not None:
            record += f",{_fmt(row.wall_seconds)}"
        lines.append(record)
    for entry in report.fits:
        coef = ",".join(_fmt(c) for c in entry.fit.coefficients)
        lines.append(f"fit,{entry.range_name},{entry.degree},{coef},"
                     f"{_fmt(entry.fit.residual)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
