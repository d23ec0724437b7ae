"""Block-partitioned sequential filter with fixed parallelism.

This module mirrors how the sequential filter maps onto a fixed array
of arithmetic blocks with parallelism degree p: operands are
partitioned into p-wide blocks (zero padded), inner products reduce
through a balanced adder tree of width p with a sequential accumulator
across chunks, and matrix-vector products run that reduction once per
row.  Matrix-shaped operations gain a factor p^2, vector-shaped ones a
factor p.

Precision is part of the execution model: with ``precision=32`` every
primitive operation rounds to binary32 before the next one consumes it
(true single-precision arithmetic, not double arithmetic truncated at
the end).  All reductions have a fixed order, so results are
bit-reproducible regardless of thread count or call batching.

The cycle-cost, memory and resource models are deliberately simple
closed forms; they capture the scaling of the block engine, not the
cycle-exact behaviour of any particular device.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, ValidationError
from .filters import A_POSTERIORI, A_PRIORI, FilterState, MeasurementFrame, _require_phase

_DTYPES = {32: np.float32, 64: np.float64}

#: Total words available across operand memories; sits between the
#: footprint of a 255-state and a 256-state square problem (D = S), the
#: documented feasibility boundary of the reference platform.
DEFAULT_BUDGET_WORDS = 132_000


@dataclass(frozen=True)
class ArithConfig:
    """Latency (cycles) and throughput (results/cycle) per block type,
    plus a DSP-slice weight for each, used by the resource estimate."""

    add_latency: int = 5
    mult_latency: int = 2
    sum_tree_latency: int = 20
    divide_latency: int = 20
    add_throughput: float = 1.0
    mult_throughput: float = 1.0
    sum_tree_throughput: float = 1.0
    divide_throughput: float = 1.0
    dsp_add: int = 2
    dsp_mult: int = 3
    dsp_sum_tree: int = 9
    dsp_divide: int = 8

    def __post_init__(self):
        for name in ("add_latency", "mult_latency", "sum_tree_latency",
                     "divide_latency"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least one cycle")
        for name in ("add_throughput", "mult_throughput",
                     "sum_tree_throughput", "divide_throughput"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


DEFAULT_ARITH = ArithConfig()


def _dtype(precision: int):
    try:
        return _DTYPES[precision]
    except KeyError:
        raise ValidationError(f"precision must be 32 or 64, got {precision}") from None


def _check_p(p: int):
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise ValidationError(f"parallelism degree must be a positive integer, got {p!r}")


def _padded(n: int, p: int) -> int:
    return -(-n // p) * p


@dataclass(frozen=True)
class BlockedVector:
    """Vector padded to a multiple of p, stored contiguously."""

    data: np.ndarray
    length: int
    p: int

    @property
    def precision(self) -> int:
        return self.data.dtype.itemsize * 8


@dataclass(frozen=True)
class BlockedMatrix:
    """Matrix padded to multiples of p in both dimensions (row-major
    raster of p x p blocks)."""

    data: np.ndarray
    rows: int
    cols: int
    p: int

    @property
    def precision(self) -> int:
        return self.data.dtype.itemsize * 8


def partition(operand, p: int):
    """Pad an operand into its blocked form.

    The padding region is exactly zero and the original dtype is kept,
    so ``unpartition(partition(x, p))`` returns ``x`` bit for bit.
    """
    _check_p(p)
    a = np.asarray(operand)
    if a.ndim == 1:
        n = a.shape[0]
        data = np.zeros(_padded(n, p), dtype=a.dtype)
        data[:n] = a
        return BlockedVector(data=data, length=n, p=p)
    if a.ndim == 2:
        r, c = a.shape
        data = np.zeros((_padded(r, p), _padded(c, p)), dtype=a.dtype)
        data[:r, :c] = a
        return BlockedMatrix(data=data, rows=r, cols=c, p=p)
    raise ValidationError("only vectors and matrices can be partitioned")


def unpartition(blocked):
    if isinstance(blocked, BlockedVector):
        return blocked.data[:blocked.length].copy()
    if isinstance(blocked, BlockedMatrix):
        return blocked.data[:blocked.rows, :blocked.cols].copy()
    raise ValidationError("not a blocked operand")


def _tree_reduce_rows(products: np.ndarray, p: int) -> np.ndarray:
    """Reduce (rows, n) products to (rows,) sums in block-engine order.

    Each p-wide chunk collapses through a balanced pairwise tree (zero
    padded up to a power of two); chunk results then fold left to right
    into a sequential accumulator.  All arithmetic stays in the dtype of
    ``products``.
    """
    rows, n = products.shape
    dtype = products.dtype
    n_pad = _padded(max(n, 1), p)
    if n_pad != n:
        products = np.concatenate(
            [products, np.zeros((rows, n_pad - n), dtype=dtype)], axis=1)
    chunks = products.reshape(rows, n_pad // p, p)
    width = 1 << (p - 1).bit_length()  # next power of two
    if width != p:
        pad = np.zeros((rows, n_pad // p, width - p), dtype=dtype)
        chunks = np.concatenate([chunks, pad], axis=2)
    while width > 1:
        # adder-tree level: adjacent leaves pair up, in index order
        chunks = chunks[:, :, 0::2] + chunks[:, :, 1::2]
        width //= 2
    partials = chunks[:, :, 0]
    acc = partials[:, 0].copy()
    for j in range(1, partials.shape[1]):
        acc = acc + partials[:, j]
    return acc


def inner_product_tree(v1, v2, p: int, precision: int = 64):
    """Inner product through the multiplier array and adder tree.

    Deterministic for fixed (p, precision); the reduction order is the
    one the hardware pipeline realizes, so binary32 results differ from
    a binary64 reference by normal rounding only.
    """
    _check_p(p)
    dtype = _dtype(precision)
    a = np.asarray(v1, dtype=dtype)
    b = np.asarray(v2, dtype=dtype)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("inner product needs two equal-length vectors")
    if a.shape[0] == 0:
        raise ValidationError("inner product of empty vectors")
    products = (a * b)[None, :]
    return _tree_reduce_rows(products, p)[0]


def matvec_blocked(M, v, p: int, precision: int = 64) -> np.ndarray:
    """Matrix-vector product as one tree inner product per row."""
    _check_p(p)
    dtype = _dtype(precision)
    M = np.asarray(M, dtype=dtype)
    v = np.asarray(v, dtype=dtype)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise ValidationError("matvec shapes disagree")
    return _tree_reduce_rows(M * v[None, :], p)


def sdkf_step_blocked(state: FilterState, frame: MeasurementFrame, q_diag,
                      p: int, precision: int = 32) -> FilterState:
    """One prediction plus sequential update on the block engine.

    Semantically identical to ``predict`` followed by
    ``filters.sdkf_update`` (formulation A) up to rounding: operands are
    loaded in the requested precision and every primitive -- the
    coefficient matvec, the scalar innovation variance, the single
    reciprocal, gain scaling, state update, outer product, covariance
    subtract -- rounds in that precision.  The covariance is
    re-symmetrized once after the last measurement.
    """
    _require_phase(state, A_POSTERIORI, "blocked step")
    _check_p(p)
    dtype = _dtype(precision)
    q = np.asarray(q_diag, dtype=dtype)
    x = np.asarray(state.x, dtype=dtype).copy()
    P = np.asarray(state.P, dtype=dtype).copy()
    H = np.asarray(frame.H, dtype=dtype)
    z = np.asarray(frame.z, dtype=dtype)
    if frame.R.ndim != 1:
        raise ValidationError("blocked step requires uncorrelated errors (vector R)")
    r = np.asarray(frame.R, dtype=dtype)
    S = x.shape[0]
    D = z.shape[0]
    if H.shape != (D, S) or q.shape != (S,):
        raise ValidationError("operand shapes disagree")

    P[np.diag_indices_from(P)] += q          # prediction

    one = dtype(1.0)
    for i in range(D):
        h = H[i]
        coeff = matvec_blocked(P, h, p, precision)
        w = inner_product_tree(h, coeff, p, precision) + r[i]
        if not w > 0.0 or not np.isfinite(w):
            raise ConditioningError(
                f"scalar innovation variance not positive at measurement {i}"
            )
        w_inv = one / w                      # the engine's only division
        gain = coeff * w_inv
        z_hat = inner_product_tree(h, x, p, precision)
        dz = z[i] - z_hat
        x = x + gain * dz
        P = P - gain[:, None] * coeff[None, :]
    P = (P + P.T) * dtype(0.5)
    return FilterState(x=x, P=P, phase=A_POSTERIORI, k=state.k + 1)


# ---------------------------------------------------------------------------
# cost models


@dataclass(frozen=True)
class CycleCost:
    total: int
    breakdown: dict = field(default_factory=dict)


def cycle_cost(n_states: int, n_measurements: int, p: int,
               cfg: ArithConfig = DEFAULT_ARITH) -> CycleCost:
    """Closed-form cycle count of one blocked filter cycle.

    With B = ceil(S / p) blocks per state vector, each measurement
    streams three matrix-shaped passes (the coefficient matvec, the
    rank-one outer product and the covariance subtract, B^2 block
    issues each), four vector-shaped passes (gain scaling, innovation
    feed, correction scaling, state add, B issues each) and waits once
    for the scalar dependency chain

        products -> adder tree -> + r -> reciprocal -> gain scaling,

    whose pipeline latencies add up to the constant term (49 cycles
    with the default configuration).  Prediction streams the
    covariance-diagonal add.  Throughputs below one result per cycle
    stretch the streaming terms accordingly.
    """
    S, D = n_states, n_measurements
    if S < 1 or D < 1:
        raise ValidationError("state size and measurement count must be >= 1")
    _check_p(p)
    B = -(-S // p)
    issue = lambda blocks, thr: math.ceil(blocks / thr)
    latency = (cfg.mult_latency + cfg.sum_tree_latency + cfg.add_latency
               + cfg.divide_latency + cfg.mult_latency)
    breakdown = {
        "prediction": issue(B, cfg.add_throughput) + cfg.add_latency,
        "coefficient_matvec": D * issue(B * B, cfg.mult_throughput),
        "gain_scaling": D * issue(B, cfg.mult_throughput),
        "state_update": D * (issue(B, cfg.mult_throughput)
                             + issue(B, cfg.add_throughput)),
        "covariance_update": D * (issue(B * B, cfg.mult_throughput)
                                  + issue(B * B, cfg.add_throughput)),
        "innovation_feed": D * issue(B, cfg.mult_throughput),
        "pipeline_latency": D * latency,
    }
    return CycleCost(total=sum(breakdown.values()), breakdown=breakdown)


@dataclass(frozen=True)
class MemoryFootprint:
    words: int
    separate_memories_required: int
    feasible: bool


def memory_footprint(n_states: int, n_measurements: int, p: int,
                     budget_words: int = DEFAULT_BUDGET_WORDS) -> MemoryFootprint:
    """Words of operand storage for one filter instance.

    Counts the resident operands -- Q, R, H, z, the reusable coefficient
    vector, the gain, the state, the covariance and the two scalars
    (reciprocal innovation variance and predicted measurement) -- with
    every operand padded to multiples of p per dimension.  Matrices
    shard into p^2 separate memories, so that count is reported too.
    """
    S, D = n_states, n_measurements
    if S < 1 or D < 1:
        raise ValidationError("state size and measurement count must be >= 1")
    _check_p(p)
    ps = _padded(S, p)
    pd = _padded(D, p)
    words = (
        ps            # Q diagonal
        + pd          # R diagonal
        + pd * ps     # H
        + pd          # z
        + ps          # coefficient vector
        + ps          # gain
        + ps          # state
        + ps * ps     # covariance
        + 2           # scalars
    )
    return MemoryFootprint(
        words=words,
        separate_memories_required=p * p,
        feasible=words <= budget_words,
    )


def resource_estimate(p: int, cfg: ArithConfig = DEFAULT_ARITH) -> int:
    """Approximate DSP-slice demand of the block array.

    p^2 multiplier-adder pairs serve the matrix-shaped operations, p
    inner-product units (p multipliers plus one adder tree each) serve
    the reductions, and a single divider computes reciprocals.  A crude
    envelope: real devices fuse and time-multiplex blocks.
    """
    _check_p(p)
    matrix_blocks = p * p * (cfg.dsp_mult + cfg.dsp_add)
    reduce_units = p * (p * cfg.dsp_mult + cfg.dsp_sum_tree)
    return matrix_blocks + reduce_units + cfg.dsp_divide
