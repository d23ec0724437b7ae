"""Arithmetic operation counts for the batch and sequential filters.

Two independent sources must agree: closed-form totals derived from the
per-quantity cost of each algorithm step, and counters incremented by an
actual scalar-loop execution of the sequential filter.  The closed forms
cover one complete cycle (persistence prediction plus estimation) for
state size S and measurement count D.

Batch counts depend on how the D x D innovation covariance is inverted;
the inversion's add and multiply counts are reported separately so that
scaling conclusions do not hinge on the chosen method's constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ValidationError

DKF = "dkf"
SDKF = "sdkf"


@dataclass(frozen=True)
class OpCount:
    """Additions/subtractions and multiplications/divisions of one cycle.

    ``add_sub`` and ``mul_div`` are totals including the inversion terms,
    which are also broken out as ``inversion_add`` / ``inversion_mul``
    (zero for the sequential filter, which never inverts a matrix).
    """

    add_sub: int
    mul_div: int
    inversion_add: int = 0
    inversion_mul: int = 0


def gauss_jordan_inversion(d: int):
    """ (m, n) operation counts modeling a D x D Gauss-Jordan inverse."""
    return d ** 3, d ** 3


def closed_form_op_count(algorithm: str, n_states: int, n_measurements: int,
                         inversion_model=gauss_jordan_inversion) -> OpCount:
    """Closed-form scalar operation totals for one filter cycle.

    Parameters
    ----------
    algorithm : "dkf" or "sdkf"
        Batch or sequential estimation.
    inversion_model : callable
        Maps D to (adds, muls) of the batch innovation-covariance
        inverse; ignored for the sequential filter.

    Notes
    -----
    Sequential totals are exactly ``2 D S^2 + 2 D S + S`` additions and
    ``2 D S^2 + 4 D S + D`` multiplications: linear in D at fixed S.
    Batch totals carry a ``2 D^2 S`` term plus the inversion's O(D^3).
    """
    S, D = n_states, n_measurements
    if S < 1 or D < 1:
        raise ValidationError("state size and measurement count must be >= 1")
    if algorithm == SDKF:
        add = S + D * S * (S - 1) + D * S + 2 * D * S + D * S ** 2
        mul = D * S ** 2 + D * (2 * S + 1) + 2 * D * S + D * S ** 2
        return OpCount(add_sub=add, mul_div=mul)
    if algorithm == DKF:
        m, n = inversion_model(D)
        add = (S
               + D * S * (S - 1)                       # P H' feed
               + 2 * D ** 2 * S + D * (1 - D - S) + m  # gain
               + 2 * D * S                             # state
               + D * S ** 2)                           # covariance
        mul = (D * S ** 2
               + 2 * D ** 2 * S + n
               + 2 * D * S
               + D * S ** 2)
        return OpCount(add_sub=add, mul_div=mul, inversion_add=m, inversion_mul=n)
    raise ValidationError(f"unknown algorithm {algorithm!r}")


class _Tally:
    __slots__ = ("add_sub", "mul_div")

    def __init__(self):
        self.add_sub = 0
        self.mul_div = 0


def instrumented_sdkf_step(x, P, q_diag, z, H, r_diag):
    """Scalar-loop sequential cycle that counts every arithmetic op.

    Runs prediction plus the full sequential update with explicit Python
    loops, incrementing a counter at each scalar add/sub and mul/div.
    Intentionally naive: the point is an operation count (and a value
    cross-check) independent of the closed forms and of numpy's fused
    kernels.

    Returns
    -------
    (x_post, P_post, OpCount)
    """
    x = [float(v) for v in x]
    P = [[float(v) for v in row] for row in np.asarray(P, dtype=float)]
    z = [float(v) for v in z]
    H = [[float(v) for v in row] for row in np.asarray(H, dtype=float)]
    r = [float(v) for v in r_diag]
    q = [float(v) for v in q_diag]
    S = len(x)
    D = len(z)
    t = _Tally()

    for j in range(S):                      # prediction: P += diag(q)
        P[j][j] = P[j][j] + q[j]
        t.add_sub += 1

    for i in range(D):
        h = H[i]

        coeff = [0.0] * S                   # P h: S^2 mul, S(S-1) add
        for row in range(S):
            acc = P[row][0] * h[0]
            t.mul_div += 1
            for col in range(1, S):
                acc += P[row][col] * h[col]
                t.mul_div += 1
                t.add_sub += 1
            coeff[row] = acc

        hph = h[0] * coeff[0]               # h (P h): S mul, S-1 add
        t.mul_div += 1
        for col in range(1, S):
            hph += h[col] * coeff[col]
            t.mul_div += 1
            t.add_sub += 1

        w = r[i] + hph                      # 1 add
        t.add_sub += 1
        if w <= 0.0:
            raise ConditioningError("scalar innovation variance not positive")
        w_inv = 1.0 / w                     # 1 div
        t.mul_div += 1

        gain = [c * w_inv for c in coeff]   # S mul
        t.mul_div += S

        z_hat = h[0] * x[0]                 # S mul, S-1 add
        t.mul_div += 1
        for col in range(1, S):
            z_hat += h[col] * x[col]
            t.mul_div += 1
            t.add_sub += 1

        dz = z[i] - z_hat                   # 1 sub
        t.add_sub += 1

        dx = [g * dz for g in gain]         # S mul
        t.mul_div += S
        for col in range(S):                # S add
            x[col] = x[col] + dx[col]
        t.add_sub += S

        for row in range(S):                # outer: S^2 mul, then S^2 sub
            for col in range(S):
                P[row][col] = P[row][col] - gain[row] * coeff[col]
        t.mul_div += S * S
        t.add_sub += S * S

    counts = OpCount(add_sub=t.add_sub, mul_div=t.mul_div)
    return np.array(x), np.array(P), counts


def instrumented_sdkf_counts(n_states: int, n_measurements: int,
                             seed: int = 0) -> OpCount:
    """Counts from running the instrumented cycle on random data."""
    rng = np.random.default_rng(seed)
    S, D = n_states, n_measurements
    if S < 1 or D < 1:
        raise ValidationError("state size and measurement count must be >= 1")
    A = rng.standard_normal((S, S))
    P = A @ A.T + np.eye(S)
    x = rng.standard_normal(S)
    H = rng.standard_normal((D, S))
    z = rng.standard_normal(D)
    r = rng.uniform(0.5, 1.5, size=D)
    q = rng.uniform(0.5, 1.5, size=S)
    _, _, counts = instrumented_sdkf_step(x, P, q, z, H, r)
    return counts
