"""Discrete Kalman filter updates for the quasi-static grid model.

The process model is persistence: states carry over unchanged between
frames and the diagonal process noise absorbs slow drift, so prediction
reduces to adding Q to the covariance diagonal.  Updates come in four
interchangeable flavours:

* batch gain form (innovation covariance solved once per frame),
* batch information form (covariance updated through its inverse),
* Joseph-stabilized batch form (symmetric by construction),
* sequential scalar form, one measurement row at a time, whose only
  division is by the scalar innovation variance.

With diagonal R all four produce the same posterior up to rounding; the
sequential form is the one the blocked execution model mirrors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, ValidationError
from .network import PHASE_ANGLES

_EPS = np.finfo(float).eps

A_PRIORI = "a_priori"
A_POSTERIORI = "a_posteriori"


@dataclass(frozen=True)
class FilterState:
    """Estimate and covariance at step ``k``, before or after the update.

    ``P`` is maintained symmetric positive definite; updates re-symmetrize
    it explicitly where the arithmetic does not guarantee symmetry.
    """

    x: np.ndarray
    P: np.ndarray
    phase: str
    k: int = 0


@dataclass(frozen=True)
class MeasurementFrame:
    """One frame of synchronized measurements.

    ``R`` is a length-D vector when the measurement errors are
    independent (the usual case) or a full (D, D) matrix; the sequential
    update requires the vector form.
    """

    z: np.ndarray
    H: np.ndarray
    R: np.ndarray


@dataclass(frozen=True)
class UpdateDiagnostics:
    """Gain, innovation and innovation covariance of one update.

    For sequential updates ``gain`` has one column per processed
    measurement and ``innovation_cov`` holds the per-measurement scalar
    variances.
    """

    gain: np.ndarray
    innovation: np.ndarray
    innovation_cov: np.ndarray


def _require_phase(state: FilterState, phase: str, op: str):
    if state.phase != phase:
        raise ValidationError(f"{op} expects a state in phase {phase!r}, "
                              f"got {state.phase!r}")


def _check_frame(state: FilterState, frame: MeasurementFrame):
    S = state.x.shape[0]
    D = frame.z.shape[0]
    if frame.H.shape != (D, S):
        raise ValidationError(f"H must be ({D}, {S}), got {frame.H.shape}")
    if frame.R.shape not in ((D,), (D, D)):
        raise ValidationError("R must be a length-D vector or a (D, D) matrix")


def _dense_r(R: np.ndarray) -> np.ndarray:
    return np.diag(R) if R.ndim == 1 else R


def init_state(n_states: int, q_diag, phases: int = 1) -> FilterState:
    """Flat-start posterior at k = 0.

    Real parts take the cosines and imaginary parts the sines of the
    nominal phase angles (1 per unit everywhere); the covariance starts
    at diag(Q), i.e. exactly one prediction's worth of uncertainty.
    """
    if n_states < 2 or n_states % 2:
        raise ValidationError("state size must be even and at least 2")
    q_diag = np.asarray(q_diag, dtype=float)
    if q_diag.shape != (n_states,):
        raise ValidationError(f"Q diagonal must have length {n_states}")
    if np.any(q_diag <= 0):
        raise ValidationError("initial Q entries must be strictly positive")
    if phases not in PHASE_ANGLES:
        raise ValidationError("phases must be 1 or 3")
    n_nodes = n_states // 2
    angles = np.array([PHASE_ANGLES[phases][i % phases] for i in range(n_nodes)])
    x = np.concatenate([np.cos(angles), np.sin(angles)])
    return FilterState(x=x, P=np.diag(q_diag), phase=A_POSTERIORI, k=0)


def predict(state: FilterState, q_diag) -> FilterState:
    """Persistence prediction: same estimate, Q added to the diagonal."""
    _require_phase(state, A_POSTERIORI, "predict")
    q_diag = np.asarray(q_diag, dtype=float)
    if q_diag.shape != (state.x.shape[0],):
        raise ValidationError("Q diagonal length does not match the state")
    if np.any(q_diag < 0):
        raise ValidationError("Q entries must be non-negative")
    P = state.P.copy()
    P[np.diag_indices_from(P)] += q_diag
    return FilterState(x=state.x.copy(), P=P, phase=A_PRIORI, k=state.k + 1)


def _factor_spd(M: np.ndarray, what: str):
    """Cholesky factor with a cheap conditioning estimate."""
    try:
        factor = cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise ConditioningError(f"{what} is not positive definite") from None
    diag = np.abs(np.diag(factor[0]))
    if (diag.max() / diag.min()) ** 2 > 1.0 / _EPS:
        raise ConditioningError(f"{what} is numerically singular")
    return factor


def dkf_update_gain_form(state: FilterState, frame: MeasurementFrame):
    """Batch update through the Kalman gain.

    Solves W K' = (P H')' with W = H P H' + R instead of inverting W;
    the posterior covariance (I - K H) P is re-symmetrized afterwards
    because that product is not symmetric in floating point.
    """
    _require_phase(state, A_PRIORI, "update")
    _check_frame(state, frame)
    H = np.asarray(frame.H, dtype=float)
    PHt = state.P @ H.T
    W = H @ PHt + _dense_r(frame.R)
    W = 0.5 * (W + W.T)
    factor = _factor_spd(W, "innovation covariance")
    K = cho_solve(factor, PHt.T, check_finite=False).T
    dz = frame.z - H @ state.x
    x = state.x + K @ dz
    P = state.P - K @ PHt.T
    P = 0.5 * (P + P.T)
    new = FilterState(x=x, P=P, phase=A_POSTERIORI, k=state.k)
    return new, UpdateDiagnostics(gain=K, innovation=dz, innovation_cov=W)


def dkf_update_information_form(state: FilterState, frame: MeasurementFrame):
    """Batch update through the covariance inverse.

    Factorizes (P^-1 + H' R^-1 H) and solves for both the posterior
    covariance and the gain K = P+ H' R^-1; no explicit matrix inverse
    beyond the unavoidable prior one.
    """
    _require_phase(state, A_PRIORI, "update")
    _check_frame(state, frame)
    H = np.asarray(frame.H, dtype=float)
    S = state.x.shape[0]
    if frame.R.ndim == 1:
        if np.any(frame.R <= 0):
            raise ConditioningError("measurement variances must be positive")
        Rinv_H = H / frame.R[:, None]
    else:
        Rinv_H = cho_solve(_factor_spd(frame.R, "measurement covariance"), H,
                           check_finite=False)
    prior_factor = _factor_spd(state.P, "prior covariance")
    P_inv = cho_solve(prior_factor, np.eye(S), check_finite=False)
    M = P_inv + H.T @ Rinv_H
    M = 0.5 * (M + M.T)
    factor = _factor_spd(M, "posterior information matrix")
    P = cho_solve(factor, np.eye(S), check_finite=False)
    P = 0.5 * (P + P.T)
    K = cho_solve(factor, Rinv_H.T, check_finite=False)
    dz = frame.z - H @ state.x
    x = state.x + K @ dz
    W = H @ state.P @ H.T + _dense_r(frame.R)  # reported for diagnostics
    new = FilterState(x=x, P=P, phase=A_POSTERIORI, k=state.k)
    return new, UpdateDiagnostics(gain=K, innovation=dz, innovation_cov=W)


def joseph_update(state: FilterState, frame: MeasurementFrame) -> FilterState:
    """Gain-form update with the Joseph covariance expression.

    P+ = (I - K H) P (I - K H)' + K R K' costs an extra multiply but is
    symmetric by construction and keeps P positive definite for any
    gain, which makes it the reference for stability checks.
    """
    _require_phase(state, A_PRIORI, "update")
    _check_frame(state, frame)
    H = np.asarray(frame.H, dtype=float)
    PHt = state.P @ H.T
    W = H @ PHt + _dense_r(frame.R)
    W = 0.5 * (W + W.T)
    K = cho_solve(_factor_spd(W, "innovation covariance"), PHt.T,
                  check_finite=False).T
    dz = frame.z - H @ state.x
    x = state.x + K @ dz
    A = np.eye(state.x.shape[0]) - K @ H
    if frame.R.ndim == 1:
        KRKt = (K * frame.R) @ K.T
    else:
        KRKt = K @ frame.R @ K.T
    P = A @ state.P @ A.T + KRKt
    return FilterState(x=x, P=P, phase=A_POSTERIORI, k=state.k)


def sdkf_update(state: FilterState, frame: MeasurementFrame,
                formulation: str = "A"):
    """Sequential update, one scalar measurement at a time.

    Requires independent measurement errors (vector R).  Formulation
    "A" computes the gain from the prior-side coefficient vector
    P h and divides once by the scalar innovation variance
    w = h P h' + r.  Formulation "B" updates the covariance first --
    the rank-one information-matrix recursion solved in closed form,
    P - (P h)(P h)'/w -- and then reads the gain from the posterior as
    K = P h / r, mirroring the information-form algebra without any
    matrix factorization.

    Returns
    -------
    (FilterState, UpdateDiagnostics)
        ``diagnostics.gain[:, i]`` is the gain used for measurement i,
        ``innovation_cov`` the per-measurement scalar variances.
    """
    _require_phase(state, A_PRIORI, "update")
    _check_frame(state, frame)
    if frame.R.ndim != 1:
        raise ValidationError("sequential update requires uncorrelated "
                              "errors (vector R)")
    if formulation not in ("A", "B"):
        raise ValidationError(f"unknown formulation {formulation!r}")
    if formulation == "B" and np.any(frame.R <= 0):
        raise ConditioningError("formulation B divides by the measurement "
                                "variances; all must be positive")
    H = np.asarray(frame.H, dtype=float)
    D = frame.z.shape[0]
    S = state.x.shape[0]
    x = state.x.astype(float, copy=True)
    P = state.P.astype(float, copy=True)
    gains = np.empty((S, D))
    innovations = np.empty(D)
    variances = np.empty(D)
    for i in range(D):
        h = H[i]
        coeff = P @ h                     # reused by gain and covariance
        w = float(h @ coeff + frame.R[i])
        if not w > 0.0 or not math.isfinite(w):
            raise ConditioningError(
                f"scalar innovation variance not positive at measurement {i}"
            )
        if formulation == "A":
            K = coeff / w
            dz = float(frame.z[i] - h @ x)
            x += K * dz
            P -= np.outer(K, coeff)
        else:
            P -= np.outer(coeff, coeff) / w
            K = (P @ h) / frame.R[i]
            dz = float(frame.z[i] - h @ x)
            x += K * dz
        gains[:, i] = K
        innovations[i] = dz
        variances[i] = w
    P = 0.5 * (P + P.T)
    new = FilterState(x=x, P=P, phase=A_POSTERIORI, k=state.k)
    return new, UpdateDiagnostics(gain=gains, innovation=innovations,
                                  innovation_cov=variances)
