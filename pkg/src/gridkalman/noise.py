"""Measurement noise: polar perturbations and rectangular covariances.

Sensors report magnitude and phase, each with a maximum error read as a
3-sigma bound, so the working standard deviations are one third of the
configured maxima.  Stimuli are perturbed in polar form; the filter
needs the equivalent *rectangular* variances, which the transform below
provides in closed form for Gaussian magnitude and additive Gaussian
phase errors.

Randomness comes from a self-contained splitmix64 generator with one
substream per (seed, channel) pair.  Draws therefore do not depend on
evaluation order or thread count, and results are bit-reproducible
across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .network import PHASE_ANGLES, SelectorMatrix

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # splitmix64 state increment


def _mix64(z: int) -> int:
    """splitmix64 output function (Steele, Lea, Flood 2014)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _unit_open(bits: int) -> float:
    # 53 significand bits, shifted into (0, 1] so log() is safe
    return ((bits >> 11) + 1) * 2.0 ** -53


class SubstreamRng:
    """Deterministic Gaussian source indexed by channel.

    Each channel owns an independent splitmix64 stream derived from
    (seed, channel); successive ``index`` values walk that stream.
    Gaussians use the Box-Muller transform on consecutive outputs.
    """

    def __init__(self, seed: int):
        self._base = _mix64(int(seed))

    def _raw(self, channel: int, index: int) -> int:
        state = _mix64(self._base ^ ((channel & _MASK) * _GAMMA & _MASK))
        return _mix64((state + (index + 1) * _GAMMA) & _MASK)

    def uniform(self, channel: int, index: int = 0) -> float:
        """One draw from (0, 1]."""
        return _unit_open(self._raw(channel, index))

    def normal(self, channel: int, index: int = 0) -> float:
        """One standard normal draw, fixed by (seed, channel, index)."""
        u1 = _unit_open(self._raw(channel, 2 * index))
        u2 = _unit_open(self._raw(channel, 2 * index + 1))
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class PolarUncertainty:
    """Standard deviations of magnitude (pu) and phase (rad) errors."""

    sigma_m: float
    sigma_p: float

    def __post_init__(self):
        if self.sigma_m < 0 or self.sigma_p < 0:
            raise ValidationError("standard deviations must be non-negative")

    @classmethod
    def from_max_errors(cls, e_rho: float, e_phi: float) -> "PolarUncertainty":
        """Treat maximum errors as 3-sigma bounds."""
        if e_rho < 0 or e_phi < 0:
            raise ValidationError("maximum errors must be non-negative")
        return cls(sigma_m=e_rho / 3.0, sigma_p=e_phi / 3.0)


def polar_to_rect_variance(magnitude, delta, sigma_m, sigma_p):
    """Variances of Re/Im parts under Gaussian polar noise.

    For a phasor of magnitude ``|V|`` and angle ``delta`` with
    independent errors ``N(0, sigma_m^2)`` on the magnitude and additive
    ``N(0, sigma_p^2)`` on the angle, the rectangular parts have exactly

        var_re = |V|^2 e^-a [cos^2 d (cosh a - 1) + sin^2 d sinh a]
               + sigma_m^2 e^-a [cos^2 d cosh a + sin^2 d sinh a]

    with ``a = sigma_p^2``; ``var_im`` swaps the squared sine and
    cosine.  The identity follows from E[cos 2(d+w)] = cos(2d) e^-2a
    for w ~ N(0, a).

    Parameters
    ----------
    magnitude, delta : float or ndarray
        Nominal polar coordinates.
    sigma_m, sigma_p : float
        Magnitude (pu) and phase (rad) standard deviations.

    Returns
    -------
    (var_re, var_im)
        Rectangular variances, same shape as the inputs.
    """
    if sigma_m < 0 or sigma_p < 0:
        raise ValidationError("standard deviations must be non-negative")
    magnitude = np.asarray(magnitude, dtype=float)
    delta = np.asarray(delta, dtype=float)
    a = sigma_p ** 2
    decay = np.exp(-a)
    ch = np.cosh(a)
    sh = np.sinh(a)
    c2 = np.cos(delta) ** 2
    s2 = np.sin(delta) ** 2
    var_re = magnitude ** 2 * decay * (c2 * (ch - 1.0) + s2 * sh) \
        + sigma_m ** 2 * decay * (c2 * ch + s2 * sh)
    var_im = magnitude ** 2 * decay * (s2 * (ch - 1.0) + c2 * sh) \
        + sigma_m ** 2 * decay * (s2 * ch + c2 * sh)
    if var_re.ndim == 0:
        return float(var_re), float(var_im)
    return var_re, var_im


# Angles for the reference table: 0 to pi in steps of pi/6 skipping
# redundant signs (the variances are even in delta).
TABLE_ANGLES = (0.0, math.pi / 6, math.pi / 3, math.pi / 2,
                2 * math.pi / 3, 5 * math.pi / 6, math.pi)


def uncertainty_table(magnitude: float = 1.0, e_rho: float = 1e-3,
                      e_phi: float = 1.5e-3, angles=TABLE_ANGLES):
    """Rows of (angle, sigma_re, sigma_im) for the reference sensor class."""
    pol = PolarUncertainty.from_max_errors(e_rho, e_phi)
    rows = []
    for delta in angles:
        vr, vi = polar_to_rect_variance(magnitude, delta, pol.sigma_m, pol.sigma_p)
        rows.append((delta, math.sqrt(vr), math.sqrt(vi)))
    return rows


def add_polar_noise(phasors, e_rho, e_phi, rng: SubstreamRng,
                    base_channel: int = 0) -> np.ndarray:
    """Perturb phasors multiplicatively in polar form.

    Element i becomes ``rho * exp(1j phi)`` with

        rho = (1 + N(0, e_rho/3)) |x_i|
        phi = (1 + N(0, e_phi/3)) angle(x_i)

    i.e. both magnitude and angle are scaled by noisy unit factors.
    Element i consumes the Gaussians of channels ``base_channel + 2 i``
    (magnitude) and ``base_channel + 2 i + 1`` (angle), so a fixed
    channel layout reproduces the exact same measurement series no
    matter how calls are batched.

    Zero maximum errors return the input bit-for-bit (no polar round
    trip), and a zero phasor stays zero.
    """
    if e_rho < 0 or e_phi < 0:
        raise ValidationError("maximum errors must be non-negative")
    phasors = np.asarray(phasors, dtype=complex)
    if e_rho == 0.0 and e_phi == 0.0:
        return phasors.copy()
    sigma_rho = e_rho / 3.0
    sigma_phi = e_phi / 3.0
    out = np.empty_like(phasors)
    flat = phasors.ravel()
    dest = out.ravel()
    for i, x in enumerate(flat):
        g_mag = rng.normal(base_channel + 2 * i)
        g_ang = rng.normal(base_channel + 2 * i + 1)
        rho = (1.0 + sigma_rho * g_mag) * abs(x)
        phi = (1.0 + sigma_phi * g_ang) * math.atan2(x.imag, x.real)
        dest[i] = rho * complex(math.cos(phi), math.sin(phi))
    return out


def build_process_covariance(n_states: int, q: float) -> np.ndarray:
    """Diagonal process noise, one variance for every state (pu^2)."""
    if q <= 0:
        raise ValidationError("process noise variance must be positive")
    if n_states < 1:
        raise ValidationError("state size must be positive")
    return np.full(n_states, float(q))


def build_measurement_covariance(selector, n_phases: int,
                                 polar: PolarUncertainty,
                                 nominal_current: float = 1.0) -> np.ndarray:
    """Constant diagonal measurement covariance in measurement order.

    Entries follow the measurement layout [Re V; Im V; Re I; Im I]: each
    measured (bus, phase) channel gets the rectangular variances of
    :func:`polar_to_rect_variance` evaluated at unit voltage magnitude
    (or ``nominal_current`` for the current block) and the nominal phase
    angle of its phase.  Holding R constant at the nominal operating
    point keeps the estimator's covariance recursion state-independent.
    """
    gamma = selector.gamma if isinstance(selector, SelectorMatrix) else np.asarray(selector)
    m_nodes = gamma.shape[0]
    if m_nodes == 0 or m_nodes % n_phases:
        raise ValidationError("selector rows do not tile into phases")
    angles = PHASE_ANGLES[n_phases]
    deltas = np.array([angles[i % n_phases] for i in range(m_nodes)])
    v_re, v_im = polar_to_rect_variance(1.0, deltas, polar.sigma_m, polar.sigma_p)
    i_re, i_im = polar_to_rect_variance(
        float(nominal_current), deltas, polar.sigma_m, polar.sigma_p
    )
    R = np.concatenate([v_re, v_im, i_re, i_im])
    if np.any(R <= 0):
        raise ValidationError(
            "zero measurement variance; noise parameters leave a channel exact"
        )
    return R
