"""Sensitivity of the magnetometer and the reference limits it is compared
against.

The sensitivity of a phase readout through <Jy> after interrogation time t is

    eta = Delta Jy / (|d<Jy>/dphi| gamma sqrt(t))      [G / sqrt(Hz)]

which diverges at very short times (no signal slope yet) and whenever the
slope passes through zero.  Reference curves: the coherent-probe limit
eta_C = 1/(gamma sqrt(2 t J)) (standard quantum limit), the Heisenberg limit
eta_HL = 1/(gamma J sqrt(t)), and the squeezed-probe prediction
eta_S = (theta(t)/lambda) sqrt(xi2_s) / (gamma sqrt(2 t J)) with
theta(t) = sqrt(1 + tan^2(omega t) Var(Jx)_0/Var(Jy)_0) accounting for a
fixed y-axis readout of a precessing squeezed ellipse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from relaymag.probes import SqueezingMetrics

GAUSS_TO_TESLA = 1e-4


@dataclass(frozen=True)
class SensitivityPoint:
    t: float
    eta_g: float  # G/sqrt(Hz)
    eta_t: float  # T/sqrt(Hz)
    delta_jy: float
    slope: float


def sensitivity(delta_jy: float, slope: float, t: float, gamma: float) -> SensitivityPoint:
    """Sensitivity from a measured spread and phase slope at time t."""
    if t <= 0:
        raise ValueError("t must be > 0")
    if delta_jy < 0:
        raise ValueError("delta_jy must be >= 0")
    if slope == 0.0:
        eta = math.inf
    else:
        eta = delta_jy / (abs(slope) * gamma * math.sqrt(t))
    return SensitivityPoint(
        t=t, eta_g=eta, eta_t=eta * GAUSS_TO_TESLA, delta_jy=delta_jy, slope=slope
    )


def sql_reference(J: float, t, gamma: float):
    """Coherent-probe optimum 1/(gamma sqrt(2 t J))."""
    t = np.asarray(t, dtype=float)
    out = 1.0 / (gamma * np.sqrt(2.0 * t * J))
    return out if out.ndim else float(out)


def hl_reference(J: float, t, gamma: float):
    """Heisenberg limit 1/(gamma J sqrt(t))."""
    t = np.asarray(t, dtype=float)
    out = 1.0 / (gamma * J * np.sqrt(t))
    return out if out.ndim else float(out)


def theta_factor(t, omega: float, var_x0: float, var_y0: float):
    """Fixed-direction readout factor sqrt(1 + tan^2(omega t) Vx0/Vy0).

    ``omega`` is the precession rate of the probe during interrogation; the
    default choice elsewhere is gamma*b0 (the signal's own Larmor rate), the
    rate at which the squeezed ellipse turns away from the y readout axis.
    """
    if var_y0 <= 0:
        raise ValueError("var_y0 must be > 0")
    t = np.asarray(t, dtype=float)
    out = np.sqrt(1.0 + np.tan(omega * t) ** 2 * (var_x0 / var_y0))
    return out if out.ndim else float(out)


def sss_reference(J: float, t, gamma: float, metrics: SqueezingMetrics, theta_t=1.0):
    """Squeezed-probe prediction (theta/lambda) sqrt(xi2)/ (gamma sqrt(2tJ))."""
    if metrics.lam == 0 or not metrics.valid:
        raise ValueError("degenerate probe metrics: lambda = 0")
    t = np.asarray(t, dtype=float)
    out = (
        np.asarray(theta_t, dtype=float)
        / metrics.lam
        * math.sqrt(metrics.xi2_s)
        / (gamma * np.sqrt(2.0 * t * J))
    )
    return out if out.ndim else float(out)


THRESHOLD_KINDS = ("css_noDD", "sss_noDD", "withDD")


def threshold_reference(
    kind: str,
    J: float,
    t: float,
    gamma: float,
    B0: float | None = None,
    max_iter: int = 200,
    rtol: float = 1e-12,
) -> float:
    """Reference noise-cutoff threshold in Gauss above which sensitivity
    degrades.

    css_noDD: 1/(gamma t sqrt(J));  sss_noDD: 1/(gamma t J);
    withDD: the self-consistent cutoff solving bc = (B0/bc)^2/(gamma t sqrt(J)),
    iterated as a damped fixed point.
    """
    if kind not in THRESHOLD_KINDS:
        raise ValueError(f"unknown threshold kind {kind!r}")
    if min(J, t, gamma) <= 0:
        raise ValueError("J, t, gamma must be > 0")
    if kind == "css_noDD":
        return 1.0 / (gamma * t * math.sqrt(J))
    if kind == "sss_noDD":
        return 1.0 / (gamma * t * J)
    if B0 is None or B0 <= 0:
        raise ValueError("withDD threshold needs B0 > 0")
    c = B0**2 / (gamma * t * math.sqrt(J))
    x = 1.0 / (gamma * t * math.sqrt(J))  # start from the no-DD scale
    for _ in range(max_iter):
        x_new = math.sqrt(c / x)  # contraction toward x^3 = c
        if abs(x_new - x) <= rtol * x_new:
            return x_new
        x = x_new
    raise RuntimeError("withDD threshold fixed point did not converge")


def lower_envelope(t: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Lower envelope of an oscillating sensitivity curve: interpolation
    through the local minima (plus endpoints), clipped by the raw curve so
    smooth monotone stretches are left untouched."""
    t = np.asarray(t, dtype=float)
    eta = np.asarray(eta, dtype=float)
    finite = np.isfinite(eta)
    keep = finite.copy()
    for i in range(1, t.size - 1):
        if not finite[i]:
            continue
        left = eta[i - 1] if finite[i - 1] else math.inf
        right = eta[i + 1] if finite[i + 1] else math.inf
        keep[i] = eta[i] <= left and eta[i] <= right
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return np.full_like(eta, math.inf)
    env = np.interp(t, t[idx], eta[idx])
    return np.where(finite, np.minimum(env, eta), env)


def _running_median(x: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    out = np.empty_like(x)
    for i in range(x.size):
        lo = max(i - half, 0)
        hi = min(i + half + 1, x.size)
        out[i] = np.median(x[lo:hi])
    return out


def optimal_eta(t: np.ndarray, eta: np.ndarray, window: int = 9) -> float:
    """Optimum (minimum) sensitivity over the time grid.

    The raw minimum of a Monte Carlo sensitivity curve is biased low by
    extreme-value statistics (every grid point carries estimator scatter),
    so the curve is median-smoothed over ``window`` points before taking
    the minimum; upward spikes where the slope crosses zero are removed by
    the same smoothing.
    """
    eta = np.asarray(eta, dtype=float)
    good = np.isfinite(eta)
    if not np.any(good):
        return math.inf
    if np.count_nonzero(good) < max(window, 3):
        return float(eta[good].min())
    smooth = _running_median(eta[good], window)
    return float(smooth.min())
