"""Probe state preparation (coherent and squeezed spin states) and the
squeezing metrics consumed by the sensitivity formulas.

The squeezed state is prepared by counter-twisting evolution with the
generator (Jy Jz + Jz Jy)/2, which keeps the mean spin on +x and squeezes
one transverse quadrature, followed by a rotation about x that aligns the
minimum-variance direction with y.  The metrics fed downstream are always
measured from the state actually produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar

from relaymag import spinalg

X_AXIS = np.array([1.0, 0.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class ProbeSpec:
    """Probe request: CSS, or SSS with an explicit twist, a target squeezing,
    or (default) the twist minimizing the transverse variance."""

    kind: str = "CSS"
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    twist_mu: float | None = None
    target_xi2: float | None = None

    def __post_init__(self):
        if self.kind not in ("CSS", "SSS"):
            raise ValueError(f"probe kind must be CSS or SSS, got {self.kind!r}")


@dataclass(frozen=True)
class SqueezingMetrics:
    """xi2_s = 2 min(Var Jy)/J over the transverse plane, lam = |<Jx>|/J."""

    xi2_s: float
    lam: float
    var_x0: float
    var_y0: float
    min_angle: float
    valid: bool


def prepare_css(J: float, direction: np.ndarray = X_AXIS) -> np.ndarray:
    """Spin coherent state |J, J> rotated onto ``direction``."""
    n = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(n)
    if nrm < 1e-12:
        raise ValueError("direction must be a non-zero vector")
    n = n / nrm
    psi = np.zeros(spinalg.dim(J), dtype=complex)
    psi[0] = 1.0  # |J, m=J>, the +z coherent state
    polar = math.atan2(math.hypot(n[0], n[1]), n[2])
    azimuth = math.atan2(n[1], n[0])
    if polar != 0.0:
        psi = spinalg.rotate_y(psi, polar)
        psi = spinalg.rotate_z(psi, azimuth)
    return psi


def _transverse_variance(state: np.ndarray, theta: float) -> float:
    """Variance of cos(theta) Jy + sin(theta) Jz."""
    jpsi = math.cos(theta) * spinalg.apply_axis(state, "y") + math.sin(
        theta
    ) * spinalg.apply_axis(state, "z")
    mean = float(np.real(np.vdot(state, jpsi)))
    return max(float(np.real(np.vdot(jpsi, jpsi))) - mean * mean, 0.0)


def min_transverse_variance(state: np.ndarray) -> tuple[float, float]:
    """(min variance, angle) over the y-z plane; coarse grid then
    golden-section refinement to 1e-6 rad."""
    grid = np.linspace(-math.pi / 2, math.pi / 2, 65)
    vals = [_transverse_variance(state, th) for th in grid]
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    res = minimize_scalar(
        lambda th: _transverse_variance(state, th),
        bracket=None,
        bounds=(grid[k] - step, grid[k] + step),
        method="bounded",
        options={"xatol": 1e-6},
    )
    theta = float(res.x)
    return _transverse_variance(state, theta), theta


def squeezing_metrics(state: np.ndarray) -> SqueezingMetrics:
    """Metrics from the state itself; flagged invalid when the mean spin has
    no x-component (the normalizations below lose meaning)."""
    psi = spinalg.check_state(state)
    J = spinalg.spin_of_dim(psi.size)
    lam = abs(spinalg.expectation(psi, "x")) / J
    vmin, theta = min_transverse_variance(psi)
    return SqueezingMetrics(
        xi2_s=2.0 * vmin / J,
        lam=lam,
        var_x0=spinalg.variance(psi, "x"),
        var_y0=spinalg.variance(psi, "y"),
        min_angle=theta,
        valid=lam > 1e-6,
    )


@lru_cache(maxsize=None)
def _twist_eigensystem(two_j: int):
    """Eigensystem of (Jy Jz + Jz Jy)/2, gauged real-symmetric tridiagonal."""
    J = two_j / 2.0
    m = J - np.arange(two_j + 1, dtype=float)
    x = 0.5 * np.sqrt(J * (J + 1.0) - m[:-1] * m[1:])
    off = -x * 0.5 * (m[:-1] + m[1:])  # gauge D=diag(i^k) makes entries real
    w, v = eigh_tridiagonal(np.zeros(two_j + 1), off)
    gauge = np.power(1j, np.arange(two_j + 1) % 4)
    return w, v, gauge


def _twist(state: np.ndarray, mu: float) -> np.ndarray:
    w, v, gauge = _twist_eigensystem(state.size - 1)
    u = v.T @ (gauge * state)
    u *= np.exp(-1j * mu * w)
    return np.conj(gauge) * (v @ u)


def _squeeze_and_align(J: float, mu: float) -> np.ndarray:
    """Twist the +x CSS by mu, then rotate about x so the minimum-variance
    direction is y."""
    psi = _twist(prepare_css(J), mu)
    _, theta = min_transverse_variance(psi)
    if theta != 0.0:
        psi = spinalg.rotate_axis_angle(psi, X_AXIS, -theta)
    return psi


def _xi2_of_mu(J: float, mu: float) -> float:
    psi = _twist(prepare_css(J), mu)
    vmin, _ = min_transverse_variance(psi)
    return 2.0 * vmin / J


def prepare_sss(J: float, spec: ProbeSpec) -> tuple[np.ndarray, SqueezingMetrics]:
    """Squeezed probe along +x with squeezing along y, plus measured metrics.

    With no explicit twist or target, the twist is chosen to minimize the
    transverse variance.  A requested target_xi2 below the reachable optimum
    raises instead of silently returning a weaker state.
    """
    if spec.kind == "CSS" or spec.twist_mu == 0.0:
        psi = prepare_css(J)
        return psi, squeezing_metrics(psi)

    if spec.twist_mu is not None:
        mu = float(spec.twist_mu)
    else:
        mu_opt = optimal_twist(J)
        if spec.target_xi2 is not None:
            xi_opt = _xi2_of_mu(J, mu_opt)
            if spec.target_xi2 < xi_opt * (1.0 - 1e-9):
                raise ValueError(
                    f"target xi2_s={spec.target_xi2:.3e} unreachable at J={J}; "
                    f"optimum is {xi_opt:.3e}"
                )
            if spec.target_xi2 >= 1.0:
                mu = 0.0
            else:
                # xi2 decreases monotonically on [0, mu_opt]
                from scipy.optimize import brentq

                mu = brentq(
                    lambda m: _xi2_of_mu(J, m) - spec.target_xi2,
                    0.0,
                    mu_opt,
                    xtol=1e-12,
                )
        else:
            mu = mu_opt

    psi = _squeeze_and_align(J, mu)
    metrics = squeezing_metrics(psi)
    if abs(spinalg.expectation(psi, "y")) > 1e-6 * J or abs(
        spinalg.expectation(psi, "z")
    ) > 1e-6 * J:
        raise RuntimeError("squeezed state drifted off the x-axis")
    if abs(metrics.min_angle) > 1e-3:
        raise RuntimeError("minimum-variance direction misaligned with y")
    if spec.target_xi2 is not None and not math.isclose(
        metrics.xi2_s, spec.target_xi2, rel_tol=1e-3
    ):
        raise RuntimeError(
            f"achieved xi2_s={metrics.xi2_s:.6e} misses target {spec.target_xi2:.6e}"
        )
    return psi, metrics


@lru_cache(maxsize=None)
def optimal_twist(J: float) -> float:
    """Twist strength minimizing the transverse variance for this J."""
    # The optimum sits near ln(J)/J for the counter-twisting generator;
    # scan a generous window, then refine.
    hi = 6.0 * max(math.log(2.0 * J + 1.0), 1.0) / (2.0 * J)
    grid = np.linspace(0.0, hi, 80)
    vals = [_xi2_of_mu(J, mu) for mu in grid]
    k = int(np.argmin(vals))
    lo = grid[max(k - 1, 0)]
    up = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda mu: _xi2_of_mu(J, mu),
        bounds=(lo, up),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x)


def prepare_probe(J: float, spec: ProbeSpec) -> tuple[np.ndarray, SqueezingMetrics]:
    """Dispatch on probe kind; CSS metrics are (1, 1, J/2, J/2) by construction."""
    if spec.kind == "CSS":
        psi = prepare_css(J, np.asarray(spec.direction))
        return psi, squeezing_metrics(psi)
    return prepare_sss(J, spec)
