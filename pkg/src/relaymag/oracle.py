"""Closed-form free-induction-decay results for the dephasing noise model
(stray field along z only, uniform in [-bc, bc]), used as analytic ground
truth for Monte Carlo validation.

For a coherent probe along +x precessing under the signal rate
omega_s = gamma*b0 with quasi-static detuning uniform in +-omega_c:

    <Jy>(t)        = J sin(omega_s t) sinc(omega_c t)
    (Delta Jy)^2_Q = J/4 [1 + cos(2 omega_s t) sinc(2 omega_c t)]
    (Delta Jy)^2_C = J^2/2 [1 - cos(2 omega_s t) sinc(2 omega_c t)
                             - 2 sin^2(omega_s t) sinc^2(omega_c t)]

with sinc(x) = sin(x)/x.  The quantum part is the detuning average of the
per-realization variance, the classical part the variance of the
per-realization mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relaymag.fields import FieldConfig


@dataclass(frozen=True)
class DephasingParams:
    omega_s: float  # rad/s, gamma*b0
    omega_c: float  # rad/s, gamma*bc
    J: float

    def __post_init__(self):
        if self.omega_c < 0:
            raise ValueError("omega_c must be >= 0")

    @classmethod
    def from_config(cls, config: FieldConfig, J: float) -> "DephasingParams":
        return cls(
            omega_s=config.gamma * config.b0,
            omega_c=config.gamma * config.bc,
            J=J,
        )


def sinc(x):
    """sin(x)/x with a series branch below 1e-6 to avoid 0/0 at x=0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)
    return out if out.ndim else float(out)


def fid_mean_jy(p: DephasingParams, t):
    """Ensemble-mean <Jy>(t) for free evolution."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = p.J * np.sin(p.omega_s * t) * sinc(p.omega_c * t)
    return out if out.ndim else float(out)


def fid_var_jy(p: DephasingParams, t):
    """(quantum, classical) parts of the <Jy> variance for free evolution."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    c2 = np.cos(2.0 * p.omega_s * t) * sinc(2.0 * p.omega_c * t)
    var_q = 0.25 * p.J * (1.0 + c2)
    var_c = 0.5 * p.J**2 * (
        1.0 - c2 - 2.0 * np.sin(p.omega_s * t) ** 2 * sinc(p.omega_c * t) ** 2
    )
    var_q = np.maximum(var_q, 0.0)
    var_c = np.maximum(var_c, 0.0)
    if var_q.ndim:
        return var_q, var_c
    return float(var_q), float(var_c)
