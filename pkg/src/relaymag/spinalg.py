"""Exact collective spin-J algebra: states, tridiagonal operators, pi pulses
and unitary propagation of constant-field segments.

Conventions
-----------
* States are complex vectors over the |J, m> basis ordered m = J, J-1, ..., -J
  (index k holds m = J - k).
* Jz is diagonal with entries m.  Jx, Jy are tridiagonal with the ladder
  coefficients c_k = sqrt(J(J+1) - m_k m_{k+1}) / 2 on the off-diagonals.
* A constant-field segment generates a rigid rotation of the spin:
  exp(-i dt gamma B.J) is the rotation about n = B/|B| by gamma*|B|*dt.
  It is applied exactly through the eigenbasis of the (phase-gauged,
  real-symmetric tridiagonal) Jy, cached per J, at O(d^2) per application.
  This replaces a Krylov expansion of the matrix exponential: at the magic
  condition segments rotate by full turns (angle 2*pi*m*J across the
  spectrum), where a polynomial approximation would need a degree growing
  with J while the rotation decomposition stays exact.
* The spin-exchange Casimir term -c2p*J^2 acts as a global phase on the
  maximal multiplet and is dropped; observables do not depend on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from relaymag.fields import GAMMA_RB

NORM_TOL = 1e-9
_AXES = ("x", "y", "z")


def dim(J: float) -> int:
    """Basis dimension d = 2J + 1."""
    return _two_j(J) + 1


def _two_j(J: float) -> int:
    two_j = 2.0 * J
    if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1:
        raise ValueError(f"J must be a positive half-integer, got {J}")
    return int(round(two_j))


def spin_of_dim(d: int) -> float:
    """Inverse of dim(): the J whose multiplet has d levels."""
    if d < 2:
        raise ValueError("state must have at least 2 components")
    return (d - 1) / 2.0


@lru_cache(maxsize=None)
def _basis(two_j: int):
    """(m values, ladder off-diagonal x_k) for 2J = two_j."""
    J = two_j / 2.0
    m = J - np.arange(two_j + 1, dtype=float)
    # x_k couples m_k and m_{k+1} = m_k - 1 in Jx.
    x = 0.5 * np.sqrt(J * (J + 1.0) - m[:-1] * m[1:])
    return m, x


@dataclass(frozen=True)
class SpinOperators:
    """Tridiagonal Jx, Jy, Jz in the Jz eigenbasis.

    ``mz`` is the Jz diagonal; ``ladder`` holds the Jx off-diagonal x_k, with
    (Jy)_{k,k+1} = -i * x_k.  Dense materializations are for small-J tests.
    """

    J: float
    mz: np.ndarray
    ladder: np.ndarray

    @property
    def dim(self) -> int:
        return self.mz.size

    def jx(self) -> np.ndarray:
        d = self.dim
        out = np.zeros((d, d), dtype=complex)
        idx = np.arange(d - 1)
        out[idx, idx + 1] = self.ladder
        out[idx + 1, idx] = self.ladder
        return out

    def jy(self) -> np.ndarray:
        d = self.dim
        out = np.zeros((d, d), dtype=complex)
        idx = np.arange(d - 1)
        out[idx, idx + 1] = -1j * self.ladder
        out[idx + 1, idx] = 1j * self.ladder
        return out

    def jz(self) -> np.ndarray:
        return np.diag(self.mz.astype(complex))


def make_operators(J: float) -> SpinOperators:
    """Spin operators for magnitude J (2J a positive integer)."""
    m, x = _basis(_two_j(J))
    return SpinOperators(J=J, mz=m, ladder=x)


def check_state(state: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    """Validate normalization and return the state as a complex array."""
    psi = np.asarray(state, dtype=complex)
    if psi.ndim != 1:
        raise ValueError("state must be a 1-D amplitude vector")
    spin_of_dim(psi.size)
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"state not normalized: |norm - 1| = {abs(nrm - 1.0):.3e}")
    return psi


def apply_axis(state: np.ndarray, which: str) -> np.ndarray:
    """Apply J_which to an amplitude vector, or column-wise to a (d, N)
    block of vectors (O(d) per vector, no dense matrices)."""
    psi = np.asarray(state, dtype=complex)
    m, x = _basis(psi.shape[0] - 1)
    if psi.ndim == 2:
        m = m[:, None]
        x = x[:, None]
    if which == "z":
        return m * psi
    out = np.zeros_like(psi)
    if which == "x":
        out[:-1] += x * psi[1:]
        out[1:] += x * psi[:-1]
    elif which == "y":
        out[:-1] += -1j * x * psi[1:]
        out[1:] += 1j * x * psi[:-1]
    else:
        raise ValueError(f"axis must be one of {_AXES}, got {which!r}")
    return out


def expectation(state: np.ndarray, which: str) -> float:
    """<J_which> for a normalized state."""
    psi = check_state(state)
    return float(np.real(np.vdot(psi, apply_axis(psi, which))))


def expectation_sq(state: np.ndarray, which: str) -> float:
    """<J_which^2> for a normalized state."""
    psi = check_state(state)
    jpsi = apply_axis(psi, which)
    return float(np.real(np.vdot(jpsi, jpsi)))


def variance(state: np.ndarray, which: str) -> float:
    """<J_which^2> - <J_which>^2, clipped at zero against roundoff."""
    psi = check_state(state)
    jpsi = apply_axis(psi, which)
    mean = float(np.real(np.vdot(psi, jpsi)))
    return max(float(np.real(np.vdot(jpsi, jpsi))) - mean * mean, 0.0)


def casimir(state: np.ndarray) -> float:
    """<Jx^2 + Jy^2 + Jz^2>; equals J(J+1) on the maximal multiplet."""
    psi = check_state(state)
    return sum(
        float(np.real(np.vdot(apply_axis(psi, a), apply_axis(psi, a))))
        for a in _AXES
    )


# ---------------------------------------------------------------------------
# Rotations.  Jy is gauged to a real symmetric tridiagonal matrix
# T = D Jy D^dag with D = diag(i^k), so exp(-i theta Jy) = D^dag V e^{-i theta w} V^T D
# with (w, V) the cached eigensystem of T.


@lru_cache(maxsize=None)
def _jy_eigensystem(two_j: int):
    _, x = _basis(two_j)
    w, v = eigh_tridiagonal(np.zeros(two_j + 1), -x)
    k = np.arange(two_j + 1)
    gauge = np.power(1j, k % 4)
    return w, v, gauge


def rotate_z(state: np.ndarray, angle: float) -> np.ndarray:
    """exp(-i angle Jz) |state> (diagonal, O(d))."""
    psi = np.asarray(state, dtype=complex)
    m, _ = _basis(psi.size - 1)
    return np.exp(-1j * angle * m) * psi


def rotate_y(state: np.ndarray, angle: float) -> np.ndarray:
    """exp(-i angle Jy) |state> via the cached Jy eigenbasis."""
    psi = np.asarray(state, dtype=complex)
    w, v, gauge = _jy_eigensystem(psi.size - 1)
    u = v.T @ (gauge * psi)
    u *= np.exp(-1j * angle * w)
    return np.conj(gauge) * (v @ u)


def rotate_axis_angle(state: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """exp(-i angle n.J) |state> for a unit axis n."""
    nx, ny, nz = axis
    r = math.hypot(nx, ny)
    if r < 1e-14:
        return rotate_z(state, angle if nz >= 0 else -angle)
    alpha = math.atan2(ny, nx)
    beta = math.atan2(r, nz)
    psi = rotate_z(state, -alpha)
    psi = rotate_y(psi, -beta)
    psi = rotate_z(psi, angle)
    psi = rotate_y(psi, beta)
    return rotate_z(psi, alpha)


def rotation_matrix(J: float, axis: np.ndarray, angle: float) -> np.ndarray:
    """Dense d x d rotation exp(-i angle n.J), for reuse across many states."""
    two_j = _two_j(J)
    d = two_j + 1
    nx, ny, nz = axis
    r = math.hypot(nx, ny)
    m, _ = _basis(two_j)
    if r < 1e-14:
        phase = np.exp(-1j * (angle if nz >= 0 else -angle) * m)
        return np.diag(phase)
    alpha = math.atan2(ny, nx)
    beta = math.atan2(r, nz)
    w, v, gauge = _jy_eigensystem(two_j)
    # Ry(beta) = D^dag V e^{-i beta w} V^T D
    ry = (np.conj(gauge)[:, None] * v) @ (np.exp(-1j * beta * w)[:, None] * v.T)
    ry *= gauge[None, :]
    core = (ry * np.exp(-1j * angle * m)[None, :]) @ ry.conj().T
    return np.exp(-1j * alpha * m)[:, None] * core * np.exp(1j * alpha * m)[None, :]


def apply_pi_pulse_x(state: np.ndarray) -> np.ndarray:
    """exp(-i pi Jx) |state>, closed form: |J,m> -> (-1)^(J-m) e^{-i pi m} |J,-m>.

    Negates <Jy> and <Jz> exactly, leaves <Jx> unchanged.
    """
    psi = check_state(state)
    m, _ = _basis(psi.size - 1)
    k = np.arange(psi.size)
    phase = np.where(k % 2 == 0, 1.0, -1.0) * np.exp(-1j * math.pi * m)
    return (phase * psi)[::-1].copy()


def evolve_segment(
    state: np.ndarray,
    field_gauss: np.ndarray,
    c2p: float,
    dt: float,
    gamma: float = GAMMA_RB,
) -> np.ndarray:
    """Propagate one constant-field segment: exp(-i dt gamma B.J) |state>.

    ``c2p`` is accepted for interface completeness; the Casimir term it
    multiplies only contributes a global phase on the maximal multiplet and
    is dropped.
    """
    del c2p
    if dt < 0:
        raise ValueError("segment duration dt must be >= 0")
    b = np.asarray(field_gauss, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError("field must be a finite 3-vector in Gauss")
    psi = check_state(state)
    if dt == 0.0:
        return psi.copy()
    bmag = float(np.linalg.norm(b))
    if bmag == 0.0:
        return psi.copy()
    angle = gamma * bmag * dt
    if abs(b[0]) == 0.0 and abs(b[1]) == 0.0:
        return rotate_z(psi, math.copysign(angle, b[2]))
    return rotate_axis_angle(psi, b / bmag, angle)


def segment_matrix(
    J: float,
    field_gauss: np.ndarray,
    dt: float,
    gamma: float = GAMMA_RB,
) -> np.ndarray:
    """Dense propagator of one segment, for schedules that reuse it many times."""
    if dt < 0:
        raise ValueError("segment duration dt must be >= 0")
    b = np.asarray(field_gauss, dtype=float)
    bmag = float(np.linalg.norm(b))
    if bmag == 0.0 or dt == 0.0:
        return np.eye(dim(J), dtype=complex)
    return rotation_matrix(J, b / bmag, gamma * bmag * dt)


def pi_pulse_matrix(J: float) -> np.ndarray:
    """Dense exp(-i pi Jx)."""
    two_j = _two_j(J)
    m, _ = _basis(two_j)
    k = np.arange(two_j + 1)
    phase = np.where(k % 2 == 0, 1.0, -1.0) * np.exp(-1j * math.pi * m)
    out = np.zeros((two_j + 1, two_j + 1), dtype=complex)
    out[two_j - k, k] = phase
    return out


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>| (insensitive to global phase)."""
    return float(abs(np.vdot(np.asarray(a), np.asarray(b))))
