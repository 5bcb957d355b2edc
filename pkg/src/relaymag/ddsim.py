"""Compile pulse sequences into timed schedules and run single noise
realizations, recording observables at the sample points.

Sequence kinds
--------------
FID      one free-evolution segment, no pulses.
UniDD    cycle U_tau, X, U_tau, X (period 2*tau, bias always positive).
BUniDD   cycle U_tau, X, U_tau, X, Ubar_tau, X, Ubar_tau, X (period 4*tau,
         bias reversed for the second half).

Operator products are written rightmost-first, so within a cycle time runs
left to right in the lists above; pi pulses fire at the end of each
tau segment.  Sample points sit on a tau/samples_per_quarter grid and are
labelled (cycle n >= 1, quarter q in 1..4, intra-quarter offset); quarters
count tau slots within 4*tau blocks for every kind so that runs of equal
duration share one time grid.  Samples on quarter boundaries are taken
before the pulse fires.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from relaymag import spinalg
from relaymag.fields import FieldConfig, StrayField, segment_field

SEQUENCE_KINDS = ("FID", "UniDD", "BUniDD")


@dataclass(frozen=True)
class Segment:
    duration: float
    bias_sign: int
    pulse_after: bool


@dataclass(frozen=True)
class SamplePoint:
    t: float
    cycle: int
    quarter: int
    offset: float
    flips: int  # pulses fired before this sample


@dataclass(frozen=True)
class Schedule:
    kind: str
    tau: float
    n_cycles: int
    samples_per_quarter: int
    segments: tuple[Segment, ...]
    samples: tuple[SamplePoint, ...]

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


def _quarter_label(slot: int) -> tuple[int, int]:
    """(cycle, quarter) of tau-slot index ``slot`` (0-based) on the 4*tau grid."""
    return slot // 4 + 1, slot % 4 + 1


def build_schedule(
    seq_kind: str,
    tau: float,
    n_cycles: int,
    samples_per_quarter: int = 1,
) -> Schedule:
    """Compile a sequence into segments plus labelled sample points.

    ``n_cycles`` counts the kind's own cycles (2*tau for UniDD, 4*tau for
    BUniDD); for FID it sets an equal total duration of 4*tau*n_cycles so
    free-evolution baselines share the DD time grid.
    """
    if seq_kind not in SEQUENCE_KINDS:
        raise ValueError(f"unknown sequence kind {seq_kind!r}")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    if samples_per_quarter < 1:
        raise ValueError("samples_per_quarter must be >= 1")

    if seq_kind == "FID":
        n_slots = 4 * n_cycles
        segments = (Segment(tau * n_slots, +1, False),)
    elif seq_kind == "UniDD":
        n_slots = 2 * n_cycles
        segments = tuple(Segment(tau, +1, True) for _ in range(n_slots))
    else:  # BUniDD
        n_slots = 4 * n_cycles
        signs = [+1, +1, -1, -1]
        segments = tuple(
            Segment(tau, signs[k % 4], True) for k in range(n_slots)
        )

    spq = samples_per_quarter
    samples = [SamplePoint(0.0, 1, 1, 0.0, 0)]
    for slot in range(n_slots):
        cycle, quarter = _quarter_label(slot)
        flips = slot if seq_kind != "FID" else 0
        t0 = slot * tau
        for k in range(1, spq + 1):
            off = tau if k == spq else k * tau / spq
            samples.append(SamplePoint(t0 + off, cycle, quarter, off, flips))
    return Schedule(seq_kind, tau, n_cycles, spq, segments, tuple(samples))


@dataclass(frozen=True)
class RealizationSeries:
    """Observables of one stray-field realization at the schedule's samples."""

    schedule: Schedule
    stray: StrayField
    t: np.ndarray
    jx: np.ndarray
    jy: np.ndarray
    jy2: np.ndarray

    @property
    def var_jy(self) -> np.ndarray:
        return np.maximum(self.jy2 - self.jy**2, 0.0)


def check_magic(config: FieldConfig, tau: float, tol: float = 1e-6) -> float:
    """Residual gamma*B0*tau mod 2*pi; warns when the magic condition is missed."""
    residual = math.remainder(config.gamma * config.B0 * tau, 2.0 * math.pi)
    if abs(residual) > tol:
        warnings.warn(
            f"pulse interval misses the magic condition by {residual:.3e} rad "
            "per segment; bias refocusing will be imperfect",
            stacklevel=2,
        )
    return residual


def _measure(states: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(<Jx>, <Jy>, <Jy^2>) column-wise for a (d, N) block of states."""
    jx_s = spinalg.apply_axis(states, "x")
    jy_s = spinalg.apply_axis(states, "y")
    jx = np.real(np.sum(np.conj(states) * jx_s, axis=0))
    jy = np.real(np.sum(np.conj(states) * jy_s, axis=0))
    jy2 = np.real(np.sum(np.conj(jy_s) * jy_s, axis=0))
    return jx, jy, jy2


def _sample_jy_shots(
    states: np.ndarray, shots: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Projective Jy measurement: per state, ``shots`` draws over the Jy
    eigenvalues; returns sample mean and sample second moment."""
    d = states.shape[0]
    w, v, gauge = spinalg._jy_eigensystem(d - 1)
    amps = v.T @ (gauge[:, None] * states)
    probs = np.abs(amps) ** 2
    probs /= probs.sum(axis=0)
    jy = np.empty(states.shape[1])
    jy2 = np.empty(states.shape[1])
    for i in range(states.shape[1]):
        counts = rng.multinomial(shots, probs[:, i])
        jy[i] = counts @ w / shots
        jy2[i] = counts @ (w**2) / shots
    return jy, jy2


def run_realization(
    state0: np.ndarray,
    schedule: Schedule,
    config: FieldConfig,
    stray: StrayField,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> RealizationSeries:
    """Evolve one realization through the schedule and record observables.

    Pure given (state0, schedule, config, stray); the optional finite-shot
    mode replaces the exact <Jy>, <Jy^2> with projective sampling using
    ``rng`` and is off by default.
    """
    psi = spinalg.check_state(state0)
    if schedule.kind != "FID":
        check_magic(config, schedule.tau)
    if shots > 0 and rng is None:
        raise ValueError("finite-shot sampling needs an rng")

    J = spinalg.spin_of_dim(psi.size)
    fields = {
        sign: segment_field(config, stray, sign)
        for sign in {seg.bias_sign for seg in schedule.segments}
    }
    diagonal = all(f[0] == 0.0 and f[1] == 0.0 for f in fields.values())
    # Offsets recur across cycles in DD schedules, so dense partial
    # propagators are built once per (bias sign, offset) and reused; the
    # single-segment FID case rotates states directly instead.
    reuse_dense = len(schedule.segments) > 1
    partials: dict[tuple[int, float], np.ndarray] = {}

    def _advance(psi_seg: np.ndarray, sign: int, off: float) -> np.ndarray:
        f = fields[sign]
        if off == 0.0:
            return psi_seg.copy()
        if diagonal:
            return spinalg.rotate_z(psi_seg, config.gamma * f[2] * off)
        if reuse_dense:
            key = (sign, off)
            if key not in partials:
                partials[key] = spinalg.segment_matrix(J, f, off, config.gamma)
            return partials[key] @ psi_seg
        bmag = float(np.linalg.norm(f))
        return spinalg.rotate_axis_angle(psi_seg, f / bmag, config.gamma * bmag * off)

    # Group samples by segment using exact slot indices (no float-boundary
    # comparisons): on the shared tau grid the slot of a sample is
    # (cycle-1)*4 + quarter-1, which is also its segment index for DD kinds.
    by_segment: dict[int, list[tuple[float, int]]] = {}
    for j, sp in enumerate(schedule.samples[1:], start=1):
        if schedule.kind == "FID":
            seg_idx, off = 0, sp.t
        else:
            seg_idx = (sp.cycle - 1) * 4 + (sp.quarter - 1)
            off = sp.offset
        by_segment.setdefault(seg_idx, []).append((off, j))

    states: list[np.ndarray] = [np.empty(0)] * len(schedule.samples)
    states[0] = psi.copy()  # t = 0 sample
    for seg_idx, seg in enumerate(schedule.segments):
        end_state = None
        for off, j in by_segment.get(seg_idx, ()):
            state_s = _advance(psi, seg.bias_sign, off)
            states[j] = state_s
            if off == seg.duration:
                end_state = state_s
        if end_state is None:
            end_state = _advance(psi, seg.bias_sign, seg.duration)
        psi = spinalg.apply_pi_pulse_x(end_state) if seg.pulse_after else end_state

    block = np.column_stack(states)
    nrm = np.linalg.norm(block, axis=0)
    if np.max(np.abs(nrm - 1.0)) > 1e-9:
        raise RuntimeError("propagation lost unitarity beyond tolerance")
    jx, jy, jy2 = _measure(block)
    if shots > 0:
        jy, jy2 = _sample_jy_shots(block, shots, rng)
    return RealizationSeries(
        schedule=schedule,
        stray=stray,
        t=schedule.times,
        jx=jx,
        jy=jy,
        jy2=jy2,
    )
