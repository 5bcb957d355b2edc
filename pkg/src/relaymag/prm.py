"""Phase-relay estimation: extract phases from observable series, shift them
quarter by quarter so the decoupling sequence's sawtooth becomes a single
accumulating line, refine the per-quarter phase step by least squares and
convert it to the signal field.

Relay geometry
--------------
With the bias refocused, the signal phase grows at gamma*b0 inside every
quarter, but each pi pulse negates the accumulated phase.  Pulses at odd
quarter boundaries fire when the phase is at its peak theta0 = gamma*b0*tau
and therefore discard 2*theta0 each; pulses at even boundaries fire at zero
phase and discard nothing.  Restoring the discarded phase means shifting
quarter (n, q) by the cumulative loss
    2*theta0 * (2n-2, 2n-1, 2n-1, 2n)  for q = 1..4,
after which every sample of a noiseless run lies exactly on the line
gamma*b0*t.  Phases are extracted in the lab frame (arcsin/atan2 of the
measured moments), so no parity negation is applied; the flip history enters
only through the shift multipliers above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from relaymag.ddsim import Schedule
from relaymag.ensemble import EnsembleSeries
from relaymag.fields import FieldConfig

EXTRACTION_MODES = ("arcsin_jy", "atan2_xy", "sinusoid_fit")
CLIP_TOL = 1e-6


def wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap to the principal branch (-pi, pi]."""
    return -((-np.asarray(x) + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass(frozen=True)
class PhaseSeries:
    """Per-realization phases at the schedule's sample times.

    ``phi_total`` is the wrapped phase as extracted; ``phi_signal`` has the
    known bias reference removed and is unwrapped along time;
    ``phi_relayed`` is filled by :func:`relay`.
    """

    schedule: Schedule
    t: np.ndarray
    cycle: np.ndarray
    quarter: np.ndarray
    flips: np.ndarray
    phi_total: np.ndarray  # (M, n_samples)
    phi_signal: np.ndarray
    phi_relayed: np.ndarray | None = None
    clipped_fraction: float = 0.0

    @property
    def mean_signal(self) -> np.ndarray:
        return self.phi_signal.mean(axis=0)

    @property
    def mean_relayed(self) -> np.ndarray:
        if self.phi_relayed is None:
            raise ValueError("relay has not been applied")
        return self.phi_relayed.mean(axis=0)

    def std_relayed(self) -> np.ndarray:
        if self.phi_relayed is None:
            raise ValueError("relay has not been applied")
        m = self.phi_relayed.shape[0]
        if m < 2:
            return np.zeros(self.t.size)
        return self.phi_relayed.std(axis=0, ddof=1)


@dataclass(frozen=True)
class PrmEstimate:
    """Relay estimate: crude and refined phase step, and the derived field."""

    theta0_crude: float
    theta0_refined: float
    b0_hat: float
    b0_std: float
    residual: float
    r_squared: float
    multimodal: bool = False


def bias_reference(schedule: Schedule, config: FieldConfig) -> np.ndarray:
    """Known bias phase at each sample time.

    Tracks gamma*B0 precession through segments and the sign flip of the
    accumulated phase at each pi pulse, so it stays exact also away from the
    magic condition.
    """
    rate = config.gamma * config.B0
    beta = np.empty(len(schedule.samples))
    beta[0] = 0.0
    by_segment: dict[int, list[tuple[float, int]]] = {}
    for j, sp in enumerate(schedule.samples[1:], start=1):
        if schedule.kind == "FID":
            seg_idx, off = 0, sp.t
        else:
            seg_idx = (sp.cycle - 1) * 4 + (sp.quarter - 1)
            off = sp.offset
        by_segment.setdefault(seg_idx, []).append((off, j))
    acc = 0.0
    for seg_idx, seg in enumerate(schedule.segments):
        for off, j in by_segment.get(seg_idx, ()):
            beta[j] = acc + seg.bias_sign * rate * off
        acc += seg.bias_sign * rate * seg.duration
        if seg.pulse_after:
            acc = -acc
    return beta


def _labels(schedule: Schedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cycle = np.array([sp.cycle for sp in schedule.samples])
    quarter = np.array([sp.quarter for sp in schedule.samples])
    flips = np.array([sp.flips for sp in schedule.samples])
    return cycle, quarter, flips


def _sinusoid_fit_phase(
    jy: np.ndarray,
    amp: np.ndarray,
    beta: np.ndarray,
    t: np.ndarray,
    quarter_key: np.ndarray,
) -> np.ndarray:
    """Per-sample phase from short-window least-squares fits of
    amp*sin(beta + phi), windows confined to one quarter.

    Stage one fits a constant phase c0 per window through the quadratures
    (cos c0, sin c0); stage two recovers the linear drift of the phase
    within the window from the residual, so samples sharing a window still
    resolve a slope.
    """
    n = jy.shape[-1]
    out = np.empty(np.shape(jy), dtype=float)
    jy = np.atleast_2d(jy)
    sb = amp * np.sin(beta)
    cb = amp * np.cos(beta)
    for i in range(n):
        lo = i
        while lo > 0 and i - lo < 2 and quarter_key[lo - 1] == quarter_key[i]:
            lo -= 1
        hi = i
        while hi < n - 1 and hi - i < 2 and quarter_key[hi + 1] == quarter_key[i]:
            hi += 1
        s, c = sb[lo : hi + 1], cb[lo : hi + 1]
        y = jy[:, lo : hi + 1]
        ss, cc, sc = s @ s, c @ c, s @ c
        ys, yc = y @ s, y @ c
        det = ss * cc - sc * sc
        if det > 1e-12 * max(ss, cc, 1e-300) ** 2:
            u = (cc * ys - sc * yc) / det
            v = (ss * yc - sc * ys) / det
        elif cc > ss:
            v = np.clip(yc / cc, -1.0, 1.0)
            u = np.sqrt(np.maximum(0.0, 1.0 - v * v))
        else:
            u = np.clip(ys / ss, -1.0, 1.0)
            v = np.sqrt(np.maximum(0.0, 1.0 - u * u))
        c0 = np.arctan2(v, u)  # (M,)
        tw = t[lo : hi + 1]
        dt = tw - tw.mean()
        if np.any(dt != 0.0):
            # residual against the constant-phase fit reveals the drift
            amp_w = amp[lo : hi + 1]
            model = amp_w * np.sin(beta[lo : hi + 1] + c0[:, None])
            grad = amp_w * np.cos(beta[lo : hi + 1] + c0[:, None]) * dt
            denom = np.sum(grad * grad, axis=1)
            c1 = np.where(
                denom > 1e-300,
                np.sum((y - model) * grad, axis=1) / np.maximum(denom, 1e-300),
                0.0,
            )
        else:
            c1 = np.zeros_like(c0)
        out[..., i] = c0 + c1 * (t[i] - tw.mean())
    return out


def extract_phase(
    ens: EnsembleSeries,
    mode: str = "arcsin_jy",
    lam_j: float | None = None,
    envelope: str = "ensemble",
) -> PhaseSeries:
    """Per-realization phases from the ensemble's raw observables.

    arcsin_jy
        phi from arcsin(<Jy>/A) with the branch resolved against the known
        bias reference.  A is the instantaneous ensemble-mean in-plane
        amplitude (``envelope="ensemble"``, default, compensates amplitude
        shrinkage under noise) or the fixed initial polarization ``lam_j``
        = lambda*J (``envelope="initial"``).
    atan2_xy
        phi = atan2(<Jy>, <Jx>); uses both quadratures, simulation only.
    sinusoid_fit
        least-squares fit of A sin(beta + phi) over a short window around
        each sample.
    """
    if mode not in EXTRACTION_MODES:
        raise ValueError(f"unknown extraction mode {mode!r}")
    schedule = ens.schedule
    cycle, quarter, flips = _labels(schedule)
    beta = bias_reference(schedule, ens.config)
    jx, jy = ens.raw_jx, ens.raw_jy
    clipped = 0.0

    if mode == "atan2_xy":
        phi_total = np.arctan2(jy, jx)
        phi_signal = wrap_angle(phi_total - beta)
    else:
        if envelope == "ensemble":
            amp = np.hypot(jx, jy).mean(axis=0)
        else:
            if lam_j is None:
                raise ValueError("envelope='initial' needs lam_j")
            amp = np.full(jx.shape[1], float(lam_j))
        amp = np.maximum(amp, 1e-300)
        ratio = jy / amp
        over = np.abs(ratio) > 1.0 + CLIP_TOL
        clipped = float(np.mean(over))
        ratio = np.clip(ratio, -1.0, 1.0)
        if mode == "arcsin_jy":
            c1 = np.arcsin(ratio)
            c2 = math.pi - c1
            d1 = np.abs(wrap_angle(c1 - beta))
            d2 = np.abs(wrap_angle(c2 - beta))
            phi_total = np.where(d1 <= d2, c1, c2)
            phi_signal = wrap_angle(phi_total - beta)
        else:  # sinusoid_fit
            quarter_key = (cycle.astype(np.int64) << 3) | quarter.astype(np.int64)
            phi_signal = _sinusoid_fit_phase(jy, amp, beta, ens.t, quarter_key)
            phi_signal = wrap_angle(phi_signal)
            phi_total = wrap_angle(phi_signal + beta)

    phi_signal = np.unwrap(np.atleast_2d(phi_signal), axis=1)
    phi_total = np.atleast_2d(phi_total)
    return PhaseSeries(
        schedule=schedule,
        t=ens.t,
        cycle=cycle,
        quarter=quarter,
        flips=flips,
        phi_total=phi_total,
        phi_signal=phi_signal,
        clipped_fraction=clipped,
    )


def relay_multipliers(cycle: np.ndarray, quarter: np.ndarray) -> np.ndarray:
    """Quarter-indexed relay multipliers (2n-2, 2n-1, 2n-1, 2n)."""
    n = np.asarray(cycle)
    q = np.asarray(quarter)
    out = np.where(q == 1, 2 * n - 2, np.where(q == 4, 2 * n, 2 * n - 1))
    return out.astype(float)


def relay(phases: PhaseSeries, theta0: float) -> PhaseSeries:
    """Shift each sample by its quarter's multiplier times 2*theta0.

    theta0 = gamma*b0*tau is the phase step per quarter; 2*theta0 is the
    phase discarded by each odd-boundary pulse (see module docstring).  With
    the exact theta0 the relayed noiseless phases lie on gamma*b0*t.
    """
    if phases.cycle.size == 0 or np.any(phases.quarter < 1):
        raise ValueError("relay needs cycle/quarter labels on every sample")
    shift = relay_multipliers(phases.cycle, phases.quarter) * (2.0 * theta0)
    return replace(phases, phi_relayed=phases.phi_signal + shift)


def crude_theta0(phases: PhaseSeries, with_std: bool = False):
    """First-quarter estimate: least-squares slope of the pre-first-pulse
    signal phase times tau.

    The bias contribution is already removed by the extraction reference, so
    the fitted slope is gamma*b0 directly (equivalently: total slope minus
    gamma*B0).  With ``with_std`` also returns the estimate's standard
    error, propagated from the ensemble scatter of the phase points.
    """
    sel = (phases.cycle == 1) & (phases.quarter == 1)
    t = phases.t[sel]
    if t.size < 2:
        raise ValueError("need at least 2 first-quarter samples")
    y = phases.phi_signal[:, sel]
    tau = phases.schedule.tau
    # ordinary LS slope is linear in the data, so the ensemble mean of
    # per-realization slopes equals the slope of the mean; the scatter of the
    # per-realization slopes gives the honest uncertainty (the quasi-static
    # stray field shifts all samples of one realization together, which a
    # per-point error budget would miss)
    tbar = t.mean()
    denom = ((t - tbar) ** 2).sum()
    slopes = (y - y.mean(axis=1, keepdims=True)) @ (t - tbar) / denom
    slope = float(slopes.mean())
    m = slopes.size
    slope_std = float(slopes.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    if with_std:
        return slope * tau, slope_std * tau
    return slope * tau


def _weighted_line_fit(
    t: np.ndarray, y: np.ndarray, sigma: np.ndarray | None
) -> tuple[float, float, float, float]:
    """Weighted LS line fit.  Returns (slope, intercept, slope_std, ssr)."""
    if sigma is not None and np.all(sigma > 0):
        w = 1.0 / sigma**2
        scaled = False
    else:
        w = np.ones_like(t)
        scaled = True  # estimate noise from residuals instead
    sw = w.sum()
    tbar = (w * t).sum() / sw
    ybar = (w * y).sum() / sw
    stt = (w * (t - tbar) ** 2).sum()
    slope = (w * (t - tbar) * (y - ybar)).sum() / stt
    intercept = ybar - slope * tbar
    resid = y - (slope * t + intercept)
    ssr = float((w * resid**2).sum())
    if scaled:
        dof = max(t.size - 2, 1)
        slope_var = (resid**2).sum() / dof / ((t - tbar) ** 2).sum()
    else:
        slope_var = 1.0 / stt
    return float(slope), float(intercept), math.sqrt(max(slope_var, 0.0)), ssr


def _point_sigma(phases: PhaseSeries) -> np.ndarray | None:
    """Standard error of the mean signal phase per sample, or None when the
    ensemble carries no scatter (single realization / noiseless)."""
    m = phases.phi_signal.shape[0]
    if m < 2:
        return None
    sigma = phases.phi_signal.std(axis=0, ddof=1) / math.sqrt(m)
    return sigma if np.all(sigma > 0) else None


def relay_fit_residual(
    phases: PhaseSeries, theta0: float, sigma: np.ndarray | None = None
) -> float:
    """(Weighted) sum of squared residuals of a line fit to the mean relayed
    phase; the profile objective minimized by the theta0 refinement."""
    rel = relay(phases, theta0)
    _, _, _, ssr = _weighted_line_fit(rel.t, rel.mean_relayed, sigma)
    return ssr


def refine_theta0(
    phases: PhaseSeries,
    theta0_crude_value: float,
    gamma: float,
    crude_std: float = 0.0,
    bracket: tuple[float, float] = (0.5, 1.5),
    xatol: float = 1e-12,
) -> PrmEstimate:
    """Pick theta0 minimizing the linear-fit residual of the relayed phase,
    then convert the fitted slope to the signal field.

    The search runs over theta0_crude scaled by ``bracket`` but widened to
    at least +-4 crude standard errors: when the signal is weak the crude
    first-quarter estimate is noise dominated and a purely multiplicative
    bracket can exclude the least-squares optimum.  The profile objective is
    quadratic in theta0, so a coarse scan plus golden-section refinement
    finds the optimum; multiple interior minima (possible only through
    numerical degeneracy) are flagged, keeping the global one.

    The reported theta0 is the fitted slope times tau, so
    b0_hat = theta0_refined / (gamma * tau) holds by construction; b0_std
    comes from the profiled least-squares covariance of theta0 (the slope's
    conditional covariance would ignore the search direction and grossly
    understate the uncertainty).
    """
    if phases.cycle.max() < 2:
        raise ValueError("relay refinement needs data spanning >= 2 cycles")
    sigma = _point_sigma(phases)
    half = (bracket[1] - bracket[0]) / 2.0 * abs(theta0_crude_value)
    width = max(half, 4.0 * crude_std, 1e-15)
    center = (bracket[0] + bracket[1]) / 2.0 * theta0_crude_value
    lo, hi = center - width, center + width
    grid = np.linspace(lo, hi, 33)
    vals = np.array([relay_fit_residual(phases, th, sigma) for th in grid])
    interior = (vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:])
    multimodal = int(np.count_nonzero(interior)) > 1
    k = int(np.argmin(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    theta_star = _golden_section(
        lambda th: relay_fit_residual(phases, th, sigma), a, b, xatol
    )

    rel = relay(phases, theta_star)
    slope, intercept, _, ssr = _weighted_line_fit(rel.t, rel.mean_relayed, sigma)
    y = rel.mean_relayed
    tss = float(((y - y.mean()) ** 2).sum())
    ssr_plain = float(((y - (slope * rel.t + intercept)) ** 2).sum())
    r2 = 1.0 - ssr_plain / tss if tss > 0 else 1.0
    tau = phases.schedule.tau
    theta0_std = _theta0_ensemble_std(phases, sigma)
    return PrmEstimate(
        theta0_crude=theta0_crude_value,
        theta0_refined=slope * tau,
        b0_hat=slope / gamma,
        b0_std=theta0_std / (gamma * tau),
        residual=ssr,
        r_squared=r2,
        multimodal=multimodal,
    )


def _theta0_ensemble_std(phases: PhaseSeries, sigma: np.ndarray | None) -> float:
    """Standard error of the refined theta0 from the realization scatter.

    Relaying shifts the data by 2*theta0*mult; profiling out the line
    (slope, intercept) leaves a one-parameter least-squares problem in
    theta0 on the residualized shift column.  That estimator is linear in
    the phases, so applying it per realization and taking the scatter of
    the mean gives an honest uncertainty even though the quasi-static
    stray field correlates all samples of one realization (a per-point
    covariance would miss exactly that common mode, which dominates when
    the stray z component is confounded with the signal).  With a single
    realization the scale falls back to the fit residuals.
    """
    t = phases.t
    mult = relay_multipliers(phases.cycle, phases.quarter)
    w = 1.0 / sigma**2 if sigma is not None else np.ones_like(t)
    X = np.column_stack([t, np.ones_like(t)])
    WX = w[:, None] * X
    xtwx = X.T @ WX
    beta_m = np.linalg.solve(xtwx, WX.T @ mult)
    r_mult = mult - X @ beta_m
    denom = 2.0 * float((w * r_mult**2).sum())
    if denom <= 0:
        return 0.0
    proj = w * r_mult / denom  # theta0_hat_i = -proj . r_y_i

    def _theta_row(y: np.ndarray) -> float:
        beta_y = np.linalg.solve(xtwx, WX.T @ y)
        return -float(proj @ (y - X @ beta_y))

    m = phases.phi_signal.shape[0]
    if m > 1:
        per_real = np.array([_theta_row(phases.phi_signal[i]) for i in range(m)])
        return float(per_real.std(ddof=1) / math.sqrt(m))
    # single realization: scale from the joint-fit residuals
    r_y = phases.mean_signal - X @ np.linalg.solve(xtwx, WX.T @ phases.mean_signal)
    theta_hat = -float(proj @ r_y)
    resid = r_y + 2.0 * theta_hat * r_mult
    dof = max(t.size - 3, 1)
    s2 = float((w * resid**2).sum()) / dof
    return math.sqrt(s2 / (2.0 * denom))


def _golden_section(f, a: float, b: float, xatol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > xatol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def estimate_b0(
    ens: EnsembleSeries,
    mode: str = "arcsin_jy",
    lam_j: float | None = None,
) -> tuple[PrmEstimate, PhaseSeries]:
    """Full pipeline: extract, crude first-quarter estimate, relay, refine.

    FID series skip the relay (nothing was refocused) and fit the unwrapped
    signal phase directly.
    """
    phases = extract_phase(ens, mode=mode, lam_j=lam_j)
    gamma = ens.config.gamma
    tau = ens.schedule.tau
    if ens.schedule.kind == "FID":
        sigma = _point_sigma(phases)
        slope, intercept, slope_std, ssr = _weighted_line_fit(
            phases.t, phases.mean_signal, sigma
        )
        y = phases.mean_signal
        tss = float(((y - y.mean()) ** 2).sum())
        ssr_plain = float(((y - (slope * phases.t + intercept)) ** 2).sum())
        est = PrmEstimate(
            theta0_crude=slope * tau,
            theta0_refined=slope * tau,
            b0_hat=slope / gamma,
            b0_std=slope_std / gamma,
            residual=ssr,
            r_squared=1.0 - ssr_plain / tss if tss > 0 else 1.0,
        )
        return est, replace(phases, phi_relayed=phases.phi_signal)
    crude, crude_std = crude_theta0(phases, with_std=True)
    est = refine_theta0(phases, crude, gamma, crude_std=crude_std)
    rel = relay(phases, est.theta0_refined)
    return est, rel
