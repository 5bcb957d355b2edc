"""Experiment scenarios behind the CLI: time series, signal estimation,
sensitivity curves, noise sweeps, closed-form tables and the self-test
suite.  All outputs are deterministic for a fixed (config, seed): numbers
are serialized with 17 significant digits and realizations use per-index
sub-streams, so worker count never changes a byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from relaymag import metrics, oracle, prm, probes, spinalg
from relaymag.config import RunConfig
from relaymag.ddsim import build_schedule
from relaymag.ensemble import EnsembleSeries, run_ensemble
from relaymag.fields import FieldConfig

SCENARIOS = (
    "timeseries",
    "estimate",
    "sensitivity",
    "noise_sweep",
    "oracle_check",
    "validate",
)

TIMESERIES_HEADER = (
    "t_s, mean_Jx, mean_Jy, std_Jy, var_Q, var_C, "
    "phase_raw, phase_relayed, phase_std"
)
SENSITIVITY_HEADER = "t_s, eta_G_per_sqrtHz, eta_T_per_sqrtHz, sql, hl, sss_ref"
SWEEP_HEADER = "bc_G, eta_opt_T_per_sqrtHz, threshold_flag"
ORACLE_HEADER = "t_s, mean_Jy, var_Q, var_C"

DELTA_PHI = 1e-4  # injected phase offset for slope finite differences


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: str, header: str, columns: list[np.ndarray]) -> None:
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(rows):
            fh.write(", ".join(_fmt(float(c[i])) for c in columns) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


@dataclass
class ScenarioResult:
    files: list[str]
    summary: dict


def _prepare(cfg: RunConfig):
    psi, met = probes.prepare_probe(cfg.J, cfg.probe_spec())
    return psi, met


def _run(cfg: RunConfig, fc: FieldConfig, schedule, psi, M=None, seed=None) -> EnsembleSeries:
    return run_ensemble(
        fc,
        schedule,
        psi,
        M=cfg.M if M is None else M,
        master_seed=cfg.master_seed if seed is None else seed,
        threads=cfg.threads,
        shots=cfg.finite_shots,
    )


def _phase_columns(cfg: RunConfig, ens: EnsembleSeries):
    """(phase_raw, phase_relayed, phase_std, estimate-or-None)."""
    try:
        est, rel = prm.estimate_b0(ens, mode=cfg.phase_extraction)
    except ValueError:
        phases = prm.extract_phase(ens, mode=cfg.phase_extraction)
        m = phases.phi_signal.shape[0]
        std = phases.phi_signal.std(axis=0, ddof=1) if m > 1 else np.zeros(ens.t.size)
        return phases.mean_signal, phases.mean_signal, std, None
    return rel.mean_signal, rel.mean_relayed, rel.std_relayed(), est


def run_timeseries(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    psi, met = _prepare(cfg)
    ens = _run(cfg, cfg.field_config(), cfg.schedule(), psi)
    raw, relayed, phase_std, est = _phase_columns(cfg, ens)
    path = os.path.join(out_dir, "timeseries.csv")
    write_csv(
        path,
        TIMESERIES_HEADER,
        [ens.t, ens.mean_jx, ens.mean_jy, ens.std_jy, ens.var_q, ens.var_c,
         raw, relayed, phase_std],
    )
    summary = {
        "scenario": "timeseries",
        "J": cfg.J,
        "sequence": cfg.sequence,
        "M": cfg.M,
        "duration_s": float(ens.t[-1]),
        "xi2_s": met.xi2_s,
        "lambda": met.lam,
    }
    if est is not None:
        summary["b0_hat_G"] = est.b0_hat
        summary["b0_std_G"] = est.b0_std
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return ScenarioResult([path], summary)


def run_estimate(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    psi, met = _prepare(cfg)
    ens = _run(cfg, cfg.field_config(), cfg.schedule(), psi)
    est, rel = prm.estimate_b0(ens, mode=cfg.phase_extraction)
    ts_path = os.path.join(out_dir, "timeseries.csv")
    write_csv(
        ts_path,
        TIMESERIES_HEADER,
        [ens.t, ens.mean_jx, ens.mean_jy, ens.std_jy, ens.var_q, ens.var_c,
         rel.mean_signal, rel.mean_relayed, rel.std_relayed()],
    )
    summary = {
        "scenario": "estimate",
        "b0_true_G": cfg.b0,
        "b0_hat_G": est.b0_hat,
        "b0_std_G": est.b0_std,
        "theta0_crude_rad": est.theta0_crude,
        "theta0_refined_rad": est.theta0_refined,
        "fit_residual": est.residual,
        "r_squared": est.r_squared,
        "multimodal": est.multimodal,
        "phase_clipped_fraction": rel.clipped_fraction,
        "xi2_s": met.xi2_s,
        "lambda": met.lam,
    }
    est_path = os.path.join(out_dir, "estimate.json")
    _write_json(est_path, summary)
    return ScenarioResult([ts_path, est_path], summary)


def _sensitivity_series(
    cfg: RunConfig,
    fc: FieldConfig,
    psi: np.ndarray,
    met: probes.SqueezingMetrics,
    M: int | None = None,
):
    """eta(t) on the schedule grid via pilot runs with injected +-delta_phi.

    The spread is the total (quantum + classical) Jy deviation; the slope
    d<Jy>/dphi comes from central differences of the ensemble mean between
    two pilot simulations whose probes start rotated by +-delta_phi about z.
    """
    schedule = cfg.schedule()
    ens = _run(cfg, fc, schedule, psi, M=M)
    # exp(-i dphi Jz) advances the interrogated phase by +dphi
    plus = _run(cfg, fc, schedule, spinalg.rotate_z(psi, +DELTA_PHI), M=M)
    minus = _run(cfg, fc, schedule, spinalg.rotate_z(psi, -DELTA_PHI), M=M)
    slope = (plus.mean_jy - minus.mean_jy) / (2.0 * DELTA_PHI)
    t = ens.t[1:]
    delta = ens.std_jy[1:]
    eta_g = np.array(
        [
            metrics.sensitivity(delta[i], slope[1:][i], t[i], fc.gamma).eta_g
            for i in range(t.size)
        ]
    )
    return t, eta_g, ens


def run_sensitivity(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    psi, met = _prepare(cfg)
    fc = cfg.field_config()
    t, eta_g, _ = _sensitivity_series(cfg, fc, psi, met)
    sql = metrics.sql_reference(cfg.J, t, cfg.gamma) * metrics.GAUSS_TO_TESLA
    hl = metrics.hl_reference(cfg.J, t, cfg.gamma) * metrics.GAUSS_TO_TESLA
    if cfg.sequence == "FID":
        # free evolution: the squeezed ellipse precesses at gamma*b0 away
        # from the fixed y readout
        theta_t = metrics.theta_factor(
            t, cfg.gamma * cfg.b0, met.var_x0, met.var_y0
        )
    else:
        # decoupled runs refocus the excursion every cycle, pinning theta ~ 1
        theta_t = np.ones_like(t)
    sss = (
        metrics.sss_reference(cfg.J, t, cfg.gamma, met, theta_t)
        * metrics.GAUSS_TO_TESLA
        if met.valid
        else np.full_like(t, math.nan)
    )
    path = os.path.join(out_dir, "sensitivity.csv")
    write_csv(
        path,
        SENSITIVITY_HEADER,
        [t, eta_g, eta_g * metrics.GAUSS_TO_TESLA, sql, hl, sss],
    )
    eta_t_arr = eta_g * metrics.GAUSS_TO_TESLA
    summary = {
        "scenario": "sensitivity",
        "eta_final_T_per_sqrtHz": float(eta_t_arr[-1]),
        "eta_opt_T_per_sqrtHz": metrics.optimal_eta(t, eta_t_arr),
        "t_final_s": float(t[-1]),
        "xi2_s": met.xi2_s,
        "lambda": met.lam,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return ScenarioResult([path], summary)


def run_noise_sweep(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    """Optimal sensitivity within the run duration versus noise cutoff."""
    psi, met = _prepare(cfg)
    bcs = np.geomspace(cfg.sweep_bc_min, cfg.sweep_bc_max, cfg.sweep_points)
    eta_opt = np.empty_like(bcs)
    for i, bc in enumerate(bcs):
        fc = cfg.field_config(bc=float(bc))
        t, eta_g, _ = _sensitivity_series(cfg, fc, psi, met, M=cfg.sweep_M)
        eta_opt[i] = metrics.optimal_eta(t, eta_g) * metrics.GAUSS_TO_TESLA
    plateau = float(np.median(eta_opt[: max(3, cfg.sweep_points // 4)]))
    flags = (eta_opt > 1.2 * plateau).astype(float)
    threshold = float(bcs[flags.astype(bool)].min()) if flags.any() else math.inf
    path = os.path.join(out_dir, "sweep.csv")
    write_csv(path, SWEEP_HEADER, [bcs, eta_opt, flags])
    summary = {
        "scenario": "noise_sweep",
        "plateau_T_per_sqrtHz": plateau,
        "threshold_bc_G": threshold,
        "degradation_factor": float(eta_opt[-1] / plateau) if plateau > 0 else math.inf,
        "reference_threshold_withDD_G": metrics.threshold_reference(
            "withDD", cfg.J, cfg.schedule().duration, cfg.gamma, cfg.B0
        ),
        "reference_threshold_noDD_G": metrics.threshold_reference(
            "css_noDD" if cfg.probe == "CSS" else "sss_noDD",
            cfg.J,
            cfg.schedule().duration,
            cfg.gamma,
        ),
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return ScenarioResult([path], summary)


def run_oracle_check(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    p = oracle.DephasingParams.from_config(cfg.field_config(), cfg.J)
    if cfg.oracle_t_max is not None:
        t_max = cfg.oracle_t_max
    elif p.omega_c > 0:
        t_max = 5.0 / p.omega_c
    else:
        t_max = cfg.schedule().duration
    t = np.linspace(0.0, t_max, cfg.oracle_points)
    mean = oracle.fid_mean_jy(p, t)
    var_q, var_c = oracle.fid_var_jy(p, t)
    path = os.path.join(out_dir, "oracle.csv")
    write_csv(path, ORACLE_HEADER, [t, mean, var_q, var_c])
    summary = {
        "scenario": "oracle_check",
        "omega_s_rad_s": p.omega_s,
        "omega_c_rad_s": p.omega_c,
        "t_max_s": float(t_max),
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return ScenarioResult([path], summary)


class ValidationFailure(RuntimeError):
    pass


def run_validate(cfg: RunConfig, out_dir: str) -> ScenarioResult:
    """Fast self-test of the core invariants; raises ValidationFailure."""
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, bool(ok), detail))

    # operator algebra on small J
    for J in (0.5, 1.0, 2.5):
        ops = spinalg.make_operators(J)
        jx, jy, jz = ops.jx(), ops.jy(), ops.jz()
        comm = np.max(np.abs(jx @ jy - jy @ jx - 1j * jz))
        cas = np.max(
            np.abs(jx @ jx + jy @ jy + jz @ jz - J * (J + 1) * np.eye(ops.dim))
        )
        check(f"algebra J={J}", comm < 1e-10 and cas < 1e-10, f"comm={comm:.1e}")

    # unitarity and composition of segment evolution
    psi = probes.prepare_css(10.0)
    f = np.array([1e-4, -2e-4, 5e-3])
    a = spinalg.evolve_segment(psi, f, 0.0, 3e-4, cfg.gamma)
    b = spinalg.evolve_segment(
        spinalg.evolve_segment(psi, f, 0.0, 1e-4, cfg.gamma), f, 0.0, 2e-4, cfg.gamma
    )
    check(
        "segment composition",
        float(np.max(np.abs(a - b))) < 1e-10
        and abs(np.linalg.norm(a) - 1) < 1e-10,
    )

    # pi pulse moment flips
    psi_t = spinalg.evolve_segment(psi, np.array([0.0, 0.0, 1e-3]), 0.0, 1e-4, cfg.gamma)
    flipped = spinalg.apply_pi_pulse_x(psi_t)
    check(
        "pi pulse flips",
        abs(spinalg.expectation(flipped, "y") + spinalg.expectation(psi_t, "y")) < 1e-10
        and abs(spinalg.expectation(flipped, "x") - spinalg.expectation(psi_t, "x"))
        < 1e-10,
    )

    # refocusing at the magic condition, no signal, no noise
    from relaymag.ddsim import run_realization
    from relaymag.fields import ZERO_STRAY, magic_tau

    fc0 = FieldConfig(B0=cfg.B0, b0=0.0, bc=0.0, gamma=cfg.gamma)
    tau = magic_tau(fc0, 1)
    sched = build_schedule("BUniDD", tau, n_cycles=5, samples_per_quarter=1)
    series = run_realization(probes.prepare_css(10.0), sched, fc0, ZERO_STRAY)
    ends = series.jx[4::4]
    check("magic refocusing", bool(np.all(np.abs(ends - 10.0) < 1e-8)))

    # relay exactness, noiseless
    fc1 = FieldConfig(B0=cfg.B0, b0=1.6e-6, bc=0.0, gamma=cfg.gamma)
    s1 = build_schedule("BUniDD", magic_tau(fc1, 1), n_cycles=4, samples_per_quarter=2)
    ens1 = run_ensemble(fc1, s1, probes.prepare_css(10.0), M=1, master_seed=1)
    est1, _ = prm.estimate_b0(ens1, mode="atan2_xy")
    check(
        "relay exactness",
        abs(est1.b0_hat - fc1.b0) / fc1.b0 < 1e-6,
        f"rel_err={abs(est1.b0_hat - fc1.b0) / fc1.b0:.2e}",
    )

    # Monte Carlo versus closed form, dephasing (bias-free free evolution)
    fc2 = FieldConfig(
        B0=0.0, b0=1.6e-4, bc=1e-4, gamma=cfg.gamma, noise_model="dephasing"
    )
    p = oracle.DephasingParams.from_config(fc2, 10.0)
    s2 = build_schedule("FID", 2.0 / p.omega_c / 8.0, n_cycles=2, samples_per_quarter=1)
    ens2 = run_ensemble(fc2, s2, probes.prepare_css(10.0), M=2000, master_seed=2)
    mean_ref = oracle.fid_mean_jy(p, ens2.t)
    se = np.sqrt(ens2.var_c / ens2.M) + 1e-12
    worst = float(np.max(np.abs(ens2.mean_jy - mean_ref) / se))
    check("oracle agreement", worst < 5.0, f"worst_z={worst:.2f}")

    # determinism across worker counts
    ens_a = run_ensemble(fc2, s2, probes.prepare_css(5.0), M=8, master_seed=3, threads=1)
    ens_b = run_ensemble(fc2, s2, probes.prepare_css(5.0), M=8, master_seed=3, threads=4)
    check(
        "determinism",
        bool(
            np.array_equal(ens_a.mean_jy, ens_b.mean_jy)
            and np.array_equal(ens_a.var_c, ens_b.var_c)
        ),
    )

    lines = []
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        lines.append(f"{status}: {name}{suffix}")
    report_path = os.path.join(out_dir, "validate.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    summary = {
        "scenario": "validate",
        "passed": sum(1 for _, ok, _ in checks if ok),
        "failed": sum(1 for _, ok, _ in checks if not ok),
        "checks": [
            {"name": name, "ok": ok, "detail": detail} for name, ok, detail in checks
        ],
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    for line in lines:
        print(line)
    if summary["failed"]:
        raise ValidationFailure(f"{summary['failed']} validation checks failed")
    return ScenarioResult([report_path], summary)


def run_scenario(cfg: RunConfig, scenario: str, out_dir: str) -> ScenarioResult:
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    os.makedirs(out_dir, exist_ok=True)
    runner = {
        "timeseries": run_timeseries,
        "estimate": run_estimate,
        "sensitivity": run_sensitivity,
        "noise_sweep": run_noise_sweep,
        "oracle_check": run_oracle_check,
        "validate": run_validate,
    }[scenario]
    return runner(cfg, out_dir)
