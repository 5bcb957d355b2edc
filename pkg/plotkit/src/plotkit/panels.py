"""Figure panels rendered from simulator CSVs.

Four panel kinds: observable time series with a shaded one-standard-deviation
band, raw versus relayed phase, sensitivity versus time with reference-limit
overlays, and optimal sensitivity versus noise cutoff.  Bands can be scaled
up for visibility; the scale factor is always annotated on the panel.
Rendering never mutates the inputs and is deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from plotkit import schema  # noqa: E402

PANEL_KINDS = ("timeseries", "phase-relay", "sensitivity", "noise-sweep")

matplotlib.rcParams["svg.hashsalt"] = "plotkit"


@dataclass(frozen=True)
class PanelSpec:
    kind: str
    inputs: tuple[str, ...]
    out: str
    band_scale: float = 1.0
    fmt: str = "png"
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in PANEL_KINDS:
            raise ValueError(f"unknown panel kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV required")
        if self.band_scale <= 0:
            raise ValueError("band_scale must be > 0")


def _band_note(ax, scale: float) -> None:
    ax.annotate(
        f"band = {scale:g} std",
        xy=(0.02, 0.97),
        xycoords="axes fraction",
        va="top",
        fontsize=8,
        color="0.35",
    )


def _timeseries_panel(ax, spec: PanelSpec) -> None:
    for path in spec.inputs:
        d = schema.read_timeseries(path)
        t = d["t_s"] * 1e3
        ax.plot(t, d["mean_Jy"], lw=1.2, label=path.rsplit("/", 1)[-1])
        band = spec.band_scale * d["std_Jy"]
        ax.fill_between(
            t, d["mean_Jy"] - band, d["mean_Jy"] + band, color="0.6", alpha=0.4, lw=0
        )
    ax.set_xlabel("t (ms)")
    ax.set_ylabel(r"$\langle J_y \rangle$")
    _band_note(ax, spec.band_scale)
    if len(spec.inputs) > 1:
        ax.legend(fontsize=7)


def _phase_relay_panel(ax, spec: PanelSpec) -> None:
    for path in spec.inputs:
        d = schema.read_timeseries(path)
        t = d["t_s"] * 1e3
        ax.plot(t, d["phase_raw"], ls="-.", lw=1.0, label="raw phase")
        ax.plot(t, d["phase_relayed"], lw=1.4, label="relayed phase")
        band = spec.band_scale * d["phase_std"]
        ax.fill_between(
            t,
            d["phase_relayed"] - band,
            d["phase_relayed"] + band,
            color="0.6",
            alpha=0.4,
            lw=0,
        )
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("phase (rad)")
    _band_note(ax, spec.band_scale)
    ax.legend(fontsize=7)


def _sensitivity_panel(ax, spec: PanelSpec) -> None:
    first = True
    for path in spec.inputs:
        d = schema.read_sensitivity(path)
        ax.loglog(d["t_s"], d["eta_T_per_sqrtHz"], lw=1.3, label="simulated")
        if first:
            ax.loglog(d["t_s"], d["sql"], "k-", lw=0.9, label="SQL")
            ax.loglog(d["t_s"], d["hl"], "r-", lw=0.9, label="HL")
            import numpy as np

            if np.any(np.isfinite(d["sss_ref"])):
                ax.loglog(d["t_s"], d["sss_ref"], "g--", lw=0.9, label="squeezed ref")
            first = False
    ax.set_xlabel("t (s)")
    ax.set_ylabel(r"$\eta$ (T/$\sqrt{\mathrm{Hz}}$)")
    ax.legend(fontsize=7)


def _noise_sweep_panel(ax, spec: PanelSpec) -> None:
    for path in spec.inputs:
        d = schema.read_sweep(path)
        ax.loglog(d["bc_G"], d["eta_opt_T_per_sqrtHz"], "o-", ms=3.5, lw=1.1)
        above = d["threshold_flag"] > 0.5
        if above.any():
            ax.loglog(
                d["bc_G"][above],
                d["eta_opt_T_per_sqrtHz"][above],
                "rx",
                ms=6,
                label="above threshold",
            )
    ax.set_xlabel(r"$b_c$ (G)")
    ax.set_ylabel(r"optimal $\eta$ (T/$\sqrt{\mathrm{Hz}}$)")
    handles, _ = ax.get_legend_handles_labels()
    if handles:
        ax.legend(fontsize=7)


_RENDERERS = {
    "timeseries": _timeseries_panel,
    "phase-relay": _phase_relay_panel,
    "sensitivity": _sensitivity_panel,
    "noise-sweep": _noise_sweep_panel,
}


def render(spec: PanelSpec) -> str:
    """Render one panel to ``spec.out``; returns the written path."""
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    try:
        _RENDERERS[spec.kind](ax, spec)
        fig.tight_layout()
        fig.savefig(spec.out, format=spec.fmt, dpi=spec.dpi)
    finally:
        plt.close(fig)
    return spec.out
