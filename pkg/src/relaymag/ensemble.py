"""Monte Carlo over stray-field realizations, reduced to ensemble statistics.

Realization i draws its stray field from an independent counter-based
sub-stream of the master seed, so results are bit-identical for any worker
count and any completion order: per-realization rows are written into
preallocated arrays by index and reduced along the realization axis in one
deterministic pass.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from relaymag.ddsim import Schedule, run_realization
from relaymag.fields import FieldConfig, realization_rng, sample_stray


@dataclass(frozen=True)
class EnsembleSeries:
    """Per-sample-time ensemble statistics over M realizations.

    The spread of Jy splits into a quantum part (mean over realizations of
    the per-realization variance) and a classical part (variance over
    realizations of the per-realization mean); ``std_jy`` is the square root
    of their sum.  Raw per-realization means are kept for phase extraction.
    """

    schedule: Schedule
    config: FieldConfig
    M: int
    master_seed: int
    t: np.ndarray
    mean_jx: np.ndarray
    mean_jy: np.ndarray
    var_q: np.ndarray
    var_c: np.ndarray
    raw_jx: np.ndarray  # (M, n_samples)
    raw_jy: np.ndarray
    raw_var_jy: np.ndarray

    @property
    def std_jy(self) -> np.ndarray:
        return np.sqrt(self.var_q + self.var_c)

    @property
    def sem_jy(self) -> np.ndarray:
        """Standard error of mean_jy (classical scatter only)."""
        return np.sqrt(self.var_c / self.M)


def run_ensemble(
    config: FieldConfig,
    schedule: Schedule,
    probe: np.ndarray,
    M: int,
    master_seed: int,
    threads: int = 1,
    shots: int = 0,
) -> EnsembleSeries:
    """Run M independent realizations and reduce deterministically."""
    if M < 1:
        raise ValueError("M must be >= 1")
    n = len(schedule.samples)
    raw_jx = np.empty((M, n))
    raw_jy = np.empty((M, n))
    raw_jy2 = np.empty((M, n))

    def _one(i: int) -> None:
        rng = realization_rng(master_seed, i)
        stray = sample_stray(config, rng)
        try:
            series = run_realization(
                probe, schedule, config, stray, shots=shots, rng=rng
            )
        except Exception as exc:  # surface the failing sub-stream
            raise RuntimeError(
                f"realization {i} (master_seed={master_seed}) failed: {exc}"
            ) from exc
        raw_jx[i] = series.jx
        raw_jy[i] = series.jy
        raw_jy2[i] = series.jy2

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(_one, range(M)))
    else:
        for i in range(M):
            _one(i)

    raw_var = np.maximum(raw_jy2 - raw_jy**2, 0.0)
    var_c = raw_jy.var(axis=0, ddof=1) if M > 1 else np.zeros(n)
    return EnsembleSeries(
        schedule=schedule,
        config=config,
        M=M,
        master_seed=master_seed,
        t=schedule.times,
        mean_jx=raw_jx.mean(axis=0),
        mean_jy=raw_jy.mean(axis=0),
        var_q=raw_var.mean(axis=0),
        var_c=var_c,
        raw_jx=raw_jx,
        raw_jy=raw_jy,
        raw_var_jy=raw_var,
    )
