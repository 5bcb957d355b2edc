"""Magnetic field configuration, stray-field sampling and the magic condition.

Units: fields in Gauss, times in seconds, gyromagnetic ratio in rad/(s*G).
The stray field is quasi-static: one random vector per Monte Carlo
realization, constant for the whole run, components uniform in [-bc, bc].
Sub-streams are derived per realization from a counter-based Philox
generator keyed on (master_seed, realization_index), so sampling is
deterministic and independent of evaluation order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

# 87Rb gyromagnetic ratio, 2*pi * 0.70 MHz/G.
GAMMA_RB = 2.0 * math.pi * 0.70e6

NOISE_MODELS = ("full3d", "dephasing")


@dataclass(frozen=True)
class FieldConfig:
    """Static field parameters: bias B0 and signal b0 along +z, noise cutoff bc."""

    B0: float
    b0: float
    bc: float
    gamma: float = GAMMA_RB
    noise_model: str = "full3d"
    c2p: float = 0.0

    def __post_init__(self):
        if self.noise_model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.noise_model!r}")
        if self.bc < 0:
            raise ValueError("noise cutoff bc must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        # The scheme needs a dominant bias; warn (not fail) when violated.
        if self.B0 > 0 and max(abs(self.b0), self.bc) > 0.1 * self.B0:
            warnings.warn(
                "bias field B0 should dominate signal b0 and noise cutoff bc",
                stacklevel=2,
            )


@dataclass(frozen=True)
class StrayField:
    """One quasi-static stray-field draw, components in Gauss."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz])


ZERO_STRAY = StrayField(0.0, 0.0, 0.0)


def magic_tau(config: FieldConfig, m: int = 1) -> float:
    """Pulse interval tau = 2*m*pi / (gamma * B0) making the bias precession
    an integer number of turns per segment."""
    if config.B0 <= 0:
        raise ValueError("magic condition requires B0 > 0")
    if m < 1 or int(m) != m:
        raise ValueError("magic index m must be a positive integer")
    return 2.0 * math.pi * m / (config.gamma * config.B0)


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for one realization.

    Philox keyed by SeedSequence(master_seed, spawn_key=(index,)): streams do
    not share state, so any subset can be drawn in any order with identical
    results. Uniform doubles use the generator's 53-bit conversion.
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


def sample_stray(config: FieldConfig, rng: np.random.Generator) -> StrayField:
    """Draw one stray-field vector.

    full3d: three independent components uniform in [-bc, bc].
    dephasing: z-component only, transverse components exactly zero.
    """
    bc = config.bc
    if config.noise_model == "dephasing":
        u = rng.random(3)  # keep stream layout identical across models
        return StrayField(0.0, 0.0, bc * (2.0 * u[2] - 1.0))
    u = rng.random(3)
    return StrayField(
        bc * (2.0 * u[0] - 1.0),
        bc * (2.0 * u[1] - 1.0),
        bc * (2.0 * u[2] - 1.0),
    )


def segment_field(config: FieldConfig, stray: StrayField, bias_sign: int) -> np.ndarray:
    """Total field vector for one free-evolution segment, in Gauss.

    The bias flips with ``bias_sign`` while the signal b0 and the stray field
    keep their sign; this is what lets the balanced sequence cancel
    bias-correlated terms while the signal survives the relay.
    """
    if bias_sign not in (-1, 1):
        raise ValueError("bias_sign must be +1 or -1")
    return np.array(
        [stray.bx, stray.by, bias_sign * config.B0 + config.b0 + stray.bz]
    )
