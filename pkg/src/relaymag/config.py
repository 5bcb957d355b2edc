"""Run configuration: a small key = value text format with unit suffixes.

Grammar (documented in README): one ``key = value`` pair per line, ``#``
starts a comment, blank lines ignored, keys are case-sensitive snake_case,
unknown keys are rejected.  Field values accept G/mG/uG/nG suffixes
(``μG`` works too), durations accept s/ms/us/ns, and gamma accepts either
rad/(s*G) as a bare number or ``MHz/G``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from relaymag.ddsim import SEQUENCE_KINDS, Schedule, build_schedule
from relaymag.fields import GAMMA_RB, NOISE_MODELS, FieldConfig, magic_tau
from relaymag.prm import EXTRACTION_MODES
from relaymag.probes import ProbeSpec


class ConfigError(ValueError):
    pass


_FIELD_UNITS = {"g": 1.0, "mg": 1e-3, "ug": 1e-6, "μg": 1e-6, "µg": 1e-6, "ng": 1e-9}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6, "µs": 1e-6, "ns": 1e-9}
_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


def _parse_with_units(text: str, units: dict[str, float], what: str) -> float:
    s = text.strip()
    m = _NUM_RE.match(s)
    if not m:
        raise ConfigError(f"cannot parse {what} value {text!r}")
    value = float(m.group(0))
    suffix = s[m.end():].strip().lower()
    if not suffix:
        return value
    if suffix not in units:
        raise ConfigError(f"unknown {what} unit {suffix!r} in {text!r}")
    return value * units[suffix]


def parse_field_gauss(text: str) -> float:
    """Magnetic field with optional G/mG/uG/nG suffix; bare numbers are Gauss."""
    return _parse_with_units(text, _FIELD_UNITS, "field")


def parse_time_seconds(text: str) -> float:
    """Duration with optional s/ms/us/ns suffix; bare numbers are seconds."""
    return _parse_with_units(text, _TIME_UNITS, "time")


def parse_gamma(text: str) -> float:
    """Gyromagnetic ratio: bare rad/(s*G), or ``<x> MHz/G``."""
    s = text.strip()
    if s.lower().endswith("mhz/g"):
        return 2.0 * math.pi * 1e6 * float(s[:-5].strip())
    return float(s)


@dataclass
class RunConfig:
    """Validated experiment configuration with defaults filled in."""

    J: float
    b0: float
    B0: float = 14.3e-3
    bc: float = 0.0
    gamma: float = GAMMA_RB
    noise_model: str = "full3d"
    probe: str = "CSS"
    sss_twist_mu: float | None = None
    sss_target_xi2: float | None = None
    sequence: str = "BUniDD"
    tau: float | None = None
    magic_m: int = 1
    n_cycles: int = 10
    samples_per_quarter: int = 2
    M: int = 1000
    master_seed: int = 0
    phase_extraction: str = "arcsin_jy"
    finite_shots: int = 0
    c2p: float = 0.0
    out: str = "out"
    threads: int = 1
    sweep_bc_min: float = 1e-9
    sweep_bc_max: float = 1e-3
    sweep_points: int = 13
    sweep_M: int = 64
    oracle_points: int = 50
    oracle_t_max: float | None = None

    def __post_init__(self):
        if 2 * self.J != int(2 * self.J) or self.J <= 0:
            raise ConfigError("J must be a positive half-integer")
        if self.sequence not in SEQUENCE_KINDS:
            raise ConfigError(f"sequence must be one of {SEQUENCE_KINDS}")
        if self.noise_model not in NOISE_MODELS:
            raise ConfigError(f"noise_model must be one of {NOISE_MODELS}")
        if self.probe not in ("CSS", "SSS"):
            raise ConfigError("probe must be CSS or SSS")
        if self.phase_extraction not in EXTRACTION_MODES:
            raise ConfigError(f"phase_extraction must be one of {EXTRACTION_MODES}")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        # B0 = 0 is allowed for bias-free free evolution but then tau must be
        # explicit (no magic condition to derive it from).
        if self.B0 < 0:
            raise ConfigError("B0 must be >= 0")
        if self.B0 == 0 and (self.sequence != "FID" or self.tau is None):
            raise ConfigError("B0 = 0 needs sequence = FID and an explicit tau")
        if self.bc < 0:
            raise ConfigError("bc must be >= 0")
        for name in ("n_cycles", "samples_per_quarter", "M", "magic_m", "sweep_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.finite_shots < 0:
            raise ConfigError("finite_shots must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def field_config(self, bc: float | None = None) -> FieldConfig:
        return FieldConfig(
            B0=self.B0,
            b0=self.b0,
            bc=self.bc if bc is None else bc,
            gamma=self.gamma,
            noise_model=self.noise_model,
            c2p=self.c2p,
        )

    def tau_seconds(self) -> float:
        if self.tau is not None:
            return self.tau
        return magic_tau(self.field_config(), self.magic_m)

    def schedule(self) -> Schedule:
        return build_schedule(
            self.sequence, self.tau_seconds(), self.n_cycles, self.samples_per_quarter
        )

    def probe_spec(self) -> ProbeSpec:
        return ProbeSpec(
            kind=self.probe,
            twist_mu=self.sss_twist_mu,
            target_xi2=self.sss_target_xi2,
        )


_PARSERS = {
    "J": float,
    "N": float,
    "B0": parse_field_gauss,
    "b0": parse_field_gauss,
    "bc": parse_field_gauss,
    "gamma": parse_gamma,
    "noise_model": str,
    "probe": str,
    "sss_twist_mu": float,
    "sss_target_xi2": float,
    "sequence": str,
    "tau": parse_time_seconds,
    "magic_m": int,
    "n_cycles": int,
    "samples_per_quarter": int,
    "M": int,
    "master_seed": int,
    "phase_extraction": str,
    "finite_shots": int,
    "c2p": float,
    "out": str,
    "threads": int,
    "sweep_bc_min": parse_field_gauss,
    "sweep_bc_max": parse_field_gauss,
    "sweep_points": int,
    "sweep_M": int,
    "oracle_points": int,
    "oracle_t_max": parse_time_seconds,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        raw[key] = value

    if "J" in raw and "N" in raw:
        raise ConfigError("give either J or N (J = N), not both")
    if "N" in raw:
        raw["J"] = raw.pop("N")
    if "J" not in raw:
        raise ConfigError("missing required key J (or N)")
    if "b0" not in raw:
        raise ConfigError("signal field required: set b0")
    if "tau" in raw and "magic_m" in raw:
        raise ConfigError("give either tau or magic_m, not both")

    kwargs = {}
    for key, value in raw.items():
        try:
            kwargs[key] = _PARSERS[key](value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
