"""CSV schemas emitted by the simulator CLI, validated verbatim.

Each reader checks the header line against the exact column list before
parsing; a mismatch reports the first offending column so schema drift on
either side is caught immediately.
"""

from __future__ import annotations

import numpy as np

TIMESERIES_COLUMNS = [
    "t_s",
    "mean_Jx",
    "mean_Jy",
    "std_Jy",
    "var_Q",
    "var_C",
    "phase_raw",
    "phase_relayed",
    "phase_std",
]
SENSITIVITY_COLUMNS = [
    "t_s",
    "eta_G_per_sqrtHz",
    "eta_T_per_sqrtHz",
    "sql",
    "hl",
    "sss_ref",
]
SWEEP_COLUMNS = ["bc_G", "eta_opt_T_per_sqrtHz", "threshold_flag"]


class SchemaError(ValueError):
    pass


def _check_header(path: str, header: str, expected: list[str]) -> None:
    got = [c.strip() for c in header.split(",")]
    if got == expected:
        return
    for i, want in enumerate(expected):
        have = got[i] if i < len(got) else "<missing>"
        if have != want:
            raise SchemaError(
                f"{path}: column {i + 1} is {have!r}, expected {want!r}"
            )
    raise SchemaError(f"{path}: {len(got)} columns, expected {len(expected)}")


def read_table(path: str, expected: list[str]) -> dict[str, np.ndarray]:
    """Read one CSV into named columns after exact header validation."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise SchemaError(f"{path}: empty file")
        _check_header(path, header, expected)
        body = fh.read()
    if not body.strip():
        raise SchemaError(f"{path}: no data rows")
    try:
        data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise SchemaError(f"{path}: unparsable data ({exc})") from exc
    if data.shape[1] != len(expected):
        raise SchemaError(
            f"{path}: {data.shape[1]} data columns, expected {len(expected)}"
        )
    return {name: data[:, i] for i, name in enumerate(expected)}


def read_timeseries(path: str) -> dict[str, np.ndarray]:
    return read_table(path, TIMESERIES_COLUMNS)


def read_sensitivity(path: str) -> dict[str, np.ndarray]:
    return read_table(path, SENSITIVITY_COLUMNS)


def read_sweep(path: str) -> dict[str, np.ndarray]:
    return read_table(path, SWEEP_COLUMNS)
