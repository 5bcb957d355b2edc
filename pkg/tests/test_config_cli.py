import json
from pathlib import Path

import numpy as np
import pytest

from relaymag.cli import main
from relaymag.config import ConfigError, parse_config

HEADLINE_DOC = """
# headline operating point
J = 100
gamma = 0.70 MHz/G
B0 = 14.3 mG
b0 = 1.6 uG
bc = 0.1 mG
tau = 0.1 ms
sequence = BUniDD
n_cycles = 4
M = 8
"""


class TestParseConfig:
    def test_headline_defaults(self):
        cfg = parse_config(HEADLINE_DOC)
        assert cfg.B0 == pytest.approx(14.3e-3)
        assert cfg.b0 == pytest.approx(1.6e-6)
        assert cfg.bc == pytest.approx(1e-4)
        assert cfg.tau == pytest.approx(1e-4)
        assert cfg.gamma == pytest.approx(2 * np.pi * 0.70e6)
        assert cfg.J == 100.0

    def test_missing_signal_field(self):
        with pytest.raises(ConfigError, match="signal field required"):
            parse_config("J = 10\n")

    def test_unit_suffix_without_space(self):
        cfg = parse_config("J = 10\nb0 = 1.6uG\n")
        assert cfg.b0 == pytest.approx(1.6e-6)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("J = 10\nb0 = 1 uG\nfoo = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("J = 10\nJ = 11\nb0 = 1 uG\n")

    def test_tau_conflicts_with_magic_m(self):
        with pytest.raises(ConfigError, match="either tau or magic_m"):
            parse_config("J = 10\nb0 = 1uG\ntau = 0.1ms\nmagic_m = 1\n")

    def test_atom_number_alias(self):
        cfg = parse_config("N = 64\nb0 = 1 uG\n")
        assert cfg.J == 64.0
        with pytest.raises(ConfigError, match="not both"):
            parse_config("N = 64\nJ = 64\nb0 = 1uG\n")

    def test_bad_unit(self):
        with pytest.raises(ConfigError, match="unit"):
            parse_config("J = 10\nb0 = 1.6 furlongs\n")

    def test_derived_tau_matches_magic_condition(self):
        cfg = parse_config("J = 10\nb0 = 1 uG\nB0 = 14.3 mG\nmagic_m = 1\n")
        assert cfg.tau_seconds() == pytest.approx(1e-4, rel=1e-3)

    def test_empty_value(self):
        with pytest.raises(ConfigError, match="empty value"):
            parse_config("J = 10\nb0 =\n")


def write_cfg(tmp_path: Path, text: str) -> str:
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


FAST_CFG = """
J = 8
B0 = 14.3 mG
b0 = 160 uG
bc = 0.05 mG
probe = CSS
sequence = BUniDD
magic_m = 1
n_cycles = 4
samples_per_quarter = 2
M = 16
master_seed = 3
"""


class TestCli:
    def test_bad_config_is_usage_error(self, tmp_path):
        path = write_cfg(tmp_path, "J = 10\n")  # missing b0
        assert main(["estimate", "--config", path]) == 1

    def test_missing_file_is_usage_error(self):
        assert main(["simulate", "--config", "/nonexistent.cfg"]) == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["explode", "--config", "x"]) == 1

    def test_validate_ok(self, tmp_path, capsys):
        path = write_cfg(tmp_path, FAST_CFG)
        code = main(["validate", "--config", path, "--out", str(tmp_path / "v")])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS" in out and "FAIL" not in out

    def test_estimate_writes_outputs(self, tmp_path):
        path = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "est"
        assert main(["estimate", "--config", path, "--out", str(out)]) == 0
        payload = json.loads((out / "estimate.json").read_text())
        assert payload["b0_true_G"] == pytest.approx(1.6e-4)
        assert abs(payload["b0_hat_G"] - 1.6e-4) < 5 * payload["b0_std_G"]
        header = (out / "timeseries.csv").read_text().splitlines()[0]
        assert header == (
            "t_s, mean_Jx, mean_Jy, std_Jy, var_Q, var_C, "
            "phase_raw, phase_relayed, phase_std"
        )

    def test_oracle_csv_schema(self, tmp_path):
        path = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "oracle"
        assert main(["oracle", "--config", path, "--out", str(out)]) == 0
        lines = (out / "oracle.csv").read_text().splitlines()
        assert lines[0] == "t_s, mean_Jy, var_Q, var_C"
        assert len(lines) == 51  # header + oracle_points

    def test_seed_override_changes_results(self, tmp_path):
        path = write_cfg(tmp_path, FAST_CFG)
        a, b = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--config", path, "--out", str(a), "--seed", "1"])
        main(["simulate", "--config", path, "--out", str(b), "--seed", "2"])
        assert (a / "timeseries.csv").read_bytes() != (b / "timeseries.csv").read_bytes()

    def test_sensitivity_csv_schema(self, tmp_path):
        path = write_cfg(tmp_path, FAST_CFG)
        out = tmp_path / "sens"
        assert main(["sensitivity", "--config", path, "--out", str(out)]) == 0
        header = (out / "sensitivity.csv").read_text().splitlines()[0]
        assert header == "t_s, eta_G_per_sqrtHz, eta_T_per_sqrtHz, sql, hl, sss_ref"

    def test_noise_sweep_csv_schema(self, tmp_path):
        small = FAST_CFG + "sweep_points = 3\nsweep_M = 4\nsweep_bc_min = 1e-7\nsweep_bc_max = 1e-4\n"
        path = write_cfg(tmp_path, small)
        out = tmp_path / "sweep"
        assert main(["noise-sweep", "--config", path, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "bc_G, eta_opt_T_per_sqrtHz, threshold_flag"
        assert len(lines) == 4

    def test_validation_failure_exit_code(self, tmp_path, monkeypatch):
        from relaymag import cli as cli_mod
        from relaymag.scenarios import ValidationFailure

        def boom(cfg, scenario, out_dir):
            raise ValidationFailure("forced")

        monkeypatch.setattr(cli_mod, "run_scenario", boom)
        path = write_cfg(tmp_path, FAST_CFG)
        assert main(["validate", "--config", path, "--out", str(tmp_path / "v")]) == 2

    def test_runtime_error_exit_code(self, tmp_path, monkeypatch):
        from relaymag import cli as cli_mod

        def boom(cfg, scenario, out_dir):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(cli_mod, "run_scenario", boom)
        path = write_cfg(tmp_path, FAST_CFG)
        assert main(["simulate", "--config", path, "--out", str(tmp_path / "x")]) == 3

    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        path = write_cfg(tmp_path, FAST_CFG)
        outs = []
        for name, threads in (("t1", "1"), ("t4", "4"), ("t1b", "1")):
            out = tmp_path / name
            assert (
                main(
                    [
                        "simulate",
                        "--config",
                        path,
                        "--out",
                        str(out),
                        "--threads",
                        threads,
                    ]
                )
                == 0
            )
            outs.append((out / "timeseries.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]
