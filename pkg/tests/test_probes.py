import math

import numpy as np
import pytest

from relaymag import probes, spinalg


class TestCss:
    def test_plus_z_is_top_basis_state(self):
        psi = probes.prepare_css(5.0, np.array([0.0, 0.0, 1.0]))
        assert abs(psi[0]) == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(psi[1:])) < 1e-12

    def test_plus_x_moments(self):
        psi = probes.prepare_css(50.0)
        assert spinalg.expectation(psi, "x") == pytest.approx(50.0, abs=1e-9)
        assert spinalg.variance(psi, "y") == pytest.approx(25.0, abs=1e-9)

    def test_spin_half_plus_x_superposition(self):
        psi = probes.prepare_css(0.5)
        ref = np.array([1.0, 1.0]) / math.sqrt(2)
        phase = psi[0] / ref[0]
        assert np.max(np.abs(psi - phase * ref)) < 1e-12

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            probes.prepare_css(2.0, np.zeros(3))


class TestSqueezingMetrics:
    def test_css_metrics(self):
        m = probes.squeezing_metrics(probes.prepare_css(30.0))
        assert m.xi2_s == pytest.approx(1.0, abs=1e-10)
        assert m.lam == pytest.approx(1.0, abs=1e-10)
        # a CSS along +x is a Jx eigenstate: no spread along its own axis
        assert m.var_x0 == pytest.approx(0.0, abs=1e-8)
        assert m.var_y0 == pytest.approx(15.0, abs=1e-9)
        assert m.valid

    def test_z_polarized_state_flagged_degenerate(self):
        psi = np.zeros(spinalg.dim(3.0), dtype=complex)
        psi[0] = 1.0
        m = probes.squeezing_metrics(psi)
        assert m.lam == pytest.approx(0.0, abs=1e-12)
        assert not m.valid

    def test_min_variance_matches_brute_scan(self):
        psi, _ = probes.prepare_sss(30.0, probes.ProbeSpec(kind="SSS"))
        vmin, _ = probes.min_transverse_variance(psi)
        thetas = np.arange(-math.pi / 2, math.pi / 2, 1e-4)
        brute = min(probes._transverse_variance(psi, th) for th in thetas)
        assert vmin == pytest.approx(brute, abs=1e-8)


class TestSss:
    def test_zero_twist_is_css(self):
        psi, m = probes.prepare_sss(20.0, probes.ProbeSpec(kind="SSS", twist_mu=0.0))
        assert m.xi2_s == pytest.approx(1.0, abs=1e-10)
        assert m.lam == pytest.approx(1.0, abs=1e-10)
        assert spinalg.fidelity(psi, probes.prepare_css(20.0)) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_metrics_consistent_with_variance(self):
        J = 100.0
        psi, m = probes.prepare_sss(J, probes.ProbeSpec(kind="SSS"))
        assert m.xi2_s == pytest.approx(2.0 * spinalg.variance(psi, "y") / J, abs=1e-10)
        assert m.var_y0 == pytest.approx(spinalg.variance(psi, "y"), abs=1e-10)
        assert m.var_x0 == pytest.approx(spinalg.variance(psi, "x"), abs=1e-10)
        assert m.lam == pytest.approx(abs(spinalg.expectation(psi, "x")) / J, abs=1e-10)

    def test_mean_spin_on_x_and_aligned(self):
        J = 50.0
        psi, m = probes.prepare_sss(J, probes.ProbeSpec(kind="SSS"))
        assert abs(spinalg.expectation(psi, "y")) < 1e-6 * J
        assert abs(spinalg.expectation(psi, "z")) < 1e-6 * J
        assert abs(m.min_angle) < 1e-3

    def test_operating_point_matches_headline_values(self):
        # at J=100 the optimum sits near xi2*J ~ 0.9 and lambda ~ 0.59,
        # heading toward 0.91/J and 0.58 at large J
        _, m = probes.prepare_sss(100.0, probes.ProbeSpec(kind="SSS"))
        assert 0.7 < m.xi2_s * 100.0 < 1.1
        assert 0.5 < m.lam < 0.7

    def test_xi2_decreases_with_j(self):
        values = [
            probes.prepare_sss(J, probes.ProbeSpec(kind="SSS"))[1].xi2_s
            for J in (20.0, 50.0, 100.0, 200.0)
        ]
        assert all(v < 1.0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_lambda_bounded_and_css_iff_unity(self):
        for J in (20.0, 50.0):
            _, m = probes.prepare_sss(J, probes.ProbeSpec(kind="SSS"))
            assert m.lam <= 1.0 + 1e-12
            assert m.lam < 1.0 - 1e-6  # twisted state is not coherent
        m_css = probes.squeezing_metrics(probes.prepare_css(20.0))
        assert m_css.lam == pytest.approx(1.0, abs=1e-10)

    def test_target_xi2_honored_or_rejected(self):
        J = 40.0
        target = 0.5
        _, m = probes.prepare_sss(J, probes.ProbeSpec(kind="SSS", target_xi2=target))
        assert m.xi2_s == pytest.approx(target, rel=1e-3)
        with pytest.raises(ValueError, match="unreachable"):
            probes.prepare_sss(J, probes.ProbeSpec(kind="SSS", target_xi2=1e-6))
