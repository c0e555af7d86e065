import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgmtransfer import emitter_coupling as ec


class TestBeta:
    def test_range_and_monotone_in_gap(self, sphere35, fund35):
        gaps = np.linspace(0, 2e-6, 400)
        b = ec.beta0(sphere35, fund35, gaps)
        assert np.all((b > 0) & (b < 1))
        assert np.all(np.diff(b) < 0)
        assert ec.beta0(sphere35, fund35, 50e-6) < 1e-100

    def test_higher_q_raises_beta0(self, sphere35, fund35):
        doubled = fund35.with_q_loaded(6e7)
        gaps = np.linspace(0, 500e-9, 51)
        assert np.all(ec.beta0(sphere35, doubled, gaps) > ec.beta0(sphere35, fund35, gaps))

    def test_larger_volume_lowers_beta0(self, sphere35, fund35):
        bigger = replace(fund35, mode_volume=2 * fund35.mode_volume)
        assert ec.beta0(sphere35, bigger, 50e-9) < ec.beta0(sphere35, fund35, 50e-9)

    def test_purcell_formula(self, fund35):
        f = ec.purcell_factor(fund35, 0.0)
        expected = (1 / 3) * 3 / (4 * math.pi ** 2) * fund35.lambda_res ** 3 \
            * fund35.q_total / fund35.mode_volume * fund35.surface_intensity_rel
        assert f == pytest.approx(expected, rel=1e-14)

    def test_incomplete_mode(self, sphere35, fund35):
        with pytest.raises(ValueError):
            ec.beta0(sphere35, replace(fund35, decay_length=0.0), 10e-9)
        with pytest.raises(ValueError):
            ec.beta0(sphere35, fund35, -1e-9)

    def test_broadband_examples(self):
        assert ec.beta_broadband(0.5, 6e-14, 20e-9) == pytest.approx(1.5e-6, rel=1e-12)
        assert ec.beta_broadband(0.5, 30e-9, 20e-9) == 0.5
        with pytest.raises(ValueError):
            ec.beta_broadband(0.5, 0.0, 20e-9)

    @settings(max_examples=100)
    @given(b0=st.floats(0.001, 0.999), gc=st.floats(1e-15, 1e-6), gb=st.floats(1e-9, 1e-7))
    def test_broadband_bounded_and_linear(self, b0, gc, gb):
        b = ec.beta_broadband(b0, gc, gb)
        assert b <= b0
        assert (b == b0) == (gc >= gb)
        if 2 * gc < gb:
            assert ec.beta_broadband(b0, gc, gb / 2) == pytest.approx(2 * b, rel=1e-12)

    def test_cavity_linewidth(self):
        assert ec.cavity_linewidth(670e-9, 3e7) == pytest.approx(2.233e-14, rel=1e-3)
        assert ec.cavity_linewidth(670e-9, 1.1e7) == pytest.approx(6.09e-14, rel=1e-3)
        assert ec.cavity_linewidth(670e-9, 1e300) < 1e-300
        with pytest.raises(ValueError):
            ec.cavity_linewidth(670e-9, 0)


class TestDistanceScan:
    def test_e_ratio_and_monotone(self, sphere35, fund35):
        L = fund35.decay_length
        scan = ec.distance_scan(sphere35, fund35, [0.0, L / 2])
        assert scan[0, 1] / scan[1, 1] == pytest.approx(math.e, rel=1e-12)
        s = ec.distance_scan(sphere35, fund35, np.linspace(10e-9, 300e-9, 30))
        assert s[0, 1] == 1.0
        assert np.all(np.diff(s[:, 1]) < 0)

    def test_log_fit_recovers_decay(self, sphere35, fund35):
        gaps = np.linspace(0, 200e-9, 41)
        s = ec.distance_scan(sphere35, fund35, gaps)
        slope = np.polyfit(gaps, np.log(s[:, 1]), 1)[0]
        assert -slope == pytest.approx(2 / fund35.decay_length, rel=1e-2)

    def test_bad_gaps(self, sphere35, fund35):
        with pytest.raises(ValueError):
            ec.distance_scan(sphere35, fund35, [2e-9, 1e-9])
        with pytest.raises(ValueError):
            ec.distance_scan(sphere35, fund35, [-1e-9, 1e-9])


class TestAngular:
    def test_column_maxima_and_lobes(self):
        th = np.radians(np.linspace(-20, 20, 20001))
        A = ec.angular_model(None, 300, 6, th)
        assert A[:, 0].argmax() == th.size // 2
        np.testing.assert_allclose(A.max(axis=0), 1.0, rtol=1e-6)
        for p in range(6):
            v = A[:, p]
            assert np.count_nonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) == p + 1

    def test_columns_independent(self):
        A = ec.angular_model(None, 300, 10, np.radians(np.linspace(-20, 20, 401)))
        gram = A.T @ A
        assert np.linalg.det(gram / np.outer(np.sqrt(np.diag(gram)), np.sqrt(np.diag(gram)))) > 0

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            ec.angular_model(None, 5, 6, [0.0])
        with pytest.raises(ValueError):
            ec.angular_model(None, 300, 3, [math.radians(25)])

    def _scan(self, l, weights, noise=0.0, seed=0):
        th = np.radians(np.linspace(-15, 15, 121))
        y = ec.angular_curve(l, weights, th)
        y = y * (1 + noise * np.random.default_rng(seed).standard_normal(th.size))
        return ec.AngularScan(th, np.clip(y, 0, None))

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_round_trip(self, seed):
        w = 0.5 ** np.arange(10)
        fit = ec.fit_angular_scan(self._scan(705, w, 0.02, seed), None, 705)
        assert np.max(np.abs(fit.weights - w)) <= 0.05
        assert np.all(fit.weights >= 0)

    def test_zero_scan_gives_zero_weights(self):
        fit = ec.fit_angular_scan(ec.AngularScan(np.radians(np.linspace(-10, 10, 21)),
                                                 np.zeros(21)), None, 300)
        assert np.all(fit.weights == 0)

    def test_residual_not_worse_than_single_profile(self):
        scan = self._scan(400, [1.0, 0.0, 0.7, 0.2], 0.05, 9)
        fit = ec.fit_angular_scan(scan, None, 400, K=4)
        A = ec.angular_model(None, 400, 4, scan.thetas)
        singles = []
        for p in range(4):
            c = max(A[:, p] @ scan.intensities / (A[:, p] @ A[:, p]), 0)
            singles.append(np.sqrt(np.mean((c * A[:, p] - scan.intensities) ** 2)))
        assert fit.residual_rms <= min(singles) + 1e-12

    def test_equator_maximum_when_fundamental_dominates(self):
        w = np.array([1.0, 0.3, 0.3, 0.2, 0.1])
        th = np.radians(np.linspace(-10, 10, 4001))
        curve = ec.angular_curve(500, w, th)
        assert abs(th[curve.argmax()]) < 1e-12

    def test_half_width_scales_as_inverse_sqrt_l(self):
        widths = {l: ec.half_width(l, [1.0]) for l in (100, 400, 700)}
        for l in (400, 700):
            assert widths[l] * math.sqrt(l) == pytest.approx(widths[100] * 10, rel=0.10)

    def test_scan_validation_and_csv(self, tmp_path):
        with pytest.raises(ValueError):
            ec.AngularScan(np.arange(5.0), np.ones(5))
        with pytest.raises(ValueError):
            ec.AngularScan(np.arange(12.0)[::-1], np.ones(12))
        scan = self._scan(300, [1.0, 0.5])
        path = tmp_path / "scan.csv"
        ec.write_angular_scan(path, scan)
        back = ec.read_angular_scan(path)
        np.testing.assert_allclose(back.thetas, scan.thetas, rtol=1e-14)
        np.testing.assert_allclose(back.intensities, scan.intensities, rtol=1e-14)


class TestEmitter:
    def test_validation(self):
        ec.Emitter("donor", 610e-9, 20e-9, 1e-20)
        for kwargs in ({"role": "x"}, {"linewidth": 0.0}, {"gap": -1e-9},
                       {"sigma_abs_molecule": 0.0}, {"molecule_count": 0}):
            base = dict(role="donor", lambda_center=610e-9, linewidth=20e-9,
                        sigma_abs_molecule=1e-20)
            base.update(kwargs)
            with pytest.raises(ValueError):
                ec.Emitter(**base)

    def test_total_cross_section(self):
        e = ec.Emitter("acceptor", 650e-9, 20e-9, 1e-20, molecule_count=100_000)
        assert e.sigma_abs_total == pytest.approx(1e-15)
