import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgmtransfer import transfer as tr

positive = st.floats(1e-22, 1e-12)


class TestSigmaQ:
    def test_doubling_q_halves_sigma(self, sphere35, fund35):
        s1 = tr.sigma_q(sphere35, fund35)
        s2 = tr.sigma_q(sphere35, fund35.with_q_loaded(6e7))
        assert s2 == pytest.approx(s1 / 2, rel=1e-6)

    def test_formula(self, sphere35, fund35):
        expected = 2 * math.pi * 1.45724 * fund35.mode_volume / (3e7 * fund35.lambda_res)
        assert tr.sigma_q(sphere35, fund35) == pytest.approx(expected, rel=1e-9)

    def test_higher_n_larger_sigma(self, sphere35, scenario_budget):
        rows = {(r.mode_id.polarization, r.mode_id.n, r.mode_id.l - r.mode_id.m): r
                for r in scenario_budget.explicit_rows}
        assert rows[("TE", 2, 0)].quotient < rows[("TE", 1, 0)].quotient

    def test_missing_q(self, sphere35, fund35):
        with pytest.raises(ValueError):
            tr.sigma_q(sphere35, replace(fund35, q_radiative=0.0, q_loaded=None))


class TestQuotient:
    def test_examples(self):
        assert tr.quotient(tr.LossBudget(1e-20, 2e-16)) == pytest.approx(4.99975e-5, rel=1e-9)
        assert tr.quotient(tr.LossBudget(1e-15, 2e-16)) == pytest.approx(1 / 1.2, rel=1e-12)

    @settings(max_examples=100)
    @given(a=positive, q=positive, s=st.floats(0, 1e-12), d=st.floats(0, 1e-12),
           k=st.floats(1e-3, 1e3))
    def test_homogeneous_and_monotone(self, a, q, s, d, k):
        b = tr.LossBudget(a, q, s, d)
        base = tr.quotient(b)
        assert tr.quotient(b.scaled(k)) == pytest.approx(base, rel=1e-12)
        assert tr.quotient(replace(b, sigma_a_abs=a * 1.5)) > base
        assert tr.quotient(replace(b, sigma_q=q * 1.5)) < base
        assert tr.quotient(replace(b, sigma_d_sca=s + 0.5 * q)) < base
        assert tr.quotient(replace(b, sigma_d_abs=d + 0.5 * q)) < base

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            tr.LossBudget(1e-20, 0.0)
        with pytest.raises(ValueError):
            tr.LossBudget(-1e-20, 1e-16)

    def test_eta_single_mode(self):
        assert tr.eta_single_mode(1.5e-6, 5e-5) == pytest.approx(7.5e-11, rel=1e-12)
        assert tr.eta_single_mode(0.0, 0.3) == 0.0
        assert tr.eta_single_mode(0.2, 1.0) == 0.2
        with pytest.raises(ValueError):
            tr.eta_single_mode(1.5, 0.1)


class TestAggregation:
    def test_counting_path(self):
        assert tr.fsr_count_from_span(46e-9, 2.3e-9) == 20
        assert tr.multimode_factor(20) == 16000
        assert tr.multimode_factor(1, 1, 1, 1) == 1
        with pytest.raises(ValueError):
            tr.multimode_factor(1, polarizations=3)

    def test_rows_are_exact_products(self, scenario_budget):
        for r in scenario_budget.per_mode + scenario_budget.explicit_rows:
            assert r.eta_i == r.beta_i * r.quotient
        assert len(scenario_budget.explicit_rows) == 2 * 10 * 40

    def test_explicit_total_is_row_sum(self, scenario_budget):
        s = sum(r.eta_i for r in scenario_budget.explicit_rows)
        assert scenario_budget.eta_total_explicit == pytest.approx(s * 20, rel=1e-12)

    def test_zero_gain_reduces_to_single_mode(self, sphere35, donor, acceptor):
        b = tr.aggregate_eta(sphere35, donor, acceptor, 3e7, gamma_cav=6e-14, fsr_count=1,
                             n_gain=1, lm_gain=1, polarizations=1)
        assert b.eta_total == b.eta_fundamental == b.per_mode[0].eta_i

    def test_enhancement_scale_invariance_in_weak_regime(self, sphere35, donor, acceptor):
        b1 = tr.aggregate_eta(sphere35, donor, acceptor, 3e7, gamma_cav=6e-14, span=46e-9)
        assert acceptor.sigma_abs_total < b1.sigma_q_fundamental / 100
        b2 = tr.aggregate_eta(sphere35, donor, replace(acceptor, molecule_count=2), 3e7,
                              gamma_cav=6e-14, span=46e-9)
        assert b2.enhancement == pytest.approx(b1.enhancement, rel=0.01)

    def test_acceptor_must_touch(self, sphere35, donor, acceptor):
        with pytest.raises(ValueError):
            tr.aggregate_eta(sphere35, donor, replace(acceptor, gap=1e-9), 3e7)

    def test_report_contains_fields(self, scenario_budget, tmp_path):
        text = tr.report_lines(scenario_budget)
        for key in ("eta_total", "multimode_factor", "enhancement", "sigma_q_fundamental_cm2",
                    "sigma_q_fundamental_m2", "baseline_free_space", "explicit_factor"):
            assert f"\n{key} = " in "\n" + text
        path = tmp_path / "rows.csv"
        tr.write_mode_rows(path, scenario_budget.explicit_rows)
        assert len(path.read_text().splitlines()) == 801


class TestBaselines:
    def test_free_space(self):
        p = tr.free_space_absorption(1e-20, 50e-6)
        assert p == pytest.approx(3.183e-13, rel=1e-3)
        assert tr.free_space_absorption(1e-20, 100e-6) == p / 4
        assert tr.free_space_absorption(1e-20, 1e300) == 0.0
        with pytest.raises(ValueError):
            tr.free_space_absorption(1e-20, 0.0)

    def test_fret(self):
        assert tr.fret_efficiency(10e-9, 10e-9) == 0.5
        assert tr.fret_efficiency(0.0, 10e-9) == 1.0
        assert tr.fret_efficiency(20e-9, 10e-9) == pytest.approx(1 / 65, rel=1e-14)
        with pytest.raises(ValueError):
            tr.fret_efficiency(1e-9, 0.0)


class TestMonteCarlo:
    def test_symmetric_channels(self):
        est, se = tr.monte_carlo_quotient(tr.LossBudget(1e-16, 1e-16), 100_000, seed=1)
        assert abs(est - 0.5) <= 3 * se

    def test_no_loss_absorbs_everything(self):
        assert tr.monte_carlo_competition(0.05, 0.0, 10_000, seed=2) == (1.0, 0.0)

    def test_deterministic_and_scale_invariant(self):
        b = tr.LossBudget(1e-18, 3e-17, 1e-18)
        r1 = tr.monte_carlo_quotient(b, 200_000, seed=42)
        assert r1 == tr.monte_carlo_quotient(b, 200_000, seed=42)
        assert r1 == tr.monte_carlo_quotient(b.scaled(1e4), 200_000, seed=42)
        assert r1 != tr.monte_carlo_quotient(b, 200_000, seed=43)

    @pytest.mark.parametrize("a,q", [(1e-20, 2e-16), (1e-17, 4e-17), (3e-16, 1e-16)])
    def test_agrees_with_analytic(self, a, q):
        b = tr.LossBudget(a, q)
        est, se = tr.monte_carlo_quotient(b, 1_000_000, seed=7, per_pass_total=0.05)
        exact = tr.quotient(b)
        assert abs(est - exact) <= 3 * max(se, math.sqrt(exact * (1 - exact) / 1_000_000))

    def test_invalid_inputs(self):
        b = tr.LossBudget(1e-16, 1e-16)
        with pytest.raises(ValueError):
            tr.monte_carlo_quotient(b, 100, seed=1)
        with pytest.raises(ValueError):
            tr.monte_carlo_quotient(b, 100_000, seed=1, per_pass_total=0.5)
        with pytest.raises(ValueError):
            tr.monte_carlo_competition(0.7, 0.6, 100_000, seed=1)
