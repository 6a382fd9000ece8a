import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinmem.errors import AccuracyError, InvalidArgument
from spinmem.fidelity import flat_spectrum
from spinmem.propagator import selection_spectrum
from spinmem.pulses import make_sin
from spinmem.quadrature import simpson_weights
from spinmem.scenario import (ScenarioConfig, budget_group, budget_terms, error_budget_closed_form,
                              error_budget_numeric, fidelity_slope, run_nv_case_study, storage_time,
                              variance_of_selected)


class TestBudget:
    def test_degenerate(self):
        b = error_budget_closed_form(0.0, 1.0, 1.0, 1.0)
        assert b.degenerate and b.eps_tr == 0 and b.n_selected == 0

    def test_scaling_by_32(self):
        a = error_budget_closed_form(1e-3, 1e-2, 1e6, 1.0)
        b = error_budget_closed_form(32e-3, 1e-2, 1e6, 1.0)
        assert b.total / a.total == pytest.approx(16.0, rel=1e-12)
        assert b.printed_minimum / a.printed_minimum == pytest.approx(16.0, rel=1e-12)

    def test_total_is_sum(self):
        b = error_budget_closed_form(0.02, 1e-5, 2e10, 50.0)
        assert b.total == pytest.approx(b.eps_tr + b.eps_s)
        assert b.eps_tr == pytest.approx(0.02 * b.tau_tr)
        assert b.label == "model estimate"

    def test_printed_vs_exact_prefactor(self):
        b = error_budget_closed_form(0.02, 1e-5, 2e10, 50.0)
        X = budget_group(0.02, 1e-5, 2e10, 50.0)
        assert b.total == pytest.approx(5 * math.pi ** -0.8 * X ** 0.4, rel=1e-12)
        assert b.printed_minimum == pytest.approx(2 * X ** 0.4)

    @given(st.floats(1e-4, 1e2), st.floats(1e-6, 1e-1), st.floats(1e3, 1e12), st.floats(1e-3, 1e3))
    def test_numeric_agrees(self, kappa, eta, n0, tau_s):
        a = error_budget_closed_form(kappa, eta, n0, tau_s)
        b = error_budget_numeric(kappa, eta, n0, tau_s)
        assert b.total == pytest.approx(a.total, rel=1e-6)
        assert b.n_selected == pytest.approx(a.n_selected, rel=0.05)

    @given(st.floats(1e-4, 1e2), st.floats(1e-6, 1e-1), st.floats(1e3, 1e12), st.floats(1e-3, 1e3),
           st.floats(0.3, 3.0).filter(lambda f: abs(f - 1) > 1e-3))
    def test_unique_minimum(self, kappa, eta, n0, tau_s, factor):
        a = error_budget_closed_form(kappa, eta, n0, tau_s)
        assert sum(budget_terms(a.n_selected * factor, kappa, eta, n0, tau_s)) > a.total

    def test_unit_rescale_invariance(self):
        kappa, eta, n0, tau_s = 0.018, 2 * math.pi * 13 / 1e6, 2e10, 50.0
        a = error_budget_closed_form(kappa, eta, n0, tau_s)
        # times x 1e3 (us -> ns): rates / 1e3, density of spins per rate x 1e3
        b = error_budget_closed_form(kappa / 1e3, eta / 1e3, n0 * 1e3, tau_s * 1e3)
        assert b.total == pytest.approx(a.total, rel=1e-10)
        assert b.n_selected == pytest.approx(a.n_selected, rel=1e-10)

    def test_exponent(self):
        groups, mins = [], []
        for kappa in np.geomspace(1e-3, 1e-3 * 10 ** 1.5, 7):
            b = error_budget_numeric(kappa, 1e-4, 1e9, 10.0)
            groups.append(budget_group(kappa, 1e-4, 1e9, 10.0))
            mins.append(b.total)
        slope = np.polyfit(np.log(groups), np.log(mins), 1)[0]
        assert slope == pytest.approx(0.4, abs=0.02)

    def test_rejects_negative(self):
        with pytest.raises(InvalidArgument):
            error_budget_closed_form(-1.0, 1.0, 1.0, 1.0)
        with pytest.raises(InvalidArgument):
            error_budget_closed_form(1.0, 0.0, 1.0, 1.0)


class TestVariance:
    def test_sin_count(self):
        T = 3.0
        assert variance_of_selected(1.0, T=T) == pytest.approx(math.pi ** 2 / T ** 2, rel=1e-12)

    def test_quadratic(self):
        assert variance_of_selected(2.0, n_selected=10.0) * 4 == pytest.approx(
            variance_of_selected(2.0, n_selected=20.0))

    def test_matches_sin_selection(self):
        T = 1.0
        sel = selection_spectrum(make_sin(T))
        g, P = sel.detunings, sel.probabilities
        w = simpson_weights(g.size, g[1] - g[0])
        assert (w @ (g * g * P)) / (w @ P) == pytest.approx(variance_of_selected(1.0, T=T), rel=0.15)

    def test_needs_one(self):
        with pytest.raises(InvalidArgument):
            variance_of_selected(1.0)


class TestStorageTime:
    def test_exponential(self):
        t = storage_time(lambda x: np.exp(-x), 0.95, 1.0)
        assert t == pytest.approx(-math.log(0.95), rel=1e-6)

    def test_never_reached(self):
        with pytest.raises(AccuracyError):
            storage_time(lambda x: np.ones_like(x), 0.5, 1.0)


class TestConfig:
    def test_defaults(self):
        cfg = ScenarioConfig()
        assert math.pi / cfg.collective_coupling * 1e3 == pytest.approx(38.46, abs=0.01)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            ScenarioConfig(threshold=1.5)
        with pytest.raises(InvalidArgument):
            ScenarioConfig(width_convention="sigma")

    def test_weak_coupling_warns(self):
        with pytest.warns(RuntimeWarning):
            ScenarioConfig(collective_coupling=0.01, kappa=0.1)


@pytest.fixture(scope="module")
def nv_report():
    return run_nv_case_study()


class TestNVCaseStudy:
    def test_transfer_times(self, nv_report):
        s = nv_report.summary
        assert 0.038 <= s["tau_tr_us"] <= 0.041
        assert 2.7 <= s["tau_tr_reduced_us"] <= 2.9

    def test_slope(self, nv_report):
        s = nv_report.summary
        assert 0.048 <= s["fidelity_slope_us_primary"] <= 0.072
        assert set(s["fidelity_slope_us"]) == {"hwhm", "fwhm"}

    def test_storage_times(self, nv_report):
        t = nv_report.summary["storage_time_us"]
        assert t["sin"] == pytest.approx(50.0, rel=0.15)
        assert t["square"] == pytest.approx(8.5, rel=0.15)
        assert t["sin"] / t["square"] > 5

    def test_curves(self, nv_report):
        c = nv_report.curves
        assert c["F_sin"][0] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(c["tau_us"]) > 0)

    def test_budget_section(self, nv_report):
        b = nv_report.summary["error_budget"]
        assert b["total"] == pytest.approx(b["eps_tr"] + b["eps_s"])
        assert b["label"] == "model estimate"

    def test_flat_slope_helper(self):
        from spinmem.spectra import Lorentzian, SpectralDensity
        t = fidelity_slope(SpectralDensity((Lorentzian(0, 1.0, 1.0),)), 1e-3)
        assert t == pytest.approx(0.5, rel=1e-3)
