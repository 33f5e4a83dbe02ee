"""Tests for irregularity.py"""

import numpy as np
import pytest
from scipy import signal

from exceptions import ModelError
from irregularity import (
    CLASS6_TOLERANCE, PSD_DEFAULTS, eval_derivative, evaluate, generate, generate_many,
    profile_from_csv, profile_to_csv, psd, summarize_profile,
)

SMALL = {"n_terms": 400}


class TestSpectrum:
    def test_psd_is_positive_and_decreasing(self):
        omega = np.array([0.01, 0.1, 1.0, 10.0])
        S = psd(omega)
        assert np.all(S > 0)
        assert np.all(np.diff(S) < 0)

    def test_psd_rejects_nonpositive_frequency(self):
        with pytest.raises(ModelError):
            psd(0.0)


class TestGeneration:
    def test_peak_equals_class_tolerance(self):
        profile = generate(11)
        assert np.max(np.abs(profile.grid_rho)) == pytest.approx(CLASS6_TOLERANCE, abs=1e-12)

    def test_same_seed_same_profile(self):
        a = generate(5, params=SMALL)
        b = generate(5, params=SMALL)
        assert np.array_equal(a.grid_rho, b.grid_rho)

    def test_different_seeds_differ(self):
        a = generate(5, params=SMALL)
        b = generate(6, params=SMALL)
        assert not np.allclose(a.grid_rho, b.grid_rho)

    def test_normalized_profile_independent_of_level(self):
        a = generate(2, params={**SMALL, "A": PSD_DEFAULTS["A"]})
        b = generate(2, params={**SMALL, "A": 4.0 * PSD_DEFAULTS["A"]})
        assert np.allclose(a.grid_rho, b.grid_rho, rtol=1e-12, atol=1e-18)
        assert b.scale == pytest.approx(0.5 * a.scale)

    def test_zero_before_gates_profile(self):
        profile = generate(4, params=SMALL, zero_before=10.0)
        before = profile.grid_x < 10.0
        assert np.all(profile.grid_rho[before] == 0.0)
        assert np.any(profile.grid_rho[profile.grid_x > 12.0] != 0.0)

    def test_evaluate_reproduces_grid(self):
        profile = generate(8, params=SMALL)
        assert np.allclose(evaluate(profile, profile.grid_x), profile.grid_rho, atol=1e-14)

    def test_derivative_matches_finite_difference(self):
        profile = generate(9, params=SMALL)
        x, h = np.array([12.3, 47.0, 81.9]), 1e-5
        fd = (evaluate(profile, x + h) - evaluate(profile, x - h)) / (2 * h)
        assert np.allclose(eval_derivative(profile, x, 1), fd, rtol=1e-5, atol=1e-10)
        fd2 = (eval_derivative(profile, x + h, 1) - eval_derivative(profile, x - h, 1)) / (2 * h)
        assert np.allclose(eval_derivative(profile, x, 2), fd2, rtol=1e-4, atol=1e-8)

    def test_generate_many_is_reproducible_and_independent(self):
        first = generate_many(1, 3, params=SMALL)
        again = generate_many(1, 3, params=SMALL)
        assert all(np.array_equal(a.grid_rho, b.grid_rho) for a, b in zip(first, again))
        assert not np.allclose(first[0].grid_rho, first[1].grid_rho)

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ModelError):
            generate(0, params={"omega_x": 1.0})

    def test_domain_fully_gated_rejected(self):
        with pytest.raises(ModelError):
            generate(0, params=SMALL, domain=(0.0, 5.0), zero_before=10.0)

    def test_summary(self):
        summary = summarize_profile(generate(3, params=SMALL))
        assert summary["max_abs_mm"] == pytest.approx(2.7)
        assert summary["n_terms"] == 399
        assert summary["length_m"] == pytest.approx(100.0)


class TestCsv:
    def test_tabulated_replay(self, tmp_path):
        profile = generate(12, params=SMALL)
        path = tmp_path / "profile.csv"
        profile_to_csv(profile, path)
        replay = profile_from_csv(path)
        assert np.allclose(replay(profile.grid_x[::50]), profile.grid_rho[::50], atol=1e-15)
        assert replay(-1.0)[0] == 0.0

    def test_bad_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n0,0\n1,1\n")
        with pytest.raises(ModelError):
            profile_from_csv(path)


@pytest.mark.slow
class TestSpectralContent:
    def test_welch_estimate_follows_target_spectrum(self):
        """Average over 50 seeds of the empirical PSD stays within a factor 2 of the target."""
        dx = 0.1
        x = np.arange(1.0, 1.0 + 32768 * dx, dx)
        ratios = []
        for seed in range(50):
            profile = generate(seed)
            f, G = signal.welch(evaluate(profile, x), fs=1.0 / dx, nperseg=8192)
            omega = 2 * np.pi * f
            band = (omega >= 0.05) & (omega <= 5.0)
            # one-sided density per rad/m against the two-sided model S / pi
            target = profile.scale**2 * psd(omega[band]) / np.pi
            ratios.append(G[band] / (2 * np.pi) / target)
        mean_ratio = np.mean(ratios, axis=0)
        assert np.all(mean_ratio > 0.5)
        assert np.all(mean_ratio < 2.0)

    def test_ensemble_mean_is_zero(self):
        """Random phases give a zero-mean profile: the 200-seed mean sits within 5 standard errors."""
        x = np.linspace(1.0, 19.0, 10)
        samples = np.array([evaluate(p, x) for p in generate_many(21, 200, params=SMALL, domain=(0.0, 20.0))])
        standard_error = samples.std(axis=0) / np.sqrt(samples.shape[0])
        assert np.all(np.abs(samples.mean(axis=0)) < 5.0 * standard_error)
