"""Tests for metrics.py"""

import numpy as np
import pytest

from bridge import SecondOrderSystem
from metrics import (
    compare_traces, convergence_deltas, high_frequency_energy, mechanical_energy, oscillation_metric,
    relative_linf, resonance_speed, separation_intervals, separation_summary, summarize_trace,
)
from simulation_trace import DynamicState, Probe, TraceRecorder


def _trace(lam: np.ndarray, scale: float = 1.0):
    n = lam.shape[0] - 1
    rec = TraceRecorder(n, 0.01, 2, 3, lam.shape[1])

    class _Cs:
        Lb = np.zeros((lam.shape[1], 3))
        rho = np.zeros(lam.shape[1])
        x_w = np.zeros(lam.shape[1])

    Lt = np.zeros((lam.shape[1], 2))
    for i in range(n + 1):
        u_b = scale * np.array([0.0, np.sin(0.1 * i), 0.0])
        state = DynamicState(np.zeros(2), np.zeros(2), np.zeros(2), u_b, np.zeros(3), np.zeros(3))
        rec.record(i, state, lam[i], _Cs, Lt)
    return rec.finish({"scheme": "bauchau"})


class TestComparison:
    def test_relative_linf(self):
        assert relative_linf([1.0, 2.1], [1.0, 2.0]) == pytest.approx(0.05)
        assert relative_linf([0.5], [0.0]) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            relative_linf([1.0, 2.0], [1.0])

    def test_compare_traces(self):
        lam = np.ones((11, 2))
        probe = Probe("bridge:u@mid", "bridge", "u", np.array([0.0, 1.0, 0.0]))
        table = compare_traces(_trace(lam, 1.1), _trace(lam), [probe])
        assert list(table["series"]) == ["bridge:u@mid", "lambda_1", "lambda_2"]
        assert table["rel_linf"].iloc[0] == pytest.approx(0.1)
        assert table["rel_linf"].iloc[1] == 0.0


class TestOscillation:
    def test_linear_series_has_no_oscillation(self):
        assert oscillation_metric(np.linspace(0.0, 5.0, 20)) == pytest.approx(0.0, abs=1e-12)

    def test_alternating_series(self):
        series = np.array([1.0, -1.0] * 10)
        assert oscillation_metric(series) == pytest.approx(4.0)

    def test_high_frequency_energy_separates_bands(self):
        dt = 1e-3
        t = dt * np.arange(1000)
        low = np.sin(2 * np.pi * 10.0 * t)
        high = np.sin(2 * np.pi * 200.0 * t)
        assert high_frequency_energy(low, dt) < 1e-12
        assert high_frequency_energy(high, dt) == pytest.approx(0.5 * 1000 / 2, rel=1e-6)


class TestSeparation:
    def test_intervals_and_summary(self):
        t = 0.01 * np.arange(10)
        lam = np.array([[5.0, 5.0, 0.0, 0.0, 5.0, 5.0, 0.0, 5.0, 5.0, 0.0]]).T
        intervals = separation_intervals(t, lam, 0)
        assert list(intervals["start"]) == pytest.approx([0.02, 0.06, 0.09])
        assert list(intervals["end"]) == pytest.approx([0.03, 0.06, 0.09])
        summary = separation_summary(t, lam, 0)
        assert summary["separated"]
        assert summary["n_intervals"] == 3
        assert summary["reattachments"] == 2

    def test_no_separation(self):
        t = np.arange(5.0)
        summary = separation_summary(t, np.full((5, 1), 3.0), 0)
        assert summary == {"separated": False, "n_intervals": 0, "reattachments": 0,
                           "first_start": None, "last_end": None, "total_duration": 0.0}


class TestResponse:
    def test_resonance_speed(self):
        assert resonance_speed(4.6, 20.0) == pytest.approx(92.0)

    def test_convergence_deltas(self):
        assert convergence_deltas([1.0, 2.0, 2.2]) == [None, pytest.approx(0.5), pytest.approx(0.2 / 2.2)]
        assert convergence_deltas([3.0]) == [None]

    def test_mechanical_energy(self):
        system = SecondOrderSystem(M=2.0 * np.eye(1), C=np.zeros((1, 1)), K=8.0 * np.eye(1), P=np.array([-1.0]))
        energy = mechanical_energy(system, np.array([[0.5], [0.0]]), np.array([[0.0], [2.0]]))
        assert energy == pytest.approx([0.5 * 8 * 0.25 + 0.5, 4.0])

    def test_summary(self):
        lam = np.full((11, 2), 100.0)
        probe = Probe("bridge:u@mid", "bridge", "u", np.array([0.0, 1.0, 0.0]))
        summary = summarize_trace(_trace(lam), [probe])
        assert summary["scheme"] == "bauchau"
        assert summary["n_steps"] == 10
        assert summary["max_contact_force"] == 100.0
        assert summary["peak[bridge:u@mid]"] == pytest.approx(np.max(np.abs(np.sin(0.1 * np.arange(11)))))
