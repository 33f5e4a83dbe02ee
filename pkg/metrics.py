"""
VTSI Sim - Metrics Computation Module
Pure functions computing trace KPIs: scheme deltas, spurious-oscillation measures, separation and peaks
"""

import numpy as np
import pandas as pd
from typing import Dict, List, Optional, Sequence

from bridge import SecondOrderSystem
from simulation_trace import Probe, SimulationTrace


# ============================================================================
# THRESHOLDS
# ============================================================================

HIGH_FREQUENCY_CUTOFF = 100.0   # Hz
SEPARATION_RTOL = 1e-9          # lambda below this fraction of the static force counts as zero


# ============================================================================
# TRACE COMPARISON
# ============================================================================

def relative_linf(values: np.ndarray, reference: np.ndarray) -> float:
    """
    max |values - reference| / max |reference|.

    Returns the absolute difference when the reference is identically zero.
    """
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if values.shape != reference.shape:
        raise ValueError(f"shape mismatch {values.shape} vs {reference.shape}")
    diff = float(np.max(np.abs(values - reference))) if values.size else 0.0
    scale = float(np.max(np.abs(reference))) if reference.size else 0.0
    return diff / scale if scale > 0 else diff


def compare_traces(a: SimulationTrace, b: SimulationTrace, probes: Sequence[Probe]) -> pd.DataFrame:
    """Relative L-inf delta of trace a against trace b per probe and per contact force."""
    if a.t.size != b.t.size or not np.allclose(a.t, b.t):
        raise ValueError("traces are not on the same time grid")
    rows = [{"series": p.label, "rel_linf": relative_linf(a.probe(p), b.probe(p))} for p in probes]
    for i in range(a.n_wheels):
        rows.append({"series": f"lambda_{i + 1}", "rel_linf": relative_linf(a.lam[:, i], b.lam[:, i])})
    return pd.DataFrame(rows, columns=["series", "rel_linf"])


# ============================================================================
# SPURIOUS OSCILLATIONS
# ============================================================================

def oscillation_metric(series: np.ndarray) -> float:
    """RMS of the second difference; per column max when given a 2-D array."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 3:
        return 0.0
    d2 = np.diff(series, n=2, axis=0)
    rms = np.sqrt(np.mean(d2**2, axis=0))
    return float(np.max(rms))


def high_frequency_energy(series: np.ndarray, dt: float, cutoff: float = HIGH_FREQUENCY_CUTOFF) -> float:
    """
    Spectral energy above cutoff (Hz), summed over columns.

    The mean is removed first; the value is sum |X_k|^2 / n over the
    one-sided FFT bins with frequency > cutoff.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    n = series.shape[0]
    if n < 2:
        return 0.0
    spectrum = np.fft.rfft(series - series.mean(axis=0), axis=0)
    freqs = np.fft.rfftfreq(n, d=dt)
    return float(np.sum(np.abs(spectrum[freqs > cutoff]) ** 2) / n)


# ============================================================================
# CONTACT SEPARATION
# ============================================================================

def separation_intervals(
    t: np.ndarray,
    lam: np.ndarray,
    wheel: int,
    threshold: Optional[float] = None,
) -> pd.DataFrame:
    """
    Intervals where the contact force of a wheel vanishes.

    Args:
        t: time grid
        lam: contact forces [step, wheel]
        wheel: 0-based wheel index
        threshold: force below which the wheel counts as separated; default
                   SEPARATION_RTOL times the largest force of the wheel

    Returns:
        DataFrame with columns start, end, duration (one row per interval)
    """
    force = np.asarray(lam, dtype=float)[:, wheel]
    if threshold is None:
        threshold = SEPARATION_RTOL * max(float(np.max(np.abs(force))), 1.0)
    off = force <= threshold

    edges = np.diff(off.astype(int))
    starts = list(np.flatnonzero(edges == 1) + 1)
    ends = list(np.flatnonzero(edges == -1))
    if off.size and off[0]:
        starts.insert(0, 0)
    if off.size and off[-1]:
        ends.append(off.size - 1)

    rows = [{"start": float(t[s]), "end": float(t[e]), "duration": float(t[e] - t[s])}
            for s, e in zip(starts, ends)]
    return pd.DataFrame(rows, columns=["start", "end", "duration"])


def separation_summary(t: np.ndarray, lam: np.ndarray, wheel: int) -> Dict:
    """First lift-off, last reattachment and the number of bounces of one wheel"""
    intervals = separation_intervals(t, lam, wheel)
    if intervals.empty:
        return {"separated": False, "n_intervals": 0, "reattachments": 0,
                "first_start": None, "last_end": None, "total_duration": 0.0}

    # A wheel still separated at the end of the trace never reattached
    reattachments = len(intervals) - int(intervals["end"].iloc[-1] >= t[-1])
    return {
        "separated": True,
        "n_intervals": len(intervals),
        "reattachments": reattachments,
        "first_start": round(float(intervals["start"].iloc[0]), 6),
        "last_end": round(float(intervals["end"].iloc[-1]), 6),
        "total_duration": round(float(intervals["duration"].sum()), 6),
    }


# ============================================================================
# RESPONSE & ENERGY
# ============================================================================

def peak_response(trace: SimulationTrace, probe: Probe) -> float:
    """max |probe(t)|"""
    return float(np.max(np.abs(trace.probe(probe))))


def resonance_speed(frequency: float, car_length: float) -> float:
    """Speed at which cars pass at the bridge frequency: v = f * l_ct."""
    return frequency * car_length


def convergence_deltas(values: Sequence[float]) -> List[Optional[float]]:
    """Successive relative changes |x_i - x_{i-1}| / |x_i|; None for the first level."""
    deltas: List[Optional[float]] = [None]
    for prev, cur in zip(values[:-1], values[1:]):
        deltas.append(abs(cur - prev) / abs(cur) if cur != 0 else abs(cur - prev))
    return deltas[:len(values)]


def mechanical_energy(system: SecondOrderSystem, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Kinetic + strain energy minus the potential of the constant load.

    u and v may be single states or [step, dof] series.
    """
    u = np.atleast_2d(u)
    v = np.atleast_2d(v)
    kinetic = 0.5 * np.einsum("ij,jk,ik->i", v, system.M, v)
    strain = 0.5 * np.einsum("ij,jk,ik->i", u, system.K, u)
    return kinetic + strain - u @ system.P


# ============================================================================
# SUMMARY
# ============================================================================

def summarize_trace(trace: SimulationTrace, probes: Sequence[Probe] = ()) -> Dict:
    """
    Headline numbers of a run.

    Returns:
        Dict with scheme, steps, peak probe values, peak contact force,
        constraint and complementarity residuals and the oscillation metric
    """
    summary = {
        "scheme": trace.metadata.get("scheme"),
        "n_steps": trace.n_steps,
        "dt": trace.dt,
        "max_contact_force": round(float(np.max(trace.lam)) if trace.lam.size else 0.0, 3),
        "min_contact_force": round(float(np.min(trace.lam)) if trace.lam.size else 0.0, 3),
        "max_residual": float(np.max(trace.residual)),
        "lambda_oscillation": round(oscillation_metric(trace.lam), 3) if trace.lam.size else 0.0,
    }
    for p in probes:
        summary[f"peak[{p.label}]"] = peak_response(trace, p)
    if trace.complementarity is not None:
        summary["max_complementarity"] = float(np.max(trace.complementarity))
    return summary
