"""
VTSI Sim - Track Irregularity Module
Seeded synthesis of vertical track irregularity profiles from a PSD model
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from exceptions import ModelError

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


# ============================================================================
# CONSTANTS & CONFIGURATION
# ============================================================================

# Class-6 elevation spectrum; frequencies in rad/m, A in m^2 rad/m
PSD_DEFAULTS = {
    "A": 1.5e-6,
    "omega_r": 0.0206,
    "omega_c": 0.825,
    "omega_l": 0.00383,
    "omega_u": 13.57383,
    "n_terms": 3540,
}

CLASS6_TOLERANCE = 2.7e-3   # m
GRID_STEP = 0.01            # m, normalization grid
BLEND_LENGTH = 1.0          # m, linear ramp after zero_before
LOW_BAND_WEIGHTS = (4.0 / (6.0 * np.pi), 1.0 / (6.0 * np.pi))
_CHUNK = 2048


# ============================================================================
# SPECTRUM
# ============================================================================

def psd(
    omega: Union[float, np.ndarray],
    A: float = PSD_DEFAULTS["A"],
    omega_r: float = PSD_DEFAULTS["omega_r"],
    omega_c: float = PSD_DEFAULTS["omega_c"],
) -> Union[float, np.ndarray]:
    """
    Elevation PSD S = A omega_c^2 / ((omega^2 + omega_r^2)(omega^2 + omega_c^2)).

    Args:
        omega: spatial circular frequency (rad/m), must be > 0
    """
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr <= 0):
        raise ModelError("PSD is defined for omega > 0 only")
    S = A * omega_c**2 / ((omega_arr**2 + omega_r**2) * (omega_arr**2 + omega_c**2))
    return float(S) if np.ndim(omega) == 0 else S


def _series(x: np.ndarray, coeffs: np.ndarray, freqs: np.ndarray, phases: np.ndarray, order: int = 0) -> np.ndarray:
    """sqrt(2) * sum c_n cos(omega_n x + phi_n) or its x-derivatives, chunked over x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    if order == 0:
        weights, trig, sign = coeffs, np.cos, 1.0
    elif order == 1:
        weights, trig, sign = coeffs * freqs, np.sin, -1.0
    elif order == 2:
        weights, trig, sign = coeffs * freqs**2, np.cos, -1.0
    else:
        raise ValueError(f"derivative order must be 0, 1 or 2, got {order}")
    for start in range(0, x.size, _CHUNK):
        block = x[start:start + _CHUNK]
        out[start:start + _CHUNK] = trig(np.outer(block, freqs) + phases) @ weights
    return sign * np.sqrt(2.0) * out


def _gate(x: np.ndarray, x0: float, order: int = 0) -> np.ndarray:
    if order == 0:
        return np.clip((x - x0) / BLEND_LENGTH, 0.0, 1.0)
    inside = (x > x0) & (x < x0 + BLEND_LENGTH)
    return np.where(inside, 1.0 / BLEND_LENGTH, 0.0) if order == 1 else np.zeros_like(x)


# ============================================================================
# PROFILES
# ============================================================================

@dataclass(frozen=True, eq=False)
class IrregularityProfile:
    """
    Normalized spectral-representation profile.

    rho(x) = sqrt(2) sum A_n scale cos(omega_n x + phi_n), gated to zero
    before zero_before with a linear ramp of BLEND_LENGTH.
    """
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    scale: float
    zero_before: float
    coefficients: np.ndarray
    grid_x: np.ndarray
    grid_rho: np.ndarray

    def raw(self, x: Union[float, np.ndarray]) -> np.ndarray:
        """Unnormalized, ungated series."""
        return _series(x, self.amplitudes, self.frequencies, self.phases)

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        return evaluate(self, x)

    def derivative(self, x: Union[float, np.ndarray], order: int) -> np.ndarray:
        return eval_derivative(self, x, order)


@dataclass(frozen=True, eq=False)
class TabulatedProfile:
    """Profile replayed from (x, rho) samples by linear interpolation, zero outside."""
    x: np.ndarray
    rho: np.ndarray

    def __call__(self, x: Union[float, np.ndarray]) -> np.ndarray:
        return np.interp(np.atleast_1d(x), self.x, self.rho, left=0.0, right=0.0)

    def derivative(self, x: Union[float, np.ndarray], order: int) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if order == 2:
            return np.zeros_like(x)
        slopes = np.diff(self.rho) / np.diff(self.x)
        idx = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, slopes.size - 1)
        inside = (x >= self.x[0]) & (x <= self.x[-1])
        return np.where(inside, slopes[idx], 0.0)


def _resolve_params(params: Optional[Dict]) -> Dict:
    merged = dict(PSD_DEFAULTS)
    for key, value in (params or {}).items():
        if key not in PSD_DEFAULTS:
            raise ModelError(f"unknown irregularity parameter '{key}'")
        merged[key] = value
    return merged


def generate(
    seed: SeedLike,
    params: Optional[Dict] = None,
    tolerance: float = CLASS6_TOLERANCE,
    domain: Tuple[float, float] = (0.0, 100.0),
    zero_before: float = 0.0,
) -> IrregularityProfile:
    """
    Synthesize a profile and rescale it to the class tolerance.

    Args:
        seed: integer seed or SeedSequence for the phase stream
        params: overrides of PSD_DEFAULTS
        tolerance: max |rho| on the 1 cm grid after normalization (m)
        domain: (x_start, x_end) of the normalization grid (m)
        zero_before: rho = 0 for x < zero_before

    Returns:
        IrregularityProfile
    """
    p = _resolve_params(params)
    n_terms = int(p["n_terms"])
    if n_terms < 3 or not p["omega_u"] > p["omega_l"] > 0:
        raise ModelError("degenerate frequency band")
    if not tolerance > 0:
        raise ModelError(f"tolerance must be positive, got {tolerance}")

    d_omega = (p["omega_u"] - p["omega_l"]) / n_terms
    freqs = d_omega * np.arange(1, n_terms)

    # Unit spectrum (A = 1) keeps the normalized profile independent of A
    shape = psd(freqs, 1.0, p["omega_r"], p["omega_c"])
    shape0 = 1.0 / p["omega_r"] ** 2
    low_band = np.zeros(freqs.size)
    low_band[:2] = LOW_BAND_WEIGHTS
    unit_amplitudes = np.sqrt((shape / np.pi + low_band * shape0) * d_omega)

    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(seq)
    phases = rng.uniform(0.0, 2.0 * np.pi, freqs.size)

    grid_x = np.arange(domain[0], domain[1] + 0.5 * GRID_STEP, GRID_STEP)
    unit = _series(grid_x, unit_amplitudes, freqs, phases) * _gate(grid_x, zero_before)
    peak = float(np.max(np.abs(unit)))
    if peak == 0.0:
        raise ModelError(f"normalization domain {domain} lies entirely before zero_before={zero_before}")

    coefficients = unit_amplitudes * (tolerance / peak)
    profile = IrregularityProfile(
        amplitudes=np.sqrt(p["A"]) * unit_amplitudes,
        frequencies=freqs,
        phases=phases,
        scale=tolerance / (peak * np.sqrt(p["A"])),
        zero_before=zero_before,
        coefficients=coefficients,
        grid_x=grid_x,
        grid_rho=unit * (tolerance / peak),
    )
    logger.info("Irregularity profile generated: %d terms, domain %s, scale %.4g", freqs.size, domain, profile.scale)
    return profile


def generate_many(seed: SeedLike, count: int, **kwargs) -> List[IrregularityProfile]:
    """Independent realizations from child sequences spawned off one seed."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [generate(child, **kwargs) for child in seq.spawn(count)]


def evaluate(profile: IrregularityProfile, x: Union[float, np.ndarray]) -> np.ndarray:
    """rho at positions x (m)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _series(x, profile.coefficients, profile.frequencies, profile.phases) * _gate(x, profile.zero_before)


def eval_derivative(profile: IrregularityProfile, x: Union[float, np.ndarray], order: int) -> np.ndarray:
    """First or second x-derivative of the gated profile; the ramp kinks contribute nothing to order 2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    series = lambda k: _series(x, profile.coefficients, profile.frequencies, profile.phases, order=k)
    gate = lambda k: _gate(x, profile.zero_before, order=k)
    if order == 1:
        return series(1) * gate(0) + series(0) * gate(1)
    if order == 2:
        return series(2) * gate(0) + 2.0 * series(1) * gate(1)
    raise ValueError(f"derivative order must be 1 or 2, got {order}")


def summarize_profile(profile: IrregularityProfile) -> Dict:
    """Grid statistics of a profile"""
    rho = profile.grid_rho
    return {
        "max_abs_mm": round(1e3 * float(np.max(np.abs(rho))), 4),
        "rms_mm": round(1e3 * float(np.sqrt(np.mean(rho**2))), 4),
        "mean_mm": round(1e3 * float(np.mean(rho)), 4),
        "n_terms": int(profile.frequencies.size),
        "length_m": round(float(profile.grid_x[-1] - profile.grid_x[0]), 3),
    }


# ============================================================================
# CSV EXPORT / IMPORT
# ============================================================================

def profile_to_csv(profile: IrregularityProfile, path: Union[str, Path]) -> None:
    """Write the normalization-grid samples as (x, rho) for replay across schemes."""
    pd.DataFrame({"x": profile.grid_x, "rho": profile.grid_rho}).to_csv(path, index=False, float_format="%.15g")


def profile_from_csv(path: Union[str, Path]) -> TabulatedProfile:
    df = pd.read_csv(path)
    if list(df.columns[:2]) != ["x", "rho"]:
        raise ModelError(f"{path}: expected columns x, rho")
    x = df["x"].to_numpy(dtype=float)
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ModelError(f"{path}: x must be strictly increasing with at least two samples")
    return TabulatedProfile(x=x, rho=df["rho"].to_numpy(dtype=float))
