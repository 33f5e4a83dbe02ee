"""
VTSI Sim - Simulation Trace Module
Dynamic state container, per-step recorder, probe extraction and CSV output
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from exceptions import ModelError

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.15g"
QUANTITIES = ("u", "v", "a")


# ============================================================================
# STATE
# ============================================================================

@dataclass
class DynamicState:
    """Displacements, velocities and accelerations of train (t) and bridge (b)."""
    u_t: np.ndarray
    v_t: np.ndarray
    a_t: np.ndarray
    u_b: np.ndarray
    v_b: np.ndarray
    a_b: np.ndarray

    @classmethod
    def zeros(cls, n_train: int, n_bridge: int) -> "DynamicState":
        return cls(*(np.zeros(n) for n in (n_train,) * 3 + (n_bridge,) * 3))

    @classmethod
    def at_rest(cls, u_t: np.ndarray, u_b: np.ndarray) -> "DynamicState":
        return cls(u_t.copy(), np.zeros_like(u_t), np.zeros_like(u_t),
                   u_b.copy(), np.zeros_like(u_b), np.zeros_like(u_b))

    def copy(self) -> "DynamicState":
        return DynamicState(*(x.copy() for x in (self.u_t, self.v_t, self.a_t, self.u_b, self.v_b, self.a_b)))


# ============================================================================
# PROBES
# ============================================================================

@dataclass(frozen=True, eq=False)
class Probe:
    """
    Linear functional of a trace: weights dotted with the train or bridge
    u/v/a series. A bridge probe at x uses the Hermite row (or its slope
    for rotations).
    """
    label: str
    subsystem: str
    quantity: str
    weights: np.ndarray

    def __post_init__(self):
        if self.subsystem not in ("train", "bridge"):
            raise ValueError(f"unknown probe subsystem '{self.subsystem}'")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown probe quantity '{self.quantity}'")


# ============================================================================
# TRACE
# ============================================================================

@dataclass(eq=False)
class SimulationTrace:
    """
    Uniform-grid time series of a run.

    Arrays are indexed [step, dof] or [step, wheel]; gap is the constraint
    value Lt u_t + Lb u_b + rho per wheel (zero when bilateral, <= 0 under
    unilateral contact). Half-step columns are filled by the Bathe scheme only.
    """
    t: np.ndarray
    train_u: np.ndarray
    train_v: np.ndarray
    train_a: np.ndarray
    bridge_u: np.ndarray
    bridge_v: np.ndarray
    bridge_a: np.ndarray
    lam: np.ndarray
    gap: np.ndarray
    residual: np.ndarray
    x_w: np.ndarray
    lam_half: Optional[np.ndarray] = None
    gap_half: Optional[np.ndarray] = None
    complementarity: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.t.size - 1

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def n_wheels(self) -> int:
        return self.lam.shape[1]

    def series(self, subsystem: str, quantity: str) -> np.ndarray:
        return getattr(self, f"{subsystem}_{quantity}")

    def probe(self, probe: Probe) -> np.ndarray:
        return self.series(probe.subsystem, probe.quantity) @ probe.weights

    def to_frame(self, probes: Sequence[Probe] = ()) -> pd.DataFrame:
        """Columns t, <probe labels...>, lambda_1..lambda_k."""
        data: Dict[str, np.ndarray] = {"t": self.t}
        for p in probes:
            data[p.label] = self.probe(p)
        for i in range(self.n_wheels):
            data[f"lambda_{i + 1}"] = self.lam[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path], probes: Sequence[Probe] = ()) -> None:
        self.to_frame(probes).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        logger.info("Trace written to %s (%d rows)", path, self.t.size)


# ============================================================================
# RECORDER
# ============================================================================

class TraceRecorder:
    """Preallocated per-step storage filled by the integrators."""

    def __init__(
        self,
        n_steps: int,
        dt: float,
        n_train: int,
        n_bridge: int,
        n_wheels: int,
        half_steps: bool = False,
        unilateral: bool = False,
    ):
        n = n_steps + 1
        self.t = dt * np.arange(n)
        self.unilateral = unilateral
        self.train = {q: np.zeros((n, n_train)) for q in QUANTITIES}
        self.bridge = {q: np.zeros((n, n_bridge)) for q in QUANTITIES}
        self.lam = np.zeros((n, n_wheels))
        self.gap = np.zeros((n, n_wheels))
        self.residual = np.zeros(n)
        self.x_w = np.zeros((n, n_wheels))
        self.lam_half = np.full((n, n_wheels), np.nan) if half_steps else None
        self.gap_half = np.full((n, n_wheels), np.nan) if half_steps else None
        self.complementarity = np.zeros(n) if unilateral else None

    def _residual(self, gap: np.ndarray) -> float:
        if gap.size == 0:
            return 0.0
        if self.unilateral:
            return float(max(np.max(gap), 0.0))
        return float(np.max(np.abs(gap)))

    def record(
        self,
        i: int,
        state,
        lam: np.ndarray,
        coupling_state,
        Lt: np.ndarray,
        diag_A: Optional[np.ndarray] = None,
    ) -> None:
        for q in QUANTITIES:
            self.train[q][i] = getattr(state, f"{q}_t")
            self.bridge[q][i] = getattr(state, f"{q}_b")
        gap = Lt @ state.u_t + coupling_state.Lb @ state.u_b + coupling_state.rho
        self.lam[i] = lam
        self.gap[i] = gap
        self.residual[i] = self._residual(gap)
        self.x_w[i] = coupling_state.x_w
        if self.complementarity is not None and diag_A is not None and lam.size:
            # complementarity in force units: min(lambda, w / A_ii) with w = -gap
            self.complementarity[i] = float(np.max(np.abs(np.minimum(lam, -gap / diag_A))))

    def record_half(self, i: int, lam: np.ndarray, gap: np.ndarray, diag_A: Optional[np.ndarray] = None) -> None:
        if self.lam_half is None:
            return
        self.lam_half[i] = lam
        self.gap_half[i] = gap
        if self.complementarity is not None and diag_A is not None and lam.size:
            value = float(np.max(np.abs(np.minimum(lam, -gap / diag_A))))
            self.complementarity[i] = max(self.complementarity[i], value)

    def finish(self, metadata: Optional[Dict[str, Any]] = None) -> SimulationTrace:
        return SimulationTrace(
            t=self.t,
            train_u=self.train["u"], train_v=self.train["v"], train_a=self.train["a"],
            bridge_u=self.bridge["u"], bridge_v=self.bridge["v"], bridge_a=self.bridge["a"],
            lam=self.lam,
            gap=self.gap,
            residual=self.residual,
            x_w=self.x_w,
            lam_half=self.lam_half,
            gap_half=self.gap_half,
            complementarity=self.complementarity,
            metadata=dict(metadata or {}),
        )


def step_count(t_end: float, dt: float) -> int:
    """Number of uniform steps covering [0, t_end]."""
    if not dt > 0:
        raise ModelError(f"time step must be positive, got {dt}")
    if not t_end > 0:
        raise ModelError(f"t_end must be positive, got {t_end}")
    return max(1, int(round(t_end / dt)))
