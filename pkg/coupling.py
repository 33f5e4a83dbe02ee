"""
VTSI Sim - Coupling Module
Wheel positions, host-element search, time-dependent influence matrix Lb(t) and irregularity at the wheels
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from bridge import BridgeModel, element_influence, element_influence_derivative
from bspline_constraint import assemble_Lb_spline, check_spline_support
from exceptions import ModelError
from irregularity import IrregularityProfile, TabulatedProfile
from train import TrainModel

logger = logging.getLogger(__name__)

Profile = Union[IrregularityProfile, TabulatedProfile]
INTERP_KINDS = ("hermite", "bspline")


# ============================================================================
# STATE TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class CouplingState:
    """
    Constraint data at one instant.

    Row i of Lb is zero whenever active[i] is false; rho is zero off span.
    """
    t: float
    x_w: np.ndarray
    active: np.ndarray
    Lb: np.ndarray
    rho: np.ndarray


@dataclass(frozen=True, eq=False)
class CouplingRates:
    """Lb, rho and their first two time derivatives for a constant speed."""
    Lb: np.ndarray
    Lb_dot: np.ndarray
    Lb_ddot: np.ndarray
    rho: np.ndarray
    rho_dot: np.ndarray
    rho_ddot: np.ndarray


# ============================================================================
# GEOMETRY
# ============================================================================

def wheel_positions(x0: Union[float, np.ndarray], speed: float, t: float) -> np.ndarray:
    """x_w(t) = x_w(0) + v t."""
    return np.asarray(x0, dtype=float) + speed * t


def locate(model: BridgeModel, x: float) -> Optional[Tuple[int, float]]:
    """
    Host element and local coordinate of a point on the span.

    A point exactly on an interior joint belongs to the LEFT element (a = l).
    Returns None off span.
    """
    x_start, x_end = model.span_extent
    if x < x_start or x > x_end:
        return None
    first, last = model.span_elements
    i = int(np.searchsorted(model.node_x, x, side="left"))
    e = min(max(i - 1, first), last - 1)
    return e, float(x - model.node_x[e])


def influence_row(model: BridgeModel, x: float, order: int = 0) -> np.ndarray:
    """
    Hermite row over free bridge DOFs giving the deflection at x (order 0)
    or its first/second x-derivative. Zero off span; constrained DOFs dropped.
    """
    row = np.zeros(model.n_dof)
    loc = locate(model, x)
    if loc is None:
        return row
    e, a = loc
    l = model.elements[e].length
    values = element_influence(a, l) if order == 0 else element_influence_derivative(a, l, order)
    cols = model.free_index[model.element_dofs(e)]
    keep = cols >= 0
    row[cols[keep]] += values[keep]
    return row


def assemble_Lb(model: BridgeModel, positions: Sequence[float], order: int = 0) -> np.ndarray:
    """Global influence matrix, one Hermite row per wheel."""
    positions = np.atleast_1d(positions)
    Lb = np.zeros((positions.size, model.n_dof))
    for i, x in enumerate(positions):
        Lb[i] = influence_row(model, float(x), order)
    return Lb


def constraint_residual(Lt: np.ndarray, train_u: np.ndarray, bridge_u: np.ndarray, state: CouplingState) -> np.ndarray:
    """r = Lt u_t + Lb u_b + rho; off span it reduces to Lt u_t."""
    return Lt @ train_u + state.Lb @ bridge_u + state.rho


# ============================================================================
# COUPLING EVALUATOR
# ============================================================================

class Coupling:
    """
    Time evaluator of the wheel-bridge constraint for a train at constant speed.

    position is the x of the front wheel at t = 0.
    """

    def __init__(
        self,
        train: TrainModel,
        bridge: BridgeModel,
        speed: float,
        position: float = 0.0,
        irregularity: Optional[Profile] = None,
        interp: str = "hermite",
    ):
        if interp not in INTERP_KINDS:
            raise ModelError(f"unknown constraint interpolation '{interp}'")
        if interp == "bspline":
            check_spline_support(bridge)
        self.train = train
        self.bridge = bridge
        self.speed = float(speed)
        self.interp = interp
        self.irregularity = irregularity
        offsets = train.wheel_offsets
        self.x0 = position - (offsets.max() - offsets)

    @property
    def Lt(self) -> np.ndarray:
        return self.train.Lt

    @property
    def n_wheels(self) -> int:
        return self.train.n_wheels

    def positions(self, t: float) -> np.ndarray:
        return wheel_positions(self.x0, self.speed, t)

    def _on_span(self, x: np.ndarray) -> np.ndarray:
        x_start, x_end = self.bridge.span_extent
        return (x >= x_start) & (x <= x_end)

    def _rho(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        if self.irregularity is None:
            return np.zeros(x.size)
        values = self.irregularity(x) if order == 0 else self.irregularity.derivative(x, order)
        return np.where(self._on_span(x), values, 0.0)

    def __call__(self, t: float) -> CouplingState:
        x = self.positions(t)
        if self.interp == "hermite":
            Lb = assemble_Lb(self.bridge, x)
            active = self._on_span(x)
        else:
            Lb = assemble_Lb_spline(self.bridge, x)
            active = (x >= self.bridge.node_x[0]) & (x <= self.bridge.node_x[-1])
        return CouplingState(t=t, x_w=x, active=active, Lb=Lb, rho=self._rho(x))

    def rates(self, t: float) -> CouplingRates:
        """
        Analytic Lb_dot = dL/dx v and Lb_ddot = d2L/dx2 v^2.

        Hermite Lb_ddot jumps where a wheel crosses a joint; the B-spline one is continuous.
        """
        x = self.positions(t)
        v = self.speed
        assemble = assemble_Lb if self.interp == "hermite" else assemble_Lb_spline
        return CouplingRates(
            Lb=assemble(self.bridge, x),
            Lb_dot=v * assemble(self.bridge, x, order=1),
            Lb_ddot=v * v * assemble(self.bridge, x, order=2),
            rho=self._rho(x),
            rho_dot=v * self._rho(x, 1),
            rho_ddot=v * v * self._rho(x, 2),
        )

    def entry_exit_times(self) -> np.ndarray:
        """(t_enter, t_exit) per wheel; inf for a train at rest."""
        x_start, x_end = self.bridge.span_extent
        if self.speed == 0.0:
            return np.full((self.n_wheels, 2), np.inf)
        return np.column_stack([(x_start - self.x0) / self.speed, (x_end - self.x0) / self.speed])

    def clear_time(self) -> float:
        """Time at which the last wheel leaves the span."""
        return float(np.max(self.entry_exit_times()[:, 1]))
