"""
VTSI Sim - Bauchau Integrator Module
Energy-preserving mid-step scheme with a wheel-sized Schur coupling solve, plus static initialization
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from bridge import SecondOrderSystem
from coupling import CouplingRates, CouplingState
from exceptions import IntegrationError, ModelError, SingularSystemError
from simulation_trace import DynamicState, SimulationTrace, TraceRecorder, step_count

logger = logging.getLogger(__name__)

CouplingFn = Callable[[float], CouplingState]

COND_LIMIT = 1e14   # coupling matrices above this condition number count as singular
LOG_EVERY = 200


# ============================================================================
# LINEAR ALGEBRA HELPERS
# ============================================================================

def factorize(A: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """
    Cholesky solve for symmetric positive definite matrices, LU otherwise.

    cho_factor reads one triangle only, so a nonsymmetric matrix never reaches it.
    """
    if np.allclose(A, A.T, rtol=1e-12, atol=0.0):
        try:
            factor = linalg.cho_factor(A)
            return lambda b: linalg.cho_solve(factor, b)
        except linalg.LinAlgError:
            pass
    try:
        lu = linalg.lu_factor(A)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"effective matrix cannot be factorized: {exc}") from exc
    return lambda b: linalg.lu_solve(lu, b)


def check_finite(state: DynamicState, scheme: str, step: int, t: float) -> None:
    """Abort a run whose state has blown up."""
    if not all(np.all(np.isfinite(x)) for x in (state.u_t, state.u_b, state.v_t, state.v_b)):
        raise IntegrationError(scheme, step, t, FloatingPointError("non-finite state"))


def solve_coupling(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense wheel-sized solve; dependent constraint rows raise SingularSystemError."""
    if rhs.size == 0:
        return np.zeros(0)
    if np.linalg.cond(A) > COND_LIMIT:
        raise SingularSystemError("coupling matrix is singular (dependent wheel constraints)")
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"coupling matrix is singular: {exc}") from exc


# ============================================================================
# STATIC INITIALIZATION
# ============================================================================

def static_init(
    train: SecondOrderSystem,
    bridge: SecondOrderSystem,
    Lt: np.ndarray,
    state0: CouplingState,
) -> Tuple[DynamicState, np.ndarray]:
    """
    Coupled static equilibrium under the constant loads.

    Solves [Kt 0 Lt'; 0 Kb Lb'; Lt Lb 0] (u_t, u_b, lambda) = (P_t, P_b, -rho);
    off-span wheels are pinned through their zero Lb rows.

    Returns:
        (state at rest, lambda)
    """
    nt, nb, nw = train.n_dof, bridge.n_dof, Lt.shape[0]
    KKT = np.zeros((nt + nb + nw, nt + nb + nw))
    KKT[:nt, :nt] = train.K
    KKT[nt:nt + nb, nt:nt + nb] = bridge.K
    KKT[:nt, nt + nb:] = Lt.T
    KKT[nt:nt + nb, nt + nb:] = state0.Lb.T
    KKT[nt + nb:, :nt] = Lt
    KKT[nt + nb:, nt:nt + nb] = state0.Lb
    rhs = np.concatenate([train.P, bridge.P, -state0.rho])

    # Row equilibration keeps stiffness rows and unit constraint rows comparable
    row_scale = 1.0 / np.max(np.abs(KKT), axis=1)
    if not np.all(np.isfinite(row_scale)):
        raise SingularSystemError("static KKT system has an empty row")
    try:
        sol = linalg.solve(row_scale[:, None] * KKT, row_scale * rhs)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"static KKT system is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("static KKT system is singular (dependent constraints)")

    state = DynamicState.at_rest(sol[:nt], sol[nt:nt + nb])
    lam = sol[nt + nb:]
    logger.info("Static state: total contact force %.6g N", float(np.sum(lam)))
    return state, lam


def rolling_start(state: DynamicState, Lt: np.ndarray, rates: CouplingRates) -> DynamicState:
    """
    Static state with the wheel velocities of a train already rolling.

    The bridge and carriages stay at rest; each constrained wheel DOF gets
    the velocity of its contact point, so Lt v_t + Lb_dot u_b + rho_dot = 0.
    Midpoint schemes carry any initial mismatch here as an undamped
    step-to-step velocity alternation.
    """
    new = state.copy()
    path = rates.Lb_dot @ state.u_b + rates.rho_dot
    for i, row in enumerate(np.asarray(Lt, dtype=float)):
        j = int(np.argmax(np.abs(row)))
        new.v_t[j] = -path[i] / row[j]
    return new


# ============================================================================
# BAUCHAU SCHEME
# ============================================================================

@dataclass
class BauchauWorkspace:
    """Factorizations and per-step vectors of the scheme."""
    solve_t: Callable[[np.ndarray], np.ndarray]
    solve_b: Callable[[np.ndarray], np.ndarray]
    X_t: np.ndarray                 # Mbar_t^-1 Lt'
    a_t: Optional[np.ndarray] = None
    a_b: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    vbar_t: Optional[np.ndarray] = None
    vbar_b: Optional[np.ndarray] = None
    lam_half: Optional[np.ndarray] = None


class BauchauIntegrator:
    """
    Mid-step dynamics, end-step constraint.

    Mbar = M + dt/2 C + dt^2/4 K is factored once per subsystem; each step
    needs triangular solves and one dense n_wheels solve for lambda_{n+1/2}.
    """

    scheme = "bauchau"

    def __init__(
        self,
        train: SecondOrderSystem,
        bridge: SecondOrderSystem,
        Lt: np.ndarray,
        coupling: CouplingFn,
        dt: float,
    ):
        if not dt > 0:
            raise ModelError(f"time step must be positive, got {dt}")
        self.train = train
        self.bridge = bridge
        self.Lt = np.asarray(Lt, dtype=float)
        self.coupling = coupling
        self.dt = dt

        h = 0.5 * dt
        solve_t = factorize(train.M + h * train.C + h * h * train.K)
        solve_b = factorize(bridge.M + h * bridge.C + h * h * bridge.K)
        X_t = solve_t(self.Lt.T) if self.Lt.size else np.zeros((train.n_dof, 0))
        self.work = BauchauWorkspace(solve_t=solve_t, solve_b=solve_b, X_t=X_t)

    def step(self, state: DynamicState, t_n: float) -> Tuple[DynamicState, np.ndarray, CouplingState]:
        """
        Advance one step.

        Returns:
            (state_{n+1}, lambda_{n+1/2}, coupling state at t_{n+1})
        """
        dt, h = self.dt, 0.5 * self.dt
        w, Lt = self.work, self.Lt
        mid = self.coupling(t_n + h)
        end = self.coupling(t_n + dt)

        w.a_t = self.train.M @ state.v_t + h * (self.train.P - self.train.K @ state.u_t)
        w.a_b = self.bridge.M @ state.v_b + h * (self.bridge.P - self.bridge.K @ state.u_b)
        w.b = -0.5 * (Lt @ state.u_t + end.Lb @ state.u_b) - 0.5 * end.rho

        v_t = w.solve_t(w.a_t)
        v_b = w.solve_b(w.a_b)
        X_b = w.solve_b(mid.Lb.T) if mid.Lb.size else np.zeros((self.bridge.n_dof, 0))

        # Schur system: dynamics with Lb(t_{n+1/2}), constraint with Lb(t_{n+1})
        S = h * h * (Lt @ w.X_t + end.Lb @ X_b)
        rhs = h * (Lt @ v_t + end.Lb @ v_b) - w.b
        lam = solve_coupling(S, rhs)

        w.vbar_t = v_t - h * (w.X_t @ lam)
        w.vbar_b = v_b - h * (X_b @ lam)
        w.lam_half = lam

        new = DynamicState(
            u_t=state.u_t + dt * w.vbar_t,
            v_t=2.0 * w.vbar_t - state.v_t,
            a_t=2.0 * (w.vbar_t - state.v_t) / dt,
            u_b=state.u_b + dt * w.vbar_b,
            v_b=2.0 * w.vbar_b - state.v_b,
            a_b=2.0 * (w.vbar_b - state.v_b) / dt,
        )
        return new, lam, end

    def run(self, initial: DynamicState, lam0: np.ndarray, t_end: float) -> SimulationTrace:
        """March from t = 0 to t_end; lambda is reported at mid-steps."""
        n_steps = step_count(t_end, self.dt)
        rec = TraceRecorder(n_steps, self.dt, self.train.n_dof, self.bridge.n_dof, self.Lt.shape[0])
        rec.record(0, initial, lam0, self.coupling(0.0), self.Lt)

        started = time.perf_counter()
        state = initial
        for i in range(n_steps):
            try:
                state, lam, end = self.step(state, i * self.dt)
            except SingularSystemError as exc:
                raise IntegrationError(self.scheme, i + 1, (i + 1) * self.dt, exc) from exc
            check_finite(state, self.scheme, i + 1, (i + 1) * self.dt)
            rec.record(i + 1, state, lam, end, self.Lt)
            if (i + 1) % LOG_EVERY == 0:
                logger.debug("bauchau step %d: residual %.3e", i + 1, rec.residual[i + 1])

        logger.info("Bauchau run: %d steps in %.2f s", n_steps, time.perf_counter() - started)
        return rec.finish({"scheme": self.scheme, "dt": self.dt})
