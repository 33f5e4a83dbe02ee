"""
VTSI Sim - Bathe Integrator Module
Composite trapezoidal / 3-point backward Euler scheme with constraints enforced at both sub-steps
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from bridge import SecondOrderSystem
from coupling import CouplingState
from exceptions import IntegrationError, LcpRayTermination, ModelError, SingularSystemError
from integrate_bauchau import LOG_EVERY, check_finite, factorize, solve_coupling, static_init
from simulation_trace import DynamicState, SimulationTrace, TraceRecorder, step_count

logger = logging.getLogger(__name__)

CouplingFn = Callable[[float], CouplingState]
MultiplierSolver = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ============================================================================
# WORKSPACE
# ============================================================================

@dataclass
class BatheWorkspace:
    """
    Factorized effective matrices of both sub-steps and the last coupling solve.

    Half step: 16/dt^2 M + 4/dt C + K; full step: 9/dt^2 M + 3/dt C + K.
    """
    solve_t_half: Callable[[np.ndarray], np.ndarray]
    solve_b_half: Callable[[np.ndarray], np.ndarray]
    solve_t_full: Callable[[np.ndarray], np.ndarray]
    solve_b_full: Callable[[np.ndarray], np.ndarray]
    A_t_half: np.ndarray
    A_t_full: np.ndarray
    u_tilde_t: Optional[np.ndarray] = None
    u_tilde_b: Optional[np.ndarray] = None
    A_b: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    rho_bar: Optional[np.ndarray] = None


@dataclass
class BatheStepResult:
    """Both sub-step states with their multipliers and coupling data."""
    state_half: DynamicState
    lam_half: np.ndarray
    coupling_half: CouplingState
    diag_A_half: np.ndarray
    state: DynamicState
    lam: np.ndarray
    coupling: CouplingState
    diag_A: np.ndarray


# ============================================================================
# BATHE SCHEME
# ============================================================================

class BatheIntegrator:
    """
    Two sub-steps per step, each closed by a wheel-sized coupling system
    A lambda = rho_bar with A = Lt A_t + Lb A_b.

    multiplier_solver maps (A, rho_bar) to lambda; the default is the
    bilateral linear solve, contact_lcp supplies the unilateral one.
    """

    scheme = "bathe"

    def __init__(
        self,
        train: SecondOrderSystem,
        bridge: SecondOrderSystem,
        Lt: np.ndarray,
        coupling: CouplingFn,
        dt: float,
        multiplier_solver: MultiplierSolver = solve_coupling,
    ):
        if not dt > 0:
            raise ModelError(f"time step must be positive, got {dt}")
        self.train = train
        self.bridge = bridge
        self.Lt = np.asarray(Lt, dtype=float)
        self.coupling = coupling
        self.dt = dt
        self.multiplier_solver = multiplier_solver

        def eff(s: SecondOrderSystem, cm: float, cc: float) -> np.ndarray:
            return cm * s.M + cc * s.C + s.K

        solve_t_half = factorize(eff(train, 16.0 / dt**2, 4.0 / dt))
        solve_t_full = factorize(eff(train, 9.0 / dt**2, 3.0 / dt))
        empty = np.zeros((train.n_dof, 0))
        self.work = BatheWorkspace(
            solve_t_half=solve_t_half,
            solve_b_half=factorize(eff(bridge, 16.0 / dt**2, 4.0 / dt)),
            solve_t_full=solve_t_full,
            solve_b_full=factorize(eff(bridge, 9.0 / dt**2, 3.0 / dt)),
            A_t_half=solve_t_half(self.Lt.T) if self.Lt.size else empty,
            A_t_full=solve_t_full(self.Lt.T) if self.Lt.size else empty,
        )

    def _couple(
        self,
        rhs_t: np.ndarray,
        rhs_b: np.ndarray,
        solve_t: Callable,
        solve_b: Callable,
        A_t: np.ndarray,
        cs: CouplingState,
        solver: MultiplierSolver,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Predict, solve for lambda, correct u = u_tilde - A_hat lambda."""
        w = self.work
        w.u_tilde_t = solve_t(rhs_t)
        w.u_tilde_b = solve_b(rhs_b)
        w.A_b = solve_b(cs.Lb.T) if cs.Lb.size else np.zeros((self.bridge.n_dof, 0))
        w.A = self.Lt @ A_t + cs.Lb @ w.A_b
        w.rho_bar = self.Lt @ w.u_tilde_t + cs.Lb @ w.u_tilde_b + cs.rho
        lam = solver(w.A, w.rho_bar) if w.rho_bar.size else np.zeros(0)
        u_t = w.u_tilde_t - A_t @ lam
        u_b = w.u_tilde_b - w.A_b @ lam
        return u_t, u_b, lam, np.diag(w.A).copy()

    def substep_half(
        self,
        state: DynamicState,
        t_n: float,
        solver: Optional[MultiplierSolver] = None,
    ) -> Tuple[DynamicState, np.ndarray, CouplingState, np.ndarray]:
        """Trapezoidal rule from t_n to t_n + dt/2."""
        dt = self.dt
        solver = solver or self.multiplier_solver
        cs = self.coupling(t_n + 0.5 * dt)

        def rhs(s: SecondOrderSystem, u, v, a):
            return s.P + s.C @ (4.0 / dt * u + v) + s.M @ (16.0 / dt**2 * u + 8.0 / dt * v + a)

        u_t, u_b, lam, diag_A = self._couple(
            rhs(self.train, state.u_t, state.v_t, state.a_t),
            rhs(self.bridge, state.u_b, state.v_b, state.a_b),
            self.work.solve_t_half, self.work.solve_b_half, self.work.A_t_half, cs, solver,
        )
        v_t = 4.0 / dt * (u_t - state.u_t) - state.v_t
        v_b = 4.0 / dt * (u_b - state.u_b) - state.v_b
        half = DynamicState(
            u_t=u_t, v_t=v_t, a_t=4.0 / dt * (v_t - state.v_t) - state.a_t,
            u_b=u_b, v_b=v_b, a_b=4.0 / dt * (v_b - state.v_b) - state.a_b,
        )
        return half, lam, cs, diag_A

    def substep_full(
        self,
        state: DynamicState,
        half: DynamicState,
        t_n: float,
        solver: Optional[MultiplierSolver] = None,
    ) -> Tuple[DynamicState, np.ndarray, CouplingState, np.ndarray]:
        """3-point backward Euler from (t_n, t_n + dt/2) to t_n + dt."""
        dt = self.dt
        solver = solver or self.multiplier_solver
        cs = self.coupling(t_n + dt)

        def rhs(s: SecondOrderSystem, u0, uh, v0, vh):
            return (s.P + s.C @ (4.0 / dt * uh - 1.0 / dt * u0)
                    + s.M @ (12.0 / dt**2 * uh - 3.0 / dt**2 * u0 + 4.0 / dt * vh - 1.0 / dt * v0))

        u_t, u_b, lam, diag_A = self._couple(
            rhs(self.train, state.u_t, half.u_t, state.v_t, half.v_t),
            rhs(self.bridge, state.u_b, half.u_b, state.v_b, half.v_b),
            self.work.solve_t_full, self.work.solve_b_full, self.work.A_t_full, cs, solver,
        )
        v_t = (state.u_t - 4.0 * half.u_t + 3.0 * u_t) / dt
        v_b = (state.u_b - 4.0 * half.u_b + 3.0 * u_b) / dt
        new = DynamicState(
            u_t=u_t, v_t=v_t, a_t=(state.v_t - 4.0 * half.v_t + 3.0 * v_t) / dt,
            u_b=u_b, v_b=v_b, a_b=(state.v_b - 4.0 * half.v_b + 3.0 * v_b) / dt,
        )
        return new, lam, cs, diag_A

    def step(self, state: DynamicState, t_n: float, solver: Optional[MultiplierSolver] = None) -> BatheStepResult:
        half, lam_h, cs_h, dA_h = self.substep_half(state, t_n, solver)
        new, lam, cs, dA = self.substep_full(state, half, t_n, solver)
        return BatheStepResult(half, lam_h, cs_h, dA_h, new, lam, cs, dA)

    def run(
        self,
        initial: DynamicState,
        lam0: np.ndarray,
        t_end: float,
        unilateral: bool = False,
    ) -> SimulationTrace:
        """
        March from t = 0 to t_end.

        The scheme needs (u, v, a) at t_n only; the bootstrap is the static
        state with wheel velocities following the moving rail and a = 0.
        """
        n_steps = step_count(t_end, self.dt)
        rec = TraceRecorder(n_steps, self.dt, self.train.n_dof, self.bridge.n_dof, self.Lt.shape[0],
                            half_steps=True, unilateral=unilateral)
        rec.record(0, initial, lam0, self.coupling(0.0), self.Lt)

        started = time.perf_counter()
        state = initial
        for i in range(n_steps):
            try:
                res = self.step(state, i * self.dt)
            except (SingularSystemError, LcpRayTermination) as exc:
                raise IntegrationError(self.scheme, i + 1, (i + 1) * self.dt, exc) from exc
            check_finite(res.state, self.scheme, i + 1, (i + 1) * self.dt)
            state = res.state
            rec.record(i + 1, state, res.lam, res.coupling, self.Lt, res.diag_A)
            gap_half = self.Lt @ res.state_half.u_t + res.coupling_half.Lb @ res.state_half.u_b + res.coupling_half.rho
            rec.record_half(i + 1, res.lam_half, gap_half, res.diag_A_half)
            if (i + 1) % LOG_EVERY == 0:
                logger.debug("bathe step %d: residual %.3e", i + 1, rec.residual[i + 1])

        logger.info("Bathe run: %d steps in %.2f s", n_steps, time.perf_counter() - started)
        return rec.finish({"scheme": self.scheme, "dt": self.dt})


def bathe_run(
    train: SecondOrderSystem,
    bridge: SecondOrderSystem,
    Lt: np.ndarray,
    coupling: CouplingFn,
    dt: float,
    t_end: float,
    multiplier_solver: MultiplierSolver = solve_coupling,
    unilateral: bool = False,
) -> SimulationTrace:
    """Static initialization followed by alternating sub-steps up to t_end."""
    initial, lam0 = static_init(train, bridge, Lt, coupling(0.0))
    integrator = BatheIntegrator(train, bridge, Lt, coupling, dt, multiplier_solver)
    return integrator.run(initial, lam0, t_end, unilateral=unilateral)
