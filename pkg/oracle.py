"""
VTSI Sim - Verification Oracles Module
Fixed-step BDF on the first-order DAE residuals and the direct-coupled (lambda-free) formulation
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from bridge import SecondOrderSystem
from coupling import Coupling
from exceptions import IntegrationError, ModelError, SingularSystemError
from simulation_trace import DynamicState, SimulationTrace, TraceRecorder, step_count
from train import TrainModel, partition

logger = logging.getLogger(__name__)

# Trapezoidal Newmark
NEWMARK_BETA = 0.25
NEWMARK_GAMMA = 0.5
NEWTON_MAX_ITER = 3
NEWTON_RTOL = 1e-10


# ============================================================================
# DAE RESIDUAL
# ============================================================================

@dataclass
class DaeState:
    """y = (u_t, u_b, v_t, v_b) with algebraic multipliers lambda at time t."""
    y: np.ndarray
    lam: np.ndarray
    t: float


class DaeModel:
    """
    Residuals F1..F5 of the coupled first-order system:

        F1 = Mt vt' + Ct vt + Kt ut + Lt' lam - Pt
        F2 = Mb vb' + Cb vb + Kb ub + Lb(t)' lam - Pb
        F3 = ut' - vt
        F4 = ub' - vb
        F5 = Lt ut + Lb(t) ub + rho(t)
    """

    def __init__(self, train: SecondOrderSystem, bridge: SecondOrderSystem, Lt: np.ndarray, coupling):
        self.train = train
        self.bridge = bridge
        self.Lt = np.asarray(Lt, dtype=float)
        self.coupling = coupling
        self.nt, self.nb, self.nw = train.n_dof, bridge.n_dof, self.Lt.shape[0]

    @property
    def n_y(self) -> int:
        return 2 * (self.nt + self.nb)

    def split(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        nt, nb = self.nt, self.nb
        return y[:nt], y[nt:nt + nb], y[nt + nb:2 * nt + nb], y[2 * nt + nb:]

    def pack(self, state: DynamicState) -> np.ndarray:
        return np.concatenate([state.u_t, state.u_b, state.v_t, state.v_b])

    def residual(self, state: DaeState, ydot: np.ndarray) -> Tuple[np.ndarray, ...]:
        cs = self.coupling(state.t)
        ut, ub, vt, vb = self.split(state.y)
        dut, dub, dvt, dvb = self.split(ydot)
        tr, br, lam = self.train, self.bridge, state.lam
        F1 = tr.M @ dvt + tr.C @ vt + tr.K @ ut + self.Lt.T @ lam - tr.P
        F2 = br.M @ dvb + br.C @ vb + br.K @ ub + cs.Lb.T @ lam - br.P
        F3 = dut - vt
        F4 = dub - vb
        F5 = self.Lt @ ut + cs.Lb @ ub + cs.rho
        return F1, F2, F3, F4, F5

    def jacobians(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(dF/dy', dF/dy, dF/dlambda); the system is linear so these are exact."""
        nt, nb, nw = self.nt, self.nb, self.nw
        n = self.n_y
        Lb = self.coupling(t).Lb
        ut, ub = slice(0, nt), slice(nt, nt + nb)
        vt, vb = slice(nt + nb, 2 * nt + nb), slice(2 * nt + nb, n)
        f1, f2, f3, f4 = ut, ub, vt, vb
        f5 = slice(n, n + nw)

        E = np.zeros((n + nw, n))
        E[f1, vt] = self.train.M
        E[f2, vb] = self.bridge.M
        E[f3, ut] = np.eye(nt)
        E[f4, ub] = np.eye(nb)

        J = np.zeros((n + nw, n))
        J[f1, ut] = self.train.K
        J[f1, vt] = self.train.C
        J[f2, ub] = self.bridge.K
        J[f2, vb] = self.bridge.C
        J[f3, vt] = -np.eye(nt)
        J[f4, vb] = -np.eye(nb)
        J[f5, ut] = self.Lt
        J[f5, ub] = Lb

        B = np.zeros((n + nw, nw))
        B[f1] = self.Lt.T
        B[f2] = Lb.T
        return E, J, B


def dae_residual(model: DaeModel, state: DaeState, ydot: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Evaluate F1..F5 at (t, y, y', lambda)."""
    return model.residual(state, ydot)


# ============================================================================
# BDF ORACLE
# ============================================================================

def _bdf_step(
    model: DaeModel,
    y0: np.ndarray,
    lam0: np.ndarray,
    c: float,
    h: np.ndarray,
    t1: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve F(t1, y, c y - h, lambda) = 0 by Newton from (y0, lam0)."""
    n = model.n_y
    E, J, B = model.jacobians(t1)
    jac = np.hstack([c * E + J, B])
    row_scale = 1.0 / np.maximum(np.max(np.abs(jac), axis=1), np.finfo(float).tiny)
    try:
        lu = linalg.lu_factor(row_scale[:, None] * jac)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"BDF step matrix singular at t = {t1:.6g}: {exc}") from exc

    # The residual is linear, so one iteration is exact up to round-off
    y, lam = y0.copy(), lam0.copy()
    for _ in range(NEWTON_MAX_ITER):
        F = np.concatenate(model.residual(DaeState(y, lam, t1), c * y - h))
        delta = linalg.lu_solve(lu, -row_scale * F)
        if not np.all(np.isfinite(delta)):
            raise SingularSystemError(f"BDF step matrix singular at t = {t1:.6g}")
        y += delta[:n]
        lam += delta[n:]
        if np.linalg.norm(delta[:n]) <= NEWTON_RTOL * max(1.0, np.linalg.norm(y)):
            break
    return y, lam


def bdf_solve(
    model: DaeModel,
    initial: DynamicState,
    lam0: np.ndarray,
    dt: float,
    t_end: float,
    order: int = 2,
) -> SimulationTrace:
    """
    Fixed-step BDF1 or BDF2 on the index-3 system, one monolithic solve in
    (y, lambda) per step. BDF2 starts with a single BDF1 step.
    """
    if order not in (1, 2):
        raise ModelError(f"BDF order must be 1 or 2, got {order}")
    scheme = f"oracle-bdf{order}"
    n_steps = step_count(t_end, dt)
    rec = TraceRecorder(n_steps, dt, model.nt, model.nb, model.nw)
    rec.record(0, initial, lam0, model.coupling(0.0), model.Lt)

    started = time.perf_counter()
    history = [model.pack(initial)]
    lam = lam0.copy()
    for i in range(n_steps):
        t1 = (i + 1) * dt
        if order == 1 or i == 0:
            c, h = 1.0 / dt, history[-1] / dt
        else:
            c, h = 1.5 / dt, (4.0 * history[-1] - history[-2]) / (2.0 * dt)
        try:
            y, lam = _bdf_step(model, history[-1], lam, c, h, t1)
        except SingularSystemError as exc:
            raise IntegrationError(scheme, i + 1, t1, exc) from exc

        ut, ub, vt, vb = model.split(y)
        _, _, at, ab = model.split(c * y - h)
        rec.record(i + 1, DynamicState(ut, vt, at, ub, vb, ab), lam, model.coupling(t1), model.Lt)
        history = [history[-1], y]

    logger.info("BDF%d oracle: %d steps in %.2f s", order, n_steps, time.perf_counter() - started)
    return rec.finish({"scheme": scheme, "dt": dt})


# ============================================================================
# DIRECT-COUPLED ORACLE
# ============================================================================

class DirectCoupledSolver:
    """
    Eliminates lambda and the wheel DOFs through u_w = G (Lb u_b + rho),
    G = -inv(Lt_w), and steps the remaining (carriage, bridge) system with
    trapezoidal Newmark, rebuilding the nonsymmetric matrices every step.
    """

    scheme = "oracle-direct"

    def __init__(self, train: TrainModel, bridge: SecondOrderSystem, coupling: Coupling, dt: float):
        if not dt > 0:
            raise ModelError(f"time step must be positive, got {dt}")
        self.train = train
        self.bridge = bridge
        self.coupling = coupling
        self.dt = dt
        self.part = partition(train)
        Lt_w = train.Lt[:, train.wheel_dofs]
        try:
            self.G = -np.linalg.inv(Lt_w)
        except np.linalg.LinAlgError as exc:
            raise ModelError("wheel block of Lt must be invertible for direct coupling") from exc
        self.nc = train.carriage_dofs.size

    def wheel_kinematics(self, t: float, u_b: np.ndarray, v_b: np.ndarray, a_b: np.ndarray):
        """u_w, u_w', u_w'' from the bridge motion at the wheels."""
        r = self.coupling.rates(t)
        G = self.G
        u_w = G @ (r.Lb @ u_b + r.rho)
        v_w = G @ (r.Lb @ v_b + r.Lb_dot @ u_b + r.rho_dot)
        a_w = G @ (r.Lb @ a_b + 2.0 * r.Lb_dot @ v_b + r.Lb_ddot @ u_b + r.rho_ddot)
        return u_w, v_w, a_w

    def matrices(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Modified M, C, K and load of the (carriage, bridge) system at t."""
        p, br = self.part, self.bridge
        r = self.coupling.rates(t)
        L, Ld, Ldd = self.G @ r.Lb, self.G @ r.Lb_dot, self.G @ r.Lb_ddot
        rho, rho_d, rho_dd = self.G @ r.rho, self.G @ r.rho_dot, self.G @ r.rho_ddot

        M = np.block([
            [p.Mcc, p.Mcw @ L],
            [L.T @ p.Mwc, br.M + L.T @ p.Mww @ L],
        ])
        C = np.block([
            [p.Ccc, p.Ccw @ L + 2.0 * p.Mcw @ Ld],
            [L.T @ p.Cwc, br.C + L.T @ p.Cww @ L + 2.0 * L.T @ p.Mww @ Ld],
        ])
        K = np.block([
            [p.Kcc, p.Kcw @ L + p.Ccw @ Ld + p.Mcw @ Ldd],
            [L.T @ p.Kwc, br.K + L.T @ p.Kww @ L + L.T @ p.Cww @ Ld + L.T @ p.Mww @ Ldd],
        ])
        F = np.concatenate([
            p.Pc - p.Mcw @ rho_dd - p.Ccw @ rho_d - p.Kcw @ rho,
            br.P + L.T @ (p.Pw - p.Mww @ rho_dd - p.Cww @ rho_d - p.Kww @ rho),
        ])
        return M, C, K, F

    def _expand(self, t: float, q: np.ndarray, qd: np.ndarray, qdd: np.ndarray) -> Tuple[DynamicState, np.ndarray]:
        """Full train/bridge state and the recovered contact forces."""
        nc, p = self.nc, self.part
        u_c, u_b = q[:nc], q[nc:]
        v_c, v_b = qd[:nc], qd[nc:]
        a_c, a_b = qdd[:nc], qdd[nc:]
        u_w, v_w, a_w = self.wheel_kinematics(t, u_b, v_b, a_b)

        n_t = self.train.n_dof
        c, w = self.train.carriage_dofs, self.train.wheel_dofs
        u_t, v_t, a_t = np.zeros(n_t), np.zeros(n_t), np.zeros(n_t)
        u_t[c], u_t[w] = u_c, u_w
        v_t[c], v_t[w] = v_c, v_w
        a_t[c], a_t[w] = a_c, a_w

        wheel_force = (p.Mwc @ a_c + p.Mww @ a_w + p.Cwc @ v_c + p.Cww @ v_w
                       + p.Kwc @ u_c + p.Kww @ u_w - p.Pw)
        lam = self.G.T @ wheel_force
        return DynamicState(u_t, v_t, a_t, u_b, v_b, a_b), lam

    def run(self, initial: DynamicState, t_end: float) -> SimulationTrace:
        dt, beta, gamma = self.dt, NEWMARK_BETA, NEWMARK_GAMMA
        n_steps = step_count(t_end, dt)
        c = self.train.carriage_dofs
        q = np.concatenate([initial.u_t[c], initial.u_b])
        qd = np.concatenate([initial.v_t[c], initial.v_b])

        M, C, K, F = self.matrices(0.0)
        try:
            qdd = linalg.solve(M, F - C @ qd - K @ q)
        except linalg.LinAlgError as exc:
            raise IntegrationError(self.scheme, 0, 0.0, SingularSystemError("direct-coupled mass matrix singular")) from exc

        rec = TraceRecorder(n_steps, dt, self.train.n_dof, self.bridge.n_dof, self.train.n_wheels)
        state, lam = self._expand(0.0, q, qd, qdd)
        rec.record(0, state, lam, self.coupling(0.0), self.train.Lt)

        started = time.perf_counter()
        for i in range(n_steps):
            t1 = (i + 1) * dt
            M, C, K, F = self.matrices(t1)
            K_eff = K + gamma / (beta * dt) * C + M / (beta * dt**2)
            rhs = (F
                   + M @ (q / (beta * dt**2) + qd / (beta * dt) + (0.5 / beta - 1.0) * qdd)
                   + C @ (gamma / (beta * dt) * q + (gamma / beta - 1.0) * qd
                          + dt * (0.5 * gamma / beta - 1.0) * qdd))
            try:
                q_new = linalg.solve(K_eff, rhs)
            except linalg.LinAlgError as exc:
                raise IntegrationError(self.scheme, i + 1, t1, SingularSystemError("direct-coupled step matrix singular")) from exc
            qdd_new = (q_new - q) / (beta * dt**2) - qd / (beta * dt) - (0.5 / beta - 1.0) * qdd
            qd = qd + dt * ((1.0 - gamma) * qdd + gamma * qdd_new)
            q, qdd = q_new, qdd_new

            state, lam = self._expand(t1, q, qd, qdd)
            rec.record(i + 1, state, lam, self.coupling(t1), self.train.Lt)

        logger.info("Direct-coupled oracle: %d steps in %.2f s", n_steps, time.perf_counter() - started)
        return rec.finish({"scheme": self.scheme, "dt": dt})


def direct_coupled_step(
    train: TrainModel,
    bridge: SecondOrderSystem,
    coupling: Coupling,
    initial: DynamicState,
    dt: float,
    t_end: float,
) -> SimulationTrace:
    """Run the direct-coupled formulation from an initial state."""
    return DirectCoupledSolver(train, bridge, coupling, dt).run(initial, t_end)
