"""Tests for integrate_bauchau.py: static initialization and the mid-step scheme."""

import numpy as np
import pytest
from scipy.constants import g

from bridge import SecondOrderSystem
from coupling import Coupling
from exceptions import IntegrationError, SingularSystemError
from integrate_bathe import BatheIntegrator
from integrate_bauchau import BauchauIntegrator, factorize, rolling_start, solve_coupling, static_init
from metrics import mechanical_energy
from simulation_trace import DynamicState
from tests.conftest import RigidGround, car, coarse_bridge
from train import build_train


def _static(train, bridge, coupling):
    return static_init(train.system, bridge.system, train.Lt, coupling(0.0))


class TestLinearAlgebra:
    def test_factorize_spd_and_general(self):
        rng = np.random.default_rng(0)
        B = rng.normal(size=(5, 5))
        b = rng.normal(size=5)
        for A in (B @ B.T + 5 * np.eye(5), B + 5 * np.eye(5)):
            assert np.allclose(A @ factorize(A)(b), b)

    def test_singular_coupling_matrix_raises(self):
        with pytest.raises(SingularSystemError):
            solve_coupling(np.ones((2, 2)), np.ones(2))

    def test_empty_coupling_system(self):
        assert solve_coupling(np.zeros((0, 0)), np.zeros(0)).size == 0


class TestStaticInit:
    @pytest.mark.parametrize("position", [0.0, 20.0, 47.5])
    def test_each_wheel_carries_half_the_car(self, one_car, bridge, car_spec, position):
        coupling = Coupling(one_car, bridge, speed=110.0, position=position)
        state, lam = _static(one_car, bridge, coupling)
        assert lam == pytest.approx([g * (0.5 * car_spec.m_c + car_spec.m_w)] * 2, rel=1e-9)
        assert np.sum(lam) == pytest.approx(one_car.total_weight, rel=1e-9)
        assert np.all(state.v_t == 0.0)

    def test_static_state_satisfies_constraint(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0)
        state, _ = _static(one_car, bridge, coupling)
        cs = coupling(0.0)
        gap = one_car.Lt @ state.u_t + cs.Lb @ state.u_b + cs.rho
        assert np.max(np.abs(gap)) < 1e-12

    def test_off_span_wheel_is_pinned(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=0.0)
        state, _ = _static(one_car, bridge, coupling)
        # rear wheel sits on the approach, front wheel on the support
        assert state.u_t[one_car.wheel_dofs] == pytest.approx([0.0, 0.0], abs=1e-12)


class TestBauchauScheme:
    def test_equilibrium_is_preserved(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=0.0, position=20.0)
        initial, lam0 = _static(one_car, bridge, coupling)
        trace = BauchauIntegrator(one_car.system, bridge.system, one_car.Lt, coupling, 1e-3).run(initial, lam0, 0.05)
        scale = np.max(np.abs(initial.u_b))
        assert np.max(np.abs(trace.bridge_u - initial.u_b)) <= 1e-8 * scale
        assert np.allclose(trace.lam[1:], lam0, rtol=1e-8)

    def test_constraint_holds_at_every_step(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0)
        initial, lam0 = _static(one_car, bridge, coupling)
        trace = BauchauIntegrator(one_car.system, bridge.system, one_car.Lt, coupling, 1e-3).run(initial, lam0, 0.3)
        assert trace.n_steps == 300
        assert np.max(trace.residual) < 1e-10
        assert trace.metadata["scheme"] == "bauchau"

    def test_wheels_track_prescribed_profile_on_rigid_ground(self, one_car, dummy_bridge):
        rho = lambda t: 1e-3 * np.sin(2 * np.pi * 3.0 * t) * np.ones(2)
        ground = RigidGround(2, 1, rho)
        initial = DynamicState.zeros(one_car.n_dof, 1)
        trace = BauchauIntegrator(one_car.system, dummy_bridge, one_car.Lt, ground, 1e-3).run(
            initial, np.zeros(2), 0.5)
        expected = np.array([rho(t) for t in trace.t])
        assert np.allclose(trace.train_u[:, one_car.wheel_dofs], expected, atol=1e-12)

    def test_carriage_heave_matches_closed_form(self, dummy_bridge):
        spec = car(m_w=0.0, c_s=0.0)
        train = build_train([spec])
        initial = DynamicState.zeros(train.n_dof, 1)
        trace = BauchauIntegrator(train.system, dummy_bridge, train.Lt, RigidGround(2, 1), 1e-3).run(
            initial, np.zeros(2), 1.0)
        omega = np.sqrt(2 * spec.k_s / spec.m_c)
        u_static = -spec.m_c * g / (2 * spec.k_s)
        exact = u_static * (1 - np.cos(omega * trace.t))
        assert np.allclose(trace.train_u[:, 0], exact, atol=1e-3 * abs(u_static))

    def test_energy_is_conserved_with_frozen_constraint(self):
        self._check_energy(n_steps=2000, tol=1e-9)

    @pytest.mark.slow
    def test_energy_over_long_run(self):
        self._check_energy(n_steps=100_000, tol=1e-6)

    @staticmethod
    def _check_energy(n_steps: int, tol: float):
        train = build_train([car(c_s=0.0)])
        bridge = coarse_bridge(n=4, damping=0.0)
        coupling = Coupling(train, bridge, speed=0.0, position=22.0)
        dt = 1e-3
        initial = DynamicState.zeros(train.n_dof, bridge.n_dof)
        trace = BauchauIntegrator(train.system, bridge.system, train.Lt, coupling, dt).run(
            initial, np.zeros(2), n_steps * dt)
        energy = (mechanical_energy(train.system, trace.train_u, trace.train_v)
                  + mechanical_energy(bridge.system, trace.bridge_u, trace.bridge_v))
        kinetic = (0.5 * np.einsum("ij,jk,ik->i", trace.train_v, train.system.M, trace.train_v)
                   + 0.5 * np.einsum("ij,jk,ik->i", trace.bridge_v, bridge.system.M, trace.bridge_v))
        assert np.max(np.abs(energy - energy[0])) <= tol * np.max(kinetic)

    def test_dependent_constraints_abort_with_step(self, bridge):
        train = build_train([car(), car()], gaps=[0.0], shared_dofs=[("car1.wheel2", "car2.wheel1")])
        coupling = Coupling(train, bridge, speed=10.0, position=40.0)
        initial = DynamicState.zeros(train.n_dof, bridge.n_dof)
        integrator = BauchauIntegrator(train.system, bridge.system, train.Lt, coupling, 1e-3)
        with pytest.raises(IntegrationError) as info:
            integrator.run(initial, np.zeros(train.n_wheels), 0.01)
        assert info.value.step == 1
        assert info.value.scheme == "bauchau"
        assert isinstance(info.value.cause, SingularSystemError)


class TestUnconstrainedLimit:
    """Without wheels the mid-step scheme is trapezoidal Newmark."""

    @staticmethod
    def _system():
        rng = np.random.default_rng(4)
        B = rng.normal(size=(3, 3))
        M = B @ B.T + 3.0 * np.eye(3)
        K = 400.0 * (np.diag([2.0, 3.0, 5.0]) + 0.1 * np.ones((3, 3)))
        C = 0.5 * np.eye(3) + np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
        return SecondOrderSystem(M=M, C=C, K=K, P=np.array([1.0, -2.0, 0.5]))

    @staticmethod
    def _newmark(system, u0, v0, dt, n_steps, beta=0.25, gamma=0.5):
        M, C, K, P = system.M, system.C, system.K, system.P
        u, v = u0.copy(), v0.copy()
        a = np.linalg.solve(M, P - C @ v - K @ u)
        K_eff = K + gamma / (beta * dt) * C + M / (beta * dt**2)
        us, vs = [u.copy()], [v.copy()]
        for _ in range(n_steps):
            rhs = (P + M @ (u / (beta * dt**2) + v / (beta * dt) + (0.5 / beta - 1.0) * a)
                   + C @ (gamma / (beta * dt) * u + (gamma / beta - 1.0) * v + dt * (0.5 * gamma / beta - 1.0) * a))
            u_new = np.linalg.solve(K_eff, rhs)
            a_new = (u_new - u) / (beta * dt**2) - v / (beta * dt) - (0.5 / beta - 1.0) * a
            v = v + dt * ((1.0 - gamma) * a + gamma * a_new)
            u, a = u_new, a_new
            us.append(u.copy())
            vs.append(v.copy())
        return np.array(us), np.array(vs)

    def test_factorize_reads_the_whole_nonsymmetric_matrix(self):
        A = np.array([[4.0, 1.0], [3.0, 5.0]])
        b = np.array([1.0, 2.0])
        assert np.allclose(factorize(A)(b), np.linalg.solve(A, b), rtol=1e-14)

    def test_matches_trapezoidal_newmark(self, dummy_bridge):
        system = self._system()
        u0, v0 = np.array([1e-3, -2e-3, 5e-4]), np.array([0.1, 0.0, -0.05])
        dt, n_steps = 1e-2, 200
        initial = DynamicState(u0.copy(), v0.copy(), np.zeros(3), np.zeros(1), np.zeros(1), np.zeros(1))
        trace = BauchauIntegrator(system, dummy_bridge, np.zeros((0, 3)), RigidGround(0, 1), dt).run(
            initial, np.zeros(0), n_steps * dt)
        us, vs = self._newmark(system, u0, v0, dt, n_steps)
        assert np.allclose(trace.train_u, us, rtol=1e-10, atol=1e-13)
        assert np.allclose(trace.train_v, vs, rtol=1e-10, atol=1e-11)


class TestRelaxationToStatics:
    def test_damped_run_settles_on_static_state(self):
        train = build_train([car(c_s=7e5)])
        bridge = coarse_bridge(n=4)
        coupling = Coupling(train, bridge, speed=0.0, position=22.0)
        static, lam_static = _static(train, bridge, coupling)
        initial = DynamicState.zeros(train.n_dof, bridge.n_dof)
        trace = BatheIntegrator(train.system, bridge.system, train.Lt, coupling, 5e-3).run(
            initial, np.zeros(train.n_wheels), 10.0)
        scale = np.max(np.abs(static.u_b))
        assert np.max(np.abs(trace.bridge_u[-1] - static.u_b)) < 1e-6 * scale
        assert np.allclose(trace.train_u[-1], static.u_t, rtol=1e-6, atol=1e-9)
        assert np.allclose(trace.lam[-1], lam_static, rtol=1e-6)


class TestRollingStart:
    def test_wheel_velocities_follow_the_deflected_rail(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0)
        static, _ = _static(one_car, bridge, coupling)
        rates = coupling.rates(0.0)
        state = rolling_start(static, one_car.Lt, rates)
        velocity_gap = one_car.Lt @ state.v_t + rates.Lb_dot @ state.u_b + rates.rho_dot
        assert np.max(np.abs(velocity_gap)) < 1e-14
        assert np.all(state.v_t[one_car.carriage_dofs] == 0.0)
        assert np.any(state.v_t[one_car.wheel_dofs] != 0.0)
        assert np.all(static.v_t == 0.0)

    def test_front_wheel_on_fixed_end_starts_at_rest(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=0.0)
        static, _ = _static(one_car, bridge, coupling)
        state = rolling_start(static, one_car.Lt, coupling.rates(0.0))
        assert np.allclose(state.v_t, 0.0, atol=1e-15)
