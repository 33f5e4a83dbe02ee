"""Tests for coupling.py: host-element search, Lb(t) and the wheel kinematics."""

import numpy as np
import pytest

from bspline_constraint import assemble_Lb_spline
from coupling import Coupling, assemble_Lb, constraint_residual, influence_row, locate
from exceptions import ModelError
from irregularity import generate
from tests.conftest import coarse_bridge


class TestLocate:
    def test_interior_joint_belongs_to_left_element(self, bridge):
        # element length 3 m, first span element starts at node 3
        e, a = locate(bridge, 6.0)
        assert e == 4
        assert a == pytest.approx(3.0)

    def test_span_start(self, bridge):
        e, a = locate(bridge, 0.0)
        assert e == 3
        assert a == pytest.approx(0.0)

    def test_off_span_returns_none(self, bridge):
        assert locate(bridge, -0.5) is None
        assert locate(bridge, 60.5) is None


class TestInfluenceRows:
    def test_row_at_free_node_is_unit(self, bridge):
        node = int(np.argmin(np.abs(bridge.node_x - 6.0)))
        row = influence_row(bridge, 6.0)
        col = bridge.translation_column(node)
        assert row[col] == pytest.approx(1.0)
        assert np.sum(np.abs(row)) == pytest.approx(1.0)

    def test_row_at_support_is_zero(self, bridge):
        assert np.allclose(influence_row(bridge, 30.0), 0.0)

    def test_translation_weights_sum_to_one(self, bridge):
        row = influence_row(bridge, 13.7)
        w_cols = [i for i, lab in enumerate(bridge.system.labels) if lab.endswith(".w")]
        assert row[w_cols].sum() == pytest.approx(1.0, abs=1e-14)

    def test_off_span_rows_are_zero(self, bridge):
        Lb = assemble_Lb(bridge, [-3.0, 10.0, 65.0])
        assert np.allclose(Lb[0], 0.0)
        assert np.allclose(Lb[2], 0.0)
        assert np.any(Lb[1] != 0.0)


class TestCoupling:
    def test_initial_positions_and_activity(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0)
        state = coupling(0.0)
        assert np.allclose(state.x_w, [-15.0, 0.0])
        assert list(state.active) == [False, True]
        assert np.allclose(state.rho, 0.0)

    def test_entry_and_exit_times(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0)
        times = coupling.entry_exit_times()
        assert times[0] == pytest.approx([15.0 / 110.0, 75.0 / 110.0])
        assert times[1] == pytest.approx([0.0, 60.0 / 110.0])
        assert coupling.clear_time() == pytest.approx(75.0 / 110.0)

    def test_train_at_rest_never_clears(self, one_car, bridge):
        assert Coupling(one_car, bridge, speed=0.0).clear_time() == np.inf

    def test_constraint_residual(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0)
        state = coupling(0.0)
        u_b = np.linspace(-1e-3, 1e-3, bridge.n_dof)
        u_t = np.zeros(one_car.n_dof)
        u_t[one_car.wheel_dofs] = state.Lb @ u_b
        assert np.allclose(constraint_residual(one_car.Lt, u_t, u_b, state), 0.0)

    def test_rates_match_finite_differences(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0)
        t, h = 0.01, 1e-6
        rates = coupling.rates(t)
        fd = (coupling(t + h).Lb - coupling(t - h).Lb) / (2 * h)
        assert np.allclose(rates.Lb_dot, fd, rtol=1e-5, atol=1e-4)

    def test_irregularity_vanishes_off_span(self, one_car, bridge):
        profile = generate(3, params={"n_terms": 200}, domain=(-20.0, 80.0))
        coupling = Coupling(one_car, bridge, speed=110.0, irregularity=profile)
        state = coupling(0.0)
        assert state.rho[0] == 0.0
        late = coupling(0.3)
        assert np.allclose(late.rho, profile(late.x_w))

    def test_bspline_needs_fixed_ends(self, one_car):
        ss = coarse_bridge(bc="simply_supported", approach=False, damping=0.0)
        with pytest.raises(ModelError):
            Coupling(one_car, ss, speed=10.0, interp="bspline")

    def test_bspline_rates_match_finite_differences(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=110.0, position=20.0, interp="bspline")
        t, h = 0.01, 1e-6
        rates = coupling.rates(t)
        fd = (coupling(t + h).Lb - coupling(t - h).Lb) / (2 * h)
        assert np.allclose(rates.Lb, coupling(t).Lb)
        assert np.allclose(rates.Lb_dot, fd, rtol=1e-5, atol=1e-4)
        fd2 = (coupling.rates(t + h).Lb_dot - coupling.rates(t - h).Lb_dot) / (2 * h)
        assert np.allclose(rates.Lb_ddot, fd2, rtol=1e-4, atol=1e-1)

    def test_unknown_interpolation_rejected(self, one_car, bridge):
        with pytest.raises(ModelError):
            Coupling(one_car, bridge, speed=10.0, interp="linear")


class TestJointCrossing:
    """Second x-derivative of the rail seen by a wheel on either side of x0."""

    @staticmethod
    def _bent_shape(bridge):
        rng = np.random.default_rng(7)
        return 1e-3 * rng.normal(size=bridge.n_dof)

    @staticmethod
    def _curvature(bridge, x, u_b, interp):
        if interp == "hermite":
            return influence_row(bridge, x, order=2) @ u_b
        return assemble_Lb_spline(bridge, [x], order=2)[0] @ u_b

    def test_hermite_curvature_jumps_at_joint(self, bridge):
        u_b = self._bent_shape(bridge)
        left, right = (self._curvature(bridge, 6.0 + s, u_b, "hermite") for s in (-1e-9, 1e-9))
        assert abs(right - left) > 1e-6

    @pytest.mark.parametrize("x0", [6.0, 7.25, 23.5, 33.0])
    def test_bspline_curvature_is_continuous(self, bridge, x0):
        # 6.0 and 33.0 are element joints, 7.25 and 23.5 knots of the 27-node spline
        u_b = self._bent_shape(bridge)
        left, right = (self._curvature(bridge, x0 + s, u_b, "bspline") for s in (-1e-9, 1e-9))
        assert abs(right - left) < 1e-8

    def test_hermite_lb_ddot_jumps_when_crossing_a_joint(self, one_car, bridge):
        coupling = Coupling(one_car, bridge, speed=10.0, position=6.0)
        u_b = self._bent_shape(bridge)
        before, after = (coupling.rates(s).Lb_ddot[1] @ u_b for s in (-1e-10, 1e-10))
        assert abs(after - before) > 1e-6

    def test_finite_difference_curvature_has_no_jump_with_bspline(self, bridge):
        u_b = self._bent_shape(bridge)
        d = 1e-3

        def fd2(x, interp):
            rows = assemble_Lb(bridge, [x - d, x, x + d]) if interp == "hermite" else \
                assemble_Lb_spline(bridge, [x - d, x, x + d])
            w = rows @ u_b
            return (w[0] - 2.0 * w[1] + w[2]) / d**2

        hermite_jump = abs(fd2(6.0 + 2 * d, "hermite") - fd2(6.0 - 2 * d, "hermite"))
        spline_jump = abs(fd2(6.0 + 2 * d, "bspline") - fd2(6.0 - 2 * d, "bspline"))
        assert spline_jump < 1e-2 * hermite_jump
