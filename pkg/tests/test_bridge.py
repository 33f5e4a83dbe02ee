"""Tests for bridge.py: element matrices, assembly, modes and Rayleigh damping."""

import numpy as np
import pytest

from bridge import (
    SecondOrderSystem, assemble_bridge, dead_load_deflection, element_influence,
    element_influence_derivative, element_mass, element_stiffness, modal_analysis,
    modal_damping_ratio, natural_frequencies, rayleigh_coefficients, rayleigh_damping,
)
from exceptions import EigenSolverError, ModelError
from tests.conftest import EI, MU, SPAN, coarse_bridge


class TestElementMatrices:
    """Hermite beam element"""

    def test_stiffness_is_symmetric_with_two_rigid_modes(self):
        k = element_stiffness(3.0, EI)
        assert np.allclose(k, k.T)
        eig = np.linalg.eigvalsh(k)
        assert np.sum(np.abs(eig) < 1e-6 * eig.max()) == 2

    def test_rigid_translation_carries_element_mass(self):
        m = element_mass(2.5, MU)
        ones = np.array([1.0, 0.0, 1.0, 0.0])
        assert ones @ m @ ones == pytest.approx(MU * 2.5)

    @pytest.mark.parametrize("a", [0.0, 0.3, 1.1, 2.0])
    def test_influence_partition_of_unity(self, a):
        row = element_influence(a, 2.0)
        assert row[0] + row[2] == pytest.approx(1.0, abs=1e-14)

    def test_influence_at_nodes(self):
        assert np.allclose(element_influence(0.0, 4.0), [1.0, 0.0, 0.0, 0.0])
        assert np.allclose(element_influence(4.0, 4.0), [0.0, 0.0, 1.0, 0.0])

    @pytest.mark.parametrize("order", [1, 2])
    def test_derivative_matches_finite_difference(self, order):
        l, a, h = 3.0, 1.2, 1e-5
        lower = element_influence if order == 1 else (lambda x, ll: element_influence_derivative(x, ll, 1))
        fd = (lower(a + h, l) - lower(a - h, l)) / (2 * h)
        assert np.allclose(element_influence_derivative(a, l, order), fd, atol=1e-7)

    def test_local_coordinate_outside_element_raises(self):
        with pytest.raises(ModelError):
            element_influence(2.5, 2.0)

    def test_unsupported_derivative_order_raises(self):
        with pytest.raises(ValueError):
            element_influence_derivative(1.0, 2.0, 3)


class TestAssembly:
    """DOF bookkeeping and boundary conditions"""

    def test_fixed_ends_dof_count(self):
        model = assemble_bridge([(SPAN, 10), (SPAN, 10)], EI, MU, "fixed_ends")
        # 21 nodes, 3 pinned translations, 2 clamped rotations
        assert model.n_dof == 42 - 5

    def test_approach_segments_are_fully_constrained(self):
        model = coarse_bridge(n=10, damping=0.0)
        assert model.n_nodes == 27
        assert model.n_dof == 37
        assert model.node_x[0] == pytest.approx(-9.0)
        assert model.span_extent == pytest.approx((0.0, 60.0))
        assert model.supports == pytest.approx((0.0, 30.0, 60.0))

    def test_simply_supported_keeps_end_rotations(self):
        model = assemble_bridge([(SPAN, 10), (SPAN, 10)], EI, MU, "simply_supported")
        assert model.n_dof == 42 - 3

    def test_matrices_are_symmetric(self, bridge):
        s = bridge.system
        assert np.allclose(s.M, s.M.T)
        assert np.allclose(s.K, s.K.T)

    def test_expand_scatters_zeros_on_constrained_dofs(self, bridge):
        full = bridge.expand(np.ones(bridge.n_dof))
        assert full.size == 2 * bridge.n_nodes
        assert np.all(full[bridge.bc] == 0.0)

    def test_unknown_boundary_condition_raises(self):
        with pytest.raises(ModelError):
            assemble_bridge([(SPAN, 10)], EI, MU, "clamped")

    def test_zero_length_span_raises(self):
        with pytest.raises(ModelError, match="zero-length"):
            assemble_bridge([(0.0, 4)], EI, MU)

    def test_fully_constrained_bridge_raises(self):
        with pytest.raises(ModelError):
            assemble_bridge([(SPAN, 1)], EI, MU, "fixed_ends")

    def test_asymmetric_mass_rejected(self):
        with pytest.raises(ModelError):
            SecondOrderSystem(M=np.array([[1.0, 0.5], [0.0, 1.0]]), C=np.zeros((2, 2)),
                              K=np.eye(2), P=np.zeros(2))


class TestModes:
    """Frequencies of the two-span benchmark bridge"""

    def test_fixed_ends_frequencies(self):
        model = assemble_bridge([(SPAN, 100), (SPAN, 100)], EI, MU, "fixed_ends")
        f = natural_frequencies(model, 2)
        assert f[0] == pytest.approx(7.2, rel=0.02)
        assert f[1] == pytest.approx(10.44, rel=0.02)

    def test_simply_supported_frequencies(self):
        model = assemble_bridge([(SPAN, 100), (SPAN, 100)], EI, MU, "simply_supported")
        f = natural_frequencies(model, 2)
        assert f[0] == pytest.approx(4.61, rel=0.02)
        assert f[1] == pytest.approx(7.2, rel=0.02)

    def test_refinement_changes_shrink(self):
        f1 = [natural_frequencies(assemble_bridge([(SPAN, n), (SPAN, n)], EI, MU, "fixed_ends"), 1)[0]
              for n in (2, 4, 8, 16, 32, 64)]
        changes = np.abs(np.diff(f1))
        assert np.all(np.diff(changes) < 0.0)

    def test_shapes_are_mass_normalized(self, bridge):
        _, shapes = modal_analysis(bridge, 4)
        assert np.allclose(shapes.T @ bridge.system.M @ shapes, np.eye(4), atol=1e-9)

    def test_too_many_modes_raises(self, bridge):
        with pytest.raises(EigenSolverError):
            modal_analysis(bridge, bridge.n_dof + 1)


class TestDamping:
    """Rayleigh damping"""

    def test_reference_modes_get_target_ratio(self):
        model = rayleigh_damping(coarse_bridge(damping=0.0), 0.05)
        alpha, beta = model.rayleigh
        omega = 2 * np.pi * natural_frequencies(model, 2)
        for w in omega:
            assert modal_damping_ratio(alpha, beta, w) == pytest.approx(0.05, rel=1e-10)
        assert np.allclose(model.system.C, alpha * model.system.M + beta * model.system.K)

    def test_repeated_frequencies_raise(self):
        with pytest.raises(ModelError):
            rayleigh_coefficients(10.0, 10.0, 0.05)

    def test_dead_load_sags_midspan(self, bridge):
        u = bridge.expand(dead_load_deflection(bridge))
        mid = int(np.argmin(np.abs(bridge.node_x - bridge.span_midpoint())))
        assert u[2 * mid] < 0.0
