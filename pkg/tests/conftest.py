"""Shared fixtures: a coarse two-span bridge and the single-car train used across suites."""

from __future__ import annotations

import numpy as np
import pytest

from bridge import SecondOrderSystem, assemble_bridge, rayleigh_damping
from coupling import CouplingState
from train import CarSpec, build_train

# Two 30 m spans, section of the fixed/simply supported benchmark bridge
SPAN = 30.0
EI = 29e9 * 8.65
MU = 36000.0


def car(m_w: float = 1000.0, c_s: float = 27386.0) -> CarSpec:
    return CarSpec(m_c=60000.0, I_c=1.125e6, m_w=m_w, k_s=5e6, c_s=c_s, l_c=15.0, l_ct=20.0)


def coarse_bridge(n: int = 10, bc: str = "fixed_ends", approach: bool = True, damping: float = 0.05):
    model = assemble_bridge(
        [(SPAN, n), (SPAN, n)], EI=EI, mu=MU, bc_kind=bc,
        approach=(3 * SPAN / n, 3) if approach else None,
    )
    return rayleigh_damping(model, damping) if damping > 0 else model


class RigidGround:
    """Coupling stand-in: wheels pinned to a prescribed profile rho(t), bridge untouched."""

    def __init__(self, n_wheels: int, n_bridge: int, rho=None):
        self.n_wheels = n_wheels
        self.n_bridge = n_bridge
        self.rho = rho or (lambda t: np.zeros(n_wheels))

    def __call__(self, t: float) -> CouplingState:
        return CouplingState(
            t=t,
            x_w=np.zeros(self.n_wheels),
            active=np.ones(self.n_wheels, dtype=bool),
            Lb=np.zeros((self.n_wheels, self.n_bridge)),
            rho=np.asarray(self.rho(t), dtype=float),
        )


@pytest.fixture
def bridge():
    return coarse_bridge()


@pytest.fixture
def car_spec():
    return car()


@pytest.fixture
def one_car(car_spec):
    return build_train([car_spec])


@pytest.fixture
def dummy_bridge():
    """One-DOF stand-in for tests that keep the train on rigid ground."""
    return SecondOrderSystem(M=np.eye(1), C=np.zeros((1, 1)), K=np.eye(1), P=np.zeros(1))
