"""
VTSI Sim - Bridge Model Module
Euler-Bernoulli beam finite elements, boundary conditions, modal analysis and Rayleigh damping
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.constants import g as GRAVITY

from exceptions import EigenSolverError, ModelError

logger = logging.getLogger(__name__)


# ============================================================================
# CONSTANTS
# ============================================================================

DOFS_PER_NODE = 2          # (w, theta) per node, nodes left to right
SYMMETRY_RTOL = 1e-12
BC_KINDS = ("fixed_ends", "simply_supported")


# ============================================================================
# SHARED SYSTEM TYPE
# ============================================================================

@dataclass(frozen=True, eq=False)
class SecondOrderSystem:
    """
    Linear second-order system M u'' + C u' + K u = P over free DOFs.

    Used for both the train and the bridge. M and K must be symmetric
    within SYMMETRY_RTOL; C may be any square matrix of the same size.
    """
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    P: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        P = np.atleast_1d(np.asarray(self.P, dtype=float))
        n = M.shape[0]

        for name, mat in (("M", M), ("C", C), ("K", K)):
            if mat.shape != (n, n):
                raise ModelError(f"{name} must be {n}x{n}, got {mat.shape}")
        if P.shape != (n,):
            raise ModelError(f"P must have length {n}, got {P.shape}")
        for name, mat in (("M", M), ("K", K)):
            scale = np.linalg.norm(mat)
            if scale > 0 and np.linalg.norm(mat - mat.T) > SYMMETRY_RTOL * scale:
                raise ModelError(f"{name} is not symmetric")

        labels = tuple(self.labels) if self.labels else tuple(f"dof{i}" for i in range(n))
        if len(labels) != n:
            raise ModelError(f"expected {n} DOF labels, got {len(labels)}")

        object.__setattr__(self, "M", M)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "labels", labels)

    @property
    def n_dof(self) -> int:
        return self.M.shape[0]

    def with_damping(self, C: np.ndarray) -> "SecondOrderSystem":
        return replace(self, C=C)

    def with_load(self, P: np.ndarray) -> "SecondOrderSystem":
        return replace(self, P=P)


# ============================================================================
# BEAM ELEMENT
# ============================================================================

@dataclass(frozen=True)
class BeamElement:
    """Prismatic Euler-Bernoulli beam element between two consecutive nodes."""
    length: float
    EI: float
    mu: float
    node_ids: Tuple[int, int]

    def __post_init__(self):
        if not self.length > 0:
            raise ModelError(f"zero-length element between nodes {self.node_ids}")
        if not self.EI > 0:
            raise ModelError(f"flexural rigidity must be positive, got {self.EI}")
        if self.mu < 0:
            raise ModelError(f"mass per length must be non-negative, got {self.mu}")


def element_stiffness(l: float, EI: float) -> np.ndarray:
    """4x4 bending stiffness in (w1, theta1, w2, theta2) ordering."""
    return EI / l**3 * np.array([
        [12.0, 6.0 * l, -12.0, 6.0 * l],
        [6.0 * l, 4.0 * l**2, -6.0 * l, 2.0 * l**2],
        [-12.0, -6.0 * l, 12.0, -6.0 * l],
        [6.0 * l, 2.0 * l**2, -6.0 * l, 4.0 * l**2],
    ])


def element_mass(l: float, mu: float) -> np.ndarray:
    """4x4 consistent (cubic Hermite) mass matrix."""
    return mu * l / 420.0 * np.array([
        [156.0, 22.0 * l, 54.0, -13.0 * l],
        [22.0 * l, 4.0 * l**2, 13.0 * l, -3.0 * l**2],
        [54.0, 13.0 * l, 156.0, -22.0 * l],
        [-13.0 * l, -3.0 * l**2, -22.0 * l, 4.0 * l**2],
    ])


def element_distributed_load(l: float, q: float) -> np.ndarray:
    """Consistent nodal loads of a uniform line load q (N/m, positive up)."""
    return q * np.array([l / 2.0, l**2 / 12.0, l / 2.0, -l**2 / 12.0])


def _check_local_coordinate(a: float, l: float) -> float:
    slack = 1e-12 * l
    if a < -slack or a > l + slack:
        raise ModelError(f"local coordinate a={a} outside [0, {l}]")
    return min(max(a, 0.0), l)


def element_influence(a: float, l: float) -> np.ndarray:
    """
    Nodal forces of a unit point load at distance a from the left node.

    By virtual work the same row dotted with the member-end displacements
    gives the deflection at a.

    Args:
        a: distance from the left node (m), 0 <= a <= l
        l: element length (m)

    Returns:
        [b^2(b+3a)/l^3, a b^2/l^2, a^2(a+3b)/l^3, -a^2 b/l^2] with b = l - a
    """
    a = _check_local_coordinate(a, l)
    b = l - a
    return np.array([
        b * b * (b + 3.0 * a) / l**3,
        a * b * b / l**2,
        a * a * (a + 3.0 * b) / l**3,
        -a * a * b / l**2,
    ])


def element_influence_derivative(a: float, l: float, order: int) -> np.ndarray:
    """First or second derivative of element_influence with respect to a."""
    a = _check_local_coordinate(a, l)
    if order == 1:
        return np.array([
            -6.0 * a * (l - a) / l**3,
            (l - a) * (l - 3.0 * a) / l**2,
            6.0 * a * (l - a) / l**3,
            (3.0 * a * a - 2.0 * a * l) / l**2,
        ])
    if order == 2:
        return np.array([
            (12.0 * a - 6.0 * l) / l**3,
            (6.0 * a - 4.0 * l) / l**2,
            (6.0 * l - 12.0 * a) / l**3,
            (6.0 * a - 2.0 * l) / l**2,
        ])
    raise ValueError(f"derivative order must be 1 or 2, got {order}")


# ============================================================================
# BRIDGE MODEL
# ============================================================================

@dataclass(frozen=True, eq=False)
class BridgeModel:
    """
    Assembled bridge: element chain, node coordinates, boundary-condition mask
    and the reduced SecondOrderSystem over free DOFs.

    bc has one flag per full DOF (2 per node); span_extent is the load-carrying
    region and excludes approach segments. supports lists the x of every
    span boundary.
    """
    elements: Tuple[BeamElement, ...]
    node_x: np.ndarray
    bc: np.ndarray
    system: SecondOrderSystem
    span_extent: Tuple[float, float]
    supports: Tuple[float, ...]
    bc_kind: str
    span_elements: Tuple[int, int]
    rayleigh: Tuple[float, float] = (0.0, 0.0)

    @property
    def n_nodes(self) -> int:
        return len(self.node_x)

    @property
    def n_dof(self) -> int:
        return self.system.n_dof

    @cached_property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.bc)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Full DOF index -> free DOF index, -1 where constrained."""
        index = np.full(self.bc.size, -1, dtype=int)
        index[self.free_dofs] = np.arange(self.free_dofs.size)
        return index

    def element_dofs(self, e: int) -> np.ndarray:
        i, j = self.elements[e].node_ids
        return np.array([2 * i, 2 * i + 1, 2 * j, 2 * j + 1])

    def translation_column(self, node: int) -> int:
        """Free-DOF column of a node's vertical translation, -1 if constrained."""
        return int(self.free_index[DOFS_PER_NODE * node])

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Scatter a free-DOF vector (or rows of them) to full DOF length with zeros."""
        u_free = np.asarray(u_free, dtype=float)
        full = np.zeros(u_free.shape[:-1] + (self.bc.size,))
        full[..., self.free_dofs] = u_free
        return full

    def span_midpoint(self, span: int = 0) -> float:
        return 0.5 * (self.supports[span] + self.supports[span + 1])


def _node_layout(
    spans: Sequence[Tuple[float, int]],
    approach: Optional[Tuple[float, int]],
) -> Tuple[np.ndarray, List[float], int, int]:
    """Node coordinates with the first span starting at x = 0."""
    xs: List[float] = []
    n_left = 0
    if approach is not None:
        length, n = approach
        if n < 1 or not length > 0:
            raise ModelError(f"approach needs positive length and elements, got {approach}")
        xs.extend(np.linspace(-length, 0.0, n + 1)[:-1])
        n_left = n

    supports = [0.0]
    x0 = 0.0
    for length, n in spans:
        if n < 1:
            raise ModelError(f"span needs at least one element, got {n}")
        if not length > 0:
            raise ModelError("zero-length element: span length must be positive")
        xs.extend(np.linspace(x0, x0 + length, n + 1)[:-1])
        x0 += length
        supports.append(x0)
    xs.append(x0)

    n_right = 0
    if approach is not None:
        length, n = approach
        xs.extend(np.linspace(x0, x0 + length, n + 1)[1:])
        n_right = n

    return np.asarray(xs, dtype=float), supports, n_left, n_right


def assemble_bridge(
    spans: Sequence[Tuple[float, int]],
    EI: float,
    mu: float,
    bc_kind: str = "fixed_ends",
    approach: Optional[Tuple[float, int]] = None,
    self_weight: bool = False,
) -> BridgeModel:
    """
    Assemble a continuous multi-span beam bridge.

    Args:
        spans: (length, n_elements) per span, left to right
        EI: flexural rigidity (N m^2)
        mu: mass per unit length (kg/m)
        bc_kind: "fixed_ends" or "simply_supported"; interior supports are always pinned
        approach: optional (length, n_elements) of fully constrained segments at each end
        self_weight: include the bridge self-weight in P

    Returns:
        BridgeModel reduced to free DOFs
    """
    if bc_kind not in BC_KINDS:
        raise ModelError(f"unknown boundary condition '{bc_kind}', expected one of {BC_KINDS}")
    if not spans:
        raise ModelError("bridge needs at least one span")

    node_x, supports, n_left, n_right = _node_layout(spans, approach)
    n_nodes = node_x.size
    elements = tuple(
        BeamElement(node_x[i + 1] - node_x[i], EI, mu, (i, i + 1))
        for i in range(n_nodes - 1)
    )

    n_full = DOFS_PER_NODE * n_nodes
    K = np.zeros((n_full, n_full))
    M = np.zeros((n_full, n_full))
    P = np.zeros(n_full)
    for el in elements:
        i, j = el.node_ids
        dofs = np.array([2 * i, 2 * i + 1, 2 * j, 2 * j + 1])
        K[np.ix_(dofs, dofs)] += element_stiffness(el.length, el.EI)
        M[np.ix_(dofs, dofs)] += element_mass(el.length, el.mu)
        if self_weight:
            P[dofs] += element_distributed_load(el.length, -el.mu * GRAVITY)

    # Boundary conditions
    bc = np.zeros(n_full, dtype=bool)
    first, last = n_left, n_nodes - 1 - n_right
    support_nodes = [int(np.argmin(np.abs(node_x - xs))) for xs in supports]
    for node in support_nodes:
        bc[2 * node] = True
    for node in (first, last):
        if bc_kind == "fixed_ends":
            bc[2 * node + 1] = True
    for node in list(range(first)) + list(range(last + 1, n_nodes)):
        bc[2 * node] = bc[2 * node + 1] = True

    free = np.flatnonzero(~bc)
    if free.size == 0:
        raise ModelError("all DOFs constrained, bridge has no free DOFs")

    labels = tuple(f"n{d // 2}.{'w' if d % 2 == 0 else 'r'}" for d in free)
    system = SecondOrderSystem(
        M=M[np.ix_(free, free)],
        C=np.zeros((free.size, free.size)),
        K=K[np.ix_(free, free)],
        P=P[free],
        labels=labels,
    )

    model = BridgeModel(
        elements=elements,
        node_x=node_x,
        bc=bc,
        system=system,
        span_extent=(node_x[first], node_x[last]),
        supports=tuple(supports),
        bc_kind=bc_kind,
        span_elements=(first, last),
    )
    logger.info(
        "Bridge assembled: %d spans, %d elements, %d free DOFs (%s)",
        len(spans), len(elements), system.n_dof, bc_kind,
    )
    return model


# ============================================================================
# MODAL ANALYSIS & DAMPING
# ============================================================================

def modal_analysis(model: BridgeModel, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lowest k modes of K phi = omega^2 M phi.

    Returns:
        (frequencies in Hz ascending, mass-normalized shapes as columns)
    """
    if k < 1 or k > model.n_dof:
        raise EigenSolverError(f"requested {k} modes from a model with {model.n_dof} DOFs")
    try:
        eigvals, shapes = linalg.eigh(model.system.K, model.system.M, subset_by_index=[0, k - 1])
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"eigen-solve failed: {exc}") from exc
    omega = np.sqrt(np.clip(eigvals, 0.0, None))
    return omega / (2.0 * np.pi), shapes


def natural_frequencies(model: BridgeModel, k: int) -> np.ndarray:
    """Lowest k natural frequencies in Hz."""
    return modal_analysis(model, k)[0]


def rayleigh_coefficients(omega_i: float, omega_j: float, xi: float) -> Tuple[float, float]:
    """Mass and stiffness factors giving damping ratio xi at both circular frequencies."""
    if abs(omega_i - omega_j) <= 1e-9 * max(abs(omega_i), abs(omega_j)):
        raise ModelError(f"repeated frequency pair {omega_i}, {omega_j} rad/s")
    alpha = 2.0 * xi * omega_i * omega_j / (omega_i + omega_j)
    beta = 2.0 * xi / (omega_i + omega_j)
    return alpha, beta


def modal_damping_ratio(alpha: float, beta: float, omega: float) -> float:
    """Damping ratio a Rayleigh matrix produces at circular frequency omega."""
    return 0.5 * (alpha / omega + beta * omega)


def rayleigh_damping(model: BridgeModel, xi: float, mode_pair: Tuple[int, int] = (1, 2)) -> BridgeModel:
    """
    Return a copy of the model with C = alpha M + beta K.

    Args:
        model: assembled bridge
        xi: damping ratio at both reference modes
        mode_pair: 1-based mode numbers
    """
    i, j = mode_pair
    freqs = natural_frequencies(model, max(i, j))
    omega_i, omega_j = 2.0 * np.pi * freqs[i - 1], 2.0 * np.pi * freqs[j - 1]
    alpha, beta = rayleigh_coefficients(omega_i, omega_j, xi)
    C = alpha * model.system.M + beta * model.system.K
    logger.info("Rayleigh damping: xi=%.3f, alpha=%.4g 1/s, beta=%.4g s", xi, alpha, beta)
    return replace(model, system=model.system.with_damping(C), rayleigh=(alpha, beta))


# ============================================================================
# DEAD LOAD
# ============================================================================

def self_weight_load(model: BridgeModel) -> np.ndarray:
    """Consistent nodal self-weight over free DOFs (positive up, so negative)."""
    P = np.zeros(model.bc.size)
    for e, el in enumerate(model.elements):
        P[model.element_dofs(e)] += element_distributed_load(el.length, -el.mu * GRAVITY)
    return P[model.free_dofs]


def dead_load_deflection(model: BridgeModel) -> np.ndarray:
    """Static deflection under self-weight; dynamic bridge traces are measured from it."""
    factor = linalg.cho_factor(model.system.K)
    return linalg.cho_solve(factor, self_weight_load(model))
