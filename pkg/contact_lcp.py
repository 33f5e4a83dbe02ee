"""
VTSI Sim - Contact LCP Module
Unilateral wheel-bridge contact: Lemke pivoting on A lambda - rho_bar >= 0, lambda >= 0, complementarity
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from exceptions import LcpRayTermination
from integrate_bathe import BatheIntegrator, BatheStepResult
from simulation_trace import DynamicState

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12


# ============================================================================
# PROBLEM TYPE
# ============================================================================

@dataclass(frozen=True, eq=False)
class LcpProblem:
    """
    Find z >= 0 with w = A z - q >= 0 and z'w = 0.

    z is the contact force vector, w the separation gap expressed through A.
    """
    A: np.ndarray
    q: np.ndarray
    z: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    pivots: int = 0

    @property
    def solved(self) -> bool:
        return self.z is not None


def complementarity_error(A: np.ndarray, q: np.ndarray, z: np.ndarray) -> float:
    """max_i |min(z_i, w_i / A_ii)| in the units of z."""
    if z.size == 0:
        return 0.0
    w = A @ z - q
    return float(np.max(np.abs(np.minimum(z, w / np.diag(A)))))


# ============================================================================
# LEMKE
# ============================================================================

def _lexico_row(T: np.ndarray, rows: np.ndarray, col: int, rhs: int, n: int, artificial_row: Optional[int]) -> int:
    """Lexicographic minimum ratio test over candidate rows."""
    ratios = T[rows, rhs] / T[rows, col]
    best = ratios.min()
    rows = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
    if artificial_row is not None and artificial_row in rows:
        return artificial_row
    # Ties broken column by column on B^-1, which sits in the w columns
    for j in range(n):
        if rows.size == 1:
            break
        ratios = T[rows, j] / T[rows, col]
        best = ratios.min()
        rows = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
    return int(rows[0])


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    piv = T[r] / T[r, c]
    T -= np.outer(T[:, c], piv)
    T[r] = piv


def lcp_solve(A: np.ndarray, q: np.ndarray, max_pivots: Optional[int] = None) -> LcpProblem:
    """
    Lemke's complementary pivoting with covering vector e and lexicographic
    degeneracy resolution.

    Args:
        A: n x n matrix (wheel coupling matrix, possibly slightly nonsymmetric)
        q: n-vector (rho_bar)
        max_pivots: pivot limit, default 50 (n + 1)^2

    Returns:
        solved LcpProblem

    Raises:
        LcpRayTermination: secondary ray or pivot limit reached
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.size
    if n == 0:
        return LcpProblem(A=A, q=q, z=np.zeros(0), w=np.zeros(0))

    scale = float(np.max(np.diag(A)))
    if not scale > 0:
        scale = float(np.max(np.abs(A))) or 1.0
    M = A / scale
    q_std = -q / scale          # standard form w = M z + q_std

    if np.all(q_std >= 0):
        z = np.zeros(n)
        return LcpProblem(A=A, q=q, z=z, w=A @ z - q)

    max_pivots = max_pivots or 50 * (n + 1) ** 2
    # Columns: w (0..n-1), z (n..2n-1), z0 (2n), rhs (2n+1)
    T = np.hstack([np.eye(n), -M, -np.ones((n, 1)), q_std[:, None]])
    z0, rhs = 2 * n, 2 * n + 1
    basis: List[int] = list(range(n))

    r = int(np.argmin(q_std))
    _pivot(T, r, z0)
    leaving, basis[r] = basis[r], z0
    pivots = 1

    while True:
        entering = leaving + n if leaving < n else leaving - n
        col = T[:, entering]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise LcpRayTermination("Lemke's method ended on a secondary ray", pivots)
        artificial_row = basis.index(z0) if z0 in basis else None
        r = _lexico_row(T, rows, entering, rhs, n, artificial_row)
        _pivot(T, r, entering)
        leaving, basis[r] = basis[r], entering
        pivots += 1
        if leaving == z0:
            break
        if pivots >= max_pivots:
            raise LcpRayTermination(f"Lemke's method exceeded {max_pivots} pivots", pivots)

    values = np.zeros(2 * n + 1)
    values[basis] = T[:, rhs]
    z = np.maximum(values[n:2 * n], 0.0)
    logger.debug("LCP solved in %d pivots, %d active contacts", pivots, int(np.count_nonzero(z)))
    return LcpProblem(A=A, q=q, z=z, w=A @ z - q, pivots=pivots)


# ============================================================================
# BATHE COUPLING HOOK
# ============================================================================

def contact_multipliers(A: np.ndarray, rho_bar: np.ndarray) -> np.ndarray:
    """Multiplier solver for BatheIntegrator under unilateral contact."""
    return lcp_solve(A, rho_bar).z


def bathe_lcp_step(integrator: BatheIntegrator, state: DynamicState, t_n: float) -> BatheStepResult:
    """
    One Bathe step with both coupling solves replaced by lcp_solve.

    Separated wheels (lambda_i = 0) follow free dynamics and keep gap <= 0.
    """
    return integrator.step(state, t_n, solver=contact_multipliers)
