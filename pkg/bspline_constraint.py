"""
VTSI Sim - B-spline Constraint Module
Cubic B-spline influence rows with the bridge nodes as control polygon
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from bridge import BridgeModel
from exceptions import ModelError

SPLINE_ORDER = 4   # cubic, C2 across knots


@dataclass(frozen=True)
class SplineBasisRow:
    """Nonzero basis functions N_{i,k} at one spline parameter."""
    t_param: float
    indices: np.ndarray
    values: np.ndarray


def open_uniform_knots(n_ctrl: int, k: int = SPLINE_ORDER, t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
    """Open uniform knot vector: k-fold end knots, n_ctrl + k entries."""
    if n_ctrl < k:
        raise ModelError(f"{n_ctrl} control points are too few for order {k}")
    return np.concatenate([
        np.full(k - 1, t0),
        np.linspace(t0, t1, n_ctrl - k + 2),
        np.full(k - 1, t1),
    ])


def _check_parameter(knots: np.ndarray, t: float) -> None:
    if t < knots[0] or t > knots[-1]:
        raise ModelError(f"parameter {t} outside knot span [{knots[0]}, {knots[-1]}]")


def bspline_basis(knots: Sequence[float], i: int, k: int, t: float) -> float:
    """
    Cox-de Boor recursion for N_{i,k}(t) with the convention 0/0 = 0.

    The last nonempty knot interval is closed at its right end so the
    basis still sums to one at t = t_max.
    """
    knots = np.asarray(knots, dtype=float)
    _check_parameter(knots, t)
    if k == 1:
        lo, hi = knots[i], knots[i + 1]
        if lo <= t < hi:
            return 1.0
        return 1.0 if (t == knots[-1] and lo < hi == knots[-1]) else 0.0

    value = 0.0
    den = knots[i + k - 1] - knots[i]
    if den > 0:
        value += (t - knots[i]) / den * bspline_basis(knots, i, k - 1, t)
    den = knots[i + k] - knots[i + 1]
    if den > 0:
        value += (knots[i + k] - t) / den * bspline_basis(knots, i + 1, k - 1, t)
    return value


def basis_row(knots: np.ndarray, k: int, t: float) -> SplineBasisRow:
    """The k nonzero basis values at t by the triangular de Boor scheme."""
    _check_parameter(knots, t)
    p = k - 1
    span = _span(knots, k, t)

    N = np.zeros(k)
    left = np.zeros(k)
    right = np.zeros(k)
    N[0] = 1.0
    for j in range(1, k):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            temp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N[j] = saved
    return SplineBasisRow(t_param=t, indices=np.arange(span - p, span + 1), values=N)


def _span(knots: np.ndarray, k: int, t: float) -> int:
    """Index of the nonempty knot interval holding t; t_max closes the last one."""
    p = k - 1
    n_ctrl = knots.size - k
    if t >= knots[n_ctrl]:
        return n_ctrl - 1
    return int(np.clip(np.searchsorted(knots, t, side="right") - 1, p, n_ctrl - 1))


def basis_derivatives(knots: np.ndarray, k: int, t: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    The k nonzero basis functions at t and their parameter derivatives up to order n.

    Returns:
        (indices, ders) with ders[d, j] = d^d N_{indices[j],k} / dt^d
    """
    _check_parameter(knots, t)
    p = k - 1
    span = _span(knots, k, t)

    # ndu: basis values in the upper triangle, knot differences in the lower one
    ndu = np.zeros((k, k))
    left = np.zeros(k)
    right = np.zeros(k)
    ndu[0, 0] = 1.0
    for j in range(1, k):
        left[j] = t - knots[span + 1 - j]
        right[j] = knots[span + j] - t
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, k))
    ders[0] = ndu[:, p]
    a = np.zeros((2, k))
    for r in range(k):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for d in range(1, min(n, p) + 1):
            value = 0.0
            rd, pd = r - d, p - d
            if r >= d:
                a[s2, 0] = a[s1, 0] / ndu[pd + 1, rd]
                value = a[s2, 0] * ndu[rd, pd]
            j1 = 1 if rd >= -1 else -rd
            j2 = d - 1 if r - 1 <= pd else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pd + 1, rd + j]
                value += a[s2, j] * ndu[rd + j, pd]
            if r <= pd:
                a[s2, d] = -a[s1, d - 1] / ndu[pd + 1, r]
                value += a[s2, d] * ndu[r, pd]
            ders[d, r] = value
            s1, s2 = s2, s1

    factor = float(p)
    for d in range(1, min(n, p) + 1):
        ders[d] *= factor
        factor *= p - d
    return np.arange(span - p, span + 1), ders


def check_spline_support(model: BridgeModel) -> None:
    """B-spline rows need clamped ends; simply supported bridges are rejected."""
    if model.bc_kind != "fixed_ends":
        raise ModelError("B-spline constraint interpolation requires fixed ends")
    if model.n_nodes < SPLINE_ORDER:
        raise ModelError(f"B-spline needs at least {SPLINE_ORDER} bridge nodes")


def spline_parameter(model: BridgeModel, x: float) -> float:
    """Chord-length map of x onto [0, 1] over the full node range."""
    x_first, x_last = model.node_x[0], model.node_x[-1]
    return (x - x_first) / (x_last - x_first)


def assemble_Lb_spline(model: BridgeModel, positions: Sequence[float], order: int = 0) -> np.ndarray:
    """
    Influence matrix from the cubic B-spline through the nodal translations,
    or its first/second x-derivative.

    Rotation columns stay zero; positions outside the node range give zero rows.
    """
    check_spline_support(model)
    positions = np.atleast_1d(positions)
    knots = open_uniform_knots(model.n_nodes)
    chord = float(model.node_x[-1] - model.node_x[0])
    Lb = np.zeros((positions.size, model.n_dof))
    for i, x in enumerate(positions):
        if x < model.node_x[0] or x > model.node_x[-1]:
            continue
        t = spline_parameter(model, float(x))
        if order == 0:
            row = basis_row(knots, SPLINE_ORDER, t)
            indices, values = row.indices, row.values
        else:
            indices, ders = basis_derivatives(knots, SPLINE_ORDER, t, order)
            values = ders[order] / chord**order
        for node, value in zip(indices, values):
            col = model.translation_column(int(node))
            if col >= 0:
                Lb[i, col] += value
    return Lb
