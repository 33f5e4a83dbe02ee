"""
VTSI Sim - Train Model Module
Rigid-bar car models, multi-car block assembly, articulation and matrix import
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.constants import g as GRAVITY

from bridge import SecondOrderSystem
from exceptions import ModelError

logger = logging.getLogger(__name__)

DofRef = Union[int, str]


# ============================================================================
# CAR SPECIFICATION
# ============================================================================

@dataclass(frozen=True)
class CarSpec:
    """
    One car: carriage (heave + pitch) on two suspended wheels.

    Masses in kg, inertia in kg m^2, stiffness/damping per suspension,
    l_c is the wheel-to-wheel distance and l_ct the total car length.
    """
    m_c: float
    I_c: float
    m_w: float
    k_s: float
    c_s: float
    l_c: float
    l_ct: float
    n_wheels: int = 2

    def __post_init__(self):
        if min(self.m_c, self.I_c, self.m_w) < 0:
            raise ModelError("car masses and inertia must be non-negative")
        if not self.k_s > 0:
            raise ModelError(f"suspension stiffness must be positive, got {self.k_s}")
        if self.c_s < 0:
            raise ModelError(f"suspension damping must be non-negative, got {self.c_s}")
        if not self.l_c > 0:
            raise ModelError(f"wheel distance must be positive, got {self.l_c}")
        if self.l_ct < self.l_c:
            raise ModelError(f"car length {self.l_ct} shorter than wheel distance {self.l_c}")
        if self.n_wheels != 2:
            raise ModelError("only two-wheel cars are supported")

    @property
    def mass(self) -> float:
        return self.m_c + self.n_wheels * self.m_w


def suspension_damping(xi: float, k_s: float, m_c: float) -> float:
    """
    Suspension damping for ratio xi, each suspension carrying a quarter of the carriage.

    Returns 2 xi sqrt(k_s m_c / 4); 27.4 kN s/m for k_s = 5 MN/m, m_c = 60 t, xi = 5%.
    """
    return float(2.0 * xi * np.sqrt(k_s * m_c / 4.0))


# ============================================================================
# TRAIN MODEL
# ============================================================================

@dataclass(frozen=True, eq=False)
class TrainModel:
    """
    Assembled train with its wheel influence matrix.

    Lt has one row per wheel with -1 on that wheel's vertical DOF (vertical
    axis positive up, so Lt u + Lb u = -rho reads u_wheel = Lb u + rho).
    Wheels are numbered from the rearmost one; wheel_offsets are measured
    from wheel #1 and ascend toward the front.
    """
    system: SecondOrderSystem
    Lt: np.ndarray
    wheel_offsets: np.ndarray
    carriage_dofs: np.ndarray
    wheel_dofs: np.ndarray
    length: float = 0.0

    @property
    def n_wheels(self) -> int:
        return self.Lt.shape[0]

    @property
    def n_dof(self) -> int:
        return self.system.n_dof

    @property
    def total_weight(self) -> float:
        return float(-np.sum(self.system.P))

    def dof(self, label: str) -> int:
        try:
            return self.system.labels.index(label)
        except ValueError:
            raise ModelError(f"unknown train DOF '{label}'") from None


def build_car(spec: CarSpec, index: int = 1) -> TrainModel:
    """
    4-DOF car: carriage heave, carriage pitch, rear wheel, front wheel.

    Suspension elongation at lever arm s is u_c + s*theta - u_w with
    s = -l_c/2 (rear) and +l_c/2 (front).
    """
    s = np.array([-0.5 * spec.l_c, 0.5 * spec.l_c])

    # Coupling pattern shared by stiffness and damping
    pattern = np.array([
        [2.0, 0.0, -1.0, -1.0],
        [0.0, s @ s, -s[0], -s[1]],
        [-1.0, -s[0], 1.0, 0.0],
        [-1.0, -s[1], 0.0, 1.0],
    ])
    M = np.diag([spec.m_c, spec.I_c, spec.m_w, spec.m_w])
    P = -GRAVITY * np.array([spec.m_c, 0.0, spec.m_w, spec.m_w])
    labels = (f"car{index}.heave", f"car{index}.pitch", f"car{index}.wheel1", f"car{index}.wheel2")

    system = SecondOrderSystem(M=M, C=spec.c_s * pattern, K=spec.k_s * pattern, P=P, labels=labels)
    Lt = np.array([[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -1.0]])
    return TrainModel(
        system=system,
        Lt=Lt,
        wheel_offsets=np.array([0.0, spec.l_c]),
        carriage_dofs=np.array([0, 1]),
        wheel_dofs=np.array([2, 3]),
        length=spec.l_ct,
    )


def _merge_map(n: int, pairs: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Root DOF of every DOF after merging the listed pairs (union-find)."""
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise ModelError(f"articulation merges DOF {a} with itself or forms a cycle")
        parent[rb] = ra
    return np.array([find(i) for i in range(n)])


def _resolve_dof(ref: DofRef, labels: Sequence[str]) -> int:
    if isinstance(ref, str):
        if ref not in labels:
            raise ModelError(f"unknown DOF '{ref}' in articulation map")
        return labels.index(ref)
    if not 0 <= ref < len(labels):
        raise ModelError(f"DOF index {ref} out of range")
    return int(ref)


def build_train(
    cars: Sequence[CarSpec],
    gaps: Optional[Sequence[float]] = None,
    shared_dofs: Optional[Sequence[Tuple[DofRef, DofRef]]] = None,
) -> TrainModel:
    """
    Assemble cars listed rear to front into one block-diagonal train.

    Args:
        cars: car specifications, rear car first
        gaps: distance between the front wheel of car j and the rear wheel of car j+1;
              defaults to the sum of the facing overhangs (l_ct - l_c)/2
        shared_dofs: pairs of DOFs (index or label) merged by summing rows and columns

    Returns:
        TrainModel with wheel offsets measured from the rearmost wheel
    """
    if not cars:
        raise ModelError("train needs at least one car")
    if gaps is None:
        gaps = [0.5 * (a.l_ct - a.l_c) + 0.5 * (b.l_ct - b.l_c) for a, b in zip(cars[:-1], cars[1:])]
    if len(gaps) != len(cars) - 1:
        raise ModelError(f"expected {len(cars) - 1} gaps, got {len(gaps)}")
    if any(g < 0 for g in gaps):
        raise ModelError("inter-car gaps must be non-negative")

    parts = [build_car(spec, index=j + 1) for j, spec in enumerate(cars)]
    M = linalg.block_diag(*(p.system.M for p in parts))
    C = linalg.block_diag(*(p.system.C for p in parts))
    K = linalg.block_diag(*(p.system.K for p in parts))
    Lt = linalg.block_diag(*(p.Lt for p in parts))
    P = np.concatenate([p.system.P for p in parts])
    labels: List[str] = [lab for p in parts for lab in p.system.labels]

    offsets: List[float] = []
    x = 0.0
    for j, spec in enumerate(cars):
        offsets.extend([x, x + spec.l_c])
        x += spec.l_c + (gaps[j] if j < len(gaps) else 0.0)

    dof_base = np.cumsum([0] + [p.n_dof for p in parts])[:-1]
    carriage = np.concatenate([base + p.carriage_dofs for base, p in zip(dof_base, parts)])
    wheels = np.concatenate([base + p.wheel_dofs for base, p in zip(dof_base, parts)])
    length = float(sum(spec.l_ct for spec in cars))

    if shared_dofs:
        pairs = [(_resolve_dof(a, labels), _resolve_dof(b, labels)) for a, b in shared_dofs]
        root = _merge_map(len(labels), pairs)
        kept = np.unique(root)
        if any(r in wheels for r in root[carriage]) or any(r in carriage for r in root[wheels]):
            raise ModelError("articulation may not merge carriage and wheel DOFs")

        new_index = {int(r): i for i, r in enumerate(kept)}
        T = np.zeros((len(labels), kept.size))
        for i, r in enumerate(root):
            T[i, new_index[int(r)]] = 1.0
        merged: Dict[int, List[str]] = {}
        for i, r in enumerate(root):
            merged.setdefault(int(r), []).append(labels[i])

        M, C, K = T.T @ M @ T, T.T @ C @ T, T.T @ K @ T
        P = T.T @ P
        Lt = Lt @ T
        labels = ["+".join(merged[int(r)]) for r in kept]
        carriage = np.unique([new_index[int(r)] for r in root[carriage]])
        wheels = np.unique([new_index[int(r)] for r in root[wheels]])
        logger.info("Articulation merged %d DOF pairs", len(pairs))

    system = SecondOrderSystem(M=M, C=C, K=K, P=P, labels=tuple(labels))
    model = TrainModel(
        system=system,
        Lt=Lt,
        wheel_offsets=np.asarray(offsets),
        carriage_dofs=np.asarray(carriage, dtype=int),
        wheel_dofs=np.asarray(wheels, dtype=int),
        length=length,
    )
    logger.info("Train assembled: %d cars, %d DOFs, %d wheels", len(cars), model.n_dof, model.n_wheels)
    return model


# ============================================================================
# PARTITION & MODAL HELPERS
# ============================================================================

@dataclass(frozen=True)
class TrainPartition:
    """Carriage (c) / wheel (w) blocks of the train matrices."""
    Mcc: np.ndarray
    Mcw: np.ndarray
    Mwc: np.ndarray
    Mww: np.ndarray
    Ccc: np.ndarray
    Ccw: np.ndarray
    Cwc: np.ndarray
    Cww: np.ndarray
    Kcc: np.ndarray
    Kcw: np.ndarray
    Kwc: np.ndarray
    Kww: np.ndarray
    Pc: np.ndarray
    Pw: np.ndarray


def partition(model: TrainModel) -> TrainPartition:
    """Split M, C, K and P into carriage and wheel blocks."""
    c, w = model.carriage_dofs, model.wheel_dofs
    if np.intersect1d(c, w).size:
        raise ModelError("a DOF is listed in both carriage and wheel partitions")
    s = model.system

    def blocks(A: np.ndarray) -> Tuple[np.ndarray, ...]:
        return A[np.ix_(c, c)], A[np.ix_(c, w)], A[np.ix_(w, c)], A[np.ix_(w, w)]

    return TrainPartition(*blocks(s.M), *blocks(s.C), *blocks(s.K), s.P[c], s.P[w])


def carriage_frequencies(model: TrainModel) -> np.ndarray:
    """Undamped carriage frequencies (Hz) with the wheels held fixed."""
    part = partition(model)
    eigvals = linalg.eigh(part.Kcc, part.Mcc, eigvals_only=True)
    return np.sqrt(np.clip(eigvals, 0.0, None)) / (2.0 * np.pi)


# ============================================================================
# MATRIX FILE I/O
# ============================================================================

def save_train_matrices(model: TrainModel, path: Union[str, Path]) -> None:
    """
    Write the plain-text matrix format read by load_train_matrices.

    Layout: header "n_dof n_wheels", then M, C, K rows, the P row, Lt rows
    and the wheel-offset row, all dense and row-major.
    """
    s = model.system
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# n_dof n_wheels\n")
        fh.write(f"{model.n_dof} {model.n_wheels}\n")
        for block in (s.M, s.C, s.K, s.P[None, :], model.Lt, model.wheel_offsets[None, :]):
            np.savetxt(fh, block, fmt="%.17g")


def load_train_matrices(path: Union[str, Path]) -> TrainModel:
    """Import a train exported from an external multibody tool."""
    tokens: List[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if len(tokens) < 2:
        raise ModelError(f"{path}: missing header")

    n, k = int(tokens[0]), int(tokens[1])
    expected = 3 * n * n + n + k * n + k
    values = np.array(tokens[2:], dtype=float)
    if values.size != expected:
        raise ModelError(f"{path}: expected {expected} values for n_dof={n}, n_wheels={k}, got {values.size}")

    pos = 0

    def take(count: int) -> np.ndarray:
        nonlocal pos
        chunk = values[pos:pos + count]
        pos += count
        return chunk

    M, C, K = (take(n * n).reshape(n, n) for _ in range(3))
    P = take(n)
    Lt = take(k * n).reshape(k, n)
    offsets = take(k)

    wheel = np.flatnonzero(np.any(Lt != 0.0, axis=0))
    if wheel.size != k or np.any(np.count_nonzero(Lt, axis=1) != 1):
        raise ModelError(f"{path}: each Lt row must select exactly one wheel DOF")
    carriage = np.setdiff1d(np.arange(n), wheel)
    system = SecondOrderSystem(M=M, C=C, K=K, P=P)
    logger.info("Imported train matrices from %s: %d DOFs, %d wheels", path, n, k)
    return TrainModel(
        system=system,
        Lt=Lt,
        wheel_offsets=offsets,
        carriage_dofs=carriage,
        wheel_dofs=wheel,
        length=float(offsets.max() - offsets.min()),
    )
