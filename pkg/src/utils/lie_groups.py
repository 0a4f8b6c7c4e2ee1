# src/utils/lie_groups.py
"""
Primitives for the product groups SO(3)^a x T^b used by the reduced systems.

Conventions:
- Quaternions are scalar-first Hamilton quaternions [w, x, y, z].
- A group element stores its SO(3) factors as unit quaternions and its S^1
  factors as unwrapped angles (never reduced mod 2*pi).
- Algebra vectors are flat arrays: the 3-vectors of the SO(3) factors first,
  then one rate per S^1 factor.
- Body-frame velocity xi = g^{-1} g_dot, so a step is a right multiplication
  q_{k+1} = q_k ⊗ exp(dt * omega / 2).
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from src.utils.errors import DimensionError

SMALL_ANGLE = 1e-8
IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

AlgebraVector = np.ndarray


# -------------- so(3) / quaternion helpers --------------

def hat(omega: Sequence[float]) -> np.ndarray:
    """Skew matrix with hat(omega) @ v == cross(omega, v)."""
    wx, wy, wz = (float(c) for c in omega)
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_multiply(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product q ⊗ p."""
    q0, qv = q[0], q[1:]
    p0, pv = p[0], p[1:]
    s = q0 * p0 - np.dot(qv, pv)
    v = q0 * pv + p0 * qv + np.cross(qv, pv)
    return np.concatenate(([s], v))


def quat_exp(omega: Sequence[float], dt: float) -> np.ndarray:
    """Unit quaternion of exp(dt * hat(omega)) by the half-angle formula."""
    rot = np.asarray(omega, dtype=float) * dt
    angle = float(np.linalg.norm(rot))
    if angle < SMALL_ANGLE:
        # second-order series of cos(a/2), sin(a/2)/a
        q = np.concatenate(([1.0 - angle * angle / 8.0], 0.5 * rot * (1.0 - angle * angle / 24.0)))
    else:
        half = 0.5 * angle
        q = np.concatenate(([np.cos(half)], rot * (np.sin(half) / angle)))
    return quat_normalize(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


# -------------- group elements --------------

@dataclass(frozen=True)
class GroupSignature:
    n_so3: int = 0
    n_s1: int = 0

    @property
    def algebra_dim(self) -> int:
        return 3 * self.n_so3 + self.n_s1

    def split(self, xi: AlgebraVector) -> Tuple[list, np.ndarray]:
        xi = np.asarray(xi, dtype=float).ravel()
        if xi.size != self.algebra_dim:
            raise DimensionError(f"algebra vector has {xi.size} entries, signature needs {self.algebra_dim}")
        blocks = [xi[3 * i: 3 * i + 3] for i in range(self.n_so3)]
        return blocks, xi[3 * self.n_so3:]


@dataclass(frozen=True)
class GroupElement:
    quaternions: Tuple[np.ndarray, ...] = ()
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "quaternions", tuple(np.asarray(q, dtype=float) for q in self.quaternions))
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).ravel())

    @classmethod
    def identity(cls, signature: GroupSignature) -> "GroupElement":
        return cls(tuple(IDENTITY_QUAT.copy() for _ in range(signature.n_so3)), np.zeros(signature.n_s1))

    @property
    def signature(self) -> GroupSignature:
        return GroupSignature(len(self.quaternions), int(self.angles.size))

    def rotation_matrices(self) -> list:
        return [quat_to_matrix(q) for q in self.quaternions]

    def as_vector(self) -> np.ndarray:
        """Flat [q1 (w,x,y,z), ..., theta_1, ...] used for CSV export."""
        parts = [q for q in self.quaternions] + [self.angles]
        return np.concatenate(parts) if parts else np.zeros(0)

    @classmethod
    def from_vector(cls, values: Sequence[float], signature: GroupSignature) -> "GroupElement":
        values = np.asarray(values, dtype=float)
        quats = tuple(values[4 * i: 4 * i + 4] for i in range(signature.n_so3))
        return cls(quats, values[4 * signature.n_so3:])


def _check_signature(g: GroupElement, signature: GroupSignature) -> None:
    if g.signature != signature:
        raise DimensionError(f"group element {g.signature} does not match {signature}")


def group_step(g: GroupElement, xi: AlgebraVector, dt: float) -> GroupElement:
    """One exact exponential step of g_dot = g xi for constant xi."""
    sig = g.signature
    blocks, rates = sig.split(xi)
    quats = tuple(quat_normalize(quat_multiply(q, quat_exp(w, dt))) for q, w in zip(g.quaternions, blocks))
    return GroupElement(quats, g.angles + rates * dt)


def trim_flow(g0: GroupElement, xi: AlgebraVector, t: float) -> GroupElement:
    """Closed-form trim g0 * exp(t xi); negative t flows backward."""
    if t == 0.0:
        return g0
    return group_step(g0, xi, t)


def group_distance(g1: GroupElement, g2: GroupElement) -> float:
    """Sum of Frobenius distances of rotation factors and |dtheta| of angle factors."""
    _check_signature(g2, g1.signature)
    total = 0.0
    for q1, q2 in zip(g1.quaternions, g2.quaternions):
        total += float(np.linalg.norm(quat_to_matrix(q1) - quat_to_matrix(q2)))
    total += float(np.sum(np.abs(g1.angles - g2.angles)))
    return total


def body_frame_vector(q: np.ndarray, v: Sequence[float] = (1.0, 1.0, 1.0)) -> np.ndarray:
    """R^T v, the visualization vector for an attitude."""
    return quat_to_matrix(q).T @ np.asarray(v, dtype=float)
