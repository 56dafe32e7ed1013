"""Rig and motion data model, Euler ZXY rotations and forward kinematics.

Conventions used throughout the package:

* Joint ``j`` is addressed by its integer index; ``parents[j]`` is ``None``
  for the root.
* Rotations are Euler angles in degrees stored as ``(z, x, y)`` triples,
  the order in which BVH ``Zrotation Xrotation Yrotation`` channels appear.
  The matrix is ``Rz(z) @ Rx(x) @ Ry(y)`` acting on column vectors.
* The root never translates: its world position is its rest offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

J_MAX = 140
F_MAX = 90


class SkeletonError(ValueError):
    """Base class for invalid rigs and motions."""


class CycleDetected(SkeletonError):
    pass


class MultipleRoots(SkeletonError):
    pass


class OrphanJoint(SkeletonError):
    pass


class DuplicateName(SkeletonError):
    pass


class JointBudgetExceeded(SkeletonError):
    pass


class ZeroLengthBone(SkeletonError):
    pass


def validate_topology(joint_names: Sequence[str], parents: Sequence[Optional[int]],
                      j_max: Optional[int] = J_MAX) -> None:
    """Raise the first tree-invariant violation found, or return None."""
    n = len(joint_names)
    if n != len(parents):
        raise SkeletonError(f"{n} names but {len(parents)} parent entries")
    if n == 0:
        raise SkeletonError("a skeleton needs at least one joint")
    if j_max is not None and n > j_max:
        raise JointBudgetExceeded(f"{n} joints exceeds the budget of {j_max}")
    seen = {}
    for j, name in enumerate(joint_names):
        if name in seen:
            raise DuplicateName(f"joint name {name!r} used by joints {seen[name]} and {j}")
        seen[name] = j
    roots = [j for j, p in enumerate(parents) if p is None]
    if len(roots) > 1:
        raise MultipleRoots(f"joints {roots} have no parent")
    for j, p in enumerate(parents):
        if p is not None and not (0 <= p < n):
            raise OrphanJoint(f"joint {j} ({joint_names[j]!r}) points at missing parent {p}")
        if p == j:
            raise CycleDetected(f"joint {j} is its own parent")
    # walk each joint up to the root; a walk longer than n means a cycle
    for j in range(n):
        k, steps = j, 0
        while parents[k] is not None:
            k = parents[k]
            steps += 1
            if steps > n:
                raise CycleDetected(f"joint {j} ({joint_names[j]!r}) lies on a parent cycle")
    if not roots:
        raise CycleDetected("no root joint: every joint has a parent")


@dataclass(frozen=True, eq=False)
class SkeletonTopology:
    """Joint tree: names, parent links and a root-first traversal."""

    joint_names: tuple
    parents: tuple
    j_max: Optional[int] = J_MAX
    children: tuple = field(init=False, repr=False)
    traversal: tuple = field(init=False, repr=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.joint_names)
        parents = tuple(None if p is None else int(p) for p in self.parents)
        validate_topology(names, parents, self.j_max)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parents", parents)
        kids = [[] for _ in names]
        for j, p in enumerate(parents):
            if p is not None:
                kids[p].append(j)
        object.__setattr__(self, "children", tuple(tuple(c) for c in kids))
        order, stack = [], [self.root]
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(kids[j]))
        object.__setattr__(self, "traversal", tuple(order))

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def root(self) -> int:
        return self.parents.index(None)

    def index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def depth(self, j: int) -> int:
        d = 0
        while self.parents[j] is not None:
            j = self.parents[j]
            d += 1
        return d

    def is_leaf(self, j: int) -> bool:
        return not self.children[j]

    def __eq__(self, other):
        if not isinstance(other, SkeletonTopology):
            return NotImplemented
        return self.joint_names == other.joint_names and self.parents == other.parents

    def __hash__(self):
        return hash((self.joint_names, self.parents))


@dataclass(frozen=True, eq=False)
class Rig:
    """Topology plus rest offsets (each joint relative to its parent)."""

    topology: SkeletonTopology
    rest_offsets: np.ndarray

    def __post_init__(self):
        off = np.array(self.rest_offsets, dtype=np.float64).reshape(-1, 3) \
            if np.size(self.rest_offsets) else np.zeros((0, 3))
        if off.shape != (self.topology.num_joints, 3):
            raise SkeletonError(
                f"rest_offsets has shape {off.shape}, expected ({self.topology.num_joints}, 3)")
        if not np.all(np.isfinite(off)):
            raise SkeletonError("rest offsets must be finite")
        off.setflags(write=False)
        object.__setattr__(self, "rest_offsets", off)

    @classmethod
    def from_parents(cls, names, parents, offsets, j_max=J_MAX) -> "Rig":
        return cls(SkeletonTopology(tuple(names), tuple(parents), j_max), np.asarray(offsets))

    @property
    def num_joints(self) -> int:
        return self.topology.num_joints

    @property
    def joint_names(self):
        return self.topology.joint_names

    @property
    def parents(self):
        return self.topology.parents

    def validate(self) -> None:
        """Reject zero-length bones (required of preprocessed rigs)."""
        lengths = bone_lengths(self)
        for j, p in enumerate(self.parents):
            if p is not None and lengths[j] <= 0.0:
                raise ZeroLengthBone(f"joint {self.joint_names[j]!r} has a zero-length bone")

    def rest_positions(self) -> np.ndarray:
        """World positions (J, 3) with every rotation at zero."""
        pos = np.zeros((self.num_joints, 3))
        for j in self.topology.traversal:
            p = self.parents[j]
            pos[j] = self.rest_offsets[j] if p is None else pos[p] + self.rest_offsets[j]
        return pos

    def __eq__(self, other):
        if not isinstance(other, Rig):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.rest_offsets, other.rest_offsets)

    def __hash__(self):
        return hash((self.topology, self.rest_offsets.tobytes()))


@dataclass(frozen=True, eq=False)
class Motion:
    """A rig animated by per-frame local Euler ZXY rotations in degrees."""

    rig: Rig
    rotations: np.ndarray
    frame_time: float = 1.0 / 30.0

    def __post_init__(self):
        rot = np.array(self.rotations, dtype=np.float64)
        if rot.ndim != 3 or rot.shape[1:] != (self.rig.num_joints, 3):
            raise SkeletonError(
                f"rotations have shape {rot.shape}, expected (F, {self.rig.num_joints}, 3)")
        if rot.shape[0] < 1:
            raise SkeletonError("a motion needs at least one frame")
        if not np.all(np.isfinite(rot)):
            raise SkeletonError("rotations must be finite")
        rot.setflags(write=False)
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "frame_time", float(self.frame_time))

    @property
    def num_frames(self) -> int:
        return self.rotations.shape[0]

    def frames(self, start: int, stop: int) -> "Motion":
        return Motion(self.rig, self.rotations[start:stop], self.frame_time)

    def with_rotations(self, rotations) -> "Motion":
        return Motion(self.rig, rotations, self.frame_time)


@dataclass(frozen=True)
class GlobalPose:
    positions: np.ndarray      # (F, J, 3)
    orientations: np.ndarray   # (F, J, 3, 3)


def _axis_matrices(angles_rad: np.ndarray, axis: str) -> np.ndarray:
    c, s = np.cos(angles_rad), np.sin(angles_rad)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == "x":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    elif axis == "z":
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def euler_to_matrix(angles_deg, order: str = "ZXY") -> np.ndarray:
    """Matrices for Euler angles (..., 3) applied in ``order``.

    ``angles_deg[..., i]`` is the angle about axis ``order[i]``; the result is
    the product of the axis matrices taken left to right.
    """
    a = np.radians(np.asarray(angles_deg, dtype=np.float64))
    out = None
    for i, axis in enumerate(order.lower()):
        m = _axis_matrices(a[..., i], axis)
        out = m if out is None else out @ m
    return out


def zxy_to_matrix(angles_deg) -> np.ndarray:
    return euler_to_matrix(angles_deg, "ZXY")


def matrix_to_zxy(m) -> np.ndarray:
    """Euler ZXY angles (degrees) of rotation matrices (..., 3, 3).

    In gimbal lock (x = +-90 deg) the y angle is set to zero and z absorbs
    the remaining rotation.
    """
    m = np.asarray(m, dtype=np.float64)
    cx = np.hypot(m[..., 2, 0], m[..., 2, 2])
    x = np.arctan2(m[..., 2, 1], cx)
    z = np.arctan2(-m[..., 0, 1], m[..., 1, 1])
    y = np.arctan2(-m[..., 2, 0], m[..., 2, 2])
    locked = cx < 1e-12
    if np.any(locked):
        z = np.where(locked, np.arctan2(m[..., 1, 0], m[..., 0, 0]), z)
        y = np.where(locked, 0.0, y)
    return np.degrees(np.stack([z, x, y], axis=-1))


def convert_order(angles_deg, order: str) -> np.ndarray:
    """Re-express angles given in ``order`` as ZXY angles via the matrix."""
    if order.upper() == "ZXY":
        return np.asarray(angles_deg, dtype=np.float64)
    return matrix_to_zxy(euler_to_matrix(angles_deg, order))


def wrap_degrees(angles) -> np.ndarray:
    """Wrap into (-180, 180]."""
    a = np.asarray(angles, dtype=np.float64)
    return 180.0 - np.mod(180.0 - a, 360.0)


def forward_kinematics(motion: Motion) -> GlobalPose:
    rig = motion.rig
    local = zxy_to_matrix(motion.rotations)
    n_frames, n_joints = motion.rotations.shape[:2]
    pos = np.zeros((n_frames, n_joints, 3))
    rot = np.zeros((n_frames, n_joints, 3, 3))
    for j in rig.topology.traversal:
        p = rig.parents[j]
        if p is None:
            pos[:, j] = rig.rest_offsets[j]
            rot[:, j] = local[:, j]
        else:
            pos[:, j] = pos[:, p] + rot[:, p] @ rig.rest_offsets[j]
            rot[:, j] = rot[:, p] @ local[:, j]
    return GlobalPose(pos, rot)


def bone_lengths(rig: Rig) -> np.ndarray:
    lengths = np.linalg.norm(rig.rest_offsets, axis=1)
    lengths[rig.topology.root] = 0.0
    return lengths


def to_traversal_order(motion: Motion) -> Motion:
    """Re-index joints so that index order equals the root-first traversal."""
    topo = motion.rig.topology
    order = list(topo.traversal)
    if order == list(range(topo.num_joints)):
        return motion
    new_index = {old: new for new, old in enumerate(order)}
    parents = [None if topo.parents[o] is None else new_index[topo.parents[o]] for o in order]
    names = [topo.joint_names[o] for o in order]
    rig = Rig(SkeletonTopology(tuple(names), tuple(parents), topo.j_max),
              motion.rig.rest_offsets[order])
    return Motion(rig, motion.rotations[:, order], motion.frame_time)
