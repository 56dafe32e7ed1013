"""Rig augmentation and dynamics-preserving retargeting.

Three augmentations change the static features of a motion while keeping
its world-space joint trajectories: bone-length scaling per body part,
joint removal / subdivision, and resetting the rest pose to a frame of the
motion. Whenever the rig changes, new local rotations are solved by
:func:`retarget_to_rig` against the original forward-kinematics positions.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .skeleton import (
    J_MAX, JointBudgetExceeded, Motion, Rig, SkeletonTopology, forward_kinematics,
    matrix_to_zxy, to_traversal_order,
)

SCALE_BOUNDS = (0.8, 1.2)

BONE_LENGTH = "BoneLength"
JOINT_REMOVE = "JointRemove"
JOINT_SUBDIVIDE = "JointSubdivide"
REST_POSE_RESET = "RestPoseReset"
KINDS = (BONE_LENGTH, JOINT_REMOVE, JOINT_SUBDIVIDE, REST_POSE_RESET)


class AugmentationError(ValueError):
    pass


class ScaleOutOfRange(AugmentationError):
    pass


class UnknownJoint(AugmentationError, KeyError):
    pass


class NotRemovable(AugmentationError):
    pass


class FrameOutOfRange(AugmentationError):
    pass


class RetargetWarning(UserWarning):
    pass


# ---------------------------------------------------------------- configs

@dataclass(frozen=True)
class PartGroupConfig:
    """Named joint groups, their scale ranges and left/right pairs."""

    groups: dict
    ranges: dict = field(default_factory=dict)
    symmetry_pairs: tuple = ()
    bounds: tuple = SCALE_BOUNDS

    def __post_init__(self):
        groups = {str(k): tuple(v) for k, v in self.groups.items()}
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "symmetry_pairs", tuple(tuple(p) for p in self.symmetry_pairs))
        owner = {}
        for g, joints in groups.items():
            for name in joints:
                if name in owner:
                    raise AugmentationError(f"joint {name!r} is in groups {owner[name]!r} and {g!r}")
                owner[name] = g
        lo_b, hi_b = self.bounds
        ranges = {}
        for g in groups:
            lo, hi = self.ranges.get(g, self.bounds)
            if lo > hi:
                raise ScaleOutOfRange(f"group {g!r}: lower scale {lo} above upper {hi}")
            if lo < lo_b or hi > hi_b:
                raise ScaleOutOfRange(f"group {g!r}: range [{lo}, {hi}] outside [{lo_b}, {hi_b}]")
            ranges[g] = (float(lo), float(hi))
        unknown = set(self.ranges) - set(groups)
        if unknown:
            raise AugmentationError(f"ranges given for unknown groups {sorted(unknown)}")
        object.__setattr__(self, "ranges", ranges)
        mirrored = set()
        for a, b in self.symmetry_pairs:
            if a not in groups or b not in groups:
                raise AugmentationError(f"symmetry pair ({a!r}, {b!r}) names an unknown group")
            if len(groups[a]) != len(groups[b]):
                raise AugmentationError(f"symmetry pair ({a!r}, {b!r}) has unequal joint counts")
            if a in mirrored or b in mirrored:
                raise AugmentationError(f"group in pair ({a!r}, {b!r}) is already paired")
            mirrored.update((a, b))

    @classmethod
    def from_dict(cls, data: dict) -> "PartGroupConfig":
        return cls(groups=data["groups"],
                   ranges={k: tuple(v) for k, v in data.get("ranges", {}).items()},
                   symmetry_pairs=tuple(tuple(p) for p in data.get("symmetry_pairs", ())),
                   bounds=tuple(data.get("bounds", SCALE_BOUNDS)))

    def to_dict(self) -> dict:
        return {"groups": {k: list(v) for k, v in self.groups.items()},
                "ranges": {k: list(v) for k, v in self.ranges.items()},
                "symmetry_pairs": [list(p) for p in self.symmetry_pairs],
                "bounds": list(self.bounds)}

    def draw(self, rng: np.random.Generator) -> dict:
        """One scale factor per group; the second group of a pair copies the first."""
        mirror_of = {b: a for a, b in self.symmetry_pairs}
        factors = {}
        for g in sorted(self.groups):
            if g in mirror_of:
                continue
            lo, hi = self.ranges[g]
            factors[g] = float(rng.uniform(lo, hi)) if hi > lo else lo
        for b, a in mirror_of.items():
            factors[b] = factors[a]
        return factors


@dataclass(frozen=True)
class AugmentationRecord:
    kind: str
    parameters: dict
    seed: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationRecord":
        if data["kind"] not in KINDS:
            raise AugmentationError(f"unknown augmentation kind {data['kind']!r}")
        return cls(data["kind"], dict(data["parameters"]), int(data["seed"]))


# ---------------------------------------------------------------- rotations

def _normalize(v: np.ndarray, eps: float = 1e-12):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n < eps, 1.0, n), n[..., 0]


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotations taking unit vectors ``a`` onto ``b`` (batched)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    v = np.cross(a, b)
    c = np.sum(a * b, axis=-1)
    out = np.empty(a.shape[:-1] + (3, 3))
    vx = np.zeros_like(out)
    vx[..., 0, 1], vx[..., 0, 2] = -v[..., 2], v[..., 1]
    vx[..., 1, 0], vx[..., 1, 2] = v[..., 2], -v[..., 0]
    vx[..., 2, 0], vx[..., 2, 1] = -v[..., 1], v[..., 0]
    opposite = c < -1.0 + 1e-12
    k = 1.0 / np.where(opposite, 1.0, 1.0 + c)
    out[:] = np.eye(3) + vx + (vx @ vx) * k[..., None, None]
    if np.any(opposite):
        # half turn about any axis perpendicular to a
        aa = a[opposite]
        helper = np.where(np.abs(aa[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        axis, _ = _normalize(np.cross(aa, helper))
        out[opposite] = 2.0 * axis[:, :, None] * axis[:, None, :] - np.eye(3)
    return out


def wahba_rotation(body: np.ndarray, world: np.ndarray, weights=None) -> np.ndarray:
    """Rotation ``W`` minimising ``sum w_i |W body_i - world_i|^2``.

    ``body`` and ``world`` are (..., N, 3); solved by SVD of the attitude
    profile matrix with a determinant correction.
    """
    body = np.asarray(body, float)
    world = np.asarray(world, float)
    if weights is None:
        weights = np.ones(world.shape[:-1])
    b = np.einsum("...n,...ni,...nj->...ij", weights, world, body)
    u, _, vt = np.linalg.svd(b)
    d = np.linalg.det(u) * np.linalg.det(vt)
    fix = np.ones(d.shape + (3,))
    fix[..., 2] = np.sign(d) + (d == 0)
    return (u * fix[..., None, :]) @ vt


# ---------------------------------------------------------------- retargeting

@dataclass(frozen=True)
class RetargetReport:
    residuals: np.ndarray          # (F, J) summed squared direction error
    degenerate_frames: dict        # joint index -> frames that held the previous rotation
    unconstrained: tuple           # non-leaf joints without constrained children

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


def retarget_to_rig(target_positions, new_rig: Rig, joint_map: Sequence[Optional[int]],
                    frame_time: float = 1.0 / 30.0, eps: float = 1e-10):
    """Solve local rotations so ``new_rig`` follows ``target_positions``.

    ``target_positions`` is (F, K, 3); ``joint_map[j]`` is the index into its
    second axis tracked by new-rig joint ``j``, or ``None`` for an
    unconstrained joint. Joints are solved root first, each frame
    independently: a joint with one constrained child gets the smallest
    local rotation that points the child bone along its target, a joint
    with several gets the least-squares (Wahba) world orientation for all
    child directions. Joints without constrained children keep an identity
    local rotation.

    Returns ``(motion, report)``.
    """
    targets = np.asarray(target_positions, dtype=np.float64)
    if targets.ndim != 3 or targets.shape[2] != 3:
        raise ValueError(f"target positions must be (F, K, 3), got {targets.shape}")
    n_joints = new_rig.num_joints
    if len(joint_map) != n_joints:
        raise ValueError(f"joint_map has {len(joint_map)} entries for {n_joints} joints")
    n_frames = targets.shape[0]
    topo = new_rig.topology
    eye = np.broadcast_to(np.eye(3), (n_frames, 3, 3))
    world = np.zeros((n_frames, n_joints, 3, 3))
    local = np.zeros((n_frames, n_joints, 3, 3))
    pos = np.zeros((n_frames, n_joints, 3))
    residuals = np.zeros((n_frames, n_joints))
    degenerate, unconstrained = {}, []

    for j in topo.traversal:
        p = topo.parents[j]
        parent_world = eye if p is None else world[:, p]
        pos[:, j] = new_rig.rest_offsets[j] if p is None else \
            pos[:, p] + parent_world @ new_rig.rest_offsets[j]
        kids = [c for c in topo.children[j] if joint_map[c] is not None]
        rest_dirs, rest_len = _normalize(new_rig.rest_offsets[list(kids)]) if kids else (None, None)
        if kids:
            keep = rest_len > eps
            kids = [c for c, k in zip(kids, keep) if k]
            rest_dirs = rest_dirs[keep]
        if not kids:
            if topo.children[j]:
                unconstrained.append(j)
                warnings.warn(f"joint {topo.joint_names[j]!r} has no constrained children; "
                              "using identity", RetargetWarning, stacklevel=2)
            local[:, j] = np.eye(3)
            world[:, j] = parent_world @ local[:, j]
            continue

        vec = targets[:, [joint_map[c] for c in kids]] - pos[:, j, None, :]
        tdir, tlen = _normalize(vec)
        valid = tlen > eps                       # (F, C)
        n_valid = valid.sum(axis=1)
        rot_local = np.tile(np.eye(3), (n_frames, 1, 1))

        svals = np.linalg.svd(rest_dirs, compute_uv=False) if len(kids) > 1 else np.zeros(1)
        spread = len(kids) > 1 and svals[1] > 1e-6
        multi = (n_valid >= 2) & spread
        single = (n_valid >= 1) & ~multi
        if np.any(multi):
            w = wahba_rotation(rest_dirs[None], tdir[multi], valid[multi].astype(float))
            rot_local[multi] = np.swapaxes(parent_world[multi], -1, -2) @ w
        if np.any(single):
            # first valid child per frame; with collinear rest directions any one will do
            first = np.argmax(valid[single], axis=1)
            a = rest_dirs[first]
            b = tdir[single][np.arange(first.size), first]
            b_local = np.einsum("fji,fj->fi", parent_world[single], b)
            rot_local[single] = rotation_between(a, b_local)
        held = np.flatnonzero(n_valid == 0)
        if held.size:
            degenerate[j] = held.tolist()
            for f in held:
                rot_local[f] = rot_local[f - 1] if f > 0 else np.eye(3)
        local[:, j] = rot_local
        world[:, j] = parent_world @ rot_local
        err = np.einsum("fij,cj->fci", world[:, j], rest_dirs) - tdir
        residuals[:, j] = np.sum(np.sum(err ** 2, axis=-1) * valid, axis=1)

    motion = Motion(new_rig, matrix_to_zxy(local), frame_time)
    return motion, RetargetReport(residuals, degenerate, tuple(unconstrained))


# ---------------------------------------------------------------- augmentations

def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _rescale_to_extent(offsets: np.ndarray, topology: SkeletonTopology, extent: float) -> np.ndarray:
    rig = Rig(topology, offsets)
    rest = rig.rest_positions()
    longest = float(np.max(rest.max(axis=0) - rest.min(axis=0)))
    if longest <= 0.0 or extent <= 0.0:
        return offsets
    out = offsets * (extent / longest)
    root = topology.root
    out[root] = offsets[root]
    return out


def apply_bone_scales(motion: Motion, config: PartGroupConfig, factors: dict,
                      renormalize: bool = True, strict: bool = True) -> Motion:
    """Scale each group's bone offsets by its factor; rotations are kept.

    With ``renormalize`` the non-root offsets are rescaled so the rest-pose
    bounding box keeps its original longest side. Unless ``strict``, group
    members missing from the rig are skipped.
    """
    rig = motion.rig
    offsets = rig.rest_offsets.copy()
    root = rig.topology.root
    for g, joints in config.groups.items():
        s = factors[g]
        for name in joints:
            if name not in rig.joint_names:
                if strict:
                    raise UnknownJoint(f"group {g!r} names unknown joint {name!r}")
                continue
            j = rig.topology.index(name)
            if j != root:
                offsets[j] = offsets[j] * s
    if renormalize:
        rest = rig.rest_positions()
        extent = float(np.max(rest.max(axis=0) - rest.min(axis=0)))
        offsets = _rescale_to_extent(offsets, rig.topology, extent)
    return Motion(Rig(rig.topology, offsets), motion.rotations, motion.frame_time)


def scale_bone_lengths(motion: Motion, config: PartGroupConfig, seed: int,
                       renormalize: bool = True, strict: bool = True):
    """Per-part random bone scaling, symmetric across mirrored groups."""
    if strict:
        for g, joints in config.groups.items():
            for name in joints:
                if name not in motion.rig.joint_names:
                    raise UnknownJoint(f"group {g!r} names unknown joint {name!r}")
    factors = config.draw(_rng(seed))
    for g, s in factors.items():
        lo, hi = config.bounds
        if not lo <= s <= hi:
            raise ScaleOutOfRange(f"drawn factor {s} for {g!r} outside [{lo}, {hi}]")
    out = apply_bone_scales(motion, config, factors, renormalize, strict)
    record = AugmentationRecord(BONE_LENGTH, {"factors": factors, "renormalize": renormalize,
                                              "strict": strict}, seed)
    return out, record


def removable_joints(motion: Motion, variance_threshold: float = 25.0) -> list:
    """Joint names that may be erased.

    Leaves qualify (distal appendages), as do single-child joints whose summed
    per-channel rotation variance over the motion is below
    ``variance_threshold`` in squared degrees (redundant spine-like bones).
    """
    topo = motion.rig.topology
    var = motion.rotations.var(axis=0).sum(axis=1)
    out = []
    for j in range(topo.num_joints):
        if j == topo.root:
            continue
        kids = topo.children[j]
        if not kids or (len(kids) == 1 and var[j] < variance_threshold):
            out.append(topo.joint_names[j])
    return out


def remove_named_joints(motion: Motion, names: Sequence[str]) -> Motion:
    rig = motion.rig
    topo = rig.topology
    idx = []
    for name in names:
        if name not in topo.joint_names:
            raise UnknownJoint(f"unknown joint {name!r}")
        j = topo.index(name)
        if j == topo.root:
            raise NotRemovable(f"joint {name!r} is the root")
        if len(topo.children[j]) > 1:
            raise NotRemovable(f"joint {name!r} is a branching joint")
        idx.append(j)
    gone = set(idx)
    survivors = [j for j in topo.traversal if j not in gone]
    new_index = {old: new for new, old in enumerate(survivors)}
    rest = rig.rest_positions()
    parents, offsets = [], []
    for j in survivors:
        p = topo.parents[j]
        while p is not None and p in gone:
            p = topo.parents[p]
        parents.append(None if p is None else new_index[p])
        offsets.append(rig.rest_offsets[j] if p is None else rest[j] - rest[p])
    new_rig = Rig(SkeletonTopology(tuple(topo.joint_names[j] for j in survivors),
                                   tuple(parents), topo.j_max), np.array(offsets))
    targets = forward_kinematics(motion).positions
    out, _ = retarget_to_rig(targets, new_rig, survivors, motion.frame_time)
    return out


def remove_joints(motion: Motion, removable: Sequence[str], seed: int,
                  count: Optional[int] = None):
    """Erase joints drawn from ``removable`` (all of them when ``count`` is None).

    A removed pass-through joint hands its rest offset on to its child; the
    remaining rotations are re-solved against the original joint positions.
    """
    pool = sorted(set(removable))
    if count is not None and count < len(pool):
        chosen = sorted(_rng(seed).choice(pool, size=count, replace=False).tolist())
    else:
        chosen = pool
    out = remove_named_joints(motion, chosen)
    return out, AugmentationRecord(JOINT_REMOVE, {"removed": chosen}, seed)


def _unique_name(base: str, taken: set) -> str:
    name, k = base, 1
    while name in taken:
        k += 1
        name = f"{base}{k}"
    taken.add(name)
    return name


def subdivide_named_joints(motion: Motion, names: Sequence[str], parts_per_bone: int) -> Motion:
    rig = motion.rig
    topo = rig.topology
    if parts_per_bone < 2:
        raise AugmentationError("parts_per_bone must be at least 2")
    split = set()
    for name in names:
        if name not in topo.joint_names:
            raise UnknownJoint(f"unknown joint {name!r}")
        j = topo.index(name)
        if j == topo.root:
            raise AugmentationError(f"the root {name!r} has no bone to subdivide")
        split.add(j)
    budget = topo.j_max if topo.j_max is not None else J_MAX
    new_count = topo.num_joints + len(split) * (parts_per_bone - 1)
    if new_count > budget:
        raise JointBudgetExceeded(f"subdivision needs {new_count} joints, budget is {budget}")

    fk = forward_kinematics(motion).positions
    taken = set(topo.joint_names)
    names_out, parents, offsets, tracks = [], [], [], []
    new_index = {}
    for j in topo.traversal:
        p = topo.parents[j]
        parent_new = None if p is None else new_index[p]
        if j in split:
            piece = rig.rest_offsets[j] / parts_per_bone
            for k in range(1, parts_per_bone):
                names_out.append(_unique_name(f"{topo.joint_names[j]}_sub{k}", taken))
                parents.append(parent_new)
                offsets.append(piece)
                t = k / parts_per_bone
                tracks.append((1.0 - t) * fk[:, p] + t * fk[:, j])
                parent_new = len(names_out) - 1
            offsets.append(piece)
        else:
            offsets.append(rig.rest_offsets[j])
        names_out.append(topo.joint_names[j])
        parents.append(parent_new)
        tracks.append(fk[:, j])
        new_index[j] = len(names_out) - 1
    new_rig = Rig(SkeletonTopology(tuple(names_out), tuple(parents), topo.j_max), np.array(offsets))
    targets = np.stack(tracks, axis=1)
    out, _ = retarget_to_rig(targets, new_rig, list(range(len(names_out))), motion.frame_time)
    return out


def subdivide_joints(motion: Motion, targets: Sequence[str], parts_per_bone: int, seed: int):
    """Split the bone leading into each target joint into equal collinear parts."""
    chosen = sorted(set(targets))
    out = subdivide_named_joints(motion, chosen, parts_per_bone)
    record = AugmentationRecord(JOINT_SUBDIVIDE,
                                {"targets": chosen, "parts_per_bone": int(parts_per_bone)}, seed)
    return out, record


def reset_rest_pose_at(motion: Motion, frame_index: int) -> Motion:
    if not 0 <= frame_index < motion.num_frames:
        raise FrameOutOfRange(f"frame {frame_index} outside [0, {motion.num_frames})")
    rig = motion.rig
    fk = forward_kinematics(motion).positions
    pose = fk[frame_index]
    offsets = rig.rest_offsets.copy()
    for j, p in enumerate(rig.parents):
        if p is not None:
            offsets[j] = pose[j] - pose[p]
    new_rig = Rig(rig.topology, offsets)
    out, _ = retarget_to_rig(fk, new_rig, list(range(rig.num_joints)), motion.frame_time)
    return out


def reset_rest_pose(motion: Motion, frame_index: Optional[int], seed: int):
    """Make the pose at ``frame_index`` (random when None) the new rest pose."""
    if frame_index is None:
        frame_index = int(_rng(seed).integers(motion.num_frames))
    out = reset_rest_pose_at(motion, frame_index)
    return out, AugmentationRecord(REST_POSE_RESET, {"frame_index": int(frame_index)}, seed)


def apply_record(motion: Motion, record: AugmentationRecord,
                 config: Optional[PartGroupConfig] = None) -> Motion:
    """Replay a stored augmentation without drawing random numbers."""
    prm = record.parameters
    if record.kind == BONE_LENGTH:
        if config is None:
            raise AugmentationError("replaying a bone-length record needs the part groups")
        return apply_bone_scales(motion, config, prm["factors"], prm.get("renormalize", True),
                                 prm.get("strict", True))
    if record.kind == JOINT_REMOVE:
        return remove_named_joints(motion, prm["removed"])
    if record.kind == JOINT_SUBDIVIDE:
        return subdivide_named_joints(motion, prm["targets"], prm["parts_per_bone"])
    if record.kind == REST_POSE_RESET:
        return reset_rest_pose_at(motion, prm["frame_index"])
    raise AugmentationError(f"unknown augmentation kind {record.kind!r}")


# ---------------------------------------------------------------- policy

@dataclass(frozen=True)
class AugmentationPolicy:
    """Which augmentations to try per variant, applied in the fixed order
    bone length, joint count, rest pose."""

    part_groups: Optional[PartGroupConfig] = None
    p_bone_length: float = 0.5
    p_joint_count: float = 0.5
    p_rest_pose_reset: float = 0.5
    max_remove: int = 2
    max_subdivide: int = 2
    parts_per_bone: tuple = (2, 3)
    variance_threshold: float = 25.0

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationPolicy":
        data = dict(data)
        groups = data.pop("part_groups", None)
        if "parts_per_bone" in data:
            data["parts_per_bone"] = tuple(data["parts_per_bone"])
        return cls(part_groups=PartGroupConfig.from_dict(groups) if groups else None, **data)

    @classmethod
    def load(cls, path) -> "AugmentationPolicy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {"part_groups": self.part_groups.to_dict() if self.part_groups else None,
                "p_bone_length": self.p_bone_length, "p_joint_count": self.p_joint_count,
                "p_rest_pose_reset": self.p_rest_pose_reset, "max_remove": self.max_remove,
                "max_subdivide": self.max_subdivide, "parts_per_bone": list(self.parts_per_bone),
                "variance_threshold": self.variance_threshold}


def _subseeds(seed: int, n: int) -> list:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def augment_motion(motion: Motion, policy: AugmentationPolicy, seed: int):
    """One augmented variant and the records that reproduce it."""
    rng = _rng(seed)
    s_bone, s_count, s_reset = _subseeds(seed, 3)
    groups = policy.part_groups
    use_bone = groups is not None and rng.random() < policy.p_bone_length
    use_count = rng.random() < policy.p_joint_count
    use_reset = motion.num_frames > 1 and rng.random() < policy.p_rest_pose_reset
    if not (use_bone or use_count or use_reset):
        options = ["count"] + (["bone"] if groups is not None else []) + \
            (["reset"] if motion.num_frames > 1 else [])
        pick = options[int(rng.integers(len(options)))]
        use_bone, use_count, use_reset = pick == "bone", pick == "count", pick == "reset"

    records = []
    out = motion
    if use_bone:
        out, rec = scale_bone_lengths(out, groups, s_bone, strict=False)
        records.append(rec)
    if use_count:
        sub = _rng(s_count)
        candidates = removable_joints(out, policy.variance_threshold)
        remove = bool(sub.random() < 0.5) and bool(candidates) and policy.max_remove > 0
        if remove:
            k = int(sub.integers(1, min(policy.max_remove, len(candidates)) + 1))
            out, rec = remove_joints(out, candidates, s_count, count=k)
            records.append(rec)
        else:
            parts = int(sub.integers(min(policy.parts_per_bone), max(policy.parts_per_bone) + 1))
            topo = out.rig.topology
            budget = (topo.j_max or J_MAX) - topo.num_joints
            room = budget // (parts - 1)
            k = min(policy.max_subdivide, room)
            bones = [n for j, n in enumerate(topo.joint_names)
                     if j != topo.root and np.linalg.norm(out.rig.rest_offsets[j]) > 0]
            if k > 0 and bones:
                k = int(sub.integers(1, min(k, len(bones)) + 1))
                chosen = sub.choice(bones, size=k, replace=False).tolist()
                out, rec = subdivide_joints(out, chosen, parts, s_count)
                records.append(rec)
    if use_reset:
        out, rec = reset_rest_pose(out, None, s_reset)
        records.append(rec)
    return to_traversal_order(out), records


def expand_motion(motion: Motion, policy: AugmentationPolicy, n_variants: int, seed: int):
    """The original followed by ``n_variants`` augmented copies, with records."""
    out = [(motion, [])]
    for s in _subseeds(seed, n_variants) if n_variants else []:
        out.append(augment_motion(motion, policy, s))
    return out
