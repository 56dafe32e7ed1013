"""Procedural rigs and motions for tests, demos and smoke runs."""
from __future__ import annotations

import numpy as np

from .augment import PartGroupConfig
from .skeleton import Motion, Rig, SkeletonTopology


def random_rig(rng: np.random.Generator, n_joints: int, max_children: int = 3,
               offset_scale: float = 0.2) -> Rig:
    """Random tree in traversal order with non-degenerate bone offsets."""
    parents = [None]
    kids = [0]
    for j in range(1, n_joints):
        open_ = [p for p in range(j) if kids[p] < max_children]
        p = int(rng.choice(open_))
        parents.append(p)
        kids[p] += 1
        kids.append(0)
    topo = SkeletonTopology(tuple(f"j{k}" for k in range(n_joints)), tuple(parents))
    # re-index into traversal order so index order is root first
    order = list(topo.traversal)
    new = {o: i for i, o in enumerate(order)}
    parents = [None if parents[o] is None else new[parents[o]] for o in order]
    offsets = rng.normal(size=(n_joints, 3))
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    offsets *= offset_scale * rng.uniform(0.5, 1.5, size=(n_joints, 1))
    offsets[0] = rng.normal(scale=0.1, size=3)
    return Rig.from_parents([f"j{k}" for k in range(n_joints)], parents, offsets)


def random_rotations(rng: np.random.Generator, n_frames: int, n_joints: int,
                     amplitude: float = 40.0) -> np.ndarray:
    """Smooth periodic Euler angles in degrees, (F, J, 3)."""
    t = np.arange(n_frames)[:, None, None]
    freq = rng.uniform(0.05, 0.3, size=(1, n_joints, 3))
    phase = rng.uniform(0, 2 * np.pi, size=(1, n_joints, 3))
    amp = amplitude * rng.uniform(0.2, 1.0, size=(1, n_joints, 3))
    base = rng.uniform(-20, 20, size=(1, n_joints, 3))
    return base + amp * np.sin(2 * np.pi * freq * t + phase)


def random_motion(rng: np.random.Generator, n_joints: int = 10, n_frames: int = 20,
                  amplitude: float = 40.0) -> Motion:
    rig = random_rig(rng, n_joints)
    return Motion(rig, random_rotations(rng, n_frames, n_joints, amplitude))


def _chain(names, parents, offsets, start_parent, prefix, n, step):
    first = len(names)
    for k in range(n):
        names.append(f"{prefix}{k}")
        parents.append(start_parent if k == 0 else len(names) - 2)
        offsets.append(step)
    return first


def quadruped_rig(spine: int = 3, leg: int = 3, tail: int = 3, neck: int = 2,
                  end_sites: bool = True) -> Rig:
    """Four-legged creature facing -Y with Z up, in traversal order."""
    names, parents, offsets = ["Hips"], [None], [(0.0, 0.0, 0.5)]
    _chain(names, parents, offsets, 0, "Spine", spine, (0.0, -0.12, 0.0))
    chest = len(names) - 1
    for side, x in (("L", 0.08), ("R", -0.08)):
        _chain(names, parents, offsets, chest, f"FrontLeg{side}", 1, (x, 0.0, -0.02))
        _chain(names, parents, offsets, len(names) - 1, f"FrontLeg{side}_", leg - 1, (0.0, 0.0, -0.14))
        if end_sites:
            names.append(f"FrontToe{side}")
            parents.append(len(names) - 2)
            offsets.append((0.0, -0.04, 0.0))
    _chain(names, parents, offsets, chest, "Neck", neck, (0.0, -0.06, 0.06))
    names.append("Head")
    parents.append(len(names) - 2)
    offsets.append((0.0, -0.08, 0.02))
    for side, x in (("L", 0.08), ("R", -0.08)):
        _chain(names, parents, offsets, 0, f"HindLeg{side}", 1, (x, 0.02, -0.02))
        _chain(names, parents, offsets, len(names) - 1, f"HindLeg{side}_", leg - 1, (0.0, 0.0, -0.14))
        if end_sites:
            names.append(f"HindToe{side}")
            parents.append(len(names) - 2)
            offsets.append((0.0, -0.04, 0.0))
    _chain(names, parents, offsets, 0, "Tail", tail, (0.0, 0.1, 0.01))
    topo = SkeletonTopology(tuple(names), tuple(parents))
    rig = Rig(topo, np.array(offsets, dtype=np.float64))
    return _traversal_rig(rig)


def _traversal_rig(rig: Rig) -> Rig:
    topo = rig.topology
    order = list(topo.traversal)
    new = {o: i for i, o in enumerate(order)}
    parents = [None if topo.parents[o] is None else new[topo.parents[o]] for o in order]
    return Rig.from_parents([topo.joint_names[o] for o in order], parents, rig.rest_offsets[order])


def quadruped_part_groups(rig: Rig, lo: float = 0.8, hi: float = 1.2) -> PartGroupConfig:
    names = rig.joint_names
    groups = {
        "front_left_leg": [n for n in names if n.startswith("FrontLegL")],
        "front_right_leg": [n for n in names if n.startswith("FrontLegR")],
        "hind_left_leg": [n for n in names if n.startswith("HindLegL")],
        "hind_right_leg": [n for n in names if n.startswith("HindLegR")],
        "spine": [n for n in names if n.startswith("Spine")],
        "tail": [n for n in names if n.startswith("Tail")],
        "neck": [n for n in names if n.startswith("Neck")],
    }
    return PartGroupConfig(groups, {g: (lo, hi) for g in groups},
                           (("front_left_leg", "front_right_leg"),
                            ("hind_left_leg", "hind_right_leg")))


def gait(rig: Rig, n_frames: int = 30, amplitude: float = 25.0, phase: float = 0.0,
         frame_time: float = 1.0 / 30.0) -> Motion:
    """Periodic swing of every joint, legs in alternating phase."""
    t = 2 * np.pi * (np.arange(n_frames) / max(n_frames, 1)) + phase
    rot = np.zeros((n_frames, rig.num_joints, 3))
    for j, name in enumerate(rig.joint_names):
        shift = np.pi if name.endswith("R") or "R_" in name else 0.0
        if "Leg" in name:
            rot[:, j, 1] = amplitude * np.sin(t + shift)
        elif name.startswith("Tail"):
            rot[:, j, 0] = 0.6 * amplitude * np.sin(t + 0.5 * j)
        elif name.startswith("Spine") or name.startswith("Neck"):
            rot[:, j, 2] = 0.2 * amplitude * np.sin(2 * t)
    return Motion(rig, rot, frame_time)


def fixture_motions(n: int, seed: int = 0, n_frames: int = 12) -> list:
    """A deterministic mixed corpus: quadruped gaits and random trees."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        if k % 2 == 0:
            rig = quadruped_rig(spine=2 + k % 3, leg=2 + (k // 2) % 2, tail=1 + k % 4)
            out.append(gait(rig, n_frames, amplitude=15 + 3 * (k % 5), phase=0.3 * k))
        else:
            out.append(random_motion(rng, n_joints=int(rng.integers(4, 16)), n_frames=n_frames))
    return out
