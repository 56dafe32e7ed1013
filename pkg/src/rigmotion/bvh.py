"""BVH reading, writing and rest-pose normalization."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .skeleton import (
    J_MAX, Motion, Rig, SkeletonError, SkeletonTopology, convert_order, matrix_to_zxy,
    zxy_to_matrix,
)

ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
NATIVE_LAYOUT = ("Zrotation", "Xrotation", "Yrotation")
END_SUFFIX = "_End"
MAX_FRAMES = 1_000_000


class BvhError(ValueError):
    pass


class BvhSyntaxError(BvhError):
    def __init__(self, message: str, line: int, token: str = ""):
        super().__init__(f"line {line}: {message}" + (f" (near {token!r})" if token else ""))
        self.line = line
        self.token = token


class UnsupportedChannel(BvhError):
    pass


class EmptyMotion(BvhError):
    pass


class DegenerateBoundingBox(BvhError):
    pass


class DroppedChannelWarning(UserWarning):
    """Position channels were read but are not part of the motion model."""


@dataclass(frozen=True)
class BvhDocument:
    rig: Rig
    channel_layout: tuple      # per joint, channel names as declared
    motion: Motion

    @property
    def source_frame_time(self) -> float:
        return self.motion.frame_time

    @classmethod
    def from_motion(cls, motion: Motion) -> "BvhDocument":
        layout = []
        for j, name in enumerate(motion.rig.joint_names):
            end_site = _is_end_site(motion, j)
            layout.append(() if end_site else NATIVE_LAYOUT)
        return cls(motion.rig, tuple(layout), motion)


def _end_name(parent_name: str) -> str:
    return parent_name + END_SUFFIX


def _is_end_site(motion: Motion, j: int) -> bool:
    rig = motion.rig
    p = rig.parents[j]
    return (p is not None and rig.topology.is_leaf(j)
            and rig.joint_names[j] == _end_name(rig.joint_names[p])
            and not np.any(motion.rotations[:, j]))


class _Tokens:
    """Whitespace tokenizer that remembers line numbers."""

    def __init__(self, text: str):
        self.items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0

    def peek(self):
        if self.pos < len(self.items):
            return self.items[self.pos]
        last = self.items[-1][1] if self.items else 1
        return ("", last)

    def next(self):
        tok = self.peek()
        if self.pos >= len(self.items):
            raise BvhSyntaxError("unexpected end of file", tok[1])
        self.pos += 1
        return tok

    def expect(self, word: str):
        tok, line = self.next()
        if tok != word:
            raise BvhSyntaxError(f"expected {word!r}", line, tok)
        return line

    def number(self, kind=float):
        tok, line = self.next()
        try:
            value = kind(tok)
        except ValueError:
            raise BvhSyntaxError("expected a number", line, tok) from None
        if kind is float and not math.isfinite(value):
            raise BvhSyntaxError("non-finite number", line, tok)
        return value


def parse_bvh(text: str, j_max: Optional[int] = J_MAX) -> BvhDocument:
    """Parse BVH text.

    End Sites become leaf joints named ``<parent>_End`` with no channels.
    Rotation channels in any axis order are converted to ZXY; position
    channels are dropped with a :class:`DroppedChannelWarning`.
    """
    toks = _Tokens(text)
    toks.expect("HIERARCHY")
    names, parents, offsets, layouts = [], [], [], []

    def read_offset():
        toks.expect("OFFSET")
        return [toks.number() for _ in range(3)]

    def read_joint(parent: Optional[int]):
        tok, line = toks.next()
        if not tok:
            raise BvhSyntaxError("missing joint name", line)
        if j_max is not None and len(names) >= j_max:
            raise BvhSyntaxError(f"more than {j_max} joints", line, tok)
        name = tok
        idx = len(names)
        names.append(name)
        parents.append(parent)
        offsets.append(None)
        layouts.append(())
        toks.expect("{")
        offsets[idx] = read_offset()
        tok, line = toks.peek()
        if tok == "CHANNELS":
            toks.next()
            count = toks.number(int)
            if not 0 <= count <= 6:
                raise BvhSyntaxError("channel count must be between 0 and 6", line, str(count))
            chans = []
            for _ in range(count):
                ch, cline = toks.next()
                if ch not in ROTATION_CHANNELS + POSITION_CHANNELS:
                    raise UnsupportedChannel(f"line {cline}: unsupported channel {ch!r}")
                if ch in chans:
                    raise BvhSyntaxError("duplicate channel", cline, ch)
                chans.append(ch)
            layouts[idx] = tuple(chans)
        while True:
            tok, line = toks.next()
            if tok == "}":
                return
            if tok == "JOINT":
                read_joint(idx)
            elif tok == "End":
                toks.expect("Site")
                if j_max is not None and len(names) >= j_max:
                    raise BvhSyntaxError(f"more than {j_max} joints", line, tok)
                names.append(_end_name(name))
                parents.append(idx)
                toks.expect("{")
                offsets.append(read_offset())
                layouts.append(())
                toks.expect("}")
            else:
                raise BvhSyntaxError("expected JOINT, End Site or '}'", line, tok)

    toks.expect("ROOT")
    try:
        read_joint(None)
    except RecursionError:
        raise BvhSyntaxError("hierarchy nested too deeply", toks.peek()[1]) from None
    tok, line = toks.next()
    if tok != "MOTION":
        raise BvhSyntaxError("expected MOTION", line, tok)
    toks.expect("Frames:")
    n_frames = toks.number(int)
    if not 0 <= n_frames <= MAX_FRAMES:
        raise BvhSyntaxError(f"frame count outside [0, {MAX_FRAMES}]", toks.peek()[1], str(n_frames))
    tok, line = toks.next()
    if tok == "Frame" and toks.peek()[0] == "Time:":
        toks.next()
    elif tok != "Frame_Time:":
        raise BvhSyntaxError("expected 'Frame Time:'", line, tok)
    frame_time = toks.number()
    if n_frames == 0:
        raise EmptyMotion("the MOTION section has zero frames")
    if frame_time <= 0:
        raise BvhSyntaxError("frame time must be positive", line, str(frame_time))

    n_channels = sum(len(c) for c in layouts)
    remaining = toks.items[toks.pos:]
    if len(remaining) != n_frames * n_channels:
        line = remaining[0][1] if remaining else toks.peek()[1]
        raise BvhSyntaxError(
            f"expected {n_frames} frames x {n_channels} channels = {n_frames * n_channels} "
            f"values, found {len(remaining)}", line)
    values = np.empty(len(remaining))
    for i, (tok, line) in enumerate(remaining):
        try:
            values[i] = float(tok)
        except ValueError:
            raise BvhSyntaxError("expected a number", line, tok) from None
        if not math.isfinite(values[i]):
            raise BvhSyntaxError("non-finite number", line, tok)
    values = values.reshape(n_frames, n_channels)

    try:
        topo = SkeletonTopology(tuple(names), tuple(parents), j_max)
    except SkeletonError as exc:
        raise BvhSyntaxError(str(exc), 1) from None
    rig = Rig(topo, np.array(offsets, dtype=np.float64))

    rotations = np.zeros((n_frames, len(names), 3))
    col = 0
    dropped = []
    for j, chans in enumerate(layouts):
        rot_cols, order = [], ""
        for ch in chans:
            if ch in POSITION_CHANNELS:
                dropped.append(names[j])
            else:
                rot_cols.append(col)
                order += ch[0]
            col += 1
        if not order:
            continue
        angles = values[:, rot_cols]
        if len(order) < 3:
            # pad missing axes with zero rotations
            missing = [a for a in "ZXY" if a not in order]
            angles = np.concatenate([angles, np.zeros((n_frames, len(missing)))], axis=1)
            order += "".join(missing)
        rotations[:, j] = convert_order(angles, order)
    if dropped:
        warnings.warn(f"position channels dropped for joints {sorted(set(dropped))}",
                      DroppedChannelWarning, stacklevel=2)
    return BvhDocument(rig, tuple(layouts), Motion(rig, rotations, frame_time))


def read_bvh(path, j_max: Optional[int] = J_MAX) -> BvhDocument:
    return parse_bvh(Path(path).read_text(encoding="utf-8"), j_max=j_max)


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_bvh(doc) -> str:
    """Serialize a document (or bare Motion) as BVH text.

    Every joint is written with native ``Zrotation Xrotation Yrotation``
    channels except End-Site leaves, which carry none.
    """
    if isinstance(doc, Motion):
        doc = BvhDocument.from_motion(doc)
    motion = doc.motion
    rig = motion.rig
    if motion.num_frames < 1:
        raise EmptyMotion("cannot write a motion without frames")
    topo = rig.topology
    end_sites = [_is_end_site(motion, j) for j in range(rig.num_joints)]
    lines = ["HIERARCHY"]
    written = []

    def emit(j: int, indent: int):
        pad = "  " * indent
        o = rig.rest_offsets[j]
        off = f"{pad}  OFFSET {_fmt(o[0])} {_fmt(o[1])} {_fmt(o[2])}"
        if end_sites[j]:
            lines.extend([f"{pad}End Site", f"{pad}{{", off, f"{pad}}}"])
            return
        head = "ROOT" if topo.parents[j] is None else "JOINT"
        lines.extend([f"{pad}{head} {rig.joint_names[j]}", f"{pad}{{", off,
                      f"{pad}  CHANNELS 3 {' '.join(NATIVE_LAYOUT)}"])
        written.append(j)
        for c in topo.children[j]:
            emit(c, indent + 1)
        lines.append(f"{pad}}}")

    emit(topo.root, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {motion.num_frames}")
    lines.append(f"Frame Time: {motion.frame_time:.6f}")
    block = motion.rotations[:, written].reshape(motion.num_frames, -1)
    for row in block:
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_bvh_file(path, doc) -> None:
    Path(path).write_text(write_bvh(doc), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------- preprocess

_AXES = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "Z": (0.0, 0.0, 1.0)}


def axis_vector(axis) -> np.ndarray:
    """``'+X'``, ``'-y'``, ``'Z'`` or a 3-vector, as a unit vector."""
    if isinstance(axis, str):
        a = axis.strip().upper()
        sign = -1.0 if a.startswith("-") else 1.0
        a = a.lstrip("+-")
        if a not in _AXES:
            raise ValueError(f"unknown axis {axis!r}")
        return sign * np.array(_AXES[a])
    v = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(v)
    if v.shape != (3,) or n == 0:
        raise ValueError(f"bad axis vector {axis!r}")
    return v / n


def alignment_rotation(forward, up, target_forward="-Y", target_up="+Z") -> np.ndarray:
    """Rotation taking the (forward, up) frame onto the target frame."""
    f, u = axis_vector(forward), axis_vector(up)
    tf, tu = axis_vector(target_forward), axis_vector(target_up)
    if abs(f @ u) > 1e-9 or abs(tf @ tu) > 1e-9:
        raise ValueError("forward and up axes must be orthogonal")
    src = np.stack([f, u, np.cross(f, u)], axis=1)
    dst = np.stack([tf, tu, np.cross(tf, tu)], axis=1)
    return dst @ src.T


def rotate_motion(motion: Motion, rotation: np.ndarray) -> Motion:
    """Rotate the whole animated rig rigidly about the world origin.

    Rest offsets are rotated and every local rotation is conjugated, so FK
    positions of the result equal ``rotation @`` the original positions.
    """
    a = np.asarray(rotation, dtype=np.float64)
    rig = motion.rig
    new_rig = Rig(rig.topology, rig.rest_offsets @ a.T)
    local = zxy_to_matrix(motion.rotations)
    conj = a @ local @ a.T
    return Motion(new_rig, matrix_to_zxy(conj), motion.frame_time)


def scale_motion(motion: Motion, factor: float) -> Motion:
    rig = motion.rig
    return Motion(Rig(rig.topology, rig.rest_offsets * factor), motion.rotations, motion.frame_time)


def preprocess_motion(motion: Motion, forward="-Y", up="+Z", target_forward="-Y",
                      target_up="+Z") -> Motion:
    a = alignment_rotation(forward, up, target_forward, target_up)
    if not np.allclose(a, np.eye(3), atol=1e-15):
        motion = rotate_motion(motion, a)
    rest = motion.rig.rest_positions()
    lo, hi = rest.min(axis=0), rest.max(axis=0)
    longest = float(np.max(hi - lo))
    if longest <= 1e-12:
        raise DegenerateBoundingBox("all rest-pose joints coincide")
    s = 1.0 / longest
    offsets = motion.rig.rest_offsets * s
    centre = 0.5 * (lo + hi) * s
    root = motion.rig.topology.root
    offsets = offsets.copy()
    offsets[root] = offsets[root] - centre
    rig = Rig(motion.rig.topology, offsets)
    return Motion(rig, motion.rotations, motion.frame_time)


def preprocess(doc: BvhDocument, forward="-Y", up="+Z", target_forward="-Y",
               target_up="+Z") -> BvhDocument:
    """Align forward/up axes, scale the rest pose to a unit bounding box and centre it.

    ``forward`` and ``up`` describe the source rig; the bounding box is taken
    over the rest pose only.
    """
    motion = preprocess_motion(doc.motion, forward, up, target_forward, target_up)
    return BvhDocument(motion.rig, doc.channel_layout, motion)


# ---------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    bvh_path: Path
    captions: dict
    species_tag: str = ""

    def caption(self, level: str = "mid") -> str:
        for key in (level, "mid", "short", "long"):
            if self.captions.get(key):
                return self.captions[key]
        return ""


def read_manifest(path) -> list:
    """Entries of a JSON manifest; ``bvh_path`` is resolved against its folder."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    items = data["motions"] if isinstance(data, dict) else data
    out = []
    for item in items:
        p = Path(item["bvh_path"])
        if not p.is_absolute():
            p = path.parent / p
        out.append(ManifestEntry(p, dict(item.get("captions", {})), item.get("species_tag", "")))
    return out


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    items = []
    for e in entries:
        p = Path(e.bvh_path)
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        items.append({"bvh_path": p.as_posix(), "captions": dict(e.captions),
                      "species_tag": e.species_tag})
    path.write_text(json.dumps({"version": 1, "motions": items}, indent=2) + "\n",
                    encoding="utf-8")
