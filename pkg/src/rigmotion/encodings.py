"""Skeleton-aware positional encodings: frame index, tree path and rest offset.

Each joint token is built as ``z + PE(f) + TreePE(j) + RestPE(j)``. The raw
features here are deterministic; the TreePE and RestPE heads are small
Linear-SiLU-Linear perceptrons applied on top of them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import F_MAX, Rig, SkeletonTopology

MAX_DEPTH = 24
MAX_BRANCH = 8
REST_BANDS = 6


class EncodingError(ValueError):
    pass


class IndexOutOfRange(EncodingError):
    pass


class DepthExceeded(EncodingError):
    pass


class BranchExceeded(EncodingError):
    pass


def sinusoidal_table(positions, d_model: int) -> np.ndarray:
    """Interleaved sin/cos features, wavelengths growing as 10000^(2i/d)."""
    if d_model % 2:
        raise EncodingError("d_model must be even")
    pos = np.asarray(positions, dtype=np.float64)[..., None]
    freq = 10000.0 ** (-np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    out = np.empty(pos.shape[:-1] + (d_model,))
    out[..., 0::2] = np.sin(pos * freq)
    out[..., 1::2] = np.cos(pos * freq)
    return out


def frame_positional_encoding(f: int, d_model: int, f_max: int = F_MAX) -> np.ndarray:
    if not 0 <= f < f_max:
        raise IndexOutOfRange(f"frame {f} outside [0, {f_max})")
    return sinusoidal_table(f, d_model)


def tree_path_code(topology: SkeletonTopology, j: int, max_depth: int = MAX_DEPTH,
                   max_branch: int = MAX_BRANCH) -> np.ndarray:
    """One-hot child ordinal for every step of the root-to-``j`` path.

    Level ``k`` occupies ``code[k*max_branch:(k+1)*max_branch]``; levels below
    the joint's depth stay zero, so the root is the zero vector.
    """
    path = []
    k = j
    while topology.parents[k] is not None:
        p = topology.parents[k]
        path.append(topology.children[p].index(k))
        k = p
    path.reverse()
    if len(path) > max_depth:
        raise DepthExceeded(f"joint {j} sits at depth {len(path)} > {max_depth}")
    code = np.zeros(max_depth * max_branch)
    for level, ordinal in enumerate(path):
        if ordinal >= max_branch:
            raise BranchExceeded(f"joint {j}: child ordinal {ordinal} >= {max_branch}")
        code[level * max_branch + ordinal] = 1.0
    return code


def tree_path_codes(topology: SkeletonTopology, max_depth: int = MAX_DEPTH,
                    max_branch: int = MAX_BRANCH) -> np.ndarray:
    return np.stack([tree_path_code(topology, j, max_depth, max_branch)
                     for j in range(topology.num_joints)])


def rest_features(offsets, bands: int = REST_BANDS) -> np.ndarray:
    """sin/cos of 2^k * pi * coordinate, k < bands, per axis.

    Layout for a single offset is ``[axis][band][sin, cos]`` flattened, so the
    width is ``6 * bands``.
    """
    x = np.asarray(offsets, dtype=np.float64)
    scaled = x[..., :, None] * (np.pi * 2.0 ** np.arange(bands))
    feats = np.stack([np.sin(scaled), np.cos(scaled)], axis=-1)
    return feats.reshape(x.shape[:-1] + (6 * bands,))


def silu(x):
    return x / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class Mlp:
    """Linear -> SiLU -> Linear with weights stored as (out, in)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __call__(self, x):
        h = silu(np.asarray(x, dtype=np.float64) @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, seed: int, hidden: int = None) -> "Mlp":
        """Uniform fan-in initialisation, the same scheme torch Linear uses."""
        hidden = hidden or out_dim
        rng = np.random.default_rng(seed)
        b_in, b_h = 1.0 / np.sqrt(in_dim), 1.0 / np.sqrt(hidden)
        return cls(rng.uniform(-b_in, b_in, (hidden, in_dim)), rng.uniform(-b_in, b_in, hidden),
                   rng.uniform(-b_h, b_h, (out_dim, hidden)), rng.uniform(-b_h, b_h, out_dim))

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, hidden: int = None) -> "Mlp":
        hidden = hidden or out_dim
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden),
                   np.zeros((out_dim, hidden)), np.zeros(out_dim))


def tree_pe(topology: SkeletonTopology, j: int, mlp: Mlp, max_depth: int = MAX_DEPTH,
            max_branch: int = MAX_BRANCH) -> np.ndarray:
    return mlp(tree_path_code(topology, j, max_depth, max_branch))


def rest_pe(rest_offset, bands: int, mlp: Mlp) -> np.ndarray:
    return mlp(rest_features(rest_offset, bands))


@dataclass(frozen=True)
class EncodingTable:
    frame_pe: np.ndarray   # (F_max, D')
    tree_pe: np.ndarray    # (J, D')
    rest_pe: np.ndarray    # (J, D')
    tree_mlp: Mlp
    rest_mlp: Mlp

    @property
    def d_model(self) -> int:
        return self.frame_pe.shape[1]

    def token_offsets(self, n_frames: int) -> np.ndarray:
        """(F, J, D') sum of the three encodings."""
        return (self.frame_pe[:n_frames, None, :] + self.tree_pe[None] + self.rest_pe[None])

    def tokens(self, z: np.ndarray) -> np.ndarray:
        """Add the encodings to projected tokens ``z`` of shape (F, J, D')."""
        return z + self.token_offsets(z.shape[0])


def build_encoding_table(rig: Rig, d_model: int, tree_mlp: Mlp, rest_mlp: Mlp,
                         f_max: int = F_MAX, bands: int = REST_BANDS,
                         max_depth: int = MAX_DEPTH, max_branch: int = MAX_BRANCH) -> EncodingTable:
    codes = tree_path_codes(rig.topology, max_depth, max_branch)
    return EncodingTable(
        frame_pe=sinusoidal_table(np.arange(f_max), d_model),
        tree_pe=tree_mlp(codes),
        rest_pe=rest_mlp(rest_features(rig.rest_offsets, bands)),
        tree_mlp=tree_mlp,
        rest_mlp=rest_mlp,
    )


def seeded_table(rig: Rig, d_model: int = 384, seed: int = 0, f_max: int = F_MAX,
                 bands: int = REST_BANDS, max_depth: int = MAX_DEPTH,
                 max_branch: int = MAX_BRANCH) -> EncodingTable:
    """Table with frozen random heads, for use without a trained model."""
    s_tree, s_rest = np.random.SeedSequence(seed).generate_state(2)
    return build_encoding_table(
        rig, d_model, Mlp.init(max_depth * max_branch, d_model, int(s_tree)),
        Mlp.init(6 * bands, d_model, int(s_rest)), f_max, bands, max_depth, max_branch)
