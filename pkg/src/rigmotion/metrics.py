"""Window coverage / novelty with AUC sweeps, plus FID, R-Precision,
Alignment and Multimodality over pluggable embeddings."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .skeleton import F_MAX, J_MAX, Motion, forward_kinematics


class MetricError(ValueError):
    pass


class WindowTooLarge(MetricError):
    pass


class EmptyWindows(MetricError):
    pass


class DimensionMismatch(MetricError):
    pass


class TooFewSamples(MetricError):
    pass


class SizeMismatch(MetricError):
    pass


class EmbeddingProvider(Protocol):
    """Maps a motion window to a fixed-width feature vector."""

    dim: int

    def __call__(self, window: Motion) -> np.ndarray: ...


class FKPoseProvider:
    """Root-relative FK joint positions per frame, zero-padded to ``j_max``
    joints and L2-normalized; a window is the mean of its frame embeddings."""

    def __init__(self, j_max: int = J_MAX):
        self.j_max = j_max
        self.dim = 3 * j_max

    def frames(self, motion: Motion) -> np.ndarray:
        pos = forward_kinematics(motion).positions
        pos = pos - pos[:, motion.rig.topology.root, None, :]
        if pos.shape[1] > self.j_max:
            raise DimensionMismatch(f"{pos.shape[1]} joints exceed provider width {self.j_max}")
        out = np.zeros((pos.shape[0], self.dim))
        out[:, :pos.shape[1] * 3] = pos.reshape(pos.shape[0], -1)
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        return out / np.where(norms > 0, norms, 1.0)

    def __call__(self, window: Motion) -> np.ndarray:
        return self.frames(window).mean(axis=0)

    def windows(self, motion: Motion, size: int) -> np.ndarray:
        """Embeddings of every stride-1 window, shape (L - size + 1, dim)."""
        per_frame = self.frames(motion)
        csum = np.concatenate([np.zeros((1, self.dim)), np.cumsum(per_frame, axis=0)])
        return (csum[size:] - csum[:-size]) / size


@dataclass(frozen=True)
class WindowSet:
    windows: list
    source_length: int
    size: int

    def __len__(self):
        return len(self.windows)


def window_size(ref_length: int, gen_length: int, f_max: int = F_MAX) -> int:
    return min(ref_length, gen_length, f_max)


def extract_windows(motion: Motion, size: int) -> WindowSet:
    if size < 1:
        raise MetricError("window size must be at least 1")
    n = motion.num_frames
    if n < size:
        raise WindowTooLarge(f"window of {size} frames in a {n}-frame motion")
    return WindowSet([motion.frames(i, i + size) for i in range(n - size + 1)], n, size)


def embed_windows(motion: Motion, size: int, provider) -> np.ndarray:
    if hasattr(provider, "windows"):
        if motion.num_frames < size:
            raise WindowTooLarge(f"window of {size} frames in a {motion.num_frames}-frame motion")
        return provider.windows(motion, size)
    return np.stack([provider(w) for w in extract_windows(motion, size).windows])


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"embedding widths {a.shape[1]} and {b.shape[1]} differ")
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    a = a / np.where(na > 0, na, 1.0)
    b = b / np.where(nb > 0, nb, 1.0)
    return np.clip(a @ b.T, -1.0, 1.0)


def _best_similarities(reference: Motion, generated: Motion, provider, f_max: int):
    size = window_size(reference.num_frames, generated.num_frames, f_max)
    ref = embed_windows(reference, size, provider)
    gen = embed_windows(generated, size, provider)
    if len(ref) == 0 or len(gen) == 0:
        raise EmptyWindows("no windows to compare")
    sim = cosine_matrix(ref, gen)
    return sim.max(axis=1), sim.max(axis=0)


def coverage_from_similarity(sim: np.ndarray, theta) -> np.ndarray:
    """``sim`` is (reference windows, generated windows)."""
    best = np.max(sim, axis=1)
    return np.mean(best[None, :] > np.atleast_1d(theta)[:, None], axis=1)


def novelty_from_similarity(sim: np.ndarray, theta) -> np.ndarray:
    best = np.max(sim, axis=0)
    return np.mean((1.0 - best)[None, :] > np.atleast_1d(theta)[:, None], axis=1)


def coverage(reference: Motion, generated: Motion, theta, provider=None, f_max: int = F_MAX):
    """Fraction of reference windows whose best match among generated windows
    has cosine similarity above ``theta`` (scalar or array of thresholds)."""
    provider = provider or FKPoseProvider()
    best_ref, _ = _best_similarities(reference, generated, provider, f_max)
    out = np.mean(best_ref[None, :] > np.atleast_1d(theta)[:, None], axis=1)
    return float(out[0]) if np.ndim(theta) == 0 else out


def novelty(generated: Motion, reference: Motion, theta, provider=None, f_max: int = F_MAX):
    """Fraction of generated windows with ``1 - best similarity > theta``."""
    provider = provider or FKPoseProvider()
    _, best_gen = _best_similarities(reference, generated, provider, f_max)
    out = np.mean((1.0 - best_gen)[None, :] > np.atleast_1d(theta)[:, None], axis=1)
    return float(out[0]) if np.ndim(theta) == 0 else out


def theta_grid(step: float = 0.01) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


def auc_sweep(curve: Callable, grid_step: float = 0.01) -> float:
    """Trapezoidal area under ``theta -> value`` on a uniform grid over [0, 1].

    ``curve`` may be vectorized (accepting the whole grid) or scalar.
    """
    grid = theta_grid(grid_step)
    try:
        values = np.asarray(curve(grid), dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError
    except (TypeError, ValueError):
        values = np.array([curve(float(t)) for t in grid])
    return float(np.trapezoid(values, grid))


def gaussian_stats(x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise TooFewSamples("need at least two samples for a covariance")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """``|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))``.

    The trace of the cross term is taken as ``tr((S1^(1/2) S2 S1^(1/2))^(1/2))``,
    which only needs symmetric eigendecompositions.
    """
    root1 = _sqrt_psd(sigma1)
    cross = root1 @ sigma2 @ root1
    w = np.linalg.eigvalsh(0.5 * (cross + cross.T))
    tr_cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = np.asarray(mu1) - np.asarray(mu2)
    value = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * tr_cross)
    return max(value, 0.0)


def fid(real_embeddings, generated_embeddings) -> float:
    real = np.asarray(real_embeddings, dtype=np.float64)
    gen = np.asarray(generated_embeddings, dtype=np.float64)
    if real.ndim == 1:
        real = real[:, None]
    if gen.ndim == 1:
        gen = gen[:, None]
    if real.shape[1:] != gen.shape[1:]:
        raise DimensionMismatch(f"embedding widths {real.shape[1:]} and {gen.shape[1:]} differ")
    return frechet_distance(*gaussian_stats(real), *gaussian_stats(gen))


def r_precision(query_embeddings, target_embeddings, k: int = 1) -> float:
    """Fraction of queries whose paired target ranks within the top ``k``
    by cosine similarity; ties are resolved in favour of the true target."""
    q = np.asarray(query_embeddings, dtype=np.float64)
    t = np.asarray(target_embeddings, dtype=np.float64)
    if q.shape[0] != t.shape[0]:
        raise SizeMismatch(f"{q.shape[0]} queries for {t.shape[0]} targets")
    sim = cosine_matrix(q, t)
    true = np.diag(sim)
    rank = np.sum(sim > true[:, None], axis=1)
    return float(np.mean(rank < k))


def alignment(a, b) -> float:
    """Mean cosine similarity of matched pairs ``(a[i], b[i])``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeMismatch(f"pair arrays have shapes {a.shape} and {b.shape}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    cos = np.sum(a * b, axis=1) / np.where(na * nb > 0, na * nb, 1.0)
    return float(np.mean(np.clip(cos, -1.0, 1.0)))


def multimodality(groups: Sequence, seed: Optional[int] = 0) -> float:
    """Mean distance over disjoint random pairs within each condition group,
    averaged over groups."""
    rng = np.random.default_rng(seed)
    per_group = []
    for g in groups:
        g = np.asarray(g, dtype=np.float64)
        if g.shape[0] < 2:
            raise TooFewSamples("each condition group needs at least two samples")
        order = rng.permutation(g.shape[0])
        n_pairs = g.shape[0] // 2
        a, b = g[order[:n_pairs]], g[order[n_pairs:2 * n_pairs]]
        per_group.append(np.mean(np.linalg.norm(a - b, axis=1)))
    if not per_group:
        raise TooFewSamples("no condition groups")
    return float(np.mean(per_group))


@dataclass
class MetricReport:
    thetas: list = field(default_factory=list)
    coverage_curve: list = field(default_factory=list)
    novelty_curve: list = field(default_factory=list)
    coverage_auc: Optional[float] = None
    novelty_auc: Optional[float] = None
    scalars: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "curves": {
                "coverage": [[t, v] for t, v in zip(self.thetas, self.coverage_curve)],
                "novelty": [[t, v] for t, v in zip(self.thetas, self.novelty_curve)],
            },
            "auc": {"coverage": self.coverage_auc, "novelty": self.novelty_auc},
            "scalars": dict(self.scalars),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        cov = data["curves"]["coverage"]
        nov = data["curves"]["novelty"]
        return cls([t for t, _ in cov], [v for _, v in cov], [v for _, v in nov],
                   data["auc"]["coverage"], data["auc"]["novelty"], dict(data["scalars"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "coverage", "novelty"])
        for row in zip(self.thetas, self.coverage_curve, self.novelty_curve):
            w.writerow([f"{v:.6g}" for v in row])
        return buf.getvalue()


def coverage_novelty_report(pairs: Sequence, provider=None, grid_step: float = 0.01,
                            f_max: int = F_MAX) -> MetricReport:
    """Average coverage and novelty curves over ``(reference, generated)`` pairs."""
    provider = provider or FKPoseProvider()
    grid = theta_grid(grid_step)
    cov = np.zeros_like(grid)
    nov = np.zeros_like(grid)
    for reference, generated in pairs:
        size = window_size(reference.num_frames, generated.num_frames, f_max)
        sim = cosine_matrix(embed_windows(reference, size, provider),
                            embed_windows(generated, size, provider))
        cov += coverage_from_similarity(sim, grid)
        nov += novelty_from_similarity(sim, grid)
    if not pairs:
        raise EmptyWindows("no motion pairs to evaluate")
    cov /= len(pairs)
    nov /= len(pairs)
    return MetricReport(grid.tolist(), cov.tolist(), nov.tolist(),
                        float(np.trapezoid(cov, grid)), float(np.trapezoid(nov, grid)))
