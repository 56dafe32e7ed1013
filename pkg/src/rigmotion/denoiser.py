"""Rig-agnostic motion diffusion denoiser.

Every (frame, joint) pair is its own token. Spatial blocks attend across
the joints of a frame, temporal blocks across the frames of a joint, and
all blocks are conditioned through adaLN-Zero modulation. Training runs in
two stages: a pose model (spatial blocks only, every frame an independent
sample) and, on top of the frozen pose model, the temporal blocks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from . import encodings as enc
from .skeleton import F_MAX, J_MAX, Motion, Rig, wrap_degrees

POSE_ONLY = "PoseOnly"
MOTION = "Motion"


class DenoiserError(ValueError):
    pass


class ShapeMismatch(DenoiserError):
    pass


class StageMismatch(DenoiserError):
    pass


class FrozenWeightViolation(RuntimeError):
    pass


class UntrainedModel(RuntimeError):
    pass


class OverlapTooLarge(DenoiserError):
    pass


@dataclass(frozen=True)
class DenoiserConfig:
    depth: int = 12
    d_model: int = 384
    heads: int = 6
    j_max: int = J_MAX
    f_max: int = F_MAX
    rotation_dim: int = 3
    cond_dim: int = 512
    cfg_dropout: float = 0.1
    stage: str = POSE_ONLY
    timesteps: int = 1000
    mlp_ratio: float = 4.0
    tree_depth: int = enc.MAX_DEPTH
    tree_branch: int = enc.MAX_BRANCH
    rest_bands: int = enc.REST_BANDS
    time_freq_dim: int = 256

    def __post_init__(self):
        if self.d_model % self.heads:
            raise DenoiserError(f"d_model {self.d_model} is not divisible by heads {self.heads}")
        if self.d_model % 2:
            raise DenoiserError("d_model must be even")
        if self.stage not in (POSE_ONLY, MOTION):
            raise DenoiserError(f"unknown stage {self.stage!r}")
        if not 0.0 <= self.cfg_dropout <= 1.0:
            raise DenoiserError("cfg_dropout must lie in [0, 1]")

    @classmethod
    def desk(cls, **overrides) -> "DenoiserConfig":
        """Small preset that trains in minutes on one CPU core."""
        base = dict(depth=2, d_model=64, heads=4, cond_dim=64, timesteps=50, time_freq_dim=64)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiserConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- schedule

@dataclass(frozen=True)
class NoiseSchedule:
    alphas_cumprod: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alphas_cumprod)

    @classmethod
    def cosine(cls, T: int = 1000, s: float = 0.008, max_beta: float = 0.999) -> "NoiseSchedule":
        def f(u):
            return math.cos((u + s) / (1 + s) * math.pi / 2) ** 2
        betas = np.array([min(1 - f((i + 1) / T) / f(i / T), max_beta) for i in range(T)])
        return cls(np.cumprod(1.0 - betas))

    @property
    def betas(self) -> np.ndarray:
        prev = np.concatenate([[1.0], self.alphas_cumprod[:-1]])
        return 1.0 - self.alphas_cumprod / prev

    def posterior(self, t: int):
        """Coefficients (on x0, on x_t) and variance of q(x_{t-1} | x_t, x0)."""
        abar = self.alphas_cumprod[t]
        abar_prev = self.alphas_cumprod[t - 1] if t > 0 else 1.0
        beta = 1.0 - abar / abar_prev
        c0 = math.sqrt(abar_prev) * beta / (1.0 - abar)
        ct = math.sqrt(abar / abar_prev) * (1.0 - abar_prev) / (1.0 - abar)
        var = beta * (1.0 - abar_prev) / (1.0 - abar)
        return c0, ct, var


def q_sample(x0: torch.Tensor, t, noise: torch.Tensor, schedule: NoiseSchedule,
             mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """``sqrt(abar_t) x0 + sqrt(1 - abar_t) noise``; ``t`` is an int or per-sample."""
    abar = torch.as_tensor(schedule.alphas_cumprod, dtype=x0.dtype)[torch.as_tensor(t)]
    abar = abar.reshape(abar.shape + (1,) * (x0.dim() - abar.dim()))
    x = abar.sqrt() * x0 + (1.0 - abar).sqrt() * noise
    if mask is not None:
        x = x * mask
    return x


def guide(cond_pred: torch.Tensor, uncond_pred: torch.Tensor, w: float) -> torch.Tensor:
    """Classifier-free guidance in x0 space."""
    if w == 1.0:
        return cond_pred
    if w == 0.0:
        return uncond_pred
    return uncond_pred + w * (cond_pred - uncond_pred)


# ---------------------------------------------------------------- normalization

@dataclass(frozen=True)
class Normalizer:
    """Per-channel statistics of rotations in radians."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, motions: Sequence[Motion], min_std: float = 1e-3) -> "Normalizer":
        rad = np.concatenate([np.radians(m.rotations).reshape(-1, 3) for m in motions])
        return cls(rad.mean(axis=0), np.maximum(rad.std(axis=0), min_std))

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(np.zeros(3), np.ones(3))

    def normalize(self, degrees) -> np.ndarray:
        return (np.radians(degrees) - self.mean) / self.std

    def denormalize(self, x) -> np.ndarray:
        return np.degrees(np.asarray(x, dtype=np.float64) * self.std + self.mean)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(np.asarray(data["mean"], float), np.asarray(data["std"], float))


# ---------------------------------------------------------------- rig features

@dataclass
class RigFeatures:
    tree_codes: torch.Tensor   # (B, J, depth * branch)
    rest_feats: torch.Tensor   # (B, J, 6 * bands)
    joint_mask: torch.Tensor   # (B, J) bool, True for real joints

    @property
    def num_joints(self) -> int:
        return self.joint_mask.shape[1]

    def permute_joints(self, perm) -> "RigFeatures":
        return RigFeatures(self.tree_codes[:, perm], self.rest_feats[:, perm],
                           self.joint_mask[:, perm])


def rig_features(rigs: Sequence[Rig], config: DenoiserConfig, n_joints: Optional[int] = None,
                 dtype=torch.float32) -> RigFeatures:
    """Raw encodings for a batch of rigs, zero-padded to ``n_joints``."""
    n = n_joints or max(r.num_joints for r in rigs)
    if n > config.j_max or max(r.num_joints for r in rigs) > n:
        raise ShapeMismatch(f"rigs need {max(r.num_joints for r in rigs)} joints; "
                            f"padding to {n} with j_max {config.j_max}")
    tree_dim = config.tree_depth * config.tree_branch
    codes = np.zeros((len(rigs), n, tree_dim))
    feats = np.zeros((len(rigs), n, 6 * config.rest_bands))
    mask = np.zeros((len(rigs), n), dtype=bool)
    for b, rig in enumerate(rigs):
        J = rig.num_joints
        codes[b, :J] = enc.tree_path_codes(rig.topology, config.tree_depth, config.tree_branch)
        feats[b, :J] = enc.rest_features(rig.rest_offsets, config.rest_bands)
        mask[b, :J] = True
    return RigFeatures(torch.as_tensor(codes, dtype=dtype), torch.as_tensor(feats, dtype=dtype),
                       torch.as_tensor(mask))


# ---------------------------------------------------------------- network

def two_layer(in_dim: int, out_dim: int, hidden: Optional[int] = None) -> nn.Sequential:
    hidden = hidden or out_dim
    return nn.Sequential(nn.Linear(in_dim, hidden), nn.SiLU(), nn.Linear(hidden, out_dim))


def modulate(x, shift, scale):
    return x * (1 + scale) + shift


class MaskedAttention(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, x, key_mask):
        n, length, d = x.shape
        h = self.heads
        q, k, v = self.qkv(x).reshape(n, length, 3, h, d // h).permute(2, 0, 3, 1, 4)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(d // h)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        out = scores.softmax(dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(n, length, d))


class AdaLNBlock(nn.Module):
    """Transformer block whose norms are modulated by the condition token.

    The modulation layer starts at zero, so a fresh block is the identity.
    """

    def __init__(self, d_model: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model, elementwise_affine=False, eps=1e-6)
        self.attn = MaskedAttention(d_model, heads)
        self.norm2 = nn.LayerNorm(d_model, elementwise_affine=False, eps=1e-6)
        hidden = int(d_model * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(d_model, hidden), nn.GELU(approximate="tanh"),
                                 nn.Linear(hidden, d_model))
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(d_model, 6 * d_model))
        nn.init.zeros_(self.ada[1].weight)
        nn.init.zeros_(self.ada[1].bias)

    def forward(self, x, c, key_mask):
        shift1, scale1, gate1, shift2, scale2, gate2 = self.ada(c)[:, None, :].chunk(6, dim=-1)
        x = x + gate1 * self.attn(modulate(self.norm1(x), shift1, scale1), key_mask)
        x = x + gate2 * self.mlp(modulate(self.norm2(x), shift2, scale2))
        return x


class FinalLayer(nn.Module):
    def __init__(self, d_model: int, out_dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(d_model, elementwise_affine=False, eps=1e-6)
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(d_model, 2 * d_model))
        self.linear = nn.Linear(d_model, out_dim)
        nn.init.zeros_(self.ada[1].weight)
        nn.init.zeros_(self.ada[1].bias)

    def forward(self, x, c):
        shift, scale = self.ada(c).chunk(2, dim=-1)
        while shift.dim() < x.dim():
            shift, scale = shift.unsqueeze(1), scale.unsqueeze(1)
        return self.linear(modulate(self.norm(x), shift, scale))


def timestep_features(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class MotionDenoiser(nn.Module):
    """Predicts clean rotations x0 from noised ones for any rig.

    Inputs are normalized rotations ``x`` of shape (B, F, J, 3), integer
    timesteps ``t`` of shape (B,), condition vectors (B, cond_dim), rig
    features and a (B, F) frame mask.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.input_proj = nn.Linear(config.rotation_dim, d)
        self.tree_head = two_layer(config.tree_depth * config.tree_branch, d)
        self.rest_head = two_layer(6 * config.rest_bands, d)
        self.time_head = two_layer(config.time_freq_dim, d)
        self.cond_head = two_layer(config.cond_dim, d)
        self.null_cond = nn.Parameter(torch.zeros(config.cond_dim))
        self.spatial = nn.ModuleList(AdaLNBlock(d, config.heads, config.mlp_ratio)
                                     for _ in range(config.depth))
        self.final = FinalLayer(d, config.rotation_dim)
        self.register_buffer("frame_table", torch.as_tensor(
            enc.sinusoidal_table(np.arange(config.f_max), d), dtype=torch.float32))
        self.trained_steps = 0
        if config.stage == MOTION:
            self._add_temporal()

    def _add_temporal(self):
        d = self.config.d_model
        self.temporal = nn.ModuleList(AdaLNBlock(d, self.config.heads, self.config.mlp_ratio)
                                      for _ in range(self.config.depth))
        # zero output layer: the frame encoding starts switched off, so the
        # motion model initially reproduces the pose model frame by frame
        self.frame_head = two_layer(d, d)
        nn.init.zeros_(self.frame_head[2].weight)
        nn.init.zeros_(self.frame_head[2].bias)

    @property
    def stage(self) -> str:
        return self.config.stage

    def to_motion_stage(self) -> "MotionDenoiser":
        """Add temporal blocks and freeze everything learned in the pose stage."""
        if self.stage == MOTION:
            return self
        for p in self.parameters():
            p.requires_grad_(False)
        self.config = replace(self.config, stage=MOTION)
        p0 = next(self.parameters())
        self._add_temporal()
        self.temporal.to(dtype=p0.dtype)
        self.frame_head.to(dtype=p0.dtype)
        return self

    def motion_parameters(self):
        """Parameters trained in the motion stage."""
        return list(self.temporal.parameters()) + list(self.frame_head.parameters())

    def frozen_parameters(self):
        trainable = {id(p) for p in self.motion_parameters()}
        return [(n, p) for n, p in self.named_parameters() if id(p) not in trainable]

    # -- pieces ---------------------------------------------------------

    def condition_token(self, t, cond, drop=None):
        """Fused timestep + condition token z_tk, (B, D)."""
        dtype = self.input_proj.weight.dtype
        cond = cond.to(dtype)
        if drop is not None:
            cond = torch.where(drop[:, None], self.null_cond.expand_as(cond), cond)
        t_emb = self.time_head(timestep_features(t, self.config.time_freq_dim).to(dtype))
        return t_emb + self.cond_head(cond)

    def null_condition(self, batch: int) -> torch.Tensor:
        return self.null_cond.detach().expand(batch, -1)

    def encoding_offsets(self, rig: RigFeatures, n_frames: int, stage: str):
        """Additive encodings (B, F, J, D): frame PE (motion stage) + TreePE + RestPE."""
        dtype = self.input_proj.weight.dtype
        per_joint = self.tree_head(rig.tree_codes.to(dtype)) + self.rest_head(rig.rest_feats.to(dtype))
        out = per_joint[:, None, :, :]
        if stage == MOTION:
            frame = self.frame_head(self.frame_table[:n_frames].to(dtype))
            out = out + frame[None, :, None, :]
        return out

    def tokenize(self, x, rig: RigFeatures, frame_mask, stage: Optional[str] = None):
        stage = self._check_stage(stage)
        valid = self._valid(x, rig, frame_mask)
        x = x * valid[..., None]
        z = self.input_proj(x) + self.encoding_offsets(rig, x.shape[1], stage)
        return z * valid[..., None]

    def _check_stage(self, stage):
        stage = stage or self.stage
        if stage == MOTION and self.stage != MOTION:
            raise StageMismatch("temporal blocks requested from a pose-stage model")
        if stage not in (POSE_ONLY, MOTION):
            raise StageMismatch(f"unknown stage {stage!r}")
        return stage

    def _valid(self, x, rig: RigFeatures, frame_mask):
        if x.dim() != 4 or x.shape[-1] != self.config.rotation_dim:
            raise ShapeMismatch(f"x must be (B, F, J, {self.config.rotation_dim}), got {tuple(x.shape)}")
        b, f, j, _ = x.shape
        if j != rig.num_joints or rig.joint_mask.shape[0] != b:
            raise ShapeMismatch(f"x has {j} joints x {b} samples, rig features "
                                f"{tuple(rig.joint_mask.shape)}")
        if j > self.config.j_max or f > self.config.f_max:
            raise ShapeMismatch(f"{f} frames x {j} joints exceeds ({self.config.f_max}, {self.config.j_max})")
        if frame_mask is None:
            frame_mask = torch.ones(b, f, dtype=torch.bool)
        if tuple(frame_mask.shape) != (b, f):
            raise ShapeMismatch(f"frame mask shape {tuple(frame_mask.shape)} != {(b, f)}")
        return frame_mask[:, :, None] & rig.joint_mask[:, None, :]

    # -- forward --------------------------------------------------------

    def forward(self, x, t, cond, rig: RigFeatures, frame_mask=None, drop=None,
                stage: Optional[str] = None):
        stage = self._check_stage(stage)
        b, f, j, _ = x.shape
        if frame_mask is None:
            frame_mask = torch.ones(b, f, dtype=torch.bool)
        valid = self._valid(x, rig, frame_mask)
        z = self.tokenize(x, rig, frame_mask, stage)
        c = self.condition_token(t, cond, drop)
        d = z.shape[-1]
        c_frames = c.repeat_interleave(f, dim=0)
        c_joints = c.repeat_interleave(j, dim=0)
        jmask = rig.joint_mask.repeat_interleave(f, dim=0)
        fmask = frame_mask.repeat_interleave(j, dim=0)
        for k, block in enumerate(self.spatial):
            z = block(z.reshape(b * f, j, d), c_frames, jmask).reshape(b, f, j, d)
            if stage == MOTION:
                zt = z.permute(0, 2, 1, 3).reshape(b * j, f, d)
                zt = self.temporal[k](zt, c_joints, fmask)
                z = zt.reshape(b, j, f, d).permute(0, 2, 1, 3)
        out = self.final(z, c)
        return out * valid[..., None]


# ---------------------------------------------------------------- batches

@dataclass
class Batch:
    x0: torch.Tensor           # (B, F, J, 3) normalized
    frame_mask: torch.Tensor   # (B, F)
    rig: RigFeatures
    cond: torch.Tensor         # (B, cond_dim)

    @property
    def valid(self):
        return self.frame_mask[:, :, None] & self.rig.joint_mask[:, None, :]


def make_batch(motions: Sequence[Motion], conds, config: DenoiserConfig, normalizer: Normalizer,
               dtype=torch.float32, n_frames: Optional[int] = None) -> Batch:
    """Pad motions (already at most f_max frames) into one batch."""
    n_frames = n_frames or max(m.num_frames for m in motions)
    rig = rig_features([m.rig for m in motions], config, dtype=dtype)
    x0 = np.zeros((len(motions), n_frames, rig.num_joints, config.rotation_dim))
    fmask = np.zeros((len(motions), n_frames), dtype=bool)
    for b, m in enumerate(motions):
        if m.num_frames > n_frames:
            raise ShapeMismatch(f"motion with {m.num_frames} frames in a {n_frames}-frame batch")
        x0[b, :m.num_frames, :m.rig.num_joints] = normalizer.normalize(m.rotations)
        fmask[b, :m.num_frames] = True
    cond = torch.as_tensor(np.asarray(conds, dtype=np.float64), dtype=dtype)
    if cond.shape != (len(motions), config.cond_dim):
        raise ShapeMismatch(f"conditions have shape {tuple(cond.shape)}, "
                            f"expected {(len(motions), config.cond_dim)}")
    return Batch(torch.as_tensor(x0, dtype=dtype), torch.as_tensor(fmask), rig, cond)


def masked_mse(pred, target, valid):
    w = valid[..., None].to(pred.dtype)
    return ((pred - target) ** 2 * w).sum() / (w.sum() * pred.shape[-1]).clamp_min(1.0)


# ---------------------------------------------------------------- training

class Trainer:
    """Runs both training stages.

    In the pose stage every frame of every motion is an independent
    single-frame sample. In the motion stage a random window of at most
    ``f_max`` frames is drawn from each motion and only the temporal blocks
    and the frame encoding head receive updates.
    """

    def __init__(self, model: MotionDenoiser, normalizer: Normalizer,
                 schedule: Optional[NoiseSchedule] = None, lr: float = 1e-3,
                 weight_decay: float = 0.0, seed: int = 0, max_poses: int = 256,
                 check_frozen: bool = True):
        self.model = model
        self.normalizer = normalizer
        self.schedule = schedule or NoiseSchedule.cosine(model.config.timesteps)
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_poses = max_poses
        self.check_frozen = check_frozen
        self.rng = np.random.default_rng(seed)
        self.gen = torch.Generator().manual_seed(seed)
        self.null_count = 0
        self.sample_count = 0
        self.losses = []
        self._setup_optimizer()

    def _setup_optimizer(self):
        model = self.model
        if model.stage == MOTION:
            params = model.motion_parameters()
            for _, p in model.frozen_parameters():
                p.requires_grad_(False)
            self._frozen = [(n, p.detach().clone()) for n, p in model.frozen_parameters()]
        else:
            params = [p for p in model.parameters() if p.requires_grad]
            self._frozen = []
        self.optimizer = torch.optim.AdamW(params, lr=self.lr, weight_decay=self.weight_decay)

    def promote(self):
        """Freeze the pose model and switch to motion-stage training."""
        self.model.to_motion_stage()
        self._setup_optimizer()

    def _pose_batch(self, motions, conds) -> Batch:
        poses, pose_conds = [], []
        for m, c in zip(motions, conds):
            for f in range(m.num_frames):
                poses.append(m.frames(f, f + 1))
                pose_conds.append(c)
        if len(poses) > self.max_poses:
            keep = np.sort(self.rng.choice(len(poses), self.max_poses, replace=False))
            poses = [poses[i] for i in keep]
            pose_conds = [pose_conds[i] for i in keep]
        return make_batch(poses, pose_conds, self.model.config, self.normalizer,
                          dtype=self.model.input_proj.weight.dtype)

    def _motion_batch(self, motions, conds) -> Batch:
        f_max = self.model.config.f_max
        chunks = []
        for m in motions:
            if m.num_frames > f_max:
                start = int(self.rng.integers(m.num_frames - f_max + 1))
                m = m.frames(start, start + f_max)
            chunks.append(m)
        return make_batch(chunks, conds, self.model.config, self.normalizer,
                          dtype=self.model.input_proj.weight.dtype)

    def make_batch(self, motions, conds) -> Batch:
        if self.model.stage == POSE_ONLY:
            return self._pose_batch(motions, conds)
        return self._motion_batch(motions, conds)

    def loss(self, batch: Batch, t=None, noise=None, drop=None):
        model = self.model
        b = batch.x0.shape[0]
        if t is None:
            t = torch.as_tensor(self.rng.integers(self.schedule.T, size=b))
        if noise is None:
            noise = torch.randn(batch.x0.shape, generator=self.gen, dtype=batch.x0.dtype)
        if drop is None:
            drop = torch.as_tensor(self.rng.random(b) < model.config.cfg_dropout)
        valid = batch.valid
        x_t = q_sample(batch.x0, t, noise, self.schedule, valid[..., None].to(batch.x0.dtype))
        pred = model(x_t, t, batch.cond, batch.rig, batch.frame_mask, drop=drop)
        self.null_count += int(drop.sum())
        self.sample_count += b
        return masked_mse(pred, batch.x0, valid)

    def step(self, motions: Sequence[Motion], conds) -> float:
        self.model.train()
        batch = self.make_batch(motions, conds)
        loss = self.loss(batch)
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.model.trained_steps += 1
        if self.check_frozen and self._frozen:
            params = dict(self.model.named_parameters())
            for name, ref in self._frozen:
                if not torch.equal(params[name].detach(), ref):
                    raise FrozenWeightViolation(f"frozen parameter {name} changed")
        value = float(loss.detach())
        self.losses.append(value)
        return value


# ---------------------------------------------------------------- sampling

def _noise_like(shape, gen, dtype):
    return torch.randn(shape, generator=gen, dtype=dtype)


@torch.no_grad()
def sample_normalized(model: MotionDenoiser, cond, rig: Rig, n_frames: int, guidance: float,
                      schedule: NoiseSchedule, gen: torch.Generator, known=None,
                      known_frames: int = 0) -> torch.Tensor:
    """Ancestral sampling in normalized space, returns x0 of shape (F, J, 3).

    ``known`` (shape (known_frames, J, 3)) pins the leading frames: after
    every step they are replaced by a forward-noised copy at the new level.
    """
    if model.trained_steps <= 0:
        raise UntrainedModel("the model has not been trained or loaded from a checkpoint")
    if n_frames > model.config.f_max:
        raise ShapeMismatch(f"{n_frames} frames exceeds f_max {model.config.f_max}")
    model.eval()
    dtype = model.input_proj.weight.dtype
    feats = rig_features([rig], model.config, dtype=dtype)
    shape = (1, n_frames, rig.num_joints, model.config.rotation_dim)
    cond = torch.as_tensor(np.asarray(cond, dtype=np.float64), dtype=dtype).reshape(1, -1)
    null = model.null_condition(1).to(dtype)
    stage = model.stage
    if known is not None:
        known = torch.as_tensor(np.asarray(known), dtype=dtype)[None]
    x = _noise_like(shape, gen, dtype)
    x0 = x
    for t in reversed(range(schedule.T)):
        tt = torch.full((1,), t, dtype=torch.long)
        if guidance == 0.0:
            x0 = model(x, tt, null, feats, stage=stage)
        elif guidance == 1.0:
            x0 = model(x, tt, cond, feats, stage=stage)
        else:
            x0 = guide(model(x, tt, cond, feats, stage=stage),
                       model(x, tt, null, feats, stage=stage), guidance)
        c0, ct, var = schedule.posterior(t)
        mean = c0 * x0 + ct * x
        if t > 0:
            x = mean + math.sqrt(var) * _noise_like(shape, gen, dtype)
        else:
            x = mean
        if known is not None and known_frames:
            if t > 0:
                noise = _noise_like(known.shape, gen, dtype)
                x[:, :known_frames] = q_sample(known, t - 1, noise, schedule)
            else:
                x[:, :known_frames] = known
    return x[0]


def to_motion(x_norm, rig: Rig, normalizer: Normalizer, frame_time: float) -> Motion:
    deg = wrap_degrees(normalizer.denormalize(np.asarray(x_norm, dtype=np.float64)))
    return Motion(rig, deg, frame_time)


def sample(model: MotionDenoiser, cond, rig: Rig, n_frames: int, guidance: float,
           schedule: NoiseSchedule, normalizer: Normalizer, seed: int = 0,
           frame_time: float = 1.0 / 30.0) -> Motion:
    gen = torch.Generator().manual_seed(seed)
    x = sample_normalized(model, cond, rig, n_frames, guidance, schedule, gen)
    return to_motion(x.numpy(), rig, normalizer, frame_time)


def linear_blend(n: int) -> np.ndarray:
    """Weights given to the incoming chunk across an ``n``-frame overlap."""
    return np.arange(1, n + 1, dtype=np.float64) / (n + 1)


def blend_chunks(chunks: Sequence[np.ndarray], overlap: int, curve=linear_blend) -> np.ndarray:
    """Join chunks (F_k, J, 3), cross-fading each ``overlap``-frame seam."""
    out = np.asarray(chunks[0], dtype=np.float64)
    for nxt in chunks[1:]:
        nxt = np.asarray(nxt, dtype=np.float64)
        if overlap:
            w = curve(overlap)[:, None, None]
            seam = (1.0 - w) * out[-overlap:] + w * nxt[:overlap]
            out = np.concatenate([out[:-overlap], seam, nxt[overlap:]])
        else:
            out = np.concatenate([out, nxt])
    return out


def sample_long(model: MotionDenoiser, conds: Sequence, rig: Rig, chunk_frames: int,
                overlap: int, guidance: float, schedule: NoiseSchedule, normalizer: Normalizer,
                seed: int = 0, frame_time: float = 1.0 / 30.0, curve=linear_blend,
                return_chunks: bool = False):
    """One chunk per condition; consecutive chunks share ``overlap`` frames.

    Each chunk after the first is in-painted from the trailing frames of the
    previous one, then the seams are cross-faded with ``curve``.
    """
    if not conds:
        raise DenoiserError("sample_long needs at least one condition")
    if not 0 <= overlap < min(chunk_frames, model.config.f_max):
        raise OverlapTooLarge(f"overlap {overlap} must be below the chunk length {chunk_frames}")
    gen = torch.Generator().manual_seed(seed)
    chunks_norm = []
    for k, cond in enumerate(conds):
        if k == 0 or overlap == 0:
            x = sample_normalized(model, cond, rig, chunk_frames, guidance, schedule, gen)
        else:
            known = chunks_norm[-1][-overlap:].numpy()
            x = sample_normalized(model, cond, rig, chunk_frames, guidance, schedule, gen,
                                  known=known, known_frames=overlap)
        chunks_norm.append(x)
    chunks = [wrap_degrees(normalizer.denormalize(c.numpy())) for c in chunks_norm]
    joined = blend_chunks(chunks, overlap, curve)
    motion = Motion(rig, joined, frame_time)
    return (motion, chunks) if return_chunks else motion


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: MotionDenoiser, normalizer: Normalizer, extra: Optional[dict] = None):
    """npz container: weights plus a JSON header with config and statistics."""
    import json

    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "normalizer": normalizer.to_dict(),
        "trained_steps": model.trained_steps,
        "extra": extra or {},
    }
    arrays = {f"w/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Returns ``(model, normalizer, meta)``."""
    import json

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        version = int(meta.get("format_version", 0))
        if version > CHECKPOINT_VERSION:
            raise DenoiserError(f"checkpoint format {version} is newer than {CHECKPOINT_VERSION}")
        config = DenoiserConfig.from_dict(meta["config"])
        state = {k[2:]: torch.as_tensor(data[k]) for k in data.files if k.startswith("w/")}
    model = MotionDenoiser(config)
    dtype = next(iter(state.values())).dtype if state else torch.float32
    model.to(dtype)
    model.load_state_dict(state)
    model.trained_steps = int(meta.get("trained_steps", 0))
    return model, Normalizer.from_dict(meta["normalizer"]), meta
