"""``rigmotion`` command line: validate, preprocess, augment, train, sample, eval.

Every subcommand accepts ``--config run.json``; explicit flags override the
file, and ``RIGMOTION_SEED`` supplies the seed when neither sets one. The
resolved settings are written next to the outputs as ``run_config.json``.

Exit codes: 0 success, 1 data error, 2 config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import augment as aug
from . import bvh
from .skeleton import SkeletonError

log = logging.getLogger("rigmotion")

DATA_ERROR = 1
CONFIG_ERROR = 2


class ConfigError(ValueError):
    pass


class MissingCheckpoint(ConfigError):
    pass


@dataclass
class RunConfig:
    manifest: Optional[str] = None
    output: Optional[str] = None
    seed: Optional[int] = None
    # preprocess
    forward: str = "-Y"
    up: str = "+Z"
    # augment
    policy: object = None          # path or inline dict
    variants: int = 0
    workers: int = 1
    # train
    denoiser: object = "desk"      # "desk", "full", path or inline dict
    stage: str = "both"            # PoseOnly, Motion or both
    pose_steps: int = 1000
    motion_steps: int = 1000
    lr: float = 1e-3
    batch_size: int = 8
    checkpoint: Optional[str] = None
    caption_level: str = "mid"
    # sample
    rig: Optional[str] = None
    captions: list = field(default_factory=list)
    frames: int = 90
    chunk_frames: int = 90
    overlap: int = 15
    guidance: float = 2.5
    # eval
    reference: Optional[str] = None
    generated: Optional[str] = None
    grid_step: float = 0.01

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) in (None, "", [])]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


# ---------------------------------------------------------------- logging

class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        payload = {"level": record.levelname.lower(), "msg": record.getMessage()}
        payload.update(getattr(record, "fields", {}))
        return json.dumps(payload, default=str)


def setup_logging(quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(message)s") if quiet else JsonLineFormatter())
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False


def emit(msg: str, level=logging.INFO, **fields_):
    log.log(level, msg, extra={"fields": fields_})


# ---------------------------------------------------------------- config

def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    cfg = RunConfig.from_dict(data)
    if cfg.seed is None:
        env = os.environ.get("RIGMOTION_SEED")
        try:
            cfg.seed = int(env) if env not in (None, "") else 0
        except ValueError as exc:
            raise ConfigError(f"RIGMOTION_SEED={env!r} is not an integer") from exc
    return cfg


def _load_json_ref(ref, what: str) -> Optional[dict]:
    if ref is None or isinstance(ref, dict):
        return ref
    try:
        return json.loads(Path(ref).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} {ref}: {exc}") from exc


def load_policy(ref) -> aug.AugmentationPolicy:
    data = _load_json_ref(ref, "policy")
    try:
        return aug.AugmentationPolicy.from_dict(data or {})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid augmentation policy: {exc}") from exc


def load_denoiser_config(ref):
    from .denoiser import DenoiserConfig, DenoiserError

    if ref in (None, "desk"):
        return DenoiserConfig.desk()
    if ref == "full":
        return DenoiserConfig()
    data = _load_json_ref(ref, "denoiser config")
    try:
        preset = data.pop("preset", None) if isinstance(data, dict) else None
        return DenoiserConfig.desk(**data) if preset == "desk" else DenoiserConfig(**data)
    except (TypeError, DenoiserError) as exc:
        raise ConfigError(f"invalid denoiser config: {exc}") from exc


def _out_dir(cfg: RunConfig) -> Path:
    cfg.require("output")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_run_config(out: Path, command: str, cfg: RunConfig) -> None:
    data = {"command": command, **cfg.to_dict()}
    (out / "run_config.json").write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _read_manifest(path) -> list:
    try:
        return bvh.read_manifest(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest {path}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_validate(cfg: RunConfig) -> int:
    cfg.require("manifest")
    entries = _read_manifest(cfg.manifest)
    if not entries:
        emit("0 files", files=0)
        return 0
    ok = 0
    for e in entries:
        try:
            doc = bvh.read_bvh(e.bvh_path)
            doc.rig.validate()
        except bvh.BvhSyntaxError as exc:
            emit(f"FAIL {e.bvh_path}:{exc.line}: {exc}", logging.ERROR,
                 file=str(e.bvh_path), line=exc.line, error=type(exc).__name__)
        except (bvh.BvhError, SkeletonError, OSError, UnicodeDecodeError) as exc:
            emit(f"FAIL {e.bvh_path}: {exc}", logging.ERROR,
                 file=str(e.bvh_path), error=type(exc).__name__)
        else:
            ok += 1
            emit(f"OK {e.bvh_path}", file=str(e.bvh_path), joints=doc.rig.num_joints,
                 frames=doc.motion.num_frames)
    emit(f"{ok}/{len(entries)} OK", ok=ok, files=len(entries))
    return 0 if ok == len(entries) else DATA_ERROR


def cmd_preprocess(cfg: RunConfig) -> int:
    cfg.require("manifest")
    entries = _read_manifest(cfg.manifest)
    out = _out_dir(cfg)
    written, failed = [], 0
    for i, e in enumerate(entries):
        try:
            doc = bvh.preprocess(bvh.read_bvh(e.bvh_path), cfg.forward, cfg.up)
        except (bvh.BvhError, SkeletonError, OSError) as exc:
            failed += 1
            emit(f"FAIL {e.bvh_path}: {exc}", logging.ERROR, file=str(e.bvh_path))
            continue
        target = out / f"{i:05d}_{Path(e.bvh_path).stem}.bvh"
        bvh.write_bvh_file(target, doc)
        written.append(bvh.ManifestEntry(target, e.captions, e.species_tag))
    bvh.write_manifest(out / "manifest.json", written)
    _save_run_config(out, "preprocess", cfg)
    emit(f"preprocessed {len(written)}/{len(entries)}", written=len(written), failed=failed)
    return DATA_ERROR if failed else 0


def _augment_one(job):
    """Worker: returns (index, [(bvh_text, records_json), ...]) or (index, error)."""
    index, path, policy, variants, seed = job
    try:
        motion = bvh.read_bvh(path).motion
        results = aug.expand_motion(motion, policy, variants, seed)
    except (bvh.BvhError, SkeletonError, aug.AugmentationError, OSError) as exc:
        return index, f"{type(exc).__name__}: {exc}"
    return index, [(bvh.write_bvh(m), [r.to_dict() for r in recs]) for m, recs in results]


def cmd_augment(cfg: RunConfig) -> int:
    cfg.require("manifest")
    if cfg.variants < 0:
        raise ConfigError("variants must be non-negative")
    policy = load_policy(cfg.policy)
    entries = _read_manifest(cfg.manifest)
    out = _out_dir(cfg)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(max(len(entries), 1))
    jobs = [(i, e.bvh_path, policy, cfg.variants, int(seeds[i])) for i, e in enumerate(entries)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_augment_one, jobs))
    else:
        results = [_augment_one(j) for j in jobs]

    written, failed = [], 0
    for (i, result), e in zip(results, entries):
        if isinstance(result, str):
            failed += 1
            emit(f"FAIL {e.bvh_path}: {result}", logging.ERROR, file=str(e.bvh_path))
            continue
        stem = f"{i:05d}_{Path(e.bvh_path).stem}"
        for k, (text, records) in enumerate(result):
            target = out / f"{stem}_v{k:03d}.bvh"
            target.write_text(text, encoding="utf-8")
            prov = {"source": str(e.bvh_path), "variant": k, "seed": int(seeds[i]),
                    "records": records}
            target.with_suffix(".json").write_text(json.dumps(prov, indent=2) + "\n",
                                                   encoding="utf-8")
            written.append(bvh.ManifestEntry(target, e.captions, e.species_tag))
    bvh.write_manifest(out / "manifest.json", written)
    _save_run_config(out, "augment", cfg)
    emit(f"wrote {len(written)} motions from {len(entries) - failed} inputs",
         motions=len(written), failed=failed)
    return DATA_ERROR if failed else 0


def _load_corpus(entries, level):
    motions = [bvh.read_bvh(e.bvh_path).motion for e in entries]
    return motions, [e.caption(level) for e in entries]


def _smoothed(values, window: int = 50) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    c = np.cumsum(np.concatenate([[0.0], v]))
    lo = np.maximum(np.arange(1, len(v) + 1) - window, 0)
    return (c[1:] - c[lo]) / (np.arange(1, len(v) + 1) - lo)


def cmd_train(cfg: RunConfig) -> int:
    import torch

    from . import denoiser as dn
    from .conditioning import HashingTextEmbedder

    cfg.require("manifest")
    if cfg.stage not in ("both", dn.POSE_ONLY, dn.MOTION):
        raise ConfigError(f"stage must be PoseOnly, Motion or both, not {cfg.stage!r}")
    out = _out_dir(cfg)
    torch.manual_seed(cfg.seed)
    if cfg.stage == dn.MOTION:
        if not cfg.checkpoint or not Path(cfg.checkpoint).exists():
            raise MissingCheckpoint("Motion stage training needs a PoseOnly checkpoint")
        model, normalizer, _ = dn.load_checkpoint(cfg.checkpoint)
        if model.stage != dn.POSE_ONLY:
            raise ConfigError("checkpoint is already a Motion-stage model")
    else:
        model, normalizer = dn.MotionDenoiser(load_denoiser_config(cfg.denoiser)), None

    entries = _read_manifest(cfg.manifest)
    if not entries:
        raise ConfigError("training manifest is empty")
    motions, captions = _load_corpus(entries, cfg.caption_level)
    normalizer = normalizer or dn.Normalizer.fit(motions)
    embed = HashingTextEmbedder(model.config.cond_dim)
    conds = embed.batch(captions)

    trainer = dn.Trainer(model, normalizer, lr=cfg.lr, seed=cfg.seed)
    if cfg.stage == dn.MOTION:
        trainer.promote()
    rng = np.random.default_rng(cfg.seed)
    rows = []

    def run(steps, stage):
        for s in range(steps):
            pick = rng.choice(len(motions), size=min(cfg.batch_size, len(motions)), replace=False)
            loss = trainer.step([motions[i] for i in pick], conds[pick])
            rows.append((len(rows), stage, loss))

    if cfg.stage in ("both", dn.POSE_ONLY):
        run(cfg.pose_steps, dn.POSE_ONLY)
    if cfg.stage == "both":
        trainer.promote()
    if cfg.stage in ("both", dn.MOTION):
        run(cfg.motion_steps, dn.MOTION)

    ckpt = out / "checkpoint.npz"
    dn.save_checkpoint(ckpt, model, normalizer, {"caption_level": cfg.caption_level})
    smooth = _smoothed([r[2] for r in rows]) if rows else []
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "stage", "loss", "smoothed"])
        for (step, stage, loss), sm in zip(rows, smooth):
            w.writerow([step, stage, f"{loss:.8g}", f"{sm:.8g}"])
    _save_run_config(out, "train", cfg)
    emit(f"trained {len(rows)} steps, checkpoint {ckpt}", steps=len(rows),
         final_loss=rows[-1][2] if rows else None)
    return 0


def _load_for_sampling(cfg: RunConfig):
    from . import denoiser as dn

    cfg.require("checkpoint", "rig")
    if not Path(cfg.checkpoint).exists():
        raise MissingCheckpoint(f"checkpoint not found: {cfg.checkpoint}")
    model, normalizer, _ = dn.load_checkpoint(cfg.checkpoint)
    doc = bvh.read_bvh(cfg.rig)
    return model, normalizer, doc


def _embed(model, captions):
    from .conditioning import HashingTextEmbedder

    return HashingTextEmbedder(model.config.cond_dim).batch(list(captions))


def cmd_sample(cfg: RunConfig) -> int:
    from . import denoiser as dn

    model, normalizer, doc = _load_for_sampling(cfg)
    captions = cfg.captions or [""]
    cond = _embed(model, captions[:1])[0]
    schedule = dn.NoiseSchedule.cosine(model.config.timesteps)
    motion = dn.sample(model, cond, doc.rig, cfg.frames, cfg.guidance, schedule, normalizer,
                       seed=cfg.seed, frame_time=doc.motion.frame_time)
    out = _out_dir(cfg)
    target = out / "sample.bvh"
    bvh.write_bvh_file(target, motion)
    _save_run_config(out, "sample", cfg)
    emit(f"wrote {target}", frames=motion.num_frames, joints=motion.rig.num_joints)
    return 0


def cmd_sample_long(cfg: RunConfig) -> int:
    from . import denoiser as dn

    model, normalizer, doc = _load_for_sampling(cfg)
    cfg.require("captions")
    conds = list(_embed(model, cfg.captions))
    schedule = dn.NoiseSchedule.cosine(model.config.timesteps)
    try:
        motion = dn.sample_long(model, conds, doc.rig, cfg.chunk_frames, cfg.overlap,
                                cfg.guidance, schedule, normalizer, seed=cfg.seed,
                                frame_time=doc.motion.frame_time)
    except dn.OverlapTooLarge as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(cfg)
    target = out / "sample_long.bvh"
    bvh.write_bvh_file(target, motion)
    _save_run_config(out, "sample-long", cfg)
    emit(f"wrote {target}", frames=motion.num_frames, chunks=len(conds))
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    from . import metrics

    cfg.require("reference", "generated")
    ref = [bvh.read_bvh(e.bvh_path).motion for e in _read_manifest(cfg.reference)]
    gen = [bvh.read_bvh(e.bvh_path).motion for e in _read_manifest(cfg.generated)]
    if len(ref) != len(gen):
        raise ConfigError(f"{len(ref)} reference vs {len(gen)} generated motions; pairs must align")
    provider = metrics.FKPoseProvider()
    report = metrics.coverage_novelty_report(list(zip(ref, gen)), provider, cfg.grid_step)
    if len(ref) >= 2:
        real = np.stack([provider(m) for m in ref])
        fake = np.stack([provider(m) for m in gen])
        report.scalars["fid"] = metrics.fid(real, fake)
        report.scalars["r_precision@1"] = metrics.r_precision(fake, real, 1)
    out = _out_dir(cfg)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    _save_run_config(out, "eval", cfg)
    emit(f"coverage AUC {report.coverage_auc:.4f}, novelty AUC {report.novelty_auc:.4f}",
         coverage_auc=report.coverage_auc, novelty_auc=report.novelty_auc, **report.scalars)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "train": cmd_train,
    "sample": cmd_sample,
    "sample-long": cmd_sample_long,
    "eval": cmd_eval,
}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rigmotion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--quiet", action="store_true", help="plain text instead of JSON lines")
        p.add_argument("--seed", type=int)
        return p

    p = command("validate", "parse every BVH in a manifest")
    p.add_argument("manifest", nargs="?")

    p = command("preprocess", "align, scale and centre a corpus")
    p.add_argument("manifest", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--forward")
    p.add_argument("--up")

    p = command("augment", "expand a corpus with rig augmentations")
    p.add_argument("manifest", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--policy", help="augmentation policy JSON")
    p.add_argument("--variants", type=int)
    p.add_argument("--workers", type=int)

    p = command("train", "train the denoiser")
    p.add_argument("manifest", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--denoiser", help="'desk', 'full' or a JSON config path")
    p.add_argument("--stage", choices=["PoseOnly", "Motion", "both"])
    p.add_argument("--pose-steps", dest="pose_steps", type=int)
    p.add_argument("--motion-steps", dest="motion_steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--checkpoint", help="PoseOnly checkpoint for --stage Motion")
    p.add_argument("--caption-level", dest="caption_level")

    for name, help_ in (("sample", "sample one motion"),
                        ("sample-long", "sample chained chunks")):
        p = command(name, help_)
        p.add_argument("-o", "--output")
        p.add_argument("--checkpoint")
        p.add_argument("--rig", help="BVH file whose skeleton is animated")
        p.add_argument("--caption", dest="captions", action="append")
        p.add_argument("--guidance", type=float)
        if name == "sample":
            p.add_argument("--frames", type=int)
        else:
            p.add_argument("--chunk-frames", dest="chunk_frames", type=int)
            p.add_argument("--overlap", type=int)

    p = command("eval", "coverage, novelty and distribution metrics")
    p.add_argument("--reference", help="manifest of reference motions")
    p.add_argument("--generated", help="manifest of generated motions, paired by order")
    p.add_argument("-o", "--output")
    p.add_argument("--grid-step", dest="grid_step", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CONFIG_ERROR if exc.code else 0
    setup_logging(args.quiet)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        emit(f"config error: {exc}", logging.ERROR, error=type(exc).__name__)
        return CONFIG_ERROR
    except (bvh.BvhError, SkeletonError, aug.AugmentationError, OSError, ValueError) as exc:
        emit(f"data error: {exc}", logging.ERROR, error=type(exc).__name__)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
