"""Train a small denoiser in two stages, then sample on an unseen rig.

Run: python3 demos/04_train_and_sample.py   (about a minute on one core)
"""
import numpy as np
import torch

from rigmotion import denoiser as dn
from rigmotion import synthetic as syn
from rigmotion.bvh import BvhDocument, write_bvh
from rigmotion.conditioning import HashingTextEmbedder

torch.manual_seed(0)
motions = syn.fixture_motions(6, seed=0, n_frames=16)
captions = ["a quadruped walking" if k % 2 == 0 else "a creature twitching" for k in range(6)]
embed = HashingTextEmbedder(dim=64)
conds = embed.batch(captions)

config = dn.DenoiserConfig.desk()
model = dn.MotionDenoiser(config)
normalizer = dn.Normalizer.fit(motions)
trainer = dn.Trainer(model, normalizer, seed=0)

# Stage one: every frame is an independent pose sample.
for step in range(150):
    loss = trainer.step(motions, conds)
print(f"pose stage loss {loss:.4f}")

# Stage two: freeze the pose model, train temporal attention on sequences.
trainer.promote()
for step in range(100):
    loss = trainer.step(motions, conds)
print(f"motion stage loss {loss:.4f}")

# Sample on a rig the model never saw, with classifier-free guidance.
rig = syn.quadruped_rig(spine=4, leg=4, tail=5)
out = dn.sample(model, embed("a quadruped walking"), rig, n_frames=24, guidance=2.5,
                schedule=trainer.schedule, normalizer=normalizer, seed=1)
print("sampled rotations:", out.rotations.shape)

# Long sequences chain chunks that share overlapping frames.
long = dn.sample_long(model, [embed(c) for c in captions[:3]], rig, chunk_frames=24,
                      overlap=6, guidance=2.5, schedule=trainer.schedule,
                      normalizer=normalizer, seed=2)
print(f"long sample: {long.num_frames} frames (3 x 24 - 2 x 6)")
print(write_bvh(BvhDocument.from_motion(out)).splitlines()[0], "... ready to save")
