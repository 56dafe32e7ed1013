"""Grow one motion into a family of rigs that still move the same way.

Run: python3 demos/02_rig_augmentation.py
"""
import numpy as np

from rigmotion import augment as ag
from rigmotion import synthetic as syn
from rigmotion.skeleton import forward_kinematics

rig = syn.quadruped_rig()
motion = syn.gait(rig, n_frames=24)
groups = syn.quadruped_part_groups(rig)

# Bone-length scaling: one factor per body part, mirrored legs share it.
scaled, rec = ag.scale_bone_lengths(motion, groups, seed=3)
print("bone scales:", {k: round(v, 3) for k, v in rec.parameters["factors"].items()})

# Joint removal re-solves rotations so the surviving joints follow the
# original trajectories. Removable spine joints barely rotate, so the small
# bend they carried is the only thing lost.
names = ag.removable_joints(motion)
fewer, rec = ag.remove_joints(motion, names, seed=1, count=2)
keep = [rig.joint_names.index(n) for n in fewer.rig.joint_names]
err = np.abs(forward_kinematics(fewer).positions - forward_kinematics(motion).positions[:, keep])
print(f"removed {rec.parameters['removed']}, survivor error {err.max():.1e}")

# Subdivision inserts joints along a bone; the original joints stay put.
more, rec = ag.subdivide_joints(motion, ["Tail1"], parts_per_bone=3, seed=0)
print(f"subdivided Tail1: {rig.num_joints} -> {more.rig.num_joints} joints")

# Rest-pose reset re-bases the rig on a chosen frame.
reset, rec = ag.reset_rest_pose(motion, frame_index=7, seed=0)
err = np.abs(forward_kinematics(reset).positions - forward_kinematics(motion).positions).max()
print(f"rest pose from frame 7, FK error {err:.1e}")

# A policy mixes all three; every variant carries records that replay it.
policy = ag.AugmentationPolicy(part_groups=groups)
family = ag.expand_motion(motion, policy, n_variants=5, seed=42)
for m, records in family:
    print(f"  {m.rig.num_joints:3d} joints  {[r.kind for r in records]}")
