"""Positional encodings that tell the network where a joint sits in its rig.

Run: python3 demos/03_encodings.py
"""
import numpy as np

from rigmotion import encodings as enc
from rigmotion import synthetic as syn

rig = syn.quadruped_rig(spine=2, leg=2, tail=2)
topo = rig.topology

# Tree codes: one one-hot block per step of the root-to-joint path, marking
# which child was taken at that step. The root has an empty path.
for j in (0, 1, 5):
    code = enc.tree_path_code(topo, j, max_depth=6, max_branch=4).reshape(6, 4)
    steps = [int(b.argmax()) for b in code if b.any()]
    print(f"{topo.joint_names[j]:>12s} child path {steps}")

codes = enc.tree_path_codes(topo)
print("distinct tree codes:", len({c.tobytes() for c in codes}), "of", rig.num_joints)

# Frame encodings are classic sinusoids with unit norm per band.
pe = enc.frame_positional_encoding(3, d_model=16)
print("frame 3 encoding norm:", round(float(np.linalg.norm(pe)), 6), "=", np.sqrt(8))

# Rest-offset features feed a small perceptron; equal offsets give equal codes.
table = enc.seeded_table(rig, d_model=32, seed=0)
print("token offsets for 10 frames:", table.token_offsets(10).shape)
