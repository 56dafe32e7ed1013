"""Motion synthesis toolkit for arbitrary skeletal rigs.

The light modules (skeleton, bvh, augment, encodings, metrics) only need
numpy; ``rigmotion.denoiser`` additionally imports torch.
"""
from .augment import (AugmentationPolicy, AugmentationRecord, PartGroupConfig, expand_motion,
                      remove_joints, reset_rest_pose, retarget_to_rig, scale_bone_lengths,
                      subdivide_joints)
from .bvh import BvhDocument, parse_bvh, preprocess, read_bvh, write_bvh
from .conditioning import HashingTextEmbedder
from .encodings import EncodingTable, frame_positional_encoding, rest_features, tree_path_code
from .skeleton import (F_MAX, J_MAX, GlobalPose, Motion, Rig, SkeletonTopology,
                       forward_kinematics, validate_topology)

__version__ = "0.1.0"
