import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from rigmotion import augment as aug
from rigmotion import synthetic as syn
from rigmotion.skeleton import (JointBudgetExceeded, Motion, Rig, bone_lengths,
                                forward_kinematics, zxy_to_matrix)


@pytest.fixture
def quad():
    rig = syn.quadruped_rig()
    return syn.gait(rig, 20), syn.quadruped_part_groups(rig)


def fk(m):
    return forward_kinematics(m).positions


def positions_by_name(m):
    pos = fk(m)
    return {n: pos[:, j] for j, n in enumerate(m.rig.joint_names)}


# -- configuration --------------------------------------------------------

def test_part_group_validation():
    with pytest.raises(aug.AugmentationError):
        aug.PartGroupConfig({"a": ["x"], "b": ["x"]})
    with pytest.raises(aug.ScaleOutOfRange):
        aug.PartGroupConfig({"a": ["x"]}, {"a": (0.5, 1.0)})
    with pytest.raises(aug.ScaleOutOfRange):
        aug.PartGroupConfig({"a": ["x"]}, {"a": (1.1, 0.9)})
    with pytest.raises(aug.AugmentationError):
        aug.PartGroupConfig({"a": ["x"], "b": ["y", "z"]}, symmetry_pairs=[("a", "b")])
    with pytest.raises(aug.AugmentationError):
        aug.PartGroupConfig({"a": ["x"]}, symmetry_pairs=[("a", "c")])


@settings(max_examples=200)
@given(st.integers(0, 2**63 - 1))
def test_draw_bounds_and_symmetry(seed):
    cfg = syn.quadruped_part_groups(syn.quadruped_rig())
    f = cfg.draw(np.random.default_rng(seed))
    assert set(f) == set(cfg.groups)
    assert all(0.8 <= v <= 1.2 for v in f.values())
    for a, b in cfg.symmetry_pairs:
        assert f[a] == f[b]


def test_config_dict_round_trip(quad):
    _, cfg = quad
    assert aug.PartGroupConfig.from_dict(cfg.to_dict()) == cfg


# -- rotation solvers -----------------------------------------------------

def unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@given(st.integers(0, 2**32 - 1))
def test_rotation_between(seed):
    rng = np.random.default_rng(seed)
    a, b = unit(rng.normal(size=(5, 3))), unit(rng.normal(size=(5, 3)))
    r = aug.rotation_between(a, b)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", r, a), b, atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(r), 1.0, atol=1e-12)
    # minimal: the rotation axis is perpendicular to both vectors
    axis = Rotation.from_matrix(r).as_rotvec()
    np.testing.assert_allclose(np.einsum("ni,ni->n", axis, a), 0, atol=1e-9)


def test_rotation_between_antiparallel_and_equal():
    a = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    r = aug.rotation_between(a, -a)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", r, a), -a, atol=1e-12)
    np.testing.assert_allclose(aug.rotation_between(a, a), np.broadcast_to(np.eye(3), (2, 3, 3)),
                               atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_wahba_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    body = unit(rng.normal(size=(n, 3)))
    true = Rotation.random(random_state=seed)
    world = unit(true.apply(body) + 0.05 * rng.normal(size=(n, 3)))
    w = rng.uniform(0.5, 2.0, size=n)
    got = aug.wahba_rotation(body[None], world[None], w[None])[0]
    ref, _ = Rotation.align_vectors(world, body, weights=w)
    np.testing.assert_allclose(got, ref.as_matrix(), atol=1e-8)


# -- retargeting ----------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_identity_retarget_reproduces_fk(n_joints, n_frames, seed):
    rng = np.random.default_rng(seed)
    m = syn.random_motion(rng, n_joints, n_frames, amplitude=120)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        out, report = aug.retarget_to_rig(fk(m), m.rig, list(range(n_joints)), m.frame_time)
    np.testing.assert_allclose(fk(out), fk(m), atol=1e-6)


def test_retarget_holds_previous_frame_on_degenerate_target():
    rig = Rig.from_parents(["r", "a", "b"], [None, 0, 1], [[0, 0, 0], [0, 0, 1], [0, 0, 1]])
    targets = np.array([[[0, 0, 0], [0, 0, 1], [0, 1, 1]],
                        [[0, 0, 0], [0, 0, 1], [0, 0, 1]]], dtype=float)  # b collapses onto a
    out, report = aug.retarget_to_rig(targets, rig, [0, 1, 2])
    assert report.degenerate_frames == {1: [1]}
    np.testing.assert_allclose(out.rotations[1, 1], out.rotations[0, 1])


def test_unconstrained_joint_warns():
    rig = Rig.from_parents(["r", "a", "b"], [None, 0, 1], [[0, 0, 0], [0, 0, 1], [0, 0, 1]])
    targets = np.zeros((1, 3, 3))
    targets[0, 1] = [0, 0, 1]
    with pytest.warns(aug.RetargetWarning):
        out, report = aug.retarget_to_rig(targets, rig, [0, 1, None])
    assert report.unconstrained == (1,)
    np.testing.assert_allclose(zxy_to_matrix(out.rotations[0, 1]), np.eye(3), atol=1e-12)


# -- bone lengths ---------------------------------------------------------

def test_bone_scaling_exact_without_renormalize(quad):
    m, cfg = quad
    out, rec = aug.scale_bone_lengths(m, cfg, seed=3, renormalize=False)
    before, after = bone_lengths(m.rig), bone_lengths(out.rig)
    factor = np.ones(m.rig.num_joints)
    for g, names in cfg.groups.items():
        for n in names:
            factor[m.rig.topology.index(n)] = rec.parameters["factors"][g]
    np.testing.assert_allclose(after, before * factor, rtol=1e-12)
    np.testing.assert_array_equal(out.rotations, m.rotations)


def test_bone_scaling_keeps_extent(quad):
    m, cfg = quad
    out, _ = aug.scale_bone_lengths(m, cfg, seed=5)
    ext = lambda r: np.ptp(r.rest_positions(), axis=0).max()
    assert ext(out.rig) == pytest.approx(ext(m.rig), rel=1e-12)
    np.testing.assert_array_equal(out.rig.rest_offsets[0], m.rig.rest_offsets[0])


def test_bone_scaling_unknown_joint(quad):
    m, _ = quad
    cfg = aug.PartGroupConfig({"ghost": ["NoSuchJoint"]})
    with pytest.raises(aug.UnknownJoint):
        aug.scale_bone_lengths(m, cfg, 0)
    out, _ = aug.scale_bone_lengths(m, cfg, 0, strict=False)
    np.testing.assert_allclose(out.rig.rest_offsets, m.rig.rest_offsets)


# -- joint removal ----------------------------------------------------------

def test_removable_excludes_root_and_branches(quad):
    m, _ = quad
    topo = m.rig.topology
    names = aug.removable_joints(m)
    assert names
    for n in names:
        j = topo.index(n)
        assert j != topo.root and len(topo.children[j]) <= 1


def test_removing_joints_keeps_survivor_positions(quad):
    m, _ = quad
    rot = m.rotations.copy()
    rot[:, m.rig.topology.index("Spine1")] = 0.0
    m = m.with_rotations(rot)
    # leaves and motionless pass-through joints: survivors move exactly as before
    names = [n for n in aug.removable_joints(m, variance_threshold=1e-12)]
    assert any(not m.rig.topology.is_leaf(m.rig.topology.index(n)) for n in names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        out, rec = aug.remove_joints(m, names, seed=0)
    assert out.rig.num_joints == m.rig.num_joints - len(names)
    before, after = positions_by_name(m), positions_by_name(out)
    for n, p in after.items():
        np.testing.assert_allclose(p, before[n], atol=1e-9)


def test_remove_rejects_root_and_branching(quad):
    m, _ = quad
    with pytest.raises(aug.NotRemovable):
        aug.remove_named_joints(m, ["Hips"])
    chest = m.rig.topology.index("Spine2")
    assert len(m.rig.topology.children[chest]) > 1
    with pytest.raises(aug.NotRemovable):
        aug.remove_named_joints(m, ["Spine2"])
    with pytest.raises(aug.UnknownJoint):
        aug.remove_named_joints(m, ["Nope"])


def test_remove_count_draws_subset(quad):
    m, _ = quad
    pool = aug.removable_joints(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        out, rec = aug.remove_joints(m, pool, seed=11, count=2)
    assert len(rec.parameters["removed"]) == 2
    assert set(rec.parameters["removed"]) <= set(pool)


# -- subdivision --------------------------------------------------------------

@pytest.mark.parametrize("parts", [2, 3, 4])
def test_subdivision_is_kinematically_exact(quad, parts):
    m, _ = quad
    out, rec = aug.subdivide_joints(m, ["Tail1", "FrontLegL_0"], parts, seed=0)
    assert out.rig.num_joints == m.rig.num_joints + 2 * (parts - 1)
    assert f"Tail1_sub{parts - 1}" in out.rig.joint_names
    before, after = positions_by_name(m), positions_by_name(out)
    for n, p in before.items():
        np.testing.assert_allclose(after[n], p, atol=1e-9)
    # inserted joints lie on the original bone
    t0, t1 = before["Tail0"], before["Tail1"]
    np.testing.assert_allclose(after["Tail1_sub1"], t0 + (t1 - t0) / parts, atol=1e-9)


def test_subdivision_budget(quad):
    m, _ = quad
    with pytest.raises(JointBudgetExceeded):
        aug.subdivide_named_joints(m, list(m.rig.joint_names[1:]), 6)


# -- rest pose reset -------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(2, 20), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_rest_pose_reset_round_trip(n_joints, n_frames, seed):
    rng = np.random.default_rng(seed)
    m = syn.random_motion(rng, n_joints, n_frames, amplitude=150)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        out, rec = aug.reset_rest_pose(m, None, seed)
    k = rec.parameters["frame_index"]
    assert 0 <= k < n_frames
    np.testing.assert_allclose(fk(out), fk(m), atol=1e-6)
    # the chosen frame is the new rest pose
    np.testing.assert_allclose(out.rig.rest_positions(), fk(m)[k], atol=1e-9)


def test_rest_pose_frame_out_of_range(quad):
    m, _ = quad
    with pytest.raises(aug.FrameOutOfRange):
        aug.reset_rest_pose(m, m.num_frames, 0)


# -- policy, determinism, replay ----------------------------------------------

def test_augment_is_deterministic_and_replayable(quad):
    m, cfg = quad
    policy = aug.AugmentationPolicy(part_groups=cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        for seed in range(8):
            a, rec_a = aug.augment_motion(m, policy, seed)
            b, rec_b = aug.augment_motion(m, policy, seed)
            assert rec_a == rec_b and rec_a
            assert a.rig == b.rig
            np.testing.assert_array_equal(a.rotations, b.rotations)
            replay = m
            for r in rec_a:
                replay = aug.apply_record(replay, aug.AugmentationRecord.from_dict(r.to_dict()), cfg)
            assert sorted(replay.rig.joint_names) == sorted(a.rig.joint_names)
            pa, pr = positions_by_name(a), positions_by_name(replay)
            for n in pa:
                np.testing.assert_allclose(pa[n], pr[n], atol=1e-9)


def test_expand_motion_counts(quad):
    m, cfg = quad
    policy = aug.AugmentationPolicy(part_groups=cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", aug.RetargetWarning)
        out = aug.expand_motion(m, policy, 4, seed=1)
    assert len(out) == 5
    assert out[0][0] is m and out[0][1] == []
    assert aug.expand_motion(m, policy, 0, seed=1) == [(m, [])]


def test_policy_round_trip(quad):
    _, cfg = quad
    p = aug.AugmentationPolicy(part_groups=cfg, max_remove=3, parts_per_bone=(2, 4))
    assert aug.AugmentationPolicy.from_dict(p.to_dict()) == p
