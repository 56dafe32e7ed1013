import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from rigmotion import metrics as mt
from rigmotion import synthetic as syn
from rigmotion.skeleton import Motion


class ProjectionProvider:
    """Generic provider without a fast window path: random projection of the
    flattened rotations, averaged over the window."""

    def __init__(self, n_joints, dim=7, seed=0):
        self.dim = dim
        self.w = np.random.default_rng(seed).normal(size=(n_joints * 3, dim))

    def __call__(self, window):
        return (window.rotations.reshape(window.num_frames, -1) @ self.w).mean(axis=0)


def brute_force(reference, generated, thetas, embed):
    size = min(reference.num_frames, generated.num_frames, 90)
    ref = [embed(reference.frames(i, i + size)) for i in range(reference.num_frames - size + 1)]
    gen = [embed(generated.frames(i, i + size)) for i in range(generated.num_frames - size + 1)]

    def cos(a, b):
        return min(1.0, max(-1.0, float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))))

    cov, nov = [], []
    for th in thetas:
        cov.append(sum(max(cos(r, g) for g in gen) > th for r in ref) / len(ref))
        nov.append(sum(1 - max(cos(r, g) for r in ref) > th for g in gen) / len(gen))
    return np.array(cov), np.array(nov)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 4))
def test_coverage_novelty_match_brute_force(seed, n_ref_windows, n_gen_windows, size):
    rng = np.random.default_rng(seed)
    rig = syn.random_rig(rng, 6)
    ref = Motion(rig, syn.random_rotations(rng, size + n_ref_windows - 1, 6, 90))
    gen = Motion(rig, syn.random_rotations(rng, size + n_gen_windows - 1, 6, 90))
    if min(ref.num_frames, gen.num_frames) != size:
        return
    thetas = mt.theta_grid(0.01)
    for provider in (ProjectionProvider(6), mt.FKPoseProvider()):
        embed = provider if not hasattr(provider, "windows") else \
            (lambda w, p=provider: p.frames(w).mean(axis=0))
        cov_bf, nov_bf = brute_force(ref, gen, thetas, embed)
        np.testing.assert_array_equal(mt.coverage(ref, gen, thetas, provider), cov_bf)
        np.testing.assert_array_equal(mt.novelty(gen, ref, thetas, provider), nov_bf)


def test_fast_window_path_matches_generic(rng):
    m = syn.random_motion(rng, 8, 12)
    p = mt.FKPoseProvider()
    fast = p.windows(m, 4)
    slow = np.stack([p(w) for w in mt.extract_windows(m, 4).windows])
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_window_errors(rng):
    m = syn.random_motion(rng, 3, 4)
    with pytest.raises(mt.WindowTooLarge):
        mt.extract_windows(m, 5)
    with pytest.raises(mt.DimensionMismatch):
        mt.FKPoseProvider(j_max=2).frames(m)
    with pytest.raises(mt.DimensionMismatch):
        mt.cosine_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_scalar_theta(rng):
    m = syn.random_motion(rng, 5, 6)
    assert mt.coverage(m, m, 0.5) == 1.0
    assert mt.novelty(m, m, 0.5) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_self_metrics(seed):
    m = syn.fixture_motions(5, seed=seed, n_frames=15)[seed]
    report = mt.coverage_novelty_report([(m, m)])
    assert report.coverage_auc >= 0.99
    assert report.novelty_auc <= 0.01


def test_auc_sweep_known_curves():
    assert mt.auc_sweep(lambda t: np.ones_like(t)) == pytest.approx(1.0, abs=1e-15)
    assert mt.auc_sweep(lambda t: t) == pytest.approx(0.5, abs=1e-15)
    assert mt.auc_sweep(lambda t: 1.0 if t < 0.5 else 0.0) == pytest.approx(0.495)
    assert len(mt.theta_grid(0.01)) == 101


# -- distributions and retrieval ---------------------------------------------

def fid_oracle(x, y):
    mu1, mu2 = x.mean(0), y.mean(0)
    s1, s2 = np.atleast_2d(np.cov(x, rowvar=False)), np.atleast_2d(np.cov(y, rowvar=False))
    covmean = scipy.linalg.sqrtm(s1 @ s2).real
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(s1 + s2 - 2 * covmean))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_fid_matches_scipy(seed, dim):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, dim))
    y = rng.normal(loc=0.3, scale=1.5, size=(35, dim)) @ rng.normal(size=(dim, dim))
    assert mt.fid(x, y) == pytest.approx(fid_oracle(x, y), rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("n,dim", [(50, 4), (20, 420), (3, 16)])
def test_fid_of_identical_sets(n, dim):
    x = np.random.default_rng(n).normal(size=(n, dim))
    assert mt.fid(x, x) < 1e-6


def test_fid_of_fk_embeddings(rng):
    motions = syn.fixture_motions(12, seed=3)
    p = mt.FKPoseProvider()
    x = np.stack([p(m) for m in motions])
    assert mt.fid(x, x) < 1e-6
    assert mt.fid(x, x[::-1]) < 1e-6
    with pytest.raises(mt.TooFewSamples):
        mt.fid(x[:1], x)


def test_fid_shift():
    x = np.random.default_rng(0).normal(size=(30, 3))
    assert mt.fid(x, x + [1.0, 2.0, 2.0]) == pytest.approx(9.0)


def r_precision_oracle(q, t, k):
    hits = 0
    for i in range(len(q)):
        sims = [np.dot(q[i], t[j]) / (np.linalg.norm(q[i]) * np.linalg.norm(t[j]))
                for j in range(len(t))]
        better = sum(s > sims[i] for s in sims)
        hits += better < k
    return hits / len(q)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.floats(0.0, 2.0))
def test_r_precision_matches_oracle(seed, k, noise):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(12, 5))
    q = t + noise * rng.normal(size=t.shape)
    assert mt.r_precision(q, t, k) == pytest.approx(r_precision_oracle(q, t, k))


def test_r_precision_identical_is_one():
    x = np.random.default_rng(0).normal(size=(32, 8))
    assert mt.r_precision(x, x, 1) == 1.0
    # duplicated rows tie; ties count for the true target
    assert mt.r_precision(np.ones((4, 3)), np.ones((4, 3)), 1) == 1.0
    with pytest.raises(mt.SizeMismatch):
        mt.r_precision(x, x[:3])


def test_alignment():
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert mt.alignment(a, a) == pytest.approx(1.0)
    assert mt.alignment(a, -a) == pytest.approx(-1.0)
    assert mt.alignment(a, a[::-1]) == pytest.approx(0.0)


def test_multimodality():
    g = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert mt.multimodality([g]) == pytest.approx(5.0)
    assert mt.multimodality([np.ones((6, 2))]) == 0.0
    with pytest.raises(mt.TooFewSamples):
        mt.multimodality([np.ones((1, 2))])


def test_multimodality_expectation():
    # for iid standard normals in d dims, E|a - b| = 2 Gamma((d+1)/2) / Gamma(d/2)
    rng = np.random.default_rng(0)
    d = 4
    groups = [rng.normal(size=(200, d)) for _ in range(50)]
    expected = 2 * math.gamma((d + 1) / 2) / math.gamma(d / 2)
    assert mt.multimodality(groups, seed=1) == pytest.approx(expected, rel=0.02)
    assert mt.multimodality(groups, seed=1) == mt.multimodality(groups, seed=1)


def test_report_serialisation(rng):
    m = syn.random_motion(rng, 5, 10)
    r = mt.coverage_novelty_report([(m, m)], grid_step=0.1)
    r.scalars["fid"] = 0.0
    data = json.loads(r.to_json())
    assert mt.MetricReport.from_dict(data) == r
    assert len(data["curves"]["coverage"]) == 11
    lines = r.to_csv().splitlines()
    assert lines[0] == "theta,coverage,novelty" and len(lines) == 12


@pytest.mark.parametrize("length,size,count", [(90, 90, 1), (100, 90, 11), (5, 2, 4)])
def test_window_counts_and_contents(rng, length, size, count):
    m = syn.random_motion(rng, n_joints=3, n_frames=length)
    ws = mt.extract_windows(m, size)
    assert len(ws) == count
    for i, w in enumerate(ws.windows):
        np.testing.assert_array_equal(w.rotations, m.rotations[i:i + size])


def test_r_precision_under_random_permutation():
    rng = np.random.default_rng(7)
    n, trials = 100, 1000
    q = rng.normal(size=(n, 16))
    hits = [mt.r_precision(q, q[rng.permutation(n)]) for _ in range(trials)]
    # fixed points of a random permutation have mean 1 and variance 1
    sigma = 1.0 / (n * math.sqrt(trials))
    assert abs(np.mean(hits) - 1.0 / n) < 3 * sigma


def test_r_precision_swapped_pair_is_zero():
    q = np.eye(2)
    assert mt.r_precision(q, q[::-1]) == 0.0
