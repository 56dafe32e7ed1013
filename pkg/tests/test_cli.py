import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from conftest import FIXTURES
from rigmotion import bvh, cli
from rigmotion import synthetic as syn


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


def json_lines(out):
    return [json.loads(l) for l in out.splitlines() if l.strip()]


@pytest.fixture
def corpus(tmp_path):
    """Copy of the fixture manifest and files into a scratch folder."""
    d = tmp_path / "corpus"
    shutil.copytree(FIXTURES, d)
    return d


@pytest.fixture
def policy_file(tmp_path):
    rig = syn.quadruped_rig()
    from rigmotion.augment import AugmentationPolicy
    p = tmp_path / "policy.json"
    p.write_text(json.dumps(AugmentationPolicy(part_groups=syn.quadruped_part_groups(rig)).to_dict()))
    return p


def test_validate_ok(capsys, corpus):
    code, out = run(capsys, "validate", str(corpus / "manifest.json"))
    assert code == 0
    assert json_lines(out)[-1]["msg"] == "3/3 OK"


def test_validate_reports_file_and_line(capsys, corpus):
    bad = corpus / "snake_slither.bvh"
    lines = bad.read_text().splitlines()
    assert lines[7].strip().startswith("OFFSET")
    lines[7] = lines[7].replace("OFFSET", "OFFSET oops")
    bad.write_text("\n".join(lines) + "\n")
    code, out = run(capsys, "validate", "--quiet", str(corpus / "manifest.json"))
    assert code == 1
    assert f"FAIL {bad}:8:" in out
    assert out.splitlines()[-1] == "2/3 OK"


def test_validate_empty_manifest(capsys, tmp_path):
    m = tmp_path / "empty.json"
    m.write_text('{"motions": []}')
    code, out = run(capsys, "validate", "--quiet", str(m))
    assert code == 0 and out.strip() == "0 files"


@pytest.mark.parametrize("argv", [
    ["validate", "missing.json"],
    ["validate"],
    ["validate", "--no-such-flag"],
    ["augment", "--config", "missing-config.json"],
])
def test_config_errors_exit_2(capsys, tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    code, _ = run(capsys, *argv)
    assert code == 2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"manifest": "x.json", "colour": "blue"}))
    code, out = run(capsys, "validate", "--config", str(cfg))
    assert code == 2 and "colour" in out


def test_preprocess(capsys, corpus, tmp_path):
    out_dir = tmp_path / "pre"
    code, _ = run(capsys, "preprocess", str(corpus / "manifest.json"), "-o", str(out_dir),
                  "--forward", "+Y", "--up", "+Z")
    assert code == 0
    entries = bvh.read_manifest(out_dir / "manifest.json")
    assert len(entries) == 3
    for e in entries:
        rest = bvh.read_bvh(e.bvh_path).rig.rest_positions()
        assert np.ptp(rest, axis=0).max() == pytest.approx(1.0, abs=1e-5)


def augment(capsys, corpus, out_dir, *extra):
    return run(capsys, "augment", str(corpus / "manifest.json"), "-o", str(out_dir), *extra)


def test_augment_counts_and_determinism(capsys, corpus, tmp_path, policy_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert augment(capsys, corpus, a, "--variants", "2", "--seed", "5",
                   "--policy", str(policy_file))[0] == 0
    assert augment(capsys, corpus, b, "--variants", "2", "--seed", "5",
                   "--policy", str(policy_file), "--workers", "2")[0] == 0
    files_a = sorted(p.name for p in a.iterdir())
    assert len([f for f in files_a if f.endswith(".bvh")]) == 3 * 3
    assert files_a == sorted(p.name for p in b.iterdir())
    for name in files_a:
        if name != "run_config.json":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    # every output is readable and provenance replays the recorded kinds
    for e in bvh.read_manifest(a / "manifest.json"):
        bvh.read_bvh(e.bvh_path)
        prov = json.loads(e.bvh_path.with_suffix(".json").read_text())
        assert (prov["variant"] == 0) == (prov["records"] == [])


def test_augment_zero_variants_copies(capsys, corpus, tmp_path):
    out = tmp_path / "copy"
    assert augment(capsys, corpus, out, "--variants", "0")[0] == 0
    assert len(bvh.read_manifest(out / "manifest.json")) == 3


def test_seed_from_environment(capsys, corpus, tmp_path, monkeypatch, policy_file):
    monkeypatch.setenv("RIGMOTION_SEED", "5")
    augment(capsys, corpus, tmp_path / "env", "--variants", "1", "--policy", str(policy_file))
    monkeypatch.delenv("RIGMOTION_SEED")
    augment(capsys, corpus, tmp_path / "flag", "--variants", "1", "--seed", "5",
            "--policy", str(policy_file))
    augment(capsys, corpus, tmp_path / "other", "--variants", "1", "--seed", "6",
            "--policy", str(policy_file))
    name = "00000_quadruped_walk_v001.bvh"
    env, flag, other = (tmp_path / d / name for d in ("env", "flag", "other"))
    assert env.read_bytes() == flag.read_bytes()
    assert json.loads((tmp_path / "env" / "run_config.json").read_text())["seed"] == 5
    assert json.loads(other.with_suffix(".json").read_text())["seed"] != \
        json.loads(flag.with_suffix(".json").read_text())["seed"]


def test_config_file_and_flag_precedence(capsys, corpus, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"manifest": str(corpus / "manifest.json"),
                               "output": str(tmp_path / "x"), "variants": 1, "seed": 3}))
    assert run(capsys, "augment", "--config", str(cfg), "--variants", "0")[0] == 0
    stored = json.loads((tmp_path / "x" / "run_config.json").read_text())
    assert stored["variants"] == 0 and stored["seed"] == 3 and stored["command"] == "augment"


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    code = cli.main(["train", str(FIXTURES / "manifest.json"), "-o", str(d), "--quiet",
                     "--pose-steps", "4", "--motion-steps", "3", "--seed", "1"])
    assert code == 0
    return d


def test_train_outputs(trained_dir):
    assert (trained_dir / "checkpoint.npz").exists()
    rows = (trained_dir / "loss.csv").read_text().splitlines()
    assert rows[0] == "step,stage,loss,smoothed" and len(rows) == 8
    assert rows[-1].split(",")[1] == "Motion"


def test_train_motion_stage_needs_checkpoint(capsys, tmp_path):
    code, out = run(capsys, "train", str(FIXTURES / "manifest.json"), "-o", str(tmp_path),
                    "--stage", "Motion")
    assert code == 2 and "MissingCheckpoint" in out


def test_train_motion_stage_from_pose_checkpoint(capsys, tmp_path):
    pose = tmp_path / "pose"
    assert run(capsys, "train", str(FIXTURES / "manifest.json"), "-o", str(pose),
               "--stage", "PoseOnly", "--pose-steps", "2")[0] == 0
    code, _ = run(capsys, "train", str(FIXTURES / "manifest.json"), "-o", str(tmp_path / "mo"),
                  "--stage", "Motion", "--motion-steps", "2",
                  "--checkpoint", str(pose / "checkpoint.npz"))
    assert code == 0


def test_sample_90_frames(capsys, trained_dir, tmp_path):
    out = tmp_path / "s"
    code, _ = run(capsys, "sample", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                  "--rig", str(FIXTURES / "quadruped_walk.bvh"), "--caption", "a dog trots",
                  "--frames", "90", "--seed", "2", "-o", str(out))
    assert code == 0
    doc = bvh.read_bvh(out / "sample.bvh")
    assert doc.motion.num_frames == 90
    first = (out / "sample.bvh").read_bytes()
    cfg = json.loads((out / "run_config.json").read_text())
    cfg.pop("command")
    cfg["output"] = str(tmp_path / "again")
    (tmp_path / "again.json").write_text(json.dumps(cfg))
    assert run(capsys, "sample", "--config", str(tmp_path / "again.json"))[0] == 0
    assert (tmp_path / "again" / "sample.bvh").read_bytes() == first


def test_sample_long(capsys, trained_dir, tmp_path):
    code, _ = run(capsys, "sample-long", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                  "--rig", str(FIXTURES / "snake_slither.bvh"), "--caption", "slither",
                  "--caption", "coil", "--chunk-frames", "12", "--overlap", "4", "-o", str(tmp_path))
    assert code == 0
    assert bvh.read_bvh(tmp_path / "sample_long.bvh").motion.num_frames == 20
    code, _ = run(capsys, "sample-long", "--checkpoint", str(trained_dir / "checkpoint.npz"),
                  "--rig", str(FIXTURES / "snake_slither.bvh"), "--caption", "a",
                  "--chunk-frames", "12", "--overlap", "12", "-o", str(tmp_path))
    assert code == 2


def test_sample_missing_checkpoint(capsys, tmp_path):
    code, _ = run(capsys, "sample", "--checkpoint", str(tmp_path / "nope.npz"),
                  "--rig", str(FIXTURES / "snake_slither.bvh"), "-o", str(tmp_path))
    assert code == 2


def test_eval_self(capsys, tmp_path):
    out = tmp_path / "ev"
    code, stdout = run(capsys, "eval", "--reference", str(FIXTURES / "manifest.json"),
                       "--generated", str(FIXTURES / "manifest.json"), "-o", str(out))
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["auc"]["coverage"] >= 0.99 and report["auc"]["novelty"] <= 0.01
    assert report["scalars"]["fid"] < 1e-6
    assert report["scalars"]["r_precision@1"] == 1.0
    assert (out / "report.csv").read_text().startswith("theta,coverage,novelty")
    assert json_lines(stdout)[-1]["coverage_auc"] >= 0.99


def test_console_script(tmp_path):
    exe = shutil.which("rigmotion")
    cmd = [exe] if exe else [sys.executable, "-m", "rigmotion.cli"]
    proc = subprocess.run(cmd + ["validate", "--quiet", str(FIXTURES / "manifest.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().endswith("3/3 OK")
