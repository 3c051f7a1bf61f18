import json

import numpy as np
import pytest

from patchplane import imageio
from patchplane.cli import run


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert run(["synth", "--out", str(out), "--frames", "5"]) == 0
    return out


def test_synth_writes_scene(scene_dir):
    for name in ("target.ppm", "source_3.ppm", "gt_depth.pfm", "gt_labels.png", "intrinsics.json", "poses.json",
                 "scene.json", "config.json"):
        assert (scene_dir / name).exists(), name
    assert len(json.loads((scene_dir / "poses.json").read_text())) == 4


def test_refine_outputs(scene_dir, tmp_path):
    out = tmp_path / "ref"
    rc = run(["refine", "--scene", str(scene_dir), "--iters", "5", "--out", str(out)])
    assert rc == 0
    for name in ("depth.pfm", "depth.png", "trace.jsonl", "metrics.json", "config.json", "poses.json", "planes.json"):
        assert (out / name).exists(), name
    assert len((out / "trace.jsonl").read_text().splitlines()) == 5
    assert imageio.load_pfm(out / "depth.pfm").shape == (144, 192)


def test_refine_replays_from_config(scene_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["refine", "--scene", str(scene_dir), "--iters", "4", "--window-n", "2", "--out", str(a)]) == 0
    assert run(["refine", "--config", str(a / "config.json"), "--out", str(b)]) == 0
    assert (a / "trace.jsonl").read_bytes() == (b / "trace.jsonl").read_bytes()
    assert (a / "depth.pfm").read_bytes() == (b / "depth.pfm").read_bytes()
    assert json.loads((b / "config.json").read_text())["window_n"] == 2


def test_refine_with_explicit_files(scene_dir, tmp_path):
    rc = run(["refine", "--target", str(scene_dir / "target.ppm"),
              "--sources", str(scene_dir / "source_0.ppm"), str(scene_dir / "source_1.ppm"),
              "--intrinsics", str(scene_dir / "intrinsics.json"), "--iters", "2", "--out", str(tmp_path)])
    assert rc == 0
    assert not (tmp_path / "metrics.json").exists()


def test_eval(scene_dir, tmp_path, capsys):
    rc = run(["eval", "--pred", str(scene_dir / "gt_depth.pfm"), "--gt", str(scene_dir / "gt_depth.pfm"),
              "--intrinsics", str(scene_dir / "intrinsics.json"), "--out", str(tmp_path)])
    assert rc == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["depth.rms"] == 0 and m["depth.delta1"] == 1
    assert "rms" in capsys.readouterr().out


def test_segment_uniform(tmp_path):
    imageio.save_image(tmp_path / "u.png", np.full((40, 50, 3), 0.5))
    rc = run(["segment", "--image", str(tmp_path / "u.png"), "--min-area", "5000", "--out", str(tmp_path / "s")])
    assert rc == 0
    assert np.all(imageio.load_labels(tmp_path / "s" / "labels.png") == 0)
    assert json.loads((tmp_path / "s" / "regions.json").read_text()) == []


def test_keypoints(scene_dir, tmp_path):
    rc = run(["keypoints", "--image", str(scene_dir / "target.ppm"), "--keypoints", "500", "--out", str(tmp_path)])
    assert rc == 0
    assert len((tmp_path / "keypoints.csv").read_text().splitlines()) == 500


def test_gradcheck_command(scene_dir, tmp_path):
    rc = run(["gradcheck", "--scene", str(scene_dir), "--samples", "5", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert json.loads((tmp_path / "gradcheck.json").read_text())["max_rel_error"] < 1e-4


def test_validation_errors(scene_dir, tmp_path):
    assert run(["refine", "--bogus"]) == 1
    assert run(["eval", "--pred", str(tmp_path / "no.pfm"), "--gt", str(scene_dir / "gt_depth.pfm"),
                "--out", str(tmp_path)]) == 1
    assert run(["refine", "--out", str(tmp_path)]) == 1
    assert run(["refine", "--scene", str(scene_dir), "--frames", "4"]) == 1
    (tmp_path / "cfg.json").write_text(json.dumps({"command": "refine", "nonsense": 1}))
    assert run(["refine", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)]) == 1


def test_numeric_failure_exit_code(scene_dir, tmp_path):
    far = [{"rotation": np.eye(3).ravel().tolist(), "translation": [100.0, 0, 0]}] * 2
    (tmp_path / "far.json").write_text(json.dumps(far))
    rc = run(["refine", "--scene", str(scene_dir), "--init-poses", str(tmp_path / "far.json"), "--iters", "2",
              "--out", str(tmp_path / "o")])
    assert rc == 2
