import json

import numpy as np
import pytest

from orscene import scene
from orscene.abstraction import save_depth_bundle, save_mask_bundle
from orscene.cli import main
from orscene.conditioning import Trajectory, apply_trajectory
from orscene.render import RenderConfig, load_frames, render_sequence

from test_abstraction import scripted_bundle
from conftest import make_node, static_sequence
from orscene.scene import SceneFrame


@pytest.fixture
def bundles(tmp_path):
    masks, depths = scripted_bundle(n_frames=4)
    save_mask_bundle(masks, tmp_path / "masks")
    save_depth_bundle(depths, tmp_path / "depths")
    return tmp_path


def write_scene(tmp_path, n=4):
    frame = SceneFrame(
        0,
        (
            make_node("mover", class_id=1, cx=0.3, cy=0.5, depth=0.7),
            make_node("table", class_id=11, cx=0.7, cy=0.5, depth=0.3),
        ),
    )
    seq = static_sequence(frame, n, (256, 192))
    path = tmp_path / "scene.json"
    scene.save(seq, path)
    return path, seq


class TestAbstract:
    def test_writes_scene_json(self, bundles):
        out = bundles / "scene.json"
        code = main([
            "abstract", "--masks", str(bundles / "masks"),
            "--depths", str(bundles / "depths"), "--out", str(out),
        ])
        assert code == 0
        assert len(scene.load(out)) == 4

    def test_missing_bundle_is_input_error(self, tmp_path):
        code = main([
            "abstract", "--masks", str(tmp_path / "nope"),
            "--depths", str(tmp_path / "nope"), "--out", str(tmp_path / "s.json"),
        ])
        assert code != 0


class TestRender:
    def test_matches_library_bytes(self, tmp_path):
        path, seq = write_scene(tmp_path)
        out = tmp_path / "frames"
        assert main(["render", "--scene", str(path), "--out", str(out)]) == 0
        direct = render_sequence(seq, RenderConfig(resolution=seq.resolution))
        loaded = load_frames(out)
        assert len(loaded) == len(direct)
        for a, b in zip(loaded, direct):
            assert np.array_equal(a, b)

    def test_flat_vs_depth_blue_only(self, tmp_path):
        path, _ = write_scene(tmp_path)
        main(["render", "--scene", str(path), "--out", str(tmp_path / "d"), "--mode", "ellipse_depth"])
        main(["render", "--scene", str(path), "--out", str(tmp_path / "f"), "--mode", "ellipse_flat"])
        for a, b in zip(load_frames(tmp_path / "d"), load_frames(tmp_path / "f")):
            assert np.array_equal(a[:, :, :2], b[:, :, :2])
            assert not b[:, :, 2].any()


class TestEdit:
    def test_matches_library(self, tmp_path):
        path, seq = write_scene(tmp_path)
        traj_doc = {"entity": "mover", "mode": "replace", "span": None,
                    "waypoints": [[0.2, 0.2], [0.8, 0.8]]}
        traj_path = tmp_path / "traj.json"
        traj_path.write_text(json.dumps(traj_doc))
        out = tmp_path / "edited.json"
        assert main(["edit", "--scene", str(path), "--trajectory", str(traj_path),
                     "--out", str(out)]) == 0
        expected = apply_trajectory(seq, Trajectory.from_dict(traj_doc))
        assert scene.load(out) == expected


class TestConditionAndMetrics:
    def test_echo_pipeline_all_ones(self, tmp_path):
        path, _ = write_scene(tmp_path)
        bundle_dir = tmp_path / "bundle"
        assert main([
            "condition", "--scene", str(path), "--out", str(bundle_dir),
            "--backend", "mock", "--generated-out", str(tmp_path / "gen"),
        ]) == 0
        report_path = tmp_path / "report.json"
        assert main([
            "metrics", "--bundle", str(bundle_dir),
            "--generated", str(tmp_path / "gen"), "--out", str(report_path),
            "--csv", str(tmp_path / "report.csv"),
        ]) == 0
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[0] == "frame,ssim,psnr,bb_iou_mean,seg_iou_mean"
        assert len(csv_lines) == 5
        report = json.loads(report_path.read_text())
        agg = report["aggregate"]
        assert agg["seg_iou_micro"] == 1.0
        assert agg["bb_iou_micro"] == 1.0
        assert agg["seg_iou_macro"] == 1.0
        assert agg["bb_iou_macro"] == 1.0
        assert agg["ssim"] == pytest.approx(1.0, abs=1e-9)

    def test_condition_with_edit_and_initial_frame(self, tmp_path):
        path, seq = write_scene(tmp_path)
        traj_path = tmp_path / "traj.json"
        traj_path.write_text(json.dumps({
            "entity": "mover", "mode": "offset", "span": None,
            "waypoints": [[0.3, 0.5], [0.4, 0.6]],
        }))
        from PIL import Image

        initial = tmp_path / "initial.png"
        Image.fromarray(np.zeros((192, 256, 3), dtype=np.uint8)).save(initial)
        bundle_dir = tmp_path / "bundle"
        assert main([
            "condition", "--scene", str(path), "--out", str(bundle_dir),
            "--trajectory", str(traj_path), "--initial-frame", str(initial),
        ]) == 0
        manifest = json.loads((bundle_dir / "manifest.json").read_text())
        assert manifest["provenance"]["mover"] == "user_edit"
        assert manifest["initial_scene"] == "initial_scene.png"
        assert (bundle_dir / "initial_scene.png").exists()


class TestNearMiss:
    def test_gen_exact_counts(self, tmp_path):
        out = tmp_path / "dataset"
        code = main([
            "nearmiss-gen", "--out", str(out),
            "--positives", "12", "--negatives", "20",
            "--width", "128", "--height", "96",
            "--frames-per-scenario", "11", "--seed", "0",
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["counts"]["train"] == {"positive": 12, "negative": 20}

    def test_label_command(self, tmp_path):
        path, _ = write_scene(tmp_path)
        out = tmp_path / "labels.csv"
        code = main([
            "nearmiss-label", "--scene", str(path), "--out", str(out),
            "--subject-classes", "1", "--protected-class", "11", "--tau", "0.5",
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "frame_path,label,min_distance,subject_id,protected_id"
        assert len(lines) == 5

    def test_invalid_counts_exit_1(self, tmp_path):
        code = main([
            "nearmiss-gen", "--out", str(tmp_path / "x"),
            "--positives", "0", "--negatives", "0",
        ])
        assert code == 1


class TestParsing:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_help_exits_0(self, capsys):
        assert main(["--help"]) == 0

    def test_config_file_fills_defaults(self, tmp_path):
        path, seq = write_scene(tmp_path)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"mode": "ellipse_flat"}))
        out = tmp_path / "frames"
        assert main(["--config", str(config), "render",
                     "--scene", str(path), "--out", str(out)]) == 0
        imgs = load_frames(out)
        assert not any(img[:, :, 2].any() for img in imgs)

    def test_flags_override_config(self, tmp_path):
        path, seq = write_scene(tmp_path)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"mode": "ellipse_flat"}))
        out = tmp_path / "frames"
        assert main(["--config", str(config), "render", "--scene", str(path),
                     "--out", str(out), "--mode", "ellipse_depth"]) == 0
        imgs = load_frames(out)
        assert any(img[:, :, 2].any() for img in imgs)
