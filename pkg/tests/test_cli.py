import numpy as np
import pytest

from deformsynth.cli import main
from deformsynth.config import get_bool, get_float, get_int, parse_config, write_config
from deformsynth.errors import ConfigError
from deformsynth.meshcore import bbox_diagonal, read_obj_sequence, save_obj, write_obj_sequence, make_sequence
from deformsynth.pipeline import run_pipeline
from deformsynth.synthetic import grid_mesh
from deformsynth.tsacap import load_features


class TestConfigFile:
    def test_parse_types_and_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nframes = 12\nlr=0.003\nmotion = wave # trailing\nflag = true\n\n")
        cfg = parse_config(path)
        assert get_int(cfg, "frames", 0) == 12
        assert get_float(cfg, "lr", 0.0) == pytest.approx(3e-3)
        assert cfg["motion"] == "wave"
        assert get_bool(cfg, "flag", False) is True
        assert get_int(cfg, "missing", 7) == 7

    def test_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("frames = 12\nnonsense line\n")
        with pytest.raises(ConfigError, match="2"):
            parse_config(path)

    def test_bad_type(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("frames = soon\n")
        with pytest.raises(ConfigError, match="frames"):
            get_int(parse_config(path), "frames", 0)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "rt.cfg"
        write_config(path, {"a": "1", "b": "two"})
        assert parse_config(path) == {"a": "1", "b": "two"}


def make_wave_sequence(tmp_path, n=5, frames=3, amp=2e-6):
    """Tiny OBJ sequence: rest plus growing low-frequency bumps, corner pinned."""
    mesh = grid_mesh(n)
    seq = []
    for t in range(frames):
        f = mesh.vertices.copy()
        f[:, 2] += amp * t * np.sin(np.pi * f[:, 0]) * np.sin(np.pi * f[:, 1])
        seq.append(f)
    write_obj_sequence(tmp_path, make_sequence(mesh, seq))
    return mesh, seq


class TestCliCommands:
    def test_gen_data(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("coarse_res = 5\nfine_res = 9\nframes = 4\n")
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out), "gen-data"]) == 0
        coarse = read_obj_sequence(out / "coarse")
        fine = read_obj_sequence(out / "fine_gt")
        assert coarse.frame_count == 4 and fine.frame_count == 4
        assert coarse.vertex_count == 25 and fine.vertex_count == 81

    def test_encode_reconstruct_round_trip(self, tmp_path):
        frames_dir = tmp_path / "frames"
        mesh, seq = make_wave_sequence(frames_dir)
        out = tmp_path / "out"
        assert main(["--out", str(out), "encode", "--frames", str(frames_dir)]) == 0
        feats = load_features(out / "features.tsacap")
        assert feats.frame_count == 3 and feats.vertex_count == 25

        ref = frames_dir / "frame_00000.obj"
        assert main([
            "--out", str(out), "reconstruct",
            "--features", str(out / "features.tsacap"), "--reference", str(ref),
        ]) == 0
        recon = read_obj_sequence(out / "recon")
        diag = bbox_diagonal(seq[-1])
        assert np.abs(recon.frames[-1] - seq[-1]).max() / diag < 1e-6

    def test_encode_acap_flag(self, tmp_path):
        frames_dir = tmp_path / "frames"
        make_wave_sequence(frames_dir)
        out = tmp_path / "out"
        assert main([
            "--out", str(out), "encode", "--frames", str(frames_dir),
            "--name", "acap", "--acap",
        ]) == 0
        assert load_features(out / "acap.tsacap").frame_count == 3

    def test_interp(self, tmp_path):
        frames_dir = tmp_path / "frames"
        make_wave_sequence(frames_dir)
        out = tmp_path / "out"
        main(["--out", str(out), "encode", "--frames", str(frames_dir)])
        assert main([
            "--out", str(out), "interp",
            "--features", str(out / "features.tsacap"),
            "--reference", str(frames_dir / "frame_00000.obj"),
            "--frame-a", "0", "--frame-b", "2", "--steps", "4",
        ]) == 0
        interp = read_obj_sequence(out / "interp")
        assert interp.frame_count == 4

    def test_metrics_csv(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        mesh, seq = make_wave_sequence(a_dir)
        write_obj_sequence(b_dir, make_sequence(mesh, [f + [0, 0, 0.01] for f in seq]))
        out = tmp_path / "out"
        assert main([
            "--out", str(out), "metrics",
            "--sequence-a", str(a_dir), "--sequence-b", str(b_dir),
        ]) == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "dataset,method,rmse,hausdorff,sted,seconds_per_frame"
        assert len(lines) == 2
        rmse_val = float(lines[1].split(",")[2])
        assert rmse_val == pytest.approx(0.01, abs=1e-9)  # OBJ files carry 9 digits

    def test_refine_with_obstacle(self, tmp_path):
        frames_dir = tmp_path / "frames"
        mesh, _ = make_wave_sequence(frames_dir)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "obstacle = sphere\nobstacle_cx = 0.5\nobstacle_cy = 0.5\n"
            "obstacle_cz = -0.45\nobstacle_radius = 0.5\n"
        )
        out = tmp_path / "out"
        assert main([
            "--config", str(cfg), "--out", str(out), "refine", "--frames", str(frames_dir),
        ]) == 0
        refined = read_obj_sequence(out / "refined")
        assert refined.frame_count == 3
        assert refined.frames[0][:, 2].max() > 0.0  # cap pushed the sheet up

    def test_training_chain(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("coarse_res = 4\nfine_res = 7\nframes = 6\nwrinkle_amplitude = 0.01\n")
        out = tmp_path / "out"
        main(["--config", str(cfg), "--out", str(out), "gen-data"])
        main(["--out", str(out), "encode", "--frames", str(out / "coarse"), "--name", "coarse"])
        main(["--out", str(out), "encode", "--frames", str(out / "fine_gt"), "--name", "fine"])
        coarse_ref = str(out / "coarse" / "frame_00000.obj")
        fine_ref = str(out / "fine_gt" / "frame_00000.obj")
        assert main([
            "--out", str(out), "train-ae", "--features", str(out / "coarse.tsacap"),
            "--reference", coarse_ref, "--name", "ae_coarse", "--epochs", "30",
        ]) == 0
        assert main([
            "--out", str(out), "train-ae", "--features", str(out / "fine.tsacap"),
            "--reference", fine_ref, "--name", "ae_fine", "--epochs", "30",
        ]) == 0
        assert main([
            "--out", str(out), "train-xf",
            "--coarse-features", str(out / "coarse.tsacap"),
            "--fine-features", str(out / "fine.tsacap"),
            "--coarse-reference", coarse_ref, "--fine-reference", fine_ref,
            "--coarse-ae", str(out / "ae_coarse.dtfm"),
            "--fine-ae", str(out / "ae_fine.dtfm"),
            "--epochs", "20",
        ]) == 0
        assert main([
            "--out", str(out), "synth", "--checkpoint", str(out / "model.dtfm"),
            "--coarse", str(out / "coarse"),
            "--coarse-reference", coarse_ref, "--fine-reference", fine_ref,
        ]) == 0
        synth = read_obj_sequence(out / "synth")
        assert synth.frame_count == 6
        assert synth.vertex_count == 49

    def test_error_exit_code(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path), "encode", "--frames", str(tmp_path / "nope")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestObstacleConfig:
    def test_sphere_capsule_cylinder_parsing(self):
        from deformsynth.pipeline import obstacle_from_config
        from deformsynth.postprocess import Capsule, Cylinder, Sphere

        assert obstacle_from_config({}, 1.0) is None
        s = obstacle_from_config(
            {"obstacle": "sphere", "obstacle_radius": "0.4"}, 2.0
        )
        assert isinstance(s, Sphere)
        assert s.radius == 0.4 and s.margin == pytest.approx(2e-3)
        c = obstacle_from_config(
            {"obstacle": "capsule", "obstacle_p0x": "0.1", "obstacle_p1z": "0.9"}, 1.0
        )
        assert isinstance(c, Capsule)
        np.testing.assert_allclose(c.p0, [0.1, 0, 0])
        np.testing.assert_allclose(c.p1, [1.0, 1.0, 0.9])
        cyl = obstacle_from_config(
            {"obstacle": "cylinder", "obstacle_height": "0.8",
             "obstacle_margin": "0.01"}, 1.0
        )
        assert isinstance(cyl, Cylinder)
        assert cyl.height == 0.8 and cyl.margin == 0.01
        with pytest.raises(ConfigError):
            obstacle_from_config({"obstacle": "teapot"}, 1.0)


class TestPipeline:
    def test_small_pipeline_schema(self, tmp_path):
        cfg = {
            "coarse_res": "5", "fine_res": "9", "frames": "8", "motion": "wave",
            "ae_epochs": "60", "xf_epochs": "40", "wrinkle_amplitude": "0.02",
            "seed": "5",
        }
        report = run_pipeline(cfg, tmp_path / "out")
        csv_lines = (tmp_path / "out" / "metrics.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "dataset,method,rmse,hausdorff,sted,seconds_per_frame"
        methods = [ln.split(",")[1] for ln in csv_lines[1:]]
        assert methods == ["synth", "baseline"]
        for name in ("coarse", "fine_gt", "synth"):
            assert (tmp_path / "out" / name / "frame_00007.obj").exists()
        assert (tmp_path / "out" / "model.dtfm").exists()
        assert (tmp_path / "out" / "coarse.tsacap").exists()
        assert set(report["stage_seconds"]) == {
            "gen_data", "encode", "train_ae", "train_transformer",
            "synthesize", "refine", "metrics",
        }

    def test_stage_error_names_stage(self, tmp_path):
        from deformsynth.errors import DeformSynthError

        cfg = {"coarse_res": "5", "fine_res": "9", "frames": "8", "obstacle": "teapot"}
        with pytest.raises(DeformSynthError, match="refine"):
            run_pipeline(cfg, tmp_path / "out")

    def test_cli_pipeline(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "coarse_res = 5\nfine_res = 9\nframes = 6\nae_epochs = 30\n"
            "xf_epochs = 20\nwrinkle_amplitude = 0.02\n"
        )
        out = tmp_path / "out"
        assert main(["--config", str(cfg), "--out", str(out), "--seed", "3", "pipeline"]) == 0
        assert (out / "metrics.csv").exists()
