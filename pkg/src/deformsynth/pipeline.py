"""End-to-end orchestration: data, features, training, synthesis, metrics.

Stage order: gen-data -> encode (both resolutions) -> train two
autoencoders -> train the transformer -> autoregressive synthesis ->
collision refinement (when an obstacle is configured) -> metrics against
the fine ground truth, including the midpoint-subdivided coarse baseline.
Every stage is timed; any stage error aborts with the stage name.
"""

from __future__ import annotations

import os
import time

import numpy as np

from deformsynth import config as cfgmod
from deformsynth.errors import ConfigError, DeformSynthError
from deformsynth.meshcore import (
    MeshSequence,
    bbox_diagonal,
    make_sequence,
    write_obj_sequence,
)
from deformsynth.metrics import hausdorff_positions, rmse, sted
from deformsynth.neuralnet.checkpoint import save_checkpoint
from deformsynth.neuralnet.training import (
    ModelBundle,
    TrainConfig,
    encode_sequence,
    synthesize_sequence,
    train_autoencoder,
    train_transformer,
)
from deformsynth.postprocess import Capsule, Cylinder, Sphere, refine
from deformsynth.synthetic import (
    SyntheticConfig,
    gen_dataset,
    subdivided_baseline,
)
from deformsynth.tsacap import extract_features, save_features

CSV_COLUMNS = ("dataset", "method", "rmse", "hausdorff", "sted", "seconds_per_frame")


def synthetic_config(cfg: dict, seed_override: int | None = None) -> SyntheticConfig:
    seed = seed_override if seed_override is not None else cfgmod.get_int(cfg, "seed", 0)
    amplitude = cfgmod.get_float(cfg, "motion_amplitude", float("nan"))
    return SyntheticConfig(
        coarse_res=cfgmod.get_int(cfg, "coarse_res", 9),
        fine_res=cfgmod.get_int(cfg, "fine_res", 33),
        frame_count=cfgmod.get_int(cfg, "frames", 60),
        seed=seed,
        motion=cfgmod.get_str(cfg, "motion", "wave"),
        motion_amplitude=None if np.isnan(amplitude) else amplitude,
        wrinkle_amplitude=cfgmod.get_float(cfg, "wrinkle_amplitude", 0.05),
        wrinkle_frequency=cfgmod.get_float(cfg, "wrinkle_frequency", 3.0),
        size=cfgmod.get_float(cfg, "size", 1.0),
    )


def obstacle_from_config(cfg: dict, bbox_diag: float):
    kind = cfgmod.get_str(cfg, "obstacle", "none")
    if kind == "none":
        return None
    margin = cfgmod.get_float(cfg, "obstacle_margin", 1e-3 * bbox_diag)
    if kind == "sphere":
        center = np.array(
            [
                cfgmod.get_float(cfg, "obstacle_cx", 0.5),
                cfgmod.get_float(cfg, "obstacle_cy", 0.5),
                cfgmod.get_float(cfg, "obstacle_cz", -0.1),
            ]
        )
        return Sphere(center=center, radius=cfgmod.get_float(cfg, "obstacle_radius", 0.2),
                      margin=margin)
    if kind == "capsule":
        p0 = np.array([cfgmod.get_float(cfg, f"obstacle_p0{k}", 0.0) for k in "xyz"])
        p1 = np.array([cfgmod.get_float(cfg, f"obstacle_p1{k}", 1.0) for k in "xyz"])
        return Capsule(p0=p0, p1=p1, radius=cfgmod.get_float(cfg, "obstacle_radius", 0.2),
                       margin=margin)
    if kind == "cylinder":
        center = np.array([cfgmod.get_float(cfg, f"obstacle_c{k}", 0.5) for k in "xyz"])
        axis = np.array(
            [
                cfgmod.get_float(cfg, "obstacle_ax", 0.0),
                cfgmod.get_float(cfg, "obstacle_ay", 0.0),
                cfgmod.get_float(cfg, "obstacle_az", 1.0),
            ]
        )
        return Cylinder(center=center, axis=axis,
                        radius=cfgmod.get_float(cfg, "obstacle_radius", 0.2),
                        height=cfgmod.get_float(cfg, "obstacle_height", 0.4), margin=margin)
    raise ConfigError(f"unknown obstacle kind {kind!r}")


def write_metrics_csv(path, rows: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                "{dataset},{method},{rmse:.17g},{hausdorff:.17g},{sted:.17g},{spf:.6f}\n".format(
                    **row
                )
            )


def sequence_metrics(candidate: MeshSequence, truth: MeshSequence) -> dict:
    """rmse/sted on shared topology plus the mean per-frame Hausdorff."""
    hd = float(
        np.mean(
            [
                hausdorff_positions(
                    candidate.frames[t],
                    candidate.reference.faces,
                    truth.frames[t],
                    truth.reference.faces,
                )
                for t in range(truth.frame_count)
            ]
        )
    )
    return {
        "rmse": rmse(candidate, truth),
        "hausdorff": hd,
        "sted": sted(candidate, truth),
    }


class _StageTimer:
    def __init__(self):
        self.seconds: dict = {}
        self._current = None
        self._start = 0.0

    def start(self, name: str):
        self._current = name
        self._start = time.perf_counter()

    def stop(self):
        self.seconds[self._current] = time.perf_counter() - self._start
        self._current = None


def run_pipeline(cfg: dict, out_dir, seed_override: int | None = None) -> dict:
    """Execute every stage; returns a report with timings, losses, metrics."""
    os.makedirs(out_dir, exist_ok=True)
    timer = _StageTimer()
    report: dict = {"out_dir": str(out_dir)}
    stage = "gen-data"
    try:
        timer.start("gen_data")
        syn = synthetic_config(cfg, seed_override)
        coarse_seq, fine_seq = gen_dataset(syn)
        write_obj_sequence(os.path.join(out_dir, "coarse"), coarse_seq)
        write_obj_sequence(os.path.join(out_dir, "fine_gt"), fine_seq)
        timer.stop()

        stage = "encode"
        timer.start("encode")
        coarse_feats, _ = extract_features(coarse_seq, temporal=True)
        fine_feats, _ = extract_features(fine_seq, temporal=True)
        save_features(os.path.join(out_dir, "coarse.tsacap"), coarse_feats)
        save_features(os.path.join(out_dir, "fine.tsacap"), fine_feats)
        timer.stop()

        stage = "train-ae"
        timer.start("train_ae")
        lr = cfgmod.get_float(cfg, "lr", 3e-3)
        bundle = ModelBundle.build(
            coarse_seq.reference,
            fine_seq.reference,
            window=cfgmod.get_int(cfg, "window", 3),
            seed=syn.seed,
            lr=lr,
        )
        ae_cfg = TrainConfig(epochs=cfgmod.get_int(cfg, "ae_epochs", 1200), lr=lr, seed=syn.seed)
        losses_coarse = train_autoencoder(
            bundle.coarse_encoder, bundle.coarse_decoder, coarse_feats, ae_cfg
        )
        losses_fine = train_autoencoder(
            bundle.fine_encoder, bundle.fine_decoder, fine_feats, ae_cfg
        )
        report["ae_coarse_final_loss"] = losses_coarse[-1] if losses_coarse else None
        report["ae_fine_final_loss"] = losses_fine[-1] if losses_fine else None
        timer.stop()

        stage = "train-xf"
        timer.start("train_transformer")
        coarse_latents = encode_sequence(bundle.coarse_encoder, coarse_feats)
        fine_latents = encode_sequence(bundle.fine_encoder, fine_feats)
        xf_cfg = TrainConfig(
            epochs=cfgmod.get_int(cfg, "xf_epochs", 600),
            lr=lr,
            seed=syn.seed,
            window=bundle.transformer.window,
        )
        losses_xf = train_transformer(
            bundle.transformer, coarse_latents, fine_latents, bundle.fine_decoder,
            fine_feats, xf_cfg
        )
        bundle.trained = True
        report["transformer_final_loss"] = losses_xf[-1] if losses_xf else None
        save_checkpoint(os.path.join(out_dir, "model.dtfm"), bundle)
        timer.stop()

        stage = "synth"
        timer.start("synthesize")
        anchor_mode = cfgmod.get_str(cfg, "anchor", "gt")
        anchors = None
        if anchor_mode == "gt":
            anchors = np.stack([f[0] for f in fine_seq.frames])
        synth_seq = synthesize_sequence(bundle, coarse_seq, anchor_positions=anchors)
        write_obj_sequence(os.path.join(out_dir, "synth"), synth_seq)
        timer.stop()

        stage = "refine"
        timer.start("refine")
        diag = bbox_diagonal(fine_seq.frames[0])
        obstacle = obstacle_from_config(cfg, diag)
        refined_seq = synth_seq
        if obstacle is not None:
            refined_frames = []
            iterations = []
            for frame in synth_seq.frames:
                result = refine(frame, obstacle, frame, fine_seq.reference)
                refined_frames.append(result.positions)
                iterations.append(result.iterations)
            refined_seq = make_sequence(fine_seq.reference, refined_frames)
            write_obj_sequence(os.path.join(out_dir, "refined"), refined_seq)
            report["refine_iterations"] = iterations
        timer.stop()

        stage = "metrics"
        timer.start("metrics")
        baseline_start = time.perf_counter()
        baseline_seq = subdivided_baseline(
            coarse_seq, syn.coarse_res, syn.fine_res, fine_seq.reference
        )
        baseline_seconds = time.perf_counter() - baseline_start
        synth_metrics = sequence_metrics(refined_seq, fine_seq)
        base_metrics = sequence_metrics(baseline_seq, fine_seq)
        n = fine_seq.frame_count
        synth_spf = (timer.seconds["synthesize"] + timer.seconds["refine"]) / n
        rows = [
            {"dataset": syn.motion, "method": "synth", "spf": synth_spf, **synth_metrics},
            {
                "dataset": syn.motion,
                "method": "baseline",
                "spf": baseline_seconds / n,
                **base_metrics,
            },
        ]
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
        report["metrics"] = {"synth": synth_metrics, "baseline": base_metrics}
        timer.stop()
    except Exception as exc:
        raise DeformSynthError(f"pipeline stage {stage!r} failed: {exc}") from exc

    report["stage_seconds"] = timer.seconds
    report["total_seconds"] = float(sum(timer.seconds.values()))
    return report
