"""Command-line interface.

Subcommands: gen-data, encode, reconstruct, interp, train-ae, train-xf,
synth, refine, metrics, pipeline. Global flags --seed, --config, --out.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from deformsynth import config as cfgmod
from deformsynth.errors import DeformSynthError
from deformsynth.meshcore import (
    bbox_diagonal,
    compute_weights,
    load_obj,
    make_sequence,
    read_obj_sequence,
    save_obj,
    write_obj_sequence,
)
from deformsynth.neuralnet.checkpoint import (
    load_autoencoder,
    load_checkpoint,
    save_autoencoder,
    save_checkpoint,
)
from deformsynth.neuralnet.training import (
    ModelBundle,
    TrainConfig,
    encode_sequence,
    synthesize_sequence,
    train_autoencoder,
    train_transformer,
)
from deformsynth.pipeline import (
    obstacle_from_config,
    run_pipeline,
    sequence_metrics,
    synthetic_config,
    write_metrics_csv,
)
from deformsynth.postprocess import refine
from deformsynth.reconstruct import Reconstructor, interpolate
from deformsynth.synthetic import gen_dataset
from deformsynth.tsacap import extract_features, load_features, save_features


def _load_cfg(args) -> dict:
    if args.config:
        return cfgmod.parse_config(args.config)
    return {}


def _reference(path):
    return compute_weights(load_obj(path))


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    syn = synthetic_config(cfg, args.seed)
    coarse_seq, fine_seq = gen_dataset(syn)
    write_obj_sequence(os.path.join(args.out, "coarse"), coarse_seq)
    write_obj_sequence(os.path.join(args.out, "fine_gt"), fine_seq)
    print(f"wrote {coarse_seq.frame_count} coarse and fine frames to {args.out}")
    return 0


def cmd_encode(args) -> int:
    seq = read_obj_sequence(args.frames)
    feats, _ = extract_features(seq, temporal=not args.acap)
    out_path = os.path.join(args.out, args.name + ".tsacap")
    os.makedirs(args.out, exist_ok=True)
    save_features(out_path, feats)
    print(f"wrote {feats.frame_count} frames x {feats.vertex_count} vertices to {out_path}")
    return 0


def cmd_reconstruct(args) -> int:
    reference = _reference(args.reference)
    feats = load_features(args.features)
    recon = Reconstructor(reference, anchor=args.anchor_index)
    frames = []
    for t in range(feats.frame_count):
        anchor_pos = reference.vertices[args.anchor_index]
        frames.append(recon.reconstruct(feats.frame(t), anchor_pos))
    seq = make_sequence(reference, frames)
    write_obj_sequence(os.path.join(args.out, "recon"), seq)
    print(f"reconstructed {feats.frame_count} frames into {args.out}/recon")
    return 0


def cmd_interp(args) -> int:
    reference = _reference(args.reference)
    feats = load_features(args.features)
    recon = Reconstructor(reference, anchor=0)
    a = feats.frame(args.frame_a)
    b = feats.frame(args.frame_b)
    frames = []
    for k in range(args.steps):
        t = k / (args.steps - 1) if args.steps > 1 else 0.0
        frames.append(recon.reconstruct(interpolate(a, b, t), reference.vertices[0]))
    seq = make_sequence(reference, frames)
    write_obj_sequence(os.path.join(args.out, "interp"), seq)
    print(f"wrote {args.steps} interpolated frames into {args.out}/interp")
    return 0


def cmd_train_ae(args) -> int:
    cfg = _load_cfg(args)
    reference = _reference(args.reference)
    feats = load_features(args.features)
    seed = args.seed if args.seed is not None else cfgmod.get_int(cfg, "seed", 0)
    lr = cfgmod.get_float(cfg, "lr", 3e-3)
    epochs = args.epochs if args.epochs is not None else cfgmod.get_int(cfg, "ae_epochs", 1200)
    rng = np.random.default_rng(seed)
    from deformsynth.neuralnet.layers import FrameDecoder, FrameEncoder

    enc = FrameEncoder(reference, 9, (16, 16), 16, rng)
    dec = FrameDecoder(reference, 9, (16, 16), 16, rng)
    losses = train_autoencoder(enc, dec, feats, TrainConfig(epochs=epochs, lr=lr, seed=seed))
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, args.name + ".dtfm")
    save_autoencoder(out_path, enc, dec, seed)
    print(f"final loss {losses[-1]:.3e} after {epochs} epochs; checkpoint at {out_path}")
    return 0


def cmd_train_xf(args) -> int:
    cfg = _load_cfg(args)
    coarse_ref = _reference(args.coarse_reference)
    fine_ref = _reference(args.fine_reference)
    coarse_feats = load_features(args.coarse_features)
    fine_feats = load_features(args.fine_features)
    seed = args.seed if args.seed is not None else cfgmod.get_int(cfg, "seed", 0)
    lr = cfgmod.get_float(cfg, "lr", 3e-3)
    epochs = args.epochs if args.epochs is not None else cfgmod.get_int(cfg, "xf_epochs", 600)

    bundle = ModelBundle.build(coarse_ref, fine_ref, seed=seed, lr=lr)
    enc_c, dec_c, _ = load_autoencoder(args.coarse_ae, coarse_ref)
    enc_f, dec_f, _ = load_autoencoder(args.fine_ae, fine_ref)
    bundle.coarse_encoder, bundle.coarse_decoder = enc_c, dec_c
    bundle.fine_encoder, bundle.fine_decoder = enc_f, dec_f

    coarse_latents = encode_sequence(bundle.coarse_encoder, coarse_feats)
    fine_latents = encode_sequence(bundle.fine_encoder, fine_feats)
    losses = train_transformer(
        bundle.transformer, coarse_latents, fine_latents, bundle.fine_decoder, fine_feats,
        TrainConfig(epochs=epochs, lr=lr, seed=seed, window=bundle.transformer.window),
    )
    bundle.trained = True
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "model.dtfm")
    save_checkpoint(out_path, bundle)
    print(f"final loss {losses[-1]:.3e} after {epochs} epochs; checkpoint at {out_path}")
    return 0


def cmd_synth(args) -> int:
    coarse_ref = _reference(args.coarse_reference)
    fine_ref = _reference(args.fine_reference)
    bundle = load_checkpoint(args.checkpoint, coarse_ref, fine_ref)
    coarse_seq = read_obj_sequence(args.coarse)
    synth_seq = synthesize_sequence(bundle, coarse_seq)
    write_obj_sequence(os.path.join(args.out, "synth"), synth_seq)
    print(f"synthesized {synth_seq.frame_count} fine frames into {args.out}/synth")
    return 0


def cmd_refine(args) -> int:
    cfg = _load_cfg(args)
    seq = read_obj_sequence(args.frames)
    diag = bbox_diagonal(seq.frames[0])
    obstacle = obstacle_from_config(cfg, diag)
    if obstacle is None:
        print("no obstacle configured; nothing to refine")
        return 0
    os.makedirs(os.path.join(args.out, "refined"), exist_ok=True)
    total_iters = 0
    frames = []
    for frame in seq.frames:
        result = refine(frame, obstacle, frame, seq.reference)
        frames.append(result.positions)
        total_iters += result.iterations
        if not result.collision_free:
            print(f"warning: {result.message}", file=sys.stderr)
    write_obj_sequence(os.path.join(args.out, "refined"), make_sequence(seq.reference, frames))
    print(f"refined {seq.frame_count} frames ({total_iters} solver iterations total)")
    return 0


def cmd_metrics(args) -> int:
    seq_a = read_obj_sequence(args.sequence_a)
    seq_b = read_obj_sequence(args.sequence_b)
    vals = sequence_metrics(seq_a, seq_b)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "metrics.csv")
    write_metrics_csv(out_path, [{"dataset": args.name, "method": "pair", "spf": 0.0, **vals}])
    print(f"rmse={vals['rmse']:.6g} hausdorff={vals['hausdorff']:.6g} sted={vals['sted']:.6g}")
    print(f"wrote {out_path}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    report = run_pipeline(cfg, args.out, seed_override=args.seed)
    for name, secs in report["stage_seconds"].items():
        print(f"{name:18s} {secs:8.2f} s")
    print(f"total              {report['total_seconds']:8.2f} s")
    for method, vals in report["metrics"].items():
        print(
            f"{method:9s} rmse={vals['rmse']:.6g} hausdorff={vals['hausdorff']:.6g} "
            f"sted={vals['sted']:.6g}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deformsynth",
        description="Deformation detail synthesis for thin-shell mesh sequences",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--out", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate the paired synthetic dataset")

    p = sub.add_parser("encode", help="extract features from an OBJ sequence")
    p.add_argument("--frames", required=True)
    p.add_argument("--name", default="features")
    p.add_argument("--acap", action="store_true", help="drop temporal consistency terms")

    p = sub.add_parser("reconstruct", help="rebuild OBJ frames from a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--anchor-index", type=int, default=0)

    p = sub.add_parser("interp", help="interpolate two feature frames")
    p.add_argument("--features", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--frame-a", type=int, required=True)
    p.add_argument("--frame-b", type=int, required=True)
    p.add_argument("--steps", type=int, default=10)

    p = sub.add_parser("train-ae", help="train a frame autoencoder")
    p.add_argument("--features", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--name", default="ae")
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("train-xf", help="train the sequence transformer")
    p.add_argument("--coarse-features", required=True)
    p.add_argument("--fine-features", required=True)
    p.add_argument("--coarse-reference", required=True)
    p.add_argument("--fine-reference", required=True)
    p.add_argument("--coarse-ae", required=True)
    p.add_argument("--fine-ae", required=True)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("synth", help="synthesize fine frames from coarse ones")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--coarse", required=True)
    p.add_argument("--coarse-reference", required=True)
    p.add_argument("--fine-reference", required=True)

    p = sub.add_parser("refine", help="resolve obstacle penetrations")
    p.add_argument("--frames", required=True)

    p = sub.add_parser("metrics", help="compare two OBJ sequences")
    p.add_argument("--sequence-a", required=True)
    p.add_argument("--sequence-b", required=True)
    p.add_argument("--name", default="pair")

    sub.add_parser("pipeline", help="run every stage per the config")
    return parser


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "encode": cmd_encode,
    "reconstruct": cmd_reconstruct,
    "interp": cmd_interp,
    "train-ae": cmd_train_ae,
    "train-xf": cmd_train_xf,
    "synth": cmd_synth,
    "refine": cmd_refine,
    "metrics": cmd_metrics,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except DeformSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
