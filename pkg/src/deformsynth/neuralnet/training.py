"""Training loops and autoregressive synthesis.

Autoencoders are trained per resolution on reconstruction MSE. The
transformer is trained teacher-forced on 3-frame windows: the decoder
input is the ground-truth fine latent sequence shifted right behind a zero
start token, and the loss is the MSE between decoded predicted features
and ground-truth features with the fine decoder frozen. Synthesis replays
the same windowing autoregressively, seeding each window with the zero
token and feeding back previously generated latents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from deformsynth.errors import AlignmentError, DivergenceError, ShapeError, StateError
from deformsynth.meshcore import Mesh, MeshSequence, make_sequence
from deformsynth.neuralnet.autodiff import Adam, Tensor
from deformsynth.neuralnet.layers import FrameDecoder, FrameEncoder
from deformsynth.neuralnet.transformer import DeformTransformer
from deformsynth.reconstruct import Reconstructor
from deformsynth.tsacap import FeatureFrame, FeatureSequence, extract_features


@dataclass
class TrainConfig:
    epochs: int = 2000
    lr: float = 1e-3
    seed: int = 0
    window: int = 3


@dataclass
class ModelBundle:
    """Everything the pipeline trains: two autoencoders plus the transformer."""

    coarse_mesh: Mesh
    fine_mesh: Mesh
    coarse_encoder: FrameEncoder
    coarse_decoder: FrameDecoder
    fine_encoder: FrameEncoder
    fine_decoder: FrameDecoder
    transformer: DeformTransformer
    hyper: dict = field(default_factory=dict)
    trained: bool = False

    @classmethod
    def build(cls, coarse_mesh: Mesh, fine_mesh: Mesh, feature_dim: int = 9,
              conv_dims: tuple = (16, 16), latent_dim: int = 16, heads: int = 8,
              blocks: int = 2, hidden: int = 64, window: int = 3, seed: int = 0,
              lr: float = 1e-3) -> "ModelBundle":
        rng = np.random.default_rng(seed)
        hyper = {
            "feature_dim": feature_dim,
            "conv_dims": list(conv_dims),
            "latent_dim": latent_dim,
            "heads": heads,
            "blocks": blocks,
            "hidden": hidden,
            "window": window,
            "seed": seed,
            "lr": lr,
            "coarse_vertices": coarse_mesh.vertex_count,
            "fine_vertices": fine_mesh.vertex_count,
        }
        return cls(
            coarse_mesh=coarse_mesh,
            fine_mesh=fine_mesh,
            coarse_encoder=FrameEncoder(coarse_mesh, feature_dim, conv_dims, latent_dim, rng),
            coarse_decoder=FrameDecoder(coarse_mesh, feature_dim, conv_dims, latent_dim, rng),
            fine_encoder=FrameEncoder(fine_mesh, feature_dim, conv_dims, latent_dim, rng),
            fine_decoder=FrameDecoder(fine_mesh, feature_dim, conv_dims, latent_dim, rng),
            transformer=DeformTransformer(latent_dim, heads, blocks, hidden, window, rng=rng),
            hyper=hyper,
        )

    def params(self) -> dict:
        out = {}
        out.update(self.coarse_encoder.params("coarse_enc"))
        out.update(self.coarse_decoder.params("coarse_dec"))
        out.update(self.fine_encoder.params("fine_enc"))
        out.update(self.fine_decoder.params("fine_dec"))
        out.update(self.transformer.params("xf"))
        return out


def train_autoencoder(encoder: FrameEncoder, decoder: FrameDecoder, dataset: np.ndarray,
                      config: TrainConfig) -> list:
    """Full-batch reconstruction-MSE training; returns the per-epoch loss curve."""
    data = dataset.data if isinstance(dataset, FeatureSequence) else np.asarray(dataset)
    if data.ndim != 3:
        raise ShapeError(f"dataset must be (frames, V, feature_dim), got {data.shape}")
    params = {}
    params.update(encoder.params("enc"))
    params.update(decoder.params("dec"))
    opt = Adam(params, lr=config.lr)
    x = Tensor(data)
    losses = []
    for epoch in range(config.epochs):
        opt.zero_grad()
        recon = decoder.decode(encoder.encode(x))
        diff = recon - x
        loss = (diff * diff).mean()
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergenceError("autoencoder loss is non-finite", epoch)
        loss.backward()
        opt.step()
        losses.append(value)
    return losses


def _windows(arr: np.ndarray, window: int) -> np.ndarray:
    """(n, ...) -> (n - window + 1, window, ...) by copy."""
    n = arr.shape[0]
    return np.stack([arr[k : k + window] for k in range(n - window + 1)])


def _shift_right(latents: np.ndarray) -> np.ndarray:
    """(B, w, d) ground-truth latents -> decoder input with zero start token."""
    shifted = np.zeros_like(latents)
    shifted[:, 1:] = latents[:, :-1]
    return shifted


def train_transformer(model: DeformTransformer, coarse_latents: np.ndarray,
                      fine_latents: np.ndarray, fine_decoder: FrameDecoder,
                      fine_features: np.ndarray, config: TrainConfig) -> list:
    """Teacher-forced windowed training; the fine decoder stays frozen."""
    coarse_latents = np.asarray(coarse_latents)
    fine_latents = np.asarray(fine_latents)
    feats = fine_features.data if isinstance(fine_features, FeatureSequence) else np.asarray(fine_features)
    if len(coarse_latents) != len(fine_latents) or len(fine_latents) != len(feats):
        raise AlignmentError(
            f"unpaired lengths: coarse {len(coarse_latents)}, fine {len(fine_latents)}, "
            f"features {len(feats)}"
        )
    w = config.window
    if len(coarse_latents) < w:
        raise AlignmentError(f"need at least {w} frames, got {len(coarse_latents)}")

    src = _windows(coarse_latents, w)           # (B, w, d)
    tgt_in = _shift_right(_windows(fine_latents, w))
    gt = _windows(feats, w)                     # (B, w, V, 9)
    batch, _, nv, fdim = gt.shape

    opt = Adam(model.params(), lr=config.lr)    # fine decoder params excluded: frozen
    src_t, tgt_t, gt_t = Tensor(src), Tensor(tgt_in), Tensor(gt)
    losses = []
    for epoch in range(config.epochs):
        opt.zero_grad()
        pred_latents = model.forward(src_t, tgt_t)              # (B, w, d)
        flat = pred_latents.reshape(batch * w, model.dim)
        pred_feats = fine_decoder.decode(flat).reshape(batch, w, nv, fdim)
        diff = pred_feats - gt_t
        loss = (diff * diff).mean()
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergenceError("transformer loss is non-finite", epoch)
        loss.backward()
        opt.step()
        losses.append(value)
    return losses


def encode_sequence(encoder: FrameEncoder, features: FeatureSequence) -> np.ndarray:
    """(n, V, 9) features -> (n, latent) without recording gradients."""
    return encoder.encode(Tensor(features.data)).data.copy()


def predict_fine_latents(model: DeformTransformer, coarse_latents: np.ndarray) -> np.ndarray:
    """Autoregressive sliding-window prediction seeded with zero latents."""
    n, dim = coarse_latents.shape
    w = model.window
    out = np.zeros((n, dim))
    for t in range(n):
        if t < w:
            src = coarse_latents[:w]
            if len(src) < w:  # short sequences: pad the window by edge repetition
                src = np.concatenate([src, np.repeat(src[-1:], w - len(src), axis=0)])
            tgt = np.zeros((t + 1, dim))
            tgt[1:] = out[:t]
            pred = model.forward(src, tgt)
            out[t] = pred.data[t]
        else:
            src = coarse_latents[t - w + 1 : t + 1]
            tgt = np.zeros((w, dim))
            tgt[1:] = out[t - w + 1 : t]
            pred = model.forward(src, tgt)
            out[t] = pred.data[w - 1]
    return out


def synthesize_sequence(bundle: ModelBundle, coarse_seq: MeshSequence,
                        anchor_positions: np.ndarray | None = None,
                        temporal: bool = True) -> MeshSequence:
    """Coarse mesh sequence -> synthesized fine mesh sequence.

    Anchors each reconstructed frame at `anchor_positions[t]` when given
    (ground-truth evaluation), else at the coarse sequence's first vertex
    (grid corners coincide across resolutions in the synthetic datasets).
    """
    if not bundle.trained:
        raise StateError("synthesize_sequence needs a trained model bundle")
    if coarse_seq.vertex_count != bundle.coarse_mesh.vertex_count:
        raise ShapeError(
            f"coarse sequence has {coarse_seq.vertex_count} vertices, "
            f"model was built for {bundle.coarse_mesh.vertex_count}"
        )
    n = coarse_seq.frame_count
    if n == 0:
        return make_sequence(bundle.fine_mesh, [])

    feats, _ = extract_features(coarse_seq, temporal=temporal)
    latents = encode_sequence(bundle.coarse_encoder, feats)
    fine_latents = predict_fine_latents(bundle.transformer, latents)
    fine_feats = bundle.fine_decoder.decode(Tensor(fine_latents)).data

    if anchor_positions is None:
        anchor_positions = np.stack([f[0] for f in coarse_seq.frames])
    anchor_positions = np.asarray(anchor_positions, dtype=np.float64)
    if anchor_positions.shape != (n, 3):
        raise ShapeError(f"anchor positions must be ({n}, 3), got {anchor_positions.shape}")

    recon = Reconstructor(bundle.fine_mesh, anchor=0)
    frames = [
        recon.reconstruct(FeatureFrame(fine_feats[t]), anchor_positions[t]) for t in range(n)
    ]
    return make_sequence(bundle.fine_mesh, frames)
