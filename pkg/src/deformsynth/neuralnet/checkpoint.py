"""Model checkpoint format: magic DTFM0001, JSON header, float64 blob.

The header carries the hyperparameters, the trained flag, and the ordered
list of parameter names and shapes; the blob is the concatenation of the
parameters' little-endian float64 bytes in header order. Round trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from deformsynth.errors import ShapeError
from deformsynth.meshcore import Mesh
from deformsynth.neuralnet.training import ModelBundle

CHECKPOINT_MAGIC = b"DTFM0001"


def _canonical_header(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_params(path, hyper: dict, params: dict, kind: str, trained: bool) -> None:
    names = sorted(params)
    header = _canonical_header(
        {
            "kind": kind,
            "trained": trained,
            "hyper": hyper,
            "params": [[n, list(params[n].data.shape)] for n in names],
        }
    )
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype="<f8").tobytes())


def load_params(path):
    """-> (kind, trained, hyper, {name: ndarray})."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ShapeError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen).decode("utf-8"))
        blob = fh.read()
    arrays = {}
    offset = 0
    for name, shape in meta["params"]:
        count = int(np.prod(shape)) if shape else 1
        size = count * 8
        arrays[name] = (
            np.frombuffer(blob[offset : offset + size], dtype="<f8").reshape(shape).copy()
        )
        offset += size
    if offset != len(blob):
        raise ShapeError(f"{path}: blob has {len(blob)} bytes, expected {offset}")
    return meta["kind"], meta["trained"], meta["hyper"], arrays


def save_checkpoint(path, bundle: ModelBundle) -> None:
    save_params(path, bundle.hyper, bundle.params(), kind="full", trained=bundle.trained)


def save_autoencoder(path, encoder, decoder, seed: int) -> None:
    hyper = {
        "feature_dim": encoder.feature_dim,
        "conv_dims": list(encoder.conv_dims),
        "latent_dim": encoder.latent_dim,
        "vertices": encoder.mesh.vertex_count,
        "seed": seed,
    }
    params = {}
    params.update(encoder.params("enc"))
    params.update(decoder.params("dec"))
    save_params(path, hyper, params, kind="autoencoder", trained=True)


def load_autoencoder(path, mesh: Mesh):
    """-> (FrameEncoder, FrameDecoder, hyper) rebuilt on `mesh`."""
    from deformsynth.neuralnet.layers import FrameDecoder, FrameEncoder

    kind, _, hyper, arrays = load_params(path)
    if kind != "autoencoder":
        raise ShapeError(f"{path}: checkpoint kind {kind!r}, expected 'autoencoder'")
    if hyper["vertices"] != mesh.vertex_count:
        raise ShapeError(
            f"checkpoint built for {hyper['vertices']} vertices, mesh has {mesh.vertex_count}"
        )
    rng = np.random.default_rng(hyper["seed"])
    enc = FrameEncoder(mesh, hyper["feature_dim"], tuple(hyper["conv_dims"]),
                       hyper["latent_dim"], rng)
    dec = FrameDecoder(mesh, hyper["feature_dim"], tuple(hyper["conv_dims"]),
                       hyper["latent_dim"], rng)
    params = {}
    params.update(enc.params("enc"))
    params.update(dec.params("dec"))
    for name, tensor in params.items():
        tensor.data[...] = arrays[name]
    return enc, dec, hyper


def load_checkpoint(path, coarse_mesh: Mesh, fine_mesh: Mesh) -> ModelBundle:
    kind, trained, hyper, arrays = load_params(path)
    if kind != "full":
        raise ShapeError(f"{path}: checkpoint kind {kind!r}, expected 'full'")
    if hyper["coarse_vertices"] != coarse_mesh.vertex_count:
        raise ShapeError(
            f"checkpoint built for {hyper['coarse_vertices']} coarse vertices, "
            f"mesh has {coarse_mesh.vertex_count}"
        )
    if hyper["fine_vertices"] != fine_mesh.vertex_count:
        raise ShapeError(
            f"checkpoint built for {hyper['fine_vertices']} fine vertices, "
            f"mesh has {fine_mesh.vertex_count}"
        )
    bundle = ModelBundle.build(
        coarse_mesh,
        fine_mesh,
        feature_dim=hyper["feature_dim"],
        conv_dims=tuple(hyper["conv_dims"]),
        latent_dim=hyper["latent_dim"],
        heads=hyper["heads"],
        blocks=hyper["blocks"],
        hidden=hyper["hidden"],
        window=hyper["window"],
        seed=hyper["seed"],
        lr=hyper["lr"],
    )
    params = bundle.params()
    if set(params) != set(arrays):
        missing = set(params) ^ set(arrays)
        raise ShapeError(f"{path}: parameter name mismatch: {sorted(missing)[:5]}")
    for name, tensor in params.items():
        if tuple(arrays[name].shape) != tensor.data.shape:
            raise ShapeError(f"{path}: {name} has shape {arrays[name].shape}")
        tensor.data[...] = arrays[name]
    bundle.trained = trained
    return bundle
