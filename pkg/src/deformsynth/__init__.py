"""Deformation-representation pipeline for thin-shell mesh sequences.

Feature extraction with spatio-temporal rotation resolution, sparse
reconstruction, graph-conv/transformer detail synthesis, collision
refinement, and a synthetic-data evaluation harness.
"""

from deformsynth.meshcore import Mesh, MeshSequence, load_obj, save_obj, compute_weights
from deformsynth.defgrad import DeformField, fit_gradient, fit_field, polar_decompose
from deformsynth.tsacap import (
    FeatureFrame,
    FeatureSequence,
    RotationResolution,
    extract_features,
    pack_features,
    unpack_features,
)
from deformsynth.reconstruct import Reconstructor, interpolate

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "MeshSequence",
    "load_obj",
    "save_obj",
    "compute_weights",
    "DeformField",
    "fit_gradient",
    "fit_field",
    "polar_decompose",
    "FeatureFrame",
    "FeatureSequence",
    "RotationResolution",
    "extract_features",
    "pack_features",
    "unpack_features",
    "Reconstructor",
    "interpolate",
]
