"""Graph-conv frame autoencoders and the sequence-transduction transformer.

Built on a minimal in-repo reverse-mode autodiff engine; every gradient
path is certified against central finite differences in the test suite.
"""

from deformsynth.neuralnet.autodiff import Tensor, Adam
from deformsynth.neuralnet.layers import GraphConvLayer, FrameEncoder, FrameDecoder
from deformsynth.neuralnet.transformer import DeformTransformer
from deformsynth.neuralnet.training import (
    ModelBundle,
    TrainConfig,
    train_autoencoder,
    train_transformer,
    synthesize_sequence,
)
from deformsynth.neuralnet.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor",
    "Adam",
    "GraphConvLayer",
    "FrameEncoder",
    "FrameDecoder",
    "DeformTransformer",
    "ModelBundle",
    "TrainConfig",
    "train_autoencoder",
    "train_transformer",
    "synthesize_sequence",
    "save_checkpoint",
    "load_checkpoint",
]
