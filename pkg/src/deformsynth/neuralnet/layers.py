"""Graph convolution on one-ring neighborhoods and frame autoencoders.

The convolution at vertex i is W_point * f_i plus W_neighbor applied to the
mean of the one-ring features plus a bias. A frame encoder is two such
layers (tanh after the first, linear second) followed by one full linear
map from the concatenated per-vertex outputs to the latent vector; the
decoder mirrors it.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from deformsynth.errors import ShapeError
from deformsynth.meshcore import Mesh
from deformsynth.neuralnet.autodiff import Tensor, init_uniform, spmm


def neighbor_average_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Sparse (V, V) matrix whose row i averages over the one-ring of i."""
    rows, cols, vals = [], [], []
    for i in range(mesh.vertex_count):
        deg = mesh.degree(i)
        if deg == 0:
            raise ShapeError(f"vertex {i} is isolated; graph conv needs D_i > 0")
        for j in mesh.adjacency[i]:
            rows.append(i)
            cols.append(int(j))
            vals.append(1.0 / deg)
    nv = mesh.vertex_count
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv, nv))


class GraphConvLayer:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W_point = Tensor(init_uniform(rng, (out_dim, in_dim), in_dim), requires_grad=True)
        self.W_neighbor = Tensor(init_uniform(rng, (out_dim, in_dim), in_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def forward(self, avg: sp.csr_matrix, x: Tensor) -> Tensor:
        """x: (..., V, in_dim) -> (..., V, out_dim)."""
        point = x @ self.W_point.transpose((1, 0))
        neigh = spmm(avg, x) @ self.W_neighbor.transpose((1, 0))
        return point + neigh + self.b

    def params(self, prefix: str) -> dict:
        return {
            f"{prefix}.W_point": self.W_point,
            f"{prefix}.W_neighbor": self.W_neighbor,
            f"{prefix}.b": self.b,
        }


class FrameEncoder:
    """Two graph-conv layers (tanh, then linear) and a full map to the latent."""

    def __init__(self, mesh: Mesh, feature_dim: int, conv_dims: tuple, latent_dim: int,
                 rng: np.random.Generator):
        c1, c2 = conv_dims
        self.mesh = mesh
        self.avg = neighbor_average_matrix(mesh)
        self.feature_dim = feature_dim
        self.conv_dims = conv_dims
        self.latent_dim = latent_dim
        self.conv1 = GraphConvLayer(feature_dim, c1, rng)
        self.conv2 = GraphConvLayer(c1, c2, rng)
        flat = mesh.vertex_count * c2
        self.fc_W = Tensor(init_uniform(rng, (latent_dim, flat), flat), requires_grad=True)
        self.fc_b = Tensor(np.zeros(latent_dim), requires_grad=True)

    def encode(self, features) -> Tensor:
        """(V, 9) or (B, V, 9) feature array/Tensor -> (latent,) or (B, latent)."""
        x = features if isinstance(features, Tensor) else Tensor(features)
        single = x.data.ndim == 2
        if single:
            x = x.reshape(1, *x.data.shape)
        b, v, f = x.data.shape
        if v != self.mesh.vertex_count or f != self.feature_dim:
            raise ShapeError(
                f"expected (*, {self.mesh.vertex_count}, {self.feature_dim}) features, got {x.data.shape}"
            )
        h = self.conv1.forward(self.avg, x).tanh()
        h = self.conv2.forward(self.avg, h)
        z = h.reshape(b, v * self.conv_dims[1]) @ self.fc_W.transpose((1, 0)) + self.fc_b
        return z.reshape(self.latent_dim) if single else z

    def params(self, prefix: str = "enc") -> dict:
        out = {}
        out.update(self.conv1.params(f"{prefix}.conv1"))
        out.update(self.conv2.params(f"{prefix}.conv2"))
        out[f"{prefix}.fc_W"] = self.fc_W
        out[f"{prefix}.fc_b"] = self.fc_b
        return out


class FrameDecoder:
    """Mirror of FrameEncoder: latent -> per-vertex conv features -> 9-dim."""

    def __init__(self, mesh: Mesh, feature_dim: int, conv_dims: tuple, latent_dim: int,
                 rng: np.random.Generator):
        c1, c2 = conv_dims
        self.mesh = mesh
        self.avg = neighbor_average_matrix(mesh)
        self.feature_dim = feature_dim
        self.conv_dims = conv_dims
        self.latent_dim = latent_dim
        flat = mesh.vertex_count * c2
        self.fc_W = Tensor(init_uniform(rng, (flat, latent_dim), latent_dim), requires_grad=True)
        self.fc_b = Tensor(np.zeros(flat), requires_grad=True)
        self.conv1 = GraphConvLayer(c2, c1, rng)
        self.conv2 = GraphConvLayer(c1, feature_dim, rng)

    def decode(self, latent) -> Tensor:
        """(latent,) or (B, latent) -> (V, 9) or (B, V, 9)."""
        z = latent if isinstance(latent, Tensor) else Tensor(latent)
        single = z.data.ndim == 1
        if single:
            z = z.reshape(1, -1)
        if z.data.shape[-1] != self.latent_dim:
            raise ShapeError(f"expected latent dim {self.latent_dim}, got {z.data.shape[-1]}")
        b = z.data.shape[0]
        v, c2 = self.mesh.vertex_count, self.conv_dims[1]
        h = (z @ self.fc_W.transpose((1, 0)) + self.fc_b).reshape(b, v, c2)
        h = self.conv1.forward(self.avg, h).tanh()
        out = self.conv2.forward(self.avg, h)
        return out.reshape(v, self.feature_dim) if single else out

    def params(self, prefix: str = "dec") -> dict:
        out = {f"{prefix}.fc_W": self.fc_W, f"{prefix}.fc_b": self.fc_b}
        out.update(self.conv1.params(f"{prefix}.conv1"))
        out.update(self.conv2.params(f"{prefix}.conv2"))
        return out
