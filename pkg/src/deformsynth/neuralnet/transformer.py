"""Sequence-to-sequence latent transduction with frame-level attention.

Encoder and decoder are each a stack of two identical blocks with 8-head
attention, a tanh feed-forward sublayer, and post-sublayer residual +
layer norm. Sinusoidal positional embeddings mark frame order; the decoder
self-attention is causally masked so position t depends only on target
positions < t (plus the full source).
"""

from __future__ import annotations

import numpy as np

from deformsynth.errors import ShapeError
from deformsynth.neuralnet.autodiff import Tensor, init_uniform, layer_norm, softmax

_MASK_VALUE = -1e30


def sinusoidal_embedding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    idx = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / dim)
    pe = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return pe


def causal_mask(size: int) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, large negative above."""
    m = np.zeros((size, size))
    m[np.triu_indices(size, k=1)] = _MASK_VALUE
    return m


class MultiHeadAttention:
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ShapeError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.W_q = Tensor(init_uniform(rng, (dim, dim), dim), requires_grad=True)
        self.W_k = Tensor(init_uniform(rng, (dim, dim), dim), requires_grad=True)
        self.W_v = Tensor(init_uniform(rng, (dim, dim), dim), requires_grad=True)
        self.W_o = Tensor(init_uniform(rng, (dim, dim), dim), requires_grad=True)
        self.b_q = Tensor(np.zeros(dim), requires_grad=True)
        self.b_k = Tensor(np.zeros(dim), requires_grad=True)
        self.b_v = Tensor(np.zeros(dim), requires_grad=True)
        self.b_o = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, query: Tensor, memory: Tensor, mask: np.ndarray | None = None,
                return_attention: bool = False):
        """query (B, T, d), memory (B, S, d) -> (B, T, d)."""
        bsz, tlen, _ = query.data.shape
        slen = memory.data.shape[1]
        h, hd = self.heads, self.head_dim

        def split(x: Tensor, length: int) -> Tensor:
            return x.reshape(bsz, length, h, hd).transpose((0, 2, 1, 3))

        q = split(query @ self.W_q.transpose((1, 0)) + self.b_q, tlen)
        k = split(memory @ self.W_k.transpose((1, 0)) + self.b_k, slen)
        v = split(memory @ self.W_v.transpose((1, 0)) + self.b_v, slen)

        scores = (q @ k.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(hd))
        if mask is not None:
            scores = scores + mask  # additive (T, S) mask broadcast over batch/heads
        attn = softmax(scores, axis=-1)
        mixed = (attn @ v).transpose((0, 2, 1, 3)).reshape(bsz, tlen, self.dim)
        out = mixed @ self.W_o.transpose((1, 0)) + self.b_o
        if return_attention:
            return out, attn.data
        return out

    def params(self, prefix: str) -> dict:
        return {
            f"{prefix}.W_q": self.W_q, f"{prefix}.b_q": self.b_q,
            f"{prefix}.W_k": self.W_k, f"{prefix}.b_k": self.b_k,
            f"{prefix}.W_v": self.W_v, f"{prefix}.b_v": self.b_v,
            f"{prefix}.W_o": self.W_o, f"{prefix}.b_o": self.b_o,
        }


class _FeedForward:
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.W1 = Tensor(init_uniform(rng, (hidden, dim), dim), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.W2 = Tensor(init_uniform(rng, (dim, hidden), hidden), requires_grad=True)
        self.b2 = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return (x @ self.W1.transpose((1, 0)) + self.b1).tanh() @ self.W2.transpose((1, 0)) + self.b2

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.W1": self.W1, f"{prefix}.b1": self.b1,
                f"{prefix}.W2": self.W2, f"{prefix}.b2": self.b2}


class _LayerNorm:
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.gain": self.gain, f"{prefix}.bias": self.bias}


class EncoderBlock:
    def __init__(self, dim: int, heads: int, hidden: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = _LayerNorm(dim)
        self.ffn = _FeedForward(dim, hidden, rng)
        self.norm2 = _LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        x = self.norm1.forward(x + self.attn.forward(x, x))
        return self.norm2.forward(x + self.ffn.forward(x))

    def params(self, prefix: str) -> dict:
        out = {}
        out.update(self.attn.params(f"{prefix}.attn"))
        out.update(self.norm1.params(f"{prefix}.norm1"))
        out.update(self.ffn.params(f"{prefix}.ffn"))
        out.update(self.norm2.params(f"{prefix}.norm2"))
        return out


class DecoderBlock:
    def __init__(self, dim: int, heads: int, hidden: int, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(dim, heads, rng)
        self.norm1 = _LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads, rng)
        self.norm2 = _LayerNorm(dim)
        self.ffn = _FeedForward(dim, hidden, rng)
        self.norm3 = _LayerNorm(dim)

    def forward(self, x: Tensor, memory: Tensor, mask: np.ndarray) -> Tensor:
        x = self.norm1.forward(x + self.self_attn.forward(x, x, mask=mask))
        x = self.norm2.forward(x + self.cross_attn.forward(x, memory))
        return self.norm3.forward(x + self.ffn.forward(x))

    def params(self, prefix: str) -> dict:
        out = {}
        out.update(self.self_attn.params(f"{prefix}.self_attn"))
        out.update(self.norm1.params(f"{prefix}.norm1"))
        out.update(self.cross_attn.params(f"{prefix}.cross_attn"))
        out.update(self.norm2.params(f"{prefix}.norm2"))
        out.update(self.ffn.params(f"{prefix}.ffn"))
        out.update(self.norm3.params(f"{prefix}.norm3"))
        return out


class DeformTransformer:
    """Maps a window of source latents plus shifted target latents to predictions."""

    def __init__(self, dim: int = 16, heads: int = 8, blocks: int = 2, hidden: int = 64,
                 window: int = 3, seed: int = 0, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.dim = dim
        self.heads = heads
        self.blocks = blocks
        self.hidden = hidden
        self.window = window
        self.encoder = [EncoderBlock(dim, heads, hidden, rng) for _ in range(blocks)]
        self.decoder = [DecoderBlock(dim, heads, hidden, rng) for _ in range(blocks)]
        self.W_out = Tensor(init_uniform(rng, (dim, dim), dim), requires_grad=True)
        self.b_out = Tensor(np.zeros(dim), requires_grad=True)
        self._pe = sinusoidal_embedding(window, dim)

    def forward(self, source, target) -> Tensor:
        """source (B, S, d) or (S, d); target (B, T, d) or (T, d); T <= window."""
        src = source if isinstance(source, Tensor) else Tensor(source)
        tgt = target if isinstance(target, Tensor) else Tensor(target)
        single = src.data.ndim == 2
        if single:
            src = src.reshape(1, *src.data.shape)
        if tgt.data.ndim == 2:
            tgt = tgt.reshape(1, *tgt.data.shape)
        if src.data.shape[-1] != self.dim or tgt.data.shape[-1] != self.dim:
            raise ShapeError(
                f"latent dim must be {self.dim}, got {src.data.shape[-1]}/{tgt.data.shape[-1]}"
            )
        slen, tlen = src.data.shape[1], tgt.data.shape[1]
        if not 1 <= slen <= self.window:
            raise ShapeError(f"source length {slen} outside [1, {self.window}]")
        if not 1 <= tlen <= self.window:
            raise ShapeError(f"target length {tlen} outside [1, {self.window}]")

        x = src + self._pe[:slen]
        for block in self.encoder:
            x = block.forward(x)
        memory = x

        y = tgt + self._pe[:tlen]
        mask = causal_mask(tlen)
        for block in self.decoder:
            y = block.forward(y, memory, mask)
        out = y @ self.W_out.transpose((1, 0)) + self.b_out
        return out.reshape(tlen, self.dim) if single else out

    def params(self, prefix: str = "xf") -> dict:
        out = {}
        for k, block in enumerate(self.encoder):
            out.update(block.params(f"{prefix}.enc{k}"))
        for k, block in enumerate(self.decoder):
            out.update(block.params(f"{prefix}.dec{k}"))
        out[f"{prefix}.W_out"] = self.W_out
        out[f"{prefix}.b_out"] = self.b_out
        return out
