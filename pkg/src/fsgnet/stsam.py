"""Paired attention over the two temporal streams.

Branch 1 adds a learned per-channel temporal embedding to each stream,
projects to query/key/value with shared 1x1 convolutions (Q/K compressed to
C/8), and attends each stream's value space with the counterpart's queries;
the result is scaled by a learnable factor (initialized to zero, so the
branch starts as the identity) and added back.  Branch 2 is coordinate
attention: directional average pooling, a shared bottleneck convolution, and
per-direction sigmoid gates.  A 1x1 convolution fuses the concatenated
branches.  All weights are shared between the two streams, so swapping the
inputs together with the embeddings swaps the outputs exactly.

`variant` selects the attention family for ablations:

    full        cross-attention with embeddings + coordinate branch, fused
    noTime      full without the temporal embeddings
    self        per-stream self-attention residual only (no embeddings)
    coord       coordinate branch only
    self+coord  self-attention + coordinate branch, fused
    off         alias of `self` (the baseline attention fallback)
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import BatchNorm2d, Conv2d, Module, Parameter
from .tensor import Tensor

VARIANTS = ("full", "self", "coord", "self+coord", "noTime", "off")

TIME_EMBED_STD = 0.02


class CoordinateAttention(Module):
    """Height/width gate pair from pooled directional statistics."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        mid = max(8, channels // 32)
        self.fuse = self.child("fuse", Conv2d(channels, mid, 1, rng, bias=False))
        self.bn = self.child("bn", BatchNorm2d(mid))
        self.conv_h = self.child("conv_h", Conv2d(mid, channels, 1, rng))
        self.conv_w = self.child("conv_w", Conv2d(mid, channels, 1, rng))
        self.force_unit_gates = False  # test hook: bypass both sigmoid gates

    def gates(self, f: Tensor) -> tuple[Tensor, Tensor]:
        n, c, h, w = f.data.shape
        x_h = T.directional_avg_pool_h(f)                      # (N,C,H,1)
        x_w = T.transpose(T.directional_avg_pool_w(f), (0, 1, 3, 2))  # (N,C,W,1)
        y = T.relu(self.bn.forward(self.fuse.forward(T.concat([x_h, x_w], axis=2))))
        f_h = T.narrow(y, 2, 0, h)
        f_w = T.transpose(T.narrow(y, 2, h, w), (0, 1, 3, 2))
        a_h = T.sigmoid(self.conv_h.forward(f_h))              # (N,C,H,1)
        a_w = T.sigmoid(self.conv_w.forward(f_w))              # (N,C,1,W)
        return a_h, a_w

    def forward(self, f: Tensor) -> Tensor:
        if self.force_unit_gates:
            return f
        a_h, a_w = self.gates(f)
        return T.hadamard(T.hadamard(f, a_h), a_w)


class StsamModule(Module):
    def __init__(self, channels: int, rng: np.random.Generator,
                 variant: str = "full", attn_scale: bool = False):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown attention variant {variant!r}; valid: {', '.join(VARIANTS)}")
        if channels % 8 != 0:
            raise ValueError(f"channels must be divisible by 8 for the Q/K compression, got {channels}")
        self.channels = channels
        self.variant = variant
        self.attn_scale = attn_scale
        self.use_attn = variant != "coord"
        self.attn_is_cross = variant in ("full", "noTime")
        self.use_time = variant == "full"
        self.use_coord = variant in ("full", "noTime", "coord", "self+coord")

        if self.use_time:
            self.t1 = self.param("t1", rng.normal(0.0, TIME_EMBED_STD, size=(channels, 1, 1)))
            self.t2 = self.param("t2", rng.normal(0.0, TIME_EMBED_STD, size=(channels, 1, 1)))
        if self.use_attn:
            self.q_proj = self.child("q_proj", Conv2d(channels, channels // 8, 1, rng))
            # a key bias shifts every score in a row equally, which softmax
            # cancels; the parameter would be unlearnable
            self.k_proj = self.child("k_proj", Conv2d(channels, channels // 8, 1, rng, bias=False))
            self.v_proj = self.child("v_proj", Conv2d(channels, channels, 1, rng))
            self.omega = self.param("omega", np.zeros(1))
        if self.use_coord:
            self.coord = self.child("coord", CoordinateAttention(channels, rng))
        if self.use_attn and self.use_coord:
            self.fusion = self.child("fusion", Conv2d(2 * channels, channels, 1, rng))
        else:
            self.fusion = None

    # -- attention branch -------------------------------------------------------
    def _tokens(self, x: Tensor) -> Tensor:
        n, c, h, w = x.data.shape
        return T.transpose(T.reshape(x, (n, c, h * w)), (0, 2, 1))  # (N,HW,C)

    def _scores(self, q: Tensor, k: Tensor) -> Tensor:
        scores = T.matmul_batched(q, T.transpose(k, (0, 2, 1)))
        if self.attn_scale:
            scores = T.scalar_mul(scores, 1.0 / np.sqrt(k.data.shape[2]))
        return T.softmax(scores)

    def cross_attention_branch(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        """omega-scaled residual attention for both streams."""
        n, c, h, w = f1.data.shape
        e1 = f1 + self.t1.tensor if self.use_time else f1
        e2 = f2 + self.t2.tensor if self.use_time else f2
        q1, k1, v1 = (self._tokens(p.forward(e1)) for p in (self.q_proj, self.k_proj, self.v_proj))
        q2, k2, v2 = (self._tokens(p.forward(e2)) for p in (self.q_proj, self.k_proj, self.v_proj))
        if self.attn_is_cross:
            ctx1 = T.matmul_batched(self._scores(q2, k1), v1)
            ctx2 = T.matmul_batched(self._scores(q1, k2), v2)
        else:
            ctx1 = T.matmul_batched(self._scores(q1, k1), v1)
            ctx2 = T.matmul_batched(self._scores(q2, k2), v2)
        outs = []
        for ctx, f in ((ctx1, f1), (ctx2, f2)):
            spatial = T.reshape(T.transpose(ctx, (0, 2, 1)), (n, c, h, w))
            outs.append(T.hadamard(self.omega.tensor, spatial) + f)
        return outs[0], outs[1]

    def attention_matrices(self, f1: Tensor, f2: Tensor) -> tuple[np.ndarray, np.ndarray]:
        """Row-stochastic attention weights of both streams (diagnostics)."""
        with T.no_grad():
            e1 = f1 + self.t1.tensor if self.use_time else f1
            e2 = f2 + self.t2.tensor if self.use_time else f2
            q1, k1 = self._tokens(self.q_proj.forward(e1)), self._tokens(self.k_proj.forward(e1))
            q2, k2 = self._tokens(self.q_proj.forward(e2)), self._tokens(self.k_proj.forward(e2))
            if self.attn_is_cross:
                return self._scores(q2, k1).data, self._scores(q1, k2).data
            return self._scores(q1, k1).data, self._scores(q2, k2).data

    def coord_attention_branch(self, f: Tensor) -> Tensor:
        return self.coord.forward(f)

    # -- fused forward -----------------------------------------------------------
    def forward(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        if self.use_attn:
            b1_1, b1_2 = self.cross_attention_branch(f1, f2)
        if not self.use_coord:
            return b1_1, b1_2
        if not self.use_attn:
            return self.coord.forward(f1), self.coord.forward(f2)
        outs = []
        for attn_out, f in ((b1_1, f1), (b1_2, f2)):
            fused = T.concat([attn_out, self.coord.forward(f)], axis=1)
            outs.append(self.fusion.forward(fused))
        return outs[0], outs[1]
