"""Gated fusion of upsampled deep features with shallow detail.

The deep map is upsampled x2 and aligned to the shallow channel count with a
1x1 convolution.  A gating unit (3x3 conv, BN, ReLU, 1x1 conv, sigmoid) over
the concatenated pair emits a single-channel map in (0,1) that scales the
shallow features pixel-wise before a residual add, so the output always lies
between the gate-closed (deep only) and gate-open (deep + shallow) extremes.
With `gated=False` the unit degrades to align-and-add (the plain additive
decoder fallback).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import BatchNorm2d, Conv2d, Module
from .tensor import ShapeError, Tensor


class GatingUnit(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = self.child("conv", Conv2d(2 * channels, channels, 3, rng, padding=1, bias=False))
        self.bn = self.child("bn", BatchNorm2d(channels))
        self.out = self.child("out", Conv2d(channels, 1, 1, rng))
        self.force_gate: str | None = None  # test hook: saturate to ~0 / exactly 1

    def forward(self, stacked: Tensor) -> Tensor:
        logits = self.out.forward(T.relu(self.bn.forward(self.conv.forward(stacked))))
        if self.force_gate is not None:
            level = 40.0 if self.force_gate == "open" else -40.0
            logits = Tensor(np.full_like(logits.data, level))
        return T.sigmoid(logits)


class LgfuModule(Module):
    def __init__(self, deep_channels: int, shallow_channels: int,
                 rng: np.random.Generator, gated: bool = True):
        super().__init__()
        self.align = self.child("align", Conv2d(deep_channels, shallow_channels, 1, rng))
        self.gate = self.child("gate", GatingUnit(shallow_channels, rng)) if gated else None

    def align_deep(self, f_deep: Tensor) -> Tensor:
        """Bilinear x2 then 1x1 channel alignment."""
        return self.align.forward(T.bilinear_upsample_x2(f_deep))

    def gating_unit(self, f_deep_aligned: Tensor, f_shallow: Tensor) -> Tensor:
        if f_deep_aligned.data.shape != f_shallow.data.shape:
            raise ShapeError(
                f"gating inputs must match: {f_deep_aligned.data.shape} vs {f_shallow.data.shape}"
            )
        return self.gate.forward(T.concat([f_deep_aligned, f_shallow], axis=1))

    def forward(self, f_deep: Tensor, f_shallow: Tensor) -> Tensor:
        dh, dw = f_deep.data.shape[2:]
        sh, sw = f_shallow.data.shape[2:]
        if (sh, sw) != (2 * dh, 2 * dw):
            raise ShapeError(
                f"shallow resolution {sh}x{sw} must be exactly double the deep {dh}x{dw}"
            )
        aligned = self.align_deep(f_deep)
        if self.gate is None:
            return f_shallow + aligned
        g = self.gating_unit(aligned, f_shallow)
        return T.hadamard(g, f_shallow) + aligned
