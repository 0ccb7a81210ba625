"""Frequency-domain bi-temporal interaction with adaptive channel re-weighting.

Both feature streams are decomposed into Haar sub-bands; each sub-band pair
is fused across time with a strategy matched to its content (temporal 3D
convolution for the low and mid bands, absolute differencing for the
diagonal band), the resulting interaction feature drives a squeeze-excite
channel gate applied residually to both original streams, and the refined
sub-bands are synthesized back to full resolution.

`variant` selects the interaction family for ablations:

    full        per-band strategies (2x3x3 / 2x1x1 / 2x1x1 / diff), SE, residual
    difference  absolute-difference interaction on every band, SE, residual
    conv211     2x1x1 temporal conv on every band, SE, residual
    conv233     2x3x3 temporal conv on every band, SE, residual
    noSE        per-band strategies, refined = interaction + original
    noRes       per-band strategies, refined = gate (.) original
    off         unparameterized |x1 - x2| interaction + plain residual
                (the basic frequency-differencing fallback)

Forward is pure given (inputs, module state); the gate-forcing hooks exist
only for tests and must stay off during training.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import BatchNorm2d, Conv2d, Conv3d, Module
from .tensor import ShapeError, Tensor
from .wavelet import WaveletSubbands, dwt2_haar, idwt2_haar

VARIANTS = ("full", "difference", "conv211", "conv233", "noSE", "noRes", "off")


def se_reduction(channels: int) -> int:
    """Squeeze ratio: 16, clamped so the bottleneck keeps >= 4 channels
    (and never below 1 for very narrow inputs)."""
    r = max(1, min(16, channels // 4))
    if channels % r != 0:
        raise ValueError(
            f"squeeze-excite needs channels divisible by the reduction "
            f"(channels={channels}, reduction={r})"
        )
    return r


class SqueezeExcite(Module):
    """Channel gate sigma(W2 relu(W1 [gap, gmp])) in (0,1)^C.

    `force_gate` ('open'/'closed') replaces the pre-sigmoid logits with
    +/-40, saturating the gate to an exact 1.0 / a residual-invisible ~4e-18.
    Test hook only.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        r = se_reduction(channels)
        hidden = channels // r
        self.w1 = self.child("w1", Conv2d(2 * channels, hidden, 1, rng))
        self.w2 = self.child("w2", Conv2d(hidden, channels, 1, rng))
        self.force_gate: str | None = None

    def gate(self, tilde: Tensor) -> Tensor:
        pooled = T.concat([T.global_avg_pool(tilde), T.global_max_pool(tilde)], axis=1)
        logits = self.w2.forward(T.relu(self.w1.forward(pooled)))
        if self.force_gate is not None:
            level = 40.0 if self.force_gate == "open" else -40.0
            logits = Tensor(np.full_like(logits.data, level))
        return T.sigmoid(logits)


class TemporalConvInteraction(Module):
    """Stack the two streams on a depth axis and fuse with a (2,k,k) conv."""

    def __init__(self, channels: int, kernel_hw: int, rng: np.random.Generator):
        super().__init__()
        self.conv = self.child(
            "conv",
            Conv3d(channels, channels, (2, kernel_hw, kernel_hw), rng,
                   padding_spatial=kernel_hw // 2),
        )

    def forward(self, x1: Tensor, x2: Tensor) -> Tensor:
        n, c, h, w = x1.data.shape
        a = T.reshape(x1, (n, c, 1, h, w))
        b = T.reshape(x2, (n, c, 1, h, w))
        fused = self.conv.forward(T.concat([a, b], axis=2))
        return T.reshape(fused, (n, c, h, w))


class DifferenceInteraction(Module):
    """relu(BN(conv1x1(|x1 - x2|))); symmetric in its arguments."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = self.child("conv", Conv2d(channels, channels, 1, rng))
        self.bn = self.child("bn", BatchNorm2d(channels))

    def forward(self, x1: Tensor, x2: Tensor) -> Tensor:
        return T.relu(self.bn.forward(self.conv.forward(T.abs_(x1 - x2))))


class PlainDifference(Module):
    """Unparameterized |x1 - x2| (the frequency-differencing fallback)."""

    def forward(self, x1: Tensor, x2: Tensor) -> Tensor:
        return T.abs_(x1 - x2)


class SubbandUnit(Module):
    """One sub-band's interaction plus its (optional) channel gate."""

    def __init__(self, channels: int, interaction: Module,
                 rng: np.random.Generator, use_se: bool, use_residual: bool):
        super().__init__()
        self.interact = self.child("interact", interaction)
        self.se = self.child("se", SqueezeExcite(channels, rng)) if use_se else None
        self.use_residual = use_residual

    def refine(self, tilde: Tensor, original: Tensor) -> Tensor:
        if self.se is None:
            return tilde + original if self.use_residual else tilde
        gate = self.se.gate(tilde)
        weighted = T.hadamard(gate, original)
        return weighted + original if self.use_residual else weighted


def _interaction(channels: int, band: str, variant: str, rng: np.random.Generator) -> Module:
    if variant == "off":
        return PlainDifference()
    if variant == "difference":
        return DifferenceInteraction(channels, rng)
    if variant == "conv211":
        return TemporalConvInteraction(channels, 1, rng)
    if variant == "conv233":
        return TemporalConvInteraction(channels, 3, rng)
    # full / noSE / noRes keep the per-band strategies
    if band == "ll":
        return TemporalConvInteraction(channels, 3, rng)
    if band in ("lh", "hl"):
        return TemporalConvInteraction(channels, 1, rng)
    return DifferenceInteraction(channels, rng)


class DawimModule(Module):
    def __init__(self, channels: int, rng: np.random.Generator, variant: str = "full"):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown interaction variant {variant!r}; valid: {', '.join(VARIANTS)}")
        self.channels = channels
        self.variant = variant
        use_se = variant not in ("noSE", "off")
        if use_se:
            se_reduction(channels)  # validate divisibility up front
        use_residual = variant != "noRes"
        self.bands: dict[str, SubbandUnit] = {}
        for band in ("ll", "lh", "hl", "hh"):
            unit = SubbandUnit(channels, _interaction(channels, band, variant, rng),
                               rng, use_se, use_residual)
            self.bands[band] = self.child(band, unit)

    # -- test hooks ----------------------------------------------------------
    def force_gates(self, mode: str | None) -> None:
        for unit in self.bands.values():
            if unit.se is not None:
                unit.se.force_gate = mode

    # -- pieces (exposed for direct testing) ----------------------------------
    def interact_ll(self, ll1: Tensor, ll2: Tensor) -> Tensor:
        return self._interact("ll", ll1, ll2)

    def interact_mid(self, x1: Tensor, x2: Tensor, which: str) -> Tensor:
        if which not in ("lh", "hl"):
            raise ValueError(f"which must be 'lh' or 'hl', got {which!r}")
        return self._interact(which, x1, x2)

    def interact_hh(self, hh1: Tensor, hh2: Tensor) -> Tensor:
        return self._interact("hh", hh1, hh2)

    def _interact(self, band: str, x1: Tensor, x2: Tensor) -> Tensor:
        if x1.data.shape != x2.data.shape:
            raise ShapeError(f"interaction inputs must match: {x1.data.shape} vs {x2.data.shape}")
        return self.bands[band].interact.forward(x1, x2)

    def se_modulate(self, tilde: Tensor, original: Tensor, band: str) -> Tensor:
        if tilde.data.shape != original.data.shape:
            raise ShapeError(f"se_modulate shapes must match: {tilde.data.shape} vs {original.data.shape}")
        return self.bands[band].refine(tilde, original)

    # -- full pipeline ---------------------------------------------------------
    def forward(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        if f1.data.shape != f2.data.shape:
            raise ShapeError(f"bi-temporal features must match: {f1.data.shape} vs {f2.data.shape}")
        sub1 = dwt2_haar(f1)
        sub2 = dwt2_haar(f2)
        bands1 = dict(zip(("ll", "lh", "hl", "hh"), sub1))
        bands2 = dict(zip(("ll", "lh", "hl", "hh"), sub2))
        tilde = {
            band: self.bands[band].interact.forward(bands1[band], bands2[band])
            for band in ("ll", "lh", "hl", "hh")
        }
        outs = []
        for bands in (bands1, bands2):
            refined = {
                band: self.bands[band].refine(tilde[band], bands[band])
                for band in ("ll", "lh", "hl", "hh")
            }
            outs.append(idwt2_haar(WaveletSubbands(
                ll=refined["ll"], lh=refined["lh"], hl=refined["hl"], hh=refined["hh"],
            )))
        return outs[0], outs[1]
