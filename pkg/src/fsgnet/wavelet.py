"""Single-level 2D orthonormal Haar transform and its exact inverse.

Filters are [1/sqrt(2), 1/sqrt(2)] (low) and [1/sqrt(2), -1/sqrt(2)] (high);
per 2x2 block [[a, b], [c, d]] (first index = height) the analysis is

    LL = (a + b + c + d) / 2        low/low
    LH = (a + b - c - d) / 2        low along width, high along height
    HL = (a - b + c - d) / 2        high along width, low along height
    HH = (a - b - c + d) / 2        high/high

The 4x4 block matrix is orthogonal, so the transform preserves energy and
the adjoint of each direction equals the other: analysis backpropagates
through synthesis arithmetic and vice versa.  Both directions are pure
functions, safe under any parallel use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _make


@dataclass
class WaveletSubbands:
    """Quadruple of half-resolution sub-bands sharing one shape."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shapes = {t.data.shape for t in (self.ll, self.lh, self.hl, self.hh)}
        if len(shapes) != 1:
            raise ShapeError(f"sub-bands must share one shape, got {sorted(shapes)}")

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))


# sign pattern of each sub-band over the (a, b, c, d) block corners
_SIGNS = {
    "ll": (1.0, 1.0, 1.0, 1.0),
    "lh": (1.0, 1.0, -1.0, -1.0),
    "hl": (1.0, -1.0, 1.0, -1.0),
    "hh": (1.0, -1.0, -1.0, 1.0),
}


def _corners(arr: np.ndarray):
    a = arr[..., 0::2, 0::2]
    b = arr[..., 0::2, 1::2]
    c = arr[..., 1::2, 0::2]
    d = arr[..., 1::2, 1::2]
    return a, b, c, d


def _subband(x: Tensor, kind: str) -> Tensor:
    sa, sb, sc, sd = _SIGNS[kind]
    a, b, c, d = _corners(x.data)
    out = (sa * a + sb * b + sc * c + sd * d) * 0.5

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[..., 0::2, 0::2] = sa * 0.5 * g
        gx[..., 0::2, 1::2] = sb * 0.5 * g
        gx[..., 1::2, 0::2] = sc * 0.5 * g
        gx[..., 1::2, 1::2] = sd * 0.5 * g
        return (gx,)

    return _make(out, (x,), vjp)


def dwt2_haar(x: Tensor) -> WaveletSubbands:
    """Decompose (..., H, W) with even H, W into four half-resolution bands."""
    h, w = x.data.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(
            f"dwt2_haar needs even spatial dims, got {h}x{w}; pad the input first"
        )
    return WaveletSubbands(
        ll=_subband(x, "ll"),
        lh=_subband(x, "lh"),
        hl=_subband(x, "hl"),
        hh=_subband(x, "hh"),
    )


def idwt2_haar(sub: WaveletSubbands) -> Tensor:
    """Exact inverse of `dwt2_haar` (same orthonormal butterfly, transposed)."""
    ll, lh, hl, hh = sub.ll.data, sub.lh.data, sub.hl.data, sub.hh.data
    shape = list(ll.shape)
    shape[-2] *= 2
    shape[-1] *= 2
    out = np.empty(shape, dtype=np.float64)
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    out[..., 0::2, 1::2] = (ll + lh - hl - hh) * 0.5
    out[..., 1::2, 0::2] = (ll - lh + hl - hh) * 0.5
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) * 0.5

    def vjp(g):
        ga, gb, gc, gd = _corners(g)
        return (
            (ga + gb + gc + gd) * 0.5,
            (ga + gb - gc - gd) * 0.5,
            (ga - gb + gc - gd) * 0.5,
            (ga - gb - gc + gd) * 0.5,
        )

    return _make(out, (sub.ll, sub.lh, sub.hl, sub.hh), vjp)
