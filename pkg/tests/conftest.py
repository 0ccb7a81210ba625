"""Shared brute-force oracles, kept deliberately naive and loop-based."""

import numpy as np


def conv2d_loop_oracle(x, w, b=None, stride=1, padding=0):
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for o in range(co):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for ic in range(ci):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += xp[ni, ic, y * stride + dy, xx * stride + dx] * w[o, ic, dy, dx]
                    out[ni, o, y, xx] = acc + (b[o] if b is not None else 0.0)
    return out


def conv3d_loop_oracle(x, w, b=None, padding_spatial=0):
    n, c, d, h, wd = x.shape
    co, ci, kd, kh, kw = w.shape
    p = padding_spatial
    xp = np.zeros((n, c, d, h + 2 * p, wd + 2 * p))
    xp[:, :, :, p : p + h, p : p + wd] = x
    od, oh, ow = d - kd + 1, h + 2 * p - kh + 1, wd + 2 * p - kw + 1
    out = np.zeros((n, co, od, oh, ow))
    for ni in range(n):
        for o in range(co):
            for t in range(od):
                for y in range(oh):
                    for xx in range(ow):
                        acc = 0.0
                        for ic in range(ci):
                            for dt in range(kd):
                                for dy in range(kh):
                                    for dx in range(kw):
                                        acc += xp[ni, ic, t + dt, y + dy, xx + dx] * w[o, ic, dt, dy, dx]
                        out[ni, o, t, y, xx] = acc + (b[o] if b is not None else 0.0)
    return out


def bilinear_x2_oracle(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w))
    for oy in range(2 * h):
        for ox in range(2 * w):
            sy = (oy + 0.5) / 2 - 0.5
            sx = (ox + 0.5) / 2 - 0.5
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            wy, wx = sy - y0, sx - x0
            y0c, y1c = np.clip([y0, y0 + 1], 0, h - 1)
            x0c, x1c = np.clip([x0, x0 + 1], 0, w - 1)
            out[:, :, oy, ox] = (
                (1 - wy) * (1 - wx) * x[:, :, y0c, x0c]
                + (1 - wy) * wx * x[:, :, y0c, x1c]
                + wy * (1 - wx) * x[:, :, y1c, x0c]
                + wy * wx * x[:, :, y1c, x1c]
            )
    return out


def dyadic_grid(rng, shape, denom=256, span=512):
    """Random values k/denom: Haar butterflies on these are float-exact."""
    return rng.integers(-span, span + 1, size=shape).astype(np.float64) / denom
