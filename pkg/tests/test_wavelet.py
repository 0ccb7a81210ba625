import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsgnet.tensor import ShapeError, Tensor, grad_check
from fsgnet.wavelet import WaveletSubbands, dwt2_haar, idwt2_haar

rng = np.random.default_rng(42)


def test_constant_image_concentrates_in_ll():
    c = 0.8
    sub = dwt2_haar(Tensor(np.full((1, 2, 4, 4), c)))
    assert np.allclose(sub.ll.data, 2 * c)
    for band in (sub.lh, sub.hl, sub.hh):
        assert np.allclose(band.data, 0.0)


def test_single_block_values():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
    sub = dwt2_haar(x)
    assert sub.ll.item() == 5.0
    assert sub.lh.item() == -2.0
    assert sub.hl.item() == -1.0
    assert sub.hh.item() == 0.0


def test_inverse_of_block_example():
    shape = (1, 1, 1, 1)
    sub = WaveletSubbands(
        ll=Tensor(np.full(shape, 5.0)),
        lh=Tensor(np.full(shape, -2.0)),
        hl=Tensor(np.full(shape, -1.0)),
        hh=Tensor(np.full(shape, 0.0)),
    )
    back = idwt2_haar(sub)
    assert np.array_equal(back.data.reshape(2, 2), [[1.0, 2.0], [3.0, 4.0]])


def test_inverse_of_constant_case():
    c = 1.3
    sub = WaveletSubbands(
        ll=Tensor(np.full((1, 1, 2, 2), 2 * c)),
        lh=Tensor(np.zeros((1, 1, 2, 2))),
        hl=Tensor(np.zeros((1, 1, 2, 2))),
        hh=Tensor(np.zeros((1, 1, 2, 2))),
    )
    assert np.allclose(idwt2_haar(sub).data, c)


def test_energy_preservation():
    x = rng.normal(size=(1, 2, 8, 8))
    sub = dwt2_haar(Tensor(x))
    e_in = np.sum(x * x)
    e_out = sum(np.sum(b.data * b.data) for b in sub)
    assert abs(e_out - e_in) <= 1e-12 * max(e_in, 1.0)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.sampled_from([2, 4, 6, 8]), st.sampled_from([2, 4, 8, 16]))
def test_round_trip_identity(seed, c, hw):
    x = np.random.default_rng(seed).normal(size=(1, c, hw, hw))
    back = idwt2_haar(dwt2_haar(Tensor(x)))
    assert np.max(np.abs(back.data - x)) < 1e-12


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30)
def test_linearity_per_subband(seed, a, b):
    gen = np.random.default_rng(seed)
    x, y = gen.normal(size=(1, 1, 4, 4)), gen.normal(size=(1, 1, 4, 4))
    lhs = dwt2_haar(Tensor(a * x + b * y))
    sx, sy = dwt2_haar(Tensor(x)), dwt2_haar(Tensor(y))
    for l, bx, by in zip(lhs, sx, sy):
        assert np.allclose(l.data, a * bx.data + b * by.data, atol=1e-12)


def test_odd_dims_error_mentions_padding():
    with pytest.raises(ShapeError, match="pad"):
        dwt2_haar(Tensor(np.zeros((1, 1, 3, 4))))


def test_subband_shape_mismatch_error():
    with pytest.raises(ShapeError):
        WaveletSubbands(
            ll=Tensor(np.zeros((1, 1, 2, 2))),
            lh=Tensor(np.zeros((1, 1, 2, 2))),
            hl=Tensor(np.zeros((1, 1, 2, 2))),
            hh=Tensor(np.zeros((1, 1, 2, 4))),
        )


def test_gradients_both_directions():
    proj = [Tensor(rng.normal(size=(1, 1, 2, 2))) for _ in range(4)]

    def analysis_loss(t):
        sub = dwt2_haar(t)
        total = None
        for band, p in zip(sub, proj):
            term = (band * p).sum()
            total = term if total is None else total + term
        return total

    err = grad_check(analysis_loss, Tensor(rng.normal(size=(1, 1, 4, 4))))
    assert err < 1e-9

    pr = Tensor(rng.normal(size=(1, 1, 4, 4)))

    def synthesis_loss(t):
        h = t.data.shape[-2] // 1
        sub = WaveletSubbands(
            ll=t,
            lh=Tensor(np.zeros(t.data.shape)),
            hl=Tensor(np.zeros(t.data.shape)),
            hh=Tensor(np.zeros(t.data.shape)),
        )
        return (idwt2_haar(sub) * pr).sum()

    err = grad_check(synthesis_loss, Tensor(rng.normal(size=(1, 1, 2, 2))))
    assert err < 1e-9
