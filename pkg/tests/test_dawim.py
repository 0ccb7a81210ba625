import numpy as np
import pytest

from conftest import conv3d_loop_oracle, dyadic_grid
from fsgnet.checks import check_dawim
from fsgnet.dawim import VARIANTS, DawimModule, se_reduction
from fsgnet.tensor import ShapeError, Tensor

C = 8


def make_module(seed=0, variant="full"):
    return DawimModule(C, np.random.default_rng(seed), variant=variant)


def test_unknown_variant_lists_valid_names():
    with pytest.raises(ValueError) as ei:
        make_module(variant="bogus")
    for name in VARIANTS:
        assert name in str(ei.value)


def test_se_reduction_rules():
    assert se_reduction(64) == 16
    assert se_reduction(16) == 4
    assert se_reduction(2) == 1
    with pytest.raises(ValueError, match="divisible"):
        se_reduction(18)


# ---------------------------------------------------------------------------
# interactions
# ---------------------------------------------------------------------------

def test_interact_ll_hand_set_center_average():
    m = make_module()
    conv = m.bands["ll"].interact.conv
    w = np.zeros_like(conv.weight.data)
    for ch in range(C):
        w[ch, ch, 0, 1, 1] = 0.5
        w[ch, ch, 1, 1, 1] = 0.5
    conv.weight.data = w
    conv.bias.data = np.zeros(C)
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(1, C, 4, 4)), rng.normal(size=(1, C, 4, 4))
    out = m.interact_ll(Tensor(a), Tensor(b))
    assert np.allclose(out.data, (a + b) / 2)


def test_interact_ll_zero_inputs_zero_bias():
    m = make_module()
    m.bands["ll"].interact.conv.bias.data = np.zeros(C)
    out = m.interact_ll(Tensor(np.zeros((1, C, 4, 4))), Tensor(np.zeros((1, C, 4, 4))))
    assert np.array_equal(out.data, np.zeros((1, C, 4, 4)))


def test_interact_ll_matches_composition_oracle():
    m = make_module(seed=7)
    conv = m.bands["ll"].interact.conv
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=(2, C, 4, 4)), rng.normal(size=(2, C, 4, 4))
    got = m.interact_ll(Tensor(a), Tensor(b))
    stacked = np.stack([a, b], axis=2)  # inflate + concat on the depth axis
    want = conv3d_loop_oracle(stacked, conv.weight.data, conv.bias.data, padding_spatial=1)
    assert got.data.shape == (2, C, 4, 4)
    assert np.max(np.abs(got.data - want[:, :, 0])) < 1e-12


def test_interact_mid_impulse_support():
    m = make_module()
    x1 = np.zeros((1, C, 4, 4))
    x1[0, 2, 1, 3] = 5.0
    out = m.interact_mid(Tensor(x1), Tensor(np.zeros_like(x1)), "lh")
    out = out.data - m.bands["lh"].interact.conv.bias.data.reshape(1, C, 1, 1)
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 3] = True
    assert np.all(out[:, :, ~mask] == 0.0)


def test_interact_mid_hand_set_temporal_difference():
    m = make_module()
    conv = m.bands["hl"].interact.conv
    w = np.zeros_like(conv.weight.data)
    for ch in range(C):
        w[ch, ch, 0, 0, 0] = -1.0
        w[ch, ch, 1, 0, 0] = 1.0
    conv.weight.data = w
    conv.bias.data = np.zeros(C)
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(1, C, 3, 3)), rng.normal(size=(1, C, 3, 3))
    out = m.interact_mid(Tensor(a), Tensor(b), "hl")
    assert np.allclose(out.data, b - a)


def test_interact_mid_matches_oracle():
    m = make_module(seed=9)
    conv = m.bands["lh"].interact.conv
    rng = np.random.default_rng(13)
    a, b = rng.normal(size=(1, C, 3, 5)), rng.normal(size=(1, C, 3, 5))
    got = m.interact_mid(Tensor(a), Tensor(b), "lh")
    want = conv3d_loop_oracle(np.stack([a, b], axis=2), conv.weight.data, conv.bias.data)
    assert np.max(np.abs(got.data - want[:, :, 0])) < 1e-12


def test_interact_mid_rejects_bad_band():
    m = make_module()
    with pytest.raises(ValueError):
        m.interact_mid(Tensor(np.zeros((1, C, 2, 2))), Tensor(np.zeros((1, C, 2, 2))), "hh")


def test_interact_hh_zero_on_equal_inputs():
    m = make_module()
    m.bands["hh"].interact.conv.bias.data = np.zeros(C)
    x = np.random.default_rng(1).normal(size=(2, C, 4, 4))
    out = m.interact_hh(Tensor(x), Tensor(x))
    assert np.allclose(out.data, 0.0)


def test_interact_hh_symmetric_and_nonnegative():
    m = make_module()
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, C, 4, 4)), rng.normal(size=(2, C, 4, 4))
    o1 = m.interact_hh(Tensor(a), Tensor(b))
    o2 = m.interact_hh(Tensor(b), Tensor(a))
    assert np.array_equal(o1.data, o2.data)
    assert np.all(o1.data >= 0.0)


def test_interaction_shape_mismatch():
    m = make_module()
    with pytest.raises(ShapeError):
        m.interact_ll(Tensor(np.zeros((1, C, 2, 2))), Tensor(np.zeros((1, C, 4, 4))))


# ---------------------------------------------------------------------------
# squeeze-excite modulation
# ---------------------------------------------------------------------------

def test_se_modulate_gate_closed_is_residual_identity():
    m = make_module()
    m.bands["ll"].se.force_gate = "closed"
    rng = np.random.default_rng(4)
    tilde = Tensor(rng.normal(size=(1, C, 2, 2)))
    orig = Tensor(rng.normal(size=(1, C, 2, 2)))
    out = m.se_modulate(tilde, orig, "ll")
    assert np.array_equal(out.data, orig.data)


def test_se_modulate_gate_open_doubles():
    m = make_module()
    m.bands["ll"].se.force_gate = "open"
    rng = np.random.default_rng(4)
    tilde = Tensor(rng.normal(size=(1, C, 2, 2)))
    orig = Tensor(rng.normal(size=(1, C, 2, 2)))
    out = m.se_modulate(tilde, orig, "ll")
    assert np.array_equal(out.data, 2.0 * orig.data)


def test_se_modulate_ratio_strictly_between_one_and_two():
    m = make_module(seed=21)
    rng = np.random.default_rng(6)
    tilde = Tensor(rng.normal(size=(2, C, 4, 4)))
    orig = Tensor(rng.normal(size=(2, C, 4, 4)))
    out = m.se_modulate(tilde, orig, "hh")
    nz = orig.data != 0
    ratio = out.data[nz] / orig.data[nz]
    assert np.all(ratio > 1.0) and np.all(ratio < 2.0)


# ---------------------------------------------------------------------------
# full module
# ---------------------------------------------------------------------------

def test_forward_gate_closed_is_exact_identity_on_dyadic_grid():
    m = make_module(seed=17)
    m.force_gates("closed")
    rng = np.random.default_rng(8)
    f1 = Tensor(dyadic_grid(rng, (1, C, 8, 8)))
    f2 = Tensor(dyadic_grid(rng, (1, C, 8, 8)))
    o1, o2 = m.forward(f1, f2)
    assert np.array_equal(o1.data, f1.data)
    assert np.array_equal(o2.data, f2.data)


def test_forward_equal_inputs_give_equal_outputs():
    m = make_module(seed=19)
    m.bands["hh"].interact.conv.bias.data = np.zeros(C)
    x = np.random.default_rng(9).normal(size=(1, C, 4, 4))
    o1, o2 = m.forward(Tensor(x), Tensor(x.copy()))
    assert np.array_equal(o1.data, o2.data)


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_preserves_shape_all_variants(variant):
    m = make_module(seed=23, variant=variant)
    rng = np.random.default_rng(10)
    f1, f2 = Tensor(rng.normal(size=(2, C, 4, 6))), Tensor(rng.normal(size=(2, C, 4, 6)))
    o1, o2 = m.forward(f1, f2)
    assert o1.data.shape == f1.data.shape
    assert o2.data.shape == f2.data.shape


def test_forward_rejects_odd_dims():
    m = make_module()
    with pytest.raises(ShapeError):
        m.forward(Tensor(np.zeros((1, C, 3, 4))), Tensor(np.zeros((1, C, 3, 4))))


def test_off_variant_has_no_parameters():
    m = make_module(variant="off")
    assert m.parameters() == []


def test_difference_variant_is_swap_equivariant():
    m = make_module(seed=29, variant="difference")
    rng = np.random.default_rng(12)
    f1, f2 = Tensor(rng.normal(size=(1, C, 4, 4))), Tensor(rng.normal(size=(1, C, 4, 4)))
    o1, o2 = m.forward(f1, f2)
    s1, s2 = m.forward(f2, f1)
    assert np.array_equal(s1.data, o2.data)
    assert np.array_equal(s2.data, o1.data)


def test_full_module_gradient_check():
    assert check_dawim(0, max_entries=4) < 1e-6
