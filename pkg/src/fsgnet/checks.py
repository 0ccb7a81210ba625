"""Finite-difference verification harness for modules and the full network.

`finite_difference_error` compares analytic gradients against central
differences for any scalar loss closure; the `check_*` functions wire it to
each building block at toy sizes and return the worst relative error seen.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .dawim import DawimModule
from .lgfu import LgfuModule
from .stsam import StsamModule
from .tensor import Tensor, backward, no_grad
from .wavelet import dwt2_haar, idwt2_haar

MODULE_TOLERANCE = 1e-6
NETWORK_TOLERANCE = 1e-5


def finite_difference_error(
    build_loss: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error |a-n| / max(|a|,|n|,1e-8) over probed coordinates.

    `build_loss` must rebuild the same scalar loss on every call; `tensors`
    are the leaves to probe (their `.data` is perturbed in place and
    restored).  `max_entries` caps probed coordinates per tensor.
    """
    loss = build_loss()
    backward(loss)
    analytic = []
    for t in tensors:
        analytic.append(t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        t.grad = None

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        if max_entries is not None and max_entries < flat.size:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        else:
            idxs = np.arange(flat.size)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                f_plus = build_loss().item()
            flat[i] = orig - eps
            with no_grad():
                f_minus = build_loss().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def _projection_loss(out_tensors: Iterable[Tensor], rng: np.random.Generator) -> Tensor:
    """Random-but-fixed linear functional; sensitive to every output entry."""
    total = None
    for out in out_tensors:
        proj = Tensor(rng.normal(size=out.data.shape))
        term = T.hadamard(out, proj).sum()
        total = term if total is None else total + term
    return total


def check_wavelet(seed: int, max_entries: int | None = None) -> float:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
    proj_rng = np.random.default_rng(seed + 1000)
    projs = [Tensor(proj_rng.normal(size=(1, 2, 2, 2))) for _ in range(4)]
    proj_back = Tensor(proj_rng.normal(size=(1, 2, 4, 4)))

    def loss():
        sub = dwt2_haar(x)
        total = T.hadamard(idwt2_haar(sub), proj_back).sum()
        for band, p in zip(sub, projs):
            total = total + T.hadamard(band, p).sum()
        return total

    return finite_difference_error(loss, [x], max_entries=max_entries, rng=rng)


def check_dawim(seed: int, max_entries: int | None = 6) -> float:
    rng = np.random.default_rng(seed)
    module = DawimModule(8, rng)
    f1 = Tensor(rng.normal(size=(1, 8, 4, 4)), requires_grad=True)
    f2 = Tensor(rng.normal(size=(1, 8, 4, 4)), requires_grad=True)
    proj_rng = np.random.default_rng(seed + 1000)

    def loss():
        return _projection_loss(module.forward(f1, f2), np.random.default_rng(seed + 1000))

    tensors = [p.tensor for p in module.parameters()] + [f1, f2]
    return finite_difference_error(loss, tensors, max_entries=max_entries, rng=rng)


def check_stsam(seed: int, max_entries: int | None = 6) -> float:
    rng = np.random.default_rng(seed)
    module = StsamModule(8, rng)
    module.omega.data = np.array([0.5])  # move off the zero init so the branch matters
    f1 = Tensor(rng.normal(size=(1, 8, 3, 3)), requires_grad=True)
    f2 = Tensor(rng.normal(size=(1, 8, 3, 3)), requires_grad=True)

    def loss():
        return _projection_loss(module.forward(f1, f2), np.random.default_rng(seed + 1000))

    tensors = [p.tensor for p in module.parameters()] + [f1, f2]
    return finite_difference_error(loss, tensors, max_entries=max_entries, rng=rng)


def check_lgfu(seed: int, max_entries: int | None = 6) -> float:
    rng = np.random.default_rng(seed)
    module = LgfuModule(8, 4, rng)
    deep = Tensor(rng.normal(size=(1, 8, 2, 2)), requires_grad=True)
    shallow = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)

    def loss():
        return _projection_loss([module.forward(deep, shallow)], np.random.default_rng(seed + 1000))

    tensors = [p.tensor for p in module.parameters()] + [deep, shallow]
    return finite_difference_error(loss, tensors, max_entries=max_entries, rng=rng)


def check_network(seed: int, max_entries: int | None = 2) -> float:
    from .network import FsgNet, NetConfig, EncoderConfig, total_loss

    rng = np.random.default_rng(seed)
    cfg = NetConfig(encoder=EncoderConfig(width_multiplier=0.25, stage_strides=(2, 4, 8)))
    net = FsgNet(cfg, rng)
    img1 = Tensor(rng.uniform(0.1, 0.9, size=(1, 3, 32, 32)), requires_grad=True)
    img2 = Tensor(rng.uniform(0.1, 0.9, size=(1, 3, 32, 32)), requires_grad=True)
    label = (np.random.default_rng(seed + 1).uniform(size=(1, 1, 32, 32)) < 0.3).astype(np.float64)

    def loss():
        return total_loss(net.forward(img1, img2), Tensor(label))

    tensors = [p.tensor for p in net.parameters()]
    return finite_difference_error(loss, tensors, max_entries=max_entries, rng=rng)


def check_tensor_ops(seed: int) -> float:
    """Composite gradient check over the primitive op suite."""
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(2, 4, 3, 3)) * 0.5, requires_grad=True)
    proj = Tensor(rng.normal(size=(1, 2, 8, 8)))

    def loss():
        y = T.conv2d(T.sigmoid(x), w2, stride=1, padding=1)
        y = T.bilinear_upsample_x2(y)
        pooled = T.global_avg_pool(y)
        gated = T.hadamard(T.sigmoid(pooled), y)
        att = T.softmax(T.reshape(gated, (1, 2, 64)))
        return T.hadamard(gated, proj).sum() + T.hadamard(att, T.reshape(proj, (1, 2, 64))).sum()

    return finite_difference_error(loss, [x, w2], rng=rng)


SUITE = {
    "tensor-ops": check_tensor_ops,
    "wavelet": check_wavelet,
    "dawim": check_dawim,
    "stsam": check_stsam,
    "lgfu": check_lgfu,
    "network": check_network,
}


def run_gradcheck_suite(seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> dict[str, float]:
    """Max relative finite-difference error per component over the seeds."""
    results: dict[str, float] = {}
    for name, fn in SUITE.items():
        results[name] = max(fn(seed) for seed in seeds)
    return results


def suite_tolerances() -> dict[str, float]:
    return {name: (NETWORK_TOLERANCE if name == "network" else MODULE_TOLERANCE) for name in SUITE}
