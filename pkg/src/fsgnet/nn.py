"""Parameter containers and small layer wrappers over the functional ops.

A `Module` is a bag of parameters, buffers (non-trainable state such as
batch-norm running statistics) and child modules, registered under string
keys so that every tensor in a network gets a unique dotted path name.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import (
    BN_EPS,
    BN_MOMENTUM,
    Tensor,
    batch_norm2d,
    conv2d,
    conv3d,
)


class Parameter:
    """Trainable leaf tensor; `name` is the dotted path within its network."""

    __slots__ = ("tensor", "name")

    def __init__(self, data: np.ndarray, name: str = ""):
        self.tensor = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.name = name

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self.tensor.data = np.asarray(value, dtype=np.float64)

    def __repr__(self) -> str:
        return f"Parameter({self.name or '?'}, shape={self.tensor.shape})"


class Buffer:
    """Named non-trainable array (mutated in place, saved in checkpoints)."""

    __slots__ = ("array", "name")

    def __init__(self, array: np.ndarray, name: str = ""):
        self.array = np.asarray(array, dtype=np.float64)
        self.name = name


class Module:
    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, Buffer] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    # -- registration --------------------------------------------------------
    def param(self, key: str, data: np.ndarray) -> Parameter:
        p = Parameter(data)
        self._params[key] = p
        return p

    def buffer(self, key: str, array: np.ndarray) -> Buffer:
        b = Buffer(array)
        self._buffers[key] = b
        return b

    def child(self, key: str, module: "Module") -> "Module":
        self._children[key] = module
        return module

    # -- traversal -------------------------------------------------------------
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, p in self._params.items():
            yield prefix + key, p
        for key, m in self._children.items():
            yield from m.named_parameters(prefix + key + ".")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Buffer]]:
        for key, b in self._buffers.items():
            yield prefix + key, b
        for key, m in self._children.items():
            yield from m.named_buffers(prefix + key + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for m in self._children.values():
            m.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.tensor.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Sorted name -> array view of all parameters and buffers."""
        state: dict[str, np.ndarray] = {}
        for name, p in self.named_parameters():
            if name in state:
                raise ValueError(f"duplicate parameter name {name!r}")
            state[name] = p.tensor.data
        for name, b in self.named_buffers():
            if name in state:
                raise ValueError(f"duplicate state name {name!r}")
            state[name] = b.array
        return dict(sorted(state.items()))

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_arrays()
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.tensor.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.tensor.data.shape}")
            p.tensor.data = arr.copy()
        for name, b in self.named_buffers():
            arr = np.asarray(state[name], dtype=np.float64)
            b.array[...] = arr


def assign_parameter_names(root: Module, prefix: str = "") -> None:
    """Stamp every parameter/buffer with its dotted path; names must be unique."""
    seen: set[str] = set()
    for name, p in root.named_parameters(prefix):
        if name in seen:
            raise ValueError(f"duplicate parameter name {name!r}")
        seen.add(name)
        p.name = name
    for name, b in root.named_buffers(prefix):
        if name in seen:
            raise ValueError(f"duplicate buffer name {name!r}")
        seen.add(name)
        b.name = name


# --------------------------------------------------------------------------
# initializers
# --------------------------------------------------------------------------

def kaiming_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


# --------------------------------------------------------------------------
# layers
# --------------------------------------------------------------------------

class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        self.weight = self.param("weight", kaiming_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in))
        self.bias = self.param("bias", np.zeros(out_ch)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        b = self.bias.tensor if self.bias is not None else None
        return conv2d(x, self.weight.tensor, b, stride=self.stride, padding=self.padding)


class Conv3d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: tuple[int, int, int],
                 rng: np.random.Generator, padding_spatial: int = 0, bias: bool = True):
        super().__init__()
        self.padding_spatial = padding_spatial
        kd, kh, kw = kernel
        fan_in = in_ch * kd * kh * kw
        self.weight = self.param("weight", kaiming_normal(rng, (out_ch, in_ch, kd, kh, kw), fan_in))
        self.bias = self.param("bias", np.zeros(out_ch)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        b = self.bias.tensor if self.bias is not None else None
        return conv3d(x, self.weight.tensor, b, padding_spatial=self.padding_spatial)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = self.param("gamma", np.ones(channels))
        self.beta = self.param("beta", np.zeros(channels))
        self.running_mean = self.buffer("running_mean", np.zeros(channels))
        self.running_var = self.buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm2d(
            x, self.gamma.tensor, self.beta.tensor,
            self.running_mean.array, self.running_var.array,
            training=self.training, eps=self.eps, momentum=self.momentum,
        )
