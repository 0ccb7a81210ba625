"""Desk-scale bi-temporal change detection with a frequency-spatial pipeline."""

from .tensor import Tensor, backward, grad_check, no_grad

__all__ = ["Tensor", "backward", "grad_check", "no_grad"]
__version__ = "0.1.0"
