"""
Finite-difference gradient checking.

Compares the analytic gradients produced by ``Tensor.backward`` with central
differences ``(f(x + h) − f(x − h)) / 2h`` evaluated element by element.
"""

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from lincrack.core.exceptions import GraphError
from lincrack.core.tensor.tensor import Tensor, no_grad


def numerical_gradient(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    index: int,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of scalar ``fn(*inputs)`` w.r.t. ``inputs[index]``."""
    target = inputs[index]
    original = target.data
    grad = np.zeros_like(original)
    flat = grad.reshape(-1)
    with no_grad():
        for k in range(original.size):
            bumped = original.copy().reshape(-1)
            bumped[k] += h
            target.data = bumped.reshape(original.shape)
            plus = fn(*inputs).item()
            bumped[k] -= 2 * h
            target.data = bumped.reshape(original.shape)
            minus = fn(*inputs).item()
            flat[k] = (plus - minus) / (2 * h)
    target.data = original
    return grad


def analytic_gradients(fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    """Gradients from one backward pass, keyed by input position."""
    for t in inputs:
        t.zero_grad()
    loss = fn(*inputs)
    if loss.size != 1:
        raise GraphError(f"gradcheck needs a scalar function, got shape {loss.shape}")
    loss.backward()
    return {
        i: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for i, t in enumerate(inputs) if t.requires_grad
    }


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, floor)"""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    wrt: Optional[Sequence[int]] = None,
) -> float:
    """
    Largest relative error between analytic and numerical gradients.

    Args:
        fn: Function of the inputs returning a scalar tensor
        inputs: Input tensors; those with ``requires_grad`` are checked
        h: Finite-difference step
        wrt: Restrict the check to these input positions

    Returns:
        Maximum relative error over the checked inputs
    """
    analytic = analytic_gradients(fn, inputs)
    positions = list(wrt) if wrt is not None else sorted(analytic)
    worst = 0.0
    for i in positions:
        numeric = numerical_gradient(fn, inputs, i, h=h)
        worst = max(worst, relative_error(analytic[i], numeric))
    return worst
