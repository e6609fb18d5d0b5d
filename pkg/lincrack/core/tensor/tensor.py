"""
Tensor and differentiable Function base.

A ``Tensor`` wraps a dense float64 ``numpy`` array. Operations are
``Function`` subclasses: ``apply`` runs ``forward`` on the raw arrays and, when
gradients are enabled, records the function as the creator of the output so
``Tensor.backward`` can walk the graph in reverse topological order.

Tensors are treated as immutable once produced; every op is out-of-place.
"""

import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from lincrack.core.exceptions import GraphError, NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float64

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


def is_debug_mode() -> bool:
    """True when every op output is checked for NaN/Inf."""
    return getattr(_state, 'debug', False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def debug_mode(enabled: bool = True) -> Iterator[None]:
    """Check every op output for NaN/Inf in the current thread."""
    previous = is_debug_mode()
    _state.debug = enabled
    try:
        yield
    finally:
        _state.debug = previous


def check_finite(array: np.ndarray, where: str) -> None:
    """Raise NonFiniteError if ``array`` holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{where} produced {bad} non-finite value(s)")


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays and ``backward``, which
    receives dL/d(output) as an array and returns one gradient array (or
    None) per tensor input, in input order.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors: Optional[Tuple["Tensor", ...]] = tensors

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Union[np.ndarray, Tuple[Optional[np.ndarray], ...]]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """Run the op and wire the output into the graph."""
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        if is_debug_mode():
            check_finite(out_data, cls.__name__)

        requires_grad = _grad_enabled() and any(t.requires_grad for t in tensors)
        if not requires_grad:
            func.tensors = None
            return Tensor(out_data)
        return Tensor(out_data, requires_grad=True, creator=func)


class Tensor:
    """
    Dense N-dimensional float64 array with optional gradient.

    Image tensors use the batch × channels × height × width layout.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
    ):
        array = np.array(data, dtype=DEFAULT_DTYPE, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(DEFAULT_DTYPE, copy=data.dtype != DEFAULT_DTYPE)
        if array.ndim > 0 and 0 in array.shape:
            raise ShapeError(f"tensor extents must be positive, got {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.name = name
        self._graph_consumed = False

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape, dtype=DEFAULT_DTYPE), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.ones(shape, dtype=DEFAULT_DTYPE), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, no graph history."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def _accumulate_grad(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=DEFAULT_DTYPE)
        if grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """
        Populate ``grad`` on every reachable tensor that requires it.

        The tensor must hold a single value. The graph is released afterwards,
        so calling backward a second time raises GraphError.
        """
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if self._graph_consumed:
            raise GraphError("graph already consumed by a previous backward call")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")

        # Post-order traversal gives a topological order of the graph
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, children_done = stack.pop()
            if id(node) in visited:
                continue
            if children_done:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node.creator is not None and node.creator.tensors is not None:
                for parent in node.creator.tensors:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            func = node.creator
            if func is None or func.tensors is None or node.grad is None:
                continue
            grads = func.backward(node.grad)
            if not isinstance(grads, tuple):
                grads = (grads,)
            for parent, g in zip(func.tensors, grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate_grad(g)
            func.tensors = None

        for node in order:
            if node.creator is not None:
                node.creator = None
                node._graph_consumed = True
        self._graph_consumed = True

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"


def as_tensor(value: Union["Tensor", np.ndarray, Sequence, float]) -> Tensor:
    """Wrap arrays and scalars; tensors pass through unchanged."""
    return value if isinstance(value, Tensor) else Tensor(value)
