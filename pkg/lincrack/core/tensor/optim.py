"""
Stochastic gradient descent with momentum.
"""

from typing import Dict, Iterable, List

import numpy as np

from lincrack.core.exceptions import ConfigurationError
from lincrack.core.tensor.tensor import Tensor


class SGD:
    """
    Plain SGD with heavy-ball momentum and L2 weight decay.

    ``v ← momentum·v + (g + weight_decay·w)``; ``w ← w − lr·v``
    """

    def __init__(self, parameters: Iterable[Tensor], lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        self.parameters: List[Tensor] = [p for p in parameters if p.requires_grad]
        if lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {weight_decay}")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: Dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self) -> None:
        for p in self.parameters:
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
            v = self._velocity.get(id(p))
            v = g.copy() if v is None else self.momentum * v + g
            self._velocity[id(p)] = v
            p.data = p.data - self.lr * v
