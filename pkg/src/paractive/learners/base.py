from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericError(ArithmeticError):
    """Non-finite value produced inside a learner or rule."""


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class SiftedExample:
    """An example selected with probability ``p``; carries importance weight 1/p."""

    x: np.ndarray
    y: int
    p: float
    index: int

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"query probability {self.p} outside (0, 1]")
        if self.y not in (-1, 1):
            raise ValueError(f"label {self.y} not in {{-1, +1}}")

    @property
    def weight(self) -> float:
        return 1.0 / self.p


class Learner:
    """Passive updater contract shared by every learner.

    ``score_batch`` must evaluate each row independently of the others, so
    that sifting results do not depend on how a slice is grouped.
    """

    tag = "base"
    dim: int

    def _check_dim(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected input dimension {self.dim}, got {x.shape[-1]}")
        return x

    def score(self, x) -> float:
        x = self._check_dim(x)
        return float(self.score_batch(x[None, :])[0])

    def score_batch(self, X) -> np.ndarray:
        raise NotImplementedError

    def score_cost(self) -> int:
        """Abstract operations needed to score one example."""
        raise NotImplementedError

    def update(self, batch) -> int:
        """Consume importance-weighted examples in order; return op count."""
        raise NotImplementedError

    def copy(self) -> Learner:
        raise NotImplementedError

    def state_arrays(self) -> dict:
        """Every piece of state, as arrays, for snapshots and bitwise comparison."""
        raise NotImplementedError

    def same_state(self, other: Learner) -> bool:
        a, b = self.state_arrays(), other.state_arrays()
        if a.keys() != b.keys():
            return False
        return all(
            np.asarray(a[k]).shape == np.asarray(b[k]).shape
            and np.asarray(a[k]).tobytes() == np.asarray(b[k]).tobytes()
            for k in a
        )
