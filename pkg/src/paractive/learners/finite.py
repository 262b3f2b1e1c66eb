"""Finite hypothesis classes and importance-weighted ERM over them."""
from __future__ import annotations

import numpy as np

from paractive.learners.base import Learner


class ThresholdClass:
    """1-d thresholds: hypothesis k predicts +1 iff x >= thresholds[k]."""

    def __init__(self, thresholds):
        self.thresholds = np.asarray(thresholds, dtype=float)
        if self.thresholds.ndim != 1 or self.thresholds.size == 0:
            raise ValueError("need a non-empty 1-d array of thresholds")

    @classmethod
    def grid(cls, size=1001, lo=0.0, hi=1.0):
        return cls(np.linspace(lo, hi, size))

    def __len__(self):
        return self.thresholds.size

    def predict_all(self, x):
        """(|H|,) predictions for a scalar x, or (|H|, n) for an array of points."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return np.where(x >= self.thresholds, 1, -1)
        x = x.reshape(-1)
        return np.where(x[None, :] >= self.thresholds[:, None], 1, -1)

    def predict(self, k, x):
        return np.where(np.asarray(x, dtype=float) >= self.thresholds[k], 1, -1)

    def subset(self, idx):
        return ThresholdClass(self.thresholds[np.asarray(idx)])


class FiniteERM(Learner):
    """Keeps per-hypothesis importance-weighted mistake sums.

    ``errors(m)`` divides the sums by the effective sample count m, which
    counts unqueried examples too.
    """

    tag = "finite"
    dim = 1

    def __init__(self, hclass):
        self.hclass = hclass
        self.mistakes = np.zeros(len(hclass))
        self.consumed = 0
        self.log = []
        self.ops = 0

    def add(self, ex):
        x = float(np.asarray(ex.x).reshape(-1)[0])
        wrong = self.hclass.predict_all(x) != ex.y
        self.mistakes += wrong / ex.p
        self.consumed += 1
        self.log.append(ex)
        self.ops += len(self.hclass)

    def update(self, batch):
        start = self.ops
        for ex in batch:
            self.add(ex)
        return self.ops - start

    def errors(self, m):
        if m <= 0:
            return np.zeros_like(self.mistakes)
        return self.mistakes / m

    def best(self):
        """Index of the lowest-error hypothesis; lowest index wins ties."""
        return int(np.argmin(self.mistakes))

    def best_disagreeing(self, x, h=None):
        """Lowest-error hypothesis that disagrees with ``h`` (default: best) at x.

        Returns ``None`` when every hypothesis agrees with ``h`` at x.
        """
        h = self.best() if h is None else h
        preds = self.hclass.predict_all(float(np.asarray(x).reshape(-1)[0]))
        mask = preds != preds[h]
        if not mask.any():
            return None
        return int(np.argmin(np.where(mask, self.mistakes, np.inf)))

    def score_batch(self, X):
        X = np.asarray(X, dtype=float).reshape(-1)
        return self.hclass.predict(self.best(), X).astype(float)

    def score_cost(self):
        return 1

    def replay(self):
        """Mistake sums rebuilt from the consumed log, in the original order."""
        fresh = FiniteERM(self.hclass)
        for ex in self.log:
            fresh.add(ex)
        return fresh.mistakes

    def copy(self):
        other = FiniteERM(self.hclass)
        other.mistakes = self.mistakes.copy()
        other.consumed = self.consumed
        other.log = list(self.log)
        other.ops = self.ops
        return other

    def params(self):
        return {"thresholds": self.hclass.thresholds.tolist()}

    def state_arrays(self):
        return {"thresholds": self.hclass.thresholds, "mistakes": self.mistakes,
                "consumed": np.array([self.consumed])}

    @classmethod
    def from_state(cls, params, arrays):
        erm = cls(ThresholdClass(arrays["thresholds"]))
        erm.mistakes = np.array(arrays["mistakes"], dtype=float)
        erm.consumed = int(arrays["consumed"][0])
        return erm
