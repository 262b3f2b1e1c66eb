"""Online RBF-kernel SVM in the LASVM style, with importance-weighted boxes.

Internally the dual is kept in signed form, beta_s = y_s * alpha_s, with
box A_s <= beta_s <= B_s where [A_s, B_s] is [0, C/p_s] for positives and
[-C/p_s, 0] for negatives, and the equality constraint sum_s beta_s = 0.
The cached gradient is g_s = y_s - sum_t beta_t K(x_s, x_t); the decision
function is f(x) = sum_s beta_s K(x_s, x) + b.

Each direction step moves a violating pair (i, j) by lambda along
(+e_i, -e_j); lambda is clipped by the boxes and additionally by C so
that no dual coefficient changes by more than C in one step.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from paractive.kernels import rbf_row, rbf_scores
from paractive.learners.base import InvariantViolation, Learner

_MIN_CURVATURE = 1e-12


class KernelSVM(Learner):
    tag = "svm"

    def __init__(self, dim, C=1.0, gamma=0.012, tau=1e-3, cache_rows=1024,
                 reprocess_steps=2, check_invariants=False):
        if C <= 0 or gamma <= 0:
            raise ValueError("C and gamma must be positive")
        self.dim = int(dim)
        self.C = float(C)
        self.gamma = float(gamma)
        self.tau = float(tau)
        self.cache_rows = int(cache_rows)
        self.reprocess_steps = int(reprocess_steps)
        self.check_invariants = check_invariants
        self.n = 0
        self.b = 0.0
        cap = 16
        self._X = np.zeros((cap, self.dim))
        self._y = np.zeros(cap, dtype=np.int64)
        self._p = np.ones(cap)
        self._beta = np.zeros(cap)
        self._g = np.zeros(cap)
        self._ids = np.zeros(cap, dtype=np.int64)
        self._pos = {}
        self._cache = OrderedDict()
        self.ops = 0
        # populated only when check_invariants is on
        self.step_log = []

    # -- storage ---------------------------------------------------------
    @property
    def X(self):
        return self._X[: self.n]

    @property
    def y(self):
        return self._y[: self.n]

    @property
    def p(self):
        return self._p[: self.n]

    @property
    def beta(self):
        return self._beta[: self.n]

    @property
    def alpha(self):
        return self._beta[: self.n] * self._y[: self.n]

    @property
    def g(self):
        return self._g[: self.n]

    @property
    def ids(self):
        return self._ids[: self.n]

    def _upper(self):
        n = self.n
        return np.where(self._y[:n] > 0, self.C / self._p[:n], 0.0)

    def _lower(self):
        n = self.n
        return np.where(self._y[:n] > 0, 0.0, -self.C / self._p[:n])

    def _grow(self):
        cap = 2 * self._X.shape[0]
        for name in ("_X", "_y", "_p", "_beta", "_g", "_ids"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def _row(self, pos):
        """Kernel row of support vector ``pos`` against the whole support set."""
        sid = int(self._ids[pos])
        row = self._cache.get(sid)
        n = self.n
        if row is None:
            row = rbf_row(self._X[pos], self._X[:n], self.gamma)
        elif row.shape[0] < n:
            row = np.concatenate([row, rbf_row(self._X[pos], self._X[row.shape[0]:n], self.gamma)])
        else:
            self._cache.move_to_end(sid)
            self.ops += n
            return row
        self._cache[sid] = row
        self._cache.move_to_end(sid)
        while len(self._cache) > self.cache_rows:
            self._cache.popitem(last=False)
        self.ops += n
        return row

    # -- scoring ---------------------------------------------------------
    def score_batch(self, X):
        X = self._check_dim(np.atleast_2d(X))
        return rbf_scores(X, self.X, self.beta, self.gamma, self.b)

    def score_cost(self):
        return max(1, self.n)

    # -- optimisation ----------------------------------------------------
    def _step(self, i, j, kind):
        """One clipped line-search step on the pair (i up, j down)."""
        Ki = self._row(i)
        Kj = self._row(j)
        gi, gj = self._g[i], self._g[j]
        curv = Ki[i] + Kj[j] - 2.0 * Ki[j]
        up_room = self._upper_of(i) - self._beta[i]
        down_room = self._beta[j] - self._lower_of(j)
        lam = min(up_room, down_room, self.C)
        if curv > _MIN_CURVATURE:
            lam = min(lam, (gi - gj) / curv)
        if lam <= 0.0:
            return 0.0
        w_before = None
        if self.check_invariants:
            w_before = self.step_log[-1][2] if self.step_log else self._dual()
        self._beta[i] += lam
        self._beta[j] -= lam
        if lam == up_room:
            self._beta[i] = self._upper_of(i)
        if lam == down_room:
            self._beta[j] = self._lower_of(j)
        n = self.n
        self._g[:n] -= lam * (Ki - Kj)
        if self.check_invariants:
            self._verify(kind, lam, w_before)
        return lam

    def _upper_of(self, s):
        return self.C / self._p[s] if self._y[s] > 0 else 0.0

    def _lower_of(self, s):
        return 0.0 if self._y[s] > 0 else -self.C / self._p[s]

    def _extremes(self):
        """(i, j): argmax g over beta < B and argmin g over beta > A; -1 if none."""
        n = self.n
        if n == 0:
            return -1, -1
        g = self._g[:n]
        beta = self._beta[:n]
        up = beta < self._upper()
        down = beta > self._lower()
        i = int(np.argmax(np.where(up, g, -np.inf))) if up.any() else -1
        j = int(np.argmin(np.where(down, g, np.inf))) if down.any() else -1
        return i, j

    def process(self, ex):
        """Insert ``ex`` with alpha = 0 and take one step against its best partner."""
        if int(ex.index) in self._pos:
            raise ValueError(f"example {ex.index} is already a support vector")
        x = self._check_dim(ex.x)
        if self.n == self._X.shape[0]:
            self._grow()
        k = self.n
        self._X[k] = x
        self._y[k] = ex.y
        self._p[k] = ex.p
        self._beta[k] = 0.0
        self._ids[k] = ex.index
        self.n += 1
        self._pos[int(ex.index)] = k
        row = self._row(k)
        self._g[k] = ex.y - float((row * self._beta[: self.n]).sum())
        if self.check_invariants:
            self._verify("insert", 0.0, None)

        n = self.n
        g = self._g[:n]
        if ex.y > 0:
            down = self._beta[:n] > self._lower()
            if not down.any():
                return 0.0
            i, j = k, int(np.argmin(np.where(down, g, np.inf)))
        else:
            up = self._beta[:n] < self._upper()
            if not up.any():
                return 0.0
            i, j = int(np.argmax(np.where(up, g, -np.inf))), k
        if self._g[i] - self._g[j] <= self.tau:
            return 0.0
        return self._step(i, j, "process")

    def reprocess(self):
        i, j = self._extremes()
        lam = 0.0
        if i >= 0 and j >= 0 and self._g[i] - self._g[j] > self.tau:
            lam = self._step(i, j, "reprocess")
        i, j = self._extremes()
        gi = self._g[i] if i >= 0 else np.inf
        gj = self._g[j] if j >= 0 else -np.inf
        n = self.n
        y, beta, g = self._y[:n], self._beta[:n], self._g[:n]
        drop = (beta == 0.0) & (((y < 0) & (g >= gi)) | ((y > 0) & (g <= gj)))
        if drop.any():
            self._compact(~drop)
            i, j = self._extremes()
        if i >= 0 and j >= 0:
            self.b = 0.5 * (self._g[i] + self._g[j])
        elif i >= 0:
            self.b = float(self._g[i])
        elif j >= 0:
            self.b = float(self._g[j])
        if self.check_invariants:
            self._verify("remove", 0.0, None)
        return lam

    def _compact(self, keep):
        n = self.n
        m = int(keep.sum())
        for name in ("_X", "_y", "_p", "_beta", "_g", "_ids"):
            arr = getattr(self, name)
            arr[:m] = arr[:n][keep]
        self.n = m
        self._pos = {int(s): q for q, s in enumerate(self._ids[:m])}
        for sid in list(self._cache):
            if sid not in self._pos:
                del self._cache[sid]
                continue
            row = self._cache[sid]
            self._cache[sid] = row[keep[: row.shape[0]]]

    def update(self, batch):
        start = self.ops
        for ex in batch:
            self.process(ex)
            for _ in range(self.reprocess_steps):
                self.reprocess()
        return self.ops - start

    # -- diagnostics -----------------------------------------------------
    def gram(self):
        X = self.X
        sq = (X * X).sum(axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
        np.fill_diagonal(d2, 0.0)
        return np.exp(-self.gamma * d2)

    def _dual(self):
        beta = self.beta
        return float(beta @ self.y) - 0.5 * float(beta @ self.gram() @ beta)

    def dual_objective(self):
        """sum_s beta_s y_s - 1/2 beta^T K beta, recomputed from scratch."""
        return self._dual()

    def gradient_error(self):
        """Max |cached g - recomputed g| over the support set."""
        if self.n == 0:
            return 0.0
        true_g = self.y - self.gram() @ self.beta
        return float(np.max(np.abs(true_g - self.g)))

    def _verify(self, kind, lam, w_before):
        alpha = self.alpha
        box = self.C / self.p
        if np.any(alpha < 0.0) or np.any(alpha > box):
            raise InvariantViolation(f"{kind}: dual coefficient outside [0, C/p]")
        if lam > self.C:
            raise InvariantViolation(f"{kind}: step {lam} exceeds cap C={self.C}")
        K = self.gram()
        beta = self.beta
        err = float(np.max(np.abs(self.y - K @ beta - self.g))) if self.n else 0.0
        if err > 1e-8:
            raise InvariantViolation(f"{kind}: gradient cache off by {err:.3g}")
        w = float(beta @ self.y) - 0.5 * float(beta @ K @ beta)
        if w_before is not None and w < w_before - 1e-10:
            raise InvariantViolation(f"{kind}: dual decreased {w_before!r} -> {w!r}")
        self.step_log.append((kind, lam, w))

    # -- state -----------------------------------------------------------
    def copy(self):
        other = KernelSVM.__new__(KernelSVM)
        other.__dict__.update(self.__dict__)
        for name in ("_X", "_y", "_p", "_beta", "_g", "_ids"):
            setattr(other, name, getattr(self, name).copy())
        other._pos = dict(self._pos)
        other._cache = OrderedDict((k, v.copy()) for k, v in self._cache.items())
        other.step_log = []
        return other

    def params(self):
        return {"dim": self.dim, "C": self.C, "gamma": self.gamma, "tau": self.tau,
                "cache_rows": self.cache_rows, "reprocess_steps": self.reprocess_steps}

    def state_arrays(self):
        return {"X": self.X, "y": self.y, "p": self.p, "beta": self.beta, "g": self.g,
                "ids": self.ids, "b": np.array([self.b])}

    @classmethod
    def from_state(cls, params, arrays):
        svm = cls(**params)
        n = len(arrays["y"])
        while svm._X.shape[0] < n:
            svm._grow()
        svm.n = n
        svm._X[:n] = arrays["X"]
        svm._y[:n] = arrays["y"]
        svm._p[:n] = arrays["p"]
        svm._beta[:n] = arrays["beta"]
        svm._g[:n] = arrays["g"]
        svm._ids[:n] = arrays["ids"]
        svm.b = float(arrays["b"][0])
        svm._pos = {int(s): q for q, s in enumerate(svm._ids[:n])}
        return svm
