"""Query rules: margin-based probabilities and delayed IWAL, plus batch sifting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from paractive.learners.base import NumericError, SiftedExample

C1 = 5.0 + 2.0 * math.sqrt(2.0)
C2 = 5.0
# Lower clamp on emitted probabilities; bounds importance weights by 1e6.
P_FLOOR = 1e-6


@dataclass(frozen=True)
class IwalConfig:
    C0: float = 2.0
    c1: float = C1
    c2: float = C2

    def __post_init__(self):
        if self.C0 < 2:
            raise ValueError("C0 must be >= 2")


@dataclass(frozen=True)
class MarginConfig:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")


# -- margin rule -------------------------------------------------------------

def margin_query_probability(f, n, eta):
    """p = 2 / (1 + exp(eta * |f| * sqrt(n))); vectorised over ``f``.

    Evaluated as 2 * exp(-z) / (1 + exp(-z)) so large margins underflow
    gracefully; results are clamped to the smallest positive double.
    """
    if n < 0 or not eta > 0:
        raise ValueError("need n >= 0 and eta > 0")
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise NumericError("non-finite score")
    z = eta * np.abs(f) * math.sqrt(n)
    e = np.exp(-z)
    p = np.maximum(2.0 * e / (1.0 + e), np.finfo(float).tiny)
    return float(p) if p.ndim == 0 else p


# -- importance-weighted error -----------------------------------------------

def iw_error(mistakes, queried, probs, m):
    """(1/m) * sum_{s<=m} Q_s / p_s * 1[h(x_s) != y_s].

    ``mistakes``, ``queried`` and ``probs`` are per-example arrays over the
    stream; only the first ``m`` entries count. Returns 0 for m == 0.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return 0.0
    q = np.asarray(queried[:m], dtype=bool)
    p = np.asarray(probs[:m], dtype=float)
    if np.any(q & (p <= 0)):
        raise ValueError("queried example recorded with p = 0")
    wrong = np.asarray(mistakes[:m], dtype=bool)
    sel = q & wrong
    return float(np.sum(1.0 / p[sel])) / m


# -- delayed IWAL ------------------------------------------------------------

def iwal_epsilon(m, C0):
    return C0 * math.log(m + 1) / m


def iwal_gap(state, x, m):
    """Error gap between the best hypothesis disagreeing at x and the ERM, on S_t.

    Returns ``(G, h, h_alt)``; G is +inf and h_alt None when no hypothesis
    disagrees with the ERM at x.
    """
    h = state.best()
    h_alt = state.best_disagreeing(x, h)
    if h_alt is None:
        return math.inf, h, None
    if m <= 0:
        return 0.0, h, h_alt
    errs = state.errors(m)
    return float(errs[h_alt] - errs[h]), h, h_alt


def query_equation(s, eps, c1=C1, c2=C2):
    """Right-hand side of the query-probability equation at s."""
    r = math.sqrt(eps)
    return (c1 / math.sqrt(s) - c1 + 1.0) * r + (c2 / s - c2 + 1.0) * eps


def iwal_query_probability(G, m, config=IwalConfig()):
    """Query probability for gap G at effective sample count m.

    p = 1 when G <= sqrt(eps) + eps with eps = C0 log(m+1)/m; otherwise the
    root s of the query equation, obtained in closed form by substituting
    u = 1/sqrt(s) which turns it into a quadratic in u.
    """
    if m <= 0:
        return 1.0
    if math.isinf(G):
        return P_FLOOR
    if G < 0 or math.isnan(G):
        raise ValueError(f"gap must be a non-negative number, got {G}")
    eps = iwal_epsilon(m, config.C0)
    r = math.sqrt(eps)
    if G <= r + eps:
        return 1.0
    return max(solve_query_equation(G, eps, config.c1, config.c2), P_FLOOR)


def solve_query_equation(G, eps, c1=C1, c2=C2):
    """Root s of the query equation for G > sqrt(eps) + eps (no floor applied)."""
    r = math.sqrt(eps)
    a = c2 * eps
    b = c1 * r
    c = G + (c1 - 1.0) * r + (c2 - 1.0) * eps
    # positive root of a u^2 + b u - c = 0 in u = 1/sqrt(s), cancellation-free form
    u = 2.0 * c / (b + math.sqrt(b * b + 4.0 * a * c))
    return 1.0 / (u * u)


def solve_query_equation_bisect(G, eps, c1=C1, c2=C2, tol=1e-12):
    """Bisection on (0, 1] for the root of the query equation; test oracle."""
    r = math.sqrt(eps)
    if not G > r + eps:
        raise ValueError("gap at or below the full-query threshold")
    # RHS is decreasing in s: halve lo until RHS(lo) > G
    lo, hi = 0.5, 1.0
    while query_equation(lo, eps, c1, c2) <= G:
        hi = lo
        lo *= 0.5
    for _ in range(4000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if query_equation(mid, eps, c1, c2) > G:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol and abs(query_equation(mid, eps, c1, c2) - G) < 1e-10:
            break
    return 0.5 * (lo + hi)


# -- rules used by the cluster engines --------------------------------------

class MarginRule:
    name = "margin"

    def __init__(self, eta):
        self.eta = MarginConfig(eta).eta

    def probabilities(self, scores, n):
        return np.atleast_1d(margin_query_probability(scores, n, self.eta))

    def describe(self):
        return {"rule": "margin", "eta": self.eta}


class ConstantRule:
    """p = const for every example; p = 1 is passive learning."""

    name = "constant"

    def __init__(self, p=1.0):
        self.p = max(float(p), P_FLOOR)
        if self.p > 1:
            raise ValueError("probability above 1")

    def probabilities(self, scores, n):
        return np.full(np.shape(np.atleast_1d(scores)), self.p)

    def describe(self):
        return {"rule": "constant", "p": self.p}


def sift_batch(model, X, y, indices, rule, n_global, rng):
    """Score a slice against a frozen model and flip one coin per example.

    Returns ``(selected, probs, coins, ops)`` where ``selected`` is a list of
    :class:`SiftedExample`, ``probs`` the probability of every example in
    slice order and ``coins`` the selection mask.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        return [], np.empty(0), np.zeros(0, dtype=bool), 0
    if isinstance(rule, ConstantRule):
        scores = np.zeros(X.shape[0])
        ops = 0
    else:
        scores = model.score_batch(X)
        ops = model.score_cost() * X.shape[0]
    probs = rule.probabilities(scores, n_global)
    coins = rng.random(X.shape[0]) < probs
    selected = [
        SiftedExample(X[r], int(y[r]), float(probs[r]), int(indices[r]))
        for r in np.flatnonzero(coins)
    ]
    return selected, probs, coins, ops


# -- query log ---------------------------------------------------------------

@dataclass
class QueryLog:
    """One record per streamed example: (t, node, queried, p, delay, m)."""

    t: list = field(default_factory=list)
    node: list = field(default_factory=list)
    queried: list = field(default_factory=list)
    p: list = field(default_factory=list)
    delay: list = field(default_factory=list)
    m: list = field(default_factory=list)

    COLUMNS = ("t", "node", "queried", "p", "delay", "m")

    def append(self, t, node, queried, p, delay, m):
        self.t.append(int(t))
        self.node.append(int(node))
        self.queried.append(bool(queried))
        self.p.append(float(p))
        self.delay.append(int(delay))
        self.m.append(int(m))

    def __len__(self):
        return len(self.t)

    def rows(self):
        return zip(self.t, self.node, self.queried, self.p, self.delay, self.m)

    def query_count(self):
        return int(sum(self.queried))

    def query_fraction(self):
        return self.query_count() / len(self) if len(self) else 0.0

    def __eq__(self, other):
        if not isinstance(other, QueryLog):
            return NotImplemented
        return list(self.rows()) == list(other.rows())

    def sorted_by_t(self):
        out = QueryLog()
        for row in sorted(self.rows()):
            out.append(*row)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.COLUMNS)
            for t, node, q, p, d, m in self.rows():
                w.writerow([t, node, int(q), format(p, ".17g"), d, m])

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path, newline="") as f:
            r = csv.reader(f)
            next(r)
            for t, node, q, p, d, m in r:
                log.append(int(t), int(node), int(q), float(p), int(d), int(m))
        return log
