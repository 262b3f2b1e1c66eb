"""Importance-weighted active learning over a finite class, with delayed updates."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from paractive.engine.common import RunRecord, test_error
from paractive.learners import FiniteERM, SiftedExample
from paractive.rng import node_stream, substream
from paractive.sampling import IwalConfig, iwal_gap, iwal_query_probability


@dataclass
class DelayModel:
    """Delay process tau(t); ``m(t)`` is the effective count t - tau(t).

    kinds: ``unit`` (tau = 1), ``fixed`` (batches of ``B``: examples of the
    current batch are invisible), ``random`` (tau = 1 + draw from
    ``dist``/``params``, with m kept non-decreasing; ``cap`` is the
    high-probability bound B_t reported alongside the run).
    """

    kind: str = "unit"
    B: int = 1
    dist: str = "poisson"
    params: dict = field(default_factory=dict)
    cap: int | None = None

    def __post_init__(self):
        if self.kind not in ("unit", "fixed", "random"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "fixed" and self.B < 1:
            raise ValueError("B must be >= 1")

    def bound(self):
        """Deterministic or high-probability bound on tau."""
        if self.kind == "unit":
            return 1
        if self.kind == "fixed":
            return self.B
        return self.cap

    def process(self, seed):
        """Generator of m_t for t = 1, 2, ..."""
        if self.kind == "unit":
            t = 0
            while True:
                t += 1
                yield t - 1
        elif self.kind == "fixed":
            t = 0
            while True:
                t += 1
                yield self.B * ((t - 1) // self.B)
        else:
            rng = substream(seed, "delay")
            draw = _delay_draw(self.dist, self.params, rng)
            t, m = 0, 0
            while True:
                t += 1
                m = max(m, t - 1 - draw())
                yield m


def _delay_draw(dist, params, rng):
    if dist == "poisson":
        lam = float(params.get("lam", 5.0))
        return lambda: int(rng.poisson(lam))
    if dist == "geometric":
        q = float(params.get("p", 0.2))
        return lambda: int(rng.geometric(q)) - 1
    if dist == "uniform":
        hi = int(params.get("high", 10))
        return lambda: int(rng.integers(0, hi + 1))
    raise ValueError(f"unknown delay distribution {dist!r}")


def _threshold_test_error(state, test):
    if test is None:
        return float("nan")
    return test_error(state, test)


def run_delayed_iwal(dataset, hclass, delay=DelayModel(), config=IwalConfig(), seed=0,
                     test=None, checkpoint_every=100):
    """IWAL where the hypotheses at time t only see queried examples up to m_t.

    Records one QueryLog row per example; the learner state is rebuilt
    incrementally from a queue of queried-but-not-yet-visible examples.
    Checkpoint errors use the delayed state; the returned model has every
    queried label applied.
    """
    state = FiniteERM(hclass)
    rng = node_stream(seed, 0)
    pending = deque()
    m_of = delay.process(seed)
    rec = RunRecord(mode="delayed-iwal", config={
        "C0": config.C0, "seed": seed, "delay": delay.kind, "B": delay.B,
        "dist": delay.dist, "params": delay.params, "cap": delay.cap,
        "hypotheses": len(hclass),
    })
    rec.extra["delay_model"] = {"kind": delay.kind, "B": delay.B, "cap": delay.cap}
    queries = 0
    n = len(dataset)
    try:
        for t in range(1, n + 1):
            m = next(m_of)
            while pending and pending[0].index + 1 <= m:
                state.add(pending.popleft())
            x = dataset.X[t - 1]
            G, _, _ = iwal_gap(state, x, m)
            p = iwal_query_probability(G, m, config)
            q = bool(rng.random() < p)
            rec.querylog.append(t, 0, q, p, t - m, m)
            if q:
                queries += 1
                pending.append(SiftedExample(x, int(dataset.y[t - 1]), p, t - 1))
            if t % checkpoint_every == 0 or t == n:
                rec.errors.append((t, float(t), _threshold_test_error(state, test), queries))
    except Exception as exc:
        exc.partial_record = rec
        raise
    # drain: labels still in flight when the stream ends reach the final model
    rec.extra["pending_at_end"] = len(pending)
    while pending:
        state.add(pending.popleft())
    rec.model = state
    rec.n_streamed = n
    rec.simulated_time = float(n)
    rec.sift_ops = n
    rec.update_ops = state.ops
    rec.complete = True
    return rec


def run_iwal(dataset, hclass, config=IwalConfig(), seed=0, test=None, checkpoint_every=100):
    """Standard (undelayed) IWAL: every query is visible from the next step on."""
    mistakes = np.zeros(len(hclass))
    rng = node_stream(seed, 0)
    rec = RunRecord(mode="iwal", config={"C0": config.C0, "seed": seed})
    state = FiniteERM(hclass)
    queries = 0
    for t in range(1, len(dataset) + 1):
        x = dataset.X[t - 1]
        m = t - 1
        state.mistakes = mistakes
        G, _, _ = iwal_gap(state, x, m)
        p = iwal_query_probability(G, m, config)
        q = bool(rng.random() < p)
        rec.querylog.append(t, 0, q, p, 1, m)
        if q:
            queries += 1
            y = int(dataset.y[t - 1])
            mistakes = mistakes + (hclass.predict_all(float(x[0])) != y) / p
        if t % checkpoint_every == 0 or t == len(dataset):
            state.mistakes = mistakes
            rec.errors.append((t, float(t), _threshold_test_error(state, test), queries))
    state.mistakes = mistakes
    rec.model = state
    rec.complete = True
    return rec
