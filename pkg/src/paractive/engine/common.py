"""Configuration, run records and helpers shared by all runners."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from paractive.data import check_batch
from paractive.kernels import BACKEND
from paractive.learners import FiniteERM, KernelSVM, NeuralNet, SiftedExample, ThresholdClass
from paractive.learners import serialize
from paractive.sampling import ConstantRule, MarginRule, QueryLog

ERRORS_COLUMNS = ("examples_seen", "simulated_time", "test_error", "queries_so_far")


def make_learner(spec: dict, dim: int, seed: int = 0):
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "svm":
        return KernelSVM(dim, **spec)
    if kind == "nn":
        return NeuralNet(dim, seed=seed, **spec)
    if kind == "finite":
        return FiniteERM(ThresholdClass.grid(**spec))
    raise ValueError(f"unknown learner kind {kind!r}")


def make_rule(spec: dict):
    kind = spec["kind"]
    if kind == "margin":
        return MarginRule(spec["eta"])
    if kind == "constant":
        return ConstantRule(spec.get("p", 1.0))
    raise ValueError(f"unknown rule kind {kind!r}")


@dataclass
class ClusterConfig:
    """Everything an engine needs besides the data.

    ``timing`` is ``"unit"`` (abstract operation counts) or ``"wall"``
    (measured seconds). ``rates`` are per-node speed multipliers for the
    asynchronous engine; a node with rate 0.5 takes twice as long per op.
    ``latency`` is ``{"dist": "zero" | "constant" | "uniform" | "exponential", ...}``.
    """

    k: int = 1
    B: int = 1
    warmstart_size: int = 0
    learner: dict = field(default_factory=lambda: {"kind": "svm", "C": 1.0, "gamma": 0.012})
    rule: dict = field(default_factory=lambda: {"kind": "margin", "eta": 0.1})
    seed: int = 0
    timing: str = "unit"
    rates: list | None = None
    latency: dict = field(default_factory=lambda: {"dist": "zero"})
    checkpoint_every: int = 1
    checkpoint_events: int = 1000
    checkpoint_examples: int | None = None
    workers: int = 1

    def __post_init__(self):
        check_batch(self.k, self.B)
        if self.timing not in ("unit", "wall"):
            raise ValueError(f"timing must be 'unit' or 'wall', not {self.timing!r}")
        if self.warmstart_size < 0:
            raise ValueError("warmstart_size must be >= 0")
        if self.rates is not None:
            if len(self.rates) != self.k or min(self.rates) <= 0:
                raise ValueError("rates needs one positive multiplier per node")

    def node_rates(self):
        return list(self.rates) if self.rates is not None else [1.0] * self.k

    def to_dict(self):
        return asdict(self)


@dataclass
class RunRecord:
    mode: str
    config: dict
    querylog: QueryLog = field(default_factory=QueryLog)
    rounds: list = field(default_factory=list)
    warmstart_time: float = 0.0
    warmstart_size: int = 0
    errors: list = field(default_factory=list)
    broadcasts: int = 0
    sift_ops: int = 0
    update_ops: int = 0
    simulated_time: float = 0.0
    n_streamed: int = 0
    k: int = 1
    model: object = None
    replicas: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    complete: bool = False

    @property
    def selected(self):
        return self.querylog.query_count()

    def final_error(self):
        return self.errors[-1][2] if self.errors else math.nan

    def save(self, out_dir, bound=None):
        """Write config.json, querylog.csv, errors.csv, summary.csv and model.bin."""
        from paractive.metrics import cost_summary, write_run_summary

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        echo = {"mode": self.mode, "backend": BACKEND, **self.config, **self.extra_echo()}
        with open(out / "config.json", "w") as f:
            json.dump(echo, f, indent=2, sort_keys=True, default=_jsonable)
        self.querylog.to_csv(out / "querylog.csv")
        write_errors(self.errors, out / "errors.csv")
        if self.complete:
            write_run_summary(cost_summary(self), out / "summary.csv", bound)
        if self.model is not None:
            serialize.save(self.model, out / "model.bin")

    def extra_echo(self):
        return {k: v for k, v in self.extra.items() if k in ("time_definition", "shuffle_seed",
                                                             "dataset", "delay_model")}


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return format(float(v), ".17g")
    return str(v)


def write_errors(errors, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(ERRORS_COLUMNS)
        for row in errors:
            w.writerow([fmt(v) for v in row])


def read_errors(path):
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        return [(int(a), float(b), float(c), int(d)) for a, b, c, d in r]


def test_error(model, test):
    if test is None or len(test) == 0:
        return math.nan
    pred = np.where(model.score_batch(test.X) >= 0, 1, -1)
    return float(np.mean(pred != test.y))


class Clock:
    """Charges either op counts or measured seconds."""

    def __init__(self, mode):
        self.mode = mode

    def run(self, fn, *args):
        """Call ``fn`` (which returns an op count) and return (result, cost)."""
        if self.mode == "wall":
            t0 = time.perf_counter()
            out = fn(*args)
            return out, time.perf_counter() - t0
        out = fn(*args)
        return out, float(out[-1] if isinstance(out, tuple) else out)


def warmstart(model, dataset, size, clock):
    """Passive updates (p = 1) on the first ``size`` examples; returns (ops, time)."""
    if size > len(dataset):
        raise ValueError(f"warmstart_size {size} exceeds dataset size {len(dataset)}")
    batch = [SiftedExample(dataset.X[i], int(dataset.y[i]), 1.0, i) for i in range(size)]
    ops, cost = clock.run(model.update, batch)
    return ops, cost
