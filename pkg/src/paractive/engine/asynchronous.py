"""Event-driven simulation of the asynchronous dual-queue protocol.

Every node owns a replica, a fresh-example queue Q_F and a selected-example
queue Q_S. A ready node first applies everything waiting in Q_S, one
example per update event; only with Q_S empty does it take one example
from Q_F, score it against its own replica and flip its coin. Selected
examples go through a sequencer that stamps a global sequence number and
delivers to every node FIFO in that order, so all Q_S see the same order.

Simulated time: a node's clock advances by (op cost / rate) per scoring or
update; broadcast latency is added to delivery times. Nodes with empty
queues idle until a delivery arrives; the run ends once the stream is
exhausted and every Q_S has drained.
"""
from __future__ import annotations

import heapq
from collections import deque

import numpy as np

from paractive.engine.common import (
    ClusterConfig,
    RunRecord,
    make_learner,
    make_rule,
    test_error,
    warmstart,
    Clock,
)
from paractive.learners import SiftedExample
from paractive.rng import node_stream, substream

READY, SCORED, ARRIVE = 0, 1, 2


def latency_sampler(spec, seed):
    dist = spec.get("dist", "zero")
    rng = substream(seed, "latency")
    if dist == "zero":
        return lambda: 0.0
    if dist == "constant":
        v = float(spec["value"])
        return lambda: v
    if dist == "uniform":
        lo, hi = float(spec["low"]), float(spec["high"])
        return lambda: float(rng.uniform(lo, hi))
    if dist == "exponential":
        mean = float(spec["mean"])
        return lambda: float(rng.exponential(mean))
    raise ValueError(f"unknown latency distribution {dist!r}")


class _Node:
    def __init__(self, node_id, model, fresh, rate):
        self.id = node_id
        self.model = model
        self.fresh = deque(fresh)
        self.selected = deque()
        self.rate = rate
        self.busy = False
        self.clock = 0.0
        self.frontier = 0  # every dequeue index <= frontier is reflected here
        self.applied = set()
        self.fetched = 0
        self.updates = 0


def run_asynchronous(config: ClusterConfig, dataset, test=None, until=None):
    """Simulate the asynchronous protocol; returns a RunRecord with all replicas.

    ``until`` stops the simulation at that simulated time (queues are left
    as they are; the record is then marked incomplete).
    """
    if config.timing != "unit":
        raise ValueError("the asynchronous engine simulates time from unit op counts only")
    k, w = config.k, config.warmstart_size
    model = make_learner(config.learner, dataset.dim, config.seed)
    ops, warm_cost = warmstart(model, dataset, w, Clock(config.timing))
    rule = make_rule(config.rule)
    rates = config.node_rates()
    rngs = [node_stream(config.seed, i) for i in range(k)]
    latency = latency_sampler(config.latency, config.seed)

    stream = np.arange(w, len(dataset))
    nodes = [_Node(i, model.copy(), stream[i::k], rates[i]) for i in range(k)]
    rec = RunRecord(mode="async", config=config.to_dict(), warmstart_time=warm_cost,
                    warmstart_size=w, k=k)
    rec.update_ops += ops
    rec.extra["time_definition"] = (
        "event clock: node time advances by op cost / rate per score or update; "
        "delivery time = send time + sampled latency, FIFO per receiver"
    )
    rec.extra["rule_n"] = []

    events = []
    seq = 0

    def push(time, kind, node, payload=None):
        nonlocal seq
        heapq.heappush(events, (time, seq, kind, node, payload))
        seq += 1

    # dequeue index t (1-based) -> (decided, selected); t counts the whole cluster
    decided = []
    chosen = []
    node_m = {}  # dequeue index -> frontier of the deciding node at decision time
    replica_update_ops = 0
    dequeued = 0
    last_delivery = [warm_cost] * k
    broadcast_seq = 0
    queries = w
    events_done = 0
    rec.errors.append((w, warm_cost, test_error(nodes[0].model, test), queries))

    for node in nodes:
        node.clock = warm_cost
        node.busy = True
        push(warm_cost, READY, node.id)

    def advance_frontier(node):
        f = node.frontier
        while f < len(decided) and decided[f] and (not chosen[f] or f + 1 in node.applied):
            f += 1
        node.frontier = f

    try:
        while events:
            now, _, kind, i, payload = heapq.heappop(events)
            if until is not None and now > until:
                break
            node = nodes[i]
            events_done += 1
            if kind == ARRIVE:
                node.selected.append(payload)
                if not node.busy:
                    node.busy = True
                    push(now, READY, i)
            elif kind == SCORED:
                t, ex, p, coin, cost = payload
                decided[t - 1] = True
                chosen[t - 1] = coin
                rec.querylog.append(w + t, i, coin, p, w + t - (w + node_m[t]), w + node_m[t])
                if coin:
                    broadcast_seq += 1
                    rec.broadcasts += 1
                    queries += 1
                    for j in range(k):
                        arrive = max(now + latency(), last_delivery[j])
                        last_delivery[j] = arrive
                        push(arrive, ARRIVE, j, (t, ex))
                push(now, READY, i)
            else:  # READY
                node.clock = now
                if node.selected:
                    t, ex = node.selected.popleft()
                    cost = node.model.update([ex])
                    node.applied.add(t)
                    node.updates += 1
                    replica_update_ops += cost
                    if i == 0:
                        rec.update_ops += cost
                    push(now + cost / node.rate, READY, i)
                elif node.fresh:
                    pos = int(node.fresh.popleft())
                    n_rule = w + dequeued
                    dequeued += 1
                    t = dequeued
                    decided.append(False)
                    chosen.append(False)
                    advance_frontier(node)
                    node_m[t] = node.frontier
                    x = dataset.X[pos]
                    if rule.name == "constant":
                        probs = rule.probabilities(np.zeros(1), n_rule)
                        cost = 0
                    else:
                        probs = rule.probabilities(node.model.score_batch(x[None, :]), n_rule)
                        cost = node.model.score_cost()
                    p = float(probs[0])
                    coin = bool(rngs[i].random() < p)
                    rec.sift_ops += cost
                    rec.extra["rule_n"].append(n_rule)
                    node.fetched += 1
                    ex = SiftedExample(x, int(dataset.y[pos]), p, pos) if coin else None
                    push(now + cost / node.rate, SCORED, i, (t, ex, p, coin, cost))
                else:
                    node.busy = False
            if config.checkpoint_events and events_done % config.checkpoint_events == 0:
                rec.errors.append((w + dequeued, now, test_error(nodes[0].model, test), queries))
        else:
            rec.complete = True
    except Exception as exc:
        exc.partial_record = rec
        raise
    end = max(nd.clock for nd in nodes)
    rec.errors.append((w + dequeued, end, test_error(nodes[0].model, test), queries))
    rec.simulated_time = end
    rec.n_streamed = w + dequeued
    rec.replicas = [nd.model for nd in nodes]
    rec.model = nodes[0].model
    rec.extra["replica_update_ops"] = replica_update_ops
    rec.extra["fetched"] = [nd.fetched for nd in nodes]
    rec.extra["updates"] = [nd.updates for nd in nodes]
    rec.extra["node_clocks"] = [nd.clock for nd in nodes]
    return rec
