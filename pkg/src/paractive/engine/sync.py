"""Sequential baselines and the synchronous round protocol."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from paractive.data import partition_stream
from paractive.engine.common import (
    Clock,
    ClusterConfig,
    RunRecord,
    make_learner,
    make_rule,
    test_error,
    warmstart,
)
from paractive.rng import node_stream
from paractive.sampling import ConstantRule, sift_batch


def _start(config, dataset, mode):
    model = make_learner(config.learner, dataset.dim, config.seed)
    clock = Clock(config.timing)
    w = config.warmstart_size
    ops, cost = warmstart(model, dataset, w, clock)
    rec = RunRecord(mode=mode, config=config.to_dict(), warmstart_time=cost,
                    warmstart_size=w, k=config.k)
    rec.update_ops += ops
    rec.extra["time_definition"] = (
        "unit ops: one per kernel entry or forward pass" if config.timing == "unit"
        else "measured seconds"
    )
    return model, clock, rec


def run_sequential(config: ClusterConfig, dataset, test=None, mode="active"):
    """One learner, one stream. ``passive`` updates on every example; ``active``
    gates updates with the configured rule and refreshes the model after
    every example (delay 1)."""
    if mode not in ("active", "passive"):
        raise ValueError("mode must be 'active' or 'passive'")
    model, clock, rec = _start(config, dataset, f"sequential-{mode}")
    rule = ConstantRule(1.0) if mode == "passive" else make_rule(config.rule)
    rng = node_stream(config.seed, 0)
    w = config.warmstart_size
    every = config.checkpoint_examples or config.B
    time_now = rec.warmstart_time
    queries = w
    rec.errors.append((w, time_now, test_error(model, test), queries))
    n = len(dataset)
    try:
        for pos in range(w, n):
            idx = np.array([pos])
            out, sift_cost = clock.run(
                sift_batch, model, dataset.X[idx], dataset.y[idx], idx, rule, pos, rng
            )
            selected, probs, coins, ops = out
            rec.sift_ops += ops
            t = pos + 1
            rec.querylog.append(t, 0, coins[0], probs[0], 1, t - 1)
            upd_cost = 0.0
            if selected:
                upd_ops, upd_cost = clock.run(model.update, selected)
                rec.update_ops += upd_ops
                queries += 1
            time_now += sift_cost + upd_cost
            if (pos + 1 - w) % every == 0 or pos == n - 1:
                rec.errors.append((pos + 1, time_now, test_error(model, test), queries))
    except Exception as exc:
        exc.partial_record = rec
        raise
    rec.simulated_time = time_now
    rec.n_streamed = n
    rec.model = model
    rec.complete = True
    return rec


def run_synchronous(config: ClusterConfig, dataset, test=None):
    """Rounds of parallel sifting against a frozen model, then one pooled update.

    Round time is the slowest node's sift time plus the update time.
    """
    model, clock, rec = _start(config, dataset, "sync")
    rule = make_rule(config.rule)
    k, B, w = config.k, config.B, config.warmstart_size
    rngs = [node_stream(config.seed, i) for i in range(k)]
    stream_len = len(dataset) - w
    streams = partition_stream(stream_len, k, B)
    n_rounds = streams[0].rounds() if stream_len else 0
    time_now = rec.warmstart_time
    queries = w
    rec.errors.append((w, time_now, test_error(model, test), queries))
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def sift(i, r):
        idx = streams[i].slices[r] + w
        return clock.run(sift_batch, model, dataset.X[idx], dataset.y[idx], idx, rule,
                         n_global, rngs[i])

    try:
        for r in range(n_rounds):
            n_global = w + r * B
            if pool is not None:
                results = list(pool.map(lambda i: sift(i, r), range(k)))
            else:
                results = [sift(i, r) for i in range(k)]
            pooled = []
            node_times = []
            for i, ((selected, probs, coins, ops), cost) in enumerate(results):
                idx = streams[i].slices[r] + w
                for j, pos in enumerate(idx):
                    t = int(pos) + 1
                    rec.querylog.append(t, i, coins[j], probs[j], t - n_global, n_global)
                pooled.extend(selected)
                rec.sift_ops += ops
                node_times.append(cost)
            upd_ops, upd_cost = clock.run(model.update, pooled)
            rec.update_ops += upd_ops
            rec.broadcasts += len(pooled)
            queries += len(pooled)
            time_now += max(node_times) + upd_cost
            rec.rounds.append({"sift": node_times, "update": upd_cost, "selected": len(pooled)})
            if (r + 1) % config.checkpoint_every == 0 or r == n_rounds - 1:
                seen = min(len(dataset), w + (r + 1) * B)
                rec.errors.append((seen, time_now, test_error(model, test), queries))
    except Exception as exc:
        exc.partial_record = rec
        raise
    finally:
        if pool is not None:
            pool.shutdown()
    rec.simulated_time = time_now
    rec.n_streamed = len(dataset)
    rec.model = model
    rec.complete = True
    return rec
