"""Cost accounting, speedup tables, theoretical bounds and a disagreement-coefficient estimator."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from paractive.rng import substream


class IntegrityError(ValueError):
    """A record is missing data required for the requested summary."""


# -- cost accounting ---------------------------------------------------------

@dataclass
class CostSummary:
    """Operation, time and communication totals for one run.

    ``parallel_time`` charges each round the slowest node's sift time plus
    the update time; ``sequential_time`` charges the sum over nodes instead.
    ``total_ops`` counts every node applying every update.
    """

    mode: str
    k: int
    n: int
    selected: int
    sift_ops: int
    update_ops: int
    total_ops: int
    broadcasts: int
    sequential_time: float
    parallel_time: float

    @property
    def sampling_rate(self):
        return self.selected / self.n if self.n else 0.0


COST_COLUMNS = tuple(f.name for f in fields(CostSummary))


def cost_summary(rec) -> CostSummary:
    if not rec.complete:
        raise IntegrityError(f"{rec.mode} record is incomplete")
    streamed = len(rec.querylog)
    if rec.n_streamed and streamed + rec.warmstart_size != rec.n_streamed:
        raise IntegrityError("query log does not cover the streamed examples")
    if rec.rounds:
        seq = rec.warmstart_time + sum(sum(r["sift"]) + r["update"] for r in rec.rounds)
        par = rec.warmstart_time + sum(max(r["sift"]) + r["update"] for r in rec.rounds)
    elif rec.mode == "async":
        seq = float(rec.sift_ops + rec.update_ops)
        par = rec.simulated_time
    else:
        seq = par = rec.simulated_time
    k = rec.k
    return CostSummary(
        mode=rec.mode,
        k=k,
        n=streamed,
        selected=rec.querylog.query_count(),
        sift_ops=int(rec.sift_ops),
        update_ops=int(rec.update_ops),
        total_ops=int(rec.sift_ops + k * rec.update_ops),
        broadcasts=int(rec.broadcasts),
        sequential_time=float(seq),
        parallel_time=float(par),
    )


def predicted_saturation(n, selected):
    """Node count beyond which sifting stops dominating: n / phi(n)."""
    if selected <= 0:
        return math.inf
    return n / selected


# -- speedups ----------------------------------------------------------------

def time_to_error(rec, target):
    """Simulated time of the first checkpoint at or below ``target``; None if never."""
    for _, t, err, _ in rec.errors:
        if err <= target:
            return t
    return None


SUMMARY_COLUMNS = ("k", "target_error", "time", "speedup_vs_passive", "speedup_vs_active1")


def speedup_curve(records, target_errors, passive=None):
    """Speedup table over node counts.

    ``records`` maps k to a RunRecord. The k=1 record (when present) is the
    single-node active baseline; ``passive`` is an optional sequential
    passive record. Unreachable targets give ``None`` entries.
    """
    rows = []
    base_active = records.get(1)
    for e in target_errors:
        t_passive = time_to_error(passive, e) if passive is not None else None
        t_active1 = time_to_error(base_active, e) if base_active is not None else None
        for k in sorted(records):
            t = time_to_error(records[k], e)
            rows.append({
                "k": k,
                "target_error": e,
                "time": t,
                "speedup_vs_passive": _ratio(t_passive, t),
                "speedup_vs_active1": _ratio(t_active1, t),
            })
    return rows


def _ratio(base, t):
    if base is None or t is None or t <= 0:
        return None
    return base / t


# -- theoretical bounds ------------------------------------------------------

def _eps(m, C0):
    return C0 * math.log(m + 1) / m


def generalization_bound(m, C0=2.0):
    """Excess-risk bound sqrt(2 C0 log(m+1)/m) + 2 C0 log(m+1)/m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    e = 2.0 * _eps(m, C0)
    return math.sqrt(e) + e


def generalization_bound_fixed_delay(t, B, C0=2.0):
    return generalization_bound(t - B, C0)


def generalization_bound_random_delay(t, B_t, C0=2.0):
    return generalization_bound(t - B_t, C0)


def effective_counts(t, delay):
    """m_s for s = 1..t under a deterministic delay (``random`` uses its cap)."""
    s = np.arange(1, t + 1)
    if delay.kind == "unit":
        return s - 1
    if delay.kind == "fixed":
        return delay.B * ((s - 1) // delay.B)
    if delay.cap is None:
        raise ValueError("random delay model needs a cap B_t for bounds")
    return np.maximum(s - delay.cap, 0)


def label_complexity_bound(t, delay, theta, err_star, C0=2.0):
    """Label-query bound with the unspecified O(.) constant set to 1 (indicative only).

    1 + 2 theta err* m_t + theta * sum_s (sqrt(eps_s) + eps_s) over steps with
    m_s >= 1; steps with m_s = 0 are queried with probability one and each
    add one query beyond the first.
    """
    if theta <= 0 or not 0.0 <= err_star <= 1.0:
        raise ValueError("need theta > 0 and err_star in [0, 1]")
    m = effective_counts(t, delay)
    cold = int(np.sum(m == 0))
    mm = m[m >= 1].astype(float)
    eps = C0 * np.log(mm + 1.0) / mm
    tail = float(np.sum(np.sqrt(eps) + eps))
    return 1.0 + max(cold - 1, 0) + 2.0 * theta * err_star * float(m[-1]) + theta * tail


def label_complexity_bound_fixed_delay(t, B, theta, err_star, C0=2.0):
    """Corollary form B + 2 theta err* (t-1) + theta sqrt(t-B) sqrt(C0 log t) + theta C0 log t."""
    lt = math.log(t)
    return (B + 2.0 * theta * err_star * (t - 1)
            + theta * math.sqrt(max(t - B, 0)) * math.sqrt(C0 * lt) + theta * C0 * lt)


def label_complexity_bound_random_delay(t, B_t, theta, err_star, C0=2.0):
    return label_complexity_bound_fixed_delay(t, B_t, theta, err_star, C0)


@dataclass
class BoundReport:
    m_t: int
    eps_t: float
    excess_risk_bound: float
    label_complexity_bound: float
    theta_hat: float
    indicative: bool = True


def bound_report(t, delay, theta_hat, err_star=0.0, C0=2.0):
    m = int(effective_counts(t, delay)[-1])
    if m < 1:
        raise ValueError("bounds need m_t >= 1")
    return BoundReport(
        m_t=m,
        eps_t=_eps(m, C0),
        excess_risk_bound=generalization_bound(m, C0),
        label_complexity_bound=label_complexity_bound(t, delay, theta_hat, err_star, C0),
        theta_hat=theta_hat,
    )


# -- disagreement coefficient ------------------------------------------------

DEFAULT_R_GRID = tuple(2.0 ** -i for i in range(1, 11))


@dataclass
class ThetaEstimate:
    theta: float
    r_grid: np.ndarray
    masses: np.ndarray
    ratios: np.ndarray
    ci_halfwidth: float
    n_mc: int = 0
    extra: dict = field(default_factory=dict)


def uniform_sampler(lo=0.0, hi=1.0):
    return lambda rng, n: rng.uniform(lo, hi, n)


def estimate_disagreement_coefficient(hclass, sampler, h_star, r_grid=DEFAULT_R_GRID,
                                      n_mc=100_000, seed=0, distances=None, chunk=2000):
    """Monte-Carlo estimate of sup_r P(X in DIS(h*, r)) / r over ``r_grid``.

    ``distances[h]`` is P(h(X) != h*(X)); when omitted it is estimated from
    an independent sample of the same size.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        raise ValueError("r_grid is empty")
    if np.any(r_grid <= 0) or np.any(r_grid > 1):
        raise ValueError("radii must lie in (0, 1]")
    if distances is None:
        xs = sampler(substream(seed, "theta-dist"), n_mc)
        dis = np.zeros(len(hclass))
        for lo in range(0, n_mc, chunk):
            x = xs[lo:lo + chunk]
            preds = hclass.predict_all(x)
            dis += (preds != preds[h_star]).sum(axis=1)
        distances = dis / n_mc
    distances = np.asarray(distances, dtype=float)
    within = [np.flatnonzero(distances <= r) for r in r_grid]
    xs = sampler(substream(seed, "theta-mc"), n_mc)
    hits = np.zeros(r_grid.size)
    for lo in range(0, n_mc, chunk):
        x = xs[lo:lo + chunk]
        preds = hclass.predict_all(x)
        disagree = preds != preds[h_star]
        for q, idx in enumerate(within):
            if idx.size:
                hits[q] += disagree[idx].any(axis=0).sum()
    masses = hits / n_mc
    ratios = masses / r_grid
    best = int(np.argmax(ratios))
    q = masses[best]
    ci = 1.96 * math.sqrt(q * (1.0 - q) / n_mc) / r_grid[best]
    return ThetaEstimate(float(ratios[best]), r_grid, masses, ratios, ci, n_mc)


# -- CSV export --------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _parse(v):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def export_csv(obj, path):
    """Write a speedup table, a CostSummary or a RunRecord's error curve.

    Column orders: speedup rows use ``SUMMARY_COLUMNS``, cost summaries
    ``COST_COLUMNS``, records the ``errors.csv`` schema. Reals are written
    with 17 significant digits so reading back is exact.
    """
    from paractive.engine.common import ERRORS_COLUMNS, RunRecord

    if isinstance(obj, RunRecord):
        cols, rows = ERRORS_COLUMNS, [dict(zip(ERRORS_COLUMNS, r)) for r in obj.errors]
    elif isinstance(obj, CostSummary):
        cols, rows = COST_COLUMNS, [asdict(obj)]
    else:
        cols, rows = SUMMARY_COLUMNS, list(obj)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in cols])


def read_csv(path):
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        return [{k: _parse(v) for k, v in row.items()} for row in r]


BOUND_COLUMNS = ("m_t", "eps_t", "excess_risk_bound", "label_complexity_bound", "theta_hat")


def write_run_summary(cost, path, bound=None):
    """summary.csv for a single run: cost columns plus optional bound side columns."""
    cols = list(COST_COLUMNS) + (list(BOUND_COLUMNS) if bound is not None else [])
    row = asdict(cost)
    if bound is not None:
        row.update(asdict(bound))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        w.writerow([_fmt(row[c]) for c in cols])
