"""The release checks, shared by ``paractive verify`` and the test-suite.

Every check returns a :class:`Check`; none of them raises on a plain
failure, so a runner can report all of them in one pass.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from paractive.data import synth_checkerboard, synth_gaussian, synth_threshold
from paractive.engine import (
    ClusterConfig,
    DelayModel,
    run_asynchronous,
    run_delayed_iwal,
    run_iwal,
    run_sequential,
    run_synchronous,
)
from paractive.learners import KernelSVM, SiftedExample, ThresholdClass
from paractive.learners.nn import PARAMS, loss, loss_grad
from paractive.metrics import estimate_disagreement_coefficient, time_to_error, uniform_sampler
from paractive.rng import substream
from paractive.sampling import (
    P_FLOOR,
    IwalConfig,
    iw_error,
    iwal_epsilon,
    iwal_query_probability,
    query_equation,
    solve_query_equation,
    solve_query_equation_bisect,
)


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    skipped: bool = False
    info: dict = field(default_factory=dict)

    def line(self):
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        tag = f"{self.number:2d}" if self.number else " -"  # extras carry no criterion number
        return f"[{status}] {tag} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail, info = fn(*args, **kwargs)
            return Check(number, name, bool(passed), detail, time.perf_counter() - t0, info=info)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run
    return wrap


# -- 1, 2: query-probability solver ------------------------------------------

def _random_case(rng):
    """(G, eps) with G strictly above the full-query threshold and the root above P_FLOOR."""
    while True:
        m = int(math.exp(rng.uniform(math.log(10), math.log(1e5))))
        eps = iwal_epsilon(m, rng.uniform(2.0, 4.0))
        thr = math.sqrt(eps) + eps
        if thr < 1.0:
            return rng.uniform(thr, 1.0) + 1e-12, eps


@_timed(1, "closed-form query probability vs bisection")
def check_solver(seed=0, n=1000, match_tol=1e-9, residual_tol=1e-8, budget=1.0):
    rng = substream(seed, "check-solver")
    t0 = time.perf_counter()
    worst_gap = worst_res = 0.0
    for _ in range(n):
        G, eps = _random_case(rng)
        s = solve_query_equation(G, eps)
        s_ref = solve_query_equation_bisect(G, eps)
        worst_gap = max(worst_gap, abs(s - s_ref))
        worst_res = max(worst_res, abs(query_equation(s, eps) - G))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= match_tol and worst_res < residual_tol and elapsed < budget
    return ok, f"max |s - s_bisect| {worst_gap:.2e}, max residual {worst_res:.2e}", {
        "max_gap": worst_gap, "max_residual": worst_res, "elapsed": elapsed}


@_timed(2, "full-query case split and continuity")
def check_case_split(seed=0, n=1000):
    rng = substream(seed, "check-split")
    wrong = 0
    for q in range(n):
        m = int(rng.integers(1, 100_000))
        C0 = float(rng.uniform(2.0, 8.0))
        eps = iwal_epsilon(m, C0)
        thr = math.sqrt(eps) + eps
        G = thr if q % 10 == 0 else float(rng.uniform(0.0, 2.0 * thr))
        p = iwal_query_probability(G, m, IwalConfig(C0))
        if (p == 1.0) != (G <= thr):
            wrong += 1
    far = 0.0
    for _ in range(100):
        m = int(rng.integers(10, 100_000))
        eps = iwal_epsilon(m, 2.0)
        s = iwal_query_probability(math.sqrt(eps) + eps + 1e-9, m, IwalConfig(2.0))
        far = max(far, 1.0 - s)
    ok = wrong == 0 and far <= 1e-3
    return ok, f"{wrong} misclassified cases, max 1 - s just above threshold {far:.2e}", {
        "wrong": wrong, "max_drop": far}


# -- 3: floor on emitted probabilities ---------------------------------------

def _iwal_delays():
    return [
        DelayModel("unit"),
        DelayModel("fixed", B=2),
        DelayModel("fixed", B=4),
        DelayModel("random", dist="poisson", params={"lam": 3.0}, cap=20),
    ]


@_timed(3, "probability floor in delayed IWAL runs")
def check_floor(seeds=(0, 1, 2), n=2000, noise_rate=0.1):
    hclass = ThresholdClass.grid(101)
    worst = math.inf
    bad = 0
    rows = 0
    for seed in seeds:
        data = synth_threshold(seed, n, noise_rate)
        for delay in _iwal_delays():
            rec = run_delayed_iwal(data, hclass, delay, IwalConfig(2.0), seed=seed,
                                   checkpoint_every=n)
            for _, _, _, p, _, m in rec.querylog.rows():
                rows += 1
                if p < P_FLOOR:
                    bad += 1
                if 1 <= m <= 8:
                    floor = float(m) ** -m
                    worst = min(worst, p / floor)
                    if p < floor:
                        bad += 1
    return bad == 0, f"{bad} violations over {rows} decisions; min p / m^-m = {worst:.3g}", {
        "violations": bad}


# -- 4: unbiasedness of the importance-weighted error ------------------------

@_timed(4, "importance-weighted error is unbiased (exhaustive)")
def check_unbiased(seed=0, max_m=12, tol=1e-12):
    rng = substream(seed, "check-unbiased")
    worst = 0.0
    for m in range(1, max_m + 1):
        probs = rng.uniform(0.05, 1.0, m)
        mistakes = rng.random(m) < 0.5
        outcomes = ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(bool)
        weight = np.prod(np.where(outcomes, probs, 1.0 - probs), axis=1)
        values = np.array([iw_error(mistakes, q, probs, m) for q in outcomes])
        expected = float(np.sum(weight * values))
        worst = max(worst, abs(expected - float(np.mean(mistakes))))
    return worst <= tol, f"max |E[iw error] - error| = {worst:.2e} for m <= {max_m}", {
        "max_abs": worst}


# -- 5: degenerate equivalences ----------------------------------------------

def _svm_config(**kw):
    base = dict(k=1, B=1, warmstart_size=20, learner={"kind": "svm", "C": 1.0, "gamma": 0.5},
                rule={"kind": "margin", "eta": 0.1}, seed=3, checkpoint_examples=100)
    base.update(kw)
    return ClusterConfig(**base)


@_timed(5, "degenerate-equivalence traces")
def check_equivalences(n=1500):
    data = synth_gaussian(7, n, 2, 3.0)
    results = {}
    seq = run_sequential(_svm_config(), data, mode="active")
    sync = run_synchronous(_svm_config(), data)
    results["sync(k=1,B=1) == sequential-active"] = (
        sync.querylog == seq.querylog and sync.model.same_state(seq.model))
    asy = run_asynchronous(_svm_config(latency={"dist": "zero"}), data)
    results["async(k=1, zero latency) == sequential-active"] = (
        asy.querylog == seq.querylog and asy.model.same_state(seq.model))
    const = {"kind": "constant", "p": 1.0}
    passive = run_sequential(_svm_config(), data, mode="passive")
    p1 = run_synchronous(_svm_config(rule=const), data)
    results["p=1 (k=1,B=1) == sequential-passive"] = (
        p1.querylog == passive.querylog and p1.model.same_state(passive.model))
    p1k = run_synchronous(_svm_config(k=4, B=40, rule=const), data)
    results["p=1 (k=4,B=40) model == sequential-passive model"] = (
        p1k.model.same_state(passive.model) and p1k.querylog.queried == passive.querylog.queried
        and p1k.querylog.p == passive.querylog.p)
    thr = synth_threshold(11, 3000, 0.1)
    hclass = ThresholdClass.grid(101)
    d = run_delayed_iwal(thr, hclass, DelayModel("unit"), seed=5)
    u = run_iwal(thr, hclass, seed=5)
    results["delayed IWAL (tau=1) == IWAL"] = (
        d.querylog == u.querylog and np.array_equal(d.model.mistakes, u.model.mistakes))
    failed = [k for k, v in results.items() if not v]
    detail = "all 5 traces identical" if not failed else "differs: " + "; ".join(failed)
    return not failed, detail, {"results": results}


# -- 6: replica consistency --------------------------------------------------

@_timed(6, "async replica consistency (k=8)")
def check_replicas(n=20000, budget=30.0):
    t0 = time.perf_counter()
    data = synth_gaussian(21, n, 2, 3.0)
    cfg = ClusterConfig(k=8, B=8, warmstart_size=200,
                        learner={"kind": "svm", "C": 1.0, "gamma": 0.5},
                        rule={"kind": "margin", "eta": 0.1}, seed=4,
                        rates=[1.0, 0.5, 2.0, 1.0, 0.25, 1.5, 1.0, 0.75],
                        latency={"dist": "exponential", "mean": 50.0},
                        checkpoint_events=0)
    rec = run_asynchronous(cfg, data)
    elapsed = time.perf_counter() - t0
    first = rec.replicas[0]
    same = all(first.same_state(r) for r in rec.replicas[1:])
    counts = rec.broadcasts == rec.selected
    ok = same and counts and rec.complete and elapsed < budget
    detail = (f"replicas identical={same}, broadcasts {rec.broadcasts} vs queries "
              f"{rec.selected}, {elapsed:.1f}s")
    return ok, detail, {"elapsed": elapsed}


# -- 7: SVM invariants --------------------------------------------------------

@_timed(7, "SVM invariants after every internal step")
def check_svm_invariants(n=2000, seed=0, budget=60.0):
    from paractive.learners import InvariantViolation

    t0 = time.perf_counter()
    data = synth_gaussian(seed, n, 2, 2.0)
    rng = substream(seed, "check-svm-p")
    probs = rng.uniform(0.05, 1.0, n)
    svm = KernelSVM(2, C=1.0, gamma=0.5, check_invariants=True)
    try:
        for i in range(n):
            svm.update([SiftedExample(data.X[i], int(data.y[i]), float(probs[i]), i)])
    except InvariantViolation as exc:
        return False, f"violated at example {i}: {exc}", {}
    elapsed = time.perf_counter() - t0
    steps = len(svm.step_log)
    ok = elapsed < budget
    return ok, f"{steps} steps checked, {svm.n} support vectors, {elapsed:.1f}s", {
        "steps": steps, "elapsed": elapsed}


# -- 8: NN gradient -----------------------------------------------------------

def _flat(d):
    return np.concatenate([np.ravel(d[k]) for k in PARAMS])


def numeric_grad(params, x, y, weight, h=1e-4):
    out = {}
    for k in PARAMS:
        g = np.zeros(np.shape(params[k]))
        base = np.asarray(params[k], dtype=float)
        for idx in np.ndindex(base.shape):
            plus = {**params, k: base.copy()}
            minus = {**params, k: base.copy()}
            plus[k][idx] += h
            minus[k][idx] -= h
            g[idx] = (loss(plus, x, y, weight) - loss(minus, x, y, weight)) / (2.0 * h)
        out[k] = g
    return out


@_timed(8, "NN analytic gradient vs central differences")
def check_nn_gradient(seed=0, pairs=100, tol=1e-5):
    rng = substream(seed, "check-nn")
    worst = 0.0
    for _ in range(pairs):
        dim, hidden = int(rng.integers(1, 6)), int(rng.integers(1, 8))
        params = {"W1": rng.normal(0, 1, (hidden, dim)), "b1": rng.normal(0, 1, hidden),
                  "w2": rng.normal(0, 1, hidden), "b2": np.array(rng.normal())}
        x = rng.uniform(0, 1, dim)
        y = int(rng.choice([-1, 1]))
        weight = 1.0 / float(rng.uniform(0.1, 1.0))
        a = _flat(loss_grad(params, x, y, weight))
        num = _flat(numeric_grad(params, x, y, weight))
        scale = max(np.linalg.norm(a), np.linalg.norm(num), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - num)) / scale)
    return worst <= tol, f"max relative error {worst:.2e} over {pairs} pairs", {"max_rel": worst}


# -- 9: label-complexity trend ------------------------------------------------

LABEL_TREND_CLASS = 11  # {0.0, 0.1, ..., 1.0}


def label_trend_run(seed, t=5000, B=100, size=LABEL_TREND_CLASS):
    data = synth_threshold(seed, t, 0.0)
    test = synth_threshold(seed + 1000, 5000, 0.0)
    hclass = ThresholdClass.grid(size)
    delayed = run_delayed_iwal(data, hclass, DelayModel("fixed", B=B), IwalConfig(2.0),
                               seed=seed, test=test, checkpoint_every=t)
    plain = run_iwal(data, hclass, IwalConfig(2.0), seed=seed, test=test, checkpoint_every=t)
    q = np.asarray(delayed.querylog.queried)
    half = t // 2
    first, second = int(q[:half].sum()), int(q[half:].sum())
    return first, second, delayed.final_error(), plain.final_error()


@_timed(9, "delayed IWAL label-complexity trend")
def check_label_trend(seeds=(0, 1, 2, 3, 4), t=5000, B=100, ratio=0.75, slack=0.02,
                      size=LABEL_TREND_CLASS):
    ok_trend = 0
    ok_err = True
    parts = []
    for seed in seeds:
        first, second, e_d, e_u = label_trend_run(seed, t, B, size)
        r = second / first
        ok_trend += r < ratio
        ok_err &= e_d <= e_u + slack
        parts.append(f"{r:.3f}")
    ok = ok_trend >= 4 and ok_err
    detail = (f"second/first half query ratios [{', '.join(parts)}], {ok_trend}/5 below "
              f"{ratio}; delayed error within +{slack}: {ok_err}")
    return ok, detail, {"passing_seeds": ok_trend}


# -- 10: speedup shape ---------------------------------------------------------

SPEEDUP_KS = (1, 2, 4, 8, 16, 32, 64)


def speedup_sweep(seeds=(0, 1, 2), n=50000, B=640, warmstart=64, eta=0.1, target=0.15):
    """Unit-cost sync sweep over SPEEDUP_KS on the checkerboard mixture.

    Returns per-k mean time to ``target``, mean round duration and the mean
    sampling rate of the k = 1 runs.
    """
    times = {k: [] for k in SPEEDUP_KS}
    rounds = {k: [] for k in SPEEDUP_KS}
    rates = []
    for seed in seeds:
        data = synth_checkerboard(10 + seed, n)
        test = synth_checkerboard(100 + seed, 10000)
        for k in SPEEDUP_KS:
            cfg = ClusterConfig(k=k, B=B, warmstart_size=warmstart,
                                learner={"kind": "svm", "C": 1.0, "gamma": 2.0},
                                rule={"kind": "margin", "eta": eta}, seed=seed)
            rec = run_synchronous(cfg, data, test)
            t = time_to_error(rec, target)
            times[k].append(math.inf if t is None else t)
            rounds[k].append(np.mean([max(r["sift"]) + r["update"] for r in rec.rounds]))
            if k == 1:
                rates.append(rec.selected / len(rec.querylog))
    return ({k: float(np.mean(v)) for k, v in times.items()},
            {k: float(np.mean(v)) for k, v in rounds.items()}, float(np.mean(rates)))


@_timed(10, "speedup shape of the synchronous sweep")
def check_speedup(budget=600.0, **kw):
    t0 = time.perf_counter()
    times, rounds, rate = speedup_sweep(**kw)
    k_sat = int(1.0 / rate)
    below = [k for k in SPEEDUP_KS if k <= k_sat]
    monotone = all(times[b] <= times[a] + rounds[b] for a, b in zip(below, below[1:]))
    beyond = [k for k in SPEEDUP_KS if k > k_sat]
    if len(beyond) >= 2:
        a, b = beyond[-2], beyond[-1]
        last_gain = (times[a] - times[b]) / times[a]
    else:
        last_gain = 0.0
    elapsed = time.perf_counter() - t0
    ok = monotone and last_gain < 0.10 and elapsed < budget
    curve = ", ".join(f"{k}:{times[k] / 1e6:.2f}" for k in SPEEDUP_KS)
    detail = (f"sampling {rate:.3f} -> saturation k={k_sat}; time-to-target (1e6 ops) {curve}; "
              f"non-increasing to saturation={monotone}; last doubling gain {last_gain:+.1%}")
    return ok, detail, {"times": times, "rounds": rounds, "rate": rate, "elapsed": elapsed}


# -- 11: active vs passive labels -------------------------------------------

def label_savings_run(seed, n=5000, dim=10, separation=4.0, gamma=0.05, eta=0.1,
                      warmstart=20, slack=0.005):
    data = synth_gaussian(seed, n, dim, separation)
    test = synth_gaussian(1000 + seed, 5000, dim, separation)
    cfg = ClusterConfig(k=1, B=1, warmstart_size=warmstart,
                        learner={"kind": "svm", "C": 1.0, "gamma": gamma},
                        rule={"kind": "margin", "eta": eta}, seed=seed,
                        checkpoint_examples=100)
    passive = run_sequential(cfg, data, test, "passive")
    active = run_sequential(cfg, data, test, "active")
    target = passive.final_error() + slack
    labels = next((q for _, _, e, q in active.errors if e <= target), None)
    return labels, passive.errors[-1][3], passive.final_error(), active.final_error()


@_timed(11, "active SVM label savings vs passive")
def check_label_savings(seeds=(0, 1, 2, 3, 4), fraction=0.5):
    wins = 0
    parts = []
    for seed in seeds:
        labels, passive_labels, _, _ = label_savings_run(seed)
        ok = labels is not None and labels <= fraction * passive_labels
        wins += ok
        parts.append(f"{labels}/{passive_labels}")
    return wins >= 4, f"labels to passive error: {', '.join(parts)}; {wins}/5 seeds", {
        "wins": wins}


# -- 12: disagreement coefficient ---------------------------------------------

@_timed(12, "disagreement coefficient of dense thresholds")
def check_theta(n_mc=100_000, seed=1, lo=1.8, hi=2.2):
    hclass = ThresholdClass.grid(1001)
    est = estimate_disagreement_coefficient(hclass, uniform_sampler(), 500, n_mc=n_mc,
                                            seed=seed)
    ok = lo <= est.theta <= hi
    return ok, f"theta_hat {est.theta:.3f} +/- {est.ci_halfwidth:.3f}", {"theta": est.theta}


CHECKS = (
    check_solver,
    check_case_split,
    check_floor,
    check_unbiased,
    check_equivalences,
    check_replicas,
    check_svm_invariants,
    check_nn_gradient,
    check_label_trend,
    check_speedup,
    check_label_savings,
    check_theta,
)


def check_mnist_smoke(n_train=3000, n_test=1000):
    """Short synchronous SVM run on the real digits task; skipped without the files."""
    from paractive.config import RunConfig, load_datasets

    t0 = time.perf_counter()
    cfg = RunConfig(data={"source": "mnist", "positive": [3, 1], "negative": [5, 7],
                          "scale": (-1.0, 1.0)})
    try:
        train, test = load_datasets(cfg)
    except FileNotFoundError as exc:
        return Check(0, "MNIST smoke run", False, f"skipped, {exc}", skipped=True)
    train = train.take(np.arange(min(n_train, len(train))))
    test = test.take(np.arange(min(n_test, len(test))))
    cc = ClusterConfig(k=4, B=400, warmstart_size=400,
                       learner={"kind": "svm", "C": 1.0, "gamma": 0.012},
                       rule={"kind": "margin", "eta": 0.1})
    rec = run_synchronous(cc, train, test)
    err = rec.final_error()
    return Check(0, "MNIST smoke run", err < 0.1, f"test error {err:.4f} on {len(test)} digits",
                 time.perf_counter() - t0)


def run_all(out=print):
    results = []
    for fn in CHECKS:
        res = fn()
        out(res.line())
        results.append(res)
    return results
