import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paractive.learners import FiniteERM, KernelSVM, NumericError, SiftedExample, ThresholdClass
from paractive.rng import substream
from paractive.sampling import (
    P_FLOOR,
    ConstantRule,
    IwalConfig,
    MarginRule,
    QueryLog,
    iw_error,
    iwal_epsilon,
    iwal_gap,
    iwal_query_probability,
    margin_query_probability,
    query_equation,
    sift_batch,
    solve_query_equation,
    solve_query_equation_bisect,
)


# -- margin rule ---------------------------------------------------------------

def test_margin_zero_score_queries_always():
    for n in (0, 1, 10**6):
        assert margin_query_probability(0.0, n, 0.1) == 1.0


def test_margin_reference_values():
    assert margin_query_probability(1.0, 10000, 0.01) == pytest.approx(2 / (1 + math.e), rel=1e-14)
    assert margin_query_probability(1.0, 10000, 0.01) == pytest.approx(0.537883, abs=1e-6)
    assert margin_query_probability(2.0, 2500, 0.1) == pytest.approx(9.079e-5, rel=1e-3)
    assert margin_query_probability(-2.0, 2500, 0.1) == margin_query_probability(2.0, 2500, 0.1)


def test_margin_monotone_and_positive():
    f = np.linspace(0, 50, 200)
    p = margin_query_probability(f, 400, 0.1)
    assert np.all(np.diff(p) <= 0) and np.all(np.diff(p[:60]) < 0)
    assert np.all(p > 0)
    ns = [1, 10, 100, 1000]
    pn = [margin_query_probability(0.3, n, 0.1) for n in ns]
    assert all(a > b for a, b in zip(pn, pn[1:]))


def test_margin_errors():
    with pytest.raises(NumericError):
        margin_query_probability(np.nan, 10, 0.1)
    with pytest.raises(ValueError):
        margin_query_probability(1.0, 10, 0.0)


# -- importance-weighted error -------------------------------------------------

def test_iw_error_examples():
    assert iw_error([1, 0], [True, True], [0.5, 1.0], 2) == 1.0
    assert iw_error([1, 1, 1], [False] * 3, [0.5] * 3, 3) == 0.0
    assert iw_error([], [], [], 0) == 0.0
    with pytest.raises(ValueError):
        iw_error([1], [True], [0.0], 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.05, 1.0)), min_size=1, max_size=8))
def test_iw_error_unbiased_by_enumeration(rows):
    wrong = np.array([w for w, _ in rows])
    p = np.array([q for _, q in rows])
    m = len(rows)
    expect = 0.0
    for outcome in itertools.product([False, True], repeat=m):
        q = np.array(outcome)
        weight = np.prod(np.where(q, p, 1 - p))
        expect += weight * iw_error(wrong, q, p, m)
    assert abs(expect - wrong.mean()) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_iw_error_only_counts_first_m(m, seed):
    rng = np.random.default_rng(seed)
    n = m + 5
    wrong, q, p = rng.random(n) < 0.5, rng.random(n) < 0.5, rng.uniform(0.1, 1, n)
    assert iw_error(wrong, q, p, m) == iw_error(wrong[:m], q[:m], p[:m], m)


# -- gap ------------------------------------------------------------------------

def test_gap_cold_start_gives_full_query():
    erm = FiniteERM(ThresholdClass.grid(11))
    G, h, alt = iwal_gap(erm, 0.37, 0)
    assert G == 0.0 and alt is not None
    assert iwal_query_probability(G, 0) == 1.0


def test_gap_tied_hypotheses_is_zero():
    erm = FiniteERM(ThresholdClass([0.2, 0.6]))
    erm.update([SiftedExample(np.array([0.9]), 1, 1.0, 0)])
    G, h, alt = iwal_gap(erm, 0.4, 1)
    assert (h, alt, G) == (0, 1, 0.0)


def test_gap_no_disagreement_is_infinite():
    erm = FiniteERM(ThresholdClass([0.5]))
    G, _, alt = iwal_gap(erm, 0.1, 3)
    assert math.isinf(G) and alt is None
    assert iwal_query_probability(G, 3) == P_FLOOR


def test_gap_matches_brute_force():
    hclass = ThresholdClass.grid(21)
    erm = FiniteERM(hclass)
    rng = substream(4, "test-gap")
    xs, ys, ps = [], [], []
    for i in range(50):
        x = float(rng.random())
        y = 1 if x >= 0.4 else -1
        if rng.random() < 0.15:
            y = -y
        p = float(rng.uniform(0.2, 1.0))
        erm.add(SiftedExample(np.array([x]), y, p, i))
        xs.append(x), ys.append(y), ps.append(p)
    m = 64  # effective count includes unqueried examples
    for x in np.linspace(0.01, 0.99, 25):
        errs = []
        for t in hclass.thresholds:
            wrong = [(xi >= t) != (yi == 1) for xi, yi in zip(xs, ys)]
            errs.append(sum(w / p for w, p in zip(wrong, ps)) / m)
        errs = np.array(errs)
        h = int(np.argmin(errs))
        pred_h = x >= hclass.thresholds[h]
        dis = [k for k, t in enumerate(hclass.thresholds) if (x >= t) != pred_h]
        G_brute = min(errs[k] for k in dis) - errs[h]
        G, _, _ = iwal_gap(erm, x, m)
        assert G == pytest.approx(G_brute, abs=1e-12)
        assert G >= 0


# -- query probability ---------------------------------------------------------

def test_query_probability_reference_value():
    eps = iwal_epsilon(99, 2.0)
    s = iwal_query_probability(1.0, 99, IwalConfig(2.0))
    assert s == pytest.approx(0.7218, abs=5e-5)
    assert s == pytest.approx(solve_query_equation_bisect(1.0, eps), abs=1e-9)


def test_query_probability_case_split():
    cfg = IwalConfig(2.0)
    assert iwal_query_probability(0.0, 50, cfg) == 1.0
    eps = iwal_epsilon(50, 2.0)
    thr = math.sqrt(eps) + eps
    assert iwal_query_probability(thr, 50, cfg) == 1.0
    just_above = iwal_query_probability(thr + 1e-9, 50, cfg)
    assert just_above < 1.0 and abs(just_above - 1.0) < 1e-3
    with pytest.raises(ValueError):
        iwal_query_probability(-0.1, 50, cfg)
    with pytest.raises(ValueError):
        IwalConfig(1.5)


def test_query_probability_monotone_in_gap():
    cfg = IwalConfig(2.0)
    gs = np.linspace(0.7, 5.0, 50)
    ps = [iwal_query_probability(g, 99, cfg) for g in gs]
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_bisection_oracle_contract():
    eps = iwal_epsilon(99, 2.0)
    s = solve_query_equation_bisect(1.0, eps)
    assert abs(query_equation(s, eps) - 1.0) < 1e-8
    with pytest.raises(ValueError):
        solve_query_equation_bisect(0.0, eps)


def test_closed_form_agrees_with_bisection():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        eps = 10 ** rng.uniform(-5, -0.5)
        thr = math.sqrt(eps) + eps
        G = thr + 10 ** rng.uniform(-6, 1)
        a = solve_query_equation(G, eps)
        b = solve_query_equation_bisect(G, eps)
        assert abs(a - b) <= 1e-9
        assert abs(query_equation(a, eps) - G) < 1e-8 * max(1.0, G)


@pytest.mark.parametrize("seed", range(20))
def test_probability_floor_on_reachable_gaps(seed):
    # the floor holds for gaps the algorithm can produce, not for arbitrary G
    rng = substream(seed, "test-floor")
    hclass = ThresholdClass.grid(101)
    erm = FiniteERM(hclass)
    cfg = IwalConfig(2.0)
    for m in range(9):
        x = float(rng.random())
        y = (1 if x >= 0.5 else -1) * (-1 if rng.random() < 0.2 else 1)
        G, _, _ = iwal_gap(erm, x, m)
        p = iwal_query_probability(G, m, cfg)
        assert p >= (m + 1) ** -(m + 1) and p > 0
        if rng.random() < p:
            erm.add(SiftedExample(np.array([x]), y, p, m))


# -- sifting -------------------------------------------------------------------

def _svm(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    y = np.where(X[:, 0] > 0, 1, -1)
    svm = KernelSVM(2, gamma=0.5)
    svm.update([SiftedExample(X[i], int(y[i]), 1.0, i) for i in range(40)])
    return svm


def test_sift_passive_selects_everything():
    X = np.random.default_rng(0).normal(size=(30, 2))
    y = np.ones(30, dtype=int)
    sel, probs, coins, ops = sift_batch(_svm(), X, y, np.arange(30), ConstantRule(1.0), 100,
                                        np.random.default_rng(1))
    assert len(sel) == 30 and coins.all() and ops == 0
    assert all(ex.weight == 1.0 for ex in sel)


def test_sift_floor_count_is_binomial():
    n = 200_000
    X = np.zeros((n, 1))
    sel, probs, _, _ = sift_batch(None, X, np.ones(n, dtype=int), np.arange(n), ConstantRule(0.0),
                                  0, np.random.default_rng(2))
    assert np.all(probs == P_FLOOR)
    # Binomial(2e5, 1e-6): mean 0.2, P(count > 5) is below 1e-6
    assert len(sel) <= 5


def test_sift_weights_match_coin_probabilities():
    X = np.random.default_rng(3).normal(size=(200, 2))
    y = np.where(X[:, 1] > 0, 1, -1)
    sel, probs, coins, ops = sift_batch(_svm(), X, y, np.arange(200), MarginRule(0.1), 1000,
                                        np.random.default_rng(4))
    assert ops == _svm().score_cost() * 200
    for ex in sel:
        assert ex.p == probs[ex.index] and ex.weight == 1.0 / probs[ex.index]
    assert [ex.index for ex in sel] == np.flatnonzero(coins).tolist()


def test_sift_probabilities_ignore_batch_order():
    model = _svm(1)
    X = np.random.default_rng(5).normal(size=(64, 2))
    y = np.ones(64, dtype=int)
    perm = np.random.default_rng(6).permutation(64)
    _, p1, _, _ = sift_batch(model, X, y, np.arange(64), MarginRule(0.1), 500,
                             np.random.default_rng(0))
    _, p2, _, _ = sift_batch(model, X[perm], y[perm], perm, MarginRule(0.1), 500,
                             np.random.default_rng(0))
    assert np.array_equal(p1[perm], p2)


def test_sift_empty_slice():
    sel, probs, coins, ops = sift_batch(_svm(), np.empty((0, 2)), np.empty(0), np.empty(0),
                                        MarginRule(0.1), 10, np.random.default_rng(0))
    assert sel == [] and probs.size == 0 and ops == 0


# -- query log -----------------------------------------------------------------

def test_query_log_csv_round_trip(tmp_path):
    log = QueryLog()
    rng = np.random.default_rng(0)
    for t in range(100):
        log.append(t, t % 4, rng.random() < 0.3, float(rng.random()) / 3, int(rng.integers(0, 9)), t)
    path = tmp_path / "q.csv"
    log.to_csv(path)
    back = QueryLog.from_csv(path)
    assert back == log
    assert back.query_count() == log.query_count()
    assert open(path).readline().strip() == "t,node,queried,p,delay,m"
