"""The twelve acceptance criteria, one test each.

Every test prints the check's one-line verdict (also visible without ``-s``)
and then asserts it. Thresholds live in :mod:`paractive.acceptance`.
"""
import pytest

from paractive import acceptance as A


def _report(res, capsys):
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


def test_01_closed_form_solver(capsys):
    _report(A.check_solver(), capsys)


def test_02_case_split(capsys):
    _report(A.check_case_split(), capsys)


def test_03_probability_floor(capsys):
    _report(A.check_floor(), capsys)


def test_04_iw_error_unbiased(capsys):
    _report(A.check_unbiased(), capsys)


def test_05_degenerate_equivalences(capsys):
    _report(A.check_equivalences(), capsys)


def test_06_replica_consistency(capsys):
    _report(A.check_replicas(), capsys)


def test_07_svm_invariants(capsys):
    _report(A.check_svm_invariants(), capsys)


def test_08_nn_gradient(capsys):
    _report(A.check_nn_gradient(), capsys)


def test_09_delayed_iwal_label_trend(capsys):
    _report(A.check_label_trend(), capsys)


@pytest.mark.slow
def test_10_speedup_shape(capsys):
    _report(A.check_speedup(), capsys)


def test_11_label_savings(capsys):
    _report(A.check_label_savings(), capsys)


def test_12_disagreement_coefficient(capsys):
    _report(A.check_theta(), capsys)
