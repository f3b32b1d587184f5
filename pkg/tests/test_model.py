import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goalsplit.model import (
    Problem,
    QoI,
    Signal,
    Term,
    build_splitting,
    evaluate_qoi,
    evaluate_signal,
    lipschitz_constants,
)


def _log_norm_by_difference(A, h=1e-7):
    # one-sided derivative of ||I + hA||_2 at h = 0
    return (np.linalg.norm(np.eye(A.shape[0]) + h * A, 2) - 1.0) / h


def test_term_kinds():
    t = np.array([0.0, 0.5, 2.0])
    assert np.allclose(Term("const", 3.0)(t), 3.0)
    assert np.allclose(Term("sin", 2.0, 10.0)(t), 2.0 * np.sin(10 * t))
    assert np.allclose(Term("cos", -1.0, 2.0)(t), -np.cos(2 * t))
    assert np.allclose(Term("poly", 0.5, 2)(t), 0.5 * t**2)


@pytest.mark.parametrize("kind,amp,rate", [("tan", 1.0, 1.0), ("sin", math.inf, 1.0), ("poly", 1.0, 1.5)])
def test_term_rejects_invalid(kind, amp, rate):
    with pytest.raises(ValueError):
        Term(kind, amp, rate)


def test_signal_shapes():
    Y = Signal([[Term("sin", 10, 1)], [Term("sin", 1, 10), Term("const", 2.0)]])
    assert evaluate_signal(Y, 0.3).shape == (2,)
    assert Y(np.linspace(0, 1, 5)).shape == (2, 5)
    assert Y(0.3)[1] == pytest.approx(math.sin(3.0) + 2.0)
    assert Y.component(0, 0.3) == pytest.approx(10 * math.sin(0.3))


def test_problem_validation():
    Y = Signal([[Term("const", 0.0)]] * 2)
    with pytest.raises(ValueError):
        Problem(np.eye(3), Y, np.zeros(2), (0, 1))
    with pytest.raises(ValueError):
        Problem(np.eye(2), Y, np.zeros(2), (1, 1))
    with pytest.raises(ValueError):
        Problem(np.array([[np.nan, 0], [0, 1]]), Y, np.zeros(2), (0, 1))
    p = Problem(np.eye(2), Y, np.zeros(2), (0, 2))
    assert (p.m, p.t0, p.tn) == (2, 0.0, 2.0)


def test_qoi_pads_end_time_with_zero_weight():
    q = QoI.from_terms([(0.5, [0, 1, 0, 0])], (0, 2.5))
    assert q.times == (0.5, 2.5)
    assert np.array_equal(q.weights[-1], np.zeros(4))


def test_qoi_merges_equal_times():
    q = QoI.from_terms([(2.0, [1, 0]), (3.0, [1, 0]), (3.0, [0, 2])], (0, 3))
    assert q.times == (2.0, 3.0)
    assert np.array_equal(q.weights, [[1, 0], [1, 2]])


@pytest.mark.parametrize("times", [(1.5, 0.5), (4.0,), (-0.1,)])
def test_qoi_rejects_bad_times(times):
    with pytest.raises(ValueError):
        QoI(times, np.ones((len(times), 1)), (0, 3))


def test_splitting_schemes():
    B = np.array([[5, 2, 0.0], [1, 2.5, 3], [4, 0, 1]])
    jac = build_splitting(B, "jacobi")
    assert np.array_equal(jac.B_hat, np.diag(np.diag(B)))
    gs = build_splitting(B, "gauss-seidel")
    assert np.array_equal(gs.B_hat, np.tril(B))
    full = build_splitting(B, "full")
    assert full.L2 == 0.0 and not np.any(full.B_check)
    custom = build_splitting(B, "custom", mask=np.eye(3))
    assert np.array_equal(custom.B_hat, jac.B_hat)
    with pytest.raises(ValueError):
        build_splitting(B, "custom", mask=0.5 * np.eye(3))
    with pytest.raises(ValueError):
        build_splitting(B, "sor")


def test_jacobi_constants_of_first_experiment():
    # B_hat = 10 I, B_check = [[0, -1], [1, 0]]: log norm -10, spectral norm 1
    s = build_splitting([[10, -1], [1, 10]], "jacobi")
    assert s.L1 == pytest.approx(-10.0, abs=1e-14)
    assert s.L2 == pytest.approx(1.0, abs=1e-14)
    assert s.contraction_ratio == pytest.approx(0.1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_lipschitz_constants_match_independent_routes(a, b):
    Bh, Bc = np.reshape(a, (3, 3)), np.reshape(b, (3, 3))
    L1, L2 = lipschitz_constants(Bh, Bc)
    assert L1 == pytest.approx(_log_norm_by_difference(-Bh), abs=1e-5)
    assert L2 == pytest.approx(math.sqrt(max(np.linalg.eigvals(Bc.T @ Bc).real)), abs=1e-9)


def test_evaluate_qoi_on_callable():
    q = QoI.from_terms([(2.0, [1, 0]), (3.0, [1, 2])], (0, 3))
    U = lambda t: np.array([t, t**2])
    assert evaluate_qoi(q, U) == pytest.approx(2.0 + 3.0 + 18.0)
