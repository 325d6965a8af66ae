import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pacresp import accounting as acc
from pacresp.core import InvalidParameter


def test_zero_budget_is_prior():
    assert acc.mia_bound_from_mi(0.0, 0.5) == 0.5
    assert acc.mia_bound_from_mi(0.0, 0.2) == pytest.approx(0.8)


def test_table_cell_examples():
    assert 100 * acc.mia_bound_from_mi(10 * 2.0**-8) == pytest.approx(63.9, abs=0.05)
    assert 100 * acc.mia_bound_from_mi(1000 * 2.0**-12) == pytest.approx(83.4, abs=0.05)
    assert 100 * acc.mia_bound_from_mi(10**6 * 2.0**-32) == pytest.approx(51.08, abs=0.005)


def test_vacuous_budget():
    assert acc.mia_bound_from_mi(10.0) == 1.0
    assert acc.mia_bound_from_mi(math.log(2) + 1e-9) == 1.0


@pytest.mark.parametrize("d0", [0.0, 1.0, -0.1])
def test_bad_prior(d0):
    with pytest.raises(InvalidParameter):
        acc.mia_bound_from_mi(0.1, d0)


def test_bound_solves_kl_equation():
    for B in (1e-9, 1e-4, 0.01, 0.3, 0.6):
        a = acc.mia_bound_from_mi(B)
        assert acc.bernoulli_kl(a, 0.5) <= B
        assert acc.bernoulli_kl(a + 2e-12, 0.5) > B - 1e-15


def test_bound_monotone_on_grid():
    grid = np.linspace(0, 0.75, 1000)
    vals = [acc.mia_bound_from_mi(B) for B in grid]
    assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))
    # continuity: no jump larger than the local slope allows
    assert max(np.diff(vals)) < 0.05


@given(st.floats(0, 2), st.floats(0, 2), st.floats(0.05, 0.95))
def test_bound_monotone_property(B1, B2, d0):
    lo, hi = sorted((B1, B2))
    assert acc.mia_bound_from_mi(lo, d0) <= acc.mia_bound_from_mi(hi, d0) + 1e-12


def test_dp_examples():
    assert 100 * acc.dp_mia_bound(1.0, 1e-5) == pytest.approx(73.11, abs=0.01)
    assert 100 * acc.dp_mia_bound(0.1, 1e-5) == pytest.approx(52.50, abs=0.01)
    assert acc.dp_mia_bound(0.0, 0.0) == 0.5


def test_dp_epsilon_examples():
    eps = acc.dp_epsilon_for_bound(acc.mia_bound_from_mi(10**6 * 2.0**-32), 1e-5)
    assert eps == pytest.approx(0.04, abs=0.005)
    assert acc.dp_epsilon_for_bound(0.5049, 1e-5) == pytest.approx(0.0198, abs=5e-4)
    assert acc.dp_epsilon_for_bound(acc.dp_mia_bound(1.0, 1e-5), 1e-5) == pytest.approx(1.0, abs=1e-12)


def test_distillation_headline():
    B = 210_000 * 2.0**-32
    assert 100 * acc.mia_bound_from_mi(B) == pytest.approx(50.49, abs=0.005)
    assert acc.dp_epsilon_equiv(B) == pytest.approx(0.02, abs=0.001)


@given(st.floats(1e-3, 10.0), st.floats(0.0, 0.1))
def test_dp_round_trip(eps, delta):
    assert acc.dp_epsilon_for_bound(acc.dp_mia_bound(eps, delta), delta) == pytest.approx(eps, abs=1e-9)


def test_dp_epsilon_out_of_range():
    with pytest.raises(InvalidParameter):
        acc.dp_epsilon_for_bound(1.0, 1e-5)
    with pytest.raises(InvalidParameter):
        acc.dp_epsilon_for_bound(0.3, 1e-5)


def test_dp_epsilon_equiv_edges():
    assert acc.dp_epsilon_equiv(0.0) == 0.0
    assert acc.dp_epsilon_equiv(5.0) == math.inf


@pytest.mark.parametrize(
    "b, eps, want",
    [(2.0**-8, 1.0, 28), (2.0**-4, 8.0, 11), (2.0**-4, 1.0, 1), (2.0**-12, 1.0, 454)],
)
def test_max_queries_examples(b, eps, want):
    assert acc.max_queries_for_epsilon(b, eps) == want


def test_max_queries_large():
    T = acc.max_queries_for_epsilon(2.0**-32, 1.0)
    assert abs(T - 477e6) <= 0.005 * 477e6


@given(st.floats(1e-6, 0.5), st.floats(0.05, 8.0))
def test_max_queries_is_maximal(b, eps):
    T = acc.max_queries_for_epsilon(b, eps)
    target = acc.dp_mia_bound(eps, 1e-5)
    if T >= 1:
        assert acc.mia_bound_from_mi(T * b) <= target
    assert acc.mia_bound_from_mi((T + 1) * b) > target


def test_static_three_steps():
    B2 = 0.01 + min(1.0, 0.01 + math.sqrt(0.02))
    B3 = B2 + min(1.0, 0.01 + math.sqrt(2 * B2))
    assert acc.static_composition_bound(0.01, 1.0, 3) == pytest.approx(B3, rel=1e-14)
    assert B2 == pytest.approx(0.16142, abs=1e-4)
    assert B3 == pytest.approx(0.7397, abs=1e-4)


def test_static_linear_when_equal():
    for T in (1, 2, 17, 10_000):
        assert acc.static_composition_bound(0.01, 0.01, T) == 0.01 * T
        assert acc.static_composition_bound(2.0**-8, 2.0**-8, T) == T * 2.0**-8


def test_static_uncapped_is_quadratic():
    r = acc.static_composition_bound(0.01, 1.0, 2**11, cap=False) / acc.static_composition_bound(
        0.01, 1.0, 2**10, cap=False
    )
    assert 3.6 <= r <= 4.4


def test_static_capped_turns_linear():
    path = acc.static_composition_path(0.01, 1.0, 200)
    tail = np.diff(path[10:])
    assert np.allclose(tail, 1.0)


def test_static_path_agrees_with_bound():
    for cap in (True, False):
        path = acc.static_composition_path(0.01, 0.5, 50, cap=cap)
        assert path[-1] == acc.static_composition_bound(0.01, 0.5, 50, cap=cap)


@given(st.floats(1e-4, 0.1), st.floats(1.01, 50.0), st.integers(2, 300))
def test_static_dominates_linear(b, ratio, T):
    assert acc.static_composition_bound(b, b * ratio, T) >= T * b * (1 - 1e-12)


def test_guarantee_table_shape():
    rows = acc.guarantee_table()
    assert len(rows) == 56
    assert rows[0].b_bits == pytest.approx(2.0**-4 / math.log(2))
    foot = acc.footer_rows()
    assert foot[1.0][:3] == [1, 28, 454] and foot[8.0][:3] == [11, 176, 2826]
