import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from badgesteer.stats import betainc, betainc_upper, f_sf, format_pvalue, one_way_anova

EXAMPLE = [[1, 2, 3], [2, 3, 4], [4, 5, 6]]


def _betainc_series(a, b, x, dps=60):
    """I_x(a, b) from the hypergeometric power series, at high precision."""
    with mpmath.workdps(dps):
        a, b, x = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(x)
        front = x**a * (1 - x) ** b / (a * mpmath.beta(a, b))
        return front * mpmath.hyp2f1(a + b, 1, a + 1, x)


def test_hand_computation():
    # grand mean 10/3; group means 2, 3, 5 -> SSB = 3*(16/9 + 1/9 + 25/9) = 14; SSW = 2+2+2 = 6
    f, p = one_way_anova(EXAMPLE)
    assert f == pytest.approx(7.0, rel=1e-9)
    # F(2, 6) tail has the closed form (1 + 2F/6)^-3
    assert p == pytest.approx((1 + 2 * 7.0 / 6) ** -3, rel=1e-12)
    assert p == pytest.approx(0.027, rel=1e-12)


def test_identical_groups_exact():
    res = one_way_anova([[0.1, 0.2, 0.7]] * 3)
    assert res.statistic == 0.0 and res.pvalue == 1.0
    res = one_way_anova([[5, 5], [5, 5]])
    assert (res.statistic, res.pvalue) == (0.0, 1.0)


def test_zero_within_variance():
    f, p = one_way_anova([[1, 1], [2, 2]])
    assert math.isinf(f) and p == 0.0


def test_degenerate_groups():
    with pytest.raises(ValueError, match="degenerate"):
        one_way_anova([[1], [2, 3]])
    with pytest.raises(ValueError):
        one_way_anova([[1, 2, 3]])


@pytest.mark.parametrize("seed", range(20))
def test_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    k = rng.integers(2, 6)
    groups = [rng.normal(rng.normal(0, 0.5), 1, rng.integers(2, 40)) for _ in range(k)]
    ours = one_way_anova(groups)
    ref = sps.f_oneway(*groups)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-9)
    assert ours.pvalue == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)


def test_shift_invariance():
    a = one_way_anova(EXAMPLE)
    b = one_way_anova([[v + 1e9 for v in g] for g in EXAMPLE])
    assert b.statistic == pytest.approx(a.statistic, rel=1e-6)


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (3, 1, 0.9), (1, 3, 0.05), (50, 0.5, 0.99), (2.5, 100, 1e-3)])
def test_betainc_vs_series(a, b, x):
    assert betainc(a, b, x) == pytest.approx(float(_betainc_series(a, b, x)), rel=1e-12)


def test_deep_tail_vs_series():
    # F = 1000 with df (2, 600): p far below scipy's reliable range
    d1, d2, f = 2, 600, 1000.0
    x = d2 / (d2 + d1 * f)
    exact = float(_betainc_series(d2 / 2, d1 / 2, x))
    assert f_sf(f, d1, d2) == pytest.approx(exact, rel=1e-10)


def test_upper_complement():
    for a, b, x in [(2, 3, 0.4), (10, 2, 0.7)]:
        assert betainc(a, b, x) + betainc_upper(a, b, x) == pytest.approx(1.0, rel=1e-14)


def test_betainc_domain():
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)
    with pytest.raises(ValueError):
        betainc(1, 1, 1.5)
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0


@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0.0, 1.0))
def test_betainc_bounds_and_symmetry(a, b, x):
    x = 1.0 - (1.0 - x)  # make x and 1 - x exact complements
    v = betainc(a, b, x)
    assert 0.0 <= v <= 1.0
    assert v + betainc(b, a, 1 - x) == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.01, 100), st.integers(1, 10), st.integers(1, 200))
def test_f_sf_monotone(f, d1, d2):
    assert f_sf(f * 1.5, d1, d2) <= f_sf(f, d1, d2) + 1e-15


def test_exact_permutation_p_of_example():
    # every distinct split of the 9 values into three labelled groups of 3
    values = [v for g in EXAMPLE for v in g]
    f_obs = one_way_anova(EXAMPLE).statistic
    hits = total = 0
    for first in itertools.combinations(range(9), 3):
        rest = [i for i in range(9) if i not in first]
        for second in itertools.combinations(rest, 3):
            third = [i for i in rest if i not in second]
            groups = [[values[i] for i in idx] for idx in (first, second, third)]
            total += 1
            hits += one_way_anova(groups).statistic >= f_obs - 1e-12
    assert total == 1680
    assert hits / total == pytest.approx(0.0464, abs=5e-4)


def test_format_pvalue():
    assert format_pvalue(0.027) == "0.027"
    assert format_pvalue(0.123456) == "0.1235"
    assert format_pvalue(1e-13) == "<1e-12"
