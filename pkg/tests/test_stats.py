import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerlens.probing.stats import pooled_z, significance_test, stars_for


def z_reference(p1, p2, n):
    with mpmath.workdps(50):
        p1, p2 = mpmath.mpf(p1), mpmath.mpf(p2)
        pbar = (p1 + p2) / 2
        return (p1 - p2) / mpmath.sqrt(pbar * (1 - pbar) * 2 / n)


def test_equal_accuracies():
    assert significance_test(0.7, 0.7, 50) == (0.0, "none")


def test_strong_advantage():
    z, stars = significance_test(0.95, 0.50, 200)
    assert z == pytest.approx(10.078065197205377, rel=1e-12)
    assert stars == "***"


def test_small_advantage():
    z, stars = significance_test(0.55, 0.50, 100)
    assert z == pytest.approx(0.7079923254047887, rel=1e-12)
    assert stars == "none"


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_degenerate_pooled_rate(p):
    assert significance_test(p, p, 10) == (0.0, "none")


@pytest.mark.parametrize("z,stars", [
    (3.090, "***"), (math.nextafter(3.090, 0), "**"),
    (2.326, "**"), (math.nextafter(2.326, 0), "*"),
    (1.645, "*"), (math.nextafter(1.645, 0), "none"),
    (-5.0, "none"),
])
def test_thresholds_flip_exactly(z, stars):
    assert stars_for(z) == stars


def test_one_sided():
    z, stars = significance_test(0.2, 0.9, 200)
    assert z < -3.09 and stars == "none"


@pytest.mark.parametrize("args", [(0.5, 0.5, 0), (1.2, 0.5, 10), (0.5, -0.1, 10)])
def test_invalid_inputs(args):
    with pytest.raises(ValueError):
        pooled_z(*args)


prob = st.floats(0, 1)


@given(prob, prob, st.integers(1, 10_000))
def test_antisymmetry(a, b, n):
    assert pooled_z(a, b, n) == -pooled_z(b, a, n)


@given(prob, prob, prob, st.integers(1, 5000))
def test_star_monotone_in_main_accuracy(a, b, control, n):
    lo, hi = sorted((a, b))
    rank = {"none": 0, "*": 1, "**": 2, "***": 3}
    assert rank[significance_test(hi, control, n)[1]] >= rank[significance_test(lo, control, n)[1]]


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.integers(1, 5000))
def test_matches_high_precision(a, b, n):
    ref = z_reference(a, b, n)
    got = pooled_z(a, b, n)
    assert abs(got - float(ref)) <= 1e-9 * max(abs(float(ref)), 1e-300) or got == float(ref)
