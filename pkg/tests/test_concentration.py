import math

import numpy as np
import pytest

from lpmix.concentration import (concentration_cell, empirical_concentration,
                                 esseen_bound, esseen_intermediate, iid_sum_samples,
                                 small_ball_probability)
from lpmix.measures import DiscreteMeasure, symmetrize, truncated_moments

from conftest import random_measure

RADEMACHER = DiscreteMeasure.rademacher()


# -- empirical concentration -------------------------------------------------


def test_constant_sample_concentrates_fully():
    assert empirical_concentration([2.0, 2.0, 2.0], 0.0) == 1.0
    assert empirical_concentration([2.0, 2.0, 2.0], 5.0) == 1.0


def test_singleton_windows():
    assert empirical_concentration(np.arange(10.0), 0.0) == 0.1


def test_half_window():
    assert empirical_concentration(np.arange(10.0), 4.5) == 0.5


def test_empirical_concentration_monotone_and_saturating(rng):
    samples = rng.standard_normal(500)
    lams = [0.0, 0.1, 0.5, 1.0, 3.0, 10.0]
    values = [empirical_concentration(samples, lam) for lam in lams]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert empirical_concentration(samples, float(np.ptp(samples))) == 1.0


def test_empirical_concentration_errors():
    with pytest.raises(ValueError):
        empirical_concentration([], 1.0)
    with pytest.raises(ValueError):
        empirical_concentration([1.0], -0.5)


# -- esseen bound --------------------------------------------------------------


def test_esseen_bound_rademacher():
    report = esseen_bound(RADEMACHER, 100, 2.0, A=1.0)
    assert report.bracket == 1.0
    assert report.esseen_value == pytest.approx(0.2, abs=1e-15)
    assert report.valid


def test_esseen_bound_degenerate_invalid():
    report = esseen_bound(DiscreteMeasure.delta(0.0), 50, 1.0)
    assert not report.bracket_ok and math.isnan(report.esseen_value)


def test_esseen_bound_mass_below_half():
    report = esseen_bound(RADEMACHER, 50, 0.5)
    assert not report.mass_ok and not report.valid


def test_esseen_value_finite_iff_bracket_positive(rng):
    for _ in range(40):
        nu = random_measure(rng)
        report = esseen_bound(nu, 100, float(rng.uniform(0.2, 4.0)))
        assert math.isfinite(report.esseen_value) == (report.bracket > 0.0)


# -- intermediate bound ----------------------------------------------------------


def test_esseen_intermediate_rademacher():
    # symmetrized rademacher has mass 1/2 at 0 and 1/4 at +/-2
    for n in (1, 10, 400):
        value = esseen_intermediate(RADEMACHER, 3.0, n, A=1.0)
        assert value == pytest.approx(3.0 / math.sqrt(2.0 * n), rel=1e-13)


def test_esseen_intermediate_point_mass_invalid():
    assert math.isnan(esseen_intermediate(DiscreteMeasure.delta(2.0), 1.0, 10))


def test_esseen_intermediate_eventually_linear_in_lambda(rng):
    # once the window swallows the symmetrized support, the moment saturates
    # at twice the variance and the bound grows linearly
    nu = random_measure(rng)
    span = 2.0 * float(np.max(np.abs(nu.points))) + 1.0
    lams = [span, 2 * span, 4 * span, 8 * span]
    values = [esseen_intermediate(nu, lam, 100) for lam in lams]
    if any(math.isnan(v) for v in values):
        pytest.skip("degenerate draw")
    ratios = [b / a for a, b in zip(values, values[1:])]
    assert all(r == pytest.approx(2.0, rel=1e-12) for r in ratios)


# -- chain consistency -------------------------------------------------------------


def test_bracket_below_symmetrized_moment_exact(rng):
    # the bound routed through the direct bracket is never better than what
    # the symmetrization inequality guarantees, checked exactly
    checked = 0
    for _ in range(100):
        nu = random_measure(rng)
        sym = symmetrize(nu)
        for t in (0.5, 1.0, 2.0):
            mass, first, second = truncated_moments(nu, t)
            if mass < 0.5:
                continue
            bracket = second - 2.0 * first ** 2
            _, _, sym_second = truncated_moments(sym, 2.0 * t)
            assert bracket <= sym_second
            checked += 1
    assert checked > 50


def test_small_ball_below_concentration_window(rng):
    # P(|S| <= t) is dominated by the best window of length 2t, exactly on
    # the empirical measure
    sums = iid_sum_samples(RADEMACHER, 50, 4000, rng)
    for t in (0.5, 1.0, 2.0):
        p_hat, _ = small_ball_probability(sums, t)
        assert p_hat <= empirical_concentration(sums, 2.0 * t)


# -- sampling and validity ----------------------------------------------------------


def test_iid_sum_samples_match_moments(rng):
    sums = iid_sum_samples(RADEMACHER, 100, 20000, rng)
    assert float(np.mean(sums)) == pytest.approx(0.0, abs=0.3)
    assert float(np.var(sums)) == pytest.approx(100.0, rel=0.05)
    assert np.all(sums % 2 == 0)  # lattice structure of rademacher sums


def test_bound_validity_small_scale(rng):
    laws = [RADEMACHER, DiscreteMeasure.centered_three_point(-1.2, 0.8, 0.4)]
    for law in laws:
        for n in (100, 1000):
            sums = iid_sum_samples(law, n, 20000, rng)
            for t in (1.0, 2.0):
                cell, se = concentration_cell(law, n, t, sums, A=2.0)
                if cell.valid:
                    assert cell.empirical_prob <= cell.esseen_value + 3.0 * se


def test_sqrt_n_scaling_bounded(rng):
    laws = [RADEMACHER, DiscreteMeasure.centered_three_point(-1.5, 1.0, 0.3)]
    for law in laws:
        scaled = []
        for n in (100, 1000, 10000):
            sums = iid_sum_samples(law, n, 20000, rng)
            scaled.append(math.sqrt(n) * empirical_concentration(sums, 1.0))
        assert max(scaled) <= 4.0
