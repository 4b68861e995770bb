import math

import numpy as np
import pytest

from lpmix.measures import DiscreteMeasure, ks_distance
from lpmix.mixtures import (MixtureFormatError, NormalLaw, RandomMeasure,
                            envelopes, exchangeable_matrix, format_mixture,
                            kp_condition_value, moment_consistency_check,
                            norm_constants, normalized_sum_samples, parse_mixture,
                            pooled_measure, sample_exchangeable)

from conftest import random_mixture, two_scale_mixture

RADEMACHER = DiscreteMeasure.rademacher()
RADEMACHER2 = DiscreteMeasure.rademacher(2.0)


def test_random_measure_validation():
    with pytest.raises(ValueError):
        RandomMeasure(np.array([0.5, 0.6]), (RADEMACHER, RADEMACHER2))
    with pytest.raises(ValueError):
        RandomMeasure(np.array([1.0]), ())
    with pytest.raises(TypeError):
        RandomMeasure(np.array([1.0]), ("not a law",))


# -- sampling ------------------------------------------------------------------


def test_single_component_sampling_is_iid_from_law(rng):
    mu = RandomMeasure.deterministic(RADEMACHER)
    values = sample_exchangeable(mu, 4000, rng)
    assert set(np.unique(values)) <= {-1.0, 1.0}
    assert abs(float(np.mean(values))) < 0.08


def test_delta_component_gives_constant_block(rng):
    mu = RandomMeasure.from_components([(1.0, DiscreteMeasure.delta(2.5))])
    assert np.array_equal(sample_exchangeable(mu, 7, rng), np.full(7, 2.5))


def test_two_component_variance_fraction(rng):
    # long-run fraction of blocks with sample variance near 4 tends to the
    # atom weight of the scaled component
    mu = two_scale_mixture()
    near_four = 0
    runs = 400
    for _ in range(runs):
        block = sample_exchangeable(mu, 60, rng)
        near_four += abs(float(np.var(block)) - 4.0) < 1.0
    assert near_four / runs == pytest.approx(0.5, abs=0.08)


def test_exchangeable_matrix_components_match_rows(rng):
    mu = two_scale_mixture()
    comp, values = exchangeable_matrix(mu, 500, 6, rng)
    spans = np.max(np.abs(values), axis=1)
    assert np.all(spans[comp == 1] == 2.0)
    assert np.all(spans[comp == 0] == 1.0)


# -- condition value -----------------------------------------------------------


def test_kp_condition_deterministic_component():
    for p in (1.0, 1.5, 1.9):
        mu = RandomMeasure.deterministic(RADEMACHER2)
        assert kp_condition_value(mu, p) == pytest.approx(2.0 ** p, rel=1e-14)


def test_kp_condition_two_components():
    mu = two_scale_mixture()
    assert kp_condition_value(mu, 1.0) == pytest.approx(1.5, abs=1e-15)


def test_kp_condition_degenerate_zero():
    mu = RandomMeasure.deterministic(DiscreteMeasure.delta(0.0))
    assert kp_condition_value(mu, 1.3) == 0.0


def test_kp_condition_power_monotonicity(rng):
    # Jensen: p -> (sum w sigma^p)^(1/p) is nondecreasing
    for _ in range(30):
        mu = random_mixture(rng)
        p, q = sorted(rng.uniform(1.0, 1.99, 2))
        lhs = kp_condition_value(mu, float(p)) ** (1.0 / p)
        rhs = kp_condition_value(mu, float(q)) ** (1.0 / q)
        assert lhs <= rhs + 1e-12


def test_kp_condition_rejects_bad_p():
    mu = two_scale_mixture()
    for p in (0.5, 2.0, 2.5):
        with pytest.raises(ValueError):
            kp_condition_value(mu, p)


# -- constants -----------------------------------------------------------------


def test_norm_constants_rademacher():
    rep = norm_constants(RandomMeasure.deterministic(RADEMACHER), 1.0, 1.0)
    assert rep.A_const == pytest.approx(1.0, abs=1e-15)
    assert rep.B_const == pytest.approx(1.0, abs=1e-15)
    assert not rep.degenerate


def test_norm_constants_degenerate():
    rep = norm_constants(RandomMeasure.deterministic(DiscreteMeasure.delta(0.0)), 1.0, 1.0)
    assert rep.degenerate and rep.A_const == 0.0 and rep.B_const == 0.0


def test_norm_constants_mixture():
    rep = norm_constants(two_scale_mixture(), 1.0, 1.0)
    assert rep.A_const == pytest.approx(1.5, abs=1e-15)
    assert rep.B_const == pytest.approx(1.5, abs=1e-15)


def test_norm_constants_ordering(rng):
    for _ in range(30):
        mu = random_mixture(rng)
        rep = norm_constants(mu, float(rng.uniform(1.0, 1.99)), 1.0 / math.sqrt(2.0))
        assert 0.0 < rep.A_const <= rep.B_const + 1e-12


# -- moment consistency ----------------------------------------------------------


def test_moment_consistency_single_component(rng):
    mu = RandomMeasure.deterministic(RADEMACHER2)
    for t in (0.5, 1.0, 3.0, math.inf):
        lhs, rhs = moment_consistency_check(mu, t)
        assert lhs == rhs


def test_moment_consistency_example():
    lhs, rhs = moment_consistency_check(two_scale_mixture(), math.inf)
    assert lhs == pytest.approx(2.5, abs=1e-15)
    assert rhs == pytest.approx(2.5, abs=1e-15)


def test_moment_consistency_below_support():
    lhs, rhs = moment_consistency_check(two_scale_mixture(), 0.5)
    assert (lhs, rhs) == (0.0, 0.0)


def test_moment_consistency_random_mixtures(rng):
    for _ in range(50):
        mu = random_mixture(rng, centered=False)
        for t in (1.0, 2.0, math.inf):
            lhs, rhs = moment_consistency_check(mu, t)
            assert abs(lhs - rhs) <= 1e-12


# -- envelopes --------------------------------------------------------------------


def test_envelopes_single_component():
    rep = envelopes(RandomMeasure.deterministic(RADEMACHER), [2.0])
    assert rep.K_t[0] == 1.0 and rep.eps_t[0] == 0.0


def test_envelopes_below_support():
    rep = envelopes(two_scale_mixture(), [0.5])
    assert rep.K_t[0] == 0.0


def test_envelopes_mixture_example():
    rep = envelopes(two_scale_mixture(), [1.5])
    assert rep.K_t[0] == 0.0 and rep.eps_t[0] == 1.0


def test_envelopes_monotone(rng):
    grid = [0.25, 0.5, 1.0, 1.5, 2.5, 4.0]
    for _ in range(20):
        rep = envelopes(random_mixture(rng, centered=False), grid)
        assert np.all(np.diff(rep.K_t) >= -1e-12)
        assert np.all(np.diff(rep.eps_t) <= 1e-12)


# -- pooled measure ----------------------------------------------------------------


def test_pooled_mean_is_weighted_average(rng):
    for _ in range(20):
        mu = random_mixture(rng, centered=False)
        pooled = pooled_measure(mu)
        target = float(np.sum(mu.atom_weights * np.array([l.mean() for l in mu.laws])))
        assert pooled.mean() == pytest.approx(target, abs=1e-12)


def test_pooled_centered_when_components_centered(rng):
    for _ in range(20):
        mu = random_mixture(rng, centered=True)
        assert abs(pooled_measure(mu).mean()) <= 1e-9


def test_marginal_identity_by_sampling(rng):
    # empirical law of exchangeable draws pooled over many blocks approaches
    # the pooled mixture measure
    mu = two_scale_mixture()
    values = np.concatenate([sample_exchangeable(mu, 10, rng) for _ in range(2000)])
    points, counts = np.unique(values, return_counts=True)
    empirical = DiscreteMeasure(points, counts / values.size)
    assert ks_distance(empirical, pooled_measure(mu)) <= 0.02


# -- normalized sums ----------------------------------------------------------------


def test_normalized_sums_deterministic_component(rng):
    mu = RandomMeasure.deterministic(DiscreteMeasure.delta(1.5))
    sums = normalized_sum_samples(mu, 16, 10, rng)
    assert np.allclose(sums, 16 * 1.5 / 4.0)


def test_normalized_sums_moments(rng):
    mu = two_scale_mixture()
    sums = normalized_sum_samples(mu, 400, 20000, rng)
    assert float(np.mean(sums)) == pytest.approx(0.0, abs=0.05)
    assert float(np.mean(sums ** 2)) == pytest.approx(2.5, abs=0.1)


# -- gaussian components --------------------------------------------------------------


def test_normal_law_moments_and_sampling(rng):
    law = NormalLaw(2.0)
    assert law.second_moment() == 4.0
    assert law.abs_first_moment() == pytest.approx(2.0 * math.sqrt(2.0 / math.pi), rel=1e-14)
    values = law.sample(20000, rng)
    assert float(np.std(values)) == pytest.approx(2.0, abs=0.06)
    mu = RandomMeasure.deterministic(law)
    with pytest.raises(TypeError):
        pooled_measure(mu)


# -- serialization -----------------------------------------------------------------


def test_mixture_round_trip(rng):
    for _ in range(10):
        mu = random_mixture(rng, centered=False)
        again = parse_mixture(format_mixture(mu))
        assert np.allclose(again.atom_weights, mu.atom_weights, atol=1e-15)
        for law_a, law_b in zip(mu.laws, again.laws):
            assert np.array_equal(law_a.points, law_b.points)
            assert np.allclose(law_a.weights, law_b.weights, atol=1e-15)


def test_mixture_parse_errors():
    with pytest.raises(MixtureFormatError, match="line 1"):
        parse_mixture("wrong header\n")
    with pytest.raises(MixtureFormatError, match="line 2"):
        parse_mixture("# random-measure v1\n0.0,1.0\n")
    with pytest.raises(MixtureFormatError, match="atom weight"):
        parse_mixture("# random-measure v1\natom -1\n0.0,1.0\n")
    with pytest.raises(MixtureFormatError, match="tolerance"):
        parse_mixture("# random-measure v1\natom 0.4\n0.0,1.0\n")
