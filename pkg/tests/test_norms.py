import math

import numpy as np
import pytest

from lpmix.measures import DiscreteMeasure, d_metric
from lpmix.mixtures import NormalLaw, RandomMeasure
from lpmix.norms import (abs_moment_exact, check_equicontinuity, check_monotone,
                         check_two_sided, g_exact, psi_estimate_from_samples,
                         psi_exact, psi_mc, shifted_norm_mc)
from lpmix.rng import stream

from conftest import random_centered_measure, random_mixture, two_scale_mixture

RADEMACHER = DiscreteMeasure.rademacher()
RADEMACHER2 = DiscreteMeasure.rademacher(2.0)
RAD_MIX = RandomMeasure.deterministic(RADEMACHER)


# -- exact oracle ---------------------------------------------------------------


def test_psi_exact_rademacher_pair():
    # E|Y1 + Y2| enumerates to 1 over the four sign patterns
    assert psi_exact(RADEMACHER, [1.0, 1.0], 1.0) == pytest.approx(1.0, abs=1e-15)


def test_psi_exact_single_coefficient_scaling():
    for c in (0.5, -2.0, 3.0):
        for p in (1.0, 1.5):
            target = abs(c) * psi_exact(RADEMACHER2, [1.0], p)
            assert psi_exact(RADEMACHER2, [c], p) == pytest.approx(target, rel=1e-13)


def test_psi_exact_positive_homogeneity(rng):
    for _ in range(20):
        mu = random_mixture(rng)
        a = rng.standard_normal(4)
        lam = float(rng.uniform(0.2, 3.0))
        for p in (1.0, 1.5):
            assert psi_exact(mu, lam * a, p) == pytest.approx(
                lam * psi_exact(mu, a, p), rel=1e-12)


def test_psi_exact_guards():
    with pytest.raises(ValueError):
        psi_exact(RADEMACHER, [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        psi_exact(DiscreteMeasure.uniform_on(range(10)), np.ones(12), 1.0, max_states=10 ** 6)


def test_g_exact_shift_cases():
    # enumeration over xi = +/-1: E|1 + xi| = 1
    assert g_exact(1.0, RADEMACHER, [1.0, 1.0], 1.0) == pytest.approx(1.0, abs=1e-15)
    assert g_exact(0.3, DiscreteMeasure.delta(0.0), [2.0, 1.0], 1.5) == pytest.approx(
        0.6 ** 1.5, rel=1e-13)


# -- Monte Carlo estimator vs oracle ----------------------------------------------


def test_psi_mc_agrees_with_enumeration(rng):
    for trial in range(25):
        mu = random_mixture(rng, max_components=2, max_atoms=3)
        k = int(rng.integers(1, 9))
        a = rng.standard_normal(k)
        p = float(rng.uniform(1.0, 1.9))
        exact = psi_exact(mu, a, p)
        est = psi_mc(mu, a, p, 20000, stream(500, "oracle", trial))
        assert abs(est.value - exact) <= 4.0 * est.std_error + 1e-9


def test_psi_mc_rademacher_pair(rng):
    est = psi_mc(RAD_MIX, [1.0, 1.0], 1.0, 40000, rng)
    assert abs(est.value - 1.0) <= 4.0 * est.std_error


def test_psi_mc_gaussian_closed_form(rng):
    mu = RandomMeasure.deterministic(NormalLaw(1.0))
    a = np.array([1.0, -2.0, 2.0])
    est = psi_mc(mu, a, 1.0, 60000, rng)
    target = math.sqrt(2.0 / math.pi) * float(np.linalg.norm(a))
    assert abs(est.value - target) <= 4.0 * est.std_error


def test_psi_mc_homogeneity_same_seed():
    a = np.array([0.7, -1.2, 0.4])
    est1 = psi_mc(two_scale_mixture(), a, 1.5, 2000, stream(7, "h"))
    est2 = psi_mc(two_scale_mixture(), 3.0 * a, 1.5, 2000, stream(7, "h"))
    assert est2.value == pytest.approx(3.0 * est1.value, rel=1e-12)


def test_psi_mc_validation(rng):
    with pytest.raises(ValueError):
        psi_mc(RAD_MIX, [0.0, 0.0], 1.0, 1000, rng)
    with pytest.raises(ValueError):
        psi_mc(RAD_MIX, [1.0], 1.0, 50, rng)


def test_permutation_identity_on_shared_matrix(rng):
    # permuting the coefficients together with the sample columns is exact
    values = RADEMACHER2.quantile_array(rng.random((500, 5)))
    a = np.array([1.0, 2.0, -1.0, 0.5, 0.0])
    perm = np.array([3, 0, 4, 1, 2])
    est_direct = psi_estimate_from_samples(values[:, perm], a, 1.5)
    est_relabel = psi_estimate_from_samples(values, a[np.argsort(perm)], 1.5)
    assert est_direct.value == est_relabel.value


def test_std_error_is_delta_method(rng):
    est = psi_mc(RAD_MIX, [1.0, 1.0], 2.0 - 1e-9, 5000, rng)
    assert est.std_error > 0.0
    zero = psi_estimate_from_samples(np.zeros((200, 2)), [1.0, 1.0], 1.0)
    assert zero.value == 0.0 and zero.std_error == 0.0


# -- shifted norms ------------------------------------------------------------------


def test_shifted_norm_trivial_zero(rng):
    est = shifted_norm_mc(0.0, RADEMACHER, [1.0], 1.0, 1000, rng)
    assert est.value == 0.0


def test_shifted_norm_delta_law(rng):
    est = shifted_norm_mc(2.0, DiscreteMeasure.delta(0.0), [1.5, 1.0, 1.0], 1.0, 1000, rng)
    assert est.value == pytest.approx(3.0, abs=1e-12)


def test_shifted_norm_vs_exact_kernel(rng):
    for trial in range(10):
        nu = random_centered_measure(rng, max_atoms=3)
        a = rng.standard_normal(4)
        a[0] = 1.0
        t = float(rng.uniform(-1.5, 1.5))
        p = float(rng.uniform(1.0, 1.9))
        est = shifted_norm_mc(t, nu, a, p, 20000, stream(600, "g", trial))
        target = g_exact(t, nu, a, p) ** (1.0 / p)
        assert abs(est.value - target) <= 4.0 * est.std_error + 1e-9


# -- two-sided bounds ----------------------------------------------------------------


def test_two_sided_single_rademacher(rng):
    report = check_two_sided(RAD_MIX, 1.0, 1.0, [np.array([1.0])], 2000, rng)
    row = report.rows[0]
    assert report.A_const == pytest.approx(1.0) and report.B_const == pytest.approx(1.0)
    assert row.ok


def test_two_sided_scaling_preserves_verdict(rng):
    a = np.array([1.0, 0.5, -0.25])
    r1 = check_two_sided(two_scale_mixture(), 1.0, 1.0 / math.sqrt(2), [a], 2000,
                         stream(11, "s"))
    r2 = check_two_sided(two_scale_mixture(), 1.0, 1.0 / math.sqrt(2), [4.0 * a], 2000,
                         stream(11, "s"))
    assert r1.rows[0].ok == r2.rows[0].ok
    assert r2.rows[0].psi.value == pytest.approx(4.0 * r1.rows[0].psi.value, rel=1e-12)
    assert r2.rows[0].margin_lo == pytest.approx(4.0 * r1.rows[0].margin_lo, rel=1e-9)


def test_two_sided_basis_vectors_exchangeable(rng):
    k = 4
    basis = [np.eye(k)[i] for i in range(k)]
    exact = [psi_exact(two_scale_mixture(), e, 1.0) for e in basis]
    assert max(exact) - min(exact) <= 1e-12
    report = check_two_sided(two_scale_mixture(), 1.0, 1.0 / math.sqrt(2), basis,
                             4000, rng)
    values = [r.psi.value for r in report.rows]
    ses = [r.psi.std_error for r in report.rows]
    for v, s in zip(values, ses):
        assert abs(v - exact[0]) <= 4.0 * s


def test_two_sided_degenerate_skipped(rng):
    mu = RandomMeasure.deterministic(DiscreteMeasure.delta(0.0))
    report = check_two_sided(mu, 1.0, 1.0, [np.array([1.0])], 1000, rng)
    assert report.skipped_degenerate and not report.rows


# -- monotonicity -----------------------------------------------------------------


def test_monotone_full_mask_is_equality(rng):
    a = np.array([1.0, -0.5, 2.0])
    check = check_monotone(two_scale_mixture(), 1.0, a, [0, 1, 2], 2000, rng)
    assert check.psi_full.value == check.psi_masked.value
    assert check.diff_power_mean == 0.0


def test_monotone_single_coordinate(rng):
    a = np.array([1.5, -0.5, 2.0])
    check = check_monotone(two_scale_mixture(), 1.0, a, [0], 20000, rng)
    target = 1.5 * psi_exact(two_scale_mixture(), [1.0], 1.0)
    assert abs(check.psi_masked.value - target) <= 4.0 * check.psi_masked.std_error


def test_monotone_empty_mask_zero(rng):
    check = check_monotone(two_scale_mixture(), 1.0, np.array([1.0, 1.0]), [], 2000, rng)
    assert check.psi_masked.value == 0.0 and check.psi_masked.std_error == 0.0


def test_monotone_holds_with_mc_tolerance(rng):
    for trial in range(15):
        mu = random_mixture(rng, max_atoms=3)
        k = int(rng.integers(2, 7))
        a = rng.standard_normal(k)
        mask = [int(i) for i in np.nonzero(rng.random(k) < 0.6)[0]]
        check = check_monotone(mu, 1.0, a, mask, 4000, stream(700, "m", trial))
        assert check.diff_power_mean >= -3.0 * check.diff_power_se


def test_monotone_exact_enumeration(rng):
    # exhaustive sign-pattern enumeration gives exact psi values for small k
    for _ in range(10):
        mu = random_mixture(rng, max_atoms=3)
        k = int(rng.integers(2, 6))
        a = rng.standard_normal(k)
        keep = rng.random(k) < 0.5
        masked = np.where(keep, a, 0.0)
        if not np.any(masked != 0.0):
            continue
        for p in (1.0, 1.5):
            assert psi_exact(mu, a, p) >= psi_exact(mu, masked, p) - 1e-12


# -- equicontinuity ----------------------------------------------------------------


def test_equicontinuity_identical_laws(rng):
    check = check_equicontinuity(RADEMACHER, RADEMACHER, 0.7, [1.0, -1.0], 1.0,
                                 2000, rng)
    assert check.lhs == 0.0


def test_equicontinuity_rademacher_scaling_equality(rng):
    check = check_equicontinuity(RADEMACHER, RADEMACHER2, 0.0, [1.0], 1.0, 2000, rng)
    assert check.lhs == pytest.approx(1.0, abs=1e-12)
    assert check.rhs_bound == pytest.approx(1.0, abs=1e-12)
    assert check.ok


def test_equicontinuity_rejects_uncentered(rng):
    shifted = DiscreteMeasure.from_pairs([(0.0, 0.5), (1.0, 0.5)])
    with pytest.raises(ValueError):
        check_equicontinuity(shifted, RADEMACHER, 0.0, [1.0], 1.0, 1000, rng)


def test_equicontinuity_property_over_pairs(rng):
    for trial in range(40):
        nu = random_centered_measure(rng)
        lam = random_centered_measure(rng)
        k = int(rng.integers(1, 6))
        a = rng.standard_normal(k)
        t = float(rng.uniform(-2.0, 2.0))
        p = float(rng.uniform(1.0, 1.9))
        check = check_equicontinuity(nu, lam, t, a, p, 4000, stream(800, "e", trial))
        assert check.lhs <= check.rhs_bound + 3.0 * check.std_error + 1e-9


# -- kernel class equicontinuity ------------------------------------------------------


def test_g_kernel_chained_bound(rng):
    # |g(t,nu) - g(t',nu')| / psi^p is controlled by the product of the
    # displacement and the local-size factor; the constant is a desk
    # calibration, asserted as a fixed cap
    mu = two_scale_mixture()
    worst = 0.0
    for trial in range(40):
        nu = random_centered_measure(rng, max_atoms=3)
        nu2 = random_centered_measure(rng, max_atoms=3)
        k = int(rng.integers(2, 5))
        a = rng.standard_normal(k)
        t1, t2 = rng.uniform(-2.0, 2.0, 2)
        p = float(rng.uniform(1.0, 1.9))
        gap = abs(g_exact(t1, nu, a, p) - g_exact(t2, nu2, a, p))
        psi_p = psi_exact(mu, a, p) ** p
        zero = DiscreteMeasure.delta(0.0)
        move = abs(t1 - t2) + d_metric(nu, nu2)
        size = (2.0 * abs(t1) + 2.0 * d_metric(nu, zero) + move) ** (p - 1.0)
        if move < 1e-9:
            continue
        worst = max(worst, gap / (psi_p * move * size))
    assert 0.0 < worst <= 10.0


def test_abs_moment_exact_skips_zero_coefficients():
    law = DiscreteMeasure.uniform_on(range(6))
    # 13 coefficients but only 3 nonzero: enumeration must not blow up
    coeffs = np.zeros(13)
    coeffs[[2, 5, 11]] = 1.0
    value = abs_moment_exact(law, coeffs, 1.0, max_states=6 ** 3 + 1)
    assert value > 0.0
