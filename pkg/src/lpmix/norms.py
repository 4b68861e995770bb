"""Lp norms of weighted exchangeable sums.

The central object is psi(a) = || sum_i a_i Y_i ||_p for an exchangeable
sequence driven by a finite mixture.  Estimates come from Monte Carlo with a
delta-method standard error; for finite-support components the same quantity
is also available exactly by enumerating all outcomes, which is what the test
suite uses as its oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import CENTERING_TOL, DiscreteMeasure, d_metric
from .mixtures import RandomMeasure, exchangeable_matrix, norm_constants

MAX_ENUM_STATES = 2_000_000


@dataclass(frozen=True)
class NormEstimate:
    """Monte Carlo norm estimate; std_error is delta-method adjusted from the
    empirical variance of |sum|^p before the 1/p power."""

    value: float
    std_error: float
    n_samples: int
    p: float


def _validate_coefficients(a: Sequence[float]) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficient vector must be 1-D and nonempty")
    if not np.any(arr != 0.0):
        raise ValueError("coefficient vector must not be identically zero")
    return arr


def estimate_from_powers(powers: np.ndarray, p: float) -> NormEstimate:
    """Turn samples of |sum|^p into a norm estimate with standard error."""
    n = powers.size
    m = float(np.mean(powers))
    se_m = float(np.std(powers, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    if m <= 0.0:
        return NormEstimate(value=0.0, std_error=0.0, n_samples=n, p=p)
    value = m ** (1.0 / p)
    std_error = se_m * m ** (1.0 / p - 1.0) / p
    return NormEstimate(value=value, std_error=std_error, n_samples=n, p=p)


def psi_estimate_from_samples(values: np.ndarray, a: Sequence[float], p: float) -> NormEstimate:
    """Norm estimate from a pre-drawn reps x k exchangeable sample matrix."""
    a = _validate_coefficients(a)
    sums = values @ a
    return estimate_from_powers(np.abs(sums) ** p, p)


def psi_mc(mu: RandomMeasure, a: Sequence[float], p: float, n_samples: int,
           rng: np.random.Generator) -> NormEstimate:
    """Monte Carlo estimate of || sum_i a_i Y_i ||_p.

    Each replicate draws one mixture component and then k i.i.d. values from
    it.  The draws do not depend on a, so calls under the same generator state
    share sample paths (exact positive homogeneity in a).
    """
    a = _validate_coefficients(a)
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    _, values = exchangeable_matrix(mu, n_samples, a.size, rng)
    return psi_estimate_from_samples(values, a, p)


def shifted_norm_mc(t: float, nu, a: Sequence[float], p: float, n_samples: int,
                    rng: np.random.Generator) -> NormEstimate:
    """Monte Carlo estimate of || a_1 t + sum_{i>=2} a_i xi_i ||_p with
    xi i.i.d. from the single law nu."""
    a = _validate_coefficients(a)
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    offset = a[0] * t
    if a.size == 1:
        powers = np.full(n_samples, abs(offset) ** p)
        return estimate_from_powers(powers, p)
    tail = nu.quantile_array(rng.random((n_samples, a.size - 1)))
    sums = offset + tail @ a[1:]
    return estimate_from_powers(np.abs(sums) ** p, p)


# -- exact enumeration oracle ---------------------------------------------


def _enumerate_sum(law: DiscreteMeasure, coeffs: np.ndarray, offset: float,
                   max_states: int) -> tuple[np.ndarray, np.ndarray]:
    sums = np.array([offset])
    probs = np.array([1.0])
    for c in coeffs:
        if c == 0.0:
            continue
        sums = (sums[:, None] + c * law.points[None, :]).ravel()
        probs = (probs[:, None] * law.weights[None, :]).ravel()
        if probs.size > max_states:
            raise ValueError(f"enumeration exceeds {max_states} states")
    return sums, probs


def abs_moment_exact(law: DiscreteMeasure, a: Sequence[float], p: float,
                     offset: float = 0.0, max_states: int = MAX_ENUM_STATES) -> float:
    """E|offset + sum_i a_i xi_i|^p by full enumeration, xi i.i.d. from law."""
    a = np.asarray(a, dtype=np.float64)
    sums, probs = _enumerate_sum(law, a, offset, max_states)
    return float(np.sum(probs * np.abs(sums) ** p))


def psi_exact(mu: RandomMeasure | DiscreteMeasure, a: Sequence[float], p: float,
              max_states: int = MAX_ENUM_STATES) -> float:
    """Exact psi(a) for finite-support mixtures: the mixture average of the
    per-component enumerated p-th moments, then the 1/p power."""
    a = _validate_coefficients(a)
    if isinstance(mu, DiscreteMeasure):
        mu = RandomMeasure.deterministic(mu)
    moment = 0.0
    for w, law in zip(mu.atom_weights, mu.requires_discrete()):
        moment += float(w) * abs_moment_exact(law, a, p, max_states=max_states)
    return moment ** (1.0 / p)


def g_exact(t: float, law: DiscreteMeasure, a: Sequence[float], p: float,
            max_states: int = MAX_ENUM_STATES) -> float:
    """Exact shifted kernel E|a_1 t + sum_{i>=2} a_i xi_i|^p."""
    a = _validate_coefficients(a)
    return abs_moment_exact(law, a[1:], p, offset=float(a[0]) * t, max_states=max_states)


# -- inequality checks -----------------------------------------------------


@dataclass(frozen=True)
class TwoSidedRow:
    a_index: int
    psi: NormEstimate
    bound_lo: float
    bound_hi: float
    margin_lo: float
    margin_hi: float

    @property
    def ok(self) -> bool:
        return self.margin_lo >= 0.0 and self.margin_hi >= 0.0


@dataclass(frozen=True)
class TwoSidedReport:
    p: float
    A_const: float
    B_const: float
    rows: tuple[TwoSidedRow, ...]
    skipped_degenerate: bool = False

    @property
    def all_ok(self) -> bool:
        return not self.skipped_degenerate and all(r.ok for r in self.rows)


def check_two_sided(mu: RandomMeasure, p: float, C: float,
                    a_family: Sequence[Sequence[float]], n_samples: int,
                    rng: np.random.Generator) -> TwoSidedReport:
    """Compare psi estimates against the two-sided ell^2 bounds
    A ||a||_2 <= psi(a) <= B ||a||_2 with a 3-standard-error allowance."""
    constants = norm_constants(mu, p, C)
    if constants.degenerate:
        return TwoSidedReport(p=p, A_const=0.0, B_const=0.0, rows=(),
                              skipped_degenerate=True)
    rows = []
    for i, a in enumerate(a_family):
        a = _validate_coefficients(a)
        est = psi_mc(mu, a, p, n_samples, rng)
        norm2 = float(np.linalg.norm(a))
        lo = constants.A_const * norm2
        hi = constants.B_const * norm2
        rows.append(TwoSidedRow(
            a_index=i, psi=est, bound_lo=lo, bound_hi=hi,
            margin_lo=est.value - (lo - 3.0 * est.std_error),
            margin_hi=(hi + 3.0 * est.std_error) - est.value,
        ))
    return TwoSidedReport(p=p, A_const=constants.A_const, B_const=constants.B_const,
                          rows=tuple(rows))


@dataclass(frozen=True)
class MonotoneCheck:
    """Estimates of psi for a vector and its masked copy from shared draws.

    diff_power_* summarize mean and standard error of |S_full|^p - |S_masked|^p
    sample by sample; monotonicity holds when the mean is not significantly
    negative.
    """

    psi_full: NormEstimate
    psi_masked: NormEstimate
    diff_power_mean: float
    diff_power_se: float


def check_monotone(mu: RandomMeasure, p: float, a: Sequence[float],
                   mask: Sequence[int], n_samples: int,
                   rng: np.random.Generator) -> MonotoneCheck:
    """Zero out the coordinates missing from mask and compare the two norms on
    a common sample matrix."""
    a = _validate_coefficients(a)
    keep = np.zeros(a.size, dtype=bool)
    keep[np.asarray(list(mask), dtype=np.int64)] = True
    masked = np.where(keep, a, 0.0)
    _, values = exchangeable_matrix(mu, n_samples, a.size, rng)
    pow_full = np.abs(values @ a) ** p
    pow_masked = np.abs(values @ masked) ** p
    diff = pow_full - pow_masked
    if not np.any(masked != 0.0):
        psi_masked = NormEstimate(value=0.0, std_error=0.0, n_samples=n_samples, p=p)
    else:
        psi_masked = estimate_from_powers(pow_masked, p)
    return MonotoneCheck(
        psi_full=estimate_from_powers(pow_full, p),
        psi_masked=psi_masked,
        diff_power_mean=float(np.mean(diff)),
        diff_power_se=float(np.std(diff, ddof=1)) / math.sqrt(n_samples),
    )


@dataclass(frozen=True)
class EquicontinuityCheck:
    lhs: float
    rhs_bound: float
    std_error: float
    norm_nu: NormEstimate
    norm_lam: NormEstimate

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs_bound + 3.0 * self.std_error


def check_equicontinuity(nu: DiscreteMeasure, lam: DiscreteMeasure, t: float,
                         a: Sequence[float], p: float, n_samples: int,
                         rng: np.random.Generator) -> EquicontinuityCheck:
    """Shift-stability of the norm in the driving law.

    Both i.i.d. sequences are built from the same uniforms through the two
    quantile functions (comonotone coupling), under which the gap between the
    two shifted norms is bounded by d(nu, lam) * ||a||_2 pathwise up to Monte
    Carlo error.
    """
    a = _validate_coefficients(a)
    for law in (nu, lam):
        if abs(law.mean()) > CENTERING_TOL:
            raise ValueError("equicontinuity check requires centered laws")
    u = rng.random((n_samples, a.size))
    sums_nu = t + nu.quantile_array(u) @ a
    sums_lam = t + lam.quantile_array(u) @ a
    pow_nu = np.abs(sums_nu) ** p
    pow_lam = np.abs(sums_lam) ** p
    est_nu = estimate_from_powers(pow_nu, p)
    est_lam = estimate_from_powers(pow_lam, p)
    lhs = abs(est_nu.value - est_lam.value)

    # delta-method variance of the difference of the two 1/p powers, keeping
    # the covariance of the coupled samples
    m_nu, m_lam = float(np.mean(pow_nu)), float(np.mean(pow_lam))
    if m_nu > 0 and m_lam > 0:
        g_nu = m_nu ** (1.0 / p - 1.0) / p
        g_lam = m_lam ** (1.0 / p - 1.0) / p
        cov = np.cov(pow_nu, pow_lam, ddof=1)
        var = (g_nu ** 2 * cov[0, 0] - 2 * g_nu * g_lam * cov[0, 1]
               + g_lam ** 2 * cov[1, 1]) / n_samples
        std_error = math.sqrt(max(var, 0.0))
    else:
        std_error = est_nu.std_error + est_lam.std_error
    rhs = d_metric(nu, lam) * float(np.linalg.norm(a))
    return EquicontinuityCheck(lhs=lhs, rhs_bound=rhs, std_error=std_error,
                               norm_nu=est_nu, norm_lam=est_lam)
