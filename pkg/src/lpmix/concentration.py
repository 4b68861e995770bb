"""Concentration functions of i.i.d. sums and the Esseen-type upper bounds.

The empirical side works on raw samples; the bound side is exact arithmetic on
a finite-support law (truncated moments, symmetrized truncated moments), so
the "bound holds" assertions are a pure Monte Carlo statement about the
left-hand side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .measures import DiscreteMeasure, symmetrize, truncated_moments

DEFAULT_A_MAIN = 2.0
DEFAULT_A_INTER = 2.0


@dataclass(frozen=True)
class ConcentrationReport:
    """One (law, n, t) cell: empirical small-ball probability next to the
    Esseen-type bound and its preconditions."""

    n: int
    t: float
    empirical_prob: float
    esseen_value: float
    bracket: float
    mass_ok: bool
    bracket_ok: bool

    @property
    def valid(self) -> bool:
        return self.mass_ok and self.bracket_ok


def empirical_concentration(samples, lam: float) -> float:
    """Largest fraction of the sample carried by a closed window [x, x+lam];
    the maximizing window starts at a sample point."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    if lam < 0:
        raise ValueError("window length must be nonnegative")
    s = np.sort(samples)
    upper = np.searchsorted(s, s + lam, side="right")
    counts = upper - np.arange(s.size)
    return float(np.max(counts)) / s.size


def esseen_bound(F: DiscreteMeasure, n: int, t: float, A: float = DEFAULT_A_MAIN) -> ConcentrationReport:
    """Bound A*t/sqrt(n) * bracket^(-1/2) with bracket the truncated variance
    combination; only claimed when the truncated mass is at least 1/2 and the
    bracket is positive, otherwise flagged invalid."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not t > 0:
        raise ValueError("t must be positive")
    if not A > 0:
        raise ValueError("A must be positive")
    mass, first, second = truncated_moments(F, t)
    bracket = second - 2.0 * first ** 2
    mass_ok = mass >= 0.5
    bracket_ok = bracket > 0.0
    value = A * t / math.sqrt(n) / math.sqrt(bracket) if bracket_ok else math.nan
    return ConcentrationReport(n=n, t=t, empirical_prob=math.nan,
                               esseen_value=value, bracket=bracket,
                               mass_ok=mass_ok, bracket_ok=bracket_ok)


def esseen_intermediate(F: DiscreteMeasure, lam: float, n: int,
                        A: float = DEFAULT_A_INTER) -> float:
    """Concentration-function bound A*lam/sqrt(n) scaled by the inverse root
    of the symmetrized truncated second moment; NaN when that moment vanishes."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    sym = symmetrize(F)
    _, _, second = truncated_moments(sym, lam)
    if second <= 0.0:
        return math.nan
    return A * lam / math.sqrt(n) / math.sqrt(second)


def iid_sum_samples(law: DiscreteMeasure, n_terms: int, reps: int,
                    rng: np.random.Generator) -> np.ndarray:
    """reps draws of X_1 + ... + X_n for i.i.d. X from a finite-support law,
    via one multinomial atom count per replicate."""
    if n_terms < 1 or reps < 1:
        raise ValueError("n_terms and reps must be positive")
    pvals = law.weights / float(np.sum(law.weights))
    counts = rng.multinomial(n_terms, pvals, size=reps)
    return counts @ law.points


def small_ball_probability(sums: np.ndarray, t: float) -> tuple[float, float]:
    """Empirical P(|S| <= t) with its binomial standard error."""
    hits = np.abs(sums) <= t
    p_hat = float(np.mean(hits))
    se = math.sqrt(p_hat * (1.0 - p_hat) / sums.size)
    return p_hat, se


def concentration_cell(law: DiscreteMeasure, n: int, t: float, sums: np.ndarray,
                       A: float = DEFAULT_A_MAIN) -> tuple[ConcentrationReport, float]:
    """Fill one report row from precomputed sum samples; returns the report
    and the Monte Carlo standard error of the empirical probability."""
    report = esseen_bound(law, n, t, A)
    p_hat, se = small_ball_probability(sums, t)
    return replace(report, empirical_prob=p_hat), se
