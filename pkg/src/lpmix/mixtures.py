"""Random measures as finite mixtures of component laws.

A :class:`RandomMeasure` draws one component law per realization; conditional
on the draw, observations are i.i.d. from that law.  All mixture-level
moments used by the norm bounds are exact finite sums over components, so the
only Monte Carlo error in the package comes from sampling, never from the
constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .measures import DiscreteMeasure, WEIGHT_TOL

MIXTURE_FILE_HEADER = "# random-measure v1"


class MixtureFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=False)
class NormalLaw:
    """Centered Gaussian component; only enters through the sampling paths."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def mean(self) -> float:
        return 0.0

    def second_moment(self) -> float:
        return self.sigma ** 2

    def abs_first_moment(self) -> float:
        return self.sigma * math.sqrt(2.0 / math.pi)

    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        return self.sigma * ndtri(u)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.sigma * rng.standard_normal(size)

    def is_degenerate_at_zero(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class RandomMeasure:
    """Finite mixture: positive atom weights summing to one, one law each."""

    atom_weights: np.ndarray
    laws: tuple

    def __post_init__(self):
        w = np.asarray(self.atom_weights, dtype=np.float64)
        object.__setattr__(self, "atom_weights", w)
        object.__setattr__(self, "laws", tuple(self.laws))
        if w.ndim != 1 or w.size == 0 or len(self.laws) != w.size:
            raise ValueError("need one law per atom weight")
        if np.any(w <= 0):
            raise ValueError("atom weights must be strictly positive")
        if abs(float(np.sum(w)) - 1.0) > WEIGHT_TOL:
            raise ValueError("atom weights must sum to 1 within 1e-12")
        for law in self.laws:
            if not hasattr(law, "sample"):
                raise TypeError(f"component law {law!r} cannot be sampled")
        object.__setattr__(self, "cum_atom_weights", np.cumsum(w))

    @classmethod
    def from_components(cls, components: Sequence[tuple[float, object]]) -> "RandomMeasure":
        weights = np.array([w for w, _ in components], dtype=np.float64)
        laws = tuple(law for _, law in components)
        return cls(weights, laws)

    @classmethod
    def deterministic(cls, law) -> "RandomMeasure":
        return cls(np.array([1.0]), (law,))

    @property
    def n_components(self) -> int:
        return self.atom_weights.size

    def draw_component(self, rng: np.random.Generator, size=None) -> np.ndarray | int:
        u = rng.random(size)
        idx = np.searchsorted(self.cum_atom_weights, u, side="left")
        return np.minimum(idx, self.n_components - 1)

    def is_degenerate(self) -> bool:
        return all(law.is_degenerate_at_zero() for law in self.laws)

    def requires_discrete(self) -> tuple[DiscreteMeasure, ...]:
        for law in self.laws:
            if not isinstance(law, DiscreteMeasure):
                raise TypeError("operation requires finite-support component laws")
        return self.laws

    def scaled(self, factor: float) -> "RandomMeasure":
        return RandomMeasure(self.atom_weights.copy(),
                             tuple(law.scaled(factor) for law in self.requires_discrete()))


@dataclass(frozen=True)
class ConstantsReport:
    """Norm-equivalence constants for weighted exchangeable sums."""

    p: float
    A_const: float
    B_const: float
    C_const: float
    kp_value: float
    degenerate: bool = False


@dataclass(frozen=True)
class EnvelopeReport:
    """Pointwise envelopes over components: worst-case truncated second
    moment from below, worst-case tail mass from above."""

    t_grid: np.ndarray
    K_t: np.ndarray
    eps_t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t_grid", np.asarray(self.t_grid, dtype=np.float64))
        object.__setattr__(self, "K_t", np.asarray(self.K_t, dtype=np.float64))
        object.__setattr__(self, "eps_t", np.asarray(self.eps_t, dtype=np.float64))
        if np.any(np.diff(self.K_t) < -1e-12):
            raise ValueError("K_t must be nondecreasing")
        if np.any(np.diff(self.eps_t) > 1e-12):
            raise ValueError("eps_t must be nonincreasing")


# -- operations ----------------------------------------------------------


def sample_exchangeable(mu: RandomMeasure, k: int, rng: np.random.Generator) -> np.ndarray:
    """One exchangeable block: a single component draw, then k i.i.d. values."""
    if k < 1:
        raise ValueError("k must be at least 1")
    j = int(mu.draw_component(rng))
    return np.asarray(mu.laws[j].sample(k, rng))


def exchangeable_matrix(mu: RandomMeasure, reps: int, k: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """reps independent exchangeable blocks of length k.

    Returns (component index per row, reps x k value matrix).  Values are
    produced through each component's quantile function from a shared uniform
    matrix, which is what makes coupled estimators possible downstream.
    """
    comp = np.asarray(mu.draw_component(rng, size=reps))
    u = rng.random((reps, k))
    values = np.empty((reps, k))
    for j, law in enumerate(mu.laws):
        rows = comp == j
        if np.any(rows):
            values[rows] = law.quantile_array(u[rows])
    return comp, values


def kp_condition_value(mu: RandomMeasure, p: float) -> float:
    """Mixture average of (second moment)^(p/2); the dichotomy functional."""
    if not 1.0 <= p < 2.0:
        raise ValueError("p must lie in [1, 2)")
    seconds = np.array([law.second_moment() for law in mu.laws])
    return float(np.sum(mu.atom_weights * seconds ** (p / 2.0)))


def norm_constants(mu: RandomMeasure, p: float, C: float) -> ConstantsReport:
    """Two-sided constants: A from mixture first absolute moments scaled by C,
    B from mixture second moments."""
    if not 1.0 <= p < 2.0:
        raise ValueError("p must lie in [1, 2)")
    if not C > 0:
        raise ValueError("C must be positive")
    kp_value = kp_condition_value(mu, p)
    if mu.is_degenerate():
        return ConstantsReport(p=p, A_const=0.0, B_const=0.0, C_const=C,
                               kp_value=kp_value, degenerate=True)
    firsts = np.array([law.abs_first_moment() for law in mu.laws])
    a_const = C * float(np.sum(mu.atom_weights * firsts ** p)) ** (1.0 / p)
    b_const = kp_value ** (1.0 / p)
    return ConstantsReport(p=p, A_const=a_const, B_const=b_const, C_const=C,
                           kp_value=kp_value, degenerate=False)


def pooled_measure(mu: RandomMeasure) -> DiscreteMeasure:
    """Marginal law of one observation: mixture of the component laws."""
    pairs = []
    for w, law in zip(mu.atom_weights, mu.requires_discrete()):
        pairs.extend(zip(law.points, w * law.weights))
    return DiscreteMeasure.from_pairs(pairs)


def moment_consistency_check(mu: RandomMeasure, t: float) -> tuple[float, float]:
    """Truncated second moment computed two ways: mixture-averaged over
    components versus directly on the pooled marginal law.  Equal for every
    finite mixture; returned as (lhs, rhs) so callers can assert it."""
    if not (t == math.inf or t > 0):
        raise ValueError("t must be positive or infinity")
    lhs = 0.0
    for w, law in zip(mu.atom_weights, mu.requires_discrete()):
        mask = np.abs(law.points) < t
        lhs += w * float(np.sum(law.weights[mask] * law.points[mask] ** 2))
    pooled = pooled_measure(mu)
    mask = np.abs(pooled.points) < t
    rhs = float(np.sum(pooled.weights[mask] * pooled.points[mask] ** 2))
    return lhs, rhs


def envelopes(mu: RandomMeasure, t_grid: Sequence[float]) -> EnvelopeReport:
    """Exact per-grid-point envelopes K_t (inf of truncated second moments)
    and eps_t (sup of tail masses) over the components."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be positive and strictly increasing")
    laws = mu.requires_discrete()
    K = np.empty(t_grid.size)
    eps = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        trunc = [float(np.sum(law.weights[np.abs(law.points) < t] * law.points[np.abs(law.points) < t] ** 2))
                 for law in laws]
        tails = [float(np.sum(law.weights[np.abs(law.points) >= t])) for law in laws]
        K[i] = min(trunc)
        eps[i] = max(tails)
    return EnvelopeReport(t_grid=t_grid, K_t=K, eps_t=eps)


def normalized_sum_samples(mu: RandomMeasure, n_terms: int, reps: int,
                           rng: np.random.Generator) -> np.ndarray:
    """reps draws of (Y_1 + ... + Y_n)/sqrt(n) for exchangeable Y.

    Conditionally on the component, the sum of n i.i.d. finite-support draws
    is a weighted atom count, so one multinomial per replicate row replaces n
    individual draws.
    """
    if n_terms < 1 or reps < 1:
        raise ValueError("n_terms and reps must be positive")
    laws = mu.requires_discrete()
    comp = np.asarray(mu.draw_component(rng, size=reps))
    out = np.empty(reps)
    root = math.sqrt(n_terms)
    for j, law in enumerate(laws):
        rows = np.nonzero(comp == j)[0]
        if rows.size == 0:
            continue
        pvals = law.weights / float(np.sum(law.weights))
        counts = rng.multinomial(n_terms, pvals, size=rows.size)
        out[rows] = counts @ law.points / root
    return out


# -- serialization --------------------------------------------------------


def format_mixture(mu: RandomMeasure) -> str:
    lines = [MIXTURE_FILE_HEADER]
    for w, law in zip(mu.atom_weights, mu.requires_discrete()):
        lines.append(f"atom {float(w)!r}")
        lines += [f"{float(p)!r},{float(q)!r}" for p, q in zip(law.points, law.weights)]
    return "\n".join(lines) + "\n"


def parse_mixture(text: str) -> RandomMeasure:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MIXTURE_FILE_HEADER:
        raise MixtureFormatError(f"expected header {MIXTURE_FILE_HEADER!r}", line=1)
    components: list[tuple[float, DiscreteMeasure]] = []
    weight: float | None = None
    pairs: list[tuple[float, float]] = []
    start_line = 1

    def flush(at_line: int):
        nonlocal weight, pairs
        if weight is None:
            return
        if not pairs:
            raise MixtureFormatError("atom block has no support points", line=at_line)
        try:
            law = DiscreteMeasure.from_pairs(pairs, normalize=True)
        except ValueError as exc:
            raise MixtureFormatError(f"invalid component: {exc}", line=start_line) from None
        components.append((weight, law))
        weight, pairs = None, []

    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("atom "):
            flush(i)
            start_line = i
            try:
                weight = float(line.split(None, 1)[1])
            except (IndexError, ValueError):
                raise MixtureFormatError(f"bad atom line {line!r}", line=i) from None
            if weight <= 0:
                raise MixtureFormatError("atom weight must be positive", line=i)
        else:
            if weight is None:
                raise MixtureFormatError("support line before any 'atom' header", line=i)
            parts = line.split(",")
            if len(parts) != 2:
                raise MixtureFormatError("expected 'point,weight'", line=i)
            try:
                pairs.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise MixtureFormatError(f"could not parse numbers in {line!r}", line=i) from None
    flush(len(lines) + 1)
    if not components:
        raise MixtureFormatError("no components found")
    total = sum(w for w, _ in components)
    if abs(total - 1.0) > 1e-8:
        raise MixtureFormatError(f"atom weights sum to {total!r}, outside tolerance 1e-8")
    return RandomMeasure(np.array([w / total for w, _ in components]),
                         tuple(law for _, law in components))


def save_mixture(mu: RandomMeasure, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_mixture(mu))


def load_mixture(path) -> RandomMeasure:
    with open(path, "r", encoding="ascii") as fh:
        return parse_mixture(fh.read())
