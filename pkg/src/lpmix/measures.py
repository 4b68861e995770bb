"""Finite-support probability measures and the exact operations on them.

Everything here is deterministic: quantiles, truncated moments,
symmetrization, the quantile-coupling metric ``d`` and the Prohorov metric
``prohorov`` are computed in closed form from the atoms, so tests can assert
identities rather than tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

WEIGHT_TOL = 1e-12
CENTERING_TOL = 1e-9
MEASURE_FILE_HEADER = "# discrete-measure v1"

_FLOW_TOL = 1e-15


class MeasureFormatError(ValueError):
    """Measure text failed validation; message is anchored to the bad line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many atoms.

    Atoms are stored sorted by location with strictly positive weights that
    sum to one.  The CDF is right-continuous (mass of ``(-inf, t]``) and the
    quantile function uses the inf convention ``F^{-1}(u) = inf{t: F(t) >= u}``.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        if points.ndim != 1 or points.shape != weights.shape or points.size == 0:
            raise ValueError("points and weights must be equal-length 1-D arrays")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        if np.any(np.diff(points) <= 0):
            raise ValueError("points must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        total = float(np.sum(weights))
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
        object.__setattr__(self, "cum_weights", np.cumsum(weights))

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], normalize: bool = False,
                   tol: float = 1e-8) -> "DiscreteMeasure":
        """Build from (point, weight) pairs, merging exactly equal points.

        With ``normalize=True`` a total mass within ``tol`` of one is rescaled
        to sum exactly to one (used by the file loaders).
        """
        acc: dict[float, float] = {}
        for point, weight in pairs:
            point = float(point)
            acc[point] = acc.get(point, 0.0) + float(weight)
        points = np.array(sorted(acc), dtype=np.float64)
        weights = np.array([acc[p] for p in points], dtype=np.float64)
        keep = weights > 0
        points, weights = points[keep], weights[keep]
        if normalize:
            total = float(np.sum(weights))
            if abs(total - 1.0) > tol:
                raise ValueError(f"weights sum to {total!r}, outside tolerance {tol}")
            weights = weights / total
        return cls(points, weights)

    @classmethod
    def delta(cls, point: float) -> "DiscreteMeasure":
        return cls(np.array([float(point)]), np.array([1.0]))

    @classmethod
    def rademacher(cls, scale: float = 1.0) -> "DiscreteMeasure":
        s = abs(float(scale))
        if s == 0.0:
            return cls.delta(0.0)
        return cls(np.array([-s, s]), np.array([0.5, 0.5]))

    @classmethod
    def uniform_on(cls, points: Iterable[float]) -> "DiscreteMeasure":
        pts = np.asarray(sorted(set(float(p) for p in points)), dtype=np.float64)
        return cls(pts, np.full(pts.size, 1.0 / pts.size))

    @classmethod
    def centered_three_point(cls, left: float, right: float,
                             middle_weight: float) -> "DiscreteMeasure":
        """Three atoms {left, 0, right} with weights chosen so the mean is 0."""
        if not (left < 0.0 < right):
            raise ValueError("need left < 0 < right")
        if not 0.0 < middle_weight < 1.0:
            raise ValueError("middle_weight must lie in (0, 1)")
        rest = 1.0 - middle_weight
        w_left = rest * right / (right - left)
        w_right = rest * (-left) / (right - left)
        return cls(np.array([left, 0.0, right]),
                   np.array([w_left, middle_weight, w_right]))

    # -- pointwise functions ----------------------------------------------

    def cdf(self, t: float) -> float:
        """Mass of (-inf, t]."""
        idx = int(np.searchsorted(self.points, t, side="right"))
        return 0.0 if idx == 0 else float(self.cum_weights[idx - 1])

    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        """Vectorized inf-convention quantile, valid for u in (0, 1]."""
        idx = np.searchsorted(self.cum_weights, u, side="left")
        return self.points[np.minimum(idx, self.points.size - 1)]

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling; shares the quantile convention."""
        return self.quantile_array(rng.random(size))

    # -- moments ------------------------------------------------------------

    def mean(self) -> float:
        return float(np.sum(self.weights * self.points))

    def second_moment(self) -> float:
        return float(np.sum(self.weights * self.points ** 2))

    def abs_first_moment(self) -> float:
        return float(np.sum(self.weights * np.abs(self.points)))

    def variance(self) -> float:
        m = self.mean()
        return self.second_moment() - m * m

    def is_degenerate_at_zero(self) -> bool:
        return self.points.size == 1 and self.points[0] == 0.0

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Distribution of factor * X."""
        if factor == 0.0:
            return DiscreteMeasure.delta(0.0)
        pts = self.points * factor
        if factor < 0:
            return DiscreteMeasure(pts[::-1].copy(), self.weights[::-1].copy())
        return DiscreteMeasure(pts, self.weights.copy())


@dataclass(frozen=True)
class CenteredCheck:
    """Mean / second moment summary with the membership flag for the class
    of centered square-integrable laws."""

    mean: float
    second_moment: float
    is_in_S: bool


def centered_check(nu: DiscreteMeasure, tol: float = CENTERING_TOL) -> CenteredCheck:
    m = nu.mean()
    return CenteredCheck(mean=m, second_moment=nu.second_moment(), is_in_S=abs(m) <= tol)


# -- operations ----------------------------------------------------------


def quantile(nu: DiscreteMeasure, u: float) -> float:
    """inf{t : F(t) >= u} for u strictly inside (0, 1)."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u!r}")
    return float(nu.quantile_array(np.array([u]))[0])


def truncated_moments(nu: DiscreteMeasure, t: float) -> tuple[float, float, float]:
    """(mass, first, second) moments over the strict window |x| < t."""
    if not t > 0:
        raise ValueError("truncation level t must be positive")
    mask = np.abs(nu.points) < t
    w = nu.weights[mask]
    x = nu.points[mask]
    return (float(np.sum(w)), float(np.sum(w * x)), float(np.sum(w * x * x)))


def symmetrize(nu: DiscreteMeasure) -> DiscreteMeasure:
    """Exact law of the difference of two independent draws from nu."""
    diffs = (nu.points[:, None] - nu.points[None, :]).ravel()
    prods = (nu.weights[:, None] * nu.weights[None, :]).ravel()
    return DiscreteMeasure.from_pairs(zip(diffs, prods))


def d_metric(nu: DiscreteMeasure, lam: DiscreteMeasure) -> float:
    """L2 distance between the quantile functions, exact on the merged grid.

    Both quantile functions are constant on the half-open intervals cut by the
    union of the two cumulative-weight grids, so the integral is a finite sum.
    """
    grid = np.unique(np.concatenate([nu.cum_weights, lam.cum_weights]))
    grid = grid[grid > 0.0]
    q_nu = nu.quantile_array(grid)
    q_lam = lam.quantile_array(grid)
    du = np.diff(grid, prepend=0.0)
    return float(np.sqrt(np.sum(du * (q_nu - q_lam) ** 2)))


def _max_flow_dense(residual: np.ndarray) -> float:
    """Edmonds-Karp max flow from node 0 to the last node of a dense residual
    matrix with float capacities."""
    n = residual.shape[0]
    sink = n - 1
    total = 0.0
    while True:
        parent = np.full(n, -1, dtype=np.int64)
        parent[0] = 0
        queue = [0]
        while queue and parent[sink] < 0:
            u = queue.pop(0)
            for v in np.nonzero(residual[u] > _FLOW_TOL)[0]:
                if parent[v] < 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            return total
        bottleneck = np.inf
        v = sink
        while v != 0:
            u = int(parent[v])
            bottleneck = min(bottleneck, residual[u, v])
            v = u
        v = sink
        while v != 0:
            u = int(parent[v])
            residual[u, v] -= bottleneck
            residual[v, u] += bottleneck
            v = u
        total += bottleneck


def _matchable_mass(nu: DiscreteMeasure, lam: DiscreteMeasure, allowed: np.ndarray) -> float:
    """Largest coupled mass using only the allowed (i, j) atom pairs."""
    n, m = nu.points.size, lam.points.size
    big = 2.0  # exceeds any feasible flow, plays the role of +inf
    residual = np.zeros((n + m + 2, n + m + 2))
    residual[0, 1 : n + 1] = nu.weights
    residual[n + 1 : n + m + 1, n + m + 1] = lam.weights
    residual[1 : n + 1, n + 1 : n + m + 1] = np.where(allowed, big, 0.0)
    return _max_flow_dense(residual)


def prohorov(nu: DiscreteMeasure, lam: DiscreteMeasure) -> float:
    """Exact Prohorov distance between finite-support measures.

    The feasible set of the defining inequalities is a ray, and on each
    interval between consecutive pairwise support distances the worst-case
    mass deficit is constant and equals 1 minus a maximum bipartite flow
    (Strassen duality), so the infimum is found by a single sweep.
    """
    # canonical argument order makes the computation symmetric bit-for-bit
    if (lam.points.tobytes(), lam.weights.tobytes()) < (nu.points.tobytes(), nu.weights.tobytes()):
        nu, lam = lam, nu
    dists = np.abs(nu.points[:, None] - lam.points[None, :])
    levels = np.unique(np.concatenate([np.array([0.0]), dists.ravel()]))
    for k, level in enumerate(levels):
        upper = levels[k + 1] if k + 1 < levels.size else np.inf
        flow = _matchable_mass(nu, lam, dists <= level)
        deficit = 1.0 - flow
        if deficit <= _FLOW_TOL:
            deficit = 0.0
        if deficit <= upper:
            return float(max(level, deficit))
    raise AssertionError("unreachable: epsilon = 1 is always feasible")


def ks_distance(nu: DiscreteMeasure, lam: DiscreteMeasure) -> float:
    """Exact sup-distance between the two CDFs (evaluated on the joint support)."""
    grid = np.unique(np.concatenate([nu.points, lam.points]))
    f_nu = np.cumsum(_weights_on(grid, nu))
    f_lam = np.cumsum(_weights_on(grid, lam))
    return float(np.max(np.abs(f_nu - f_lam)))


def _weights_on(grid: np.ndarray, nu: DiscreteMeasure) -> np.ndarray:
    w = np.zeros(grid.size)
    idx = np.searchsorted(grid, nu.points)
    w[idx] = nu.weights
    return w


# -- serialization --------------------------------------------------------


def format_measure(nu: DiscreteMeasure) -> str:
    lines = [MEASURE_FILE_HEADER]
    lines += [f"{float(p)!r},{float(w)!r}" for p, w in zip(nu.points, nu.weights)]
    return "\n".join(lines) + "\n"


def parse_measure(text: str) -> DiscreteMeasure:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MEASURE_FILE_HEADER:
        raise MeasureFormatError(f"expected header {MEASURE_FILE_HEADER!r}", line=1)
    pairs = []
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MeasureFormatError("expected 'point,weight'", line=i)
        try:
            point, weight = float(parts[0]), float(parts[1])
        except ValueError:
            raise MeasureFormatError(f"could not parse numbers in {line!r}", line=i) from None
        if weight <= 0:
            raise MeasureFormatError(f"weight must be positive, got {weight!r}", line=i)
        pairs.append((point, weight))
    if not pairs:
        raise MeasureFormatError("no atoms found", line=len(lines))
    try:
        return DiscreteMeasure.from_pairs(pairs, normalize=True)
    except ValueError as exc:
        raise MeasureFormatError(str(exc)) from None


def save_measure(nu: DiscreteMeasure, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_measure(nu))


def load_measure(path) -> DiscreteMeasure:
    with open(path, "r", encoding="ascii") as fh:
        return parse_measure(fh.read())
