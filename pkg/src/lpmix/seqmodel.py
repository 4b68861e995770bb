"""Desk-scale simulators of determining sequences and measure recovery.

A sequence model generates paths (X_1, X_2, ...) whose far-out coordinates
look like exchangeable draws from a mixture: either exactly (exchangeable
kind), up to an additive decaying perturbation (perturbed kind), or replayed
from a stored table.  The estimation direction conditions on early-coordinate
events and reads component laws off the tail columns.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import DiscreteMeasure
from .mixtures import RandomMeasure, sample_exchangeable
from .rng import stream

NOISE_KINDS = ("gauss", "uniform")
_UNIFORM_HALF_WIDTH = math.sqrt(3.0)  # unit-variance symmetric uniform


@dataclass(frozen=True)
class DecaySchedule:
    """Perturbation size per index: c * n^(-alpha), or identically zero."""

    kind: str = "power"
    c: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "zero"):
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if self.kind == "power" and (self.c < 0 or self.alpha < 0):
            raise ValueError("power decay needs c >= 0 and alpha >= 0")

    def delta(self, n: int) -> float:
        if self.kind == "zero" or self.c == 0.0:
            return 0.0
        return self.c * float(n) ** (-self.alpha)

    def vanishes(self) -> bool:
        return self.kind == "zero" or self.c == 0.0 or self.alpha > 0


@dataclass
class SequenceModel:
    """Generator of determining-sequence paths.

    kinds: "exchangeable" draws one component and i.i.d. values; "perturbed"
    adds decay(n) * W_n noise on top of the exchangeable draw; "custom-table"
    replays stored rows (cursor state mutates, columns are indexed from 1).
    """

    kind: str
    mu: RandomMeasure | None = None
    decay: DecaySchedule = field(default_factory=lambda: DecaySchedule(kind="zero"))
    noise: str = "gauss"
    table: np.ndarray | None = None
    _cursor: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.kind not in ("exchangeable", "perturbed", "custom-table"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.kind == "custom-table":
            if self.table is None:
                raise ValueError("custom-table model needs a table")
            self.table = np.atleast_2d(np.asarray(self.table, dtype=np.float64))
        elif self.mu is None:
            raise ValueError(f"{self.kind} model needs a mixture")

    def delta(self, n: int) -> float:
        if self.kind == "perturbed":
            return self.decay.delta(n)
        return 0.0

    def noise_values(self, size, rng: np.random.Generator) -> np.ndarray:
        if self.noise == "uniform":
            return rng.uniform(-_UNIFORM_HALF_WIDTH, _UNIFORM_HALF_WIDTH, size)
        return rng.standard_normal(size)


def draw_path(model: SequenceModel, n_max: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """One path of length n_max; returns (hidden component index, values).

    Table models replay the next stored row (component unknown, returned
    as -1) and raise once the table is exhausted.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if model.kind == "custom-table":
        if model._cursor >= model.table.shape[0]:
            raise ValueError("custom-table model exhausted its rows")
        if n_max > model.table.shape[1]:
            raise ValueError(f"table has {model.table.shape[1]} columns, requested {n_max}")
        row = model.table[model._cursor, :n_max].copy()
        model._cursor += 1
        return -1, row
    comp = int(model.mu.draw_component(rng))
    values = np.asarray(model.mu.laws[comp].sample(n_max, rng), dtype=np.float64)
    if model.kind == "perturbed":
        deltas = np.array([model.delta(n) for n in range(1, n_max + 1)])
        values = values + deltas * model.noise_values(n_max, rng)
    return comp, values


def simulate_matrix(model: SequenceModel, n_paths: int, n_columns: int,
                    seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Path matrix (rows = paths) plus hidden component labels; each path has
    its own stream keyed by (seed, "path", row), so chunking cannot matter."""
    labels = np.empty(n_paths, dtype=np.int64)
    matrix = np.empty((n_paths, n_columns))
    for i in range(n_paths):
        comp, values = draw_path(model, n_columns, stream(seed, "path", i))
        labels[i] = comp
        matrix[i] = values
    return labels, matrix


# -- estimation -------------------------------------------------------------


@dataclass(frozen=True)
class PilotBins:
    """Default partition: quantile bins of the per-path variance computed on
    the pilot (early) columns."""

    n_bins: int = 2
    pilot_columns: int = 50


@dataclass(frozen=True)
class EstimatedRandomMeasure:
    components: RandomMeasure
    ks_per_atom: tuple[float, ...]

    def __post_init__(self):
        for v in self.ks_per_atom:
            if not 0.0 <= v <= 1.0:
                raise ValueError("ks_per_atom entries must lie in [0, 1]")


def _two_sample_ks(x: np.ndarray, y: np.ndarray) -> float:
    if x.size == 0 or y.size == 0:
        return 1.0
    grid = np.sort(np.concatenate([x, y]))
    fx = np.searchsorted(np.sort(x), grid, side="right") / x.size
    fy = np.searchsorted(np.sort(y), grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def _snap_to_grid(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    mids = (grid[1:] + grid[:-1]) / 2.0
    return grid[np.searchsorted(mids, values)]


def _partition_masks(paths: np.ndarray, partition, tail_start: int) -> list[np.ndarray]:
    if isinstance(partition, PilotBins):
        cols = min(partition.pilot_columns, tail_start)
        pilot = np.var(paths[:, :cols], axis=1, ddof=1)
        edges = np.quantile(pilot, np.linspace(0, 1, partition.n_bins + 1)[1:-1])
        bins = np.searchsorted(edges, pilot, side="right")
        return [bins == b for b in range(partition.n_bins)]
    masks = []
    for predicate in partition:
        masks.append(np.array([bool(predicate(row[:tail_start])) for row in paths]))
    return masks


def estimate_limit_measure(paths: np.ndarray, partition, tail_columns: tuple[int, int],
                           grid: np.ndarray | None = None) -> EstimatedRandomMeasure:
    """Recover the limit mixture from a path matrix with labels withheld.

    partition is either a list of predicates over the early coordinates
    (row[:tail_start] -> bool) or a PilotBins spec; tail_columns is the
    half-open 0-based column range whose pooled values estimate each
    component law.  Values are snapped to grid when one is given.  Empty
    cells are dropped with a warning and the weights renormalized.
    """
    paths = np.asarray(paths, dtype=np.float64)
    start, stop = tail_columns
    if not 0 <= start < stop <= paths.shape[1]:
        raise ValueError("tail_columns out of range")
    masks = _partition_masks(paths, partition, start)
    weights, laws, ks_values = [], [], []
    for idx, mask in enumerate(masks):
        n_rows = int(np.sum(mask))
        if n_rows == 0:
            warnings.warn(f"partition cell {idx} matched no paths; dropped")
            continue
        tail = paths[mask, start:stop]
        pooled = tail.ravel()
        if grid is not None:
            pooled = _snap_to_grid(pooled, np.asarray(grid, dtype=np.float64))
        points, counts = np.unique(pooled, return_counts=True)
        laws.append(DiscreteMeasure(points, counts / pooled.size))
        weights.append(n_rows)
        half = n_rows // 2
        ks_values.append(_two_sample_ks(tail[:half].ravel(), tail[half:].ravel()))
    if not laws:
        raise ValueError("every partition cell was empty")
    weights = np.asarray(weights, dtype=np.float64)
    mixture = RandomMeasure(weights / weights.sum(), tuple(laws))
    return EstimatedRandomMeasure(components=mixture, ks_per_atom=tuple(ks_values))


# -- distributional diagnostics ---------------------------------------------


DEFAULT_PROBE_SEED = 0
_PROBE_THRESHOLD_SCALE = 2.0


def halfspace_distance(sample_a: np.ndarray, sample_b: np.ndarray, n_probes: int,
                       probe_rng: np.random.Generator) -> float:
    """Max gap of empirical half-space probabilities over random probes.

    Each probe is a unit direction with a Cauchy-distributed threshold, both
    drawn from probe_rng and independent of the data.  Fixed probes make a
    sweep comparable: every threshold is a continuity point of the limit laws
    with probability one, so a vanishing perturbation of an atomic law yields
    a distance that shrinks to pure sampling noise.
    """
    sample_a = np.atleast_2d(np.asarray(sample_a, dtype=np.float64))
    sample_b = np.atleast_2d(np.asarray(sample_b, dtype=np.float64))
    if sample_a.shape[0] == 1:
        sample_a = sample_a.T
    if sample_b.shape[0] == 1:
        sample_b = sample_b.T
    dim = sample_a.shape[1]
    directions = probe_rng.standard_normal((n_probes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    thresholds = _PROBE_THRESHOLD_SCALE * np.tan(np.pi * (probe_rng.random(n_probes) - 0.5))
    proj_a = sample_a @ directions.T
    proj_b = sample_b @ directions.T
    gaps = np.abs(np.mean(proj_a <= thresholds, axis=0)
                  - np.mean(proj_b <= thresholds, axis=0))
    return float(np.max(gaps))


def fdd_check(model: SequenceModel, mu: RandomMeasure, k: int,
              offsets: Sequence[int], n_paths: int, rng: np.random.Generator,
              n_probes: int = 200, probe_seed: int = DEFAULT_PROBE_SEED) -> float:
    """Half-space-probe distance between the model's k-tuple at the given
    1-based offsets and an exchangeable k-tuple from mu.

    The probe set depends only on (probe_seed, k, n_probes), so sweeps over
    offsets compare the same functionals.
    """
    if not 1 <= k <= 4:
        raise ValueError("k must lie in 1..4 at desk scale")
    offsets = list(offsets)
    if len(offsets) != k or any(o < 1 for o in offsets) or np.any(np.diff(offsets) <= 0):
        raise ValueError("offsets must be k strictly increasing 1-based indices")
    n_max = offsets[-1]
    cols = [o - 1 for o in offsets]
    tuples_model = np.empty((n_paths, k))
    for i in range(n_paths):
        _, values = draw_path(model, n_max, rng)
        tuples_model[i] = values[cols]
    tuples_mu = np.empty((n_paths, k))
    for i in range(n_paths):
        tuples_mu[i] = sample_exchangeable(mu, k, rng)
    probe_rng = stream(probe_seed, "halfspace-probes", k, n_probes)
    return halfspace_distance(tuples_model, tuples_mu, n_probes, probe_rng)


def joint_convergence_check(model: SequenceModel, mu: RandomMeasure,
                            statistic: Callable[[np.ndarray], float], n_probe: int,
                            n_paths: int, rng: np.random.Generator,
                            n_probes: int = 200,
                            probe_seed: int = DEFAULT_PROBE_SEED) -> float:
    """Distance between the joint laws of (X_{n_probe}, Z) and (Y, Z), where
    Z = statistic(early path) and Y is an exchangeable draw sharing the
    path's hidden component."""
    if n_probe < 2:
        raise ValueError("n_probe must leave at least one early coordinate")
    if model.kind == "custom-table":
        raise ValueError("joint check needs a generative model with known components")
    pairs_model = np.empty((n_paths, 2))
    pairs_limit = np.empty((n_paths, 2))
    for i in range(n_paths):
        comp, values = draw_path(model, n_probe, rng)
        z = float(statistic(values[: n_probe - 1]))
        pairs_model[i] = (values[n_probe - 1], z)
        y = float(np.asarray(mu.laws[comp].sample(1, rng))[0])
        pairs_limit[i] = (y, z)
    probe_rng = stream(probe_seed, "halfspace-probes", 2, n_probes)
    return halfspace_distance(pairs_model, pairs_limit, n_probes, probe_rng)
