"""Inductive subsequence selection and the experiments around it.

The selector walks candidate indices and accepts the first whose worst-case
normalized norm deviation over a declared test family fits a halving
tolerance budget; the budget telescopes, so the accepted indices satisfy a
two-sided (1 +/- epsilon) norm equivalence that ``verify_equivalence``
re-checks directly.  The necessity experiment and the CLT check exercise the
converse direction: growing conditional variances kill small-ball
probabilities of normalized sums, and admissible mixtures produce the
variance-mixture-of-normals limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .measures import CENTERING_TOL
from .mixtures import RandomMeasure, envelopes, norm_constants, normalized_sum_samples
from .norms import estimate_from_powers, psi_exact
from .rng import parallel_map, stream
from .seqmodel import SequenceModel


def default_test_family(k_max: int, n_random: int = 15, seed: int = 1234,
                        ) -> tuple[list[str], list[np.ndarray]]:
    """Basis vectors, the all-ones vector, and seeded random unit vectors."""
    ids, vectors = [], []
    for i in range(k_max):
        e = np.zeros(k_max)
        e[i] = 1.0
        ids.append(f"e{i + 1}")
        vectors.append(e)
    ids.append(f"ones{k_max}")
    vectors.append(np.ones(k_max))
    gen = stream(seed, "test-family", k_max)
    for i in range(n_random):
        v = gen.standard_normal(k_max)
        v /= np.linalg.norm(v)
        ids.append(f"u{i:02d}")
        vectors.append(v)
    return ids, vectors


@dataclass(frozen=True)
class SelectionConfig:
    """Parameters of the inductive scan.

    tol_schedule(k) = epsilon / 2^k; the family is padded with zeros on the
    right so every vector acts on k_max coordinates.
    """

    epsilon: float
    k_max: int
    test_family: tuple = ()
    family_ids: tuple = ()
    candidate_stride: int = 16
    max_candidates: int = 400
    n_samples: int = 4000
    p: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in (0, 1/2]")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.candidate_stride < 1 or self.max_candidates < 1:
            raise ValueError("stride and candidate budget must be positive")
        if not self.test_family:
            ids, vectors = default_test_family(self.k_max)
            object.__setattr__(self, "test_family", tuple(vectors))
            object.__setattr__(self, "family_ids", tuple(ids))
        else:
            padded = tuple(_pad(np.asarray(a, dtype=np.float64), self.k_max)
                           for a in self.test_family)
            object.__setattr__(self, "test_family", padded)
            if not self.family_ids:
                object.__setattr__(self, "family_ids",
                                   tuple(f"a{i}" for i in range(len(padded))))

    def tol_schedule(self, k: int) -> float:
        return self.epsilon * 2.0 ** (-k)


def _pad(a: np.ndarray, length: int) -> np.ndarray:
    if a.size > length:
        raise ValueError(f"test vector longer than k_max={length}")
    out = np.zeros(length)
    out[: a.size] = a
    return out


def _family_has_basis_and_ones(config: SelectionConfig) -> bool:
    family = np.array(config.test_family)
    for i in range(config.k_max):
        e = np.zeros(config.k_max)
        e[i] = 1.0
        if not np.any(np.all(family == e, axis=1)):
            return False
    return bool(np.any(np.all(family == np.ones(config.k_max), axis=1)))


@dataclass(frozen=True)
class StepRecord:
    step: int
    candidate: int
    deviation: float
    std_error: float
    accepted: bool


@dataclass(frozen=True)
class SelectionResult:
    indices: tuple[int, ...]
    step_deviations: tuple[float, ...]
    verified: bool
    tol_schedule: tuple[float, ...]
    failed_step: int | None = None
    records: tuple[StepRecord, ...] = ()


@dataclass(frozen=True)
class _CoupledDeviation:
    deviation: float
    std_error: float


def _psi_table(mu: RandomMeasure, config: SelectionConfig) -> list[float]:
    return [psi_exact(mu, a, config.p) for a in config.test_family]


def uniform_deviation(model: SequenceModel, mu: RandomMeasure, prefix: Sequence[int],
                      candidate: int, config: SelectionConfig,
                      rng: np.random.Generator,
                      psi_values: Sequence[float] | None = None) -> float:
    """Worst normalized norm gap over the test family when the candidate index
    replaces the next exchangeable coordinate.

    Both norms in each comparison are estimated from one coupled sample block:
    a shared component draw, shared exchangeable values, and the candidate's
    X built on top of its own Y value, so the difference has the variance of
    the perturbation rather than of the norms.
    """
    return _deviation_detail(model, mu, prefix, candidate, config, rng,
                             psi_values).deviation


def _deviation_detail(model: SequenceModel, mu: RandomMeasure, prefix: Sequence[int],
                      candidate: int, config: SelectionConfig,
                      rng: np.random.Generator,
                      psi_values: Sequence[float] | None = None) -> _CoupledDeviation:
    prefix = list(prefix)
    if prefix and candidate <= max(prefix):
        raise ValueError("candidate must exceed every chosen index")
    k = len(prefix) + 1
    length = config.k_max
    if k > length:
        raise ValueError("prefix already has k_max entries")
    if psi_values is None:
        psi_values = _psi_table(mu, config)
    reps = config.n_samples
    comp = np.asarray(mu.draw_component(rng, size=reps))
    u = rng.random((reps, length))
    y = np.empty((reps, length))
    for j, law in enumerate(mu.laws):
        rows = comp == j
        if np.any(rows):
            y[rows] = law.quantile_array(u[rows])
    w = model.noise_values((reps, k), rng)
    deltas = np.array([model.delta(n) for n in prefix] + [model.delta(candidate)])

    worst = _CoupledDeviation(0.0, 0.0)
    for a, psi in zip(config.test_family, psi_values):
        if a[k - 1] == 0.0:
            continue  # the two sums coincide exactly
        base = y @ a
        prefix_noise = (w[:, : k - 1] * deltas[: k - 1]) @ a[: k - 1] if k > 1 else 0.0
        s_without = base + prefix_noise
        s_with = s_without + a[k - 1] * deltas[k - 1] * w[:, k - 1]
        pow_with = np.abs(s_with) ** config.p
        pow_without = np.abs(s_without) ** config.p
        est_with = estimate_from_powers(pow_with, config.p)
        est_without = estimate_from_powers(pow_without, config.p)
        dev = abs(est_with.value - est_without.value) / psi
        diff = pow_with - pow_without
        m_bar = max(float(np.mean(pow_without)), 1e-300)
        scale = m_bar ** (1.0 / config.p - 1.0) / config.p
        se = float(np.std(diff, ddof=1)) / math.sqrt(reps) * scale / psi
        if dev > worst.deviation:
            worst = _CoupledDeviation(dev, se)
    return worst


def select_subsequence(model: SequenceModel, mu: RandomMeasure,
                       config: SelectionConfig, seed: int,
                       workers: int = 1) -> SelectionResult:
    """Greedy inductive scan: at step k accept the first candidate (in stride
    order) whose deviation fits epsilon / 2^k.

    Every candidate is evaluated on its own stream keyed by
    (seed, "select", step, candidate), so the result is identical for every
    worker count and rerun.
    """
    if not _family_has_basis_and_ones(config):
        raise ValueError("test family must contain the basis vectors and the all-ones vector")
    if mu.is_degenerate():
        raise ValueError("mixture is degenerate at zero")
    if model.kind == "perturbed" and not model.decay.vanishes():
        raise ValueError("selection requires a vanishing decay schedule")
    psi_values = _psi_table(mu, config)

    indices: list[int] = []
    deviations: list[float] = []
    records: list[StepRecord] = []
    tols = tuple(config.tol_schedule(k) for k in range(1, config.k_max + 1))
    for k in range(1, config.k_max + 1):
        tol = tols[k - 1]
        start = indices[-1] if indices else 0
        candidates = [start + config.candidate_stride * (j + 1)
                      for j in range(config.max_candidates)]
        accepted = None

        def evaluate(n: int) -> _CoupledDeviation:
            return _deviation_detail(model, mu, indices, n, config,
                                     stream(seed, "select", k, n), psi_values)

        batch = max(1, workers)
        for lo in range(0, len(candidates), batch):
            chunk = candidates[lo : lo + batch]
            results = parallel_map(evaluate, chunk, workers)
            for n, res in zip(chunk, results):
                ok = res.deviation <= tol
                records.append(StepRecord(step=k, candidate=n, deviation=res.deviation,
                                          std_error=res.std_error, accepted=ok))
                if ok:
                    accepted = (n, res)
                    break
            if accepted:
                break
        if accepted is None:
            return SelectionResult(indices=tuple(indices),
                                   step_deviations=tuple(deviations),
                                   verified=False, tol_schedule=tols,
                                   failed_step=k, records=tuple(records))
        indices.append(accepted[0])
        deviations.append(accepted[1].deviation)
    return SelectionResult(indices=tuple(indices), step_deviations=tuple(deviations),
                           verified=True, tol_schedule=tols, records=tuple(records))


# -- verification ------------------------------------------------------------


@dataclass(frozen=True)
class VerificationRow:
    a_id: str
    x_norm: float
    std_error: float
    psi: float
    margin_psi_lo: float
    margin_psi_hi: float
    margin_l2_lo: float
    margin_l2_hi: float

    @property
    def ok(self) -> bool:
        return min(self.margin_psi_lo, self.margin_psi_hi,
                   self.margin_l2_lo, self.margin_l2_hi) >= 0.0


@dataclass(frozen=True)
class VerificationReport:
    epsilon: float
    p: float
    A_const: float
    B_const: float
    rows: tuple[VerificationRow, ...]

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)


def verify_equivalence(model: SequenceModel, indices: Sequence[int], mu: RandomMeasure,
                       p: float, test_family: Sequence[np.ndarray], epsilon: float,
                       n_samples: int, seed: int, C: float = 1.0 / math.sqrt(2.0),
                       family_ids: Sequence[str] | None = None) -> VerificationReport:
    """Check || sum_i a_i X_{n_i} ||_p against (1 +/- epsilon) psi(a) and the
    ell^2 sandwich, with a 3-standard-error Monte Carlo allowance."""
    indices = list(indices)
    k = len(indices)
    if k < 1:
        raise ValueError("need at least one index")
    constants = norm_constants(mu, p, C)
    if family_ids is None:
        family_ids = [f"a{i}" for i in range(len(test_family))]
    deltas = np.array([model.delta(n) for n in indices])
    rows = []
    for a_id, a in zip(family_ids, test_family):
        a = _pad(np.asarray(a, dtype=np.float64)[:k], k)
        if not np.any(a != 0.0):
            continue
        rng = stream(seed, "verify", a_id)
        comp = np.asarray(mu.draw_component(rng, size=n_samples))
        u = rng.random((n_samples, k))
        y = np.empty((n_samples, k))
        for j, law in enumerate(mu.laws):
            sel = comp == j
            if np.any(sel):
                y[sel] = law.quantile_array(u[sel])
        x = y + deltas * model.noise_values((n_samples, k), rng)
        est = estimate_from_powers(np.abs(x @ a) ** p, p)
        psi = psi_exact(mu, a, p)
        norm2 = float(np.linalg.norm(a))
        allowance = 3.0 * est.std_error
        rows.append(VerificationRow(
            a_id=a_id, x_norm=est.value, std_error=est.std_error, psi=psi,
            margin_psi_lo=est.value - (1.0 - epsilon) * psi + allowance,
            margin_psi_hi=(1.0 + epsilon) * psi + allowance - est.value,
            margin_l2_lo=est.value - (1.0 - epsilon) * constants.A_const * norm2 + allowance,
            margin_l2_hi=(1.0 + epsilon) * constants.B_const * norm2 + allowance - est.value,
        ))
    return VerificationReport(epsilon=epsilon, p=p, A_const=constants.A_const,
                              B_const=constants.B_const, rows=tuple(rows))


# -- necessity direction -----------------------------------------------------


@dataclass(frozen=True)
class NecessityConfig:
    """Anti-concentration experiment grid.

    a_k_schedule is the early-block length floor(log k + 1); it must stay
    below k/2 for every sum length on the grid, which keeps the envelope
    proxy subscript sqrt(N/2) meaningful.
    """

    T: float = 2.0
    N_grid: tuple[int, ...] = (256, 1024, 4096)
    variance_scales: tuple[float, ...] = (1.0, 4.0, 16.0, 64.0)
    n_replicates: int = 20000

    def a_k(self, k: int) -> int:
        return int(math.floor(math.log(k) + 1.0))

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if any(n < 8 for n in self.N_grid):
            raise ValueError("N grid entries must be at least 8")
        for n in self.N_grid:
            if self.a_k(n) > n / 2:
                raise ValueError(f"a_k({n}) exceeds {n}/2")


@dataclass(frozen=True)
class NecessityRow:
    family_index: int
    scale: float
    N: int
    T: float
    probability: float
    std_error: float
    K_t: float
    proxy: float


def necessity_experiment(mu_family: Sequence[RandomMeasure], config: NecessityConfig,
                         seed: int,
                         scales: Sequence[float] | None = None) -> list[NecessityRow]:
    """Small-ball probabilities of normalized exchangeable sums along a family
    of mixtures with growing variance envelopes, next to the decay proxy
    T / sqrt(K_t) evaluated at t = sqrt(N/2)."""
    if scales is None:
        scales = list(range(len(mu_family)))
    t_points = sorted({math.sqrt(n / 2.0) for n in config.N_grid})
    k_tables = [envelopes(mu, t_points) for mu in mu_family]
    # the growth requirement is asymptotic: check it at the widest truncation,
    # where every component's support has been absorbed
    tallest = [float(table.K_t[-1]) for table in k_tables]
    if any(b <= a for a, b in zip(tallest, tallest[1:])):
        raise ValueError("family envelopes K_t must grow along the family")
    rows = []
    for f_idx, (mu, table) in enumerate(zip(mu_family, k_tables)):
        for n in config.N_grid:
            rng = stream(seed, "necessity", f_idx, n)
            sums = normalized_sum_samples(mu, n, config.n_replicates, rng)
            hits = np.abs(sums) <= config.T
            prob = float(np.mean(hits))
            se = math.sqrt(prob * (1.0 - prob) / config.n_replicates)
            k_t = float(table.K_t[t_points.index(math.sqrt(n / 2.0))])
            proxy = config.T / math.sqrt(k_t) if k_t > 0 else math.inf
            rows.append(NecessityRow(family_index=f_idx, scale=float(scales[f_idx]),
                                     N=n, T=config.T, probability=prob, std_error=se,
                                     K_t=k_t, proxy=proxy))
    return rows


# -- CLT direction -----------------------------------------------------------


@dataclass(frozen=True)
class CltReport:
    N: int
    ks_distance: float
    target_cdf: str

    def __post_init__(self):
        if not 0.0 <= self.ks_distance <= 1.0:
            raise ValueError("ks_distance must lie in [0, 1]")


def mixture_normal_cdf(mu: RandomMeasure, x: np.ndarray, left: bool = False) -> np.ndarray:
    """CDF of the variance mixture of centered normals with the component
    second moments; degenerate components contribute a unit step at zero.
    With left=True the left limit F(x-) is returned instead."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for w, law in zip(mu.atom_weights, mu.laws):
        sigma = math.sqrt(law.second_moment())
        if sigma == 0.0:
            out = out + w * ((x > 0.0) if left else (x >= 0.0))
        else:
            out = out + w * ndtr(x / sigma)
    return out


def abs_moment_standard_normal(p: float) -> float:
    return 2.0 ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)


def clt_samples(mu: RandomMeasure, N: int, n_reps: int, seed: int) -> np.ndarray:
    return normalized_sum_samples(mu, N, n_reps, stream(seed, "clt", N))


def clt_mixture_check(mu: RandomMeasure, N: int, n_reps: int, seed: int) -> CltReport:
    """KS distance between normalized exchangeable sums and the exact
    variance-mixture-of-normals CDF.

    Samples are collapsed to unique values so ties (lattice sums, degenerate
    components) are compared jump against jump rather than across a shared
    jump point.
    """
    for law in mu.laws:
        if abs(law.mean()) > CENTERING_TOL:
            raise ValueError("clt check requires centered components")
    samples = clt_samples(mu, N, n_reps, seed)
    values, counts = np.unique(samples, return_counts=True)
    ecdf_hi = np.cumsum(counts) / n_reps
    ecdf_lo = ecdf_hi - counts / n_reps
    gap_hi = np.abs(ecdf_hi - mixture_normal_cdf(mu, values))
    gap_lo = np.abs(ecdf_lo - mixture_normal_cdf(mu, values, left=True))
    terms = " + ".join(
        f"{w:g}*Phi(x/{math.sqrt(law.second_moment()):g})"
        for w, law in zip(mu.atom_weights, mu.laws))
    return CltReport(N=N, ks_distance=float(max(np.max(gap_hi), np.max(gap_lo))),
                     target_cdf=terms)
