"""Experiment runner: one subcommand per pipeline, seeded and reproducible.

Each run resolves a JSON config (bundled name or path) plus ``--set``
overrides, executes the pipeline, and writes delimited reports, rendered
figures, and a manifest whose digest is recomputable from the stored resolved
config.  Exit codes: 0 success, 2 validation failure, 3 tolerance failure
(failing rows are listed).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .concentration import (concentration_cell, empirical_concentration,
                            esseen_intermediate, iid_sum_samples)
from .measures import (DiscreteMeasure, MeasureFormatError, d_metric, load_measure,
                       prohorov)
from .mixtures import (MixtureFormatError, RandomMeasure, envelopes, load_mixture,
                       moment_consistency_check, norm_constants, save_mixture)
from .norms import check_equicontinuity, check_monotone, check_two_sided
from .reports import (RunManifest, config_digest, figure_clt, figure_concentration,
                      figure_envelopes, figure_estimated_mixture, figure_necessity,
                      figure_paths, figure_quantiles, figure_selection,
                      figure_two_sided, figure_verification, resolve_out_dir,
                      write_csv, write_json)
from .rng import stream
from .selection import (NecessityConfig, SelectionConfig, clt_mixture_check,
                        clt_samples, default_test_family, mixture_normal_cdf,
                        necessity_experiment, select_subsequence, verify_equivalence)
from .selection import abs_moment_standard_normal
from .seqmodel import (DecaySchedule, PilotBins, SequenceModel,
                       estimate_limit_measure, simulate_matrix)

SUBCOMMANDS = ("metrics", "mixture", "norms", "concentration", "simulate",
               "estimate", "select", "verify", "necessity", "clt")

DEFAULT_C = 1.0 / math.sqrt(2.0)


class CliError(ValueError):
    """Configuration or input validation failure (exit code 2)."""


@dataclass
class RunContext:
    subcommand: str
    config: dict
    config_dir: Path
    seed: int
    workers: int
    out: Path
    figures: bool


# -- config plumbing ---------------------------------------------------------


def _bundled(name: str):
    return resources.files("lpmix.configs").joinpath(name)


def load_config_source(ref: str) -> tuple[dict, Path]:
    path = Path(ref)
    if path.exists():
        text, base = path.read_text(), path.resolve().parent
    else:
        candidate = _bundled(ref if ref.endswith(".json") else ref + ".json")
        if not candidate.is_file():
            raise CliError(f"config {ref!r} is neither a file nor a bundled config")
        text, base = candidate.read_text(), Path(str(_bundled("")))
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {ref!r} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise CliError("config root must be a JSON object")
    return config, base


def apply_overrides(config: dict, pairs: list[str]) -> dict:
    for pair in pairs:
        if "=" not in pair:
            raise CliError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise CliError(f"--set path {key!r} crosses a non-object value")
        node[parts[-1]] = value
    return config


def resolve_path(ref: str, config_dir: Path) -> Path:
    path = Path(ref)
    if path.is_absolute() or path.exists():
        return path
    fallback = config_dir / ref
    if fallback.exists():
        return fallback
    raise CliError(f"file not found: {ref!r} (also tried {fallback})")


def require(config: dict, key: str):
    if key not in config:
        raise CliError(f"config is missing required key {key!r}")
    return config[key]


# -- spec builders -----------------------------------------------------------


def build_measure(spec, config_dir: Path) -> DiscreteMeasure:
    if isinstance(spec, str):
        spec = {"file": spec}
    if "file" in spec:
        return load_measure(resolve_path(spec["file"], config_dir))
    if "atoms" in spec:
        return DiscreteMeasure.from_pairs([(p, w) for p, w in spec["atoms"]],
                                          normalize=True)
    kind = spec.get("kind")
    if kind == "rademacher":
        return DiscreteMeasure.rademacher(spec.get("scale", 1.0))
    if kind == "delta":
        return DiscreteMeasure.delta(spec.get("point", 0.0))
    if kind == "uniform":
        return DiscreteMeasure.uniform_on(require(spec, "points"))
    if kind == "three-point":
        return DiscreteMeasure.centered_three_point(
            require(spec, "left"), require(spec, "right"), require(spec, "middle_weight"))
    raise CliError(f"cannot build a measure from {spec!r}")


def build_mixture(spec, config_dir: Path) -> RandomMeasure:
    if isinstance(spec, str):
        spec = {"file": spec}
    if "file" in spec:
        return load_mixture(resolve_path(spec["file"], config_dir))
    if "components" in spec:
        pairs = []
        for comp in spec["components"]:
            pairs.append((float(require(comp, "weight")),
                          build_measure(require(comp, "law"), config_dir)))
        return RandomMeasure.from_components(pairs)
    if spec.get("kind") == "scaled-rademacher":
        scales = require(spec, "scales")
        weights = spec.get("weights") or [1.0 / len(scales)] * len(scales)
        return RandomMeasure.from_components(
            [(w, DiscreteMeasure.rademacher(s)) for w, s in zip(weights, scales)])
    raise CliError(f"cannot build a mixture from {spec!r}")


def build_model(spec, config_dir: Path) -> SequenceModel:
    kind = require(spec, "kind")
    if kind == "custom-table":
        table = _load_paths_csv(resolve_path(require(spec, "paths_file"), config_dir))
        return SequenceModel(kind=kind, table=table)
    mu = build_mixture(require(spec, "mixture"), config_dir)
    decay_spec = spec.get("decay", {"kind": "zero"})
    decay = DecaySchedule(kind=decay_spec.get("kind", "power"),
                          c=decay_spec.get("c", 1.0),
                          alpha=decay_spec.get("alpha", 1.0))
    return SequenceModel(kind=kind, mu=mu, decay=decay,
                         noise=spec.get("noise", "gauss"))


def build_family(spec, k_max: int) -> tuple[list[str], list[np.ndarray]]:
    if spec is None:
        spec = {}
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    if spec.get("basis", True) or spec.get("all_ones", True) or spec.get("random_unit", 15):
        base_ids, base_vecs = default_test_family(
            k_max, n_random=int(spec.get("random_unit", 15)),
            seed=int(spec.get("seed", 1234)))
        keep_basis = spec.get("basis", True)
        keep_ones = spec.get("all_ones", True)
        for i, v in zip(base_ids, base_vecs):
            if i.startswith("e") and not keep_basis:
                continue
            if i.startswith("ones") and not keep_ones:
                continue
            ids.append(i)
            vectors.append(v)
    for j, vec in enumerate(spec.get("vectors", [])):
        ids.append(f"v{j:02d}")
        vectors.append(np.asarray(vec, dtype=np.float64))
    if not vectors:
        raise CliError("test family is empty")
    return ids, vectors


def _load_paths_csv(path: Path) -> np.ndarray:
    lines = path.read_text().splitlines()
    if not lines:
        raise CliError(f"{path}: empty paths file")
    header = lines[0].split(",")
    if header != [f"n{i}" for i in range(1, len(header) + 1)]:
        raise CliError(f"{path}: header must be n1..nN, got {lines[0][:60]!r}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise CliError(f"{path}: line {i}: expected {len(header)} columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise CliError(f"{path}: line {i}: non-numeric value") from None
    if not rows:
        raise CliError(f"{path}: no data rows")
    return np.asarray(rows)


# -- subcommand runners -------------------------------------------------------


def run_metrics(ctx: RunContext) -> tuple[list[Path], list[str]]:
    specs = require(ctx.config, "measures")
    if not isinstance(specs, list) or len(specs) < 2:
        raise CliError("metrics needs a list of at least two measures")
    measures = [build_measure(s, ctx.config_dir) for s in specs]
    labels = [s.get("id", f"m{i}") if isinstance(s, dict) else f"m{i}"
              for i, s in enumerate(specs)]
    rows = []
    for i in range(len(measures)):
        for j in range(i + 1, len(measures)):
            rows.append((labels[i], labels[j],
                         d_metric(measures[i], measures[j]),
                         prohorov(measures[i], measures[j])))
    outputs = [write_csv(ctx.out / "metrics.csv",
                         ["id_a", "id_b", "d", "prohorov"], rows)]
    if ctx.figures:
        outputs.append(figure_quantiles(measures, labels, ctx.out / "metrics.png"))
    return outputs, []


def run_mixture(ctx: RunContext) -> tuple[list[Path], list[str]]:
    mu = build_mixture(require(ctx.config, "mixture"), ctx.config_dir)
    p_grid = ctx.config.get("p_grid", [1.0, 1.5])
    c_const = float(ctx.config.get("C", DEFAULT_C))
    t_grid = ctx.config.get("t_grid", [0.5, 1.0, 2.0, 4.0])
    const_rows = []
    for p in p_grid:
        rep = norm_constants(mu, float(p), c_const)
        const_rows.append((rep.p, rep.A_const, rep.B_const, rep.C_const,
                           rep.kp_value, rep.degenerate))
    env = envelopes(mu, t_grid)
    env_rows = list(zip(env.t_grid, env.K_t, env.eps_t))
    cons_rows = []
    for t in list(t_grid) + [math.inf]:
        lhs, rhs = moment_consistency_check(mu, float(t))
        cons_rows.append((t, lhs, rhs, abs(lhs - rhs)))
    outputs = [
        write_csv(ctx.out / "mixture_constants.csv",
                  ["p", "A", "B", "C", "kp_value", "degenerate"], const_rows),
        write_csv(ctx.out / "mixture_envelopes.csv", ["t", "K_t", "eps_t"], env_rows),
        write_csv(ctx.out / "mixture_consistency.csv",
                  ["t", "lhs", "rhs", "abs_gap"], cons_rows),
    ]
    failures = [f"moment consistency gap {gap!r} at t={t!r}"
                for t, _, _, gap in cons_rows if gap > 1e-12]
    if ctx.figures:
        outputs.append(figure_envelopes(env, ctx.out / "mixture.png"))
    return outputs, failures


def run_norms(ctx: RunContext) -> tuple[list[Path], list[str]]:
    mu = build_mixture(require(ctx.config, "mixture"), ctx.config_dir)
    p_grid = [float(p) for p in ctx.config.get("p_grid", [1.0, 1.5])]
    c_const = float(ctx.config.get("C", DEFAULT_C))
    n_samples = int(ctx.config.get("n_samples", 4000))
    k = int(ctx.config.get("k", 8))
    ids, vectors = build_family(ctx.config.get("family"), k)
    rows, failures = [], []
    reports = {}
    for p in p_grid:
        rng = stream(ctx.seed, "norms", p)
        report = check_two_sided(mu, p, c_const, vectors, n_samples, rng)
        reports[p] = report
        if report.skipped_degenerate:
            failures.append(f"degenerate mixture skipped at p={p}")
            continue
        for a_id, row in zip(ids, report.rows):
            margin = min(row.margin_lo, row.margin_hi)
            rows.append(("two_sided", a_id, p, row.psi.value, row.psi.std_error,
                         row.psi.n_samples, row.bound_lo, row.bound_hi, margin,
                         ctx.seed))
            if margin < 0:
                failures.append(f"two-sided bound violated: a={a_id} p={p} margin={margin:.3e}")
        rows_m, fail_m = _monotone_rows(mu, p, ids, vectors, n_samples, ctx.seed)
        rows += rows_m
        failures += fail_m
        rows_e, fail_e = _equicontinuity_rows(mu, p, ids, vectors, n_samples, ctx.seed)
        rows += rows_e
        failures += fail_e
    outputs = [write_csv(ctx.out / "norms.csv",
                         ["op", "a_id", "p", "value", "std_error", "n_samples",
                          "bound_lo", "bound_hi", "margin", "seed"], rows)]
    if ctx.figures and reports:
        outputs.append(figure_two_sided(reports, ctx.out / "norms.png"))
    return outputs, failures


def _monotone_rows(mu, p, ids, vectors, n_samples, seed):
    rows, failures = [], []
    for a_id, a in zip(ids, vectors):
        if a_id.startswith("e"):
            continue  # masking a basis vector is either trivial or empty
        mask = [i for i in range(len(a)) if i % 2 == 0]
        check = check_monotone(mu, p, a, mask, n_samples, stream(seed, "monotone", p, a_id))
        margin = check.diff_power_mean + 3.0 * check.diff_power_se
        rows.append(("monotone", a_id, p, check.psi_full.value,
                     check.psi_full.std_error, n_samples,
                     check.psi_masked.value, math.inf, margin, seed))
        if margin < 0:
            failures.append(f"monotonicity violated: a={a_id} p={p} margin={margin:.3e}")
    return rows, failures


def _equicontinuity_rows(mu, p, ids, vectors, n_samples, seed):
    rows, failures = [], []
    laws = [law for law in mu.laws
            if isinstance(law, DiscreteMeasure) and abs(law.mean()) <= 1e-9]
    pairs = [(i, j) for i in range(len(laws)) for j in range(i + 1, len(laws))][:3]
    for i, j in pairs:
        for a_id, a in zip(ids[:3], vectors[:3]):
            check = check_equicontinuity(laws[i], laws[j], 0.0, a, p, n_samples,
                                         stream(seed, "equicont", p, i, j, a_id))
            hi = check.rhs_bound + 3.0 * check.std_error
            margin = hi - check.lhs
            rows.append((f"equicont_{i}{j}", a_id, p, check.lhs, check.std_error,
                         n_samples, 0.0, hi, margin, seed))
            if margin < 0:
                failures.append(
                    f"equicontinuity violated: pair=({i},{j}) a={a_id} p={p}")
    return rows, failures


def run_concentration(ctx: RunContext) -> tuple[list[Path], list[str]]:
    law_specs = require(ctx.config, "laws")
    laws = [(s.get("id", f"law{i}") if isinstance(s, dict) else f"law{i}",
             build_measure(s, ctx.config_dir)) for i, s in enumerate(law_specs)]
    n_grid = [int(n) for n in ctx.config.get("n_grid", [100, 1000, 10000])]
    t_grid = [float(t) for t in ctx.config.get("t_grid", [0.5, 1.0, 2.0])]
    lam = float(ctx.config.get("lambda", 1.0))
    a_main = float(ctx.config.get("A_main", 2.0))
    a_inter = float(ctx.config.get("A_inter", 2.0))
    reps = int(ctx.config.get("n_replicates", 100000))
    rows, scaling_rows, failures = [], [], []
    fig_rows = []
    for law_id, law in laws:
        for n in n_grid:
            rng = stream(ctx.seed, "concentration", law_id, n)
            sums = iid_sum_samples(law, n, reps, rng)
            for t in t_grid:
                cell, se = concentration_cell(law, n, t, sums, a_main)
                rows.append((law_id, n, t, 2.0 * t, a_main, cell.empirical_prob,
                             cell.esseen_value, cell.bracket, cell.mass_ok,
                             cell.valid, ctx.seed))
                fig_rows.append({"law_id": law_id, "n": n, "t": t,
                                 "empirical": cell.empirical_prob,
                                 "esseen": cell.esseen_value, "valid": cell.valid})
                if cell.valid and cell.empirical_prob > cell.esseen_value + 3.0 * se:
                    failures.append(
                        f"bound violated: law={law_id} n={n} t={t} "
                        f"emp={cell.empirical_prob:.4f} bound={cell.esseen_value:.4f}")
            q_hat = empirical_concentration(sums, lam)
            scaling_rows.append((law_id, n, lam, q_hat, math.sqrt(n) * q_hat,
                                 esseen_intermediate(law, lam, n, a_inter), ctx.seed))
    outputs = [
        write_csv(ctx.out / "concentration.csv",
                  ["law_id", "n", "t", "lambda", "A", "empirical", "esseen",
                   "bracket", "mass_ok", "valid", "seed"], rows),
        write_csv(ctx.out / "concentration_scaling.csv",
                  ["law_id", "n", "lambda", "q_hat", "sqrt_n_q", "A_inter_value",
                   "seed"], scaling_rows),
    ]
    if ctx.figures:
        outputs.append(figure_concentration(fig_rows, ctx.out / "concentration.png"))
    return outputs, failures


def run_simulate(ctx: RunContext) -> tuple[list[Path], list[str]]:
    model = build_model(require(ctx.config, "model"), ctx.config_dir)
    n_paths = int(ctx.config.get("n_paths", 2000))
    n_columns = int(ctx.config.get("n_columns", 250))
    labels, matrix = simulate_matrix(model, n_paths, n_columns, ctx.seed)
    header = [f"n{i}" for i in range(1, n_columns + 1)]
    outputs = [
        write_csv(ctx.out / "paths.csv", header, [tuple(row) for row in matrix]),
        write_csv(ctx.out / "labels.csv", ["path", "component"],
                  list(enumerate(labels.tolist()))),
    ]
    if ctx.figures:
        outputs.append(figure_paths(matrix, ctx.out / "simulate.png"))
    return outputs, []


def _build_partition(spec, paths: np.ndarray, tail_start: int):
    if spec is None or spec.get("kind") == "pilot-bins":
        spec = spec or {}
        return PilotBins(n_bins=int(spec.get("n_bins", 2)),
                         pilot_columns=int(spec.get("pilot_columns", 50)))
    if spec.get("kind") == "variance-threshold":
        thresholds = sorted(float(t) for t in require(spec, "thresholds"))
        cols = min(int(spec.get("pilot_columns", 50)), tail_start)

        def cell(lo, hi):
            return lambda early: lo <= float(np.var(early[:cols], ddof=1)) < hi

        edges = [-math.inf] + thresholds + [math.inf]
        return [cell(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
    raise CliError(f"unknown partition spec {spec!r}")


def run_estimate(ctx: RunContext) -> tuple[list[Path], list[str]]:
    paths = _load_paths_csv(resolve_path(require(ctx.config, "paths_file"), ctx.config_dir))
    tail_start = int(ctx.config.get("tail_start", paths.shape[1] // 2 + 1)) - 1
    tail_stop = int(ctx.config.get("tail_stop", paths.shape[1]))
    grid_spec = ctx.config.get("grid")
    grid = None
    if grid_spec:
        if "values" in grid_spec:
            grid = np.asarray(grid_spec["values"], dtype=np.float64)
        else:
            grid = np.linspace(float(require(grid_spec, "lo")),
                               float(require(grid_spec, "hi")),
                               int(require(grid_spec, "num")))
    partition = _build_partition(ctx.config.get("partition"), paths, tail_start)
    estimated = estimate_limit_measure(paths, partition, (tail_start, tail_stop), grid)
    mixture = estimated.components
    mix_path = ctx.out / "estimated_mixture.txt"
    save_mixture(mixture, mix_path)
    ks_rows = [(i, w, ks) for i, (w, ks) in
               enumerate(zip(mixture.atom_weights, estimated.ks_per_atom))]
    outputs = [mix_path,
               write_csv(ctx.out / "estimate_ks.csv",
                         ["component", "weight", "split_ks"], ks_rows)]
    if ctx.figures:
        outputs.append(figure_estimated_mixture(estimated, ctx.out / "estimate.png"))
    return outputs, []


def _selection_inputs(ctx: RunContext):
    model = build_model(require(ctx.config, "model"), ctx.config_dir)
    if "mixture" in ctx.config:
        mu = build_mixture(ctx.config["mixture"], ctx.config_dir)
    else:
        if model.mu is None:
            raise CliError("table models need an explicit 'mixture' entry")
        mu = model.mu
    return model, mu


def run_select(ctx: RunContext) -> tuple[list[Path], list[str]]:
    model, mu = _selection_inputs(ctx)
    k_max = int(ctx.config.get("k_max", 8))
    ids, vectors = build_family(ctx.config.get("family"), k_max)
    config = SelectionConfig(
        epsilon=float(ctx.config.get("epsilon", 0.2)),
        k_max=k_max,
        test_family=tuple(vectors),
        family_ids=tuple(ids),
        candidate_stride=int(ctx.config.get("stride", 8)),
        max_candidates=int(ctx.config.get("max_candidates", 400)),
        n_samples=int(ctx.config.get("n_samples", 4000)),
        p=float(ctx.config.get("p", 1.0)),
    )
    result = select_subsequence(model, mu, config, ctx.seed, workers=ctx.workers)
    payload = {
        "indices": list(result.indices),
        "step_deviations": list(result.step_deviations),
        "tol_schedule": list(result.tol_schedule),
        "verified": result.verified,
        "failed_step": result.failed_step,
        "epsilon": config.epsilon,
        "k_max": config.k_max,
        "p": config.p,
        "seed": ctx.seed,
        "worker_count": ctx.workers,
    }
    step_rows = [(r.step, r.candidate, r.deviation, r.std_error,
                  config.tol_schedule(r.step), r.accepted) for r in result.records]
    outputs = [
        write_json(ctx.out / "selection.json", payload),
        write_csv(ctx.out / "selection_steps.csv",
                  ["step", "candidate", "deviation", "std_error", "tol", "accepted"],
                  step_rows),
    ]
    failures = []
    if not result.verified:
        failures.append(f"selection failed at step {result.failed_step}: "
                        f"no candidate met tol={config.tol_schedule(result.failed_step):.3e}")
    if ctx.figures and result.indices:
        outputs.append(figure_selection(result, ctx.out / "select.png"))
    return outputs, failures


def run_verify(ctx: RunContext) -> tuple[list[Path], list[str]]:
    model, mu = _selection_inputs(ctx)
    if "indices" in ctx.config:
        indices = [int(n) for n in ctx.config["indices"]]
    elif "indices_file" in ctx.config:
        payload = json.loads(resolve_path(ctx.config["indices_file"],
                                          ctx.config_dir).read_text())
        indices = [int(n) for n in payload["indices"]]
    else:
        raise CliError("verify needs 'indices' or 'indices_file'")
    if not indices:
        raise CliError("verify received an empty index list")
    ids, vectors = build_family(ctx.config.get("family"), len(indices))
    report = verify_equivalence(
        model, indices, mu,
        p=float(ctx.config.get("p", 1.0)),
        test_family=vectors,
        epsilon=float(ctx.config.get("epsilon", 0.2)),
        n_samples=int(ctx.config.get("n_samples", 20000)),
        seed=ctx.seed,
        C=float(ctx.config.get("C", DEFAULT_C)),
        family_ids=ids,
    )
    rows = [(r.a_id, r.x_norm, r.std_error, r.psi, r.margin_psi_lo, r.margin_psi_hi,
             r.margin_l2_lo, r.margin_l2_hi, r.ok, ctx.seed) for r in report.rows]
    outputs = [write_csv(ctx.out / "verify.csv",
                         ["a_id", "x_norm", "std_error", "psi", "margin_psi_lo",
                          "margin_psi_hi", "margin_l2_lo", "margin_l2_hi", "ok",
                          "seed"], rows)]
    failures = [f"equivalence margin negative for a={r.a_id}"
                for r in report.rows if not r.ok]
    if ctx.figures:
        outputs.append(figure_verification(report, ctx.out / "verify.png"))
    return outputs, failures


def run_necessity(ctx: RunContext) -> tuple[list[Path], list[str]]:
    base = build_mixture(require(ctx.config, "base_mixture"), ctx.config_dir)
    scales = [float(s) for s in ctx.config.get("variance_scales", [1.0, 4.0, 16.0, 64.0])]
    config = NecessityConfig(
        T=float(ctx.config.get("T", 2.0)),
        N_grid=tuple(int(n) for n in ctx.config.get("N_grid", [256, 1024, 4096])),
        variance_scales=tuple(scales),
        n_replicates=int(ctx.config.get("n_replicates", 20000)),
    )
    family = [base.scaled(math.sqrt(s)) for s in scales]
    rows = necessity_experiment(family, config, ctx.seed, scales=scales)
    csv_rows = [(r.family_index, r.scale, r.N, r.T, r.probability, r.std_error,
                 r.K_t, r.proxy, ctx.seed) for r in rows]
    outputs = [write_csv(ctx.out / "necessity.csv",
                         ["family_index", "scale", "N", "T", "probability",
                          "std_error", "K_t", "proxy", "seed"], csv_rows)]
    if ctx.figures:
        outputs.append(figure_necessity(rows, ctx.out / "necessity.png"))
    return outputs, []


def run_clt(ctx: RunContext) -> tuple[list[Path], list[str]]:
    mu = build_mixture(require(ctx.config, "mixture"), ctx.config_dir)
    n_terms = int(ctx.config.get("N", 2000))
    reps = int(ctx.config.get("n_replicates", 5000))
    p = float(ctx.config.get("p", 1.0))
    report = clt_mixture_check(mu, n_terms, reps, ctx.seed)
    samples = clt_samples(mu, n_terms, reps, ctx.seed)
    emp_moment = float(np.mean(np.abs(samples) ** p))
    moment_se = float(np.std(np.abs(samples) ** p, ddof=1)) / math.sqrt(reps)
    predicted = abs_moment_standard_normal(p) * sum(
        w * math.sqrt(law.second_moment()) ** p
        for w, law in zip(mu.atom_weights, mu.laws))
    payload = {
        "N": report.N,
        "ks_distance": report.ks_distance,
        "target_cdf": report.target_cdf,
        "p": p,
        "empirical_abs_moment": emp_moment,
        "predicted_abs_moment": predicted,
        "moment_std_error": moment_se,
        "n_replicates": reps,
        "seed": ctx.seed,
    }
    outputs = [write_json(ctx.out / "clt.json", payload)]
    failures = []
    threshold = ctx.config.get("ks_threshold")
    if threshold is not None and report.ks_distance > float(threshold):
        failures.append(f"KS {report.ks_distance:.4f} exceeds threshold {threshold}")
    if abs(emp_moment - predicted) > 3.0 * moment_se:
        failures.append(
            f"moment gap {abs(emp_moment - predicted):.4f} exceeds 3 standard errors")
    if ctx.figures:
        cdf_values = mixture_normal_cdf(mu, np.sort(samples))
        outputs.append(figure_clt(samples, cdf_values, report.ks_distance,
                                  ctx.out / "clt.png"))
    return outputs, failures


RUNNERS = {
    "metrics": run_metrics,
    "mixture": run_mixture,
    "norms": run_norms,
    "concentration": run_concentration,
    "simulate": run_simulate,
    "estimate": run_estimate,
    "select": run_select,
    "verify": run_verify,
    "necessity": run_necessity,
    "clt": run_clt,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpmix",
        description="Seeded experiments on finite-mixture random measures.")
    parser.add_argument("--version", action="version", version=f"lpmix {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", required=True,
                        help="config path or bundled config name")
        sp.add_argument("--seed", type=int, default=None, help="base seed (u64)")
        sp.add_argument("--workers", type=int, default=None, help="worker count")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default ${'{'}LPMIX_OUT{'}'} or lpmix_out)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable, JSON values)")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, config_dir = load_config_source(args.config)
        config = apply_overrides(config, args.set)
        seed = int(args.seed if args.seed is not None else config.get("seed", 0))
        workers = int(args.workers if args.workers is not None else config.get("workers", 1))
        if workers < 1:
            raise CliError("workers must be at least 1")
        ctx = RunContext(subcommand=args.subcommand, config=config,
                         config_dir=config_dir, seed=seed, workers=workers,
                         out=resolve_out_dir(args.out), figures=not args.no_figures)
        outputs, failures = RUNNERS[args.subcommand](ctx)
        resolved = dict(config)
        resolved["subcommand"] = args.subcommand
        resolved["seed"] = seed
        resolved["workers"] = workers
        manifest = RunManifest(
            subcommand=args.subcommand,
            config_digest=config_digest(resolved),
            seed=seed,
            worker_count=workers,
            artifact_version=__version__,
            output_paths=tuple(sorted(p.name for p in outputs)),
            resolved_config=resolved,
        )
        manifest_path = ctx.out / f"{args.subcommand}_manifest.json"
        manifest.write(manifest_path)
    except (CliError, MeasureFormatError, MixtureFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.subcommand}: wrote {len(outputs) + 1} files to {ctx.out}")
    if failures:
        print(f"{args.subcommand}: {len(failures)} tolerance failure(s)", file=sys.stderr)
        for line in failures:
            print(f"  FAIL {line}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
