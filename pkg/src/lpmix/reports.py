"""Report persistence: delimited output, run manifests, and figures.

Everything written here is deterministic for a fixed resolved config and
seed: floats are formatted with a fixed rule, JSON keys are sorted, and the
figures carry fixed metadata, so identical manifests produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

OUT_DIR_ENV = "LPMIX_OUT"
DEFAULT_OUT_DIR = "lpmix_out"


def resolve_out_dir(out: str | None) -> Path:
    path = Path(out or os.environ.get(OUT_DIR_ENV, DEFAULT_OUT_DIR))
    path.mkdir(parents=True, exist_ok=True)
    return path


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} != header width {len(header)}")
        lines.append(",".join(format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="ascii")
    return path


def config_digest(resolved_config: dict) -> str:
    canonical = json.dumps(resolved_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_digest: str
    seed: int
    worker_count: int
    artifact_version: str
    output_paths: tuple[str, ...]
    resolved_config: dict

    def write(self, path: Path) -> Path:
        return write_json(path, asdict(self))


# -- figures ---------------------------------------------------------------

_FIG_KW = dict(dpi=150, metadata={"Software": "lpmix"})


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_FIG_KW)
    plt.close(fig)
    return path


def figure_quantiles(measures, labels, path: Path) -> Path:
    """Overlay of the quantile step functions of several measures."""
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = np.linspace(1e-4, 1.0, 2001)
    for nu, label in zip(measures, labels):
        ax.step(grid, nu.quantile_array(grid), where="post", label=label, lw=1.2)
    ax.set_xlabel("u")
    ax.set_ylabel("quantile")
    ax.legend(fontsize=8)
    ax.set_title("quantile functions")
    fig.tight_layout()
    return _save(fig, path)


def figure_envelopes(report, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(report.t_grid, report.K_t, "o-", label="K_t (inf truncated 2nd moment)")
    ax.plot(report.t_grid, report.eps_t, "s--", label="eps_t (sup tail mass)")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("component envelopes")
    fig.tight_layout()
    return _save(fig, path)


def figure_two_sided(rows_by_p, path: Path) -> Path:
    """Estimated norms against the two-sided ell2 bounds, one panel per p."""
    fig, axes = plt.subplots(1, len(rows_by_p), figsize=(5 * len(rows_by_p), 4),
                             squeeze=False)
    for ax, (p, report) in zip(axes[0], sorted(rows_by_p.items())):
        lo = [r.bound_lo for r in report.rows]
        hi = [r.bound_hi for r in report.rows]
        val = [r.psi.value for r in report.rows]
        err = [3 * r.psi.std_error for r in report.rows]
        x = np.arange(len(val))
        ax.fill_between(x, lo, hi, alpha=0.25, label="[A,B] band")
        ax.errorbar(x, val, yerr=err, fmt="k.", ms=4, label="psi estimate")
        ax.set_xlabel("coefficient vector")
        ax.set_ylabel("norm")
        ax.set_title(f"p = {p}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def figure_concentration(rows, path: Path) -> Path:
    """Empirical small-ball probabilities and bounds against n, log-log."""
    fig, ax = plt.subplots(figsize=(6, 4))
    by_key: dict = {}
    for row in rows:
        by_key.setdefault((row["law_id"], row["t"]), []).append(row)
    for (law_id, t), cells in sorted(by_key.items()):
        cells.sort(key=lambda r: r["n"])
        ns = [c["n"] for c in cells]
        ax.plot(ns, [c["empirical"] for c in cells], "o-", lw=1,
                label=f"{law_id} emp t={t}")
        if any(c["valid"] for c in cells):
            ax.plot(ns, [c["esseen"] for c in cells], "--", lw=1,
                    label=f"{law_id} bound t={t}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("P(|S_n| <= t)")
    ax.legend(fontsize=6)
    ax.set_title("concentration vs bound")
    fig.tight_layout()
    return _save(fig, path)


def figure_paths(matrix, path: Path, n_show: int = 20) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    cols = np.arange(1, matrix.shape[1] + 1)
    for row in matrix[:n_show]:
        axes[0].plot(cols, row, lw=0.5, alpha=0.5)
    axes[0].set_xlabel("n")
    axes[0].set_ylabel("X_n")
    axes[0].set_title("sample paths")
    axes[1].plot(cols, matrix.var(axis=0, ddof=1), lw=1)
    axes[1].set_xlabel("n")
    axes[1].set_ylabel("column variance")
    axes[1].set_title("variance by column")
    fig.tight_layout()
    return _save(fig, path)


def figure_estimated_mixture(estimated, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    mixture = estimated.components
    for w, law, ks in zip(mixture.atom_weights, mixture.laws, estimated.ks_per_atom):
        grid = np.concatenate([[law.points[0] - 0.5], law.points, [law.points[-1] + 0.5]])
        cdf = [law.cdf(t) for t in grid]
        ax.step(grid, cdf, where="post", label=f"w={w:.3f}, split-KS={ks:.3f}")
    ax.set_xlabel("x")
    ax.set_ylabel("CDF")
    ax.legend(fontsize=8)
    ax.set_title("estimated component laws")
    fig.tight_layout()
    return _save(fig, path)


def figure_selection(result, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = np.arange(1, len(result.step_deviations) + 1)
    ax.semilogy(steps, result.tol_schedule[: steps.size], "s--", label="tolerance eps/2^k")
    ax.semilogy(steps, result.step_deviations, "o-", label="accepted deviation")
    for k, n in zip(steps, result.indices):
        ax.annotate(f"n={n}", (k, result.step_deviations[k - 1]), fontsize=7,
                    textcoords="offset points", xytext=(0, 6))
    ax.set_xlabel("step k")
    ax.set_ylabel("normalized deviation")
    ax.legend(fontsize=8)
    ax.set_title("inductive selection")
    fig.tight_layout()
    return _save(fig, path)


def figure_verification(report, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ids = [r.a_id for r in report.rows]
    margins = np.array([[r.margin_psi_lo, r.margin_psi_hi, r.margin_l2_lo, r.margin_l2_hi]
                        for r in report.rows])
    x = np.arange(len(ids))
    for j, label in enumerate(["psi lo", "psi hi", "l2 lo", "l2 hi"]):
        ax.plot(x, margins[:, j], ".", label=label)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=90, fontsize=6)
    ax.set_ylabel("margin (>= 0 passes)")
    ax.legend(fontsize=8)
    ax.set_title("equivalence margins")
    fig.tight_layout()
    return _save(fig, path)


def figure_necessity(rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    by_n: dict = {}
    for row in rows:
        by_n.setdefault(row.N, []).append(row)
    for n, cells in sorted(by_n.items()):
        cells.sort(key=lambda r: r.scale)
        scales = [c.scale for c in cells]
        ax.plot(scales, [c.probability for c in cells], "o-", label=f"empirical N={n}")
    last = max(by_n)
    cells = sorted(by_n[last], key=lambda r: r.scale)
    ax.plot([c.scale for c in cells], [min(c.proxy, 1.0) for c in cells], "k--",
            label="proxy T/sqrt(K) (capped)")
    ax.axhline(0.5, color="r", lw=0.8, ls=":")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("variance scale")
    ax.set_ylabel("P(|sum/sqrt(N)| <= T)")
    ax.legend(fontsize=8)
    ax.set_title("anti-concentration along the family")
    fig.tight_layout()
    return _save(fig, path)


def figure_clt(samples, cdf_values, ks, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    s = np.sort(samples)
    ecdf = np.arange(1, s.size + 1) / s.size
    ax.step(s, ecdf, where="post", lw=1, label="empirical")
    ax.plot(s, cdf_values, "r--", lw=1, label="mixture of normals")
    ax.set_xlabel("x")
    ax.set_ylabel("CDF")
    ax.set_title(f"normalized sums vs target (KS = {ks:.4f})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
