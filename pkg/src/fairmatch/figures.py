"""Figure rendering for run and benchmark reports.

Figures are written next to the delimited reports so a run directory is
self-contained; every renderer returns the written path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiment import BenchResult, RunArtifact

_BAR_METRICS = (
    ("precision_at_k", "Precision@K"),
    ("recall_at_k", "Recall@K"),
    ("ndcg_at_k", "NDCG@K"),
    ("jain_index", "Jain"),
    ("demographic_parity", "Dem. parity"),
    ("crecall", "CRecall"),
    ("cprecision", "CPrecision"),
    ("fairness_score", "Fairness"),
)


def comparison_figure(artifact: RunArtifact, output_dir: str | Path) -> Path:
    """Grouped bar chart of the rate metrics, one series per algorithm."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "metrics_comparison.png"

    algos = sorted(artifact.reports)
    n_metrics = len(_BAR_METRICS)
    width = 0.8 / max(len(algos), 1)

    fig, ax = plt.subplots(figsize=(10, 4.5))
    for i, algo in enumerate(algos):
        rep = artifact.reports[algo].to_dict()
        xs = [j + i * width for j in range(n_metrics)]
        ax.bar(xs, [rep[key] for key, _ in _BAR_METRICS], width=width, label=algo)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(n_metrics)])
    ax.set_xticklabels([label for _, label in _BAR_METRICS], rotation=20, ha="right")
    ax.set_ylabel("value")
    ax.set_title(f"Algorithm comparison (seed {artifact.seed})")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def bias_figure(artifact: RunArtifact, output_dir: str | Path) -> Path:
    """Fitted exposure-bias coefficients per algorithm."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "bias_coefficients.png"

    algos = sorted(artifact.reports)
    alphas = [artifact.reports[a].bias_alpha for a in algos]
    betas = [artifact.reports[a].bias_beta for a in algos]

    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(algos))
    ax.bar([x - 0.18 for x in xs], alphas, width=0.36, label="attractiveness coef.")
    ax.bar([x + 0.18 for x in xs], betas, width=0.36, label="activity coef.")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(algos, rotation=15, ha="right")
    ax.set_ylabel("fitted coefficient")
    ax.set_title("Exposure bias model")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def scaling_figure(result: BenchResult, output_dir: str | Path) -> Path:
    """Log-log runtime vs n*m with the fitted slope in the legend."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "scaling_loglog.png"

    fig, ax = plt.subplots(figsize=(7, 4.5))
    algos = sorted({a for r in result.rows for a in r.seconds})
    for algo in algos:
        pts = [
            (r.n * r.m, r.seconds[algo])
            for r in result.rows
            if algo in r.seconds and r.seconds[algo] > 0
        ]
        if not pts:
            continue
        slope = result.slopes.get(algo)
        label = algo if slope is None else f"{algo} (slope {slope:.2f})"
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=label)
    ax.set_xlabel("n * m")
    ax.set_ylabel("seconds")
    ax.set_title("Runtime scaling")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
    return path


def render_run_figures(artifact: RunArtifact, output_dir: str | Path) -> list[Path]:
    return [comparison_figure(artifact, output_dir), bias_figure(artifact, output_dir)]
