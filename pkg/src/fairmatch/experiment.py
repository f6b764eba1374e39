"""End-to-end experiment orchestration: load or generate a market, split,
run the selected algorithms, evaluate, and serialize comparison reports and
scaling benchmarks.

Everything is deterministic given (config, seed): the dataset digest and all
metric values are byte-stable across reruns; only the ``timing`` block
varies.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import (
    InteractionGraph,
    Side,
    SyntheticConfig,
    UserProfile,
    build_graph,
    dataset_digest,
    generate_synthetic,
    load_interactions,
    split_holdout,
)
from .fairness import ObjectiveWeights
from .metrics import EvaluationInput, MetricsReport, evaluate_lists
from .recommenders import (
    FLAG_COLD_START,
    FLAG_FAIRNESS_FALLBACK,
    FairMatchParams,
    RecommendationList,
    recommend_cf,
    recommend_fair_match,
    recommend_gale_shapley,
    recommend_recon,
)
from .similarity import ScoreEngine

ALGORITHMS = ("fair_match", "cf", "recon", "gale_shapley")

METRIC_COLUMNS = (
    "precision_at_k",
    "recall_at_k",
    "ndcg_at_k",
    "jain_index",
    "demographic_parity",
    "crecall",
    "cprecision",
    "fairness_score",
    "bias_alpha",
    "bias_beta",
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: dataset source, algorithm selection, and knobs."""

    seed: int
    algorithms: tuple[str, ...] = ALGORITHMS
    k: int = 10
    epsilon: float = 0.1
    weights: tuple[float, float, float] = (0.6, 0.2, 0.2)
    quality_floor: float = 0.8
    split_fraction: float = 0.2
    scorer: str = "reciprocal"
    group_attr: str = "group"
    cf_neighbors: int = 20
    eval_side: str = "A"
    synthetic: SyntheticConfig | None = None
    profiles_path: str | None = None
    interactions_path: str | None = None
    output_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.eval_side not in ("A", "B"):
            raise ConfigError(f"eval_side must be 'A' or 'B', got {self.eval_side!r}")
        if not self.algorithms:
            raise ConfigError("select at least one algorithm")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {ALGORITHMS}")
        if self.k < 1:
            raise ConfigError(f"K must be >= 1, got {self.k}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction {self.split_fraction} outside (0, 1)")
        has_files = self.profiles_path is not None and self.interactions_path is not None
        if self.synthetic is None and not has_files:
            raise ConfigError("configure either a synthetic market or dataset files")
        if self.synthetic is not None and has_files:
            raise ConfigError("configure synthetic OR files, not both")
        ObjectiveWeights(*self.weights)  # validates

    def echo(self) -> dict:
        """Full config as a JSON-canonical dict, every default included."""
        out = asdict(self)
        out["algorithms"] = list(self.algorithms)
        out["weights"] = list(self.weights)
        if self.synthetic is not None:
            synth = asdict(self.synthetic)
            synth["group_distribution"] = dict(self.synthetic.group_distribution)
            if self.synthetic.group_distribution_b is not None:
                synth["group_distribution_b"] = dict(self.synthetic.group_distribution_b)
            out["synthetic"] = synth
        return out


@dataclass
class RunArtifact:
    """Everything one run produced, minus the recommendation lists."""

    config: dict
    seed: int
    dataset_digest: str
    reports: dict[str, MetricsReport]
    flags: dict[str, dict[str, int]]
    timing: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "dataset_digest": self.dataset_digest,
            "reports": {a: r.to_dict() for a, r in sorted(self.reports.items())},
            "flags": {a: dict(sorted(f.items())) for a, f in sorted(self.flags.items())},
            "timing": dict(sorted(self.timing.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunArtifact":
        return cls(
            config=dict(data["config"]),
            seed=int(data["seed"]),
            dataset_digest=str(data["dataset_digest"]),
            reports={
                a: MetricsReport.from_dict(r) for a, r in data["reports"].items()
            },
            flags={a: dict(f) for a, f in data.get("flags", {}).items()},
            timing=dict(data.get("timing", {})),
        )


def _load_or_generate(config: ExperimentConfig):
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    return load_interactions(config.interactions_path, config.profiles_path)


def _run_algorithm(
    name: str,
    config: ExperimentConfig,
    profiles: Mapping[str, UserProfile],
    train: InteractionGraph,
    engine: ScoreEngine,
) -> dict[str, RecommendationList]:
    if name == "fair_match":
        params = FairMatchParams(
            k=config.k,
            epsilon=config.epsilon,
            weights=ObjectiveWeights(*config.weights),
            quality_floor=config.quality_floor,
            scorer=config.scorer,
            group_attr=config.group_attr,
        )
        return recommend_fair_match(profiles, train, params, engine)
    if name == "cf":
        return recommend_cf(train, config.k, config.cf_neighbors, engine)
    if name == "recon":
        return recommend_recon(profiles, train, config.k)
    if name == "gale_shapley":
        lists, _ = recommend_gale_shapley(train, config.k, engine)
        return lists
    raise ConfigError(f"unknown algorithm {name!r}")


def run_experiment(config: ExperimentConfig) -> RunArtifact:
    """Deterministic end-to-end run producing one comparison artifact."""
    timing: dict[str, float] = {}

    t0 = time.perf_counter()
    profiles, records = _load_or_generate(config)
    digest = dataset_digest(profiles, records)
    timing["dataset"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    graph = build_graph(profiles, records)
    split = split_holdout(graph, config.split_fraction, config.seed)
    timing["split"] = time.perf_counter() - t0

    engine = ScoreEngine(split.train)
    reports: dict[str, MetricsReport] = {}
    flags: dict[str, dict[str, int]] = {}
    for name in config.algorithms:
        t0 = time.perf_counter()
        lists = _run_algorithm(name, config, profiles, split.train, engine)
        timing[f"recommend.{name}"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        reports[name] = evaluate_lists(
            EvaluationInput(
                lists=lists,
                heldout=split.heldout,
                k=config.k,
                graph=split.train,
                profiles=profiles,
                group_attr=config.group_attr,
                eval_side=Side(config.eval_side),
            )
        )
        timing[f"evaluate.{name}"] = time.perf_counter() - t0
        flags[name] = {
            FLAG_FAIRNESS_FALLBACK: sum(
                1 for r in lists.values() if FLAG_FAIRNESS_FALLBACK in r.flags
            ),
            FLAG_COLD_START: sum(1 for r in lists.values() if FLAG_COLD_START in r.flags),
        }

    return RunArtifact(
        config=config.echo(),
        seed=config.seed,
        dataset_digest=digest,
        reports=reports,
        flags=flags,
        timing=timing,
    )


# --------------------------------------------------------------------------
# Report serialization
# --------------------------------------------------------------------------

def artifact_json(artifact: RunArtifact) -> str:
    """Canonical JSON text; identical configs produce identical bytes except
    inside the ``timing`` block."""
    return json.dumps(artifact.to_dict(), indent=2, sort_keys=True) + "\n"


def comparison_csv(artifact: RunArtifact, wide: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if wide:
        writer.writerow(["algorithm", *METRIC_COLUMNS])
        for algo in sorted(artifact.reports):
            rep = artifact.reports[algo].to_dict()
            writer.writerow([algo, *(repr(rep[c]) for c in METRIC_COLUMNS)])
    else:
        writer.writerow(["algorithm", "metric", "value"])
        for algo in sorted(artifact.reports):
            rep = artifact.reports[algo].to_dict()
            for c in METRIC_COLUMNS:
                writer.writerow([algo, c, repr(rep[c])])
    return buf.getvalue()


def comparison_markdown(artifact: RunArtifact) -> str:
    """Comparison table, one row per algorithm, plain unstyled values."""
    headers = ["Algorithm", "Precision@K", "Recall@K", "NDCG@K", "Jain's Index",
               "Demographic Parity", "CRecall", "CPrecision", "Fairness Score"]
    cols = ("precision_at_k", "recall_at_k", "ndcg_at_k", "jain_index",
            "demographic_parity", "crecall", "cprecision", "fairness_score")
    lines = ["| " + " | ".join(headers) + " |",
             "|" + "|".join("---" for _ in headers) + "|"]
    for algo in sorted(artifact.reports):
        rep = artifact.reports[algo].to_dict()
        cells = [algo] + [f"{rep[c]:.4f}" for c in cols]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(
    artifact: RunArtifact, fmt: str, output_dir: str | Path, stem: str = "report",
    wide: bool = False,
) -> Path:
    """Write one report file; returns its path."""
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = outdir / f"{stem}.json"
        path.write_text(artifact_json(artifact), encoding="utf-8")
    elif fmt == "csv":
        path = outdir / f"{stem}.csv"
        path.write_text(comparison_csv(artifact, wide=wide), encoding="utf-8")
    elif fmt == "md":
        path = outdir / f"{stem}.md"
        path.write_text(comparison_markdown(artifact), encoding="utf-8")
    else:
        raise ConfigError(f"unknown report format {fmt!r}; use json, csv, or md")
    return path


def load_artifact(path: str | Path) -> RunArtifact:
    with open(path, encoding="utf-8") as fh:
        return RunArtifact.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# Scaling benchmark
# --------------------------------------------------------------------------

@dataclass
class BenchRow:
    n: int
    m: int
    status: str = "ok"  # ok | over_budget | aborted
    seconds: dict[str, float] = field(default_factory=dict)
    memory_estimate_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "status": self.status,
            "seconds": dict(sorted(self.seconds.items())),
            "memory_estimate_bytes": self.memory_estimate_bytes,
        }


@dataclass
class BenchResult:
    rows: list[BenchRow]
    slopes: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "slopes": dict(sorted(self.slopes.items())),
        }

    @property
    def aborted(self) -> bool:
        return any(r.status != "ok" for r in self.rows)


def _bench_synthetic(template: SyntheticConfig | None, n: int, m: int, seed: int) -> SyntheticConfig:
    base = template or SyntheticConfig(
        n=2, m=2, group_distribution={"g0": 0.7, "g1": 0.3},
        alpha=2.0, beta=0.5, homophily=0.3, mean_contacts=20.0,
    )
    return SyntheticConfig(
        n=n, m=m,
        group_distribution=base.group_distribution,
        alpha=base.alpha, beta=base.beta, homophily=base.homophily,
        mean_contacts=base.mean_contacts,
        reciprocation_base=base.reciprocation_base,
        seed=seed,
    )


def scaling_benchmark(
    sizes: Sequence[tuple[int, int]],
    config: ExperimentConfig,
    algorithms: Sequence[str] = ("fair_match", "cf"),
    timeout_seconds: float = 300.0,
    repeats: int = 1,
) -> BenchResult:
    """Time the recommenders across market sizes and fit log-log slopes.

    Sizes must be ascending.  Each size runs ``repeats`` times and records
    the minimum wall-clock per algorithm (scheduler noise is additive, so the
    minimum is the cleanest scaling signal).  When a size's total elapsed
    exceeds the per-size budget its row is marked ``over_budget`` and the
    remaining (larger) sizes are recorded as ``aborted`` without running;
    completed rows stay intact.  Slopes are least-squares fits of
    log(seconds) against log(n*m) over completed rows.
    """
    works = [n * m for n, m in sizes]
    if sorted(works) != list(works):
        raise ConfigError("benchmark sizes must be sorted ascending by n*m")

    rows: list[BenchRow] = []
    stop = False
    for n, m in sizes:
        row = BenchRow(n=n, m=m)
        if stop:
            row.status = "aborted"
            rows.append(row)
            continue
        synth = _bench_synthetic(config.synthetic, n, m, config.seed)
        profiles, records = generate_synthetic(synth)
        graph = build_graph(profiles, records)
        split = split_holdout(graph, config.split_fraction, config.seed)
        size_start = time.perf_counter()
        for rep in range(max(repeats, 1)):
            engine = ScoreEngine(split.train)
            for name in algorithms:
                t0 = time.perf_counter()
                lists = _run_algorithm(name, config, profiles, split.train, engine)
                elapsed = time.perf_counter() - t0
                prior = row.seconds.get(name)
                row.seconds[name] = elapsed if prior is None else min(prior, elapsed)
                entries = sum(len(r.items) for r in lists.values())
                row.memory_estimate_bytes = max(
                    row.memory_estimate_bytes,
                    (n * n + m * m + 3 * n * m) * 8 + entries * 64,
                )
        if time.perf_counter() - size_start > timeout_seconds:
            row.status = "over_budget"
            stop = True
        rows.append(row)

    slopes: dict[str, float | None] = {}
    for name in algorithms:
        pts = [
            (math.log(r.n * r.m), math.log(r.seconds[name]))
            for r in rows
            if r.status in ("ok", "over_budget") and r.seconds.get(name, 0) > 0
        ]
        if len(pts) < 2:
            slopes[name] = None
        else:
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            slopes[name] = float(np.polyfit(xs, ys, 1)[0])
    return BenchResult(rows=rows, slopes=slopes)


def bench_json(result: BenchResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"


def bench_csv(result: BenchResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    algos = sorted({a for r in result.rows for a in r.seconds})
    writer.writerow(["n", "m", "status", *(f"seconds_{a}" for a in algos),
                     "memory_estimate_bytes"])
    for r in result.rows:
        writer.writerow([
            r.n, r.m, r.status,
            *(repr(r.seconds.get(a, "")) if a in r.seconds else "" for a in algos),
            r.memory_estimate_bytes,
        ])
    return buf.getvalue()
