"""Command-line experiment runner.

Verbs:
    generate  -- synthesize a biased market and write it as CSV/JSONL
    run       -- run selected algorithms on a dataset and emit reports+figures
    bench     -- scaling benchmark across market sizes
    report    -- re-emit reports/figures from a stored run artifact

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 benchmark
budget exceeded (partial results are still written).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .dataset import (
    DatasetError,
    FileFormat,
    SyntheticConfig,
    dataset_digest,
    generate_synthetic,
    write_dataset,
)
from .experiment import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    bench_csv,
    bench_json,
    emit_report,
    load_artifact,
    run_experiment,
    scaling_benchmark,
)
from . import figures

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_BENCH_TIMEOUT = 3


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on bad flags, not argparse's 2
        raise _CliError(message)


def _parse_groups(raw: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise _CliError(f"bad group spec {part!r}; use name:prob,name:prob")
        name, prob = part.split(":", 1)
        out[name.strip()] = float(prob)
    if not out:
        raise _CliError("empty group distribution")
    return out


def _parse_weights(raw: str) -> tuple[float, float, float]:
    parts = [p for p in raw.split(",") if p.strip()]
    if len(parts) != 3:
        raise _CliError(f"weights need exactly three values, got {raw!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _parse_sizes(raw: str) -> list[tuple[int, int]]:
    sizes = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if "x" in part:
            n, m = part.split("x", 1)
            sizes.append((int(n), int(m)))
        else:
            sizes.append((int(part), int(part)))
    if not sizes:
        raise _CliError("empty size list")
    return sizes


# --------------------------------------------------------------------------
# Config file (INI sections mirroring the flags)
# --------------------------------------------------------------------------

def _read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise _CliError(f"config file {path!r} not found")
    out: dict = {}
    if parser.has_section("experiment"):
        exp = parser["experiment"]
        for key in ("seed", "k", "cf_neighbors"):
            if key in exp:
                out[key] = exp.getint(key)
        for key in ("epsilon", "quality_floor", "split_fraction"):
            if key in exp:
                out[key] = exp.getfloat(key)
        if "algorithms" in exp:
            out["algorithms"] = tuple(
                a.strip() for a in exp["algorithms"].split(",") if a.strip()
            )
        if "weights" in exp:
            out["weights"] = _parse_weights(exp["weights"])
        for key in ("scorer", "group_attr"):
            if key in exp:
                out[key] = exp[key]
        if "output" in exp:
            out["output_dir"] = exp["output"]
    if parser.has_section("synthetic"):
        syn = parser["synthetic"]
        synth: dict = {}
        for key in ("n", "m", "seed"):
            if key in syn:
                synth[key] = syn.getint(key)
        for key in ("alpha", "beta", "homophily", "mean_contacts", "reciprocation_base"):
            if key in syn:
                synth[key] = syn.getfloat(key)
        if "groups" in syn:
            synth["group_distribution"] = _parse_groups(syn["groups"])
        if "groups_b" in syn:
            synth["group_distribution_b"] = _parse_groups(syn["groups_b"])
        out["synthetic"] = synth
    if parser.has_section("files"):
        files = parser["files"]
        if "profiles" in files:
            out["profiles_path"] = files["profiles"]
        if "interactions" in files:
            out["interactions_path"] = files["interactions"]
    return out


_SYNTH_DEFAULTS = dict(
    n=500, m=500, group_distribution={"g0": 0.7, "g1": 0.3},
    alpha=2.0, beta=0.5, homophily=0.3, mean_contacts=20.0,
    reciprocation_base=0.5,
)


def _add_synthetic_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="side-A user count")
    p.add_argument("--m", type=int, help="side-B user count")
    p.add_argument("--groups", type=str, help="group distribution, e.g. g0:0.7,g1:0.3")
    p.add_argument("--groups-b", type=str, help="side-B override of --groups")
    p.add_argument("--alpha", type=float, help="attractiveness bias coefficient")
    p.add_argument("--beta", type=float, help="activity bias coefficient")
    p.add_argument("--homophily", type=float, help="same-group weight boost in [0,1]")
    p.add_argument("--mean-contacts", type=float, help="expected out-degree")
    p.add_argument("--reciprocation-base", type=float, help="base reply probability")


def _synthetic_from_args(args, file_cfg: dict, seed: int) -> SyntheticConfig | None:
    cfg = dict(_SYNTH_DEFAULTS)
    cfg["seed"] = seed
    file_synth = file_cfg.get("synthetic")
    flag_values = {
        "n": args.n, "m": args.m,
        "alpha": args.alpha, "beta": args.beta, "homophily": args.homophily,
        "mean_contacts": args.mean_contacts,
        "reciprocation_base": args.reciprocation_base,
        "group_distribution": _parse_groups(args.groups) if args.groups else None,
        "group_distribution_b": _parse_groups(args.groups_b) if args.groups_b else None,
    }
    any_flag = any(v is not None for v in flag_values.values())
    if file_synth is None and not any_flag and _has_files(args, file_cfg):
        return None
    if file_synth:
        cfg.update(file_synth)
    cfg.update({k: v for k, v in flag_values.items() if v is not None})
    return SyntheticConfig(**cfg)


def _has_files(args, file_cfg: dict) -> bool:
    profiles = getattr(args, "profiles", None) or file_cfg.get("profiles_path")
    interactions = getattr(args, "interactions", None) or file_cfg.get("interactions_path")
    return profiles is not None and interactions is not None


# --------------------------------------------------------------------------
# Verbs
# --------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    seed = args.seed
    synth = SyntheticConfig(
        n=args.n if args.n is not None else _SYNTH_DEFAULTS["n"],
        m=args.m if args.m is not None else _SYNTH_DEFAULTS["m"],
        group_distribution=(
            _parse_groups(args.groups) if args.groups
            else _SYNTH_DEFAULTS["group_distribution"]
        ),
        group_distribution_b=_parse_groups(args.groups_b) if args.groups_b else None,
        alpha=args.alpha if args.alpha is not None else _SYNTH_DEFAULTS["alpha"],
        beta=args.beta if args.beta is not None else _SYNTH_DEFAULTS["beta"],
        homophily=(
            args.homophily if args.homophily is not None
            else _SYNTH_DEFAULTS["homophily"]
        ),
        mean_contacts=(
            args.mean_contacts if args.mean_contacts is not None
            else _SYNTH_DEFAULTS["mean_contacts"]
        ),
        reciprocation_base=(
            args.reciprocation_base if args.reciprocation_base is not None
            else _SYNTH_DEFAULTS["reciprocation_base"]
        ),
        seed=seed,
    )
    profiles, records = generate_synthetic(synth)
    fmt = FileFormat(args.format)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt is FileFormat.CSV else "jsonl"
    ppath = outdir / f"profiles.{ext}"
    ipath = outdir / f"interactions.{ext}"
    write_dataset(profiles, records, ppath, ipath, fmt)
    digest = dataset_digest(profiles, records)
    print(f"profiles:      {ppath}")
    print(f"interactions:  {ipath}")
    print(f"users:         {synth.n}+{synth.m}  contacts: {len(records)}")
    print(f"digest:        {digest}")
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    file_cfg = _read_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else file_cfg.get("seed")
    if seed is None:
        raise _CliError("--seed is required (no implicit randomness)")
    synthetic = _synthetic_from_args(args, file_cfg, seed)
    algorithms = (
        tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        if args.algorithms
        else file_cfg.get("algorithms", ALGORITHMS)
    )

    def pick(flag, key, default):
        if flag is not None:
            return flag
        return file_cfg.get(key, default)

    return ExperimentConfig(
        seed=seed,
        algorithms=algorithms,
        k=pick(args.k, "k", 10),
        epsilon=pick(args.epsilon, "epsilon", 0.1),
        weights=_parse_weights(args.weights) if args.weights else file_cfg.get(
            "weights", (0.6, 0.2, 0.2)
        ),
        quality_floor=pick(args.quality_floor, "quality_floor", 0.8),
        split_fraction=pick(args.split_fraction, "split_fraction", 0.2),
        scorer=pick(args.scorer, "scorer", "reciprocal"),
        group_attr=pick(args.group_attr, "group_attr", "group"),
        cf_neighbors=pick(args.cf_neighbors, "cf_neighbors", 20),
        eval_side=pick(args.eval_side, "eval_side", "A"),
        synthetic=synthetic,
        profiles_path=args.profiles or file_cfg.get("profiles_path"),
        interactions_path=args.interactions or file_cfg.get("interactions_path"),
        output_dir=pick(args.out, "output_dir", "runs"),
    )


def _cmd_run(args) -> int:
    config = _experiment_config(args)
    artifact = run_experiment(config)
    outdir = Path(config.output_dir)
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    for fmt in formats:
        path = emit_report(artifact, fmt, outdir, wide=args.wide)
        print(f"report ({fmt}): {path}")
    if not args.no_figures:
        for path in figures.render_run_figures(artifact, outdir):
            print(f"figure:       {path}")
    print(f"digest:       {artifact.dataset_digest}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = _experiment_config(args)
    sizes = _parse_sizes(args.sizes)
    algorithms = (
        tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        if args.algorithms
        else ("fair_match", "cf")
    )
    result = scaling_benchmark(sizes, config, algorithms, timeout_seconds=args.timeout)
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "bench.json").write_text(bench_json(result), encoding="utf-8")
    (outdir / "bench.csv").write_text(bench_csv(result), encoding="utf-8")
    print(f"bench (json): {outdir / 'bench.json'}")
    print(f"bench (csv):  {outdir / 'bench.csv'}")
    if not args.no_figures:
        path = figures.scaling_figure(result, outdir)
        print(f"figure:       {path}")
    for name, slope in sorted(result.slopes.items()):
        print(f"slope[{name}] vs n*m: {slope if slope is not None else 'null'}")
    return EXIT_BENCH_TIMEOUT if result.aborted else EXIT_OK


def _cmd_report(args) -> int:
    artifact = load_artifact(args.artifact)
    outdir = Path(args.out) if args.out else Path(args.artifact).parent
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    for fmt in formats:
        path = emit_report(artifact, fmt, outdir, wide=args.wide)
        print(f"report ({fmt}): {path}")
    if not args.no_figures:
        for path in figures.render_run_figures(artifact, outdir):
            print(f"figure:       {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairmatch", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a biased market")
    _add_synthetic_flags(g)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    g.add_argument("--out", type=str, required=True, help="output directory")
    g.set_defaults(func=_cmd_generate)

    def add_run_flags(p):
        p.add_argument("--config", type=str, help="INI config file")
        p.add_argument("--profiles", type=str, help="profiles CSV/JSONL")
        p.add_argument("--interactions", type=str, help="interactions CSV/JSONL")
        _add_synthetic_flags(p)
        p.add_argument("--algorithms", type=str,
                       help=f"comma list from {','.join(ALGORITHMS)}")
        p.add_argument("--k", type=int, help="list length K")
        p.add_argument("--epsilon", type=float, help="fairness tolerance")
        p.add_argument("--weights", type=str, help="w1,w2,w3")
        p.add_argument("--quality-floor", dest="quality_floor", type=float)
        p.add_argument("--split-fraction", dest="split_fraction", type=float)
        p.add_argument("--scorer", choices=["reciprocal", "algorithmic"])
        p.add_argument("--group-attr", dest="group_attr", type=str)
        p.add_argument("--cf-neighbors", dest="cf_neighbors", type=int)
        p.add_argument("--eval-side", dest="eval_side", choices=["A", "B"],
                       help="side whose lists drive precision/recall/NDCG")
        p.add_argument("--seed", type=int, help="master seed (required)")
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--no-figures", action="store_true")

    r = sub.add_parser("run", help="run an experiment and emit reports")
    add_run_flags(r)
    r.add_argument("--formats", type=str, default="json,csv,md")
    r.add_argument("--wide", action="store_true", help="wide CSV layout")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bench", help="scaling benchmark")
    add_run_flags(b)
    b.add_argument("--sizes", type=str, required=True,
                   help="comma list, e.g. 100,200,400 or 100x100,200x200")
    b.add_argument("--timeout", type=float, default=300.0,
                   help="per-size budget in seconds")
    b.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="re-emit reports from an artifact")
    p.add_argument("--artifact", type=str, required=True, help="report.json path")
    p.add_argument("--formats", type=str, default="csv,md")
    p.add_argument("--wide", action="store_true", help="wide CSV layout")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (_CliError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
