"""
piu: simulate data, fit propensities, train, evaluate, sweep λ and report.

Output layout under the resolved output directory:

    checkpoints/   classifier checkpoints (JSON)
    traces/        per-epoch training traces (CSV) and wall-clock sidecars (*.timing.csv)
    reports/       fairness reports (CSV + text), sweep summaries
    plots/         SVG views of reports and sweeps
    propensity/    frozen propensity models
    metadata.json  timestamps, package versions, resolved configs

Exit codes: 0 success, 2 configuration or validation error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from datetime import datetime
from importlib import metadata as importlib_metadata
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from causal.graph import graph_to_dict
from causal.presets import PRESETS, get_preset
from causal.sem import sem_from_dict, sem_to_dict
from estimation.ipw import RecipePropensities, fit_recipe_propensities, recipe_from_graph
from estimation.propensity import PropensityConfig, load_propensity, save_propensity
from evaluation.metrics import evaluate, format_reports, reports_frame, write_reports_csv
from evaluation.plots import plot_statistics, plot_sweep
from training.model import load_checkpoint, save_checkpoint
from training.pipeline import REGIMES, load_experiment_data, prepare_context, run_regime, train_config
from training.penalties import PENALTY_KINDS
from training.train import TrainConfig, TrainingDivergedError
from utils.config_utils import (
    DEFAULT_OUTPUT_DIR,
    DEFAULT_SEED,
    ENV_OUTPUT_DIR,
    ENV_SEED,
    EvaluationConfig,
    derive_seed,
    load_experiment,
    load_graph_config,
    resolve_setting,
    write_json,
)
from utils.data_utils import Schema, load_csv, read_csv, synth_preset, write_csv

logger = logging.getLogger("piu")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

PROPENSITY_PARTS = ("c", "c_mpi", "full")
FINGERPRINT_FILE = "fingerprint.json"
PACKAGES = ("numpy", "scipy", "pandas", "networkx", "scikit-learn", "matplotlib", "tqdm")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _versions():
    versions = {}
    for name in PACKAGES:
        try:
            versions[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_metadata(out_dir: Path, key: str, resolved: dict) -> None:
    """Record one run in metadata.json; the only file carrying wall-clock timestamps."""
    path = out_dir / "metadata.json"
    payload = {"runs": {}}
    if path.exists():
        with open(path) as f:
            payload = json.load(f)
    payload["versions"] = _versions()
    payload["runs"][key] = {"timestamp": datetime.now().isoformat(), "config": resolved}
    write_json(payload, path)


def propensity_fingerprint(data, propensity: PropensityConfig) -> dict:
    """Graph, π, training-row hash and fit settings behind a set of frozen propensities."""
    rows = pd.util.hash_pandas_object(data.train.frame, index=False).to_numpy()
    return {
        "graph": graph_to_dict(data.graph, data.pi),
        "rows": hashlib.sha256(rows.tobytes()).hexdigest(),
        "n": len(data.train),
        "propensity": asdict(propensity),
    }


def save_propensities(propensities: RecipePropensities, directory: Path, fingerprint: dict | None = None) -> None:
    for part in PROPENSITY_PARTS:
        save_propensity(getattr(propensities, part), directory / f"{part}.json")
    if fingerprint is not None:
        write_json(fingerprint, directory / FINGERPRINT_FILE)


def load_propensities(directory: Path, fingerprint: dict | None = None) -> RecipePropensities | None:
    """
    Frozen propensities from a directory, or None when absent.

    With a fingerprint, stored models are only returned if they were fitted
    under the same one.
    """
    paths = [directory / f"{part}.json" for part in PROPENSITY_PARTS]
    if not all(p.exists() for p in paths):
        return None
    if fingerprint is not None:
        path = directory / FINGERPRINT_FILE
        stored = json.loads(path.read_text()) if path.exists() else None
        # round-trip so tuples compare as lists
        if stored != json.loads(json.dumps(fingerprint)):
            logger.info("Propensities in %s were fitted on other data or settings; refitting", directory)
            return None
    return RecipePropensities(*(load_propensity(p) for p in paths))


def _banner(title):
    print(f"\n{'='*60}")
    print(title)
    print(f"{'='*60}")


def _experiment(args):
    config = load_experiment(args.config, seed=args.seed, output_dir=args.output_dir, data_dir=args.data_dir)
    return config, Path(config.output_dir)


def _context(config, data, out_dir):
    propensity = PropensityConfig(**{**config.propensity, "seed": derive_seed(config.seed, "propensity")})
    fingerprint = propensity_fingerprint(data, propensity)
    cached = load_propensities(out_dir / "propensity", fingerprint)
    if cached is not None:
        logger.info("Reusing propensities from %s", out_dir / "propensity")
    ctx = prepare_context(data.train, data.graph, data.pi, sem=data.sem, propensity=propensity,
                          propensities=cached)
    if cached is None and ctx.propensities is not None:
        save_propensities(ctx.propensities, out_dir / "propensity", fingerprint)
    return ctx


def _train_config(config) -> TrainConfig:
    return TrainConfig.from_dict({**config.train, "seed": config.seed})


def _emit_report(reports, out_dir, tag):
    write_reports_csv(reports, out_dir / "reports" / f"{tag}.csv")
    text = format_reports(reports)
    (out_dir / "reports" / f"{tag}.txt").write_text(text + "\n")
    plot_statistics(reports_frame(reports), out_dir / "plots" / f"{tag}.svg")
    print(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    seed = resolve_setting(args.seed, ENV_SEED, None, DEFAULT_SEED, cast=int)
    out_dir = Path(resolve_setting(args.out, ENV_OUTPUT_DIR, None, DEFAULT_OUTPUT_DIR))
    _banner(f"Simulating preset '{args.preset}' (n={args.n}, seed={seed})")

    print("\n[1/2] Sampling data...")
    data, sem = synth_preset(args.preset, args.n, derive_seed(seed, "data"))
    preset = get_preset(args.preset)

    print("[2/2] Writing artifacts...")
    write_csv(data, out_dir / f"{args.preset}.csv")
    write_json(sem_to_dict(sem, preset.outcome), out_dir / f"{args.preset}.sem.json")
    write_json(graph_to_dict(sem.graph, preset.pi), out_dir / f"{args.preset}.graph.json")
    write_metadata(out_dir, f"simulate:{args.preset}", {"preset": args.preset, "n": args.n, "seed": seed})
    print(f"   {len(data)} rows, columns {list(data.frame.columns)} → {out_dir}")
    return EXIT_OK


def cmd_fit_propensity(args) -> int:
    config, out_dir = _experiment(args)
    _banner(f"Fitting propensities: {config.name}")
    data = load_experiment_data(config)
    recipe = recipe_from_graph(data.graph, data.pi)
    print(f"   Weight recipe: {recipe}")
    propensity = PropensityConfig(**{**config.propensity, "seed": derive_seed(config.seed, "propensity")})
    propensities = fit_recipe_propensities(data.train, recipe, propensity)
    save_propensities(propensities, out_dir / "propensity", propensity_fingerprint(data, propensity))
    write_metadata(out_dir, f"fit-propensity:{config.name}", config.to_dict())
    print(f"   Saved to {out_dir / 'propensity'}")
    return EXIT_OK


def cmd_train(args) -> int:
    config, out_dir = _experiment(args)
    tag = f"{config.name}-{args.regime}" if args.regime else config.name
    _banner(f"Training: {tag}")

    print("\n[1/3] Loading data...")
    data = load_experiment_data(config)
    print("[2/3] Preparing propensities...")
    ctx = _context(config, data, out_dir)

    print("[3/3] Training...")
    base = _train_config(config)
    try:
        if args.regime:
            selection = None if args.lam is not None else config.selection
            outcome = run_regime(args.regime, ctx, base, lam=args.lam, selection=selection,
                                 evaluation=config.evaluation, progress=True)
            train_cfg, result, table = outcome.config, outcome.result, outcome.selection
        else:
            train_cfg = base if args.lam is None else replace(base, lam=args.lam)
            result, table = train_config(ctx, train_cfg, progress=True), None
    except TrainingDivergedError as e:
        save_checkpoint(e.last_good, out_dir / "checkpoints" / f"{tag}.last_good.json")
        raise

    save_checkpoint(result.classifier, out_dir / "checkpoints" / f"{tag}.json")
    _write_frame(result.trace, out_dir / "traces" / f"{tag}.csv")
    _write_frame(result.timing, out_dir / "traces" / f"{tag}.timing.csv")
    if table is not None:
        _write_frame(table, out_dir / "reports" / f"{tag}.selection.csv")
    write_metadata(out_dir, f"train:{tag}", {**config.to_dict(), "train": train_cfg.to_dict()})
    last = result.trace.iloc[-1] if len(result.trace) else None
    print(f"   penalty={train_cfg.penalty} λ={train_cfg.lam:.2f}"
          + (f" final loss={last['loss']:.4f}" if last is not None else ""))
    return EXIT_OK


def _write_frame(frame, path: Path) -> pd.DataFrame:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return frame


def cmd_eval(args) -> int:
    config, out_dir = _experiment(args)
    checkpoint = Path(args.checkpoint)
    tag = args.label or checkpoint.stem
    _banner(f"Evaluating: {tag}")

    print("\n[1/2] Loading data and checkpoint...")
    data = load_experiment_data(config)
    classifier = load_checkpoint(checkpoint)
    ctx = _context(config, data, out_dir)

    print("[2/2] Computing statistics...")
    report = evaluate(classifier, data.test, data.graph, data.pi, ctx.recipe, ctx.propensities,
                      sem=data.sem, seed=config.seed, config=config.evaluation)
    _emit_report({tag: report}, out_dir, tag)
    write_metadata(out_dir, f"eval:{tag}", {**config.to_dict(), "checkpoint": str(checkpoint)})
    return EXIT_OK


def _parse_grid(text):
    try:
        grid = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"Invalid λ grid {text!r}; use comma-separated numbers") from None
    if not grid:
        raise ValueError("λ grid is empty")
    return grid


def cmd_sweep(args) -> int:
    config, out_dir = _experiment(args)
    grid = _parse_grid(args.lambda_grid) if args.lambda_grid else config.selection.grid
    base = _train_config(config)
    penalties = args.penalty or [base.penalty if base.penalty != "none" else "piu-ub"]
    _banner(f"λ sweep: {config.name} ({', '.join(penalties)}; {len(grid)} values)")

    print("\n[1/2] Loading data...")
    data = load_experiment_data(config)
    ctx = _context(config, data, out_dir)

    print("[2/2] Training and evaluating...")
    summary_path = out_dir / "reports" / f"{config.name}.sweep.csv"
    rows = []
    jobs = [(p, lam) for p in penalties for lam in grid]
    for penalty, lam in tqdm(jobs, desc="Sweep"):
        train_cfg = replace(base, penalty=penalty, lam=float(lam), remove=(),
                            seed=derive_seed(config.seed, f"sweep:{lam:g}"))
        point_dir = out_dir / "sweep" / penalty / f"lam={lam:g}"
        result = train_config(ctx, train_cfg)
        save_checkpoint(result.classifier, point_dir / "checkpoint.json")
        _write_frame(result.trace, point_dir / "trace.csv")
        _write_frame(result.timing, point_dir / "trace.timing.csv")
        report = evaluate(result.classifier, data.test, data.graph, data.pi, ctx.recipe, ctx.propensities,
                          sem=data.sem, seed=config.seed, config=config.evaluation)
        rows.append({"penalty": penalty, "lam": float(lam), **report.as_row()})
        # rewritten after every point so a failure keeps what finished
        _write_frame(pd.DataFrame(rows), summary_path)

    frame = _write_frame(pd.DataFrame(rows), summary_path)
    plot_sweep(frame, out_dir / "plots" / f"{config.name}.sweep.svg", title=f"λ sweep: {config.name}")
    write_metadata(out_dir, f"sweep:{config.name}", {**config.to_dict(), "grid": list(grid),
                                                      "penalties": penalties})
    print(frame[["penalty", "lam", "accuracy", "stat_a", "stat_c"]].to_string(index=False))
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(resolve_setting(args.out, ENV_OUTPUT_DIR, None, DEFAULT_OUTPUT_DIR))
    seed = resolve_setting(args.seed, ENV_SEED, None, DEFAULT_SEED, cast=int)
    checkpoint = Path(args.checkpoint)
    tag = args.label or checkpoint.stem
    _banner(f"Report: {tag}")

    graph, pi = load_graph_config(args.graph)
    if pi is None:
        raise ValueError("The graph config names no unfair pathways ('pathways' or 'unfair')")
    if args.schema:
        logger.warning("Encoding %s with its own statistics", args.data)
        data = load_csv(args.data, Schema.load(args.schema))
    else:
        data = read_csv(args.data, graph)
    classifier = load_checkpoint(checkpoint)

    sem = None
    if args.oracle_sem:
        with open(args.oracle_sem) as f:
            sem, _outcome = sem_from_dict(json.load(f))

    propensities = load_propensities(Path(args.propensity)) if args.propensity else None
    if propensities is None:
        logger.warning("No stored propensities; fitting them on the report data")
    ctx = prepare_context(data, graph, pi, sem=sem, propensities=propensities)
    evaluation = EvaluationConfig(oracle_n=args.oracle_n)
    report = evaluate(classifier, data, graph, pi, ctx.recipe, ctx.propensities, sem=sem, seed=seed,
                      config=evaluation)
    _emit_report({tag: report}, out_dir, tag)
    write_metadata(out_dir, f"report:{tag}", {"checkpoint": str(checkpoint), "data": args.data,
                                               "graph": str(args.graph), "oracle_sem": args.oracle_sem,
                                               "seed": seed})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _experiment_flags(parser):
    parser.add_argument("--config", required=True, help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help=f"Overrides {ENV_SEED} and the config seed")
    parser.add_argument("--output-dir", default=None, help=f"Overrides {ENV_OUTPUT_DIR} and the config")
    parser.add_argument("--data-dir", default=None, help="Base directory for relative data paths")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piu", description=__doc__.split("\n")[1],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Sample a dataset from a built-in SEM")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--n", type=int, default=6000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="Output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-propensity", help="Fit and store the weight-recipe propensities")
    _experiment_flags(p)
    p.set_defaults(func=cmd_fit_propensity)

    p = sub.add_parser("train", help="Train one classifier")
    _experiment_flags(p)
    p.add_argument("--regime", choices=REGIMES, default=None,
                   help="Train a named regime (λ grid-selected unless --lam is given)")
    p.add_argument("--lam", type=float, default=None, help="Penalty parameter λ")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on the experiment's test split")
    _experiment_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="Train and evaluate over a λ grid")
    _experiment_flags(p)
    p.add_argument("--lambda-grid", default=None, help="Comma-separated λ values (default: config grid)")
    p.add_argument("--penalty", action="append", choices=[k for k in PENALTY_KINDS if k != "none"],
                   help="Penalty kind; repeat to compare kinds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="Fairness report for a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="Dataset CSV")
    p.add_argument("--graph", required=True, help="Graph config with unfair pathways")
    p.add_argument("--schema", default=None, help="Raw-CSV schema (default: columns are graph nodes)")
    p.add_argument("--oracle-sem", default=None, help="Generating SEM config for oracle statistics")
    p.add_argument("--propensity", default=None, help="Directory of stored propensities")
    p.add_argument("--oracle-n", type=int, default=100_000)
    p.add_argument("--label", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="Output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RuntimeError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
