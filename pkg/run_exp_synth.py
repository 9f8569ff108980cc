"""Synthetic Experiment: Unconstrained vs Remove vs Proposed vs FIO.

Trains every regime on repeated random generations of a built-in SEM and
reports test accuracy and the four unfair-effect statistics as mean ± std.
"""
import json
import logging
from datetime import datetime
from pathlib import Path

import pandas as pd

from estimation.propensity import PropensityConfig
from evaluation.metrics import evaluate, format_generation_summary, summarize_generations
from evaluation.plots import plot_statistics
from training.pipeline import load_experiment_data, prepare_context, run_regime
from training.train import TrainConfig
from utils.config_utils import EvaluationConfig, ExperimentConfig, SelectionConfig, derive_seed


# === CONFIG ===
PRESET = "synth"              # synth | synth-additive | fig1b-illustrative
NUM_GENERATIONS = 10          # Repeated random data generations
N_TRAIN = 5000
N_TEST = 1000
REGIMES = ["unconstrained", "remove", "proposed", "fio"]   # add "oracle" for the true-PIU penalty
MODEL = "mlp"                 # mlp | logreg
EPOCHS = 1000
LAMBDA_GRID = [round(0.05 * i, 2) for i in range(41)]
CEILING = 0.1                 # Selection ceiling on each regime's own statistic
ORACLE_N = 100_000            # Monte Carlo pairs for oracle statistics
RANDOM_SEED = 0


def experiment_config(generation):
    return ExperimentConfig(
        name=f"{PRESET}-g{generation}",
        seed=derive_seed(RANDOM_SEED, f"generation:{generation}"),
        output_dir="results",
        dataset={"preset": PRESET, "n": N_TRAIN + N_TEST, "n_test": N_TEST},
        graph=None,
        train={"model": MODEL, "epochs": EPOCHS},
        evaluation=EvaluationConfig(oracle_n=ORACLE_N),
        selection=SelectionConfig(grid=tuple(LAMBDA_GRID), ceiling=CEILING),
    )


def run_generation(generation):
    """
    Train and evaluate every regime on one data generation.

    Returns:
        list of per-regime result rows
    """
    config = experiment_config(generation)
    data = load_experiment_data(config)
    ctx = prepare_context(data.train, data.graph, data.pi, sem=data.sem,
                          propensity=PropensityConfig(seed=derive_seed(config.seed, "propensity")))
    base = TrainConfig.from_dict({**config.train, "seed": config.seed})

    rows = []
    for regime in REGIMES:
        print(f"  - {regime}...")
        outcome = run_regime(regime, ctx, base, selection=config.selection, evaluation=config.evaluation)
        report = evaluate(outcome.classifier, data.test, data.graph, data.pi, ctx.recipe, ctx.propensities,
                          sem=data.sem, seed=config.seed, config=config.evaluation)
        rows.append({"generation": generation, "method": regime, "lam": outcome.config.lam,
                     **report.as_row()})
    return rows


def save_results(frame, summary, timestamp):
    """Save per-generation rows and the summary to JSON."""
    results_dir = Path("results")
    results_dir.mkdir(exist_ok=True)

    filename = results_dir / f"synth_exp_{PRESET}_{timestamp}.json"
    output = {
        "metadata": {
            "timestamp": timestamp,
            "config": {
                "preset": PRESET,
                "num_generations": NUM_GENERATIONS,
                "n_train": N_TRAIN,
                "n_test": N_TEST,
                "regimes": REGIMES,
                "model": MODEL,
                "epochs": EPOCHS,
                "lambda_grid": LAMBDA_GRID,
                "ceiling": CEILING,
                "oracle_n": ORACLE_N,
                "random_seed": RANDOM_SEED,
            },
        },
        "summary": summary.to_dict(orient="records"),
        "results": frame.to_dict(orient="records"),
    }
    with open(filename, "w") as f:
        json.dump(output, f, indent=2, default=str)
    return filename


def print_summary(summary):
    print(f"\n{'='*104}")
    print(f"SUMMARY ({PRESET}, {NUM_GENERATIONS} generations)")
    print(f"{'='*104}")
    print(format_generation_summary(summary))
    print(f"\n{'='*104}\n")


def main():
    logging.basicConfig(level=logging.WARNING)
    print(f"\n{'='*70}")
    print(f"SYNTHETIC EXPERIMENT: {' vs '.join(REGIMES)}")
    print(f"{'='*70}")
    print(f"Config: preset={PRESET}, {NUM_GENERATIONS} generations, model={MODEL}, epochs={EPOCHS}")
    print(f"{'='*70}\n")

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    rows = []
    print("[1/3] Training and evaluating...")
    for g in range(NUM_GENERATIONS):
        print(f"  [{g + 1}/{NUM_GENERATIONS}] generation {g}")
        try:
            rows.extend(run_generation(g))
        except (ValueError, RuntimeError) as e:
            print(f"  ERROR on generation {g}: {e}")

    if not rows:
        print("  No valid results to summarize.")
        return

    print("\n[2/3] Summarizing...")
    frame = pd.DataFrame(rows)
    summary = summarize_generations(frame)
    print_summary(summary)

    print("[3/3] Saving...")
    filename = save_results(frame, summary, timestamp)
    means = summary.rename(columns={f"{s}_mean": s for s in ("stat_a", "stat_b", "stat_c", "stat_d")})
    plot_statistics(means, Path("results") / f"synth_exp_{PRESET}_{timestamp}.svg",
                    title=f"Unfair-effect statistics ({PRESET})")
    print(f"  Saved: {filename}")


if __name__ == "__main__":
    main()
