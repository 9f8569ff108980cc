"""Penalty Sweep: accuracy and unfair-effect statistics as λ grows.

Trains the PIU-bound and FIO penalties at every λ of the grid on one data
generation and plots accuracy and statistics (a) and (c) against λ.
"""
import json
import logging
from datetime import datetime
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from estimation.propensity import PropensityConfig
from evaluation.metrics import evaluate
from evaluation.plots import plot_sweep
from training.pipeline import load_experiment_data, prepare_context, train_config
from training.train import TrainConfig
from utils.config_utils import EvaluationConfig, ExperimentConfig, derive_seed


# === CONFIG ===
PRESET = "synth"
N_TRAIN = 5000
N_TEST = 1000
PENALTIES = ["piu-ub", "fio"]
LAMBDA_GRID = [round(0.05 * i, 2) for i in range(41)]
MODEL = "mlp"                 # mlp | logreg
EPOCHS = 1000
ORACLE_N = 100_000
RANDOM_SEED = 0


def save_results(frame, timestamp):
    results_dir = Path("results")
    results_dir.mkdir(exist_ok=True)

    filename = results_dir / f"sweep_exp_{PRESET}_{timestamp}.json"
    output = {
        "metadata": {
            "timestamp": timestamp,
            "config": {
                "preset": PRESET,
                "n_train": N_TRAIN,
                "n_test": N_TEST,
                "penalties": PENALTIES,
                "lambda_grid": LAMBDA_GRID,
                "model": MODEL,
                "epochs": EPOCHS,
                "random_seed": RANDOM_SEED,
            },
        },
        "results": frame.to_dict(orient="records"),
    }
    with open(filename, "w") as f:
        json.dump(output, f, indent=2, default=str)
    return filename


def print_summary(frame):
    print(f"\n{'='*60}")
    print(f"SUMMARY ({PRESET})")
    print(f"{'='*60}")
    print(f"{'Penalty':<8} | {'λ':>5} | {'Acc':>7} | {'(a)':>8} | {'(c)':>8} |")
    print("-" * 60)
    for _, r in frame.iterrows():
        print(f"{r['penalty']:<8} | {r['lam']:>5.2f} | {r['accuracy']:>7.1%} | {r['stat_a']:>8.4f} | {r['stat_c']:>8.4f} |")
    print(f"\n{'='*60}\n")


def run_sweep(seed=RANDOM_SEED, penalties=PENALTIES, grid=LAMBDA_GRID):
    """
    Train every penalty at every λ of the grid on one data generation.

    Returns:
        DataFrame with one report row per (penalty, λ)
    """
    config = ExperimentConfig(
        name=f"{PRESET}-sweep",
        seed=seed,
        output_dir="results",
        dataset={"preset": PRESET, "n": N_TRAIN + N_TEST, "n_test": N_TEST},
        graph=None,
        train={"model": MODEL, "epochs": EPOCHS},
        evaluation=EvaluationConfig(oracle_n=ORACLE_N),
    )
    data = load_experiment_data(config)
    ctx = prepare_context(data.train, data.graph, data.pi, sem=data.sem,
                          propensity=PropensityConfig(seed=derive_seed(config.seed, "propensity")))
    base = TrainConfig.from_dict({**config.train, "seed": config.seed})

    rows = []
    for penalty in penalties:
        for lam in tqdm(grid, desc=penalty):
            train_cfg = TrainConfig.from_dict({**base.to_dict(), "penalty": penalty, "lam": lam})
            clf = train_config(ctx, train_cfg).classifier
            report = evaluate(clf, data.test, data.graph, data.pi, ctx.recipe, ctx.propensities,
                              sem=data.sem, seed=config.seed, config=config.evaluation)
            rows.append({"penalty": penalty, "lam": lam, **report.as_row()})
    return pd.DataFrame(rows)


def main():
    logging.basicConfig(level=logging.WARNING)
    print(f"\n{'='*70}")
    print(f"PENALTY SWEEP: {' vs '.join(PENALTIES)} over {len(LAMBDA_GRID)} λ values")
    print(f"{'='*70}\n")

    print("[1/2] Training over the grid...")
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    frame = run_sweep()
    print_summary(frame)

    print("[2/2] Saving...")
    filename = save_results(frame, timestamp)
    plot_sweep(frame, Path("results") / f"sweep_exp_{PRESET}_{timestamp}.svg", title=f"λ sweep ({PRESET})")
    print(f"  Saved: {filename}")


if __name__ == "__main__":
    main()
