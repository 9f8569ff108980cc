"""Latent-Confounder Experiment: interval penalty vs biased point estimates.

A latent H confounds R and Y, so the IPW marginals behind the PIU-bound and
FIO penalties are biased. The interval penalty bounds both marginals instead.
"""
import json
import logging
from datetime import datetime
from pathlib import Path

import pandas as pd

from estimation.propensity import PropensityConfig
from evaluation.metrics import evaluate, format_generation_summary, summarize_generations
from training.pipeline import load_experiment_data, prepare_context, run_regime
from training.train import TrainConfig
from utils.config_utils import EvaluationConfig, ExperimentConfig, SelectionConfig, derive_seed


# === CONFIG ===
PRESET = "synth-latent"
NUM_GENERATIONS = 10
N_TRAIN = 5000
N_TEST = 1000
REGIMES = ["unconstrained", "remove", "proposed", "fio", "latent"]
MODEL = "mlp"
EPOCHS = 1000
LAMBDA_GRID = [round(0.05 * i, 2) for i in range(41)]
CEILING = 0.1
ORACLE_N = 100_000
R_BINS = 10                   # Equal-frequency bins for a continuous R
RANDOM_SEED = 0


def run_generation(generation):
    config = ExperimentConfig(
        name=f"{PRESET}-g{generation}",
        seed=derive_seed(RANDOM_SEED, f"generation:{generation}"),
        output_dir="results",
        dataset={"preset": PRESET, "n": N_TRAIN + N_TEST, "n_test": N_TEST},
        graph=None,
        train={"model": MODEL, "epochs": EPOCHS},
        evaluation=EvaluationConfig(oracle_n=ORACLE_N),
        selection=SelectionConfig(grid=tuple(LAMBDA_GRID), ceiling=CEILING),
    )
    data = load_experiment_data(config)
    ctx = prepare_context(data.train, data.graph, data.pi, sem=data.sem, r_bins=R_BINS,
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
    results_dir = Path("results")
    results_dir.mkdir(exist_ok=True)

    filename = results_dir / f"latent_exp_{timestamp}.json"
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
                "r_bins": R_BINS,
                "random_seed": RANDOM_SEED,
            },
        },
        "summary": summary.to_dict(orient="records"),
        "results": frame.to_dict(orient="records"),
    }
    with open(filename, "w") as f:
        json.dump(output, f, indent=2, default=str)
    return filename


def main():
    logging.basicConfig(level=logging.WARNING)
    print(f"\n{'='*70}")
    print("LATENT-CONFOUNDER EXPERIMENT")
    print(f"{'='*70}")
    print(f"Config: {NUM_GENERATIONS} generations, regimes={REGIMES}, model={MODEL}")
    print(f"{'='*70}\n")

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    rows = []
    print("[1/2] Training and evaluating...")
    for g in range(NUM_GENERATIONS):
        print(f"  [{g + 1}/{NUM_GENERATIONS}] generation {g}")
        try:
            rows.extend(run_generation(g))
        except (ValueError, RuntimeError) as e:
            print(f"  ERROR on generation {g}: {e}")

    if not rows:
        print("  No valid results to summarize.")
        return

    frame = pd.DataFrame(rows)
    summary = summarize_generations(frame)
    print(f"\n{'='*104}")
    print(f"SUMMARY ({PRESET}, {NUM_GENERATIONS} generations)")
    print(f"{'='*104}")
    print(format_generation_summary(summary))
    print(f"\n{'='*104}\n")

    print("[2/2] Saving...")
    filename = save_results(frame, summary, timestamp)
    print(f"  Saved: {filename}")


if __name__ == "__main__":
    main()
