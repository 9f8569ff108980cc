import json
import logging

import numpy as np
import pandas as pd
import pytest

import cli.main as cli
from cli.main import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from training.model import init_classifier, load_checkpoint, save_checkpoint
from training.train import TrainingDivergedError
from utils.config_utils import ENV_OUTPUT_DIR, ENV_SEED


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(ENV_SEED, raising=False)
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)


@pytest.fixture
def experiment(tmp_path):
    payload = {
        "version": 1,
        "name": "tiny",
        "seed": 0,
        "output_dir": str(tmp_path / "out"),
        "dataset": {"preset": "synth", "n": 400, "n_test": 100},
        "graph": None,
        "train": {"penalty": "piu-ub", "lam": 1.0, "model": "logreg", "epochs": 2, "batch_size": 100},
        "evaluation": {"oracle_n": 500},
        "selection": {"grid": [0.0, 1.0], "ceiling": 0.5},
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(payload))
    return path, tmp_path / "out"


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--preset", "synth", "--n", "200", "--seed", "4", "--out", str(tmp_path / name)]) == EXIT_OK
    first = (tmp_path / "a" / "synth.csv").read_bytes()
    assert first == (tmp_path / "b" / "synth.csv").read_bytes()
    assert (tmp_path / "a" / "synth.sem.json").exists()
    graph = json.loads((tmp_path / "a" / "synth.graph.json").read_text())
    assert graph["pathways"] == [["A", "Y"], ["A", "D", "Y"]]
    metadata = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert "simulate:synth" in metadata["runs"]
    assert "numpy" in metadata["versions"]


def test_simulate_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_SEED, "4")
    main(["simulate", "--preset", "synth", "--n", "200", "--out", str(tmp_path / "env")])
    main(["simulate", "--preset", "synth", "--n", "200", "--seed", "4", "--out", str(tmp_path / "flag")])
    assert (tmp_path / "env" / "synth.csv").read_bytes() == (tmp_path / "flag" / "synth.csv").read_bytes()


def test_unknown_subcommand_or_preset():
    with pytest.raises(SystemExit):
        main(["simulate", "--preset", "nope"])
    with pytest.raises(SystemExit):
        main(["launch"])


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_report_refuses_recanting_witness(tmp_path, capsys):
    data = tmp_path / "chain.csv"
    pd.DataFrame({"A": [0, 1, 0, 1], "M1": [0.0, 1.0, 0.5, 1.5], "M2": [0.0, 2.0, 1.0, 2.5],
                  "Y": [0, 1, 0, 1]}).to_csv(data, index=False)
    checkpoint = tmp_path / "clf.json"
    save_checkpoint(init_classifier("logreg", ("A", "M1", "M2"), seed=0), checkpoint)
    code = main(["report", "--checkpoint", str(checkpoint), "--data", str(data), "--graph", "mediator_chain",
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "witness 'M1'" in capsys.readouterr().err


def test_train_then_eval(experiment):
    config, out = experiment
    assert main(["train", "--config", str(config)]) == EXIT_OK
    checkpoint = out / "checkpoints" / "tiny.json"
    assert checkpoint.exists()
    trace = pd.read_csv(out / "traces" / "tiny.csv")
    assert trace["epoch"].tolist() == [1, 2]
    for part in ("c", "c_mpi", "full"):
        assert (out / "propensity" / f"{part}.json").exists()

    assert main(["eval", "--config", str(config), "--checkpoint", str(checkpoint), "--label", "piu"]) == EXIT_OK
    report = pd.read_csv(out / "reports" / "piu.csv")
    assert report["method"].tolist() == ["piu"]
    assert report["stat_d_provenance"].iloc[0] == "oracle"
    assert (out / "plots" / "piu.svg").exists()
    runs = json.loads((out / "metadata.json").read_text())["runs"]
    assert {"train:tiny", "eval:piu"} <= set(runs)


def test_regime_training_writes_selection(experiment):
    config, out = experiment
    assert main(["train", "--config", str(config), "--regime", "fio"]) == EXIT_OK
    table = pd.read_csv(out / "reports" / "tiny-fio.selection.csv")
    assert table["lam"].tolist() == [0.0, 1.0]
    assert (out / "checkpoints" / "tiny-fio.json").exists()


def test_remove_regime_checkpoint_is_masked(experiment):
    config, out = experiment
    assert main(["train", "--config", str(config), "--regime", "remove"]) == EXIT_OK
    assert set(load_checkpoint(out / "checkpoints" / "tiny-remove.json").mask) == {"A", "D"}


def test_sweep(experiment):
    config, out = experiment
    code = main(["sweep", "--config", str(config), "--lambda-grid", "0,0.5", "--penalty", "fio", "--penalty", "piu-ub"])
    assert code == EXIT_OK
    summary = pd.read_csv(out / "reports" / "tiny.sweep.csv")
    assert len(summary) == 4
    assert sorted(summary["penalty"].unique()) == ["fio", "piu-ub"]
    assert (out / "sweep" / "fio" / "lam=0.5" / "checkpoint.json").exists()
    assert (out / "plots" / "tiny.sweep.svg").exists()


def test_bad_lambda_grid(experiment):
    config, _ = experiment
    assert main(["sweep", "--config", str(config), "--lambda-grid", "0,abc"]) == EXIT_CONFIG


def test_divergence_exit_code(experiment, monkeypatch):
    config, out = experiment

    def diverge(ctx, config, progress=False):
        clf = init_classifier("logreg", ctx.train.features, seed=0)
        raise TrainingDivergedError(3, clf.with_theta(np.zeros_like(clf.theta)))

    monkeypatch.setattr(cli, "train_config", diverge)
    assert main(["train", "--config", str(config)]) == EXIT_NUMERIC
    assert (out / "checkpoints" / "tiny.last_good.json").exists()


def test_fit_propensity_then_report(experiment, tmp_path):
    config, out = experiment
    assert main(["fit-propensity", "--config", str(config)]) == EXIT_OK
    assert main(["train", "--config", str(config), "--lam", "0.5"]) == EXIT_OK
    assert main(["simulate", "--preset", "synth", "--n", "300", "--seed", "1", "--out", str(tmp_path / "sim")]) == EXIT_OK
    code = main([
        "report",
        "--checkpoint", str(out / "checkpoints" / "tiny.json"),
        "--data", str(tmp_path / "sim" / "synth.csv"),
        "--graph", str(tmp_path / "sim" / "synth.graph.json"),
        "--oracle-sem", str(tmp_path / "sim" / "synth.sem.json"),
        "--propensity", str(out / "propensity"),
        "--oracle-n", "500",
        "--out", str(tmp_path / "report"),
    ])
    assert code == EXIT_OK
    report = pd.read_csv(tmp_path / "report" / "reports" / "tiny.csv")
    assert report["stat_b_provenance"].iloc[0] == "oracle"


def test_propensities_refit_when_seed_changes(experiment, caplog):
    config, out = experiment
    directory = out / "propensity"
    assert main(["train", "--config", str(config)]) == EXIT_OK
    first = json.loads((directory / "fingerprint.json").read_text())
    assert first["propensity"]["degree"] == 2

    with caplog.at_level(logging.INFO, logger="piu"):
        assert main(["train", "--config", str(config)]) == EXIT_OK
    assert "Reusing propensities" in caplog.text
    assert json.loads((directory / "fingerprint.json").read_text()) == first

    caplog.clear()
    with caplog.at_level(logging.INFO, logger="piu"):
        assert main(["train", "--config", str(config), "--seed", "1"]) == EXIT_OK
    assert "refitting" in caplog.text
    assert "Reusing propensities" not in caplog.text
    second = json.loads((directory / "fingerprint.json").read_text())
    assert second["propensity"]["seed"] != first["propensity"]["seed"]
    assert second["graph"] == first["graph"]


def test_trace_is_byte_identical_across_runs(experiment, tmp_path):
    config, _ = experiment
    for name in ("first", "second"):
        args = ["train", "--config", str(config), "--output-dir", str(tmp_path / name)]
        assert main(args) == EXIT_OK
    first = tmp_path / "first" / "traces"
    assert (first / "tiny.csv").read_bytes() == (tmp_path / "second" / "traces" / "tiny.csv").read_bytes()
    assert "wall_time" not in pd.read_csv(first / "tiny.csv").columns
    timing = pd.read_csv(first / "tiny.timing.csv")
    assert timing.columns.tolist() == ["epoch", "wall_time"]
    assert timing["epoch"].tolist() == [1, 2]
