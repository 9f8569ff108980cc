"""
Experiment configuration: versioned JSON files, environment overrides and
per-component seeds.

Precedence for seed, output directory and data directory:
CLI flag > environment (PIU_SEED, PIU_OUTPUT_DIR, PIU_DATA_DIR) > config file > default.
"""
from __future__ import annotations

import json
import os
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from causal.graph import graph_from_dict

GRAPH_DIR = Path(__file__).parent.parent / "data" / "graphs"
DEFAULT_OUTPUT_DIR = "results"
DEFAULT_SEED = 0

ENV_SEED = "PIU_SEED"
ENV_OUTPUT_DIR = "PIU_OUTPUT_DIR"
ENV_DATA_DIR = "PIU_DATA_DIR"

# λ = 0, 0.05, ..., 2.0
DEFAULT_LAMBDA_GRID = tuple(round(0.05 * i, 2) for i in range(41))


def derive_seed(seed: int, component: str) -> int:
    """Independent 32-bit seed for a named component of one experiment."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(component.encode())])
    return int(ss.generate_state(1)[0])


def resolve_setting(flag, env_name: str, file_value, default, cast=str):
    """First non-empty of CLI flag, environment variable, config value, default."""
    if flag is not None:
        return cast(flag)
    env = os.environ.get(env_name)
    if env not in (None, ""):
        try:
            return cast(env)
        except ValueError:
            raise ValueError(f"Environment variable {env_name}={env!r} is not a valid value") from None
    if file_value is not None:
        return cast(file_value)
    return default


@dataclass(frozen=True)
class EvaluationConfig:
    oracle_n: int = 100_000
    rounding: int | None = 1
    delta: float = 0.05
    feasibility: tuple[float, float] | None = None
    stochastic: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.oracle_n < 1:
            raise ValueError(f"oracle_n must be positive, got {self.oracle_n}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class SelectionConfig:
    grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    ceiling: float = 0.1
    validation: float = 0.2

    def __post_init__(self):
        if not self.grid:
            raise ValueError("λ grid is empty")
        if any(lam < 0 for lam in self.grid):
            raise ValueError(f"λ grid has negative values: {self.grid}")
        if not 0 < self.validation < 1:
            raise ValueError(f"Validation fraction must lie in (0, 1), got {self.validation}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: data source, graph, training, propensities, evaluation.

    `dataset` is either {"preset": name, "n": rows, "n_test": rows} or
    {"csv": path, "schema": path, "n_test": rows | fraction, "test_csv": path?}.
    `graph` is a path, an inline graph config, or None to use the preset's graph.
    """
    name: str
    seed: int
    output_dir: str
    dataset: dict
    graph: dict | str | None
    train: dict
    propensity: dict = field(default_factory=dict)
    evaluation: EvaluationConfig = EvaluationConfig()
    selection: SelectionConfig = SelectionConfig()
    data_dir: str | None = None

    def __post_init__(self):
        if "preset" not in self.dataset and "csv" not in self.dataset:
            raise ValueError("Dataset block needs either 'preset' or 'csv'")
        if "csv" in self.dataset and "schema" not in self.dataset:
            raise ValueError("A CSV dataset needs a 'schema'")
        if self.graph is None and "preset" not in self.dataset:
            raise ValueError("A CSV dataset needs an explicit 'graph'")

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        if path.is_absolute() or self.data_dir is None:
            return path
        return Path(self.data_dir) / path

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = 1
        return d


def experiment_from_dict(payload: dict, seed=None, output_dir=None, data_dir=None) -> ExperimentConfig:
    if payload.get("version") != 1:
        raise ValueError(f"Unsupported experiment config version {payload.get('version')!r}")
    ev = dict(payload.get("evaluation", {}))
    if "feasibility" in ev and ev["feasibility"] is not None:
        ev["feasibility"] = tuple(ev["feasibility"])
    sel = dict(payload.get("selection", {}))
    if "grid" in sel:
        sel["grid"] = tuple(float(x) for x in sel["grid"])
    return ExperimentConfig(
        name=payload.get("name", "experiment"),
        seed=resolve_setting(seed, ENV_SEED, payload.get("seed"), DEFAULT_SEED, cast=int),
        output_dir=resolve_setting(output_dir, ENV_OUTPUT_DIR, payload.get("output_dir"), DEFAULT_OUTPUT_DIR),
        dataset=dict(payload["dataset"]),
        graph=payload.get("graph"),
        train=dict(payload.get("train", {})),
        propensity=dict(payload.get("propensity", {})),
        evaluation=EvaluationConfig(**ev),
        selection=SelectionConfig(**sel),
        data_dir=resolve_setting(data_dir, ENV_DATA_DIR, payload.get("data_dir"), None),
    )


def load_experiment(path: str | Path, seed=None, output_dir=None, data_dir=None) -> ExperimentConfig:
    """Read an experiment config and apply flag/environment overrides."""
    with open(path) as f:
        payload = json.load(f)
    return experiment_from_dict(payload, seed=seed, output_dir=output_dir, data_dir=data_dir)


def load_graph_config(source: dict | str | Path):
    """
    Load a graph config from a dict, a file path, or a shipped graph name (e.g. "hiring").

    Returns:
        (CausalGraph, PathwaySet | None)
    """
    if isinstance(source, dict):
        return graph_from_dict(source)
    path = Path(source)
    if not path.exists() and (GRAPH_DIR / f"{source}.json").exists():
        path = GRAPH_DIR / f"{source}.json"
    with open(path) as f:
        return graph_from_dict(json.load(f))


def write_json(payload, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
