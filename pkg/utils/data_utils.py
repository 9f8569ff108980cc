"""Datasets: CSV ingestion with schema-driven encoding, synthetic presets, splits."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from causal.graph import CausalGraph
from causal.presets import get_preset
from causal.sem import Sem, sample_observational

logger = logging.getLogger(__name__)

COLUMN_KINDS = ("binary", "integer", "real", "categorical")
SCHEMA_DIR = Path(__file__).parent.parent / "data" / "schemas"


class DataError(ValueError):
    """Raised for missing columns, unparseable cells and unknown presets."""


@dataclass(frozen=True)
class Schema:
    """
    Raw CSV layout and role map.

    `roles` maps each graph node to the raw columns it covers; the sensitive
    and outcome columns are mapped by `sensitive` and `outcome`.
    """
    columns: dict
    sensitive: str
    outcome: str
    roles: dict
    nodes: tuple[str, str] = ("A", "Y")

    def __post_init__(self):
        for col, kind in self.columns.items():
            if kind not in COLUMN_KINDS:
                raise DataError(f"Column '{col}' has unknown kind '{kind}'. Use one of {list(COLUMN_KINDS)}")
        for col in (self.sensitive, self.outcome):
            if self.columns.get(col) != "binary":
                raise DataError(f"Column '{col}' must be declared binary")
        for node, cols in self.roles.items():
            missing = [c for c in cols if c not in self.columns]
            if missing:
                raise DataError(f"Role '{node}' references undeclared columns {missing}")
            if not cols:
                raise DataError(f"Role '{node}' covers no columns")

    @classmethod
    def from_dict(cls, payload: dict) -> "Schema":
        if payload.get("version") != 1:
            raise DataError(f"Unsupported schema version {payload.get('version')!r}")
        return cls(
            columns=dict(payload["columns"]),
            sensitive=payload["sensitive"],
            outcome=payload["outcome"],
            roles={k: tuple(v) for k, v in payload["roles"].items()},
            nodes=tuple(payload.get("nodes", ("A", "Y"))),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        path = Path(path)
        if not path.exists() and (SCHEMA_DIR / f"{path.name}.json").exists():
            path = SCHEMA_DIR / f"{path.name}.json"
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class Dataset:
    """
    Encoded numeric table.

    `node_columns` maps each observed graph node (outcome excluded) to its
    encoded columns; classifier features are their concatenation in node order.
    """
    frame: pd.DataFrame = field(repr=False)
    sensitive: str
    outcome: str
    node_columns: dict
    kinds: dict = field(default_factory=dict, repr=False)

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(c for cols in self.node_columns.values() for c in cols)

    @property
    def X(self) -> np.ndarray:
        return self.frame[list(self.features)].to_numpy(dtype=float)

    @property
    def y(self) -> np.ndarray:
        return self.frame[self.outcome].to_numpy(dtype=int)

    @property
    def a(self) -> np.ndarray:
        return self.frame[self.sensitive].to_numpy(dtype=int)

    def columns_for(self, nodes) -> list[str]:
        """Encoded columns for a set of graph nodes, in feature order."""
        nodes = set(nodes)
        unknown = nodes - set(self.node_columns)
        if unknown:
            raise DataError(f"No data columns for graph node(s) {sorted(unknown)}")
        return [c for node, cols in self.node_columns.items() if node in nodes for c in cols]

    def subset(self, index) -> "Dataset":
        return replace(self, frame=self.frame.iloc[np.asarray(index)].reset_index(drop=True))

    def __len__(self):
        return len(self.frame)


def dataset_from_frame(frame: pd.DataFrame, graph: CausalGraph) -> Dataset:
    """Wrap an already-numeric frame whose columns are the graph's observed nodes."""
    missing = [c for c in (*graph.features, graph.outcome) if c not in frame.columns]
    if missing:
        raise DataError(f"Missing column(s): {missing}")
    data = Dataset(
        frame=frame[[*graph.features, graph.outcome]].reset_index(drop=True),
        sensitive=graph.sensitive,
        outcome=graph.outcome,
        node_columns={n: (n,) for n in graph.features},
    )
    check_dataset(data)
    return data


def check_dataset(data: Dataset) -> None:
    for col in (data.sensitive, data.outcome):
        values = set(np.unique(data.frame[col]).tolist())
        if not values <= {0, 1}:
            raise DataError(f"Column '{col}' must be 0/1, found {sorted(values)[:5]}")
    if data.frame.isna().any().any():
        bad = data.frame.columns[data.frame.isna().any()].tolist()
        raise DataError(f"Missing values in column(s) {bad}")


def read_raw(path: str | Path, schema: Schema) -> pd.DataFrame:
    """Read a headed CSV and check it against the schema (no encoding yet)."""
    try:
        raw = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raw = pd.DataFrame()
    missing = [c for c in schema.columns if c not in raw.columns]
    if missing:
        raise DataError(f"Missing column(s) in {path}: {missing}")
    raw = raw[list(schema.columns)]
    if raw.isna().any().any():
        row, col = np.argwhere(raw.isna().to_numpy())[0]
        raise DataError(f"Missing value in {path}: row {row + 1}, column '{raw.columns[col]}'")
    for col, kind in schema.columns.items():
        if kind == "categorical":
            raw[col] = raw[col].astype(str)
            continue
        parsed = pd.to_numeric(raw[col], errors="coerce")
        if parsed.isna().any():
            row = int(np.flatnonzero(parsed.isna())[0])
            raise DataError(f"Unparseable cell in {path}: row {row + 1}, column '{col}' = {raw[col].iloc[row]!r}")
        raw[col] = parsed
    return raw


@dataclass
class Encoder:
    """One-hot categories and standardisation statistics fit on a training split."""
    schema: Schema
    categories: dict = field(default_factory=dict)
    scalers: dict = field(default_factory=dict)

    def fit(self, raw: pd.DataFrame) -> "Encoder":
        for col, kind in self.schema.columns.items():
            if kind == "categorical":
                self.categories[col] = sorted(raw[col].unique().tolist())
            elif kind == "real":
                self.scalers[col] = StandardScaler().fit(raw[[col]].to_numpy(dtype=float))
        return self

    def _encode(self, raw, col):
        kind = self.schema.columns[col]
        if kind == "categorical":
            cats = self.categories[col]
            unseen = sorted(set(raw[col]) - set(cats))
            if unseen:
                logger.warning("Column '%s': unseen categories %s mapped to all-zero indicators", col, unseen)
            return {f"{col}={c}": (raw[col] == c).astype(float).to_numpy() for c in cats}
        if kind == "real":
            return {col: self.scalers[col].transform(raw[[col]].to_numpy(dtype=float)).ravel()}
        if kind == "binary":
            values = set(np.unique(raw[col]).tolist())
            if not values <= {0, 1}:
                raise DataError(f"Binary column '{col}' holds values {sorted(values)}")
        return {col: raw[col].to_numpy(dtype=float)}

    def transform(self, raw: pd.DataFrame) -> Dataset:
        s = self.schema
        columns, node_columns, kinds = {}, {}, {}
        a_node, y_node = s.nodes
        node_columns[a_node] = (s.sensitive,)
        columns[s.sensitive] = raw[s.sensitive].to_numpy(dtype=int)
        kinds[s.sensitive] = "binary"
        for node, raw_cols in s.roles.items():
            encoded = []
            for col in raw_cols:
                for name, values in self._encode(raw, col).items():
                    columns[name] = values
                    kinds[name] = s.columns[col]
                    encoded.append(name)
            node_columns[node] = tuple(encoded)
        columns[s.outcome] = raw[s.outcome].to_numpy(dtype=int)
        data = Dataset(
            frame=pd.DataFrame(columns),
            sensitive=s.sensitive,
            outcome=s.outcome,
            node_columns=node_columns,
            kinds=kinds,
        )
        check_dataset(data)
        return data


def load_csv(path: str | Path, schema: Schema, encoder: Encoder | None = None) -> Dataset:
    """
    Load and encode a CSV.

    Categorical columns are one-hot encoded and real columns standardised.
    Pass the training split's encoder to reuse its statistics on test data.
    """
    raw = read_raw(path, schema)
    encoder = encoder or Encoder(schema).fit(raw)
    return encoder.transform(raw)


def load_split(path: str | Path, schema: Schema, n_test: int | float, seed: int,
               test_path: str | Path | None = None) -> tuple[Dataset, Dataset]:
    """
    Train/test datasets with encoding statistics taken from the training rows.

    With `test_path` the file split is used as is and `n_test` is ignored.
    """
    raw = read_raw(path, schema)
    if test_path is not None:
        train_raw, test_raw = raw, read_raw(test_path, schema)
    else:
        train_idx, test_idx = train_test_split(np.arange(len(raw)), test_size=n_test, random_state=seed)
        train_raw = raw.iloc[np.sort(train_idx)].reset_index(drop=True)
        test_raw = raw.iloc[np.sort(test_idx)].reset_index(drop=True)
    encoder = Encoder(schema).fit(train_raw)
    return encoder.transform(train_raw), encoder.transform(test_raw)


def split(data: Dataset, n_test: int | float, seed: int) -> tuple[Dataset, Dataset]:
    """Random split; an int `n_test` is a row count, a float a fraction."""
    train_idx, test_idx = train_test_split(np.arange(len(data)), test_size=n_test, random_state=seed)
    return data.subset(np.sort(train_idx)), data.subset(np.sort(test_idx))


def write_csv(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data.frame.to_csv(path, index=False)


def read_csv(path: str | Path, graph: CausalGraph) -> Dataset:
    """Read back a numeric dataset CSV whose columns are graph nodes."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    return dataset_from_frame(frame, graph)


def synth_preset(name: str, n: int, seed: int) -> tuple[Dataset, Sem]:
    """
    Sample n rows from a built-in SEM with its Bernoulli outcome rule.

    Returns:
        (Dataset without latent columns, the generating Sem)
    """
    try:
        preset = get_preset(name)
    except ValueError as e:
        raise DataError(str(e)) from None
    frame = sample_observational(preset.sem, preset.outcome, n, seed)
    return dataset_from_frame(frame, preset.sem.graph), preset.sem
