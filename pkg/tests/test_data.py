import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from scripts.prepare_uci import prepare_adult, prepare_german
from utils.data_utils import DataError, Schema, load_csv, load_split, read_csv, split, synth_preset, write_csv

SCHEMA_DIR = Path(__file__).parent.parent / "data" / "schemas"

SCHEMA = {
    "version": 1,
    "columns": {"sex": "binary", "age": "real", "city": "categorical", "hired": "binary"},
    "sensitive": "sex",
    "outcome": "hired",
    "roles": {"C": ["age"], "R": ["city"]},
}

ROWS = """sex,age,city,hired
1,30,north,1
0,45,south,0
1,22,south,1
0,51,east,1
1,38,north,0
"""


@pytest.fixture
def schema():
    return Schema.from_dict(SCHEMA)


@pytest.fixture
def csv_path(tmp_path):
    path = tmp_path / "people.csv"
    path.write_text(ROWS)
    return path


def test_encoding(csv_path, schema):
    data = load_csv(csv_path, schema)
    assert data.node_columns == {"A": ("sex",), "C": ("age",), "R": ("city=east", "city=north", "city=south")}
    assert data.features == ("sex", "age", "city=east", "city=north", "city=south")
    assert data.frame["age"].mean() == pytest.approx(0.0)
    np.testing.assert_array_equal(data.frame["city=north"], [1, 0, 0, 0, 1])
    assert data.columns_for(["R", "A"]) == ["sex", "city=east", "city=north", "city=south"]


def test_unknown_node(csv_path, schema):
    data = load_csv(csv_path, schema)
    with pytest.raises(DataError, match="No data columns"):
        data.columns_for(["M"])


@pytest.mark.parametrize("change,match", [
    ({"columns": {**SCHEMA["columns"], "sex": "real"}}, "must be declared binary"),
    ({"roles": {"C": ["height"]}}, "undeclared columns"),
    ({"columns": {**SCHEMA["columns"], "age": "decimal"}}, "unknown kind"),
    ({"version": 2}, "Unsupported schema version"),
])
def test_schema_validation(change, match):
    with pytest.raises(DataError, match=match):
        Schema.from_dict({**SCHEMA, **change})


@pytest.mark.parametrize("text,match", [
    ("sex,age,city,hired\n1,30,north,1\n0,,south,0\n", "row 2, column 'age'"),
    ("sex,age,city,hired\n1,thirty,north,1\n", "Unparseable cell"),
    ("sex,age,hired\n1,30,1\n", "Missing column"),
    ("sex,age,city,hired\n2,30,north,1\n", "Column 'sex' must be 0/1"),
])
def test_bad_rows(tmp_path, schema, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=match):
        load_csv(path, schema)


def test_test_file_uses_training_statistics(tmp_path, csv_path, schema, caplog):
    test_path = tmp_path / "test.csv"
    test_path.write_text("sex,age,city,hired\n0,37.2,west,1\n")
    train, test = load_split(csv_path, schema, n_test=0, seed=0, test_path=test_path)
    assert len(train) == 5 and len(test) == 1
    assert test.frame["age"].iloc[0] == pytest.approx(0.0, abs=1e-9)
    assert test.frame[["city=east", "city=north", "city=south"]].to_numpy().sum() == 0
    assert "unseen categories" in caplog.text


def test_random_split_sizes(synth_sample):
    data, _ = synth_sample
    train, test = split(data, 300, seed=1)
    assert (len(train), len(test)) == (1200, 300)
    train_f, test_f = split(data, 0.1, seed=1)
    assert len(test_f) == 150


def test_numeric_csv_round_trip(tmp_path, synth_sample):
    data, sem = synth_sample
    write_csv(data, tmp_path / "synth.csv")
    back = read_csv(tmp_path / "synth.csv", sem.graph)
    pd.testing.assert_frame_equal(back.frame, data.frame)


def test_unknown_preset():
    with pytest.raises(DataError, match="Unknown preset"):
        synth_preset("nope", 10, seed=0)


def test_illustrative_preset_by_public_name():
    data, sem = synth_preset("fig1b-illustrative", 300, seed=2)
    assert len(data) == 300
    assert set(data.features) == {"A", "Q", "D", "M"}
    assert sem.graph.sensitive == "A"


@pytest.mark.parametrize("path", sorted(SCHEMA_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_schemas(path):
    schema = Schema.load(path)
    with open(path) as f:
        raw = json.load(f)
    assert schema.sensitive == raw["sensitive"]
    assert "personal_status" not in schema.columns


def test_prepare_german(tmp_path):
    raw = tmp_path / "german.data"
    raw.write_text(
        "A11 6 A34 A43 1169 A65 A75 4 A93 A101 4 A121 67 A143 A152 2 A173 1 A192 A201 1\n"
        "A12 48 A32 A43 5951 A61 A73 2 A92 A101 2 A121 22 A143 A152 1 A173 1 A191 A201 2\n"
    )
    out = tmp_path / "german.csv"
    assert prepare_german(raw, out) == 2
    frame = pd.read_csv(out)
    assert frame["sex"].tolist() == [1, 0]
    assert frame["risky"].tolist() == [0, 1]
    load_csv(out, Schema.load(SCHEMA_DIR / "german.json"))


def test_prepare_adult_test_file(tmp_path):
    raw = tmp_path / "adult.test"
    raw.write_text(
        "|1x3 Cross validator\n"
        "25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, United-States, <=50K.\n"
        "38, ?, 89814, HS-grad, 9, Married-civ-spouse, ?, Husband, White, Male, 0, 0, 50, United-States, <=50K.\n"
        "44, Private, 160323, Some-college, 10, Married-civ-spouse, Machine-op-inspct, Husband, Black, Female, 7688, 0, 40, United-States, >50K.\n"
    )
    out = tmp_path / "adult_test.csv"
    assert prepare_adult(raw, out) == 2
    frame = pd.read_csv(out)
    assert frame["sex"].tolist() == [1, 0]
    assert frame["high_income"].tolist() == [0, 1]
    load_csv(out, Schema.load(SCHEMA_DIR / "adult.json"))
