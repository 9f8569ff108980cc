"""
Convert user-downloaded UCI German credit and Adult files into headed CSVs.

Expects the raw files under data/raw/ (not shipped with the repo):
- german.data            (Statlog German credit, space-separated, 20 attributes + class)
- adult.data, adult.test (Adult census, comma-separated)

Outputs data/raw/german.csv, data/raw/adult_train.csv, data/raw/adult_test.csv
with the columns named in data/schemas/.
"""

import sys
from pathlib import Path

import pandas as pd

# --- Config ---
RAW_DIR = Path(__file__).parent.parent / "data" / "raw"

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "amount", "savings",
    "employment", "installment_rate", "personal_status", "other_debtors", "residence_since",
    "property", "age", "other_installment_plans", "housing", "existing_credits", "job",
    "people_liable", "telephone", "foreign_worker", "class",
]
# personal_status codes for female applicants
GERMAN_FEMALE = {"A92", "A95"}

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]
ADULT_KEEP = ["sex", "age", "native_country", "marital_status", "education_num",
              "workclass", "occupation", "hours_per_week", "high_income"]


def prepare_german(raw_path: Path, out_path: Path) -> int:
    df = pd.read_csv(raw_path, sep=r"\s+", header=None, names=GERMAN_COLUMNS)
    df["sex"] = (~df["personal_status"].isin(GERMAN_FEMALE)).astype(int)
    df["risky"] = (df["class"] == 2).astype(int)
    keep = ["sex", "age", "purpose", "checking_status", "savings", "housing", "amount", "duration", "risky"]
    df[keep].to_csv(out_path, index=False)
    return len(df)


def prepare_adult(raw_path: Path, out_path: Path) -> int:
    # adult.test starts with a comment line and ends labels with '.'
    skip = 1 if raw_path.name.endswith(".test") else 0
    df = pd.read_csv(raw_path, header=None, names=ADULT_COLUMNS, skiprows=skip,
                     skipinitialspace=True, na_values="?")
    df = df.dropna(subset=["workclass", "occupation", "native_country"])
    df["sex"] = (df["sex"] == "Male").astype(int)
    df["high_income"] = df["income"].str.rstrip(".").eq(">50K").astype(int)
    df[ADULT_KEEP].to_csv(out_path, index=False)
    return len(df)


def main():
    jobs = [
        ("german.data", "german.csv", prepare_german),
        ("adult.data", "adult_train.csv", prepare_adult),
        ("adult.test", "adult_test.csv", prepare_adult),
    ]
    missing = [name for name, _out, _fn in jobs if not (RAW_DIR / name).exists()]
    if len(missing) == len(jobs):
        print(f"No raw UCI files found in {RAW_DIR}.")
        print("Download german.data, adult.data and adult.test from the UCI repository first.")
        sys.exit(1)

    for name, out, fn in jobs:
        src = RAW_DIR / name
        if not src.exists():
            print(f"Skipping {name} (not found)")
            continue
        print(f"Converting {name}...")
        n = fn(src, RAW_DIR / out)
        print(f"  → {n:,} rows written to {RAW_DIR / out}")


if __name__ == "__main__":
    main()
