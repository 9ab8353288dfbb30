#!/usr/bin/env python3
"""Download COMPAS and Adult and write the cleaned CSVs the schemas expect.

Usage: python3 scripts/fetch_datasets.py [OUT_DIR] [--raw-dir DIR]

OUT_DIR defaults to $FAIRAD_DATA_DIR, then ./datasets. The schema files from
data/schemas are copied next to the CSVs.

--raw-dir reads compas-scores-two-years.csv, adult.data and adult.test from a
local directory instead of downloading them.
"""

import argparse
import csv
import io
import os
import shutil
import sys
import urllib.request
from pathlib import Path

COMPAS_URL = "https://raw.githubusercontent.com/propublica/compas-analysis/master/compas-scores-two-years.csv"
ADULT_URLS = [
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test",
]

COMPAS_COLUMNS = [
    "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]
ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]


RAW_DIR = None


def fetch(url):
    if RAW_DIR is not None:
        path = RAW_DIR / url.rsplit("/", 1)[1]
        print(f"reading {path}", file=sys.stderr)
        return path.read_text(encoding="utf-8")
    print(f"fetching {url}", file=sys.stderr)
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read().decode("utf-8")


def compas(out):
    rows = []
    for r in csv.DictReader(io.StringIO(fetch(COMPAS_URL))):
        # ProPublica's cleaning rules
        if r["days_b_screening_arrest"] == "" or abs(int(r["days_b_screening_arrest"])) > 30:
            continue
        if r["is_recid"] == "-1" or r["c_charge_degree"] == "O" or r["score_text"] == "N/A":
            continue
        if r["race"] not in ("African-American", "Caucasian"):
            continue
        rows.append([r[c] for c in COMPAS_COLUMNS])
    write(out / "compas.csv", COMPAS_COLUMNS, rows)


def adult(out):
    rows = []
    for url in ADULT_URLS:
        for line in fetch(url).splitlines():
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != len(ADULT_COLUMNS):
                continue
            if "?" in fields:
                continue
            fields[-1] = fields[-1].rstrip(".")
            rows.append(fields)
    write(out / "adult.csv", ADULT_COLUMNS, rows)


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}", file=sys.stderr)


def main():
    global RAW_DIR
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", nargs="?", default=os.environ.get("FAIRAD_DATA_DIR", "datasets"))
    parser.add_argument("--raw-dir", type=Path)
    args = parser.parse_args()
    RAW_DIR = args.raw_dir
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    compas(out)
    adult(out)
    schemas = Path(__file__).resolve().parent.parent / "data" / "schemas"
    for s in schemas.glob("*.json"):
        shutil.copy(s, out / s.name)


if __name__ == "__main__":
    main()
