#!/usr/bin/env python3
"""Materialize the benchmark CSV files under data/.

wisconsin   Breast Cancer Wisconsin (Diagnostic), from scikit-learn's bundled copy.
australian  Statlog Australian Credit Approval, from the KEEL copy shipped in the
            keel-ds wheel (fetched with `pip download`).
nursery     Nursery, regenerated as the full factorial of its eight attributes.
            Only the binary target is reproduced: a record is `not_recom` exactly
            when health = not_recom; every other record is labelled `other`.
"""
import csv
import io
import itertools
import pathlib
import subprocess
import sys
import tempfile
import zipfile

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def wisconsin():
    from sklearn.datasets import load_breast_cancer

    d = load_breast_cancer()
    names = [n.replace(" ", "_") for n in d.feature_names]
    with open(OUT / "wisconsin.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names + ["diagnosis"])
        for row, t in zip(d.data, d.target):
            w.writerow([repr(float(v)) for v in row] + ["B" if t == 1 else "M"])


def australian():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "download", "keel-ds==0.2.5", "--no-deps", "-q", "-d", tmp]
        )
        whl = next(pathlib.Path(tmp).glob("keel_ds-*.whl"))
        raw = zipfile.ZipFile(whl).read("keel_ds/data/balanced/raw/australian.dat").decode()
    rows = [r.split(",") for r in raw.split() if r.strip()]
    with open(OUT / "australian.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"A{i}" for i in range(1, 15)] + ["class"])
        w.writerows(rows)
    (OUT / "australian.toml").write_text(
        'label = "class"\n'
        'categorical = ["A1", "A4", "A5", "A6", "A8", "A9", "A11", "A12"]\n'
    )


NURSERY = [
    ("parents", ["usual", "pretentious", "great_pret"]),
    ("has_nurs", ["proper", "less_proper", "improper", "critical", "very_crit"]),
    ("form", ["complete", "completed", "incomplete", "foster"]),
    ("children", ["1", "2", "3", "more"]),
    ("housing", ["convenient", "less_conv", "critical"]),
    ("finance", ["convenient", "inconv"]),
    ("social", ["nonprob", "slightly_prob", "problematic"]),
    ("health", ["recommended", "priority", "not_recom"]),
]


def nursery():
    with open(OUT / "nursery.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([n for n, _ in NURSERY] + ["class"])
        for combo in itertools.product(*[levels for _, levels in NURSERY]):
            w.writerow(list(combo) + ["not_recom" if combo[-1] == "not_recom" else "other"])
    (OUT / "nursery.toml").write_text(
        'label = "class"\n'
        'categorical = ["children"]\n'
        'positive_class = "not_recom"\n'
    )


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    wisconsin()
    australian()
    nursery()
