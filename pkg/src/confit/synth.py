"""Deterministic synthetic tabular data in the shape of a school-records
dataset: mixed categorical/numeric features, a binary protected attribute with
a real effect on the target, and a 0-20 grade-like target.

Used by the test suite and the bundled demo config; no external downloads are
required to exercise the full pipeline.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

COLUMNS = [
    "school", "sex", "age", "address", "studytime", "failures", "higher",
    "famsup", "activities", "internet", "goout", "health", "freetime",
    "traveltime", "absences", "g1", "g2", "grade",
]


def make_school_rows(n: int = 649, seed: int = 20240901) -> list[list]:
    rng = np.random.default_rng(seed)
    school = rng.choice(["GP", "MS", "CH"], size=n, p=[0.55, 0.3, 0.15])
    sex = rng.choice(["F", "M"], size=n)
    male = (sex == "M").astype(float)
    age = rng.integers(15, 23, size=n)
    address = rng.choice(["U", "R"], size=n, p=[0.7, 0.3])
    # several predictive features correlate with the protected attribute, so a
    # model can reconstruct group disparities from proxies even after the
    # targets themselves were adjusted
    studytime = np.clip(np.rint(2.6 - 0.7 * male + 0.9 * rng.standard_normal(n)), 1, 4).astype(int)
    failures = np.clip(np.rint(0.35 + 0.5 * male + 0.8 * rng.standard_normal(n)), 0, 3).astype(int)
    higher = np.where(rng.uniform(size=n) < 0.9 - 0.12 * male, "yes", "no")
    famsup = rng.choice(["yes", "no"], size=n)
    activities = rng.choice(["yes", "no"], size=n)
    internet = rng.choice(["yes", "no"], size=n, p=[0.8, 0.2])
    goout = np.clip(np.rint(2.8 + 0.8 * male + 1.1 * rng.standard_normal(n)), 1, 5).astype(int)
    health = rng.integers(1, 6, size=n)
    freetime = rng.integers(1, 6, size=n)
    traveltime = rng.integers(1, 5, size=n)
    absences = np.clip(np.rint(5.5 + 4.0 * male + 6.0 * rng.standard_normal(n)), 0, 30).astype(int)

    ability = rng.standard_normal(n)
    g1 = np.clip(np.rint(10.5 + 2.6 * ability + 0.7 * (studytime - 2.5)
                         - 1.2 * failures - 0.9 * male + rng.standard_normal(n)), 0, 20)
    g2 = np.clip(np.rint(0.25 * 10.5 + 0.75 * g1 - 0.4 * male
                         + 1.4 * rng.standard_normal(n)), 0, 20)
    grade = np.clip(np.rint(
        1.2
        + 0.28 * g1
        + 0.50 * g2
        + 0.55 * (studytime - 2.5)
        - 0.8 * failures
        + 0.8 * (higher == "yes")
        - 0.06 * absences
        - 1.2 * male
        + 1.1 * rng.standard_normal(n)
    ), 0, 20)

    rows = []
    for i in range(n):
        rows.append([
            school[i], sex[i], int(age[i]), address[i], int(studytime[i]),
            int(failures[i]), higher[i], famsup[i], activities[i], internet[i],
            int(goout[i]), int(health[i]), int(freetime[i]), int(traveltime[i]),
            int(absences[i]), int(g1[i]), int(g2[i]), int(grade[i]),
        ])
    return rows


def write_school_csv(path, n: int = 649, seed: int = 20240901) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        writer.writerows(make_school_rows(n, seed))
    return path
