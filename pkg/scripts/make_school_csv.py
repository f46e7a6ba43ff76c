#!/usr/bin/env python3
"""Regenerate the bundled synthetic school dataset (data/school.csv)."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from confit.synth import write_school_csv

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "data" / "school.csv"
    write_school_csv(out)
    print(f"wrote {out}")
