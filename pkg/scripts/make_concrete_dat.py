"""Write data/keel/concrete.dat from the UCI concrete data bundled in the
``rdatasets`` wheel (modeldata/concrete), in KEEL .dat layout.

Usage: python scripts/make_concrete_dat.py PATH/TO/rdatasets-*.whl
"""

import io
import sys
import zipfile
from pathlib import Path

import pandas as pd

MEMBER = "rdatasets/_data/modeldata/concrete.pkl.compress"
COLUMNS = [
    ("cement", "Cement"),
    ("blast_furnace_slag", "BlastFurnaceSlag"),
    ("fly_ash", "FlyAsh"),
    ("water", "Water"),
    ("superplasticizer", "Superplasticizer"),
    ("coarse_aggregate", "CoarseAggregate"),
    ("fine_aggregate", "FineAggregate"),
    ("age", "Age"),
    ("compressive_strength", "ConcreteCompressiveStrength"),
]


def main(wheel):
    with zipfile.ZipFile(wheel) as z:
        raw = z.read(MEMBER)
    df = pd.read_pickle(io.BytesIO(raw), compression="xz")
    df = df[[c for c, _ in COLUMNS]].astype(float)
    lines = ["@relation concrete"]
    for col, name in COLUMNS:
        lines.append(f"@attribute {name} real [{df[col].min():g}, {df[col].max():g}]")
    lines.append("@inputs " + ", ".join(name for _, name in COLUMNS[:-1]))
    lines.append(f"@outputs {COLUMNS[-1][1]}")
    lines.append("@data")
    for row in df.itertuples(index=False):
        lines.append(", ".join(f"{v:.10g}" for v in row))
    out = Path(__file__).resolve().parents[1] / "data" / "keel" / "concrete.dat"
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(df)} rows)")


if __name__ == "__main__":
    main(sys.argv[1])
