#!/usr/bin/env python3
"""Build ML-100K ratings files (u.data, ua.*, ub.*) without direct network access.

The RecBole wheel on PyPI ships the 100,000 ML-100K ratings in their original
u.data order. This script pulls that wheel through pip, writes u.data, and
derives the two fixed partitions: for every user, the 1st-10th ratings in file
order go to ua.test and the 11th-20th to ub.test; the rest form the matching
.base file. Rows are sorted by user then item, like the distributed files.

usage: scripts/fetch_ml100k.py [--wheel RECBOLE_WHEEL] [OUT_DIR]   (default: data/ml-100k)
"""
import argparse
import collections
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def ratings_from_wheel(wheel=None):
    if wheel is None:
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "recbole", "--no-deps", "-q", "-d", tmp],
                check=True,
            )
            return ratings_from_wheel(glob.glob(os.path.join(tmp, "recbole-*.whl"))[0])
    lines = zipfile.ZipFile(wheel).read(MEMBER).decode().splitlines()
    rows = [tuple(int(float(f)) for f in line.split("\t")) for line in lines[1:] if line.strip()]
    if len(rows) != 100_000:
        sys.exit(f"expected 100000 ratings, got {len(rows)}")
    return rows


def write(path, rows):
    with open(path, "w") as f:
        for u, i, r, t in sorted(rows, key=lambda x: (x[0], x[1])):
            f.write(f"{u}\t{i}\t{r}\t{t}\n")


def main():
    p = argparse.ArgumentParser(description="Build ML-100K ratings files.")
    p.add_argument("--wheel", help="use an already downloaded recbole wheel")
    p.add_argument("out", nargs="?", default=os.path.join("data", "ml-100k"))
    args = p.parse_args()
    out = args.out
    os.makedirs(out, exist_ok=True)
    rows = ratings_from_wheel(args.wheel)
    with open(os.path.join(out, "u.data"), "w") as f:
        for u, i, r, t in rows:
            f.write(f"{u}\t{i}\t{r}\t{t}\n")
    for name, lo, hi in (("ua", 1, 10), ("ub", 11, 20)):
        seen = collections.Counter()
        base, test = [], []
        for row in rows:
            seen[row[0]] += 1
            (test if lo <= seen[row[0]] <= hi else base).append(row)
        write(os.path.join(out, f"{name}.base"), base)
        write(os.path.join(out, f"{name}.test"), test)
        print(f"{name}: {len(base)} train, {len(test)} test")


if __name__ == "__main__":
    main()
