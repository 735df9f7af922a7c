#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into IDX files.

The package holds about 1000 MNIST digits per class (863 to 1127) as JSON arrays of 28x28
intensities in [0, 1]. Usage:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

Writes images/labels IDX pairs for a train and a test part. Samples are
interleaved by class so any prefix is roughly balanced.
"""

import argparse
import json
import struct
from pathlib import Path


def write_idx(out: Path, stem: str, images, labels):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits", type=Path, help="directory holding 0.json .. 9.json")
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-per-class", type=int, default=200)
    args = ap.parse_args()

    per_class = []
    for d in range(10):
        flat = json.loads((args.digits / f"{d}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"{d}.json: length {len(flat)} is not a multiple of 784")
        per_class.append([
            [min(255, max(0, round(v * 255))) for v in flat[i:i + 784]]
            for i in range(0, len(flat), 784)
        ])

    n = min(len(c) for c in per_class)
    k = args.test_per_class
    if not 0 < k < n:
        raise SystemExit(f"--test-per-class must lie in (0, {n})")
    parts = {"train": range(k, n), "test": range(k)}
    args.out.mkdir(parents=True, exist_ok=True)
    for stem, rows in parts.items():
        images, labels = [], []
        for i in rows:
            for d in range(10):
                images.append(per_class[d][i])
                labels.append(d)
        write_idx(args.out, stem, images, labels)
        print(f"{stem}: {len(labels)} samples")


if __name__ == "__main__":
    main()
