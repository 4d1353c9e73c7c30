#!/usr/bin/env python3
"""Convert the per-class JSON digit files shipped by the `mnist` npm package
into IDX files readable by `load_mnist`.

Usage: mnist_json_to_idx.py <package/src/digits> <out_dir> [--train-fraction 0.8]

Each class is split deterministically: the first fraction of its digits goes to
train-*, the rest to t10k-*.
"""
import argparse
import json
import struct
from pathlib import Path


def write_idx(out_dir, prefix, images, labels):
    with open(out_dir / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    with open(out_dir / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = ([], []), ([], [])
    for d in range(10):
        flat = json.load(open(Path(args.digits_dir) / f"{d}.json"))["data"]
        glyphs = [flat[i:i + 784] for i in range(0, len(flat), 784)]
        cut = int(len(glyphs) * args.train_fraction)
        for i, g in enumerate(glyphs):
            dst = train if i < cut else test
            dst[0].append(g)
            dst[1].append(d)
    write_idx(out, "train", *train)
    write_idx(out, "t10k", *test)
    print(f"train={len(train[1])} t10k={len(test[1])}")


if __name__ == "__main__":
    main()
