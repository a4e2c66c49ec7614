#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into IDX ubyte files.

The package holds 10,000 MNIST digits as JSON (one file per class, pixels
already scaled to [0,1] with three decimals). We rescale to bytes, shuffle
with a fixed seed and split into train/test IDX files (gzip-compressed).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""
import argparse
import gzip
import json
import random
import struct
from pathlib import Path

PIXELS = 28 * 28


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()

    samples = []
    for label in range(10):
        flat = json.loads(Path(args.digits_dir, f"{label}.json").read_text())["data"]
        assert len(flat) % PIXELS == 0
        for i in range(0, len(flat), PIXELS):
            img = [min(255, max(0, round(v * 255))) for v in flat[i:i + PIXELS]]
            samples.append((img, label))

    random.Random(args.seed).shuffle(samples)
    test, train = samples[:args.test], samples[args.test:]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        images = bytearray()
        for img, _ in part:
            images.extend(img)
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 2051, (len(part), 28, 28), images)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 2049, (len(part),), [l for _, l in part])
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
