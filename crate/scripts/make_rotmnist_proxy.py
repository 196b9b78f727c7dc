#!/usr/bin/env python3
"""Build a small rotated-MNIST stand-in in the `.amat` layout.

Source digits come from the `mnist` npm package (`npm pack mnist`, then point
--digits at package/src/digits). Each digit is rotated by a uniform random
angle about the image centre with bilinear interpolation, clipped to [0, 1]
and written as 784 pixels followed by the label, one example per line.
"""

import argparse
import gzip
import json
import pathlib

import numpy as np
from scipy import ndimage


def load_digits(root):
    images, labels = [], []
    for label in range(10):
        data = json.loads((root / f"{label}.json").read_text())["data"]
        arr = np.asarray(data, dtype=np.float64).reshape(-1, 28, 28)
        images.append(arr)
        labels.append(np.full(len(arr), label))
    return np.concatenate(images), np.concatenate(labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--digits", type=pathlib.Path, required=True)
    ap.add_argument("--count", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=20160624)
    ap.add_argument("--out", type=pathlib.Path, required=True)
    args = ap.parse_args()

    images, labels = load_digits(args.digits)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(labels))[: args.count]
    angles = rng.uniform(0.0, 360.0, size=len(order))

    opener = gzip.open if args.out.suffix == ".gz" else open
    with opener(args.out, "wt") as fh:
        for idx, angle in zip(order, angles):
            img = ndimage.rotate(images[idx], angle, reshape=False, order=1, mode="constant")
            img = np.clip(img, 0.0, 1.0)
            pixels = " ".join("0" if p == 0 else f"{p:.4f}".rstrip("0") for p in img.ravel())
            fh.write(f"{pixels} {labels[idx]}\n")


if __name__ == "__main__":
    main()
