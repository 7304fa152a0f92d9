"""Convert the digits bundled in the `mnist` npm package (MIT, cazala/mnist)
into MNIST-format IDX files.

Usage: python3 scripts/convert_mnist_npm.py <path-to-unpacked-npm-package> <out-dir>

The npm package stores 10 000 MNIST digits grouped by class as floats in [0, 1]
rounded to three decimals. Pixels are mapped back to u8 with round(v * 255) and
the samples are interleaved with a fixed permutation (seed 20191) so that any
prefix of the files is class-balanced in expectation.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main() -> None:
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    images, labels = [], []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        arr = np.asarray(raw, dtype=np.float64).reshape(-1, 28 * 28)
        images.append(np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(arr.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    perm = np.random.default_rng(20191).permutation(len(labels))
    images, labels = images[perm], labels[perm]
    n = len(labels)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())
    print(n, np.bincount(labels))


if __name__ == "__main__":
    main()
