#!/usr/bin/env python3
"""Build gzipped IDX files from the 10,000 MNIST digits shipped in the npm
`mnist` package (cazala/mnist, MIT licensed).

The package stores each digit as 784 intensities in [0, 1] rounded to three
decimals; they are mapped back to bytes with round(v * 255). Digits are
interleaved by class with a fixed seed and split into a training part and a
test part.

Usage:
    tools/fetch_mnist.py --out data/mnist [--package-dir DIR] [--train 8000]

Without --package-dir the script runs `npm pack mnist@1.1.0` in a temporary
directory to obtain the package.
"""

import argparse
import gzip
import json
import pathlib
import random
import struct
import subprocess
import tarfile
import tempfile


def load_digits(package_dir: pathlib.Path):
    samples = []
    for digit in range(10):
        with open(package_dir / "src" / "digits" / f"{digit}.json") as fh:
            flat = json.load(fh)["data"]
        if len(flat) % 784:
            raise ValueError(f"digit {digit}: length {len(flat)} not a multiple of 784")
        for start in range(0, len(flat), 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in flat[start:start + 784])
            samples.append((pixels, digit))
    return samples


def write_images(path: pathlib.Path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            fh.write(img)


def write_labels(path: pathlib.Path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", required=True, type=pathlib.Path)
    parser.add_argument("--package-dir", type=pathlib.Path)
    parser.add_argument("--train", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=20200101)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package_dir = args.package_dir
        if package_dir is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            with tarfile.open(pathlib.Path(tmp) / "mnist-1.1.0.tgz") as tar:
                tar.extractall(tmp)
            package_dir = pathlib.Path(tmp) / "package"
        samples = load_digits(package_dir)

    random.Random(args.seed).shuffle(samples)
    train, test = samples[:args.train], samples[args.train:]
    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(args.out / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(args.out / "test-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(args.out / "test-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"wrote {len(train)} training and {len(test)} test digits to {args.out}")


if __name__ == "__main__":
    main()
