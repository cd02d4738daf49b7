#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package (v1.1.0) to IDX files.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/convert_npm_mnist.py package/src/digits data/mnist

The package ships 10,000 MNIST digits as normalized floats with three
decimals; they are mapped back to bytes with round(x * 255). The samples
are shuffled with a fixed seed and split 8000 train / 2000 test.
"""
import json
import random
import struct
import sys
from pathlib import Path


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        for i in range(len(flat) // 784):
            px = [min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784]]
            samples.append((px, digit))
    random.Random(20210101).shuffle(samples)
    train, test = samples[:8000], samples[8000:]
    write_images(dst / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(dst / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(dst / "test-images-idx3-ubyte", [s[0] for s in test])
    write_labels(dst / "test-labels-idx1-ubyte", [s[1] for s in test])


if __name__ == "__main__":
    main()
