"""Writes a small MNIST-format digits fixture built from scikit-learn's
bundled 8x8 digits.

Each 8x8 image is upsampled to 20x20 and centered in a 28x28 frame, the
same layout as MNIST. The first PER_DIGIT images of every class are kept
in source order.
"""

import argparse
import struct
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.datasets import load_digits

PER_DIGIT = 100


def to_mnist_frame(img8: np.ndarray) -> np.ndarray:
    small = Image.fromarray((img8 / 16.0 * 255.0).astype(np.uint8))
    box = np.asarray(small.resize((20, 20), Image.BILINEAR))
    out = np.zeros((28, 28), dtype=np.uint8)
    out[4:24, 4:24] = box
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("fixtures/digits"))
    args = ap.parse_args()

    d = load_digits()
    keep, seen = [], {k: 0 for k in range(10)}
    for i, y in enumerate(d.target):
        if seen[int(y)] < PER_DIGIT:
            seen[int(y)] += 1
            keep.append(i)
    images = np.stack([to_mnist_frame(d.images[i]) for i in keep])
    labels = d.target[keep].astype(np.uint8)

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.tobytes())
    with open(args.out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())
    print(f"{len(images)} images written to {args.out}")


if __name__ == "__main__":
    main()
