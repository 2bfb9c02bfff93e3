#!/usr/bin/env python3
"""Build a small FashionMNIST subset in IDX format.

Source: the `fashion-mnist` npm package, which ships the raw 28x28 u8 pixels
grouped per class as JSON (`package/src/clothes/<label>.json`).

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 tools/make_fashion_idx.py package/src/clothes data/fashion --per-class 400

Images are interleaved by class (0,1,...,9,0,1,...) so any prefix is balanced.
"""
import argparse
import json
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("clothes_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--per-class", type=int, default=400)
    args = ap.parse_args()

    src = pathlib.Path(args.clothes_dir)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_class = []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        per_class.append(data[: args.per_class])

    images, labels = [], []
    for i in range(args.per_class):
        for label in range(10):
            img = per_class[label][i]
            assert len(img) == 784
            images.append(bytes(int(v) for v in img))
            labels.append(label)

    n = len(images)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for img in images:
            f.write(img)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
