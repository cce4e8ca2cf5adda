#!/usr/bin/env python3
"""Convert the 5000-digit MNIST sample shipped inside the mlxtend wheel into
standard gzip-compressed IDX files.

    pip download --no-deps -d /tmp/wheels mlxtend
    python3 scripts/mnist5k_to_idx.py /tmp/wheels/mlxtend-*.whl data/mnist5k

The CSV inside the wheel holds one image per row: 784 pixel values in
row-major order followed by the class label.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main() -> None:
    wheel, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        rows = gzip.decompress(zf.read(MEMBER)).decode().splitlines()

    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        values = [int(float(v)) for v in row.split(",")]
        assert len(values) == 785
        pixels.extend(values[:784])
        labels.append(values[784])

    n = len(rows)
    images = struct.pack(">IIII", 0x803, n, 28, 28) + bytes(pixels)
    label_bytes = struct.pack(">II", 0x801, n) + bytes(labels)
    # mtime=0 keeps the archives byte-stable across regenerations.
    for name, payload in [
        ("train-images-idx3-ubyte.gz", images),
        ("train-labels-idx1-ubyte.gz", label_bytes),
    ]:
        with open(out_dir / name, "wb") as fh:
            with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
                gz.write(payload)
    print(f"wrote {n} examples to {out_dir}")


if __name__ == "__main__":
    main()
