#!/usr/bin/env python3
# Copyright 2026 The fedtopo Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes a class-stratified Fashion-MNIST subset as gzipped IDX files.

The source is the `fashion-mnist` npm package, which ships the 70k images as
one JSON file per class (`src/clothes/<label>.json`, {"data": [[784 u8]...]}).
Per class, train samples come from the first 6000 entries and test samples
from the last 1000, mirroring the official 60k/10k split.
"""

import argparse
import gzip
import json
import random
import struct
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--src", required=True, help="directory holding 0.json .. 9.json")
    ap.add_argument("--out", default="data/fashion-mnist")
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train, test = [], []
    for label in range(10):
        rows = json.loads((Path(args.src) / f"{label}.json").read_text())["data"]
        if len(rows) < 7000:
            raise SystemExit(f"class {label}: expected at least 7000 images, got {len(rows)}")
        train += [(r, label) for r in rows[: args.train_per_class]]
        test += [(r, label) for r in rows[6000 : 6000 + args.test_per_class]]

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, items in (("train", train), ("t10k", test)):
        rng.shuffle(items)
        pixels = [p for r, _ in items for p in r]
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, (len(items), 28, 28), pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(items),), [l for _, l in items])
        print(f"{name}: {len(items)} images")


if __name__ == "__main__":
    main()
