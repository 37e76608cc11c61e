#!/usr/bin/env python3
"""Convert a CSV file to a Layers data set (ascii or binary LYRD).

By default the last column is the class label. Labels that are not integers
are mapped to indices in order of first appearance, and the mapping is printed
to stderr. With --targets T the last T columns are real regression targets.

    csv2layers.py iris.csv iris.dat
    csv2layers.py --header --label 0 --format binary train.csv train.bin
    csv2layers.py --targets 2 points.csv points.dat
"""

import argparse
import csv
import struct
import sys

MAGIC = b"LYRD"
VERSION = 1


def read_rows(path, delimiter, header):
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f, delimiter=delimiter) if any(c.strip() for c in r)]
    if header and rows:
        rows = rows[1:]
    if not rows:
        sys.exit(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            sys.exit(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    return rows


def split(rows, label, targets):
    width = len(rows[0])
    if targets:
        if targets >= width:
            sys.exit("--targets leaves no feature columns")
        cols = list(range(width - targets, width))
    else:
        cols = [label % width]
    feats = [c for c in range(width) if c not in cols]
    try:
        x = [[float(r[c]) for c in feats] for r in rows]
        y = [[r[c].strip() for c in cols] for r in rows]
    except ValueError as e:
        sys.exit(f"non-numeric feature: {e}")
    return x, y


def class_indices(labels):
    raw = [l[0] for l in labels]
    if all(s.isdigit() for s in raw):
        idx = [int(s) for s in raw]
        return idx, max(idx) + 1
    mapping = {}
    for s in raw:
        mapping.setdefault(s, len(mapping))
    for name, i in mapping.items():
        print(f"{i}\t{name}", file=sys.stderr)
    return [mapping[s] for s in raw], len(mapping)


def write_ascii(out, x, classes, labels, targets):
    n, d = len(x), len(x[0])
    with open(out, "w") as f:
        f.write(f"{n} {d} {classes}" + (f" {targets}" if classes == 0 else "") + "\n")
        for row, lab in zip(x, labels):
            lab = [str(lab)] if classes else [repr(v) for v in lab]
            f.write(" ".join([repr(v) for v in row] + lab) + "\n")


def write_binary(out, x, classes, labels, targets):
    n, d = len(x), len(x[0])
    with open(out, "wb") as f:
        f.write(MAGIC + bytes([VERSION]))
        f.write(struct.pack("<3I", n, d, classes))
        if classes == 0:
            f.write(struct.pack("<I", targets))
        for row in x:
            f.write(struct.pack(f"<{d}d", *row))
        if classes:
            f.write(struct.pack(f"<{n}I", *labels))
        else:
            for lab in labels:
                f.write(struct.pack(f"<{targets}d", *lab))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=["ascii", "binary"], default="ascii")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--header", action="store_true", help="skip the first row")
    p.add_argument("--label", type=int, default=-1, help="class label column (default: last)")
    p.add_argument("--targets", type=int, default=0, help="number of trailing regression target columns")
    a = p.parse_args(argv)

    rows = read_rows(a.input, a.delimiter, a.header)
    x, y = split(rows, a.label, a.targets)
    if a.targets:
        try:
            labels = [[float(v) for v in t] for t in y]
        except ValueError as e:
            sys.exit(f"non-numeric target: {e}")
        classes = 0
    else:
        labels, classes = class_indices(y)
    write = write_binary if a.format == "binary" else write_ascii
    write(a.output, x, classes, labels, a.targets)


if __name__ == "__main__":
    main()
