"""Deterministic artifact writing: CSV with round-trip floats, canonical JSON, hashes."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def _fmt(x):
    if isinstance(x, (str, bytes)):
        return x
    return repr(float(x))


def write_csv(path, columns: dict):
    """One column per key, in insertion order; all columns must have equal length."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    lengths = {d.size for d in data}
    if len(lengths) != 1:
        raise ValueError(f"columns differ in length: {dict(zip(names, (d.size for d in data)))}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def plain(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj


def canonical_json(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, separators=(",", ":"))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
