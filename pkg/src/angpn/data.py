"""Datasets: file formats, stratified splits and synthetic generators.

Random streams: every consumer of randomness derives its own
``numpy.random.Generator`` (PCG64) from ``SeedSequence(seed, spawn_key=(i,))``.
Stream 0 draws data splits; stream ``i + 1`` initialises weight matrix ``i``.
"""
import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import LabeledSplit

PACKED_MAGIC = b"ANGD1"


def rng_stream(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = "dataset"

    def __post_init__(self):
        x, y = self.features, self.labels
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DataError(f"features {x.shape} and labels {y.shape} do not align")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain NaN or Inf")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        empty = np.flatnonzero(np.bincount(y, minlength=self.n_classes) == 0)
        if empty.size:
            raise DataError(f"classes {empty.tolist()} have no points")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


def _read_features_csv(path):
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"{path}: line {lineno} has a non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: line {lineno} contains NaN or Inf")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_labels(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise DataError(f"{path}: line {lineno} is not an integer label") from None
    return np.array(out, dtype=np.int64)


def load_csv(features_path, labels_path, name=None):
    """Header-less feature CSV (one point per row) plus one label per line."""
    x = _read_features_csv(features_path)
    y = _read_labels(labels_path)
    if len(y) != x.shape[0]:
        raise DataError(f"{labels_path}: {len(y)} labels for {x.shape[0]} feature rows")
    c = int(y.max()) + 1 if y.size else 0
    return Dataset(x, y, c, name or str(features_path))


def save_csv(ds, features_path, labels_path):
    np.savetxt(features_path, ds.features, delimiter=",", fmt="%.17g")
    np.savetxt(labels_path, ds.labels, fmt="%d")


def save_packed(ds, path):
    """Little-endian binary: magic, n, d, features (f8), labels (i8)."""
    with open(path, "wb") as fh:
        fh.write(PACKED_MAGIC)
        fh.write(struct.pack("<QQ", ds.n, ds.d))
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())


def load_packed(path, name=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:5] != PACKED_MAGIC:
        raise DataError(f"{path}: missing {PACKED_MAGIC!r} header")
    n, d = struct.unpack_from("<QQ", buf, 5)
    need = 21 + 8 * n * d + 8 * n
    if len(buf) != need:
        raise DataError(f"{path}: expected {need} bytes, found {len(buf)}")
    x = np.frombuffer(buf, dtype="<f8", count=n * d, offset=21).reshape(n, d)
    y = np.frombuffer(buf, dtype="<i8", count=n, offset=21 + 8 * n * d)
    x = x.astype(np.float64)
    y = y.astype(np.int64)
    return Dataset(x, y, int(y.max()) + 1, name or str(path))


def is_packed(path):
    with open(path, "rb") as fh:
        return fh.read(5) == PACKED_MAGIC


def load_dataset(features_path, labels_path=None, name=None):
    if is_packed(features_path):
        return load_packed(features_path, name)
    if labels_path is None:
        raise DataError(f"{features_path}: CSV features need a labels file")
    return load_csv(features_path, labels_path, name)


def _per_class(rate, count):
    # the epsilon keeps e.g. 0.3 * 10 from rounding up to 4
    return math.ceil(rate * count - 1e-9)


def stratified_split(ds, label_rate, val_rate=0.05, seed=0):
    """Per class: ceil(rate * n_c) train points, then ceil(val_rate * n_c)
    validation points; the rest are test points."""
    if not 0 < label_rate < 1 or not 0 <= val_rate < 1:
        raise DataError(f"rates must lie in (0, 1), got {label_rate}, {val_rate}")
    if label_rate + val_rate >= 1:
        raise DataError("label_rate + val_rate leaves no test points")
    rng = rng_stream(seed, 0)
    train, val, test = [], [], []
    for c in range(ds.n_classes):
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        ntr = _per_class(label_rate, len(idx))
        nva = _per_class(val_rate, len(idx))
        if ntr < 1 or ntr + nva > len(idx):
            raise DataError(f"class {c} has {len(idx)} points, too few for this split")
        train.append(idx[:ntr])
        val.append(idx[ntr:ntr + nva])
        test.append(idx[ntr + nva:])
    return LabeledSplit(np.sort(np.concatenate(train)), np.sort(np.concatenate(val)),
                        np.sort(np.concatenate(test)), ds.labels, ds.n_classes)


def gen_blobs(n_per_class, centers, noise_sigma, seed=0):
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise DataError("need at least two centers")
    if noise_sigma < 0:
        raise DataError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    c, d = centers.shape
    y = np.repeat(np.arange(c), n_per_class)
    x = centers[y] + noise_sigma * rng.standard_normal((len(y), d))
    return Dataset(x, y, c, "blobs")


def gen_two_moons(n_per_class, noise_sigma=0.1, seed=0):
    if n_per_class < 2:
        raise DataError("n_per_class must be >= 2")
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, np.pi, n_per_class)
    t1 = rng.uniform(0.0, np.pi, n_per_class)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([upper, lower])
    if noise_sigma > 0:
        x = x + noise_sigma * rng.standard_normal(x.shape)
    y = np.repeat([0, 1], n_per_class)
    return Dataset(x, y, 2, "moons")


def add_constant_feature(ds, value=1.0):
    """Append a constant column.

    The network layers carry no bias, which makes the classifier positively
    homogeneous in its input; a constant feature restores an offset.
    """
    x = np.hstack([ds.features, np.full((ds.n, 1), float(value))])
    return Dataset(x, ds.labels, ds.n_classes, ds.name)
