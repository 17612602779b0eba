"""Dataset containers and loaders (IRIS CSV, IDX image files, synthetic blobs).

Bundled files live in ``arclsr1/data``; set ``ARCLSR1_DATA_DIR`` to look
somewhere else first.
"""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument, ParseError

DATA_ENV = "ARCLSR1_DATA_DIR"
_BUNDLED = Path(__file__).resolve().parent.parent / "data"

IRIS_FILE = "iris.csv"
DIGITS_IMAGES = "digits8-images-idx3-ubyte"
DIGITS_LABELS = "digits8-labels-idx1-ubyte"
IRIS_CLASSES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")


def data_path(name):
    """Resolve a data file, preferring ``$ARCLSR1_DATA_DIR`` over bundled files."""
    override = os.environ.get(DATA_ENV)
    if override:
        candidate = Path(override) / name
        if candidate.exists():
            return candidate
    return _BUNDLED / name


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    name: str = ""
    n_classes: int = 0

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n:
            raise InvalidArgument("inputs and targets differ in length")
        both = np.concatenate([self.train_idx, self.test_idx])
        if len(np.unique(both)) != len(both) or len(both) != n:
            raise InvalidArgument("train/test split must be disjoint and cover the data")

    def __len__(self):
        return self.inputs.shape[0]

    def arrays(self, split="train"):
        idx = {"train": self.train_idx, "test": self.test_idx, "all": np.arange(len(self))}[split]
        return self.inputs[idx], self.targets[idx]

    def standardized(self):
        """Copy with features scaled to zero mean, unit variance on the train split."""
        Xtr = self.inputs[self.train_idx]
        mean = Xtr.mean(axis=0)
        std = Xtr.std(axis=0)
        std[std == 0] = 1.0
        return Dataset((self.inputs - mean) / std, self.targets, self.train_idx,
                       self.test_idx, self.name, self.n_classes)


def stratified_split(labels, test_fraction=0.2, seed=0):
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        n_test = int(round(test_fraction * len(idx)))
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=np.intp)), np.sort(np.array(test, dtype=np.intp))


def random_split(n, test_fraction=0.2, seed=0):
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_iris(path=None, seed=0, test_fraction=0.2):
    """Read the 150-row IRIS CSV (optional header) with a stratified split."""
    path = Path(path) if path is not None else data_path(IRIS_FILE)
    features, labels = [], []
    classes = {name: i for i, name in enumerate(IRIS_CLASSES)}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            if lineno == 1 and not all(_is_number(v) for v in row[:4]):
                continue  # header
            try:
                features.append([float(v) for v in row[:4]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad feature value ({exc})") from None
            name = row[4].strip()
            if name not in classes:
                if name.isdigit() and int(name) < 3:
                    classes[name] = int(name)
                else:
                    raise ParseError(f"{path}:{lineno}: unknown class {name!r}")
            labels.append(classes[name])
    X = np.array(features)
    y = np.array(labels, dtype=np.intp)
    train, test = stratified_split(y, test_fraction, seed)
    return Dataset(X, y, train, test, "iris", 3)


def _read_idx(path, magic):
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ParseError(f"{path}: file too short for an IDX header (offset 0)")
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise ParseError(f"{path}: bad magic 0x{found:08x} at byte offset 0, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError(f"{path}: truncated dimension block at byte offset 4")
    dims = struct.unpack_from(">" + "I" * ndim, raw, 4)
    expected = int(np.prod(dims))
    body = len(raw) - header
    if body != expected:
        raise ParseError(
            f"{path}: payload at byte offset {header} has {body} bytes, dimensions {dims} need {expected}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(path_images=None, path_labels=None, limit=None, seed=0, test_fraction=0.2):
    """Read an IDX image/label pair; pixels are scaled to ``[0, 1]``.

    Defaults to the bundled 8x8 digit images. ``limit`` keeps the first
    ``limit`` rows.
    """
    path_images = path_images if path_images is not None else data_path(DIGITS_IMAGES)
    path_labels = path_labels if path_labels is not None else data_path(DIGITS_LABELS)
    images = _read_idx(path_images, 0x00000803)
    labels = _read_idx(path_labels, 0x00000801)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.intp)
    train, test = random_split(len(y), test_fraction, seed)
    return Dataset(X, y, train, test, Path(path_images).name, int(y.max()) + 1 if len(y) else 0)


def write_idx(path, array):
    """Write a uint8 array as an IDX file (used for fixtures)."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", 0x800 | array.ndim))
        fh.write(struct.pack(">" + "I" * array.ndim, *array.shape))
        fh.write(array.tobytes())


def synth_blobs(n_per_class=100, centers=((-2.0, 0.0), (2.0, 0.0)), scale=0.5, seed=0,
                test_fraction=0.2):
    """Isotropic Gaussian clusters, one class per center."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    X = np.concatenate([c + scale * rng.standard_normal((n_per_class, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per_class)
    train, test = stratified_split(y, test_fraction, seed)
    return Dataset(X, y, train, test, "blobs", len(centers))
