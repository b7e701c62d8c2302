"""Dataset container, CSV ingestion and synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    label_names: tuple
    provenance: str
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DatasetError("features must be (m, d) and labels (m,)")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain non-finite values")
        counts = np.bincount(y, minlength=len(self.label_names))
        if len(counts) != len(self.label_names) or np.any(y < 0):
            raise DatasetError("labels must index label_names")
        if len(counts) < 2 or np.any(counts < 1):
            raise DatasetError(f"need at least two classes, each present, got counts {counts.tolist()}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "label_names", tuple(str(s) for s in self.label_names))

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def __len__(self) -> int:
        return self.labels.size

    def check_experiment_ready(self) -> None:
        """Hot-start plus testing needs every class at least twice."""
        counts = np.bincount(self.labels, minlength=self.n_classes)
        if np.any(counts < 2):
            raise DatasetError(f"{self.name}: every class needs at least two points, got counts {counts.tolist()}")


def standardize(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    # constant columns become zeros
    return np.where(sd > 0, (X - mean) / np.where(sd > 0, sd, 1.0), 0.0)


def load_csv(path, name: str | None = None) -> Dataset:
    """Header row, numeric feature columns, label in the last column.

    Features are standardised per column; labels are numbered by first appearance.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DatasetError(f"{path}: need a header and at least one data row")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise DatasetError(f"{path}: need at least one feature column and a label column")
    feats, raw_labels, names = [], [], {}
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}:{r}: expected {len(header)} columns, got {len(row)}")
        values = []
        for c, cell in enumerate(row[:-1]):
            cell = cell.strip()
            if cell == "":
                raise DatasetError(f"{path}:{r}: missing value in column {header[c]!r}")
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"{path}:{r}: non-numeric value {cell!r} in column {header[c]!r}") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}:{r}: non-finite value in column {header[c]!r}")
            values.append(v)
        label = row[-1].strip()
        if label == "":
            raise DatasetError(f"{path}:{r}: missing label")
        names.setdefault(label, len(names))
        feats.append(values)
        raw_labels.append(names[label])
    if len(names) < 2:
        raise DatasetError(f"{path}: only one class present")
    return Dataset(standardize(np.array(feats)), np.array(raw_labels), tuple(names),
                   f"csv:{path.name}", name or path.stem)


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(ds.features.shape[1])] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [ds.label_names[y]])


BLOCK_DEFAULTS = {
    "n_informative": 250,
    "n_block": 100,
    "cluster_offset": 2.0,
    "cluster_sd": 1.0,
    "center_half_width": 0.3,
    "corner_range": (3.0, 4.0),
}


def gen_block(variant: str, seed: int = 0, **params) -> Dataset:
    """Two Gaussian clusters at (-offset, 0) and (+offset, 0) plus a dense block.

    ``center``: block uniform on a square around the origin with random labels
    (uninformative points on the decision boundary). ``corner``: block uniform
    on ``corner_range``^2, all in the positive class (far from the boundary).
    """
    if variant not in ("center", "corner"):
        raise ValueError("variant must be 'center' or 'corner'")
    p = {**BLOCK_DEFAULTS, **params}
    unknown = set(p) - set(BLOCK_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown generator parameters {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    n_inf, n_block = int(p["n_informative"]), int(p["n_block"])
    half = n_inf // 2
    y_inf = np.repeat([0, 1], [n_inf - half, half])
    centers = np.where(y_inf == 1, p["cluster_offset"], -p["cluster_offset"])
    X_inf = rng.normal(0.0, p["cluster_sd"], size=(n_inf, 2))
    X_inf[:, 0] += centers
    if variant == "center":
        w = p["center_half_width"]
        X_blk = rng.uniform(-w, w, size=(n_block, 2))
        y_blk = rng.integers(0, 2, size=n_block)
    else:
        lo, hi = p["corner_range"]
        X_blk = rng.uniform(lo, hi, size=(n_block, 2))
        y_blk = np.ones(n_block, dtype=int)
    X = np.vstack([X_inf, X_blk])
    y = np.concatenate([y_inf, y_blk])
    order = rng.permutation(len(y))
    return Dataset(X[order], y[order], ("-1", "+1"), f"synthetic:block_{variant}:seed={seed}",
                   f"block_{variant}")


def gen_blobs(n_classes: int = 3, n_per_class: int = 60, spread: float = 1.0,
              radius: float = 2.5, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs with centres evenly spaced on a circle."""
    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = centers[y] + rng.normal(0.0, spread, size=(y.size, 2))
    order = rng.permutation(y.size)
    return Dataset(X[order], y[order], tuple(f"c{k}" for k in range(n_classes)),
                   f"synthetic:blobs:seed={seed}", "blobs")
