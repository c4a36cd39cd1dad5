"""Dataset ingestion, standardisation and a seeded synthetic generator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..objective import Dataset

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


def load_csv(path) -> Dataset:
    """Read a numeric CSV with a header row; the last column is the target."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no data rows")
        if len(header) < 2:
            raise DataError(f"{path}: need at least 2 columns, found {len(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}"
                )
            values = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col!r}: non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-finite value")
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    return Dataset(arr[:, :-1], arr[:, -1], name=path.stem)


@dataclass(frozen=True)
class Standardizer:
    """Column means and scales; constant columns keep scale 1."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, dataset: Dataset) -> Dataset:
        X = (dataset.features - self.mean) / self.scale
        return Dataset(X, dataset.targets, name=dataset.name)


def standardize(dataset: Dataset) -> tuple[Dataset, Standardizer]:
    """Zero-mean, unit (population) variance feature columns; targets untouched.

    Constant columns are only centred, with a warning.
    """
    if dataset.n < 2:
        raise DataError("standardisation needs at least two rows")
    X = dataset.features
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(constant):
        cols = ", ".join(str(j) for j in np.flatnonzero(constant))
        log.warning("constant feature column(s) %s centred but not scaled", cols)
    scale = np.where(constant, 1.0, std)
    tf = Standardizer(mean, scale)
    return tf.apply(dataset), tf


def make_synthetic(n: int = 200, d: int = 10, seed: int = 0, noise: float = 0.5,
                   weight_scale: float = 1.0, feature_scale: float = 1.0,
                   name: str | None = None) -> Dataset:
    """Gaussian features, a planted Gaussian weight vector and Gaussian noise."""
    if n < 1 or d < 1:
        raise DataError("synthetic dataset needs n >= 1 and d >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    X = feature_scale * rng.standard_normal((n, d))
    w = weight_scale * rng.standard_normal(d)
    y = X @ w + noise * rng.standard_normal(n)
    return Dataset(X, y, name=name or f"synthetic-n{n}-d{d}-s{seed}")
