"""Dataset loading: CSV with a header row, optional label column."""

from __future__ import annotations

import csv

import numpy as np


def load_csv(path, label_col=None):
    """Load a feature matrix (and optional labels) from a CSV file.

    Parameters
    ----------
    path : str
        CSV file with a header row. All columns except the label column
        must be numeric.
    label_col : str or None
        Name of the label column. None means no labels.

    Returns
    -------
    (X, labels, feature_names) : X is an (n, d) float array, labels is a
        list of strings or None, feature_names lists the feature columns.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    label_idx = None
    if label_col is not None:
        if label_col not in header:
            raise ValueError(f"label column {label_col!r} not in header {header}")
        label_idx = header.index(label_col)

    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    labels = [] if label_idx is not None else None
    values = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"row {r + 1}: expected {len(header)} fields, got {len(row)}")
        feats = []
        for i, cell in enumerate(row):
            if i == label_idx:
                labels.append(cell)
                continue
            try:
                feats.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"row {r + 1}, column {header[i]!r}: non-numeric value {cell!r}"
                ) from None
        values.append(feats)

    X = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X).all(axis=1))[0][0])
        raise ValueError(f"row {bad + 1}: non-finite feature value")
    return X, labels, feature_names


def save_csv(path, X, labels=None, label_col="label", feature_names=None):
    """Write a feature matrix (and optional labels) as a headered CSV."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]
    header = list(feature_names) + ([label_col] if labels is not None else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [repr(float(v)) for v in X[i]]
            if labels is not None:
                row.append(str(labels[i]))
            writer.writerow(row)
