"""CSV ingestion into :class:`LabeledDataset`."""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from .geometry import LabeledDataset

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


def ingest(path, label_column: str, positive_label, drop_columns=()) -> LabeledDataset:
    """Read a headed CSV; rows whose label equals ``positive_label`` become class 1.

    Non-numeric feature columns are one-hot encoded (first level dropped).
    Standardization is left to training time so it can use fold statistics.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return from_frame(frame, label_column, positive_label, drop_columns)


def from_frame(frame: pd.DataFrame, label_column: str, positive_label, drop_columns=()) -> LabeledDataset:
    if label_column not in frame.columns:
        raise DataError(f"label column {label_column!r} not found; columns are {list(frame.columns)}")
    missing = [c for c in drop_columns if c not in frame.columns]
    if missing:
        raise DataError(f"columns to drop not found: {missing}")
    raw_labels = frame[label_column]
    labels = (raw_labels.astype(str).str.strip() == str(positive_label).strip()).astype(int).to_numpy()
    features = frame.drop(columns=[label_column, *drop_columns])
    categorical = [c for c in features.columns if not pd.api.types.is_numeric_dtype(features[c])]
    if categorical:
        features = pd.get_dummies(features, columns=categorical, drop_first=True, dtype=float)
    X = features.to_numpy(dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError("features contain missing or non-finite values")
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise DataError(f"only one class present (positive label {positive_label!r})")
    data = LabeledDataset(X, labels, tuple(str(c) for c in features.columns))
    m0, m1 = data.class_sizes
    log.info("ingested %d rows, %d features, class sizes %d / %d", labels.size, data.n_features, m0, m1)
    return data
