"""Linear classifier scores and distance-to-region classification errors.

Class 1 is the positive class: its region is ``score >= 0``.  Class 0
owns ``score < 0``.  A score of exactly zero is assigned to class 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearClassifier:
    v: np.ndarray
    gamma: float

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).ravel()
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.v))

    def to_dict(self) -> dict:
        return {"v": self.v.tolist(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearClassifier":
        return cls(np.asarray(d["v"], dtype=float), d["gamma"])


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with binary labels (0/1)."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.labels).astype(int).ravel()
        if X.shape[0] != y.size:
            raise ValueError("features and labels differ in length")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if (y == 0).sum() == 0 or (y == 1).sum() == 0:
            raise ValueError("both classes must be present")
        if min((y == 0).sum(), (y == 1).sum()) < 2:
            warnings.warn("a class has a single sample", stacklevel=3)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if not self.feature_names:
            names = tuple(f"x{j}" for j in range(X.shape[1]))
            object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def class_sizes(self) -> tuple[int, int]:
        return int((self.labels == 0).sum()), int((self.labels == 1).sum())

    def class_features(self, cls: int) -> np.ndarray:
        return self.features[self.labels == cls]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.feature_names)


def _check_nonzero(clf: LinearClassifier):
    if not np.any(clf.v):
        raise ValueError("classifier normal vector is zero")


def score(clf: LinearClassifier, x) -> np.ndarray | float:
    """``<v, x> - gamma`` for a point or for each row of a matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.v.size:
        raise ValueError(f"expected {clf.v.size} features, got {x.shape[-1]}")
    s = x @ clf.v - clf.gamma
    return float(s) if np.ndim(s) == 0 else s


def predict(clf: LinearClassifier, x, threshold: float = 0.0) -> np.ndarray:
    return (np.asarray(score(clf, x)) >= threshold).astype(int)


def normalize(clf: LinearClassifier) -> LinearClassifier:
    _check_nonzero(clf)
    n = clf.norm
    return LinearClassifier(clf.v / n, clf.gamma / n)


def binary_error(clf: LinearClassifier, x, cls) -> np.ndarray | float:
    """Distance of the normalized score to the region of ``cls``.

    ``x`` may be a single point or a matrix; ``cls`` a label or label array.
    """
    _check_nonzero(clf)
    s = np.asarray(score(clf, x)) / clf.norm
    cls = np.asarray(cls)
    err = np.where(cls == 1, np.maximum(0.0, -s), np.maximum(0.0, s))
    return float(err) if err.ndim == 0 else err


def signed_error(clf: LinearClassifier, x, cls) -> np.ndarray:
    """Signed geometric margin: negative on the correct side, positive distance when wrong."""
    _check_nonzero(clf)
    s = np.asarray(score(clf, x)) / clf.norm
    return np.where(np.asarray(cls) == 1, -s, s)


def orthant_distance(z, cls: int) -> float:
    """Distance from ``z`` (length ``k - 1``) to the one-vs-all cone of class ``cls``.

    Class ``i < k`` owns ``{z_i >= 0, z_l <= 0 for l != i}``; class ``k``
    owns the nonpositive orthant.
    """
    z = np.asarray(z, dtype=float).ravel()
    k = z.size + 1
    if not 1 <= cls <= k:
        raise ValueError(f"class index must lie in 1..{k}, got {cls}")
    excess = np.maximum(0.0, z)
    if cls < k:
        excess[cls - 1] = max(0.0, -z[cls - 1])
    return float(np.linalg.norm(excess))
