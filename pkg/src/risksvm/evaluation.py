"""Out-of-sample evaluation: confusion metrics, ROC, risk tables, CIs, k-fold CV."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.model_selection import StratifiedKFold

from . import risk_measures as rm
from .geometry import LabeledDataset, normalize, signed_error
from .qp_model import LossSpec, train
from .risk_measures import EmpiricalDistribution, RiskSpec

log = logging.getLogger(__name__)

RISK_TABLE_SPECS = (
    ("expectation", RiskSpec.expectation()),
    ("msd", RiskSpec.msd(1.0)),
    ("avar_0.75", RiskSpec.avar(0.75)),
    ("avar_0.85", RiskSpec.avar(0.85)),
    ("avar_0.95", RiskSpec.avar(0.95)),
)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, labels, predicted) -> "ConfusionCounts":
        labels, predicted = np.asarray(labels), np.asarray(predicted)
        return cls(
            tp=int(np.sum((labels == 1) & (predicted == 1))),
            fp=int(np.sum((labels == 0) & (predicted == 1))),
            tn=int(np.sum((labels == 0) & (predicted == 0))),
            fn=int(np.sum((labels == 1) & (predicted == 0))),
        )


@dataclass(frozen=True)
class Metrics:
    fpr: float
    recall: float
    precision: float
    f1: float
    precision_defined: bool = True


def metrics(counts: ConfusionCounts) -> Metrics:
    """FPR, recall, precision and F1 with class 1 as the positive class.

    Undefined ratios are reported as 0; ``precision_defined`` flags the
    case with no positive predictions.
    """
    if counts.total == 0:
        raise ValueError("empty evaluation set")
    negatives = counts.fp + counts.tn
    positives = counts.tp + counts.fn
    predicted = counts.tp + counts.fp
    fpr = counts.fp / negatives if negatives else 0.0
    recall = counts.tp / positives if positives else 0.0
    precision = counts.tp / predicted if predicted else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(fpr, recall, precision, f1, predicted > 0)


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    f1: np.ndarray
    auc: float

    @property
    def best_f1_index(self) -> int:
        return int(np.argmax(self.f1))

    @property
    def best_f1_threshold(self) -> float:
        return float(self.thresholds[self.best_f1_index])


def roc(scores, labels) -> RocCurve:
    """Threshold sweep over ``+inf``, each distinct score (descending) and ``-inf``.

    A point is predicted positive when ``score >= threshold``.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes in the evaluation set")
    distinct = np.unique(scores)[::-1]
    thresholds = np.concatenate(([np.inf], distinct, [-np.inf]))
    # counts of positives/negatives at or above each distinct score
    order = np.argsort(-scores, kind="stable")
    s_sorted, l_sorted = scores[order], labels[order]
    tp_cum = np.cumsum(l_sorted)
    fp_cum = np.cumsum(1 - l_sorted)
    last = np.searchsorted(-s_sorted, -distinct, side="right") - 1
    tp = np.concatenate(([0], tp_cum[last], [n_pos]))
    fp = np.concatenate(([0], fp_cum[last], [n_neg]))
    tpr = tp / n_pos
    fpr = fp / n_neg
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + (n_pos - tp)), 0.0)
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(thresholds, fpr, tpr, f1, auc)


def risk_table(errors0: EmpiricalDistribution, errors1: EmpiricalDistribution) -> dict:
    """Rows ``class0``, ``class1`` and ``total`` (their sum) for the standard specs."""
    table = {"class0": {}, "class1": {}, "total": {}}
    for name, spec in RISK_TABLE_SPECS:
        r0, r1 = rm.evaluate(spec, errors0), rm.evaluate(spec, errors1)
        table["class0"][name] = r0
        table["class1"][name] = r1
        table["total"][name] = r0 + r1
    return table


def _plug_in_batch(spec: RiskSpec, samples: np.ndarray) -> np.ndarray:
    """Evaluate ``spec`` on each row of ``samples`` (equal weights)."""
    if spec.kind == rm.EXPECTATION:
        return samples.mean(axis=1)
    if spec.kind == rm.MSD:
        mean = samples.mean(axis=1, keepdims=True)
        return mean[:, 0] + spec.kappa * np.maximum(samples - mean, 0.0).mean(axis=1)
    if spec.kind in (rm.AVAR, rm.COMBO):
        tail = _avar_batch(samples, spec.alpha)
        if spec.kind == rm.AVAR:
            return tail
        return spec.beta * samples.mean(axis=1) + (1.0 - spec.beta) * tail
    return np.array([rm.evaluate(spec, EmpiricalDistribution(row)) for row in samples])


def _avar_batch(samples: np.ndarray, alpha: float) -> np.ndarray:
    m = samples.shape[1]
    desc = -np.sort(-samples, axis=1)
    mass = alpha * m
    full = int(np.floor(mass + 1e-12))
    frac = mass - full
    total = desc[:, :full].sum(axis=1)
    if full < m and frac > 1e-12:
        total = total + frac * desc[:, full]
    return total / mass


def _compositions(spec: RiskSpec) -> int:
    return spec.compositions


def bootstrap_sigma(errors: EmpiricalDistribution, spec: RiskSpec,
                    n_boot: int = 1000, seed: int = 0) -> float:
    """Bootstrap standard deviation of the plug-in estimator."""
    rng = np.random.default_rng(seed)
    m = len(errors)
    idx = rng.choice(m, size=(n_boot, m), replace=True, p=errors.weights)
    values = _plug_in_batch(spec, errors.values[idx])
    return float(values.std(ddof=1))


def confidence_interval(errors: EmpiricalDistribution, spec: RiskSpec, confidence: float = 0.95,
                        n_boot: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Plug-in estimate plus/minus a t quantile times its bootstrap spread.

    Degrees of freedom are ``m - l`` with ``l`` the number of nested
    expectations in the estimator.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    m = len(errors)
    df = m - _compositions(spec)
    if df < 1:
        raise ValueError(f"sample of size {m} too small for {spec.label()}")
    center = rm.evaluate(spec, errors)
    spread = bootstrap_sigma(errors, spec, n_boot, seed)
    t = stats.t.ppf(0.5 + confidence / 2.0, df)
    return center - t * spread, center + t * spread


def total_confidence_interval(errors: list, specs: list, weights, confidence: float = 0.95,
                              n_boot: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Interval for ``sum_i w_i rho_i`` with variance ``sum_i w_i^2 sigma_i^2 / m_i``."""
    center, var = 0.0, 0.0
    df = None
    for i, (dist, spec, w) in enumerate(zip(errors, specs, weights)):
        center += w * rm.evaluate(spec, dist)
        var += (w * bootstrap_sigma(dist, spec, n_boot, seed + i)) ** 2
        d = len(dist) - _compositions(spec)
        df = d if df is None else min(df, d)
    if df is None or df < 1:
        raise ValueError("samples too small for a total-risk interval")
    t = stats.t.ppf(0.5 + confidence / 2.0, df)
    half = t * np.sqrt(var)
    return center - half, center + half


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        return cls(mean, np.where(scale > 0, scale, 1.0))

    def transform(self, X):
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["mean"], float), np.asarray(d["scale"], float))


@dataclass
class EvaluationReport:
    counts: ConfusionCounts
    metrics: Metrics
    auc: float
    roc: RocCurve
    best_f1_threshold: float
    best_f1_metrics: Metrics
    risk_table: dict
    confidence_intervals: dict
    k: int
    seed: int

    def summary(self) -> dict:
        """Flat dictionary of the headline numbers."""
        row = {
            "k": self.k, "seed": self.seed,
            "c0_errors": self.counts.fp, "c1_errors": self.counts.fn,
            "tp": self.counts.tp, "fp": self.counts.fp, "tn": self.counts.tn, "fn": self.counts.fn,
            "fpr": self.metrics.fpr, "recall": self.metrics.recall,
            "precision": self.metrics.precision, "f1": self.metrics.f1, "auc": self.auc,
            "best_f1_threshold": self.best_f1_threshold, "best_f1": self.best_f1_metrics.f1,
        }
        for cls_name, entries in self.risk_table.items():
            for name, value in entries.items():
                row[f"risk_{cls_name}_{name}"] = value
        return row

    def to_dict(self) -> dict:
        return {
            "summary": self.summary(),
            "risk_table": self.risk_table,
            "confidence_intervals": self.confidence_intervals,
            "roc": {
                "threshold": [_finite_or_str(t) for t in self.roc.thresholds],
                "fpr": self.roc.fpr.tolist(), "tpr": self.roc.tpr.tolist(), "f1": self.roc.f1.tolist(),
            },
        }


def _finite_or_str(t):
    return float(t) if np.isfinite(t) else ("inf" if t > 0 else "-inf")


@dataclass
class CVResult:
    loss: LossSpec
    scores: np.ndarray
    labels: np.ndarray
    signed_errors: np.ndarray
    fold: np.ndarray
    report: EvaluationReport
    models: list = field(default_factory=list, repr=False)

    @property
    def errors(self) -> np.ndarray:
        """Nonnegative geometric errors (zero when correctly classified)."""
        return np.maximum(self.signed_errors, 0.0)


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; class proportions kept within one sample.

    ``k`` equal to the sample count means leave-one-out.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k == labels.size:
        return np.arange(k)
    if min(np.sum(labels == 0), np.sum(labels == 1)) < k:
        raise ValueError(f"each class needs at least k={k} samples for stratified folds")
    fold = np.empty(labels.size, dtype=int)
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    for i, (_, test) in enumerate(splitter.split(np.zeros(labels.size), labels)):
        fold[test] = i
    return fold


def fit_standardized(spec: LossSpec, data: LabeledDataset, settings=None):
    """Standardize on ``data`` then train; returns ``(model, standardizer)``."""
    std = Standardizer.fit(data.features)
    scaled = LabeledDataset(std.transform(data.features), data.labels, data.feature_names)
    return train(spec, scaled, settings), std


def _fold_job(args):
    spec, X_train, y_train, X_test, settings = args
    train_set = LabeledDataset(X_train, y_train)
    model, std = fit_standardized(spec, train_set, settings)
    return model, std.transform(X_test)


def build_report(scores, labels, signed, k, seed, confidence=0.95, n_boot=1000, weights=(0.5, 0.5)):
    labels = np.asarray(labels).astype(int)
    counts = ConfusionCounts.from_predictions(labels, (scores >= 0).astype(int))
    curve = roc(scores, labels)
    best = curve.best_f1_threshold
    best_counts = ConfusionCounts.from_predictions(labels, (scores >= best).astype(int))
    errors = np.maximum(signed, 0.0)
    e0 = EmpiricalDistribution(errors[labels == 0])
    e1 = EmpiricalDistribution(errors[labels == 1])
    cis = {}
    for i, (name, spec) in enumerate(RISK_TABLE_SPECS if n_boot > 0 else ()):
        entry = {}
        for cls_name, dist in (("class0", e0), ("class1", e1)):
            try:
                entry[cls_name] = list(confidence_interval(dist, spec, confidence, n_boot, seed + i))
            except ValueError:
                entry[cls_name] = None
        try:
            entry["total"] = list(total_confidence_interval(
                [e0, e1], [spec, spec], (1.0, 1.0), confidence, n_boot, seed + i))
        except ValueError:
            entry["total"] = None
        cis[name] = entry
    return EvaluationReport(
        counts=counts, metrics=metrics(counts), auc=curve.auc, roc=curve,
        best_f1_threshold=best, best_f1_metrics=metrics(best_counts),
        risk_table=risk_table(e0, e1), confidence_intervals={"confidence": confidence, **cis},
        k=k, seed=seed,
    )


def kfold_cross_validate(spec: LossSpec, data: LabeledDataset, k: int = 5, seed: int = 0,
                         settings=None, workers: int = 1, n_boot: int = 1000,
                         confidence: float = 0.95) -> CVResult:
    """Train on ``k - 1`` folds, score the held-out fold, pool all predictions.

    Features are standardized with training-fold statistics.  Scores and
    errors come from the normalized classifier (geometric margin units).
    """
    fold = stratified_folds(data.labels, k, seed)
    jobs = []
    for i in range(k):
        tr, te = fold != i, fold == i
        jobs.append((spec, data.features[tr], data.labels[tr], data.features[te], settings))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_fold_job, jobs))
    else:
        outputs = [_fold_job(job) for job in jobs]
    scores = np.empty(data.labels.size)
    signed = np.empty(data.labels.size)
    models = []
    for i, (model, X_test) in enumerate(outputs):
        te = fold == i
        clf = normalize(model.classifier)
        scores[te] = X_test @ clf.v - clf.gamma
        signed[te] = signed_error(clf, X_test, data.labels[te])
        models.append(model)
    report = build_report(scores, data.labels, signed, k, seed, confidence, n_boot)
    return CVResult(spec, scores, data.labels, signed, fold, report, models)
