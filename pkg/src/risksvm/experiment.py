"""Parameter sweeps and report files."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .evaluation import CVResult, build_report, fit_standardized, kfold_cross_validate
from .geometry import LabeledDataset
from .implied_measure import ImpliedMeasure, implied_weights
from .qp_model import LossSpec

log = logging.getLogger(__name__)

GRID_KEYS = ("lam", "alpha1", "alpha2", "beta1", "beta2", "delta", "kappa")
# parameters each loss actually reads (beyond delta)
USED = {
    "exp_val": (),
    "huber": (),
    "joint_cvar": ("alpha2", "beta2"),
    "asym_risk": ("lam", "kappa"),
    "one_cvar": ("lam", "alpha2", "kappa"),
    "risk_cvar": ("lam", "alpha2", "beta2", "kappa"),
    "two_risk": ("lam", "kappa"),
    "two_cvar": ("lam", "alpha1", "alpha2", "beta1", "beta2"),
}
TIE_ORDER = ("lam", "alpha1", "alpha2", "beta1", "beta2", "delta", "kappa")


@dataclass
class ExperimentConfig:
    data: str
    label_column: str
    positive_label: str
    loss: str
    grid: dict = field(default_factory=dict)
    k: int = 5
    seed: int = 0
    target: str = "f1"
    out_dir: str = "results"
    drop_columns: list = field(default_factory=list)
    workers: int = 1
    n_boot: int = 1000
    confidence: float = 0.95

    def __post_init__(self):
        if self.target not in ("f1", "auc"):
            raise ValueError("target must be 'f1' or 'auc'")
        if self.k < 2:
            raise ValueError("k must be at least 2")
        unknown = set(self.grid) - set(GRID_KEYS) - {"alpha", "beta"}
        if unknown:
            raise ValueError(f"unknown grid parameters {sorted(unknown)}")
        for key, values in self.grid.items():
            if not isinstance(values, (list, tuple)) or not values:
                raise ValueError(f"grid entry {key!r} must be a nonempty list")
        # validates names and ranges of every point
        self.points()

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def points(self) -> list:
        """Loss specs for every grid point, in a fixed order."""
        grid = dict(self.grid)
        for short, longs in (("alpha", ("alpha1", "alpha2")), ("beta", ("beta1", "beta2"))):
            if short in grid:
                values = grid.pop(short)
                for key in longs:
                    grid.setdefault(key, values)
        used = USED[self.loss] + ("delta",)
        keys = [k for k in GRID_KEYS if k in grid and k in used]
        combos = itertools.product(*(sorted(float(v) for v in grid[k]) for k in keys))
        specs = []
        for combo in combos:
            params = dict(zip(keys, combo))
            if self.loss == "joint_cvar":
                params = {("alpha" if k == "alpha2" else "beta" if k == "beta2" else k): v
                          for k, v in params.items()}
            specs.append(LossSpec(self.loss, **params))
        return specs or [LossSpec(self.loss)]


def spec_key(spec: LossSpec) -> tuple:
    d = spec.to_dict()
    return tuple(d.get(k, -1.0) if d.get(k) is not None else -1.0 for k in TIE_ORDER)


@dataclass
class ModelResult:
    """One evaluated model: CV output plus the implied measure of the full-data fit."""

    name: str
    cv: CVResult
    measure: Optional[ImpliedMeasure] = None


@dataclass
class SweepResult:
    rows: list
    best: dict
    failures: list


def target_value(cv: CVResult, metric: str) -> float:
    return cv.report.metrics.f1 if metric == "f1" else cv.report.auc


def _grid_job(args):
    spec, data, k, seed = args
    try:
        cv = kfold_cross_validate(spec, data, k=k, seed=seed, n_boot=0)
        return spec, cv, None
    except Exception as exc:  # recorded per row, sweep continues
        return spec, None, f"{type(exc).__name__}: {exc}"


def _row(spec: LossSpec, cv: Optional[CVResult], error: Optional[str]) -> dict:
    row = {"loss": spec.name}
    d = spec.to_dict()
    for key in GRID_KEYS:
        row[key] = d.get(key, "")
    if cv is not None:
        row.update(cv.report.summary())
        row["error"] = ""
    else:
        row["error"] = error
    return row


def sweep(config: ExperimentConfig, data: LabeledDataset) -> SweepResult:
    """Cross-validate every grid point and pick the best per target metric.

    Ties go to the smaller lambda, then alpha, then beta.
    """
    specs = config.points()
    jobs = [(spec, data, config.k, config.seed) for spec in specs]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_grid_job, jobs))
    else:
        outputs = [_grid_job(job) for job in jobs]
    outputs.sort(key=lambda o: spec_key(o[0]))
    rows = [_row(spec, cv, err) for spec, cv, err in outputs]
    failures = [row for row in rows if row["error"]]
    best = {}
    good = [(spec, cv) for spec, cv, err in outputs if cv is not None]
    for metric in ("f1", "auc") if good else ():
        values = [target_value(cv, metric) for _, cv in good]
        # first maximum in key order is the tie-break winner
        best[metric] = good[int(np.argmax(values))]
    return SweepResult(rows, best, failures)


def finalize(name: str, cv: CVResult, data: LabeledDataset, n_boot: int = 1000,
             confidence: float = 0.95) -> ModelResult:
    """Attach confidence intervals and the implied measure of a full-data fit."""
    report = build_report(cv.scores, cv.labels, cv.signed_errors, cv.report.k, cv.report.seed,
                          confidence, n_boot)
    cv = CVResult(cv.loss, cv.scores, cv.labels, cv.signed_errors, cv.fold, report, cv.models)
    measure = None
    if cv.loss.name != "huber":
        model, _ = fit_standardized(cv.loss, data)
        measure = implied_weights(cv.loss, model)
    return ModelResult(name, cv, measure)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        if np.isposinf(value):
            return "inf"
        if np.isneginf(value):
            return "-inf"
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_rows(path, rows: list) -> None:
    header = list(rows[0].keys()) if rows else []
    write_csv(path, header, [[row.get(h, "") for h in header] for row in rows])


def manifest(config: Optional[dict], extra: Optional[dict] = None) -> dict:
    import numpy
    import scipy
    import sklearn

    return {
        "config": config,
        "versions": {
            "risksvm": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__, "sklearn": sklearn.__version__,
        },
        **(extra or {}),
    }


def report(results: list, out_dir, config: Optional[dict] = None) -> list:
    """Write the metric, risk, ROC, error and implied-measure CSVs plus a manifest.

    Returns the written paths.  With no results only the manifest is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    man_path = out / "manifest.json"
    with open(man_path, "w") as fh:
        json.dump(manifest(config, {"models": [r.name for r in results]}), fh, indent=2, sort_keys=True)
    paths.append(man_path)
    if not results:
        return paths

    metric_rows, risk_rows, roc_rows, err_rows, mu_rows = [], [], [], [], []
    for res in results:
        rep = res.cv.report
        row = {"model": res.name, "loss": res.cv.loss.name}
        d = res.cv.loss.to_dict()
        for key in GRID_KEYS:
            row[key] = d.get(key, "")
        row.update(rep.summary())
        metric_rows.append(row)
        for cls_name, entries in rep.risk_table.items():
            cis = rep.confidence_intervals
            line = [res.name, cls_name]
            for name, value in entries.items():
                ci = cis.get(name, {}).get(cls_name) if isinstance(cis.get(name), dict) else None
                line += [value, ci[0] if ci else "", ci[1] if ci else ""]
            risk_rows.append(line)
        curve = rep.roc
        for t, fpr, tpr, f1 in zip(curve.thresholds, curve.fpr, curve.tpr, curve.f1):
            roc_rows.append([res.name, t, fpr, tpr, f1])
        for j, (label, value, fold) in enumerate(zip(res.cv.labels, res.cv.signed_errors, res.cv.fold)):
            err_rows.append([res.name, j, int(label), int(fold), value])
        if res.measure is not None:
            for cls, mu in ((0, res.measure.mu0), (1, res.measure.mu1)):
                for j, w in enumerate(mu):
                    mu_rows.append([res.name, cls, j, w])

    risk_names = [name for name in results[0].cv.report.risk_table["class0"]]
    risk_header = ["model", "row"]
    for name in risk_names:
        risk_header += [name, f"{name}_ci_lo", f"{name}_ci_hi"]
    targets = {
        "metrics.csv": (None, metric_rows),
        "risk_table.csv": (risk_header, risk_rows),
        "roc_points.csv": (["model", "threshold", "fpr", "tpr", "f1"], roc_rows),
        "error_distribution.csv": (["model", "index", "class", "fold", "signed_error"], err_rows),
        "implied_measure.csv": (["model", "class", "index", "weight"], mu_rows),
    }
    for fname, (header, rows) in targets.items():
        path = out / fname
        if header is None:
            write_rows(path, rows)
        else:
            write_csv(path, header, rows)
        paths.append(path)
    return paths


def save_results(results: list, path) -> None:
    """Serialize enough of each result to rebuild the report later."""
    payload = []
    for res in results:
        entry = {
            "name": res.name,
            "loss": res.cv.loss.to_dict(),
            "k": res.cv.report.k,
            "seed": res.cv.report.seed,
            "confidence": res.cv.report.confidence_intervals.get("confidence", 0.95),
            "scores": res.cv.scores.tolist(),
            "labels": res.cv.labels.tolist(),
            "signed_errors": res.cv.signed_errors.tolist(),
            "fold": res.cv.fold.tolist(),
            "report": res.cv.report.to_dict(),
        }
        if res.measure is not None:
            entry["measure"] = {
                "mu0": res.measure.mu0.tolist(), "mu1": res.measure.mu1.tolist(),
                "zeta0": res.measure.zeta0.tolist(), "zeta1": res.measure.zeta1.tolist(),
                "class_weights": list(res.measure.class_weights), "loss_scale": res.measure.loss_scale,
            }
        payload.append(entry)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_results(path, n_boot: int = 1000) -> list:
    with open(path) as fh:
        payload = json.load(fh)
    results = []
    for entry in payload:
        scores = np.asarray(entry["scores"], float)
        labels = np.asarray(entry["labels"], int)
        signed = np.asarray(entry["signed_errors"], float)
        rep = build_report(scores, labels, signed, entry["k"], entry["seed"], entry["confidence"], n_boot)
        cv = CVResult(LossSpec.from_dict(entry["loss"]), scores, labels, signed,
                      np.asarray(entry["fold"], int), rep)
        measure = None
        if "measure" in entry:
            m = entry["measure"]
            measure = ImpliedMeasure(np.asarray(m["mu0"]), np.asarray(m["mu1"]), np.asarray(m["zeta0"]),
                                     np.asarray(m["zeta1"]), tuple(m["class_weights"]), m["loss_scale"])
        results.append(ModelResult(entry["name"], cv, measure))
    return results
