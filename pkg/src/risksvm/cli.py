"""Command line entry point: ``risksvm {train,evaluate,sweep,report,export-qp}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import experiment as ex
from .data import DataError, ingest
from .evaluation import Standardizer, fit_standardized, kfold_cross_validate
from .geometry import LabeledDataset
from .qp_model import InfeasibleSolution, LOSS_NAMES, LossSpec, SolverFailure, build, export_triplets

log = logging.getLogger("risksvm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
LOSS_PARAMS = ("lam", "alpha", "alpha1", "alpha2", "beta", "beta1", "beta2", "delta", "kappa")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_data_args(p):
    p.add_argument("--config", help="JSON file; explicit flags override its values")
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--label-column")
    p.add_argument("--positive-label")
    p.add_argument("--drop-columns", nargs="*")


def _add_loss_args(p):
    p.add_argument("--loss", choices=LOSS_NAMES)
    for name in LOSS_PARAMS:
        p.add_argument(f"--{name}", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="risksvm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit on the full data set and save the classifier")
    _add_data_args(p)
    _add_loss_args(p)
    p.add_argument("--out", help="model JSON path", default="model.json")

    p = sub.add_parser("evaluate", help="k-fold cross-validation of one loss")
    _add_data_args(p)
    _add_loss_args(p)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")

    p = sub.add_parser("sweep", help="grid search over loss parameters")
    _add_data_args(p)
    p.add_argument("--loss", choices=LOSS_NAMES)
    p.add_argument("--grid", help='JSON object, e.g. \'{"lam": [0.4, 0.5]}\'')
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--target", choices=("f1", "auc"))
    p.add_argument("--n-boot", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")

    p = sub.add_parser("report", help="rewrite report files from a saved results.json")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-boot", type=int, default=1000)

    p = sub.add_parser("export-qp", help="write the training QP as sparse triplets")
    _add_data_args(p)
    _add_loss_args(p)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out", default="qp.txt")
    return parser


def _merged(args, keys) -> dict:
    """Config file values overridden by any flag that was given."""
    merged = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                merged = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _load_data(cfg) -> LabeledDataset:
    for key in ("data", "label_column", "positive_label"):
        if cfg.get(key) is None:
            raise UsageError(f"missing --{key.replace('_', '-')}")
    return ingest(cfg["data"], cfg["label_column"], cfg["positive_label"], cfg.get("drop_columns") or ())


def _loss_spec(cfg) -> LossSpec:
    if cfg.get("loss") is None:
        raise UsageError("missing --loss")
    params = {k: cfg[k] for k in LOSS_PARAMS if cfg.get(k) is not None}
    try:
        return LossSpec(cfg["loss"], **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


DATA_KEYS = ("data", "label_column", "positive_label", "drop_columns")


def cmd_train(args) -> int:
    cfg = _merged(args, DATA_KEYS + ("loss",) + LOSS_PARAMS)
    spec = _loss_spec(cfg)
    data = _load_data(cfg)
    model, std = fit_standardized(spec, data)
    payload = {
        "loss": spec.to_dict(),
        "classifier": model.classifier.to_dict(),
        "standardizer": std.to_dict(),
        "objective": model.objective,
        "status": model.status,
        "feature_names": list(data.feature_names),
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
    log.info("objective %.6g, wrote %s", model.objective, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    keys = DATA_KEYS + ("loss",) + LOSS_PARAMS + ("k", "seed", "n_boot", "confidence", "workers", "out_dir")
    cfg = _merged(args, keys)
    spec = _loss_spec(cfg)
    data = _load_data(cfg)
    k, seed = int(cfg.get("k", 5)), int(cfg.get("seed", 0))
    n_boot, confidence = int(cfg.get("n_boot", 1000)), float(cfg.get("confidence", 0.95))
    try:
        cv = kfold_cross_validate(spec, data, k=k, seed=seed, workers=int(cfg.get("workers", 1)), n_boot=0)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    result = ex.finalize(spec.name, cv, data, n_boot, confidence)
    out = Path(cfg.get("out_dir", "results"))
    ex.report([result], out, config=cfg)
    ex.save_results([result], out / "results.json")
    m = result.cv.report.metrics
    print(f"{spec.name}: f1={m.f1:.5f} recall={m.recall:.5f} fpr={m.fpr:.5f} auc={result.cv.report.auc:.5f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    keys = DATA_KEYS + ("loss", "k", "seed", "target", "n_boot", "confidence", "workers", "out_dir")
    cfg = _merged(args, keys)
    if args.grid:
        try:
            cfg["grid"] = json.loads(args.grid)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--grid is not valid JSON: {exc}") from exc
    try:
        config = ex.ExperimentConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep configuration: {exc}") from exc
    data = _load_data(cfg)
    result = ex.sweep(config, data)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_rows(out / "sweep.csv", result.rows)
    for row in result.failures:
        log.warning("grid point failed: %s", row["error"])
    if config.target not in result.best:
        ex.report([], out, config=config.to_dict())
        log.error("no grid point succeeded")
        return EXIT_SOLVER
    spec, cv = result.best[config.target]
    best = ex.finalize(f"best_{config.target}", cv, data, config.n_boot, config.confidence)
    ex.report([best], out, config=config.to_dict())
    ex.save_results([best], out / "results.json")
    params = {k: v for k, v in spec.to_dict().items() if k != "name"}
    print(f"best {config.target}={ex.target_value(cv, config.target):.5f} at {params}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        results = ex.load_results(args.results, n_boot=args.n_boot)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot load results {args.results}: {exc}") from exc
    ex.report(results, args.out_dir, config={"results": str(args.results)})
    return EXIT_OK if results else EXIT_DATA


def cmd_export_qp(args) -> int:
    cfg = _merged(args, DATA_KEYS + ("loss",) + LOSS_PARAMS)
    spec = _loss_spec(cfg)
    data = _load_data(cfg)
    if args.standardize:
        std = Standardizer.fit(data.features)
        data = LabeledDataset(std.transform(data.features), data.labels, data.feature_names)
    qp = build(spec, data)
    export_triplets(qp, args.out)
    log.info("wrote %d variables, %d constraints to %s", qp.n_var, qp.n_con, args.out)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
    "report": cmd_report, "export-qp": cmd_export_qp,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"risksvm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"risksvm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverFailure, InfeasibleSolution) as exc:
        print(f"risksvm: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
