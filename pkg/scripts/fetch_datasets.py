"""Place the benchmark CSVs under data/.

WDBC ships with scikit-learn and is exported locally.  Pima and
seismic-bumps are downloaded; the sha256 of each download is recorded in
data/checksums.json on first fetch and checked on later fetches.
"""

import argparse
import hashlib
import io
import json
import sys
import urllib.request
from pathlib import Path

import pandas as pd
from scipy.io import arff
from sklearn.datasets import load_breast_cancer

SOURCES = {
    "pima": "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.data.csv",
    "seismic": "https://archive.ics.uci.edu/ml/machine-learning-databases/00266/seismic-bumps.arff",
}
PIMA_COLUMNS = ["pregnancies", "glucose", "blood_pressure", "skin_thickness", "insulin",
                "bmi", "pedigree", "age", "outcome"]


def export_wdbc(out: Path) -> Path:
    bunch = load_breast_cancer(as_frame=True)
    frame = bunch.frame.drop(columns="target")
    # sklearn codes malignant as 0
    frame.insert(0, "diagnosis", ["M" if t == 0 else "B" for t in bunch.target])
    path = out / "wdbc.csv"
    frame.to_csv(path, index=False)
    return path


def download(name: str, out: Path, checksums: dict, timeout: float) -> bytes:
    with urllib.request.urlopen(SOURCES[name], timeout=timeout) as resp:
        raw = resp.read()
    digest = hashlib.sha256(raw).hexdigest()
    known = checksums.get(name)
    if known and known != digest:
        raise RuntimeError(f"{name}: checksum mismatch ({digest} != recorded {known})")
    checksums[name] = digest
    return raw


def write_pima(raw: bytes, out: Path) -> Path:
    frame = pd.read_csv(io.BytesIO(raw), header=None, names=PIMA_COLUMNS)
    path = out / "pima.csv"
    frame.to_csv(path, index=False)
    return path


def write_seismic(raw: bytes, out: Path) -> Path:
    records, _ = arff.loadarff(io.StringIO(raw.decode()))
    frame = pd.DataFrame(records)
    for col in frame.columns:
        if frame[col].dtype == object:
            frame[col] = frame[col].str.decode("utf-8")
    path = out / "seismic_bumps.csv"
    frame.to_csv(path, index=False)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data")
    parser.add_argument("--timeout", type=float, default=30.0)
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print("wrote", export_wdbc(out))

    sums_path = out / "checksums.json"
    checksums = json.loads(sums_path.read_text()) if sums_path.exists() else {}
    failed = []
    for name, writer in (("pima", write_pima), ("seismic", write_seismic)):
        try:
            print("wrote", writer(download(name, out, checksums, args.timeout), out))
        except Exception as exc:
            print(f"could not fetch {name}: {exc}", file=sys.stderr)
            failed.append(name)
    sums_path.write_text(json.dumps(checksums, indent=2, sort_keys=True) + "\n")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
