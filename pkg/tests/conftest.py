import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from risksvm.geometry import LabeledDataset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / "data"


def toy_dataset(rng, m0=None, m1=None, n=None, sep=1.0) -> LabeledDataset:
    """Two overlapping Gaussian blobs, at most 40 points in total."""
    m0 = m0 or int(rng.integers(4, 20))
    m1 = m1 or int(rng.integers(4, 20))
    n = n or int(rng.integers(2, 5))
    shift = np.zeros(n)
    shift[0] = sep
    X0 = rng.normal(size=(m0, n)) - shift
    X1 = rng.normal(size=(m1, n)) + shift
    return LabeledDataset(np.vstack([X0, X1]), np.r_[np.zeros(m0, int), np.ones(m1, int)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_wdbc(path: Path) -> Path:
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer(as_frame=True)
    frame = bunch.frame.drop(columns="target")
    frame.insert(0, "diagnosis", ["M" if t == 0 else "B" for t in bunch.target])
    frame.to_csv(path, index=False)
    return path


@pytest.fixture(scope="session")
def wdbc_path(tmp_path_factory):
    path = DATA_DIR / "wdbc.csv"
    if path.exists():
        return path
    return write_wdbc(tmp_path_factory.mktemp("data") / "wdbc.csv")
