"""Build the convex QP for each named loss and read trained models back.

Every formulation shares the soft-margin rows::

    class 0:  <v, x> - gamma - z0_j <= -1
    class 1:  <v, x> - gamma + z1_j >=  1

with ``z >= 0`` and a ``delta * ||v||^2`` regularizer, so class 1 ends up
on the positive side of the hyperplane.  Risk terms are encoded with
auxiliary variables:

* AVaR_alpha(Z):  ``t + sum(y) / (alpha m)`` with ``y_j >= z_j - t``, ``y >= 0``
* E + kappa * semideviation:  ``mean(z) + kappa mean(y)`` with
  ``y_j >= z_j - s``, ``y >= 0`` and ``s = mean(z)`` as an equality row
  (keeps the constraint matrix sparse).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import risk_measures as rm
from .geometry import LabeledDataset, LinearClassifier
from .risk_measures import EmpiricalDistribution, RiskSpec

LOSS_NAMES = (
    "exp_val", "huber", "joint_cvar", "asym_risk",
    "one_cvar", "risk_cvar", "two_risk", "two_cvar",
)
RISK_AVERSE = ("joint_cvar", "asym_risk", "one_cvar", "risk_cvar", "two_risk", "two_cvar")

_REQUIRED = {
    "exp_val": (),
    "huber": (),
    "joint_cvar": ("alpha", "beta"),
    "asym_risk": ("lam",),
    "one_cvar": ("lam", "alpha2"),
    "risk_cvar": ("lam", "alpha2", "beta2"),
    "two_risk": ("lam",),
    "two_cvar": ("lam", "alpha1", "alpha2", "beta1", "beta2"),
}

FEASIBILITY_TOL = 1e-6


class InfeasibleSolution(RuntimeError):
    pass


@dataclass(frozen=True)
class LossSpec:
    """A named loss and its parameters.

    ``alpha`` and ``beta`` are shorthands filling whichever of the per-class
    values (``alpha1``/``alpha2``, ``beta1``/``beta2``) are left unset.
    ``lam`` weights class 0, ``1 - lam`` weights class 1.
    """

    name: str
    lam: Optional[float] = None
    alpha: Optional[float] = None
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    beta: Optional[float] = None
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    delta: float = 1e-2
    kappa: float = 1.0

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.name!r}; choose from {LOSS_NAMES}")
        for short, longs in (("alpha", ("alpha1", "alpha2")), ("beta", ("beta1", "beta2"))):
            for attr in longs:
                if getattr(self, attr) is None and getattr(self, short) is not None:
                    object.__setattr__(self, attr, getattr(self, short))
        for key in _REQUIRED[self.name]:
            if getattr(self, key) is None:
                raise ValueError(f"loss {self.name!r} requires parameter {key!r}")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        for key in ("alpha", "alpha1", "alpha2"):
            val = getattr(self, key)
            if val is not None and not 0.0 < val <= 1.0:
                raise ValueError(f"{key} must lie in (0, 1], got {val}")
        for key in ("beta", "beta1", "beta2"):
            val = getattr(self, key)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1], got {val}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(**d)

    @property
    def class_weights(self) -> tuple[float, float]:
        """Weights on the class-0 and class-1 risk terms."""
        if self.name in ("exp_val", "huber"):
            return (1.0, 1.0) if self.lam is None else (self.lam, 1.0 - self.lam)
        if self.name == "joint_cvar":
            return (1.0, 1.0)
        return self.lam, 1.0 - self.lam

    def class_risks(self) -> tuple[RiskSpec, RiskSpec]:
        """Per-class risk measures (not defined for ``joint_cvar``/``huber``)."""
        E = RiskSpec.expectation()
        msd = RiskSpec.msd(self.kappa)
        if self.name == "exp_val":
            return E, E
        if self.name == "asym_risk":
            return E, msd
        if self.name == "one_cvar":
            return msd, RiskSpec.avar(self.alpha2)
        if self.name == "risk_cvar":
            return msd, RiskSpec.combo(self.beta2, self.alpha2)
        if self.name == "two_risk":
            return msd, msd
        if self.name == "two_cvar":
            return RiskSpec.combo(self.beta1, self.alpha1), RiskSpec.combo(self.beta2, self.alpha2)
        raise ValueError(f"loss {self.name!r} has no per-class risk pair")


@dataclass
class QuadraticProgram:
    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    var_map: dict
    row_map: dict = field(default_factory=dict)
    slack_scale: tuple = (1.0, 1.0)

    @property
    def n_var(self) -> int:
        return self.q.size

    @property
    def n_con(self) -> int:
        return self.l.size

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def primal_violation(self, x) -> float:
        Ax = self.A @ x
        return float(np.max(np.abs(Ax - np.clip(Ax, self.l, self.u)), initial=0.0))


@dataclass
class TrainedModel:
    classifier: LinearClassifier
    slacks0: np.ndarray
    slacks1: np.ndarray
    objective: float
    loss: LossSpec
    status: str
    x: Optional[np.ndarray] = field(default=None, repr=False)
    y: Optional[np.ndarray] = field(default=None, repr=False)
    qp: Optional[QuadraticProgram] = field(default=None, repr=False)


class _Builder:
    """Accumulates variables, objective terms and constraint rows."""

    def __init__(self):
        self.n = 0
        self.var_map = {}
        self.row_map = {}
        self.q = {}
        self.P_diag = {}
        self.rows, self.cols, self.vals = [], [], []
        self.l, self.u = [], []

    def var(self, name, size) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.var_map[name] = slice(self.n, self.n + size)
        self.n += size
        return idx

    def cost(self, idx, coef):
        for i, c in zip(np.atleast_1d(idx), np.broadcast_to(coef, np.shape(np.atleast_1d(idx)))):
            self.q[int(i)] = self.q.get(int(i), 0.0) + float(c)

    def quad(self, idx, coef):
        for i in np.atleast_1d(idx):
            self.P_diag[int(i)] = self.P_diag.get(int(i), 0.0) + float(coef)

    def rows_block(self, name, entries, lo, hi):
        """Append ``len(lo)`` rows.  ``entries`` is a list of (local_row, col, val) arrays."""
        start = len(self.l)
        k = len(lo)
        for r, c, v in entries:
            r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=float))
            self.rows.append((r + start).ravel())
            self.cols.append(c.ravel())
            self.vals.append(v.ravel())
        self.l.extend(np.broadcast_to(lo, (k,)).tolist())
        self.u.extend(np.broadcast_to(hi, (k,)).tolist())
        self.row_map[name] = slice(start, start + k)

    def lower_bound(self, name, idx, bound=0.0):
        k = idx.size
        self.rows_block(name, [(np.arange(k), idx, 1.0)], np.full(k, bound), np.full(k, np.inf))

    def build(self, slack_scale) -> QuadraticProgram:
        n = self.n
        q = np.zeros(n)
        for i, c in self.q.items():
            q[i] = c
        diag = np.zeros(n)
        for i, c in self.P_diag.items():
            diag[i] = c
        P = sp.diags(diag).tocsc()
        m = len(self.l)
        A = sp.csc_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(m, n),
        )
        A.sum_duplicates()
        return QuadraticProgram(P, q, A, np.array(self.l), np.array(self.u),
                                dict(self.var_map), dict(self.row_map), slack_scale)


def build(spec: LossSpec, data: LabeledDataset, weighted_form: bool = False) -> QuadraticProgram:
    """Assemble the QP for ``spec`` on ``data``.

    With ``weighted_form`` the class weights move from the objective into
    the margin rows (slack coefficient ``1/w_i``); by positive homogeneity
    the optimal hyperplane is the same.
    """
    X0, X1 = data.class_features(0), data.class_features(1)
    m0, m1 = len(X0), len(X1)
    n = data.n_features
    w0, w1 = spec.class_weights
    if weighted_form:
        if spec.name in ("joint_cvar", "huber"):
            raise ValueError(f"loss {spec.name!r} has no weighted form")
        scale = (w0, w1)
        w0 = w1 = 1.0
    else:
        scale = (1.0, 1.0)

    b = _Builder()
    v = b.var("v", n)
    gamma = b.var("gamma", 1)
    b.quad(v, 2.0 * spec.delta)

    if spec.name == "huber":
        a0, b0 = b.var("a0", m0), b.var("b0", m0)
        a1, b1 = b.var("a1", m1), b.var("b1", m1)
        _margin_rows(b, X0, X1, v, gamma, (a0, b0), (a1, b1), scale)
        for a_idx, b_idx, m, w in ((a0, b0, m0, w0), (a1, b1, m1, w1)):
            b.quad(a_idx, 2.0 * w / m)
            b.cost(b_idx, 2.0 * w / m)
        for name, idx in (("a0", a0), ("b0", b0), ("a1", a1), ("b1", b1)):
            b.lower_bound(name + "_nonneg", idx)
        for name, idx in (("a0", a0), ("a1", a1)):
            k = idx.size
            b.rows_block(name + "_cap", [(np.arange(k), idx, 1.0)], np.full(k, -np.inf), np.ones(k))
        return b.build(scale)

    z0, z1 = b.var("z0", m0), b.var("z1", m1)
    _margin_rows(b, X0, X1, v, gamma, (z0,), (z1,), scale)
    b.lower_bound("z0_nonneg", z0)
    b.lower_bound("z1_nonneg", z1)

    if spec.name == "joint_cvar":
        beta, alpha = spec.beta, spec.alpha
        b.cost(z0, beta / m0)
        b.cost(z1, beta / m1)
        if beta < 1.0:
            t = b.var("t", 1)
            y = b.var("y", m0 + m1)
            b.cost(t, 1.0 - beta)
            b.cost(y, (1.0 - beta) / (alpha * (m0 + m1)))
            _avar_rows(b, "y_tail", y, np.concatenate([z0, z1]), t)
        return b.build(scale)

    if spec.name == "exp_val":
        b.cost(z0, w0 / m0)
        b.cost(z1, w1 / m1)
        return b.build(scale)

    r0, r1 = spec.class_risks()
    _risk_terms(b, r0, z0, w0, "0")
    _risk_terms(b, r1, z1, w1, "1")
    return b.build(scale)


def _margin_rows(b: _Builder, X0, X1, v, gamma, slack0, slack1, scale):
    for X, slacks, sign, name, s in ((X0, slack0, -1.0, "margin0", scale[0]),
                                     (X1, slack1, 1.0, "margin1", scale[1])):
        m, n = X.shape
        rr = np.repeat(np.arange(m), n)
        cc = np.tile(v, m)
        entries = [(rr, cc, X.ravel()), (np.arange(m), gamma[0], -1.0)]
        for idx in slacks:
            entries.append((np.arange(m), idx, sign / s))
        if sign < 0:
            b.rows_block(name, entries, np.full(m, -np.inf), np.full(m, -1.0))
        else:
            b.rows_block(name, entries, np.ones(m), np.full(m, np.inf))


def _avar_rows(b: _Builder, name, y, z, t):
    """``y_j - z_j + t >= 0`` and ``y >= 0``."""
    k = y.size
    r = np.arange(k)
    b.rows_block(name, [(r, y, 1.0), (r, z, -1.0), (r, t[0], 1.0)], np.zeros(k), np.full(k, np.inf))
    b.lower_bound(name + "_nonneg", y)


def _risk_terms(b: _Builder, risk: RiskSpec, z, weight, tag):
    m = z.size
    if risk.kind == rm.EXPECTATION:
        b.cost(z, weight / m)
        return
    if risk.kind == rm.MSD:
        s = b.var("mean" + tag, 1)
        y = b.var("y" + tag, m)
        b.cost(z, weight / m)
        b.cost(y, weight * risk.kappa / m)
        b.rows_block("mean" + tag, [(np.zeros(m, int), z, -1.0 / m), (0, s[0], 1.0)], [0.0], [0.0])
        r = np.arange(m)
        b.rows_block("dev" + tag, [(r, y, 1.0), (r, z, -1.0), (r, s[0], 1.0)], np.zeros(m), np.full(m, np.inf))
        b.lower_bound("y" + tag + "_nonneg", y)
        return
    if risk.kind == rm.AVAR:
        beta, alpha = 0.0, risk.alpha
    elif risk.kind == rm.COMBO:
        beta, alpha = risk.beta, risk.alpha
    else:
        raise ValueError(f"risk {risk.kind!r} cannot be used as a training loss")
    if beta > 0:
        b.cost(z, weight * beta / m)
    if beta < 1.0:
        t = b.var("t" + tag, 1)
        y = b.var("y" + tag, m)
        b.cost(t, weight * (1.0 - beta))
        b.cost(y, weight * (1.0 - beta) / (alpha * m))
        _avar_rows(b, "tail" + tag, y, z, t)


def slacks_from_x(qp: QuadraticProgram, x) -> tuple[np.ndarray, np.ndarray]:
    """Margin slacks per class in the original (objective-weighted) units."""
    vm = qp.var_map
    if "z0" in vm:
        z0, z1 = x[vm["z0"]], x[vm["z1"]]
    else:
        z0 = x[vm["a0"]] + x[vm["b0"]]
        z1 = x[vm["a1"]] + x[vm["b1"]]
    return z0 / qp.slack_scale[0], z1 / qp.slack_scale[1]


def extract_solution(qp: QuadraticProgram, x, spec: LossSpec, data: LabeledDataset,
                     status: str = "optimal", y=None) -> TrainedModel:
    x = np.asarray(x, dtype=float)
    viol = qp.primal_violation(x)
    if viol > FEASIBILITY_TOL:
        raise InfeasibleSolution(f"primal violation {viol:.3e} exceeds {FEASIBILITY_TOL:g}")
    clf = LinearClassifier(x[qp.var_map["v"]], x[qp.var_map["gamma"]][0])
    z0, z1 = slacks_from_x(qp, x)
    return TrainedModel(clf, z0, z1, qp.objective(x), spec, status, x=x, y=y, qp=qp)


def hinge_slacks(clf: LinearClassifier, data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Smallest feasible margin slacks for ``clf`` on each class."""
    s = data.features @ clf.v - clf.gamma
    return (np.maximum(0.0, 1.0 + s[data.labels == 0]),
            np.maximum(0.0, 1.0 - s[data.labels == 1]))


def loss_value(spec: LossSpec, z0, z1) -> float:
    """The risk part of the objective evaluated directly from slacks."""
    w0, w1 = spec.class_weights
    d0, d1 = EmpiricalDistribution(z0), EmpiricalDistribution(z1)
    if spec.name == "huber":
        hub = lambda z: np.where(z <= 1.0, z * z, 2.0 * z - 1.0)
        return w0 * float(hub(z0).mean()) + w1 * float(hub(z1).mean())
    if spec.name == "joint_cvar":
        pooled = EmpiricalDistribution(np.concatenate([z0, z1]))
        mean_part = spec.beta * (rm.expectation(d0) + rm.expectation(d1))
        if spec.beta == 1.0:
            return mean_part
        return mean_part + (1.0 - spec.beta) * rm.avar_sorted(pooled, spec.alpha)
    r0, r1 = spec.class_risks()
    return w0 * rm.evaluate(r0, d0) + w1 * rm.evaluate(r1, d1)


def direct_objective(spec: LossSpec, clf: LinearClassifier, data: LabeledDataset) -> float:
    """Objective at ``clf`` with slacks set to their hinge values."""
    z0, z1 = hinge_slacks(clf, data)
    return loss_value(spec, z0, z1) + spec.delta * float(clf.v @ clf.v)


def export_triplets(qp: QuadraticProgram, path) -> None:
    """Write the QP as ``id row col value`` lines (``P``, ``A``, ``q``, ``l``, ``u``)."""
    with open(path, "w") as fh:
        fh.write(f"# n_var {qp.n_var} n_con {qp.n_con}\n")
        for tag, M in (("P", sp.triu(qp.P).tocoo()), ("A", qp.A.tocoo())):
            for r, c, v in zip(M.row, M.col, M.data):
                fh.write(f"{tag} {r} {c} {float(v)!r}\n")
        for tag, vec in (("q", qp.q), ("l", qp.l), ("u", qp.u)):
            for i, v in enumerate(vec):
                if v != 0.0 or tag != "q":
                    fh.write(f"{tag} {i} 0 {float(v)!r}\n")


def load_triplets(path):
    """Read a file written by :func:`export_triplets` into ``(P, q, A, l, u)``."""
    with open(path) as fh:
        header = fh.readline().split()
        n, m = int(header[2]), int(header[4])
        parts = {"P": ([], [], []), "A": ([], [], [])}
        q, l, u = np.zeros(n), np.zeros(m), np.zeros(m)
        for line in fh:
            tag, r, c, v = line.split()
            if tag in parts:
                parts[tag][0].append(int(r))
                parts[tag][1].append(int(c))
                parts[tag][2].append(float(v))
            else:
                {"q": q, "l": l, "u": u}[tag][int(r)] = float(v)
    Pu = sp.csc_matrix((parts["P"][2], (parts["P"][0], parts["P"][1])), shape=(n, n))
    P = (Pu + sp.triu(Pu, 1).T).tocsc()
    A = sp.csc_matrix((parts["A"][2], (parts["A"][0], parts["A"][1])), shape=(m, n))
    return P, q, A, l, u


class SolverFailure(RuntimeError):
    pass


def train(spec: LossSpec, data: LabeledDataset, settings=None, weighted_form: bool = False) -> TrainedModel:
    """Build, solve and extract in one call."""
    from .solver import solve

    qp = build(spec, data, weighted_form=weighted_form)
    sol = solve(qp, settings)
    if not sol.optimal:
        raise SolverFailure(f"solver finished with status {sol.status!r} "
                            f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e})")
    return extract_solution(qp, sol.x, spec, data, status=sol.status, y=sol.y)
