"""Implied risk-neutral reweighting of the training points.

For a model trained with per-class coherent risks, the dual densities
``zeta_i`` that attain each risk at the trained slacks define point
weights ``mu_ij = w_i zeta_ij / m_i``.  Minimizing the ``mu``-weighted
expected slack (same margin rows, same ``delta ||v||^2``) recovers the
trained hyperplane; :func:`verify_equivalence` checks this numerically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import risk_measures as rm
from .geometry import LabeledDataset
from .qp_model import LossSpec, QuadraticProgram, TrainedModel, _Builder, _margin_rows, hinge_slacks
from .risk_measures import EmpiricalDistribution
from .solver import OPTIMAL, solve


@dataclass
class ImpliedMeasure:
    mu0: np.ndarray
    mu1: np.ndarray
    zeta0: np.ndarray
    zeta1: np.ndarray
    class_weights: tuple
    loss_scale: float = 1.0

    @property
    def total(self) -> float:
        return float(self.mu0.sum() + self.mu1.sum())

    def perturbed(self, factor: float, cls: int = 1) -> "ImpliedMeasure":
        """Scale the largest weight of one class by ``factor`` and renormalize."""
        mu0, mu1 = self.mu0.copy(), self.mu1.copy()
        target = mu1 if cls == 1 else mu0
        target[int(np.argmax(target))] *= factor
        total = mu0.sum() + mu1.sum()
        return ImpliedMeasure(mu0 / total, mu1 / total, self.zeta0, self.zeta1,
                              self.class_weights, self.loss_scale)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "index", "weight"])
            for cls, mu in ((0, self.mu0), (1, self.mu1)):
                for j, w in enumerate(mu):
                    writer.writerow([cls, j, repr(float(w))])


def implied_weights(spec: LossSpec, trained: TrainedModel, source: str = "auto") -> ImpliedMeasure:
    """Assemble ``mu`` from a dual density of each class risk at the trained slacks.

    ``source="duals"`` reads the density off the solver multipliers of the
    margin and slack-sign rows; at an optimum several training points sit
    on kinks of the risk (slack equal to the class mean, or a tie at the
    AVaR threshold) and only the KKT-consistent density certifies the
    trained hyperplane.  ``source="density"`` uses
    :func:`risk_measures.subgradient_density` instead, which agrees with the
    duals away from such ties.  ``"auto"`` prefers the duals when present.
    """
    if spec.name == "huber":
        raise ValueError("the Huber loss is not a coherent risk; no implied measure")
    if trained.status != OPTIMAL:
        raise ValueError(f"model status is {trained.status!r}, not optimal")
    if source == "auto":
        source = "duals" if trained.y is not None and trained.qp is not None else "density"
    if source == "duals":
        return _from_duals(spec, trained)
    if source != "density":
        raise ValueError(f"unknown source {source!r}")
    z0, z1 = np.asarray(trained.slacks0), np.asarray(trained.slacks1)
    m0, m1 = z0.size, z1.size
    if spec.name == "joint_cvar":
        pooled = EmpiricalDistribution(np.concatenate([z0, z1]))
        tail = rm.subgradient_density(rm.RiskSpec.avar(spec.alpha), pooled) \
            if spec.beta < 1.0 else np.zeros(m0 + m1)
        c0 = spec.beta / m0 + (1.0 - spec.beta) * tail[:m0] / (m0 + m1)
        c1 = spec.beta / m1 + (1.0 - spec.beta) * tail[m0:] / (m0 + m1)
        return _assemble(c0, c1, (1.0, 1.0))
    r0, r1 = spec.class_risks()
    w0, w1 = spec.class_weights
    zeta0 = rm.subgradient_density(r0, EmpiricalDistribution(z0))
    zeta1 = rm.subgradient_density(r1, EmpiricalDistribution(z1))
    return _assemble(w0 * zeta0 / m0, w1 * zeta1 / m1, (w0, w1))


def _assemble(c0, c1, weights) -> ImpliedMeasure:
    """Normalize per-point loss coefficients into a probability vector."""
    scale = float(c0.sum() + c1.sum())
    w0, w1 = weights
    zeta0 = c0 * c0.size / w0
    zeta1 = c1 * c1.size / w1
    return ImpliedMeasure(c0 / scale, c1 / scale, zeta0, zeta1, (w0, w1), scale)


def _from_duals(spec: LossSpec, trained: TrainedModel) -> ImpliedMeasure:
    qp, y = trained.qp, trained.y
    if "z0" not in qp.var_map:
        raise ValueError("model has no per-point slack variables")
    coef = []
    for cls in (0, 1):
        cols = qp.var_map[f"z{cls}"]
        rows = np.r_[qp.row_map[f"margin{cls}"], qp.row_map[f"z{cls}_nonneg"]]
        block = qp.A[rows][:, cols]
        # stationarity in z: risk gradient = -(margin and sign-row multipliers)
        grad = -(block.T @ y[rows]) * qp.slack_scale[cls]
        coef.append(np.maximum(grad, 0.0))
    weights = (1.0, 1.0) if spec.name == "joint_cvar" else spec.class_weights
    return _assemble(coef[0], coef[1], weights)


def reweighted_qp(measure: ImpliedMeasure, delta: float, data: LabeledDataset) -> QuadraticProgram:
    """``min sum mu_j z_j * scale + delta ||v||^2`` over the soft-margin rows."""
    X0, X1 = data.class_features(0), data.class_features(1)
    b = _Builder()
    v = b.var("v", data.n_features)
    gamma = b.var("gamma", 1)
    b.quad(v, 2.0 * delta)
    z0, z1 = b.var("z0", len(X0)), b.var("z1", len(X1))
    _margin_rows(b, X0, X1, v, gamma, (z0,), (z1,), (1.0, 1.0))
    b.lower_bound("z0_nonneg", z0)
    b.lower_bound("z1_nonneg", z1)
    b.cost(z0, measure.loss_scale * measure.mu0)
    b.cost(z1, measure.loss_scale * measure.mu1)
    return b.build((1.0, 1.0))


def reweighted_objective(measure: ImpliedMeasure, delta: float, clf, data: LabeledDataset) -> float:
    z0, z1 = hinge_slacks(clf, data)
    loss = measure.mu0 @ z0 + measure.mu1 @ z1
    return float(measure.loss_scale * loss + delta * clf.v @ clf.v)


def verify_equivalence(measure: ImpliedMeasure, spec: LossSpec, data: LabeledDataset,
                       trained: TrainedModel, settings=None) -> float:
    """Gap between the reweighted objective at the trained model and its optimum."""
    qp = reweighted_qp(measure, spec.delta, data)
    sol = solve(qp, settings)
    if not sol.optimal:
        raise RuntimeError(f"reweighted problem finished with status {sol.status!r}")
    at_trained = reweighted_objective(measure, spec.delta, trained.classifier, data)
    return abs(at_trained - sol.objective)
