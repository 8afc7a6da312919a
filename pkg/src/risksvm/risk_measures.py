"""Coherent risk measures on finite weighted samples of scalar errors.

All evaluators take an :class:`EmpiricalDistribution` and are pure.  The
tail parameter ``alpha`` is the probability *mass* of the upper tail, so
``avar(dist, 1.0)`` is the mean and small ``alpha`` looks further into
the tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

EXPECTATION = "expectation"
VAR = "var"
AVAR = "avar"
MSD = "msd"
COMBO = "combo"

_KINDS = (EXPECTATION, VAR, AVAR, MSD, COMBO)
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Finite sample of error realizations with probability weights."""

    values: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        if values.size == 0:
            raise ValueError("distribution needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution values must be finite")
        if self.weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.atleast_1d(np.asarray(self.weights, dtype=float)).ravel()
            if weights.shape != values.shape:
                raise ValueError("values and weights differ in length")
            if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be strictly positive")
            if abs(weights.sum() - 1.0) > _WEIGHT_TOL * max(1, values.size):
                raise ValueError("weights must sum to one")
        values.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, values) -> "EmpiricalDistribution":
        return cls(values)

    def __len__(self) -> int:
        return self.values.size

    def map(self, fn) -> "EmpiricalDistribution":
        """Apply ``fn`` to the values, keeping the weights."""
        return EmpiricalDistribution(fn(self.values), self.weights)


@dataclass(frozen=True)
class RiskSpec:
    """A risk measure and its parameters.

    ``combo`` means ``beta * E + (1 - beta) * AVaR_alpha``.
    """

    kind: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    kappa: Optional[float] = None
    p: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown risk kind {self.kind!r}")
        if self.kind == VAR:
            _check_open_alpha(self.alpha)
        if self.kind in (AVAR, COMBO):
            _check_alpha(self.alpha)
        if self.kind == COMBO and (self.beta is None or not 0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.kind == MSD:
            _check_kappa(self.kappa)
            if self.p != 1:
                raise ValueError("only first-order semideviation is supported")

    @classmethod
    def expectation(cls) -> "RiskSpec":
        return cls(EXPECTATION)

    @classmethod
    def var(cls, alpha: float) -> "RiskSpec":
        return cls(VAR, alpha=alpha)

    @classmethod
    def avar(cls, alpha: float) -> "RiskSpec":
        return cls(AVAR, alpha=alpha)

    @classmethod
    def msd(cls, kappa: float = 1.0, p: int = 1) -> "RiskSpec":
        return cls(MSD, kappa=kappa, p=p)

    @classmethod
    def combo(cls, beta: float, alpha: float) -> "RiskSpec":
        return cls(COMBO, alpha=alpha, beta=beta)

    @property
    def coherent(self) -> bool:
        return self.kind != VAR

    @property
    def compositions(self) -> int:
        """Number of nested expectations in the plug-in estimator."""
        return 2 if self.kind == MSD else 1

    def label(self) -> str:
        if self.kind == EXPECTATION:
            return "E"
        if self.kind == VAR:
            return f"VaR({self.alpha:g})"
        if self.kind == AVAR:
            return f"AVaR({self.alpha:g})"
        if self.kind == MSD:
            return f"MSD({self.kappa:g})"
        return f"{self.beta:g}E+{1 - self.beta:g}AVaR({self.alpha:g})"


def _check_open_alpha(alpha):
    if alpha is None or not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _check_alpha(alpha):
    if alpha is None or not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _check_kappa(kappa):
    if kappa is None or not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")


def expectation(dist: EmpiricalDistribution) -> float:
    return float(np.dot(dist.weights, dist.values))


def var(dist: EmpiricalDistribution, alpha: float) -> float:
    """Left ``(1 - alpha)``-quantile: ``inf{eta : F(eta) >= 1 - alpha}``."""
    _check_open_alpha(alpha)
    order = np.argsort(dist.values, kind="stable")
    cdf = np.cumsum(dist.weights[order])
    level = 1.0 - alpha
    k = int(np.searchsorted(cdf, level - _WEIGHT_TOL, side="left"))
    return float(dist.values[order[min(k, order.size - 1)]])


def _tail_take(dist: EmpiricalDistribution, alpha: float) -> np.ndarray:
    """Probability mass each atom contributes to the worst ``alpha`` tail.

    Atoms are visited in decreasing order of value; the boundary level
    contributes fractionally, shared among tied atoms in proportion to
    their weights.
    """
    order = np.argsort(-dist.values, kind="stable")
    levels, start = np.unique(-dist.values[order], return_index=True)
    level_mass = np.add.reduceat(dist.weights[order], start)
    before = np.concatenate(([0.0], np.cumsum(level_mass)[:-1]))
    level_take = np.clip(alpha - before, 0.0, level_mass)
    share = np.repeat(level_take / level_mass, np.diff(np.append(start, order.size)))
    take = np.empty(order.size)
    take[order] = share * dist.weights[order]
    return take


def avar_sorted(dist: EmpiricalDistribution, alpha: float) -> float:
    """Average of the worst ``alpha`` probability mass."""
    _check_alpha(alpha)
    if alpha == 1.0:
        return expectation(dist)
    take = _tail_take(dist, alpha)
    return float(np.dot(take, dist.values) / alpha)


def avar_variational(dist: EmpiricalDistribution, alpha: float) -> tuple[float, float]:
    """Minimize ``eta + E[(X - eta)_+] / alpha`` over the sample breakpoints.

    The objective is convex piecewise linear with kinks at the sample
    values, so scanning them is exact.  Returns ``(value, eta)`` where
    ``eta`` is the largest minimizing breakpoint.
    """
    _check_alpha(alpha)
    x, w = dist.values, dist.weights
    etas = np.unique(x)
    excess = np.maximum(x[None, :] - etas[:, None], 0.0) @ w
    objective = etas + excess / alpha
    best = objective.min()
    tol = 1e-12 * max(1.0, abs(best), float(np.abs(x).max()))
    k = int(np.flatnonzero(objective <= best + tol)[-1])
    return float(objective[k]), float(etas[k])


def mean_semideviation(dist: EmpiricalDistribution, kappa: float, p: int = 1) -> float:
    """``E[Z] + kappa * E[(Z - E[Z])_+]`` (first order only)."""
    _check_kappa(kappa)
    if p != 1:
        raise ValueError("only first-order semideviation is supported")
    return expectation(dist) + kappa * upper_semideviation(dist)


def upper_semideviation(dist: EmpiricalDistribution) -> float:
    mean = expectation(dist)
    return float(np.dot(dist.weights, np.maximum(dist.values - mean, 0.0)))


def evaluate(spec: RiskSpec, dist: EmpiricalDistribution) -> float:
    if spec.kind == EXPECTATION:
        return expectation(dist)
    if spec.kind == VAR:
        return var(dist, spec.alpha)
    if spec.kind == AVAR:
        return avar_sorted(dist, spec.alpha)
    if spec.kind == MSD:
        return mean_semideviation(dist, spec.kappa, spec.p)
    return spec.beta * expectation(dist) + (1.0 - spec.beta) * avar_sorted(dist, spec.alpha)


def subgradient_density(spec: RiskSpec, dist: EmpiricalDistribution) -> np.ndarray:
    """A density ``zeta`` attaining the dual representation at ``dist``.

    ``zeta >= 0``, ``sum(w * zeta) == 1`` and ``sum(w * zeta * Z)``
    reproduces :func:`evaluate`.
    """
    if spec.kind == VAR:
        raise ValueError("VaR is not coherent and has no dual density")
    if spec.kind == EXPECTATION:
        return np.ones(len(dist))
    if spec.kind == AVAR:
        return _avar_density(dist, spec.alpha)
    if spec.kind == MSD:
        mean = expectation(dist)
        above = dist.values > mean
        # atoms sitting on the mean get no extra weight; their deviation is zero
        prob_above = float(dist.weights[above].sum())
        return 1.0 + spec.kappa * (above.astype(float) - prob_above)
    return spec.beta + (1.0 - spec.beta) * _avar_density(dist, spec.alpha)


def _avar_density(dist: EmpiricalDistribution, alpha: float) -> np.ndarray:
    _check_alpha(alpha)
    if alpha == 1.0:
        return np.ones(len(dist))
    return _tail_take(dist, alpha) / (alpha * dist.weights)
