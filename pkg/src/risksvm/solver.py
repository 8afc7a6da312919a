"""Primal-dual interior point solver for convex QPs.

Solves::

    minimize    0.5 x'Px + q'x
    subject to  l <= Ax <= u

with ``P`` positive semidefinite.  Rows with ``l == u`` are equalities and
infinite bounds are dropped.  Duals follow the convention
``Px + q + A'y = 0`` with ``y >= 0`` on rows at their upper bound and
``y <= 0`` on rows at their lower bound.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class SolverSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    max_iter: int = 20000
    scaling: bool = True
    polish: bool = True
    step_fraction: float = 0.99
    regularization: float = 1e-10
    refine_steps: int = 3
    verbose: bool = False

    def __post_init__(self):
        if self.eps_abs <= 0 or self.eps_rel <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    polished: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def objective_value(P, q, x) -> float:
    return float(0.5 * x @ (P @ x) + q @ x)


def kkt_residuals(qp, solution) -> tuple[float, float, float]:
    """Infinity-norm primal, stationarity and complementarity residuals.

    ``qp`` needs ``P, q, A, l, u`` attributes; ``solution`` needs ``x, y``.
    """
    x, y = np.asarray(solution.x, float), np.asarray(solution.y, float)
    P, A = sp.csc_matrix(qp.P), sp.csc_matrix(qp.A)
    l, u = np.asarray(qp.l, float), np.asarray(qp.u, float)
    Ax = A @ x
    primal = _inf_norm(Ax - np.clip(Ax, l, u))
    dual = _inf_norm(P @ x + qp.q + A.T @ y)
    y_up, y_lo = np.maximum(y, 0.0), np.maximum(-y, 0.0)
    with np.errstate(invalid="ignore"):
        gap_up = np.where(np.isfinite(u), y_up * np.abs(u - Ax), y_up)
        gap_lo = np.where(np.isfinite(l), y_lo * np.abs(Ax - l), y_lo)
    comp = max(_inf_norm(gap_up), _inf_norm(gap_lo))
    return primal, dual, comp


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


class _Standard:
    """Equality/inequality split of ``l <= Ax <= u``.

    ``E x = b`` collects the equality rows, ``G x <= h`` the finite one-sided
    bounds (lower bounds negated).  ``*_rows`` remember the source row of
    ``A`` and the sign used, for mapping duals back.
    """

    def __init__(self, A, l, u, row_scale):
        A = sp.csr_matrix(A)
        eq = np.isfinite(l) & np.isfinite(u) & (l == u)
        up = np.isfinite(u) & ~eq
        lo = np.isfinite(l) & ~eq
        self.eq_rows = np.flatnonzero(eq)
        self.up_rows = np.flatnonzero(up)
        self.lo_rows = np.flatnonzero(lo)
        As = sp.diags(row_scale) @ A
        ls, us = l * row_scale, u * row_scale
        self.E = As[self.eq_rows].tocsc()
        self.b = us[self.eq_rows]
        self.G = sp.vstack([As[self.up_rows], -As[self.lo_rows]]).tocsc()
        self.h = np.concatenate([us[self.up_rows], -ls[self.lo_rows]])
        self.row_scale = row_scale
        self.n_rows = A.shape[0]

    def duals_to_rows(self, y_eq, z):
        """Map (equality, inequality) multipliers to one dual per row of ``A``."""
        y = np.zeros(self.n_rows)
        y[self.eq_rows] += y_eq
        n_up = self.up_rows.size
        np.add.at(y, self.up_rows, z[:n_up])
        np.add.at(y, self.lo_rows, -z[n_up:])
        return y * self.row_scale


def solve(qp, settings: Optional[SolverSettings] = None) -> Solution:
    """Solve ``qp`` (any object with ``P, q, A, l, u``)."""
    settings = settings or SolverSettings()
    P = sp.csc_matrix(qp.P, dtype=float)
    P = ((P + P.T) * 0.5).tocsc()
    q = np.asarray(qp.q, dtype=float)
    A = sp.csr_matrix(qp.A, dtype=float)
    l = np.asarray(qp.l, dtype=float)
    u = np.asarray(qp.u, dtype=float)
    if np.any(l > u):
        raise ValueError("lower bounds exceed upper bounds")

    if settings.scaling and A.shape[0]:
        row_norm = np.asarray(abs(A).max(axis=1).todense()).ravel()
        row_scale = np.where(row_norm > 0, 1.0 / np.where(row_norm > 0, row_norm, 1.0), 1.0)
    else:
        row_scale = np.ones(A.shape[0])
    std = _Standard(A, l, u, row_scale)
    result = _ipm(P, q, std, settings)
    x, y_eq, z, status, it, history = result
    y = std.duals_to_rows(y_eq, z)
    sol = _finish(qp, P, q, A, l, u, x, y, status, it, history, settings)
    if settings.polish and sol.status == OPTIMAL:
        sol = _polish(qp, P, q, A, l, u, sol, settings)
    return sol


def _finish(qp, P, q, A, l, u, x, y, status, it, history, settings) -> Solution:
    primal, dual, _ = kkt_residuals(_Arrays(P, q, A, l, u), _XY(x, y))
    return Solution(
        x=x, y=y, status=status, iterations=it,
        primal_residual=primal, dual_residual=dual,
        objective=objective_value(P, q, x), history=history,
    )


@dataclass
class _Arrays:
    P: object
    q: np.ndarray
    A: object
    l: np.ndarray
    u: np.ndarray


@dataclass
class _XY:
    x: np.ndarray
    y: np.ndarray


def _factor(M):
    return spla.splu(M.tocsc(), permc_spec="COLAMD", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


def _ipm(P, q, std: _Standard, settings: SolverSettings):
    n = q.size
    E, b, G, h = std.E, std.b, std.G, std.h
    p, m = E.shape[0], G.shape[0]
    reg = settings.regularization
    ET, GT = E.T.tocsc(), G.T.tocsc()
    history = []

    def kkt_matrix(d):
        H = P + GT @ sp.diags(d) @ G + reg * sp.eye(n)
        return sp.bmat([[H, ET], [E, -reg * sp.eye(p)]], format="csc") if p else H.tocsc()

    def solve_kkt(lu, K, r1, r2):
        rhs = np.concatenate([r1, r2])
        sol = lu.solve(rhs)
        for _ in range(settings.refine_steps):
            res = rhs - K @ sol
            if _inf_norm(res) <= 1e-14 * max(1.0, _inf_norm(rhs)):
                break
            sol = sol + lu.solve(res)
        return sol[:n], sol[n:]

    # initial point: regularized least-squares fit with unit slack weights
    K0 = kkt_matrix(np.ones(m)) + sp.block_diag([sp.eye(n), sp.csc_matrix((p, p))], format="csc")
    lu0 = _factor(K0)
    x, y = solve_kkt(lu0, K0, -q + GT @ h, b)
    s = h - G @ x
    z = np.ones(m)
    if m:
        shift = -s.min()
        if shift >= 0:
            s = s + 1.0 + shift
        s = np.maximum(s, 1.0)

    status = MAX_ITER
    z0_norm = max(1.0, _inf_norm(z))
    x0_norm = max(1.0, _inf_norm(q), _inf_norm(h), _inf_norm(b))
    it = 0
    for it in range(1, settings.max_iter + 1):
        Px = P @ x
        r_d = Px + q + ET @ y + GT @ z
        r_e = E @ x - b
        r_i = G @ x + s - h
        mu = float(s @ z) / m if m else 0.0
        pres = max(_inf_norm(r_e), _inf_norm(r_i))
        dres = _inf_norm(r_d)
        pobj = 0.5 * x @ Px + q @ x
        history.append((it, pobj, pres, dres, mu))
        if settings.verbose:
            log.info("iter %4d  obj %+.10e  pres %.2e  dres %.2e  mu %.2e", it, pobj, pres, dres, mu)

        eps_p = settings.eps_abs + settings.eps_rel * max(
            _inf_norm(E @ x) if p else 0.0, _inf_norm(G @ x) if m else 0.0, _inf_norm(h), _inf_norm(b))
        eps_d = settings.eps_abs + settings.eps_rel * max(_inf_norm(Px), _inf_norm(q), _inf_norm(GT @ z))
        if pres <= eps_p * 0.1 and dres <= eps_d * 0.1 and mu <= settings.eps_abs * 0.1:
            status = OPTIMAL
            break

        if m and _certify_infeasible(G, E, h, b, z, y, z0_norm):
            status = INFEASIBLE
            break
        if _certify_unbounded(P, q, E, G, x, x0_norm):
            status = UNBOUNDED
            break

        d = z / s if m else np.zeros(0)
        K = kkt_matrix(d)
        try:
            lu = _factor(K)
        except RuntimeError:
            K = K + 1e-8 * sp.eye(K.shape[0])
            lu = _factor(K)

        def direction(r_c):
            # r_c = s*z - target, componentwise
            rhs1 = -r_d - GT @ ((z * r_i - r_c) / s) if m else -r_d
            dx, dy = solve_kkt(lu, K, rhs1, -r_e)
            if not m:
                return dx, dy, np.zeros(0), np.zeros(0)
            dz = (z * (G @ dx + r_i) - r_c) / s
            ds = -(r_c + s * dz) / z
            return dx, dy, dz, ds

        if m:
            # predictor
            dx_a, dy_a, dz_a, ds_a = direction(s * z)
            a_p = _max_step(s, ds_a)
            a_d = _max_step(z, dz_a)
            mu_aff = float((s + a_p * ds_a) @ (z + a_d * dz_a)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            sigma = min(max(sigma, 0.0), 1.0)
            # corrector
            r_c = s * z + ds_a * dz_a - sigma * mu
            dx, dy, dz, ds = direction(r_c)
            frac = settings.step_fraction
            a_p = min(1.0, frac * _max_step(s, ds, 1.0 / frac))
            a_d = min(1.0, frac * _max_step(z, dz, 1.0 / frac))
        else:
            dx, dy, dz, ds = direction(np.zeros(0))
            a_p = a_d = 1.0
        x = x + a_p * dx
        s = s + a_p * ds
        y = y + a_d * dy
        z = z + a_d * dz
    return x, y, z, status, it, history


def _max_step(v, dv, cap=1.0):
    neg = dv < 0
    if not np.any(neg):
        return cap
    return float(min(cap, np.min(-v[neg] / dv[neg])))


def _certify_infeasible(G, E, h, b, z, y, z0_norm, tol=1e-7) -> bool:
    """Farkas check on the normalized duals once they blow up."""
    scale = max(_inf_norm(z), _inf_norm(y))
    if scale < 1e8 * z0_norm:
        return False
    zn, yn = z / scale, y / scale
    lhs = G.T @ zn + (E.T @ yn if E.shape[0] else 0.0)
    return _inf_norm(lhs) <= tol and float(h @ zn + (b @ yn if E.shape[0] else 0.0)) < -tol


def _certify_unbounded(P, q, E, G, x, x0_norm, tol=1e-7) -> bool:
    scale = _inf_norm(x)
    if scale < 1e8 * x0_norm:
        return False
    d = x / scale
    ok = _inf_norm(P @ d) <= tol and float(q @ d) < -tol
    if E.shape[0]:
        ok = ok and _inf_norm(E @ d) <= tol
    if G.shape[0]:
        ok = ok and float(np.max(G @ d)) <= tol
    return ok


def _polish(qp, P, q, A, l, u, sol: Solution, settings: SolverSettings) -> Solution:
    """Re-solve the KKT system of the guessed active set and keep it if better."""
    x, y = sol.x, sol.y
    Ax = A @ x
    gap_lo = Ax - l
    gap_up = u - Ax
    at_lo = np.isfinite(l) & ((y < 0) & (-y > gap_lo) | (gap_lo <= 1e-12 * np.maximum(1, np.abs(l))))
    at_up = np.isfinite(u) & ((y > 0) & (y > gap_up) | (gap_up <= 1e-12 * np.maximum(1, np.abs(u))))
    eq = np.isfinite(l) & (l == u)
    at_lo &= ~eq
    at_up &= ~eq | at_lo
    active = eq | at_lo | at_up
    rows = np.flatnonzero(active)
    target = np.where(at_lo[rows] & ~eq[rows], l[rows], u[rows])
    Aa = A[rows].tocsc()
    n, k = x.size, rows.size
    delta = 1e-9
    K = sp.bmat([[P + delta * sp.eye(n), Aa.T], [Aa, -delta * sp.eye(k)]], format="csc")
    Kt = sp.bmat([[P, Aa.T], [Aa, None]], format="csc") if k else P.tocsc()
    rhs = np.concatenate([-q, target])
    try:
        lu = _factor(K)
    except RuntimeError:
        return sol
    z = lu.solve(rhs)
    for _ in range(25):
        res = rhs - Kt @ z
        if _inf_norm(res) <= 1e-13 * max(1.0, _inf_norm(rhs)):
            break
        z = z + lu.solve(res)
    xp = z[:n]
    yp = np.zeros_like(y)
    yp[rows] = z[n:]
    # dual signs must match the side each row sits on
    if np.any(yp[rows][at_lo[rows] & ~eq[rows]] > 1e-9) or np.any(yp[rows][at_up[rows] & ~eq[rows] & ~at_lo[rows]] < -1e-9):
        return sol
    yp = np.where(at_lo & ~eq, np.minimum(yp, 0.0), yp)
    yp = np.where(at_up & ~eq & ~at_lo, np.maximum(yp, 0.0), yp)
    arrays = _Arrays(P, q, A, l, u)
    before = max(kkt_residuals(arrays, sol))
    after = max(kkt_residuals(arrays, _XY(xp, yp)))
    if not np.all(np.isfinite(xp)) or after >= before:
        return sol
    polished = _finish(qp, P, q, A, l, u, xp, yp, sol.status, sol.iterations, sol.history, settings)
    polished.polished = True
    return polished
