"""Optimal transport discrepancies between discrete distributions, and the
Gelbrich distance between mean-covariance pairs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .core import (DiscreteDistribution, InvalidInput, SolverFailure,
                   as_mean_cov, norm_order, psd_sqrt)
from .divergence import common_ground

COST_KINDS = ("norm-power", "indicator-threshold", "discrete-indicator", "custom-matrix")


@dataclass(frozen=True)
class TransportCost:
    kind: str = "norm-power"
    p: float = 1.0
    norm: object = 2
    threshold: float = 0.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise InvalidInput(f"unknown cost kind {self.kind!r}")
        norm_order(self.norm)
        if self.kind == "norm-power" and self.p < 1:
            raise InvalidInput("cost exponent must be >= 1")
        if self.kind == "custom-matrix":
            m = np.asarray(self.matrix, dtype=float)
            if m.ndim != 2 or np.any(m < 0):
                raise InvalidInput("custom cost matrix must be a nonnegative 2-D array")
            object.__setattr__(self, "matrix", m)

    def pointwise(self, z, zhat) -> float:
        d = float(np.linalg.norm(np.asarray(z, float) - np.asarray(zhat, float), ord=norm_order(self.norm)))
        if self.kind == "norm-power":
            return d ** self.p
        if self.kind == "indicator-threshold":
            return float(d > self.threshold)
        if self.kind == "discrete-indicator":
            return float(d > 0)
        raise InvalidInput("custom-matrix costs have no pointwise form")

    def matrix_for(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.kind == "custom-matrix":
            if self.matrix.shape != (X.shape[0], Y.shape[0]):
                raise InvalidInput("custom cost matrix has the wrong shape")
            return self.matrix
        D = distance_matrix(X, Y, self.norm)
        if self.kind == "norm-power":
            return D ** self.p
        if self.kind == "indicator-threshold":
            return (D > self.threshold).astype(float)
        return (D > 0).astype(float)


@dataclass(frozen=True)
class TransportPlan:
    """gamma[i, j] = mass moved between atom i of P and atom j of Phat."""

    matrix: np.ndarray

    def check(self, p, q, tol=1e-9) -> bool:
        g = self.matrix
        return bool(np.all(g >= -tol) and np.allclose(g.sum(1), p, atol=tol)
                    and np.allclose(g.sum(0), q, atol=tol))


def distance_matrix(X, Y, norm=2) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    diff = X[:, None, :] - Y[None, :, :]
    return np.linalg.norm(diff, ord=norm_order(norm), axis=2)


def _transport_lp(C: np.ndarray, p: np.ndarray, q: np.ndarray):
    n, m = C.shape
    rows = np.repeat(np.arange(n), m)
    cols = np.arange(n * m)
    A_row = coo_matrix((np.ones(n * m), (rows, cols)), shape=(n, n * m))
    rows = np.tile(np.arange(m), n)
    A_col = coo_matrix((np.ones(n * m), (rows, cols)), shape=(m, n * m))
    from scipy.sparse import vstack

    A = vstack([A_row, A_col]).tocsr()
    b = np.concatenate([p, q])
    # drop one redundant equality to keep HiGHS happy about rank
    res = linprog(C.reshape(-1), A_eq=A[:-1], b_eq=b[:-1], bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverFailure(f"transport LP failed: {res.message}")
    return float(res.fun), res.x.reshape(n, m)


def ot_cost(cost: TransportCost, P: DiscreteDistribution, Phat: DiscreteDistribution):
    """Optimal transport value and an optimal plan (rows P, columns Phat)."""
    if P.dim != Phat.dim:
        raise InvalidInput("distributions live in different dimensions")
    C = cost.matrix_for(P.atoms, Phat.atoms)
    val, plan = _transport_lp(C, P.probs, Phat.probs)
    return max(val, 0.0), TransportPlan(plan)


def wasserstein_p(P: DiscreteDistribution, Phat: DiscreteDistribution, p: float = 1.0, norm=2) -> float:
    if not 1 <= p < math.inf:
        raise InvalidInput("Wasserstein order must lie in [1, inf)")
    val, _ = ot_cost(TransportCost("norm-power", p=p, norm=norm), P, Phat)
    return val ** (1.0 / p)


def _feasible_within(D: np.ndarray, p, q, r: float) -> float:
    """Transport value under the cost 1{d > r}."""
    val, _ = _transport_lp((D > r).astype(float), p, q)
    return val


def wasserstein_inf(P: DiscreteDistribution, Phat: DiscreteDistribution, norm=2) -> float:
    """Bottleneck distance by bisection over the sorted pairwise distances."""
    D = distance_matrix(P.atoms, Phat.atoms, norm)
    levels = np.unique(np.concatenate([[0.0], D.reshape(-1)]))
    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible_within(D, P.probs, Phat.probs, levels[mid]) <= 1e-12:
            hi = mid
        else:
            lo = mid + 1
    return float(levels[lo])


def total_variation(P: DiscreteDistribution, Phat: DiscreteDistribution) -> float:
    _, p, q = common_ground(P, Phat)
    return float(0.5 * np.abs(p - q).sum())


def levy_prokhorov(P: DiscreteDistribution, Phat: DiscreteDistribution, norm=2) -> float:
    """inf{r >= 0 : OT_{c_r}(P, Phat) <= r} with c_r = 1{d > r}.

    The transport value v(r) is constant on each interval [d_k, d_{k+1})
    between consecutive pairwise distances, so the answer is max(d_k, v_k)
    for the first k with v_k < d_{k+1}. The first such k is found by
    bisection since the predicate is monotone in k.
    """
    D = distance_matrix(P.atoms, Phat.atoms, norm)
    levels = np.unique(np.concatenate([[0.0], D.reshape(-1)]))
    nxt = np.append(levels[1:], np.inf)
    cache = {}

    def v(k):
        if k not in cache:
            cache[k] = _feasible_within(D, P.probs, Phat.probs, levels[k])
        return cache[k]

    lo, hi = 0, levels.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if v(mid) < nxt[mid]:
            hi = mid
        else:
            lo = mid + 1
    return float(max(levels[lo], v(lo)))


def gelbrich_distance(a, b) -> float:
    """sqrt(|mu - mu'|^2 + Tr(S + S' - 2 (S'^1/2 S S'^1/2)^1/2))."""
    mu1, S1 = as_mean_cov(a)
    mu2, S2 = as_mean_cov(b)
    if mu1.shape != mu2.shape:
        raise InvalidInput("mean-covariance pairs have different dimensions")
    R = psd_sqrt(S2)
    cross = psd_sqrt(R @ S1 @ R)
    g2 = float(np.sum((mu1 - mu2) ** 2) + np.trace(S1) + np.trace(S2) - 2.0 * np.trace(cross))
    return math.sqrt(max(g2, 0.0))


def gelbrich_distance_sdp(a, b) -> float:
    """Same distance through the semidefinite program over the cross-covariance C."""
    import cvxpy as cp

    mu1, S1 = as_mean_cov(a)
    mu2, S2 = as_mean_cov(b)
    d = mu1.shape[0]
    C = cp.Variable((d, d))
    block = cp.bmat([[S1, C], [C.T, S2]])
    prob = cp.Problem(cp.Minimize(float(np.sum((mu1 - mu2) ** 2)) + np.trace(S1) + np.trace(S2)
                                  - 2 * cp.trace(C)), [0.5 * (block + block.T) >> 0])
    # tight tolerances: the distance is a square root, so value errors are amplified near 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-14, tol_gap_rel=1e-14, tol_feas=1e-14,
                   tol_ktratio=1e-10)
    if prob.status not in ("optimal", "optimal_inaccurate") or C.value is None:
        raise SolverFailure(f"Gelbrich SDP ended with status {prob.status}")
    Cv = np.asarray(C.value)
    blk = np.block([[S1, Cv], [Cv.T, S2]])
    if np.linalg.eigvalsh(0.5 * (blk + blk.T)).min() < -1e-7:
        raise SolverFailure("Gelbrich SDP returned an infeasible cross-covariance")
    return math.sqrt(max(float(prob.value), 0.0))
