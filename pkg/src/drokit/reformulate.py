"""Finite conic dual and bi-dual programs for nature's subproblem, and the
extraction of extremal distributions from bi-dual solutions.

Programs are cvxpy problems wrapped in ConicProgram, which keeps named
handles on the variables so solutions can be read back by name. All
solves go through Clarabel with fixed settings so results are repeatable.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import cvxpy as cp
import numpy as np
from scipy.special import logsumexp

from .closedform import SequenceDescriptor, WorstCaseResult
from .core import (INF, DiscreteDistribution, GaussianSpec, InvalidInput, MomentPair, PiecewiseLoss,
                   QuadForm, SolverFailure, SupportSet, as_matrix, as_vector, contains, dual_norm_tag,
                   norm_order, psd_clip, psd_sqrt, sym)
from .divergence import (EntropyFamily, family, perspective_conjugate_array, phi_divergence,
                         recession_slope)
from .transport import TransportCost, ot_cost
from ._quadmax import golden_min, sup_loss

SOLVER_SETTINGS = {"tol_gap_abs": 1e-8, "tol_gap_rel": 1e-8, "tol_feas": 1e-8, "max_iter": 100000}
TIGHT_SETTINGS = {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10}
RESIDUAL_TOL = 1e-7
GAP_TOL = 1e-6


# ---------------------------------------------------------------------------
# program container and solver interface
# ---------------------------------------------------------------------------

@dataclass
class ConicProgram:
    """A cvxpy problem plus named handles on its variables and constraints."""

    problem: cp.Problem
    variables: dict
    constraints: dict = field(default_factory=dict)
    sense: str = "min"
    meta: dict = field(default_factory=dict)

    def export(self, path) -> None:
        """Write the canonical conic data (cones, sparse triplets) as JSON."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data, _, _ = self.problem.get_problem_data(cp.CLARABEL)
        A = data["A"].tocoo()
        dims = data["dims"]
        out = {
            "sense": self.sense,
            "objective_offset_note": "objective is c'x in canonical minimization form",
            "cones": {"zero": int(dims.zero), "nonneg": int(dims.nonneg), "soc": [int(k) for k in dims.soc],
                      "psd": [int(k) for k in dims.psd], "exp": int(dims.exp),
                      "power": [float(a) for a in dims.p3d]},
            "n_variables": int(A.shape[1]),
            "n_rows": int(A.shape[0]),
            "c": np.asarray(data["c"], dtype=float).tolist(),
            "A": {"rows": A.row.tolist(), "cols": A.col.tolist(), "vals": A.data.tolist()},
            "b": np.asarray(data["b"], dtype=float).tolist(),
            "variables": {k: list(np.shape(_value_of(v, shape_only=True))) for k, v in self.variables.items()
                          if not isinstance(v, (list, tuple))},
        }
        with open(path, "w") as fh:
            json.dump(out, fh, indent=1, sort_keys=True)


@dataclass
class SolveOutcome:
    status: str
    primal: dict
    dual: dict
    objective: float
    residuals: dict

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _value_of(v, shape_only=False):
    if isinstance(v, (list, tuple)):
        return [_value_of(u, shape_only) for u in v]
    if shape_only:
        return np.zeros(v.shape)
    val = v.value
    return None if val is None else np.asarray(val, dtype=float)


def solve_conic(program: ConicProgram, **settings) -> SolveOutcome:
    """Solve with Clarabel and classify the outcome.

    The status is optimal only when the solver's primal and dual residuals
    are at most 1e-7 and the relative duality gap is at most 1e-6.
    """
    prob = program.problem
    opts = dict(SOLVER_SETTINGS)
    opts.update(settings)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            data, chain, inv = prob.get_problem_data(cp.CLARABEL)
            sol = chain.reductions[-1].solve_via_data(data, False, False, opts)
            prob.unpack_results(sol, chain, inv)
        except cp.error.SolverError as exc:
            return SolveOutcome("numerical-failure", {}, {}, math.nan, {"message": str(exc)})
    raw = str(sol.status)
    res = {"primal": float(sol.r_prim), "dual": float(sol.r_dual), "solver_status": raw,
           "iterations": int(sol.iterations)}
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return SolveOutcome("infeasible", {}, {}, INF if program.sense == "min" else -INF, res)
    if prob.status in ("unbounded", "unbounded_inaccurate"):
        return SolveOutcome("unbounded", {}, {}, -INF if program.sense == "min" else INF, res)
    pobj, dobj = float(sol.obj_val), float(sol.obj_val_dual)
    gap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
    res["gap"] = gap
    primal = {k: _value_of(v) for k, v in program.variables.items()}
    dual = {k: (None if c.dual_value is None else np.asarray(c.dual_value, dtype=float))
            for k, c in program.constraints.items()}
    ok = (prob.status in ("optimal", "optimal_inaccurate") and res["primal"] <= RESIDUAL_TOL
          and res["dual"] <= RESIDUAL_TOL and gap <= GAP_TOL)
    status = "optimal" if ok else "numerical-failure"
    # the solver's optimal value; re-evaluating the objective can give -inf
    # when a perspective term sits at p = 0 with a nonzero numerator
    opt = prob.solution.opt_val if prob.solution is not None else prob.value
    value = float(opt) if opt is not None else math.nan
    return SolveOutcome(status, primal, dual, value, res)


def _psd(M) -> cp.Constraint:
    return 0.5 * (M + M.T) >> 0


def _block(top, off, corner):
    """[[top, off], [off', corner]] for a d x d top block and a d-vector off."""
    d = top.shape[0]
    off = cp.reshape(off, (d, 1), order="F")
    return cp.bmat([[top, off], [off.T, cp.reshape(corner, (1, 1), order="F")]])


# ---------------------------------------------------------------------------
# S-lemma certificate
# ---------------------------------------------------------------------------

def slater_point_exists(Q0, q0, r0) -> bool:
    """Is there z with z'Q0 z + 2 q0'z + r0 < 0?"""
    Q0 = sym(np.atleast_2d(np.asarray(Q0, dtype=float)))
    q0 = as_vector(q0, Q0.shape[0])
    w = np.linalg.eigvalsh(Q0)
    if w.min() < -1e-12:
        return True
    z, *_ = np.linalg.lstsq(Q0, -q0, rcond=None)
    if np.linalg.norm(Q0 @ z + q0) > 1e-9 * max(1.0, np.linalg.norm(q0)):
        return True  # linear part unbounded below on the null space
    return float(z @ Q0 @ z + 2 * q0 @ z + r0) < 0


def slemma_certificate(Q0, q0, r0, Q1, q1, r1):
    """PSD block certifying z'Q0z + 2q0'z + r0 <= 0  =>  z'Q1z + 2q1'z + r1 >= 0.

    Returns (alpha, constraints, slater_ok). The block is exact when a
    Slater point exists and conservative otherwise.
    """
    Q0 = sym(np.atleast_2d(np.asarray(Q0, dtype=float)))
    Q1 = sym(np.atleast_2d(np.asarray(Q1, dtype=float)))
    d = Q0.shape[0]
    q0, q1 = as_vector(q0, d), as_vector(q1, d)
    alpha = cp.Variable(nonneg=True, name="alpha")
    block = _block(Q1 + alpha * Q0, q1 + alpha * q0, r1 + alpha * float(r0))
    return alpha, [_psd(block)], slater_point_exists(Q0, q0, r0)


def slemma_feasible(Q0, q0, r0, Q1, q1, r1):
    """Search for the multiplier: (certified, alpha, slater_ok)."""
    alpha, cons, slater = slemma_certificate(Q0, q0, r0, Q1, q1, r1)
    prog = ConicProgram(cp.Problem(cp.Minimize(alpha), cons), {"alpha": alpha}, {"block": cons[0]})
    out = solve_conic(prog)
    if out.status != "optimal":
        return False, None, slater
    return True, float(out.primal["alpha"]), slater


# ---------------------------------------------------------------------------
# conjugate encodings shared by the transport and semi-infinite programs
# ---------------------------------------------------------------------------

def _neg_piece_conjugate(g: QuadForm, zeta, cons: list):
    """(-g)^*(zeta) for a concave quadratic or affine piece g."""
    if g.is_affine:
        cons.append(zeta == -2.0 * g.q)
        return g.q0
    if not g.is_concave:
        raise InvalidInput("piece must be affine or concave quadratic")
    F = psd_sqrt(psd_clip(-g.Q))
    w = cp.Variable(g.dim)
    cons.append(2.0 * F @ w == zeta + 2.0 * g.q)
    return g.q0 + cp.sum_squares(w)


def _constraint_conjugate(g: QuadForm, zeta, alpha, cons: list):
    """(g^*)^pi(zeta, alpha) for a convex quadratic or affine g."""
    if g.is_affine:
        cons.append(zeta == 2.0 * g.q * alpha)
        return -g.q0 * alpha
    L = psd_sqrt(psd_clip(g.Q))
    v = cp.Variable(g.dim)
    cons.append(2.0 * L @ v == zeta - 2.0 * g.q * alpha)
    return cp.quad_over_lin(v, alpha) - g.q0 * alpha


def semi_infinite_certificate(h: QuadForm, support: SupportSet):
    """Certificate that h(z) <= 0 on the support, for concave or affine h.

    Returns (certified, margin) where margin is the optimal value of the
    conjugate program, an upper bound on sup_Z h.
    """
    gs = support.as_constraints()
    d = support.dim
    cons = []
    z0 = cp.Variable(d)
    total = _neg_piece_conjugate(h, z0, cons)
    zsum = z0
    for g in gs:
        zk, ak = cp.Variable(d), cp.Variable(nonneg=True)
        total = total + _constraint_conjugate(g, zk, ak, cons)
        zsum = zsum + zk
    cons.append(zsum == 0)
    prog = ConicProgram(cp.Problem(cp.Minimize(total), cons), {"beta0": z0})
    out = solve_conic(prog)
    if out.status != "optimal":
        return False, INF
    return bool(out.objective <= 1e-7), float(out.objective)


# ---------------------------------------------------------------------------
# Chebyshev and Gelbrich ambiguity sets
# ---------------------------------------------------------------------------

MOMENT_KINDS = ("fixed", "bounded", "mean", "free", "gelbrich")


@dataclass(frozen=True)
class MomentSet:
    """Admissible (mean, second moment) pairs."""

    kind: str
    dim: int
    mean: Optional[np.ndarray] = None
    second: Optional[np.ndarray] = None
    center: Optional[GaussianSpec] = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in MOMENT_KINDS:
            raise InvalidInput(f"unknown moment set {self.kind!r}")
        if self.kind == "gelbrich" and self.radius < 0:
            raise InvalidInput("Gelbrich radius must be nonnegative")

    @classmethod
    def fixed(cls, moments) -> "MomentSet":
        if isinstance(moments, GaussianSpec):
            moments = moments.moments()
        if not isinstance(moments, MomentPair):
            raise InvalidInput("fixed moment set needs a MomentPair")
        return cls("fixed", moments.dim, moments.mean, moments.second)

    @classmethod
    def bounded(cls, moments) -> "MomentSet":
        """Fixed mean, second moment at most the given one in the PSD order."""
        if isinstance(moments, GaussianSpec):
            moments = moments.moments()
        if not isinstance(moments, MomentPair):
            raise InvalidInput("bounded moment set needs a MomentPair")
        return cls("bounded", moments.dim, moments.mean, moments.second)

    @classmethod
    def mean_only(cls, mu) -> "MomentSet":
        mu = as_vector(mu)
        return cls("mean", mu.shape[0], mean=mu)

    @classmethod
    def free(cls, dim: int) -> "MomentSet":
        return cls("free", int(dim))

    @classmethod
    def gelbrich(cls, center, r: float) -> "MomentSet":
        if isinstance(center, MomentPair):
            center = GaussianSpec(center.mean, center.cov)
        return cls("gelbrich", center.dim, center=center, radius=float(r))

    @property
    def on_boundary(self) -> bool:
        """Singular covariance makes strong duality unverifiable."""
        if self.kind in ("fixed", "bounded"):
            S = self.second - np.outer(self.mean, self.mean)
            return bool(np.linalg.eigvalsh(S).min() <= 1e-10)
        if self.kind == "gelbrich":
            return self.radius == 0.0
        return False


def _ellipsoid_of(support: SupportSet):
    """(center, shape, has_constraint) for supports usable by the moment programs."""
    d = support.dim
    if support.kind == "reals":
        return np.zeros(d), np.zeros((d, d)), False
    if support.kind == "ellipsoid":
        return support.center, support.shape, True
    if support.kind == "box" and d == 1 and np.all(np.isfinite(support.lower)) and np.all(np.isfinite(support.upper)):
        a, b = float(support.lower[0]), float(support.upper[0])
        h = 0.5 * (b - a)
        if h <= 0:
            raise InvalidInput("degenerate interval support")
        return np.array([0.5 * (a + b)]), np.array([[1.0 / h**2]]), True
    raise InvalidInput("moment-based reformulations need an ellipsoidal support (or R^d)")


def _loss_pieces(loss: PiecewiseLoss):
    if loss.is_coupled:
        raise InvalidInput("fix the decision before building a reformulation")
    return loss.pieces


def build_chebyshev_dual(loss: PiecewiseLoss, support: SupportSet, F: MomentSet) -> ConicProgram:
    """min lambda0 + support function of F, one PSD block per loss piece."""
    pieces = _loss_pieces(loss)
    d = loss.dim
    if F.dim != d:
        raise InvalidInput("moment set and loss dimensions differ")
    z0, Q0, has_ell = _ellipsoid_of(support)
    lam0 = cp.Variable(name="lambda0")
    lam = cp.Variable(d, name="lambda")
    Lam = cp.Variable((d, d), symmetric=True, name="Lambda")
    alphas = [cp.Variable(nonneg=True, name=f"alpha_{j}") for j in range(len(pieces))]
    cons, named = [], {}
    c0 = float(z0 @ Q0 @ z0) - 1.0
    for j, (g, a) in enumerate(zip(pieces, alphas)):
        top = Lam - g.Q
        off = lam / 2 - g.q
        corner = lam0 - g.q0
        if has_ell:
            top = top + a * Q0
            off = off - a * (Q0 @ z0)
            corner = corner + a * c0
        named[f"piece_{j}"] = _psd(_block(top, off, corner))
    cons += list(named.values())
    if not has_ell:
        cons += [a == 0 for a in alphas]
    variables = {"lambda0": lam0, "lambda": lam, "Lambda": Lam, "alpha": alphas}
    if F.kind in ("fixed", "bounded"):
        obj = lam0 + lam @ F.mean + cp.trace(Lam @ F.second)
        if F.kind == "bounded":
            cons.append(Lam >> 0)
    elif F.kind == "mean":
        cons.append(Lam == 0)
        obj = lam0 + lam @ F.mean
    elif F.kind == "free":
        cons += [lam == 0, Lam == 0]
        obj = lam0
    else:
        obj, extra, more = _gelbrich_support_function(lam, Lam, F)
        obj = lam0 + obj
        cons += extra
        variables.update(more)
    prob = cp.Problem(cp.Minimize(obj), cons)
    return ConicProgram(prob, variables, named, "min",
                        {"kind": "chebyshev-dual", "moment_set": F.kind, "weak_only": F.on_boundary})


def _gelbrich_support_function(lam, Lam, F: MomentSet):
    d = F.dim
    mu, S = F.center.mean, F.center.cov
    R = psd_sqrt(S)
    gam = cp.Variable(nonneg=True, name="gamma")
    # A0 = gamma S + B keeps trace(A0) - gamma Tr(S) from cancelling when gamma ~ 1/r is large
    B = cp.Variable((d, d), symmetric=True, name="B")
    A0 = gam * S + B
    a0 = cp.Variable(nonneg=True, name="alpha0")
    I = np.eye(d)
    b1 = cp.bmat([[gam * I - Lam, gam * R], [gam * R, A0]])
    b2 = _block(gam * I - Lam, gam * mu + lam / 2, a0)
    obj = gam * (F.radius**2 - float(mu @ mu)) + cp.trace(B) + a0
    return obj, [_psd(b1), _psd(b2), A0 >> 0], {"gamma": gam, "B": B, "alpha0": a0}


def build_gelbrich_dual(loss: PiecewiseLoss, support: SupportSet, center, r: float) -> ConicProgram:
    return build_chebyshev_dual(loss, support, MomentSet.gelbrich(center, r))


def build_chebyshev_bidual(loss: PiecewiseLoss, support: SupportSet, F: MomentSet) -> ConicProgram:
    """max sum_j Tr(Q_j Theta_j) + 2 q_j'theta_j + q_j^0 p_j over moment splits."""
    pieces = _loss_pieces(loss)
    d = loss.dim
    if F.dim != d:
        raise InvalidInput("moment set and loss dimensions differ")
    z0, Q0, has_ell = _ellipsoid_of(support)
    J = len(pieces)
    mu = cp.Variable(d, name="mu")
    M = cp.Variable((d, d), symmetric=True, name="M")
    p = cp.Variable(J, nonneg=True, name="p")
    th = [cp.Variable(d, name=f"theta_{j}") for j in range(J)]
    Th = [cp.Variable((d, d), symmetric=True, name=f"Theta_{j}") for j in range(J)]
    cons, named = [], {}
    obj = 0
    c0 = float(z0 @ Q0 @ z0)
    for j, g in enumerate(pieces):
        named[f"piece_{j}"] = _psd(_block(Th[j], th[j], p[j]))
        if has_ell:
            cons.append(cp.trace(Q0 @ Th[j]) - 2 * (Q0 @ z0) @ th[j] + c0 * p[j] <= p[j])
        obj = obj + cp.trace(g.Q @ Th[j]) + 2 * g.q @ th[j] + g.q0 * p[j]
    cons += list(named.values())
    cons += [cp.sum(p) == 1, mu == sum(th), M == sum(Th)]
    variables = {"mu": mu, "M": M, "p": p, "theta": th, "Theta": Th}
    if F.kind == "fixed":
        cons += [mu == F.mean, M == F.second]
    elif F.kind == "bounded":
        cons += [mu == F.mean, _psd(F.second - M)]
    elif F.kind == "mean":
        cons.append(mu == F.mean)
    elif F.kind == "gelbrich":
        mh, S = F.center.mean, F.center.cov
        U = cp.Variable((d, d), symmetric=True, name="U")
        C = cp.Variable((d, d), name="C")
        cons += [_psd(cp.bmat([[M - U, C], [C.T, S]])), _psd(_block(U, mu, 1.0)),
                 float(mh @ mh) - 2 * mu @ mh + cp.trace(M + S - 2 * C) <= F.radius**2]
        variables.update(U=U, C=C)
    prob = cp.Problem(cp.Maximize(obj), cons)
    return ConicProgram(prob, variables, named, "max",
                        {"kind": "chebyshev-bidual", "moment_set": F.kind, "weak_only": F.on_boundary})


def ellipsoid_moment_atoms(mean, second, center, shape, tol: float = 1e-9):
    """At most 2d atoms in the ellipsoid with the given first two moments.

    In whitened coordinates u = R(z - center), R'R = shape, the component
    lives in the unit ball. Split the covariance along its eigenvectors:
    direction k gets mixture weight c_k / Tr C and a mean-zero two-point law
    of variance Tr C on the chord through the mean. The weights then
    reproduce the covariance exactly.
    """
    m = as_vector(mean)
    d = m.shape[0]
    S = sym(as_matrix(second, d))
    Q0 = sym(as_matrix(shape, d))
    z0 = as_vector(center, d)
    has_ell = bool(np.any(Q0))
    C = psd_clip(S - np.outer(m, m))
    if not has_ell:
        w, V = np.linalg.eigh(C)
        atoms, probs = [], []
        for k in range(d):
            if w[k] <= tol * max(1.0, w.max()):
                continue
            step = math.sqrt(w[k] * d) * V[:, k]
            atoms += [m + step, m - step]
            probs += [0.5 / d, 0.5 / d]
        if not atoms:
            return np.array([m]), np.array([1.0])
        # directions dropped as numerically zero carry no variance: rescale
        probs = np.asarray(probs)
        return np.array(atoms), probs / probs.sum()
    if np.linalg.eigvalsh(Q0).min() <= 0:
        raise InvalidInput("degenerate ellipsoid shape")
    R = psd_sqrt(Q0)
    Rinv = np.linalg.inv(R)
    mu_u = R @ (m - z0)
    Cu = psd_clip(R @ C @ R)
    s2 = float(np.trace(Cu))
    slack = 1.0 - float(mu_u @ mu_u)
    if s2 <= tol:
        return np.array([m]), np.array([1.0])
    if s2 > slack + 1e-7:
        raise SolverFailure("moments are incompatible with the ellipsoid")
    s2 = min(s2, max(slack, 0.0))
    if s2 <= tol:
        # mean on the boundary: the (numerically zero) spread has nowhere to go
        return np.array([m]), np.array([1.0])
    s = math.sqrt(s2)
    w, V = np.linalg.eigh(Cu)
    atoms, probs = [], []
    for k in range(d):
        if w[k] <= 0:
            continue
        v = V[:, k]
        b = float(mu_u @ v)
        disc = math.sqrt(max(b * b + slack, 0.0))
        tp, tm = -b + disc, -b - disc  # chord end points, tm <= 0 <= tp
        if tp <= 0 or tm >= 0:
            ta, tb = 0.0, 0.0
        else:
            ta = s * math.sqrt(tp / -tm)
            tb = -s * math.sqrt(-tm / tp)
            ta, tb = min(ta, tp), max(tb, tm)
        pik = w[k] / s2
        if ta - tb <= 0:
            atoms.append(mu_u)
            probs.append(pik)
            continue
        atoms += [mu_u + ta * v, mu_u + tb * v]
        probs += [pik * (-tb) / (ta - tb), pik * ta / (ta - tb)]
    U = np.array(atoms)
    Z = z0 + U @ Rinv.T
    probs = np.asarray(probs)
    return Z, probs / probs.sum()


def _chebyshev_components(out: SolveOutcome, tol=1e-7):
    p = np.clip(out.primal["p"], 0.0, None)
    th = out.primal["theta"]
    Th = out.primal["Theta"]
    plus = [j for j in range(p.size) if p[j] > tol]
    inf_idx = [j for j in range(p.size) if p[j] <= tol and np.abs(Th[j]).max() > 1e-5]
    return p, th, Th, plus, inf_idx


def extract_chebyshev_extremal(outcome: SolveOutcome, support: SupportSet, loss: PiecewiseLoss = None,
                               tol: float = 1e-6) -> WorstCaseResult:
    """Mixture of per-piece discrete components from a solved bi-dual."""
    if outcome.status != "optimal":
        raise SolverFailure(f"bi-dual not solved to optimality ({outcome.status})")
    z0, Q0, _ = _ellipsoid_of(support)
    p, th, Th, plus, inf_idx = _chebyshev_components(outcome)
    flags = {}
    if inf_idx:
        def build(m, p=p, th=th, Th=Th, plus=plus, inf_idx=inf_idx):
            if m < len(inf_idx):
                raise InvalidInput("sequence index too small")
            atoms, probs = [], []
            for j in plus + inf_idx:
                pm = (1 - len(inf_idx) / m) * p[j] if j in plus else 1.0 / m
                if pm <= 0:
                    continue
                mean = th[j] / pm
                second = Th[j] / pm
                second = np.outer(mean, mean) + psd_clip(second - np.outer(mean, mean))
                Z, w = ellipsoid_moment_atoms(mean, second, z0, Q0)
                atoms.append(Z)
                probs.append(pm * w)
            return DiscreteDistribution.normalized(np.vstack(atoms), np.concatenate(probs))

        seq = SequenceDescriptor("chebyshev-escape", {"escaping_pieces": inf_idx}, build)
        return WorstCaseResult(outcome.objective, seq, None, "chebyshev-bidual", attained=False,
                               flags={"supremum": "possibly-unattained"})
    atoms, probs = [], []
    for j in plus:
        Z, w = ellipsoid_moment_atoms(th[j] / p[j], Th[j] / p[j], z0, Q0)
        for z in Z:
            if not contains(support, z, tol=1e-6):
                raise SolverFailure("extracted atom lies outside the support")
        atoms.append(Z)
        probs.append(p[j] * w)
    P = DiscreteDistribution.normalized(np.vstack(atoms), np.concatenate(probs))
    flags["moment_error"] = float(max(np.abs(P.mean() - outcome.primal["mu"]).max(),
                                      np.abs(P.second_moment() - outcome.primal["M"]).max()))
    if flags["moment_error"] > tol * max(1.0, np.abs(outcome.primal["M"]).max()):
        raise SolverFailure(f"moment matching failed (error {flags['moment_error']:.2e})")
    if loss is not None:
        flags["attained_value"] = float(np.dot(P.probs, loss.values(P.atoms)))
    return WorstCaseResult(outcome.objective, P, None, "chebyshev-bidual", True, flags)


def chebyshev_worst_case(loss: PiecewiseLoss, support: SupportSet, F: MomentSet) -> WorstCaseResult:
    """Solve dual and bi-dual, extract an extremal distribution, report both values."""
    dual = solve_conic(build_chebyshev_dual(loss, support, F))
    bid = solve_conic(build_chebyshev_bidual(loss, support, F))
    _raise_for(bid, "Chebyshev bi-dual")
    flags = {"duality": "weak-only"} if F.on_boundary else {}
    try:
        try:
            res = extract_chebyshev_extremal(bid, support, loss)
        except SolverFailure:
            # component moments must be nearly exact; retry once at tight tolerances
            tight = solve_conic(build_chebyshev_bidual(loss, support, F), **TIGHT_SETTINGS)
            if tight.status != "optimal":
                raise
            bid = tight
            res = extract_chebyshev_extremal(bid, support, loss)
        extremal, attained = res.extremal, res.attained
        flags.update(res.flags)
    except SolverFailure as exc:
        extremal, attained = None, False
        flags["extremal"] = str(exc)
    dual_info = None
    if dual.status == "optimal":
        dual_info = {"objective": dual.objective, "lambda0": dual.primal["lambda0"],
                     "lambda": dual.primal["lambda"], "Lambda": dual.primal["Lambda"]}
    return WorstCaseResult(bid.objective, extremal, dual_info, "chebyshev-sdp", attained, flags)


def _raise_for(out: SolveOutcome, what: str):
    from .core import Infeasible, Unbounded

    if out.status == "infeasible":
        raise Infeasible(f"{what} is infeasible")
    if out.status == "unbounded":
        raise Unbounded(f"{what} is unbounded")
    if out.status != "optimal":
        raise SolverFailure(f"{what} ended with {out.status} ({out.residuals})")


# ---------------------------------------------------------------------------
# phi-divergence ambiguity sets (discrete reference)
# ---------------------------------------------------------------------------

@dataclass
class PhiDual:
    """min over (lambda0, lambda >= 0) of
    lambda0 + lambda r + sum_i phat_i (phi*)^pi(l_i - lambda0, lambda),
    with lambda0 + lambda phi_inf(1) >= sup l unless restricted."""

    fam: EntropyFamily
    values: np.ndarray
    probs: np.ndarray
    r: float
    sup_value: float
    restricted: bool

    @property
    def slope(self) -> float:
        return recession_slope(self.fam)

    def feasible(self, lam0: float, lam: float) -> bool:
        if self.restricted or math.isinf(self.slope):
            return True
        return lam0 + lam * self.slope >= self.sup_value - 1e-12

    def objective(self, lam0: float, lam: float) -> float:
        if lam < 0 or not self.feasible(lam0, lam):
            return INF
        v = perspective_conjugate_array(self.fam, self.values - lam0, lam)
        if np.any(np.isposinf(v)):
            return INF
        return float(lam0 + lam * self.r + self.probs @ v)

    def _lower_lam0(self, lam: float) -> float:
        lo = -INF
        if not math.isinf(self.slope):
            lo = float(self.values.max()) - lam * self.slope
            if not self.restricted:
                lo = max(lo, self.sup_value - lam * self.slope)
        return lo

    def inner(self, lam: float):
        """(value, lambda0) of the minimization over lambda0 at fixed lambda."""
        lv = self.values
        if lam == 0:
            lam0 = float(lv.max())
            if not self.restricted and not math.isinf(self.slope):
                lam0 = max(lam0, self.sup_value)
            return lam0, lam0
        if self.fam.tag == "kl":
            lam0 = lam * float(logsumexp(lv / lam, b=self.probs))
            return lam0 + lam * self.r, lam0
        lo = self._lower_lam0(lam)
        a = max(lo, float(lv.min()))
        b = max(a, float(lv.max()))
        if b - a <= 0:
            return self.objective(a, lam), a
        x, fx = golden_min(lambda t: self.objective(t, lam), a, b, tol=1e-13)
        return fx, x

    def solve(self):
        """(value, lambda0, lambda) by golden-section over log(lambda)."""
        lv = self.values
        if not self.restricted and math.isinf(self.sup_value) and not math.isinf(self.slope):
            return INF, INF, 0.0
        if self.r == 0:
            return float(self.probs @ lv), None, INF
        spread = max(float(lv.max() - lv.min()), 1e-8)
        scale = spread / math.sqrt(self.r) if self.fam.tag != "total-variation" else spread
        us = np.arange(-40.0, 41.0) + math.log(scale)
        vals = np.array([self.inner(math.exp(u))[0] for u in us])
        k = int(np.argmin(vals))
        a, b = us[max(k - 1, 0)], us[min(k + 1, us.size - 1)]
        u, _ = golden_min(lambda u: self.inner(math.exp(u))[0], a, b, tol=1e-13)
        lam = math.exp(u)
        best, lam0 = self.inner(lam)
        zero, lam00 = self.inner(0.0)
        if zero <= best:
            return zero, lam00, 0.0
        return best, lam0, lam


def _phi_setup(loss, support, Phat, fam, restricted):
    fam = family(fam) if not isinstance(fam, EntropyFamily) else fam
    if not isinstance(Phat, DiscreteDistribution):
        raise InvalidInput("phi-divergence reformulations need a discrete reference")
    lv = loss.values(Phat.atoms)
    if restricted or math.isinf(recession_slope(fam)):
        return fam, lv, -INF, None
    sv, arg, _ = sup_loss(loss, support)
    return fam, lv, sv, arg


def build_phi_dual(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, fam, r: float,
                   restricted: bool = False) -> PhiDual:
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    fam, lv, sv, _ = _phi_setup(loss, support, Phat, fam, restricted)
    return PhiDual(fam, lv, np.asarray(Phat.probs), float(r), sv, bool(restricted))


def _phi_budget(fam: EntropyFamily, p, phat: np.ndarray):
    """sum_i phat_i phi(p_i / phat_i) as a convex cvxpy expression."""
    t = fam.tag
    if t == "kl":
        return cp.sum(cp.rel_entr(p, phat) - p + phat)
    if t == "likelihood":
        return cp.sum(cp.rel_entr(phat, p) + p - phat)
    if t == "total-variation":
        return 0.5 * cp.sum(cp.abs(p - phat))
    if t == "pearson-chi2":
        return cp.sum(cp.multiply(1.0 / phat, cp.square(p - phat)))
    if t == "neyman-chi2":
        return cp.sum(p - 2 * phat + cp.multiply(phat**2, cp.inv_pos(p)))
    g = fam.exponent
    powered = cp.multiply(phat ** (1 - g), cp.power(p, g))
    return cp.sum(powered - g * p + (g - 1) * phat) / (g * (g - 1))


def build_phi_bidual(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, fam, r: float,
                     restricted: bool = False) -> ConicProgram:
    fam, lv, sv, arg = _phi_setup(loss, support, Phat, fam, restricted)
    phat = np.asarray(Phat.probs)
    N = phat.size
    p = cp.Variable(N, nonneg=True, name="p")
    slope = recession_slope(fam)
    use_p0 = not restricted and not math.isinf(slope)
    budget = _phi_budget(fam, p, phat)
    obj = lv @ p
    variables = {"p": p}
    mass = cp.sum(p)
    if use_p0:
        if math.isinf(sv):
            raise InvalidInput("loss is unbounded on the support; worst case is +inf")
        p0 = cp.Variable(nonneg=True, name="p0")
        budget = budget + slope * p0
        obj = obj + sv * p0
        mass = mass + p0
        variables["p0"] = p0
    named = {"budget": budget <= r, "mass": mass == 1}
    prob = cp.Problem(cp.Maximize(obj), list(named.values()))
    meta = {"kind": "phi-bidual", "family": fam, "sup_value": sv,
            "argmax": None if arg is None else np.asarray(arg), "restricted": bool(restricted)}
    return ConicProgram(prob, variables, named, "max", meta)


def extract_phi_extremal(outcome: SolveOutcome, program: ConicProgram, Phat: DiscreteDistribution,
                         loss: PiecewiseLoss = None, r: float = None, tol: float = 1e-6) -> WorstCaseResult:
    if outcome.status != "optimal":
        raise SolverFailure(f"bi-dual not solved to optimality ({outcome.status})")
    p = np.clip(outcome.primal["p"], 0.0, None)
    atoms = [np.asarray(Phat.atoms)]
    probs = [p]
    flags = {}
    p0 = float(max(outcome.primal.get("p0", 0.0) or 0.0, 0.0))
    if p0 > 1e-9:
        arg = program.meta.get("argmax")
        if arg is None:
            seq = SequenceDescriptor("phi-escape", {"p0": p0}, None)
            return WorstCaseResult(outcome.objective, seq, None, "phi-bidual", False,
                                   {"supremum": "possibly-unattained"})
        atoms.append(np.asarray(arg).reshape(1, -1))
        probs.append(np.array([p0]))
    P = DiscreteDistribution.normalized(np.vstack(atoms), np.concatenate(probs))
    div = phi_divergence(program.meta["family"], P, Phat)
    flags["divergence"] = div
    if r is not None and div > r + tol * max(1.0, r):
        raise SolverFailure(f"extracted distribution violates the budget ({div} > {r})")
    if loss is not None:
        flags["attained_value"] = float(np.dot(P.probs, loss.values(P.atoms)))
    return WorstCaseResult(outcome.objective, P, None, "phi-bidual", True, flags)


def phi_worst_case(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, fam, r: float,
                   restricted: bool = False) -> WorstCaseResult:
    """Golden-section dual value, conic bi-dual, and an extremal distribution."""
    dual = build_phi_dual(loss, support, Phat, fam, r, restricted)
    dval, lam0, lam = dual.solve()
    info = {"objective": dval, "lambda0": lam0, "lambda": lam}
    if math.isinf(dval):
        return WorstCaseResult(INF, None, info, "phi-dual", False, {"unbounded": True})
    if r == 0:
        return WorstCaseResult(dval, Phat, info, "phi-dual", True, {})
    prog = build_phi_bidual(loss, support, Phat, fam, r, restricted)
    out = solve_conic(prog)
    flags = {}
    try:
        _raise_for(out, "phi-divergence bi-dual")
        res = extract_phi_extremal(out, prog, Phat, loss, r)
        flags.update(res.flags)
        flags["bidual_value"] = out.objective
        return WorstCaseResult(dval, res.extremal, info, "phi-dual", res.attained, flags)
    except SolverFailure as exc:
        flags["extremal"] = str(exc)
        return WorstCaseResult(dval, None, info, "phi-dual", False, flags)


# ---------------------------------------------------------------------------
# optimal transport ambiguity sets (discrete reference, norm-power cost)
# ---------------------------------------------------------------------------

def _ot_checks(loss: PiecewiseLoss, Phat, cost: TransportCost):
    pieces = _loss_pieces(loss)
    for g in pieces:
        if not g.is_concave:
            raise InvalidInput("transport reformulations need affine or concave quadratic pieces")
    if not isinstance(Phat, DiscreteDistribution):
        raise InvalidInput("transport reformulations need a discrete reference")
    if cost.kind != "norm-power":
        raise InvalidInput("transport reformulations need a norm-power cost")
    return pieces


def build_ot_dual(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, cost: TransportCost,
                  r: float) -> ConicProgram:
    """min lambda r + sum_i phat_i s_i with one conjugate block per (atom, piece)."""
    pieces = _ot_checks(loss, Phat, cost)
    gs = support.as_constraints()
    d = loss.dim
    P = float(cost.p)
    dn = dual_norm_tag(cost.norm)
    lam = cp.Variable(nonneg=True, name="lambda")
    N = Phat.size
    s = cp.Variable(N, name="s")
    cons = []
    for i in range(N):
        zh = Phat.atoms[i]
        for g in pieces:
            zl, zc = cp.Variable(d), cp.Variable(d)
            total = _neg_piece_conjugate(g, zl, cons) + zc @ zh
            if P == 1:
                cons.append(cp.norm(zc, dn) <= lam)
            else:
                Qe = P / (P - 1)
                u, tau = cp.Variable(), cp.Variable()
                cons.append(cp.norm(zc, dn) <= u)
                if Qe == 2:
                    cons.append(cp.quad_over_lin(u, lam) <= tau)
                else:
                    cons.append(u <= cp.geo_mean(cp.hstack([tau, lam]), [1 / Qe, 1 - 1 / Qe]))
                total = total + (P - 1) * P ** (-Qe) * tau
            zsum = zl + zc
            for gk in gs:
                zg, a = cp.Variable(d), cp.Variable(nonneg=True)
                total = total + _constraint_conjugate(gk, zg, a, cons)
                zsum = zsum + zg
            cons += [total <= s[i], zsum == 0]
    prob = cp.Problem(cp.Minimize(lam * r + Phat.probs @ s), cons)
    return ConicProgram(prob, {"lambda": lam, "s": s}, {}, "min", {"kind": "ot-dual"})


def build_ot_bidual(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, cost: TransportCost,
                    r: float) -> ConicProgram:
    """max over (p_ij, z_ij) of sum_ij l_j^pi(p_ij zhat_i + z_ij, p_ij)."""
    pieces = _ot_checks(loss, Phat, cost)
    gs = support.as_constraints()
    d = loss.dim
    P = float(cost.p)
    N, J = Phat.size, len(pieces)
    ordn = norm_order(cost.norm)
    p = cp.Variable((N, J), nonneg=True, name="p")
    z = [[cp.Variable(d, name=f"z_{i}_{j}") for j in range(J)] for i in range(N)]
    cons = [cp.sum(p, axis=1) == Phat.probs]
    obj = 0
    spent = 0
    for i in range(N):
        zh = Phat.atoms[i]
        for j, g in enumerate(pieces):
            w = p[i, j] * zh + z[i][j]
            term = 2 * g.q @ w + g.q0 * p[i, j]
            if not g.is_affine:
                F = psd_sqrt(psd_clip(-g.Q))
                term = term - cp.quad_over_lin(F @ w, p[i, j])
            obj = obj + term
            for gk in gs:
                gterm = 2 * gk.q @ w + gk.q0 * p[i, j]
                if not gk.is_affine:
                    gterm = gterm + cp.quad_over_lin(psd_sqrt(psd_clip(gk.Q)) @ w, p[i, j])
                cons.append(gterm <= 0)
            nz = cp.norm(z[i][j], ordn)
            if P == 1:
                spent = spent + nz
            else:
                t, tau = cp.Variable(), cp.Variable()
                cons.append(nz <= t)
                if P == 2:
                    cons.append(cp.quad_over_lin(t, p[i, j]) <= tau)
                else:
                    cons.append(t <= cp.geo_mean(cp.hstack([tau, p[i, j]]), [1 / P, 1 - 1 / P]))
                spent = spent + tau
    named = {"budget": spent <= r}
    cons.append(named["budget"])
    prob = cp.Problem(cp.Maximize(obj), cons)
    return ConicProgram(prob, {"p": p, "z": z}, named, "max", {"kind": "ot-bidual", "p": P})


def extract_ot_extremal(outcome: SolveOutcome, Phat: DiscreteDistribution, cost: TransportCost = None,
                        r: float = None, loss: PiecewiseLoss = None, tol: float = 1e-6) -> WorstCaseResult:
    if outcome.status != "optimal":
        raise SolverFailure(f"bi-dual not solved to optimality ({outcome.status})")
    p = np.clip(outcome.primal["p"], 0.0, None)
    z = outcome.primal["z"]
    N, J = p.shape
    thr = 1e-8
    plus = [[j for j in range(J) if p[i, j] > thr] for i in range(N)]
    esc = [[j for j in range(J) if p[i, j] <= thr and np.abs(z[i][j]).max() > 1e-5] for i in range(N)]
    if any(esc):
        def build(m, p=p, z=z, plus=plus, esc=esc):
            atoms, probs = [], []
            for i in range(N):
                for j in plus[i]:
                    pm = (1 - len(esc[i]) / m) * p[i, j]
                    atoms.append(Phat.atoms[i] + z[i][j] / pm)
                    probs.append(pm)
                for j in esc[i]:
                    pm = Phat.probs[i] / m
                    atoms.append(Phat.atoms[i] + z[i][j] / pm)
                    probs.append(pm)
            return DiscreteDistribution.normalized(np.array(atoms), np.array(probs))

        seq = SequenceDescriptor("transport-escape", {"escaping": esc}, build)
        return WorstCaseResult(outcome.objective, seq, None, "ot-bidual", False,
                               {"supremum": "possibly-unattained"})
    atoms, probs = [], []
    for i in range(N):
        for j in plus[i]:
            atoms.append(Phat.atoms[i] + z[i][j] / p[i, j])
            probs.append(p[i, j])
    Pst = DiscreteDistribution.normalized(np.array(atoms), np.array(probs))
    flags = {}
    if cost is not None and r is not None:
        used, _ = ot_cost(cost, Pst, Phat)
        flags["transport_cost"] = used
        if used > r + tol * max(1.0, r):
            raise SolverFailure(f"extracted distribution violates the budget ({used} > {r})")
    if loss is not None:
        flags["attained_value"] = float(np.dot(Pst.probs, loss.values(Pst.atoms)))
    return WorstCaseResult(outcome.objective, Pst, None, "ot-bidual", True, flags)


def ot_worst_case(loss: PiecewiseLoss, support: SupportSet, Phat: DiscreteDistribution, cost: TransportCost,
                  r: float) -> WorstCaseResult:
    """Bi-dual value with extremal, cross-checked against the dual program."""
    bid = solve_conic(build_ot_bidual(loss, support, Phat, cost, r))
    _raise_for(bid, "transport bi-dual")
    dual = solve_conic(build_ot_dual(loss, support, Phat, cost, r))
    info = None
    if dual.status == "optimal":
        info = {"objective": dual.objective, "lambda": dual.primal["lambda"], "s": dual.primal["s"]}
    flags = {}
    try:
        res = extract_ot_extremal(bid, Phat, cost, r, loss)
        flags.update(res.flags)
        return WorstCaseResult(bid.objective, res.extremal, info, "ot-conic", res.attained, flags)
    except SolverFailure as exc:
        flags["extremal"] = str(exc)
        return WorstCaseResult(bid.objective, None, info, "ot-conic", False, flags)
