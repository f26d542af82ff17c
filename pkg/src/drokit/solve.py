"""Worst-case evaluation at a fixed decision, and DRO decision algorithms.

Every decision algorithm works on a semi-infinite program

    min c'y + c0   s.t.  y in Y,  g_j(y, z) <= 0  for all z in Z, j = 1..m,

with g_j(y, z) = sum_k ytil_k (z'A_jk z + b_jk'z + c_jk) and ytil = (1, y).
The vector y stacks the decision x, an optional CVaR threshold tau and
the dual variables of the chosen ambiguity family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog
from scipy.special import gammaln, logsumexp

from .closedform import (WorstCaseResult, edmundson_madansky, gelbrich_risk, jensen_bound,
                         kl_gaussian_linear, lp_worst_case, scarf, standard_risk_coefficient,
                         tv_worst_case, w1_lipschitz, w1_spectral_risk, winf_worst_case, wp_cvar)
from .core import (INF, AmbiguitySpec, DiscreteDistribution, GaussianSpec, Infeasible, InvalidInput,
                   MomentPair, PiecewiseLoss, QuadForm, RiskSpec, SolverFailure, SupportSet,
                   TimeoutWithIncumbent, Unbounded, as_vector, contains, cvar, norm_order)
from .divergence import family
from .reformulate import (MomentSet, chebyshev_worst_case, ellipsoid_moment_atoms, ot_worst_case,
                          phi_worst_case)
from .transport import TransportCost
from ._quadmax import bracket_convex, golden_min, max_piece, sup_loss

DEFAULT_BOUND = 1e4
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


# ---------------------------------------------------------------------------
# problem and report types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecisionSet:
    """Box lower <= x <= upper intersected with {A x <= b}."""

    lower: np.ndarray
    upper: np.ndarray
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        lo, hi = as_vector(self.lower), as_vector(self.upper)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InvalidInput("decision box bounds are inconsistent")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.A is not None:
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            b = as_vector(self.b)
            if A.shape != (b.shape[0], lo.shape[0]):
                raise InvalidInput("decision constraint matrix has the wrong shape")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)

    @classmethod
    def box(cls, lower, upper) -> "DecisionSet":
        return cls(lower, upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def has_rows(self) -> bool:
        return self.A is not None and self.A.shape[0] > 0

    def center(self) -> np.ndarray:
        lo = np.where(np.isfinite(self.lower), self.lower, np.minimum(self.upper, 0.0))
        hi = np.where(np.isfinite(self.upper), self.upper, np.maximum(self.lower, 0.0))
        return 0.5 * (lo + hi)

    def to_dict(self) -> dict:
        out = {"lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.has_rows:
            out.update(A=self.A.tolist(), b=self.b.tolist())
        return out


@dataclass(frozen=True)
class DroProblem:
    loss: PiecewiseLoss
    ambiguity: AmbiguitySpec
    decisions: Optional[DecisionSet] = None
    risk: RiskSpec = field(default_factory=RiskSpec)

    def __post_init__(self):
        if self.loss.dim != self.ambiguity.dim:
            raise InvalidInput("loss and ambiguity set live in different dimensions")
        if self.loss.is_coupled:
            if self.decisions is None or self.decisions.dim != self.loss.decision_dim:
                raise InvalidInput("coupled loss needs a decision set of matching dimension")
        elif self.decisions is not None and self.decisions.dim:
            raise InvalidInput("decision-free loss cannot take a decision set")
        if self.risk.kind not in ("expectation", "cvar"):
            raise InvalidInput("decision algorithms support expectation and CVaR objectives")


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    iterations: int
    trace: list
    seed: Optional[int]
    status: str
    method: str
    master_value: float = math.nan
    y: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from .closedform import _jsonable

        return _jsonable({"x": self.x, "objective": self.objective, "iterations": self.iterations,
                          "trace": self.trace, "seed": self.seed, "status": self.status,
                          "method": self.method, "master_value": self.master_value, "info": self.info})


# ---------------------------------------------------------------------------
# nature's subproblem
# ---------------------------------------------------------------------------

def _moments_of(ref) -> MomentPair:
    if isinstance(ref, GaussianSpec):
        return ref.moments()
    if isinstance(ref, MomentPair):
        return ref
    raise InvalidInput("moment information expected")


def _two_affine_1d(loss: PiecewiseLoss):
    """Write max(k1 z + c1, k2 z + c2) as base(z) + s * max(z - a, 0) with s > 0."""
    if loss.dim != 1 or len(loss.pieces) != 2 or not loss.is_affine:
        return None
    (k1, c1), (k2, c2) = [(2.0 * p.q[0], p.q0) for p in loss.pieces]
    if k1 == k2:
        return None
    if k1 < k2:
        k1, c1, k2, c2 = k2, c2, k1, c1
    return k2, c2, k1 - k2, (c2 - c1) / (k1 - k2)


def _chebyshev_expectation(loss: PiecewiseLoss, support: SupportSet, mom: MomentPair) -> WorstCaseResult:
    hinge = _two_affine_1d(loss)
    if hinge is not None:
        k2, c2, s, a = hinge
        mu, var = float(mom.mean[0]), float(mom.cov[0, 0])
        if var > 0:
            sc = scarf(a, mu, math.sqrt(var))
            inside = support.kind == "reals" or all(contains(support, z, 1e-12) for z in sc.extremal.atoms)
            if inside:
                val = k2 * mu + c2 + s * sc.value
                d = sc.dual
                dual = {"lambda0": s * d["lambda0"] + k2 * mu + c2, "lambda1": s * d["lambda1"] + k2,
                        "lambda2": s * d["lambda2"], "centered_at": mu,
                        "objective": s * d["objective"] + k2 * mu + c2}
                return WorstCaseResult(val, sc.extremal, dual, "scarf")
    if len(loss.pieces) == 1:
        g = loss.pieces[0]
        val = float(np.sum(g.Q * mom.second) + 2 * g.q @ mom.mean + g.q0)
        try:
            center, shape = (np.zeros(loss.dim), np.zeros((loss.dim, loss.dim))) if support.kind == "reals" \
                else (support.center, support.shape)
            Z, w = ellipsoid_moment_atoms(mom.mean, mom.second, center, shape)
            ext = DiscreteDistribution.normalized(Z, w)
        except (InvalidInput, SolverFailure, TypeError, AttributeError):
            ext = None
        return WorstCaseResult(val, ext, None, "moments", attained=ext is not None)
    return chebyshev_worst_case(loss, support, MomentSet.fixed(mom))


def _expectation(amb: AmbiguitySpec, loss: PiecewiseLoss) -> WorstCaseResult:
    fam, S, ref, r = amb.family, amb.support, amb.reference, amb.radius
    if fam == "support-only":
        v, z, exact = sup_loss(loss, S)
        if math.isinf(v):
            return WorstCaseResult(INF, None, None, "robust", False, {"unbounded": True})
        return WorstCaseResult(v, DiscreteDistribution.dirac(z), None, "robust", True,
                               {} if exact else {"heuristic": True})
    if fam == "markov":
        mu = _moments_of(ref).mean if not isinstance(ref, GaussianSpec) else ref.mean
        if loss.is_concave:
            return jensen_bound(loss, mu, S)
        if S.kind == "simplex" and loss.is_convex:
            return edmundson_madansky(loss, mu)
        return chebyshev_worst_case(loss, S, MomentSet.mean_only(mu))
    if fam == "chebyshev":
        return _chebyshev_expectation(loss, S, _moments_of(ref))
    if fam == "chebyshev-uncertain-moments":
        return chebyshev_worst_case(loss, S, MomentSet.bounded(_moments_of(ref)))
    if r == 0 and isinstance(ref, DiscreteDistribution) and fam not in ("markov", "chebyshev"):
        # every distance-based ball of radius zero is the singleton {ref}
        return WorstCaseResult(float(ref.probs @ loss.values(ref.atoms)), ref, None, "nominal", True)
    if fam == "gelbrich":
        if S.kind == "reals" and len(loss.pieces) == 1 and loss.is_affine:
            g = loss.pieces[0]
            val = gelbrich_risk(2.0 * g.q, ref, r, 0.0) + g.q0
            return WorstCaseResult(val, None, None, "gelbrich-closed-form", True)
        return chebyshev_worst_case(loss, S, MomentSet.gelbrich(ref, r))
    if fam == "phi-divergence":
        fm = family(amb.phi, amb.cr_beta)
        if isinstance(ref, GaussianSpec):
            if fm.tag == "kl" and len(loss.pieces) == 1 and loss.is_affine and S.kind == "reals":
                g = loss.pieces[0]
                res = kl_gaussian_linear(2.0 * g.q, ref, r)
                return WorstCaseResult(res.value + g.q0, res.extremal, res.dual, res.method, res.attained)
            raise InvalidInput("Gaussian reference supports only the KL ball with a linear loss")
        if fm.tag == "total-variation" and not amb.restricted and S.is_compact and r <= 1:
            return tv_worst_case(loss, ref, S, r)
        return phi_worst_case(loss, S, ref, fm, r, amb.restricted)
    if fam == "total-variation":
        return tv_worst_case(loss, ref, S, r)
    if fam == "levy-prokhorov":
        return lp_worst_case(loss, ref, S, r, amb.norm)
    if fam == "wasserstein-inf":
        return winf_worst_case(loss, ref, S, r, amb.norm)
    if fam == "wasserstein-p":
        p = float(amb.p)
        if p == 1 and loss.is_affine and S.kind == "reals":
            return w1_lipschitz(loss, ref, r, amb.norm)
        if p == 2 and norm_order(amb.norm) == 2 and not all(g.is_concave for g in loss.pieces):
            return w2_quadratic_worst_case(loss, S, ref, r)
        return ot_worst_case(loss, S, ref, TransportCost("norm-power", p=p, norm=amb.norm), r**p)
    if fam == "ot-custom":
        cost = amb.cost if isinstance(amb.cost, TransportCost) else TransportCost(**(amb.cost or {}))
        return ot_worst_case(loss, S, ref, cost, r)
    raise InvalidInput(f"no worst-case route for the {fam!r} family")


def w2_quadratic_worst_case(loss: PiecewiseLoss, support: SupportSet, P: DiscreteDistribution,
                            r: float) -> WorstCaseResult:
    """2-Wasserstein ball, Euclidean cost, arbitrary quadratic pieces.

    Minimizes the convex dual lam r^2 + sum_i p_i max_j sup_z [l_j(z) - lam |z - zhat_i|^2]
    over lam by golden section in log(lam - lam_min); the inner suprema are exact
    trust-region or box maximizations.
    """
    d = loss.dim
    I = np.eye(d)
    lam_min = 0.0
    if not support.is_compact:
        lam_min = max(0.0, max(float(np.linalg.eigvalsh(g.Q).max()) for g in loss.pieces))

    def inner(lam):
        total = 0.0
        for zh, w in zip(P.atoms, P.probs):
            best = -INF
            for g in loss.pieces:
                h = QuadForm(g.Q - lam * I, g.q + lam * zh, g.q0 - lam * float(zh @ zh))
                v, _, _ = max_piece(h, support)
                best = max(best, v)
            if math.isinf(best):
                return INF
            total += w * best
        return total

    def dual(u):
        lam = lam_min + math.exp(u)
        return lam * r**2 + inner(lam)

    scale = max(1.0, float(np.abs(P.atoms).max()), max(float(np.abs(g.q).max()) for g in loss.pieces))
    lo, hi = math.log(scale) - 40.0, math.log(scale) + 40.0 - 2.0 * math.log(max(r, 1e-12))
    u, val = golden_min(dual, lo, hi, tol=1e-12)
    if support.is_compact:
        v0 = inner(0.0)
        if v0 <= val:
            return WorstCaseResult(v0, None, {"objective": v0, "lambda": 0.0}, "wasserstein-2-dual", False)
    lam = lam_min + math.exp(u)
    return WorstCaseResult(val, None, {"objective": val, "lambda": lam}, "wasserstein-2-dual", False)


def _closed_form_risk(amb: AmbiguitySpec, loss: PiecewiseLoss, risk: RiskSpec):
    """Closed forms for risks of linear losses; None when no closed form applies."""
    fam, ref, r = amb.family, amb.reference, amb.radius
    linear = len(loss.pieces) == 1 and loss.is_affine
    if fam == "chebyshev" and linear and amb.support.kind == "reals":
        g = loss.pieces[0]
        mom = _moments_of(ref)
        s = math.sqrt(max(float(2 * g.q @ mom.cov @ (2 * g.q)), 0.0))
        val = float(2 * g.q @ mom.mean) + g.q0 + standard_risk_coefficient(risk) * s
        return WorstCaseResult(val, None, None, "chebyshev-risk")
    if fam == "gelbrich" and linear and amb.support.kind == "reals":
        g = loss.pieces[0]
        val = gelbrich_risk(2 * g.q, ref, r, standard_risk_coefficient(risk)) + g.q0
        return WorstCaseResult(val, None, None, "gelbrich-risk")
    if fam == "wasserstein-p" and amb.support.kind == "reals" and risk.kind != "var":
        if float(amb.p) == 1 and loss.is_affine:
            return WorstCaseResult(w1_spectral_risk(loss, ref, r, risk, amb.norm), None, None,
                                   "wasserstein-1-spectral")
        if linear and risk.kind == "cvar" and float(amb.p) > 1:
            g = loss.pieces[0]
            val = wp_cvar(2 * g.q, ref, risk.level, float(amb.p), r, amb.norm) + g.q0
            return WorstCaseResult(val, None, None, "wasserstein-p-cvar")
    return None


def worst_case(amb: AmbiguitySpec, loss: PiecewiseLoss, x=None, risk: Optional[RiskSpec] = None,
               closed_form: bool = True) -> WorstCaseResult:
    """Nature's subproblem: closed form first, conic reformulation second."""
    loss = loss.at(x) if loss.is_coupled else (loss if x is None or not np.size(x) else loss.at(x))
    if loss.dim != amb.dim:
        raise InvalidInput("loss and ambiguity set live in different dimensions")
    risk = risk or RiskSpec()
    if risk.kind == "expectation":
        return _expectation(amb, loss)
    if closed_form:
        res = _closed_form_risk(amb, loss, risk)
        if res is not None:
            return res
    if risk.kind == "cvar":
        return worst_case_oce(amb, loss, risk.level)
    raise InvalidInput(f"no worst-case route for {risk.kind} risk over the {amb.family!r} family")


def _loss_range(loss: PiecewiseLoss, support: SupportSet):
    """(lower, upper) bounds on the loss over the support; infinite when unknown."""
    hi, _, _ = sup_loss(loss, support)
    lows = []
    for g in loss.pieces:
        v, _, _ = max_piece(g.scaled(-1.0), support)
        lows.append(-v)
    return max(lows), hi


def worst_case_oce(amb: AmbiguitySpec, loss: PiecewiseLoss, beta: float, x=None,
                   tol: float = 1e-6) -> WorstCaseResult:
    """Worst-case beta-CVaR as inf over tau of tau + sup E[max(l - tau, 0)] / beta."""
    if not 0 < beta <= 1:
        raise InvalidInput("CVaR level must lie in (0, 1]")
    if loss.is_coupled:
        loss = loss.at(x)
    if beta == 1:
        res = worst_case(amb, loss)
        return WorstCaseResult(res.value, res.extremal, res.dual, res.method + "+oce", res.attained,
                               dict(res.flags, tau=None))
    cache = {}

    def phi(tau):
        if tau not in cache:
            inner = worst_case(amb, loss.shift_scale(tau, 1.0 / beta))
            cache[tau] = (tau + inner.value, inner)
        return cache[tau][0]

    lo, hi = _loss_range(loss, amb.support)
    if math.isinf(lo) or math.isinf(hi):
        start = _reference_level(amb, loss)
        lo, hi = bracket_convex(phi, start, 1.0)
        if math.isinf(lo) or math.isinf(hi):
            raise InvalidInput("could not bracket the CVaR threshold")
    if hi - lo <= tol:
        tau = 0.5 * (lo + hi)
        val = phi(tau)
    else:
        tau, val = golden_min(phi, lo, hi, tol=tol / max(1.0, abs(lo) + abs(hi)))
    inner = cache[tau][1]
    return WorstCaseResult(val, inner.extremal, None, "oce:" + inner.method, inner.attained,
                           {"tau": tau, "beta": beta})


def _reference_level(amb: AmbiguitySpec, loss: PiecewiseLoss) -> float:
    ref = amb.reference
    if isinstance(ref, DiscreteDistribution):
        return float(ref.probs @ loss.values(ref.atoms))
    if isinstance(ref, (GaussianSpec, MomentPair)):
        return float(loss(ref.mean))
    return 0.0


# ---------------------------------------------------------------------------
# semi-infinite form
# ---------------------------------------------------------------------------

@dataclass
class SemiInfinite:
    """Linear objective, box/row constraints on y, and quadratic-in-z constraints."""

    c: np.ndarray
    c0: float
    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray          # (m, K + 1, d, d)
    B: np.ndarray          # (m, K + 1, d)
    C: np.ndarray          # (m, K + 1)
    support: SupportSet
    names: list
    x_index: np.ndarray
    rows_A: Optional[np.ndarray] = None
    rows_b: Optional[np.ndarray] = None
    anchors: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.C.shape[0]

    def objective(self, y) -> float:
        return float(self.c @ y + self.c0)

    def coefs(self, z) -> np.ndarray:
        """(m, K + 1) matrix with g_j(y, z) = row_j . (1, y)."""
        z = np.asarray(z, dtype=float)
        return np.einsum("i,mkij,j->mk", z, self.A, z) + self.B @ z + self.C

    def values(self, y, z) -> np.ndarray:
        return self.coefs(z) @ np.concatenate([[1.0], y])

    def piece_at(self, y, j: int) -> QuadForm:
        yt = np.concatenate([[1.0], y])
        Q = np.tensordot(yt, self.A[j], axes=1)
        b = yt @ self.B[j]
        return QuadForm(Q, 0.5 * b, float(yt @ self.C[j]))

    def grad_z(self, y, z, j: int) -> np.ndarray:
        return self.piece_at(y, j).gradient(z)

    def noise(self, y):
        """Per-constraint suprema over the support: (values, maximizers, exact)."""
        vals, args, exact = [], [], True
        for j in range(self.n_constraints):
            g = self.piece_at(y, j)
            v, z, ex = max_piece(g, self.support)
            if math.isinf(v) or z is None:
                v, z = _escape_point(g, self.support)
            vals.append(v)
            args.append(np.asarray(z, dtype=float))
            exact = exact and ex
        return np.array(vals), args, exact

    def x_of(self, y) -> np.ndarray:
        return np.asarray(y)[self.x_index]


def _escape_point(g: QuadForm, support: SupportSet):
    """A point with large value when the supremum is infinite (unbounded support)."""
    d = g.dim
    w, V = np.linalg.eigh(g.Q) if np.any(g.Q) else (np.zeros(d), np.eye(d))
    direction = V[:, -1] if w[-1] > 1e-12 else (g.q / max(np.linalg.norm(g.q), 1e-300))
    if not np.any(direction):
        direction = np.eye(d)[0]
    if float(g.gradient(np.zeros(d)) @ direction) < 0 and w[-1] <= 1e-12:
        direction = -direction
    t = 1.0
    base = g(np.zeros(d))
    for _ in range(200):
        for s in (1.0, -1.0):
            z = s * t * direction
            if contains(support, z, 0.0) and g(z) > abs(base) + 1.0:
                return g(z), z
        t *= 2.0
    raise Unbounded("constraint violation unbounded but no escape point found")


class _Assembler:
    def __init__(self, d: int):
        self.d = d
        self.names, self.lower, self.upper, self.obj = [], [], [], []
        self.cons = []  # list of dicts var -> (A, b, c); key -1 is the constant

    def var(self, name, lo=-DEFAULT_BOUND, hi=DEFAULT_BOUND, obj=0.0) -> int:
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        self.obj.append(obj)
        return len(self.names) - 1

    def finish(self, support, c0, x_index, rows=None, anchors=()):
        K, d = len(self.names), self.d
        m = len(self.cons)
        A = np.zeros((m, K + 1, d, d))
        B = np.zeros((m, K + 1, d))
        C = np.zeros((m, K + 1))
        for j, con in enumerate(self.cons):
            for k, (a, b, c) in con.items():
                A[j, k + 1] += a
                B[j, k + 1] += b
                C[j, k + 1] += c
        rows_A = rows_b = None
        if rows is not None:
            RA, Rb = rows
            rows_A = np.zeros((RA.shape[0], K))
            rows_A[:, x_index] = RA
            rows_b = Rb
        return SemiInfinite(np.array(self.obj), c0, np.array(self.lower, float), np.array(self.upper, float),
                            A, B, C, support, self.names, np.asarray(x_index, dtype=int), rows_A, rows_b,
                            list(anchors))


def _loss_terms(problem: DroProblem, asm: _Assembler):
    """Loss pieces as dicts var -> (A, b, c), after the CVaR transformation."""
    loss = problem.loss
    d = loss.dim
    zero = np.zeros((d, d))
    x_index = []
    if loss.is_coupled:
        lo, hi = problem.decisions.lower, problem.decisions.upper
        x_index = [asm.var(f"x[{i}]", lo[i], hi[i]) for i in range(loss.decision_dim)]
        pieces = []
        for p in loss.coupled:
            t = {-1: (zero, p.c.copy(), p.d)}
            for i, k in enumerate(x_index):
                t[k] = (zero, p.A[i].copy(), p.b[i])
            pieces.append(t)
    else:
        pieces = [{-1: (g.Q.copy(), 2.0 * g.q, g.q0)} for g in loss.pieces]
    if problem.risk.kind == "cvar":
        beta = problem.risk.level
        lo, hi = _tau_bracket(problem)
        tau = asm.var("tau", lo, hi, obj=1.0)
        scaled = []
        for t in pieces:
            s = {k: (a / beta, b / beta, c / beta) for k, (a, b, c) in t.items()}
            s[tau] = (zero, np.zeros(d), -1.0 / beta)
            scaled.append(s)
        scaled.append({-1: (zero, np.zeros(d), 0.0)})
        pieces = scaled
    return pieces, x_index


def _tau_bracket(problem: DroProblem):
    S = problem.ambiguity.support
    lo, hi = -DEFAULT_BOUND, DEFAULT_BOUND
    if S.is_compact and problem.decisions is not None and np.all(np.isfinite(problem.decisions.lower)) \
            and np.all(np.isfinite(problem.decisions.upper)):
        # the optimal threshold is a worst-case VaR, which lies in the loss range
        blo, bhi = S.bounding_box()
        corners = _box_corners(problem.decisions.lower, problem.decisions.upper)
        zc = _box_corners(blo, bhi)
        vals = [problem.loss.at(x).values(zc) for x in corners] if problem.loss.is_coupled else []
        if vals:
            allv = np.concatenate(vals)
            span = float(allv.max() - allv.min()) + 1.0
            lo, hi = float(allv.min()) - span, float(allv.max()) + span
    return lo, hi


def _box_corners(lo, hi, limit=10):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    d = lo.shape[0]
    if d > limit:
        return np.vstack([lo, hi, 0.5 * (lo + hi)])
    grid = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)], indexing="ij")).reshape(d, -1).T
    return grid


def _anchor_points(support: SupportSet, extra=()) -> list:
    d = support.dim
    pts = [np.asarray(p, dtype=float) for p in extra]
    if support.kind == "box":
        lo, hi = support.lower, support.upper
        pts.append(0.5 * (lo + hi))
        if d <= 4:
            pts += list(_box_corners(lo, hi))
        else:
            for i in range(d):
                for v in (lo[i], hi[i]):
                    z = 0.5 * (lo + hi)
                    z[i] = v
                    pts.append(z)
    elif support.kind == "ellipsoid" and support.is_compact:
        w, V = np.linalg.eigh(support.shape)
        pts.append(support.center.copy())
        for k in range(d):
            ax = V[:, k] / math.sqrt(w[k])
            pts += [support.center + ax, support.center - ax]
    elif support.kind == "simplex":
        pts += list(np.eye(d)) + [np.full(d, 1.0 / d)]
    else:
        pts.append(np.zeros(d))
        for k in range(d):
            pts += [np.eye(d)[k], -np.eye(d)[k]]
    return [p for p in pts if contains(support, p, 1e-9)] or [pts[0]]


def semi_infinite_form(problem: DroProblem, bound: float = DEFAULT_BOUND, concave: bool = False) -> SemiInfinite:
    """Dualize nature's subproblem into the semi-infinite form.

    concave=True keeps the diagonal of the Chebyshev multiplier nonnegative so
    that the constraints are concave in z (exact in one dimension), which the
    gradient-based feasibility methods need for their infeasibility verdicts.
    """
    amb = problem.ambiguity
    d = problem.loss.dim
    asm = _Assembler(d)
    pieces, x_index = _loss_terms(problem, asm)
    zero = np.zeros((d, d))
    fam, ref, r = amb.family, amb.reference, amb.radius
    extra = []
    rows = None
    if problem.decisions is not None and problem.decisions.has_rows:
        rows = (problem.decisions.A, problem.decisions.b)
    discrete = isinstance(ref, DiscreteDistribution)
    if discrete and r == 0:
        s = [asm.var(f"s[{i}]", -bound, bound, obj=float(p)) for i, p in enumerate(ref.probs)]
        for i, zh in enumerate(ref.atoms):
            for t in pieces:
                con = {k: (zero, np.zeros(d), float(zh @ a @ zh + b @ zh + c)) for k, (a, b, c) in t.items()}
                con[s[i]] = (zero, np.zeros(d), -1.0)
                asm.cons.append(con)
        extra = list(ref.atoms)
    elif fam in ("support-only", "markov", "chebyshev", "chebyshev-uncertain-moments"):
        bounded = fam == "chebyshev-uncertain-moments"
        if bounded and d > 1:
            raise InvalidInput("bounded second moments have no linear semi-infinite form beyond one dimension")
        lam0 = asm.var("lambda0", -bound, bound, obj=1.0)
        lam, Lam = [], {}
        if fam != "support-only":
            mom = _moments_of(ref) if fam != "markov" else None
            mu = mom.mean if mom is not None else (ref.mean if ref is not None else None)
            lam = [asm.var(f"lambda[{i}]", -bound, bound, obj=float(mu[i])) for i in range(d)]
            if mom is not None:
                for a in range(d):
                    for b in range(a, d):
                        S = np.zeros((d, d))
                        S[a, b] = S[b, a] = 1.0
                        low = 0.0 if (concave or bounded) and a == b else -bound
                        Lam[(a, b)] = (asm.var(f"Lambda[{a},{b}]", low, bound,
                                               obj=float(np.sum(S * mom.second))), S)
            extra = [mu]
        for t in pieces:
            con = dict(t)
            con[lam0] = (zero, np.zeros(d), -1.0)
            for i, k in enumerate(lam):
                con[k] = (zero, -np.eye(d)[i], 0.0)
            for (k, S) in Lam.values():
                con[k] = (-S, np.zeros(d), 0.0)
            asm.cons.append(con)
    elif fam == "wasserstein-p" and discrete and float(amb.p) == 2 and norm_order(amb.norm) == 2:
        lam = asm.var("lambda", 0.0, bound, obj=r**2)
        s = [asm.var(f"s[{i}]", -bound, bound, obj=float(p)) for i, p in enumerate(ref.probs)]
        I = np.eye(d)
        for i, zh in enumerate(ref.atoms):
            for t in pieces:
                con = dict(t)
                con[lam] = (-I, 2.0 * zh, -float(zh @ zh))
                con[s[i]] = (zero, np.zeros(d), -1.0)
                asm.cons.append(con)
        extra = list(ref.atoms)
    else:
        raise InvalidInput(f"the {fam!r} family has no semi-infinite form in this package "
                           "(supported: support-only, markov, chebyshev, 2-Wasserstein, zero-radius discrete)")
    sip = asm.finish(amb.support, 0.0, x_index, rows, _anchor_points(amb.support, extra))
    return sip


# ---------------------------------------------------------------------------
# master problems
# ---------------------------------------------------------------------------

def _rows_for(sip: SemiInfinite, scenarios) -> tuple:
    A, b = [], []
    for z in scenarios:
        co = sip.coefs(z)
        A.append(co[:, 1:])
        b.append(-co[:, 0])
    return np.vstack(A), np.concatenate(b)


def _linprog(c, A_ub, b_ub, lower, upper):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=list(zip(lower, upper)), method="highs", options=LP_OPTIONS)
    if res.status == 2:
        raise Infeasible("master problem is infeasible")
    if res.status == 3:
        raise Unbounded("master problem is unbounded")
    if res.status != 0:
        raise SolverFailure(f"master LP failed: {res.message}")
    return res.x, float(res.fun)


def _stack_rows(sip: SemiInfinite, A, b):
    if sip.rows_A is not None:
        A = np.vstack([A, sip.rows_A])
        b = np.concatenate([b, sip.rows_b])
    return A, b


def scenario_master(sip: SemiInfinite, scenarios):
    """Scenario oracle: the LP with the semi-infinite constraints imposed on finitely many z."""
    A, b = _stack_rows(sip, *_rows_for(sip, scenarios))
    y, v = _linprog(sip.c, A, b, sip.lower, sip.upper)
    return y, v + sip.c0


def _bound_active(sip: SemiInfinite, y) -> list:
    """Names of variables sitting at an artificial (large) bound."""
    act = []
    for k, (v, lo, hi) in enumerate(zip(y, sip.lower, sip.upper)):
        if (abs(lo) >= DEFAULT_BOUND * 0.999 and v <= lo + 1e-6 * abs(lo)) or \
                (abs(hi) >= DEFAULT_BOUND * 0.999 and v >= hi - 1e-6 * abs(hi)):
            act.append(sip.names[k])
    return act


# ---------------------------------------------------------------------------
# Algorithm: scenario approach
# ---------------------------------------------------------------------------

def scenario_sample_size(d_y: int, delta: float, eta: float) -> int:
    """Smallest N with sum_{i < d_y} C(N, i) delta^i (1 - delta)^(N - i) <= eta."""
    if not (0 < delta < 1 and 0 < eta < 1):
        raise InvalidInput("delta and eta must lie in (0, 1)")
    if d_y < 1:
        raise InvalidInput("decision dimension must be positive")
    log_eta = math.log(eta)
    N = d_y
    while True:
        i = np.arange(d_y)
        terms = gammaln(N + 1) - gammaln(i + 1) - gammaln(N - i + 1) + i * math.log(delta) \
            + (N - i) * math.log1p(-delta)
        if logsumexp(terms) <= log_eta + 1e-12:
            return int(N)
        N += 1


def uniform_sampler(support: SupportSet):
    """Rejection sampler, uniform over the support's bounding box."""
    lo, hi = support.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidInput("uniform sampling needs a compact support")

    def draw(rng, n):
        out = []
        while len(out) < n:
            Z = rng.uniform(lo, hi, size=(max(n, 16), lo.shape[0]))
            out += [z for z in Z if contains(support, z, 0.0)]
        return np.array(out[:n])

    return draw


def scenario_solve(sip: SemiInfinite, sampler: Callable = None, delta: float = 0.05, eta: float = 0.05,
                   seed: int = 0, N: Optional[int] = None) -> SolveReport:
    sampler = sampler or uniform_sampler(sip.support)
    if N is None:
        N = scenario_sample_size(sip.dim, delta, eta)
    rng = np.random.default_rng(seed)
    Z = sampler(rng, N)
    y, val = scenario_master(sip, list(Z))
    viol, _, _ = sip.noise(y)
    info = {"N": int(N), "delta": delta, "eta": eta, "max_violation": float(viol.max())}
    act = _bound_active(sip, y)
    if act:
        info["bound_active"] = act
    return SolveReport(sip.x_of(y), val, 1, [{"iteration": 1, "master": val, "violation": float(viol.max())}],
                       seed, "optimal", "scenario", val, y, info)


# ---------------------------------------------------------------------------
# Algorithm: cutting planes
# ---------------------------------------------------------------------------

def _add_cuts(scen: list, viol, args, eps) -> int:
    added = 0
    for v, z in zip(viol, args):
        if v > eps and not any(np.allclose(z, s, atol=1e-12, rtol=0) for s in scen):
            scen.append(z)
            added += 1
    return added


def cutting_plane_solve(sip: SemiInfinite, eps: float = 1e-6, scenarios=None, max_iter: int = 500) -> SolveReport:
    """Alternate the scenario master LP with the exact noise oracle."""
    scen = [np.asarray(z, dtype=float) for z in (scenarios if scenarios is not None else sip.anchors)]
    trace = []
    y = None
    for it in range(1, max_iter + 1):
        y, val = scenario_master(sip, scen)
        viol, args, exact = sip.noise(y)
        worst = float(viol.max())
        trace.append({"iteration": it, "master": val, "violation": worst, "scenarios": len(scen)})
        if worst <= eps:
            info = {"scenarios": len(scen), "exact_oracle": exact}
            act = _bound_active(sip, y)
            if act:
                info["bound_active"] = act
            return SolveReport(sip.x_of(y), val, it, trace, None, "optimal", "cutting-plane", val, y, info)
        if _add_cuts(scen, viol, args, eps) == 0:
            break
    report = SolveReport(sip.x_of(y), trace[-1]["master"], len(trace), trace, None, "timeout", "cutting-plane",
                         trace[-1]["master"], y, {"scenarios": len(scen)})
    raise TimeoutWithIncumbent("cutting-plane iteration limit reached", incumbent=report)


# ---------------------------------------------------------------------------
# feasibility subroutines and bisection
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    """Outcome of a feasibility subroutine at one objective level.

    feasible is True with a certified point, False with a certified lower
    bound above eps, or the midpoint estimate when neither bound decides
    (certified is False in that case).
    """

    feasible: bool
    y: Optional[np.ndarray]
    violation: float
    lower: float
    iterations: int
    certified: bool = True
    trace: list = field(default_factory=list)


def _decide(y, viol: float, lower: float, eps: float, it: int, trace: list, final: bool) -> Optional[Verdict]:
    if viol <= eps:
        return Verdict(True, y, viol, lower, it, True, trace)
    if lower > eps:
        return Verdict(False, y, viol, lower, it, True, trace)
    if final:
        return Verdict(0.5 * (viol + lower) <= eps, y, viol, lower, it, False, trace)
    return None


def _level_rows(sip: SemiInfinite, level: float):
    return sip.c.reshape(1, -1), np.array([level - sip.c0])


def _epigraph_lp(sip: SemiInfinite, level: float, coefs: np.ndarray):
    """min t over y in Y, f(y) <= level, coefs @ (1, y) <= t: returns (y, t)."""
    K = sip.dim
    c = np.zeros(K + 1)
    c[-1] = 1.0
    A = np.hstack([coefs[:, 1:], -np.ones((coefs.shape[0], 1))])
    b = -coefs[:, 0]
    L, lb = _level_rows(sip, level)
    A = np.vstack([A, np.hstack([L, [[0.0]]])])
    b = np.concatenate([b, lb])
    if sip.rows_A is not None:
        A = np.vstack([A, np.hstack([sip.rows_A, np.zeros((sip.rows_A.shape[0], 1))])])
        b = np.concatenate([b, sip.rows_b])
    sol, t = _linprog(c, A, b, np.append(sip.lower, -INF), np.append(sip.upper, INF))
    return sol[:K], t


def cutting_plane_feasibility(sip: SemiInfinite, level: float, eps: float = 1e-6, max_iter: int = 500,
                              scenarios=None) -> Verdict:
    """min t s.t. g_j(y, z) <= t on the scenarios, f(y) <= level; refined by cuts."""
    scen = [np.asarray(z, dtype=float) for z in (scenarios if scenarios is not None else sip.anchors)]
    trace = []
    y, worst, t = None, INF, -INF
    for it in range(1, max_iter + 1):
        try:
            y, t = _epigraph_lp(sip, level, _rows_for_full(sip, scen))
        except Infeasible:
            return Verdict(False, None, INF, INF, it, True, trace)
        viol, args, _ = sip.noise(y)
        worst = float(viol.max())
        trace.append({"iteration": it, "master": t, "violation": worst})
        v = _decide(y, worst, t, eps, it, trace, False)
        if v is not None:
            return v
        if _add_cuts(scen, viol, args, eps) == 0:
            break
    return _decide(y, worst, t, eps, len(trace), trace, True)


def _rows_for_full(sip: SemiInfinite, scenarios) -> np.ndarray:
    return np.vstack([sip.coefs(z) for z in scenarios])


def _diag_rows(sip: SemiInfinite, Z: np.ndarray) -> np.ndarray:
    """Row j of the coefficients of g_j at its own realization Z[j]."""
    return np.einsum("mi,mkij,mj->mk", Z, sip.A, Z) + np.einsum("mkj,mj->mk", sip.B, Z) + sip.C


def _diag_grads(sip: SemiInfinite, yt: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Gradient in z of g_j(y, .) at Z[j], stacked over j."""
    return 2.0 * np.einsum("k,mkij,mj->mi", yt, sip.A, Z) + np.einsum("k,mkj->mj", yt, sip.B)


def _project_support(support: SupportSet, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if support.kind == "reals":
        return z
    if support.kind == "box":
        return np.clip(z, support.lower, support.upper)
    if support.kind == "ellipsoid" and support.is_compact:
        Q, c = support.shape, support.center
        u = z - c
        if u @ Q @ u <= 1.0:
            return z
        w, V = np.linalg.eigh(Q)
        ut = V.T @ u
        # Euclidean projection: u(nu) = (I + nu Q)^-1 u with u(nu)'Q u(nu) = 1
        f = lambda nu: float(np.sum(w * (ut / (1 + nu * w)) ** 2)) - 1.0
        lo, hi = 0.0, 1.0
        while f(hi) > 0:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
        return c + V @ (ut / (1 + hi * w))
    import cvxpy as cp

    from .core import quad_expr

    v = cp.Variable(z.shape[0])
    prob = cp.Problem(cp.Minimize(cp.sum_squares(v - z)), [quad_expr(g, v) <= 0 for g in support.as_constraints()])
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(v.value).reshape(-1)


def _project_all(support: SupportSet, Z: np.ndarray) -> np.ndarray:
    if support.kind == "box":
        return np.clip(Z, support.lower, support.upper)
    if support.kind == "reals":
        return Z
    return np.array([_project_support(support, z) for z in Z])


def _support_diameter(support: SupportSet) -> float:
    try:
        d = support.diameter(2)
    except InvalidInput:
        d = INF
    return d if math.isfinite(d) and d > 0 else 10.0


def _nominal_point(sip: SemiInfinite, level: float, Z: np.ndarray, eps: float, ref: np.ndarray):
    """Point of {f(y) <= level, g_j(y, z_j) <= eps, y in Y} nearest to ref in the 1-norm."""
    K = sip.dim
    rows = _diag_rows(sip, Z)
    A = rows[:, 1:]
    b = eps - rows[:, 0]
    L, lb = _level_rows(sip, level)
    A = np.vstack([A, L])
    b = np.concatenate([b, lb])
    if sip.rows_A is not None:
        A = np.vstack([A, sip.rows_A])
        b = np.concatenate([b, sip.rows_b])
    # variables (y, u) with |y - ref| <= u
    I = np.eye(K)
    A_full = np.vstack([np.hstack([A, np.zeros((A.shape[0], K))]), np.hstack([I, -I]), np.hstack([-I, -I])])
    b_full = np.concatenate([b, ref, -ref])
    c = np.concatenate([np.zeros(K), np.ones(K)])
    lower = np.concatenate([sip.lower, np.zeros(K)])
    upper = np.concatenate([sip.upper, np.full(K, INF)])
    sol, _ = _linprog(c, A_full, b_full, lower, upper)
    return sol[:K]


def _averaged_bound(sip: SemiInfinite, level: float, avg_rows: np.ndarray) -> float:
    """min over Y_level of max_j of the time-averaged g_j(., z_j^t): a lower bound
    on the robust violation when the constraints are concave in z."""
    try:
        return _epigraph_lp(sip, level, avg_rows)[1]
    except Infeasible:
        return INF


def _start_points(sip: SemiInfinite) -> np.ndarray:
    z0 = np.asarray(sip.anchors[0], dtype=float)
    return np.tile(z0, (sip.n_constraints, 1))


def dual_subgradient_feasibility(sip: SemiInfinite, level: float, eps: float = 1e-6, max_iter: int = 500,
                                 check_every: int = 10) -> Verdict:
    """Nominal feasibility problems at one realization per constraint, with
    projected gradient ascent on the realizations; returns the averaged point."""
    D = _support_diameter(sip.support)
    Z = _start_points(sip)
    ref = np.clip(np.zeros(sip.dim), sip.lower, sip.upper)
    ysum = np.zeros(sip.dim)
    row_sum = np.zeros_like(sip.C)
    trace = []
    G = 1e-12
    best = (INF, None)
    for t in range(1, max_iter + 1):
        try:
            y = _nominal_point(sip, level, Z, eps, ref)
        except Infeasible:
            return Verdict(False, None, INF, INF, t, True, trace)
        ysum += y
        row_sum += _diag_rows(sip, Z)
        ref = y
        grads = _diag_grads(sip, np.concatenate([[1.0], y]), Z)
        G = max(G, float(np.linalg.norm(grads, axis=1).max()))
        Z = _project_all(sip.support, Z + D / (G * math.sqrt(t)) * grads)
        if t % check_every == 0 or t == max_iter:
            ybar = ysum / t
            cands = [(float(sip.noise(ybar)[0].max()), ybar), (float(sip.noise(y)[0].max()), y)]
            viol, yc = min(cands, key=lambda p: p[0])
            if viol < best[0]:
                best = (viol, yc.copy())
            lower = _averaged_bound(sip, level, row_sum / t)
            trace.append({"iteration": t, "violation": viol, "lower_bound": lower})
            v = _decide(best[1], best[0], lower, eps, t, trace, t == max_iter)
            if v is not None:
                return v
    raise SolverFailure("subgradient loop ended without a verdict")


def _project_level_box(v, lo, hi, a, b, scale):
    """argmin sum scale_k (y_k - v_k)^2 over lo <= y <= hi, a'y <= b (exact, by breakpoints)."""
    y = np.clip(v, lo, hi)
    if a @ y <= b:
        return y
    w = a / scale
    # y(th) = clip(v - th w, lo, hi); a'y(th) is nonincreasing and piecewise linear in th >= 0
    nz = w != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(nz, (v - hi) / w, -INF)
        t2 = np.where(nz, (v - lo) / w, -INF)
    br = np.unique(np.concatenate([[0.0], np.clip(np.concatenate([t1, t2]), 0.0, None)]))
    br = br[np.isfinite(br)]
    f = lambda th: float(a @ np.clip(v - th * w, lo, hi)) - b
    vals = np.array([f(th) for th in br])
    k = np.searchsorted(-vals, 0.0)  # first breakpoint with f <= 0
    if k >= len(br):
        return np.clip(v - br[-1] * w, lo, hi)
    if k == 0:
        return np.clip(v, lo, hi)
    t0, t1_ = br[k - 1], br[k]
    f0, f1 = vals[k - 1], vals[k]
    th = t0 + (t1_ - t0) * f0 / (f0 - f1) if f0 != f1 else t1_
    return np.clip(v - th * w, lo, hi)


def online_feasibility(sip: SemiInfinite, level: float, eps: float = 1e-6, T: int = 100000,
                       y0=None, check_every: int = 1000) -> Verdict:
    """Online learning for min over Y_level of max_z max_j g_j(y, z).

    The decision player runs projected online subgradient descent with
    per-coordinate (AdaGrad) steps on y -> max_j g_j(y, z_j^t); each
    constraint player runs projected online gradient ascent with step
    D / (G sqrt(t)).
    """
    if sip.rows_A is not None:
        raise InvalidInput("online learning needs a box decision set")
    K = sip.dim
    D = _support_diameter(sip.support)
    a, b = sip.c, level - sip.c0
    lo, hi = sip.lower, sip.upper
    y = np.clip(np.zeros(K) if y0 is None else np.asarray(y0, dtype=float), lo, hi)
    y = _project_level_box(y, lo, hi, a, b, np.ones(K))
    Z = _start_points(sip)
    ysum = np.zeros(K)
    row_sum = np.zeros_like(sip.C)
    gsq = np.full(K, 1e-12)
    Gz = 1e-12
    span = max(1.0, float(np.abs(y).max()))
    trace = []
    yt = np.empty(K + 1)
    yt[0] = 1.0
    best = (INF, None)
    for t in range(1, T + 1):
        yt[1:] = y
        rows = _diag_rows(sip, Z)
        row_sum += rows
        ysum += y
        j = int(np.argmax(rows @ yt))
        grads = _diag_grads(sip, yt, Z)
        g = rows[j, 1:]
        gsq += g * g
        root = np.sqrt(gsq)
        y = _project_level_box(y - span * g / root, lo, hi, a, b, root)
        Gz = max(Gz, float(np.abs(grads).max()) * math.sqrt(grads.shape[1]))
        Z = _project_all(sip.support, Z + D / (Gz * math.sqrt(t)) * grads)
        if t % check_every == 0 or t == T:
            ybar = ysum / t
            viol = float(sip.noise(ybar)[0].max())
            if viol < best[0]:
                best = (viol, ybar.copy())
            lower = _averaged_bound(sip, level, row_sum / t)
            trace.append({"iteration": t, "violation": viol, "lower_bound": lower})
            v = _decide(best[1], best[0], lower, eps, t, trace, t == T)
            if v is not None:
                return v
    raise SolverFailure("online loop ended without a verdict")


def bisection_solve(sip: SemiInfinite, a: float, b: float, delta_gap: float = 1e-4,
                    feasibility: Callable = None, y_init=None) -> SolveReport:
    """Bisection on the objective level; feasibility(level) returns a Verdict.

    Uncertified verdicts steer the bracket too; info["certified_level"]
    records whether the returned point carries a feasibility certificate.
    """
    if feasibility is None:
        feasibility = lambda lev: cutting_plane_feasibility(sip, lev)
    if a > b:
        raise InvalidInput("bracket must satisfy a <= b")
    trace = []
    y = None if y_init is None else np.asarray(y_init, dtype=float)
    if b - a <= delta_gap:
        if y is None:
            vb = feasibility(b)
            if not vb.feasible:
                raise InvalidInput("upper end of the bracket is infeasible")
            y = vb.y
        return SolveReport(sip.x_of(y), b, 0, trace, None, "optimal", "bisection", b, y, {"bracket": [a, b]})
    vb = feasibility(b)
    trace.append({"level": b, "feasible": vb.feasible, "certified": vb.certified, "violation": vb.violation})
    if not vb.feasible:
        raise InvalidInput("upper end of the bracket is not feasible")
    y, y_cert = vb.y, vb.y if vb.certified else y
    va = feasibility(a)
    trace.append({"level": a, "feasible": va.feasible, "certified": va.certified, "violation": va.violation})
    if va.feasible and va.certified:
        return SolveReport(sip.x_of(va.y), a, len(trace), trace, None, "optimal", "bisection", a, va.y,
                           {"bracket": [a, a]})
    it = 0
    while b - a > delta_gap:
        c = 0.5 * (a + b)
        v = feasibility(c)
        it += 1
        trace.append({"level": c, "feasible": v.feasible, "certified": v.certified, "violation": v.violation,
                      "lower": v.lower})
        if v.feasible:
            b, y = c, v.y
            if v.certified:
                y_cert = v.y
        else:
            a = c
    return SolveReport(sip.x_of(y), b, it, trace, None, "optimal", "bisection", b, y,
                       {"bracket": [a, b], "certified_level": y is y_cert})


# ---------------------------------------------------------------------------
# brackets and top-level driver
# ---------------------------------------------------------------------------

def reference_lower_bound(problem: DroProblem) -> float:
    """min over x of the objective under one distribution from the ambiguity set."""
    amb = problem.ambiguity
    ref = amb.reference
    if isinstance(ref, DiscreteDistribution):
        P = ref
    elif amb.family == "chebyshev":
        mom = _moments_of(ref)
        S = amb.support
        center, shape = (S.center, S.shape) if S.kind == "ellipsoid" else (np.zeros(S.dim), np.zeros((S.dim, S.dim)))
        if S.kind == "box" and S.dim == 1:
            from .reformulate import _ellipsoid_of

            center, shape, _ = _ellipsoid_of(S)
        Z, w = ellipsoid_moment_atoms(mom.mean, mom.second, center, shape)
        P = DiscreteDistribution.normalized(Z, w)
    elif amb.family == "markov":
        P = DiscreteDistribution.dirac(ref.mean)
    else:
        P = DiscreteDistribution.dirac(_anchor_points(amb.support)[0])
    loss = problem.loss
    if not loss.is_coupled:
        vals = loss.values(P.atoms)
        if problem.risk.kind == "cvar":
            return cvar(vals, P.probs, problem.risk.level)
        return float(P.probs @ vals)
    # LP: min sum_i p_i t_i, t_i >= l_j(x, z_i) (CVaR adds tau and a hinge)
    n, N = loss.decision_dim, P.size
    beta = problem.risk.level if problem.risk.kind == "cvar" else None
    K = n + N + (1 if beta else 0)
    c = np.zeros(K)
    c[n:n + N] = P.probs / (beta or 1.0)
    rows, rhs = [], []
    for i, z in enumerate(P.atoms):
        for p in loss.coupled:
            row = np.zeros(K)
            row[:n] = p.A @ z + p.b
            row[n + i] = -1.0
            if beta:
                row[-1] = -1.0
            rows.append(row)
            rhs.append(-(p.c @ z + p.d) )
    lower = list(problem.decisions.lower) + [(0.0 if beta else -INF)] * N
    upper = list(problem.decisions.upper) + [INF] * N
    if beta:
        c[-1] = 1.0
        lower.append(-INF)
        upper.append(INF)
    A, b = np.array(rows), np.array(rhs)
    if problem.decisions.has_rows:
        A = np.vstack([A, np.hstack([problem.decisions.A, np.zeros((problem.decisions.A.shape[0], K - n))])])
        b = np.concatenate([b, problem.decisions.b])
    _, v = _linprog(c, A, b, np.array(lower), np.array(upper))
    return v


def robust_upper_point(sip: SemiInfinite, problem: DroProblem):
    """A feasible y: x at the decision-set center, all other duals idle except
    the epigraph variable, which takes the robust value."""
    y = np.clip(np.zeros(sip.dim), sip.lower, sip.upper)
    if problem.decisions is not None and problem.decisions.dim:
        y[sip.x_index] = problem.decisions.center()
    names = sip.names
    epi = [k for k, nm in enumerate(names) if nm in ("lambda0", "tau") or nm.startswith("s[")]
    if "tau" in names:
        y[names.index("tau")] = 0.0
    for k in epi:
        if names[k] != "tau":
            y[k] = 0.0
    viol, _, _ = sip.noise(y)
    shift = max(float(viol.max()), 0.0)
    for k in epi:
        if names[k] == "lambda0" or names[k].startswith("s["):
            y[k] += shift
    if "tau" in names and not any(nm == "lambda0" or nm.startswith("s[") for nm in names):
        y[names.index("tau")] += shift * problem.risk.level
    y = np.clip(y, sip.lower, sip.upper)
    viol, _, _ = sip.noise(y)
    if viol.max() > 1e-9:
        raise InvalidInput("could not construct a feasible starting point")
    return y, sip.objective(y)


METHODS = ("auto", "scenario", "cutting-plane", "bisection+cutting-plane", "bisection+subgradient",
           "bisection+online")


def certify(problem: DroProblem, x) -> float:
    """Worst-case objective at a fixed decision."""
    amb = problem.ambiguity
    xx = x if problem.loss.is_coupled else None
    return worst_case(amb, problem.loss, xx, problem.risk).value


def solve_dro(problem: DroProblem, method: str = "auto", options: Optional[dict] = None) -> SolveReport:
    """Dualize, solve the semi-infinite program, and re-evaluate nature's subproblem at the decision."""
    opts = dict(options or {})
    if method not in METHODS:
        raise InvalidInput(f"unknown method {method!r}")
    gradient_based = method in ("bisection+subgradient", "bisection+online")
    sip = semi_infinite_form(problem, opts.pop("bound", DEFAULT_BOUND), concave=gradient_based)
    eps = opts.get("eps", 1e-6)
    if method in ("auto", "cutting-plane"):
        rep = cutting_plane_solve(sip, eps=eps, max_iter=opts.get("max_iter", 500))
    elif method == "scenario":
        rep = scenario_solve(sip, delta=opts.get("delta", 0.05), eta=opts.get("eta", 0.05),
                             seed=opts.get("seed", 0), N=opts.get("N"))
    else:
        y0, b = robust_upper_point(sip, problem)
        a = opts.get("lower", reference_lower_bound(problem))
        b = opts.get("upper", b)
        gap = opts.get("delta_gap", 1e-4)
        if method == "bisection+cutting-plane":
            feas = lambda lev: cutting_plane_feasibility(sip, lev, eps=eps)
        elif method == "bisection+subgradient":
            feas = lambda lev: dual_subgradient_feasibility(sip, lev, eps=opts.get("eps_feas", 1e-3),
                                                            max_iter=opts.get("max_iter", 500))
        else:
            warm = {"y": y0}

            def feas(lev):
                # warm start from the most recent point judged feasible
                v = online_feasibility(sip, lev, eps=opts.get("eps_feas", 1e-3), T=opts.get("T", 100000),
                                       y0=warm["y"], check_every=opts.get("check_every", 1000))
                if v.feasible and v.y is not None:
                    warm["y"] = v.y
                return v
        rep = bisection_solve(sip, a, b, gap, feas, y_init=y0)
        rep.method = method
    rep.seed = opts.get("seed") if method == "scenario" else rep.seed
    try:
        cert = certify(problem, rep.x)
        rep.info["certified"] = True
        if method != "scenario":
            rep.objective = cert
        else:
            rep.info["certified_objective"] = cert
    except (InvalidInput, SolverFailure) as exc:
        rep.info["certified"] = False
        rep.info["certify_error"] = str(exc)
    return rep
