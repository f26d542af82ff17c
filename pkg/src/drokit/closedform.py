"""Analytical worst-case expectations and risks, plus regularization bounds.

Every worst-case routine returns a WorstCaseResult. When a dual
certificate is available it is stored in `dual` together with the dual
objective it achieves, so callers can check the primal/dual sandwich.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import (DiscreteDistribution, GaussianSpec, InvalidInput, PiecewiseLoss,
                   QuadForm, RiskSpec, SupportSet, as_mean_cov, as_vector, contains, cvar,
                   cvar_tail_weights, dual_norm, norm_order, spectral_risk)
from ._quadmax import sup_loss, sup_loss_ball


# ---------------------------------------------------------------------------
# result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceDescriptor:
    """Asymptotic sequence P_m of feasible distributions approaching the supremum."""

    kind: str
    params: dict
    builder: Callable = field(repr=False, compare=False, default=None)

    def at(self, m: int) -> DiscreteDistribution:
        if self.builder is None:
            raise InvalidInput("sequence has no explicit builder")
        return self.builder(int(m))

    def to_dict(self) -> dict:
        return {"sequence": self.kind, "params": _jsonable(self.params)}


Extremal = Union[DiscreteDistribution, GaussianSpec, SequenceDescriptor, None]


@dataclass(frozen=True)
class WorstCaseResult:
    value: float
    extremal: Extremal = None
    dual: Optional[dict] = None
    method: str = ""
    attained: bool = True
    flags: dict = field(default_factory=dict)

    @property
    def dual_objective(self) -> Optional[float]:
        if not self.dual or "objective" not in self.dual:
            return None
        return float(self.dual["objective"])

    def to_dict(self) -> dict:
        out = {"value": _num(self.value), "method": self.method, "attained": self.attained}
        if self.extremal is not None:
            out["extremal"] = self.extremal.to_dict()
        if self.dual is not None:
            out["dual"] = _jsonable(self.dual)
        if self.flags:
            out["flags"] = _jsonable(self.flags)
        return out


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def _single_piece(loss: PiecewiseLoss) -> QuadForm:
    if loss.is_coupled:
        raise InvalidInput("fix the decision before calling a closed form")
    if len(loss.pieces) != 1:
        raise InvalidInput("closed form needs a single-piece loss")
    return loss.pieces[0]


def _decision_free(loss: PiecewiseLoss) -> PiecewiseLoss:
    if loss.is_coupled:
        raise InvalidInput("fix the decision before calling a closed form")
    return loss


# ---------------------------------------------------------------------------
# moment-based bounds
# ---------------------------------------------------------------------------

def jensen_bound(loss: PiecewiseLoss, mu, support: SupportSet) -> WorstCaseResult:
    """Markov set with a concave loss: the Dirac at the mean is optimal."""
    g = _single_piece(loss)
    if not g.is_concave:
        raise InvalidInput("Jensen bound needs a concave piece")
    mu = as_vector(mu, support.dim)
    if not contains(support, mu):
        raise InvalidInput("mean lies outside the support")
    val = g(mu)
    lam = g.gradient(mu)
    lam0 = val - float(mu @ lam)
    return WorstCaseResult(val, DiscreteDistribution.dirac(mu),
                           {"lambda0": lam0, "lambda": lam, "objective": lam0 + float(lam @ mu)},
                           "jensen")


def edmundson_madansky(loss: PiecewiseLoss, mu) -> WorstCaseResult:
    """Markov set on the probability simplex with a convex loss."""
    loss = _decision_free(loss)
    if not loss.is_convex:
        raise InvalidInput("Edmundson-Madansky bound needs convex pieces")
    mu = as_vector(mu, loss.dim)
    if np.any(mu <= 0) or abs(mu.sum() - 1.0) > 1e-12:
        raise InvalidInput("mean must lie in the relative interior of the simplex")
    E = np.eye(loss.dim)
    lam = np.array([loss(e) for e in E])
    val = float(mu @ lam)
    return WorstCaseResult(val, DiscreteDistribution(E, mu),
                           {"lambda0": 0.0, "lambda": lam, "objective": val}, "edmundson-madansky")


def _num_supergradient(f, v, h=1e-6):
    v = np.asarray(v, dtype=float)
    g = np.zeros_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        g[k] = (f(v + e) - f(v - e)) / (2 * h)
    return g


def barycentric(loss: Callable, vbar, wbar, C, V: Optional[SupportSet] = None,
                grad_v: Optional[Callable] = None) -> WorstCaseResult:
    """Cross-moment set with a loss concave in v and convex in w (w on the simplex).

    `loss(v, w)` returns a real, `grad_v(v, w)` a supergradient in v
    (central differences are used when omitted).
    """
    vbar, wbar = as_vector(vbar), as_vector(wbar)
    C = np.asarray(C, dtype=float).reshape(vbar.shape[0], wbar.shape[0])
    if np.any(wbar <= 0) or abs(wbar.sum() - 1.0) > 1e-12:
        raise InvalidInput("w-bar must lie in the relative interior of the simplex")
    if not np.allclose(C.sum(axis=1), vbar, atol=1e-9):
        raise InvalidInput("cross-moment matrix is inconsistent with v-bar (Ce != v-bar)")
    dw = wbar.shape[0]
    E = np.eye(dw)
    atoms, vals, lam_w, Lam = [], [], np.zeros(dw), np.zeros_like(C)
    for i in range(dw):
        v = C[:, i] / wbar[i]
        if V is not None and not contains(V, v):
            raise InvalidInput(f"barycenter {v.tolist()} lies outside V")
        li = float(loss(v, E[i]))
        gi = (np.asarray(grad_v(v, E[i]), dtype=float) if grad_v is not None
              else _num_supergradient(lambda u: float(loss(u, E[i])), v))
        Lam[:, i] = gi
        lam_w[i] = li - float(gi @ v)
        atoms.append(np.concatenate([v, E[i]]))
        vals.append(li)
    val = float(wbar @ np.array(vals))
    obj = float(lam_w @ wbar + np.sum(Lam * C))
    dual = {"lambda0": 0.0, "lambda_v": np.zeros_like(vbar), "lambda_w": lam_w, "Lambda": Lam,
            "objective": obj}
    return WorstCaseResult(val, DiscreteDistribution(np.array(atoms), wbar), dual, "barycentric")


def ben_tal_hochman(loss, mu: float, mad: float, interval=(0.0, 1.0)) -> WorstCaseResult:
    """Mean and mean-absolute-deviation set on an interval, convex loss."""
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise InvalidInput("interval must have positive length")
    f = (lambda z: float(loss(np.array([z])))) if isinstance(loss, PiecewiseLoss) else (lambda z: float(loss(z)))
    if isinstance(loss, PiecewiseLoss) and (loss.dim != 1 or not loss.is_convex):
        raise InvalidInput("Ben-Tal and Hochman bound needs a convex univariate loss")
    w = b - a
    m, s = (mu - a) / w, mad / w
    if not 0 < m < 1:
        raise InvalidInput("mean must lie in the interior of the interval")
    if s < -1e-15 or s > 2 * m * (1 - m) + 1e-15:
        raise InvalidInput("mean absolute deviation out of range")
    s = min(max(s, 0.0), 2 * m * (1 - m))
    l0, lm, l1 = f(a), f(mu), f(b)
    p0, p1 = s / (2 * m), s / (2 * (1 - m))
    probs = np.array([p0, max(1.0 - p0 - p1, 0.0), p1])
    val = float(probs @ np.array([l0, lm, l1]))
    # certificate in normalized coordinates, mapped back to z
    n0 = ((1 - m) * l0 + lm - m * l1) / (2 * (1 - m))
    n1 = ((m - 1) * l0 + (1 - 2 * m) * lm + m * l1) / (2 * m * (1 - m))
    n2 = ((1 - m) * l0 - lm + m * l1) / (2 * m * (1 - m))
    lam0, lam1, lam2 = n0 - n1 * a / w, n1 / w, n2 / w
    dual = {"lambda0": lam0, "lambda1": lam1, "lambda2": lam2,
            "objective": lam0 + lam1 * mu + lam2 * mad}
    ext = DiscreteDistribution(np.array([[a], [mu], [b]]), probs / probs.sum())
    return WorstCaseResult(val, ext, dual, "ben-tal-hochman")


def scarf(a: float, mu: float, sigma: float) -> WorstCaseResult:
    """sup E[max(Z - a, 0)] over laws on R with mean mu and standard deviation sigma."""
    if not sigma > 0:
        raise InvalidInput("standard deviation must be positive")
    t = a - mu
    s = math.hypot(t, sigma)
    val = 0.5 * (s - t)
    pl, ph = 0.5 * (1 + t / s), 0.5 * (1 - t / s)
    ext = DiscreteDistribution(np.array([[mu + t - s], [mu + t + s]]), [pl, ph])
    # certificate for the centered majorant lam0 + lam1 (z - mu) + lam2 (z - mu)^2
    lam0 = (t - s) ** 2 / (4 * s)
    lam1 = -(t - s) / (2 * s)
    lam2 = 1.0 / (4 * s)
    dual = {"lambda0": lam0, "lambda1": lam1, "lambda2": lam2, "centered_at": mu,
            "objective": lam0 + lam2 * sigma**2}
    return WorstCaseResult(val, ext, dual, "scarf")


def _halfspace_projection(a, b):
    a = as_vector(a)
    na = float(np.linalg.norm(a))
    if na == 0:
        raise InvalidInput("halfspace normal must be nonzero")
    delta = max(float(b), 0.0) / na
    return delta, a * max(float(b), 0.0) / na**2


def marshall_olkin(delta: Optional[float] = None, *, z0=None, halfspace=None, constraints=None,
                   dim: int = 1) -> WorstCaseResult:
    """sup P(Z in C) over laws on R^d with mean 0 and second moment I.

    C is given by its distance `delta` (with optional nearest point `z0`),
    by a halfspace (a, b) meaning {a'z >= b}, or by convex quadratic
    constraints g_k(z) <= 0.
    """
    if halfspace is not None:
        delta, z0 = _halfspace_projection(*halfspace)
    elif constraints is not None:
        import cvxpy as cp
        from .core import quad_expr

        cons = list(constraints)
        z = cp.Variable(cons[0].dim)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(z)), [quad_expr(g, z) <= 0 for g in cons])
        prob.solve(solver=cp.CLARABEL)
        if prob.status not in ("optimal", "optimal_inaccurate"):
            raise InvalidInput("event set appears to be empty")
        z0 = np.asarray(z.value).reshape(-1)
        delta = float(np.linalg.norm(z0))
    elif delta is None:
        raise InvalidInput("supply delta, a halfspace or constraints")
    delta = float(delta)
    if delta < 0:
        raise InvalidInput("distance must be nonnegative")
    if z0 is None:
        z0 = np.zeros(dim)
        z0[0] = delta
    z0 = as_vector(z0)
    d = z0.shape[0]
    val = 1.0 / (1.0 + delta**2)
    k = 1.0 / (1.0 + delta**2) ** 2
    dual = {"lambda0": k, "lambda": 2 * k * z0, "Lambda": k * np.outer(z0, z0),
            "objective": k * (1.0 + float(z0 @ z0))}
    if delta <= 1e-12:
        return WorstCaseResult(val, None, dual, "marshall-olkin", attained=False,
                               flags={"supremum": "possibly-unattained"})
    # mixture of the nearest point and a law Q with the compensating moments
    m = -z0 / delta**2
    c = (1 + delta**2) / delta**2
    u = z0 / delta
    atoms, probs = [z0], [val]
    if d == 1:
        atoms.append(m)
        probs.append(1 - val)
    else:
        # orthonormal basis of the complement of u, symmetric pairs along it
        basis = np.linalg.svd(np.eye(d) - np.outer(u, u))[0][:, : d - 1]
        spread = math.sqrt((d - 1) * c)
        for k_ in range(d - 1):
            for sgn in (1.0, -1.0):
                atoms.append(m + sgn * spread * basis[:, k_])
                probs.append((1 - val) / (2 * (d - 1)))
    ext = DiscreteDistribution(np.array(atoms), np.array(probs))
    return WorstCaseResult(val, ext, dual, "marshall-olkin")


# ---------------------------------------------------------------------------
# risk measures over moment and Gelbrich sets
# ---------------------------------------------------------------------------

def standard_risk_coefficient(risk: RiskSpec) -> float:
    """Worst-case risk of a zero-mean, unit-variance loss."""
    if risk.kind == "expectation":
        return 0.0
    if risk.kind in ("var", "cvar"):
        b = risk.level
        return math.sqrt((1 - b) / b)
    return float(sum(w * math.sqrt((1 - b) / b) for b, w in zip(risk.levels, risk.weights)))


def chebyshev_risk(theta, moments, alpha: float) -> float:
    """theta'mu + alpha * sqrt(theta' Sigma theta)."""
    if alpha < 0:
        raise InvalidInput("risk coefficient must be nonnegative")
    mu, S = as_mean_cov(moments)
    th = as_vector(theta, mu.shape[0])
    return float(th @ mu + alpha * math.sqrt(max(float(th @ S @ th), 0.0)))


def gelbrich_risk(theta, center, r: float, alpha: float) -> float:
    """Chebyshev risk at the center plus r * sqrt(1 + alpha^2) * |theta|_2."""
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    th = as_vector(theta)
    return chebyshev_risk(th, center, alpha) + r * math.sqrt(1 + alpha**2) * float(np.linalg.norm(th))


def kl_gaussian_linear(theta, center: GaussianSpec, r: float) -> WorstCaseResult:
    """KL ball around a Gaussian, linear loss: the worst case is a shifted Gaussian."""
    if not r > 0:
        raise InvalidInput("radius must be positive")
    mu, S = center.mean, center.cov
    th = as_vector(theta, mu.shape[0])
    s2 = float(th @ S @ th)
    if s2 <= 1e-14:
        raise InvalidInput("covariance is singular along theta")
    s = math.sqrt(s2)
    val = float(th @ mu) + math.sqrt(2 * r) * s
    ext = GaussianSpec(mu + math.sqrt(2 * r) * (S @ th) / s, S)
    lam = s / math.sqrt(2 * r)
    lam0 = float(th @ mu) + s2 / (2 * lam)  # lam * log E exp(theta'Z / lam)
    return WorstCaseResult(val, ext, {"lambda0": lam0, "lambda": lam, "objective": lam0 + lam * r},
                           "kl-gaussian")


# ---------------------------------------------------------------------------
# discrete references: TV, Levy-Prokhorov, W-infinity, W1
# ---------------------------------------------------------------------------

def _need_compact(support: SupportSet):
    if not support.is_compact:
        raise InvalidInput("this closed form needs a compact support")


def _nominal(loss: PiecewiseLoss, P: DiscreteDistribution) -> np.ndarray:
    return loss.values(P.atoms)


def tv_worst_case(loss: PiecewiseLoss, P: DiscreteDistribution, support: SupportSet, r: float) -> WorstCaseResult:
    """r * sup l + (1 - r) * CVaR_{1-r}[l] with mass r moved to an argmax."""
    loss = _decision_free(loss)
    _need_compact(support)
    if not 0 <= r <= 1:
        raise InvalidInput("total variation radius must lie in [0, 1]")
    vals = _nominal(loss, P)
    if r == 0:
        return WorstCaseResult(float(P.probs @ vals), P, None, "total-variation")
    top, zstar, exact = sup_loss(loss, support)
    if r == 1:
        return WorstCaseResult(top, DiscreteDistribution.dirac(zstar), None, "total-variation",
                               flags={} if exact else {"heuristic": True})
    beta = 1.0 - r
    w = cvar_tail_weights(vals, P.probs, beta)
    val = r * top + beta * float(w @ vals)
    atoms = np.vstack([P.atoms, zstar[None, :]])
    ext = DiscreteDistribution.normalized(atoms, np.append(beta * w, r))
    return WorstCaseResult(val, ext, None, "total-variation", flags={} if exact else {"heuristic": True})


def adversarial_loss(loss: PiecewiseLoss, P: DiscreteDistribution, support: SupportSet, r: float, norm=2):
    """Per-atom l_r(z_i) = sup{l(z) : |z - z_i| <= r, z in support} and maximizers."""
    vals, args, exact = [], [], True
    for z in P.atoms:
        v, a, ex = sup_loss_ball(loss, support, z, r, norm)
        vals.append(v)
        args.append(a)
        exact = exact and ex
    return np.array(vals), np.array(args), exact


def lp_worst_case(loss: PiecewiseLoss, P: DiscreteDistribution, support: SupportSet, r: float,
                  norm=2) -> WorstCaseResult:
    """r * sup l + (1 - r) * CVaR_{1-r}[l_r] over a Levy-Prokhorov ball."""
    loss = _decision_free(loss)
    _need_compact(support)
    if not 0 <= r <= 1:
        raise InvalidInput("Levy-Prokhorov radius must lie in [0, 1]")
    if r == 0:
        return WorstCaseResult(float(P.probs @ _nominal(loss, P)), P, None, "levy-prokhorov")
    top, zstar, ex1 = sup_loss(loss, support)
    lr, psi, ex2 = adversarial_loss(loss, P, support, r, norm)
    flags = {} if (ex1 and ex2) else {"heuristic": True}
    if r == 1:
        return WorstCaseResult(top, DiscreteDistribution.dirac(zstar), None, "levy-prokhorov", flags=flags)
    beta = 1.0 - r
    w = cvar_tail_weights(lr, P.probs, beta)
    val = r * top + beta * float(w @ lr)
    ext = DiscreteDistribution.normalized(np.vstack([psi, zstar[None, :]]), np.append(beta * w, r))
    return WorstCaseResult(val, ext, None, "levy-prokhorov", flags=flags)


def winf_worst_case(loss: PiecewiseLoss, P: DiscreteDistribution, support: SupportSet, r: float,
                    norm=2) -> WorstCaseResult:
    """E[l_r(Z)] attained by pushing each atom to a maximizer within distance r."""
    loss = _decision_free(loss)
    _need_compact(support)
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    lr, psi, exact = adversarial_loss(loss, P, support, r, norm)
    ext = DiscreteDistribution(psi, P.probs.copy())
    # certificate: the per-atom suprema themselves
    dual = {"per_atom": lr, "objective": float(P.probs @ lr)}
    return WorstCaseResult(float(P.probs @ lr), ext, dual, "wasserstein-inf",
                           flags={} if exact else {"heuristic": True})


def steepest_direction(g, norm=2) -> np.ndarray:
    """Unit vector u (in the primal norm) with g'u = |g|_*."""
    g = as_vector(g)
    p = norm_order(norm)
    u = np.zeros_like(g)
    if not np.any(g):
        u[0] = 1.0
        return u
    if p == 2:
        return g / np.linalg.norm(g)
    if p == 1:
        k = int(np.argmax(np.abs(g)))
        u[k] = math.copysign(1.0, g[k])
        return u
    return np.sign(g)


def _w1_sequence(loss: PiecewiseLoss, P: DiscreteDistribution, r: float, norm) -> SequenceDescriptor:
    grads = [2.0 * p.q for p in loss.pieces]
    j = int(np.argmax([dual_norm(g, norm) for g in grads]))
    u = steepest_direction(grads[j], norm)

    def build(m: int) -> DiscreteDistribution:
        m = max(m, 1)
        atoms = np.vstack([P.atoms, P.atoms + m * r * u])
        return DiscreteDistribution(atoms, np.concatenate([P.probs * (1 - 1.0 / m), P.probs / m]))

    return SequenceDescriptor("w1-escape", {"fraction": "1/m", "distance": "m*r", "direction": u,
                                            "radius": r}, build)


def w1_lipschitz(loss: PiecewiseLoss, P: DiscreteDistribution, r: float, norm=2) -> WorstCaseResult:
    """E[l] + r * Lip(l) for convex piecewise affine losses on R^d."""
    loss = _decision_free(loss)
    if not loss.is_affine:
        raise InvalidInput("1-Wasserstein closed form needs affine pieces")
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    lip = loss.lipschitz(norm)
    nominal = float(P.probs @ _nominal(loss, P))
    val = nominal + r * lip
    seq = _w1_sequence(loss, P, r, norm) if r > 0 else None
    return WorstCaseResult(val, seq if seq is not None else P, {"lambda": lip, "objective": val},
                           "wasserstein-1", attained=r == 0)


def _mixture_inverse_level(risk: RiskSpec) -> float:
    """Integral of 1/beta against the CVaR mixing measure."""
    if risk.kind == "expectation":
        return 1.0
    if risk.kind == "cvar":
        return 1.0 / risk.level
    if risk.kind == "spectral":
        return float(sum(w / b for b, w in zip(risk.levels, risk.weights)))
    raise InvalidInput("value-at-risk is not a spectral risk measure")


def w1_spectral_risk(loss: PiecewiseLoss, P: DiscreteDistribution, r: float, risk: RiskSpec, norm=2) -> float:
    loss = _decision_free(loss)
    if not loss.is_affine:
        raise InvalidInput("1-Wasserstein closed form needs affine pieces")
    k = _mixture_inverse_level(risk)
    return spectral_risk(_nominal(loss, P), P.probs, risk) + r * loss.lipschitz(norm) * k


def wp_cvar(theta, P: DiscreteDistribution, beta: float, p: float, r: float, norm=2) -> float:
    """beta-CVaR of theta'Z over a p-Wasserstein ball (radius in distance units)."""
    if not 1 < p < math.inf:
        raise InvalidInput("order p must lie in (1, inf)")
    if not 0 < beta < 1:
        raise InvalidInput("CVaR level must lie in (0, 1)")
    th = as_vector(theta, P.dim)
    return cvar(P.atoms @ th, P.probs, beta) + r * beta ** (-1.0 / p) * dual_norm(th, norm)


# ---------------------------------------------------------------------------
# regularization bounds
# ---------------------------------------------------------------------------

BOUND_KINDS = ("chi2-variance", "w1-lipschitz-ub", "wp-variation", "risk-lipschitz")


def _operator_norm(A: np.ndarray, norm) -> float:
    """|A|_{norm -> dual norm} for symmetric A, exact for the 2-norm."""
    p = norm_order(norm)
    if p == 2:
        return float(np.linalg.norm(A, 2))
    if p == 1:
        return float(np.max(np.abs(A)))  # max_{|z|_1<=1} |Az|_inf
    raise InvalidInput("variation bound supports the 1- and 2-norms")


def regularization_bounds(loss: PiecewiseLoss, P: DiscreteDistribution, r: float, kind: str,
                          p: int = 2, norm=2, risk: Optional[RiskSpec] = None) -> float:
    """Upper bounds on worst-case expectations/risks by regularized nominal values."""
    loss = _decision_free(loss)
    if r < 0:
        raise InvalidInput("radius must be nonnegative")
    if kind not in BOUND_KINDS:
        raise InvalidInput(f"unknown bound kind {kind!r}")
    vals = _nominal(loss, P)
    mean = float(P.probs @ vals)
    if kind == "chi2-variance":
        var = float(P.probs @ (vals - mean) ** 2)
        return mean + math.sqrt(r * max(var, 0.0))
    if kind == "w1-lipschitz-ub":
        if not loss.is_affine:
            raise InvalidInput("Lipschitz bound on R^d needs affine pieces")
        return mean + r * loss.lipschitz(norm)
    if kind == "risk-lipschitz":
        if risk is None:
            raise InvalidInput("risk-lipschitz bound needs a risk specification")
        if not loss.is_affine:
            raise InvalidInput("Lipschitz bound on R^d needs affine pieces")
        if risk.kind == "expectation":
            lip_rho = 1.0
        elif risk.kind == "cvar":
            lip_rho = risk.level ** (-1.0 / p)
        elif risk.kind == "spectral" and p == 1:
            lip_rho = _mixture_inverse_level(risk)
        else:
            raise InvalidInput("Lipschitz constant of this risk measure is not available")
        return spectral_risk(vals, P.probs, risk) + r * lip_rho * loss.lipschitz(norm)
    # wp-variation: integer p, one smooth quadratic piece
    p = int(p)
    if p < 1:
        raise InvalidInput("order p must be a positive integer")
    if len(loss.pieces) != 1:
        raise InvalidInput("variation bound needs a single differentiable piece")
    g = loss.pieces[0]
    if p == 1:
        if not g.is_affine:
            raise InvalidInput("Lipschitz bound on R^d needs affine pieces")
        return mean + r * loss.lipschitz(norm)
    hess = _operator_norm(2.0 * g.Q, norm)
    total = mean
    for k in range(1, p):
        qk = p / (p - k)
        if k == 1:
            grads = np.array([dual_norm(g.gradient(z), norm) for z in P.atoms])
            term = float(P.probs @ grads**qk) ** (1.0 / qk)
        elif k == 2:
            term = hess
        else:
            term = 0.0
        total += r**k / math.factorial(k) * term
    lip_top = hess if p == 2 else 0.0
    return total + r**p / math.factorial(p) * lip_top
