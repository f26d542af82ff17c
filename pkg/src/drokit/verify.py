"""Brute-force oracles, Taylor slope checks, regularization-bound checks and
Monte-Carlo experiments for statistical guarantees."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog
from scipy.stats import binomtest

from .closedform import regularization_bounds
from .core import (AmbiguitySpec, DiscreteDistribution, GaussianSpec, InvalidInput, MomentPair,
                   PiecewiseLoss, RiskSpec, SolverFailure, SupportSet, contains, dual_norm,
                   empirical_from_samples)
from .divergence import family, phi_divergence, recession_slope, second_derivative_at_one
from .reformulate import _phi_budget
from .solve import DecisionSet, DroProblem, solve_dro, worst_case
from .transport import (TransportCost, distance_matrix, levy_prokhorov, total_variation, wasserstein_inf,
                        wasserstein_p)
from ._quadmax import golden_min

# ---------------------------------------------------------------------------
# grid oracle
# ---------------------------------------------------------------------------


@dataclass
class GridOracleResult:
    value: float
    grid_size: int
    box: tuple
    truncated: bool
    distribution: Optional[DiscreteDistribution] = None


def truncation_box(amb: AmbiguitySpec, loss: PiecewiseLoss = None):
    """Bounding box of the support, or a truncation box when it is unbounded.

    Unbounded supports are cut at 10 * (reference scale + r * Lipschitz proxy)
    around the reference center; the proxy is max(1, Lip(l)).
    """
    lo, hi = amb.support.bounding_box()
    if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
        return lo, hi, False
    ref = amb.reference
    if isinstance(ref, DiscreteDistribution):
        center = np.zeros(amb.dim)
        scale = float(np.linalg.norm(ref.atoms, axis=1).max())
    elif isinstance(ref, (GaussianSpec, MomentPair)):
        center = ref.mean
        cov = ref.cov
        scale = float(np.linalg.norm(ref.mean)) + math.sqrt(max(float(np.trace(cov)), 0.0))
    else:
        center, scale = np.zeros(amb.dim), 1.0
    lip = 1.0 if loss is None else max(1.0, min(loss.lipschitz(), 1e6))
    half = 10.0 * (max(scale, 1.0) + amb.radius * lip)
    lo = np.where(np.isfinite(lo), lo, center - half)
    hi = np.where(np.isfinite(hi), hi, center + half)
    return lo, hi, True


def make_grid(lo, hi, resolution: int, support: SupportSet = None) -> np.ndarray:
    """Tensor grid with `resolution` points per axis, restricted to the support.

    Grids with resolutions m * 2^k + 1 are nested, so oracle values are
    nondecreasing along such a sequence.
    """
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    axes = [np.linspace(a, b, int(resolution)) for a, b in zip(lo, hi)]
    G = np.array(np.meshgrid(*axes, indexing="ij")).reshape(lo.shape[0], -1).T
    if support is not None and support.kind not in ("box", "reals"):
        G = G[[contains(support, g, 1e-12) for g in G]]
    return G


def _grid_lp(c, A_eq, b_eq, A_ub=None, b_ub=None):
    res = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise SolverFailure(f"grid LP failed: {res.message}")
    return -float(res.fun), res.x


def _cvx_value(prob: cp.Problem) -> float:
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverFailure(f"grid program ended with {prob.status}")
    return float(prob.value)


def grid_oracle(loss: PiecewiseLoss, amb: AmbiguitySpec, resolution: int = 10001, x=None,
                risk: Optional[RiskSpec] = None, box=None) -> GridOracleResult:
    """Worst-case expectation restricted to distributions on a finite grid.

    A lower bound on the true supremum (exact for phi and transport sets whose
    worst cases live on the reference atoms plus grid points).
    """
    if loss.is_coupled:
        loss = loss.at(x)
    if risk is not None and risk.kind == "cvar":
        return _grid_cvar(loss, amb, resolution, risk.level, box)
    if risk is not None and risk.kind != "expectation":
        raise InvalidInput("grid oracle evaluates expectations and CVaR")
    if box is None:
        lo, hi, truncated = truncation_box(amb, loss)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        truncated = True
    G = make_grid(lo, hi, resolution, amb.support)
    ref = amb.reference
    if isinstance(ref, DiscreteDistribution):
        G = np.vstack([G, ref.atoms])
    lv = loss.values(G)
    fam, r = amb.family, amb.radius
    n = G.shape[0]
    dist = None
    if fam == "support-only":
        k = int(np.argmax(lv))
        val = float(lv[k])
        dist = DiscreteDistribution.dirac(G[k])
    elif fam in ("markov", "chebyshev", "chebyshev-uncertain-moments"):
        mom = ref.moments() if isinstance(ref, GaussianSpec) else ref
        rows, rhs = [np.ones(n)], [1.0]
        rows += list(G.T)
        rhs += list(mom.mean)
        d = G.shape[1]
        if fam == "chebyshev":
            for a in range(d):
                for b in range(a, d):
                    rows.append(G[:, a] * G[:, b])
                    rhs.append(mom.second[a, b])
            val, p = _grid_lp(lv, np.array(rows), np.array(rhs))
        elif fam == "chebyshev-uncertain-moments" and d > 1:
            p = cp.Variable(n, nonneg=True)
            M = sum(p[k] * np.outer(g, g) for k, g in enumerate(G)) if n < 2000 else G.T @ cp.diag(p) @ G
            prob = cp.Problem(cp.Maximize(lv @ p), [np.array(rows) @ p == np.array(rhs), mom.second - M >> 0])
            val, p = _cvx_value(prob), p.value
        else:
            A_ub = b_ub = None
            if fam == "chebyshev-uncertain-moments":
                A_ub, b_ub = (G[:, 0] ** 2).reshape(1, -1), [mom.second[0, 0]]
            val, p = _grid_lp(lv, np.array(rows), np.array(rhs), A_ub, b_ub)
        dist = DiscreteDistribution.normalized(G, np.clip(p, 0, None))
    elif fam == "gelbrich":
        val = _grid_gelbrich(G, lv, ref, r)
    elif fam in ("phi-divergence", "total-variation"):
        val = _grid_phi(loss, amb, G, lv)
    elif fam in ("wasserstein-p", "ot-custom", "levy-prokhorov"):
        val, dist = _grid_transport(amb, G, lv)
    elif fam == "wasserstein-inf":
        D = distance_matrix(ref.atoms, G, amb.norm)
        val = float(sum(w * lv[D[i] <= r + 1e-12].max() for i, w in enumerate(ref.probs)))
    else:
        raise InvalidInput(f"grid oracle does not cover the {fam!r} family")
    return GridOracleResult(val, n, (lo, hi), truncated, dist)


def _grid_gelbrich(G, lv, center, r):
    mom = center.moments() if isinstance(center, GaussianSpec) else center
    mh, S = mom.mean, mom.cov
    d = G.shape[1]
    n = G.shape[0]
    p = cp.Variable(n, nonneg=True)
    mu = G.T @ p
    M = G.T @ cp.diag(p) @ G if n > 1 else cp.reshape(p[0] * np.outer(G[0], G[0]), (d, d), order="F")
    U = cp.Variable((d, d), symmetric=True)
    C = cp.Variable((d, d))
    cons = [cp.sum(p) == 1,
            cp.bmat([[M - U, C], [C.T, S]]) >> 0,
            cp.bmat([[U, cp.reshape(mu, (d, 1), order="F")], [cp.reshape(mu, (1, d), order="F"), np.ones((1, 1))]]) >> 0,
            float(mh @ mh) - 2 * mu @ mh + cp.trace(M + S - 2 * C) <= r**2]
    return _cvx_value(cp.Problem(cp.Maximize(lv @ p), cons))


def _grid_phi(loss, amb: AmbiguitySpec, G, lv):
    ref = amb.reference
    if not isinstance(ref, DiscreteDistribution):
        raise InvalidInput("grid oracle needs a discrete reference for phi-divergence sets")
    fam = family("total-variation") if amb.family == "total-variation" else family(amb.phi, amb.cr_beta)
    phat = np.asarray(ref.probs)
    la = loss.values(ref.atoms)
    slope = recession_slope(fam)
    q = cp.Variable(phat.size, nonneg=True)
    budget = _phi_budget(fam, q, phat)
    obj = la @ q
    mass = cp.sum(q)
    if not amb.restricted and math.isfinite(slope):
        # escaping mass costs slope per unit wherever it goes, so the grid argmax is optimal
        q0 = cp.Variable(nonneg=True)
        budget = budget + slope * q0
        obj = obj + float(lv.max()) * q0
        mass = mass + q0
    return _cvx_value(cp.Problem(cp.Maximize(obj), [budget <= amb.radius, mass == 1]))


def _grid_transport(amb: AmbiguitySpec, G, lv):
    ref = amb.reference
    N, n = ref.size, G.shape[0]
    if amb.family == "wasserstein-p":
        C = distance_matrix(ref.atoms, G, amb.norm) ** float(amb.p)
        budget = amb.radius ** float(amb.p)
    elif amb.family == "levy-prokhorov":
        C = (distance_matrix(ref.atoms, G, amb.norm) > amb.radius + 1e-12).astype(float)
        budget = amb.radius
    else:
        cost = amb.cost if isinstance(amb.cost, TransportCost) else TransportCost(**(amb.cost or {}))
        if cost.kind == "custom-matrix":
            raise InvalidInput("custom cost matrices have no grid extension")
        C = cost.matrix_for(ref.atoms, G)
        budget = amb.radius
    # variables gamma[i, k], row-major
    A_eq = np.kron(np.eye(N), np.ones((1, n)))
    A_ub = C.reshape(1, -1)
    val, g = _grid_lp(np.tile(lv, N), A_eq, np.asarray(ref.probs), A_ub, [budget])
    w = np.clip(g.reshape(N, n).sum(axis=0), 0, None)
    keep = w > 1e-12
    return val, DiscreteDistribution.normalized(G[keep], w[keep])


def _grid_cvar(loss, amb, resolution, beta, box):
    f = lambda tau: tau + grid_oracle(loss.shift_scale(tau, 1.0 / beta), amb, resolution, box=box).value
    lo, hi, _ = truncation_box(amb, loss) if box is None else (*box, True)
    G = make_grid(lo, hi, min(resolution, 2001), amb.support)
    lv = loss.values(G)
    tau, val = golden_min(f, float(lv.min()), float(lv.max()), tol=1e-8)
    base = grid_oracle(loss, amb, resolution, box=box)
    return GridOracleResult(val, base.grid_size, base.box, base.truncated)


# ---------------------------------------------------------------------------
# Taylor slopes
# ---------------------------------------------------------------------------


@dataclass
class TaylorReport:
    slope: float
    expected: float
    rel_error: float
    passed: bool
    radii: list
    increments: list


def _active_gradients(loss: PiecewiseLoss, Z) -> list:
    out = []
    for z in Z:
        vals = loss.piece_values(z)
        out.append(loss.pieces[int(np.argmax(vals))].gradient(z))
    return out


def taylor_check(loss: PiecewiseLoss, P: DiscreteDistribution, kind: str, radii: Sequence[float],
                 phi: str = "pearson-chi2", cr_beta: float = None, p: float = 2.0, norm=2,
                 support: SupportSet = None, rtol: float = 0.05,
                 evaluate: Callable = None) -> TaylorReport:
    """Fit the first-order growth of the worst-case expectation at small radii.

    kind "phi-smooth": (wc(r) - nominal) against sqrt(r), expected sqrt(Var).
    The family is evaluated at radius (phi''(1) / 2) r so that every smooth
    family shares the chi-square normalization.
    kind "wasserstein-p": (wc(r) - nominal) against r, expected
    E[|grad l|_*^q]^(1/q) with 1/p + 1/q = 1 (the max over atoms for p = 1).
    """
    support = support or SupportSet.reals(loss.dim)
    vals = loss.values(P.atoms)
    nominal = float(P.probs @ vals)
    radii = [float(r) for r in radii]
    if kind == "phi-smooth":
        fam = family(phi, cr_beta)
        c2 = second_derivative_at_one(fam)
        if math.isnan(c2):
            raise InvalidInput("the total variation entropy is not smooth at 1")
        expected = math.sqrt(float(P.probs @ (vals - nominal) ** 2))
        amb_of = lambda r: AmbiguitySpec("phi-divergence", support, P, c2 / 2 * r, phi=fam.tag, cr_beta=fam.beta)
        xs = np.sqrt(radii)
    elif kind == "wasserstein-p":
        grads = np.array([dual_norm(g, norm) for g in _active_gradients(loss, P.atoms)])
        if p == 1:
            expected = float(grads.max())
        else:
            q = p / (p - 1.0)
            expected = float(P.probs @ grads**q) ** (1.0 / q)
        amb_of = lambda r: AmbiguitySpec("wasserstein-p", support, P, r, p=p, norm=norm)
        xs = np.asarray(radii)
    else:
        raise InvalidInput(f"unknown Taylor family {kind!r}")
    evaluate = evaluate or (lambda amb: worst_case(amb, loss).value)
    inc = np.array([evaluate(amb_of(r)) - nominal for r in radii])
    slope = float(xs @ inc / (xs @ xs))
    rel = abs(slope - expected) / max(abs(expected), 1e-300)
    return TaylorReport(slope, expected, rel, rel <= rtol, radii, inc.tolist())


# ---------------------------------------------------------------------------
# regularization bounds
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    kind: str
    bound: float
    exact: float
    margin: float
    passed: bool


def bound_check(kind: str, loss: PiecewiseLoss, P: DiscreteDistribution, r: float, p: int = 2, norm=2,
                risk: Optional[RiskSpec] = None, support: SupportSet = None, exact: float = None,
                tol: float = 1e-8) -> BoundReport:
    """Compare a regularization bound with the exact worst case (margin = bound - exact)."""
    support = support or SupportSet.reals(loss.dim)
    bound = regularization_bounds(loss, P, r, kind, p=p, norm=norm, risk=risk)
    if exact is None:
        if kind == "chi2-variance":
            amb = AmbiguitySpec("phi-divergence", support, P, r, phi="pearson-chi2")
            exact = worst_case(amb, loss).value
        elif kind == "w1-lipschitz-ub":
            exact = worst_case(AmbiguitySpec("wasserstein-p", support, P, r, p=1, norm=norm), loss).value
        elif kind == "wp-variation":
            exact = worst_case(AmbiguitySpec("wasserstein-p", support, P, r, p=p, norm=norm), loss).value
        elif kind == "risk-lipschitz":
            amb = AmbiguitySpec("wasserstein-p", support, P, r, p=p, norm=norm)
            exact = worst_case(amb, loss, risk=risk).value
        else:
            raise InvalidInput(f"unknown bound kind {kind!r}")
    margin = bound - exact
    return BoundReport(kind, float(bound), float(exact), float(margin), bool(margin >= -tol))


# ---------------------------------------------------------------------------
# statistical guarantees
# ---------------------------------------------------------------------------


def radius_calibration(d: int, N: int, eta: float, alpha: float, c1: float, c2: float, p: float,
                       A: float = None) -> float:
    """Radius making a p-Wasserstein ball around N samples a (1 - eta)-confidence set.

    A enters only through the constants c1, c2, which must be supplied.
    """
    if c1 is None or c2 is None or not (c1 > 0 and c2 > 0):
        raise InvalidInput("constants c1 and c2 must be positive and are required")
    if not 0 < eta <= 1:
        raise InvalidInput("eta must lie in (0, 1]")
    if N < 1 or d < 1:
        raise InvalidInput("N and d must be positive")
    if p == d / 2:
        raise InvalidInput("the case p = d / 2 is not covered")
    if not alpha > p:
        raise InvalidInput("light-tail exponent alpha must exceed p")
    t = math.log(c1 / eta) / c2
    if t <= 0:
        return 0.0
    if N >= t:
        return (t / N) ** min(1.0 / d, 0.5)
    return (t / N) ** (1.0 / alpha)


def _ci(k: int, n: int) -> list:
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95)
    return [float(ci.low), float(ci.high)]


def trial_rngs(seed: int, trials: int) -> list:
    """Independent counter-based generators, one per trial index."""
    children = np.random.SeedSequence(seed).spawn(trials)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def distance_to(amb_family: str, P0: DiscreteDistribution, Phat: DiscreteDistribution, p: float = 1.0,
                norm=2, phi: str = None, cr_beta: float = None) -> float:
    if amb_family == "wasserstein-p":
        return wasserstein_p(P0, Phat, p, norm)
    if amb_family == "wasserstein-inf":
        return wasserstein_inf(P0, Phat, norm)
    if amb_family == "total-variation":
        return total_variation(P0, Phat)
    if amb_family == "levy-prokhorov":
        return levy_prokhorov(P0, Phat, norm)
    if amb_family == "phi-divergence":
        return phi_divergence(family(phi, cr_beta), P0, Phat)
    raise InvalidInput(f"no distance for the {amb_family!r} family")


@dataclass
class DisappointmentReport:
    coverage: float
    coverage_ci: list
    containment: float
    containment_ci: list
    trials: int
    rows: list = field(default_factory=list)


def disappointment_mc(P0: DiscreteDistribution, loss: PiecewiseLoss, amb_family: str, radius, N: int,
                      trials: int, seed: int, support: SupportSet = None, decisions=None, p: float = 1.0,
                      norm=2, phi: str = None, cr_beta: float = None, csv_path: str = None,
                      method: str = "cutting-plane") -> DisappointmentReport:
    """Frequency over trials of E_P0[l(x_N)] <= certified DRO value, and of P0 in the ball.

    radius is a number, "exact" (the distance from P0 to the sample, so the
    ball always contains P0), or a callable (Phat, P0) -> r. For coupled
    losses, decisions is either a DecisionSet (solved by solve_dro) or an
    array of candidate decisions (exhaustive search).
    """
    support = support or SupportSet.reals(P0.dim)
    rows, covered, contained = [], 0, 0
    for t, rng in enumerate(trial_rngs(seed, trials)):
        idx = rng.choice(P0.size, size=N, p=P0.probs)
        Phat = empirical_from_samples(P0.atoms[idx])
        dist = distance_to(amb_family, P0, Phat, p, norm, phi, cr_beta)
        if isinstance(radius, str) and radius == "exact":
            r = dist
        elif callable(radius):
            r = float(radius(Phat, P0))
        else:
            r = float(radius)
        amb = AmbiguitySpec(amb_family, support, Phat, r, phi=phi, cr_beta=cr_beta, p=p, norm=norm)
        if not loss.is_coupled:
            x, value = None, worst_case(amb, loss).value
            true = float(P0.probs @ loss.values(P0.atoms))
        else:
            x, value = _dro_decision(loss, amb, decisions, method)
            true = float(P0.probs @ loss.at(x).values(P0.atoms))
        ok = true <= value + 1e-9
        inside = dist <= r + 1e-12
        covered += ok
        contained += inside
        rows.append([t, r, value, true, int(ok), int(inside)])
    if csv_path:
        _write_csv(csv_path, ["trial", "radius", "value", "true_value", "covered", "contained"], rows)
    return DisappointmentReport(covered / trials, _ci(covered, trials), contained / trials,
                                _ci(contained, trials), trials, rows)


def _dro_decision(loss, amb, decisions, method):
    if isinstance(decisions, DecisionSet):
        rep = solve_dro(DroProblem(loss, amb, decisions), method)
        return rep.x, rep.objective
    cands = np.atleast_2d(np.asarray(decisions, dtype=float))
    if cands.shape[1] != loss.decision_dim:
        cands = cands.T
    vals = [worst_case(amb, loss, x).value for x in cands]
    k = int(np.argmin(vals))
    return cands[k], float(vals[k])


@dataclass(frozen=True)
class ScenarioInstance:
    """min c'y over lower <= y <= upper subject to a(z)'y <= b(z) for sampled z.

    rows(z) returns (a, b) with a of shape (m, d_y); sampler(rng, n) draws n
    realizations as rows.
    """

    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rows: Callable
    sampler: Callable
    batch_rows: Optional[Callable] = None

    @property
    def dim(self) -> int:
        return len(self.c)

    def violation_rate(self, y, Z) -> float:
        if self.batch_rows is not None:
            a, b = self.batch_rows(Z)
        else:
            pairs = [self.rows(z) for z in Z]
            a = np.stack([np.atleast_2d(p[0]) for p in pairs])
            b = np.stack([np.atleast_1d(p[1]) for p in pairs])
        return float(np.mean(np.any(np.einsum("nmk,k->nm", a, y) > b + 1e-12, axis=1)))


def toy_scenario_instance() -> ScenarioInstance:
    """max y s.t. y <= z for z ~ U[0, 1]; the scenario solution is min_i z_i."""
    return ScenarioInstance(np.array([-1.0]), np.array([0.0]), np.array([10.0]),
                            lambda z: (np.array([[1.0]]), np.array([z[0]])),
                            lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 1)),
                            lambda Z: (np.ones((len(Z), 1, 1)), np.asarray(Z)[:, :1]))


def scenario_program(inst: ScenarioInstance, Z, rng=None, perturb: float = 1e-9):
    """Solve the scenario LP; a tiny random objective tilt makes the solution unique."""
    A, b = [], []
    for z in Z:
        a, bb = inst.rows(z)
        A.append(np.atleast_2d(a))
        b.append(np.atleast_1d(bb))
    c = np.asarray(inst.c, dtype=float)
    if rng is not None and perturb > 0:
        c = c + perturb * rng.standard_normal(c.shape)
    res = linprog(c, A_ub=np.vstack(A), b_ub=np.concatenate(b), bounds=list(zip(inst.lower, inst.upper)),
                  method="highs")
    if res.status != 0:
        raise SolverFailure(f"scenario program failed: {res.message}")
    return res.x


@dataclass
class ScenarioMCReport:
    failure_rate: float
    threshold: float
    passed: bool
    N: int
    trials: int
    rows: list = field(default_factory=list)


def scenario_guarantee_mc(inst: ScenarioInstance, delta: float, eta: float, trials: int, seed: int,
                          N: int = None, fresh: int = 100000, csv_path: str = None) -> ScenarioMCReport:
    """Fraction of trials whose scenario solution violates the constraint with
    probability above delta (estimated on fresh samples)."""
    from .solve import scenario_sample_size

    if N is None:
        N = scenario_sample_size(inst.dim, delta, eta)
    rows, fails = [], 0
    for t, rng in enumerate(trial_rngs(seed, trials)):
        Z = inst.sampler(rng, N)
        y = scenario_program(inst, Z, rng)
        rate = inst.violation_rate(y, inst.sampler(rng, fresh))
        bad = rate > delta
        fails += bad
        rows.append([t, rate, int(bad)])
    if csv_path:
        _write_csv(csv_path, ["trial", "violation_probability", "failed"], rows)
    freq = fails / trials
    thr = eta + 2.0 * math.sqrt(eta * (1 - eta) / trials)
    return ScenarioMCReport(freq, thr, freq <= thr, int(N), trials, rows)


__all__ = ["grid_oracle", "taylor_check", "bound_check", "radius_calibration", "disappointment_mc",
           "scenario_guarantee_mc", "toy_scenario_instance", "ScenarioInstance", "truncation_box",
           "make_grid", "GridOracleResult", "TaylorReport", "BoundReport", "DisappointmentReport",
           "ScenarioMCReport"]
