"""Global maximization of quadratic pieces over the supported set shapes,
plus small scalar search routines."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import (INF, InvalidInput, PiecewiseLoss, QuadForm, SupportSet, contains, norm_order,
                   quad_expr)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# scalar searches
# ---------------------------------------------------------------------------

def golden_min(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 300):
    """Golden-section minimization of a convex function on [a, b]."""
    if b < a:
        a, b = b, a
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fx, x = min(cands, key=lambda t: t[0])
    return x, fx


def bracket_convex(f, x0: float, step: float, lower: float = -INF, max_doublings: int = 200):
    """Expand an interval around x0 until a convex f increases on both sides."""
    step = max(abs(step), 1e-8)
    lo, hi = x0 - step, x0 + step
    lo = max(lo, lower)
    f0 = f(x0)
    for _ in range(max_doublings):
        if f(hi) > f0 or math.isinf(f(hi)):
            break
        step *= 2.0
        hi = x0 + step
    step0 = abs(x0 - lo) if lo > -INF else step
    for _ in range(max_doublings):
        if lo <= lower or f(lo) > f0:
            break
        step0 *= 2.0
        lo = max(x0 - step0, lower)
    return lo, hi


# ---------------------------------------------------------------------------
# quadratic maximization
# ---------------------------------------------------------------------------

def _stationary(Q, q, free, fixed_vals, d):
    """Stationary point of z'Qz + 2q'z with some coordinates fixed."""
    z = np.zeros(d)
    fixed = [i for i in range(d) if i not in free]
    for i in fixed:
        z[i] = fixed_vals[i]
    if not free:
        return z
    F = list(free)
    A = Q[np.ix_(F, F)]
    rhs = -(q[F] + Q[np.ix_(F, fixed)] @ z[fixed]) if fixed else -q[F]
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.linalg.norm(A @ sol - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
        return None
    z[F] = sol
    return z


def max_quad_box(g: QuadForm, lo: np.ndarray, hi: np.ndarray):
    """Exact max of a quadratic over a box by enumerating faces (3^d)."""
    d = g.dim
    if g.is_affine:
        z = np.where(g.q >= 0, hi, lo)
        return g(z), z
    if d > 8:
        raise InvalidInput("exact box maximization is limited to d <= 8")
    best, arg = -INF, None
    for pattern in itertools.product((0, 1, 2), repeat=d):
        free = [i for i, s in enumerate(pattern) if s == 2]
        vals = {i: (lo[i] if s == 0 else hi[i]) for i, s in enumerate(pattern) if s != 2}
        z = _stationary(g.Q, g.q, free, vals, d)
        if z is None or np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12):
            continue
        v = g(z)
        if v > best + 1e-15 or (abs(v - best) <= 1e-15 and arg is not None and tuple(z) < tuple(arg)):
            best, arg = v, np.clip(z, lo, hi)
    return best, arg


def trust_region_max(A: np.ndarray, b: np.ndarray, c: float):
    """max u'Au + 2b'u + c over the unit ball (exact, eigen-based)."""
    d = b.shape[0]
    H = -A
    g = -b
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    gt = V.T @ g
    lam_min = w[0]

    def u_of(nu):
        return -V @ (gt / (w + nu))

    if lam_min > 1e-12:
        u = u_of(0.0)
        if np.linalg.norm(u) <= 1.0:
            return float(u @ A @ u + 2 * b @ u + c), u
    lo = max(0.0, -lam_min)
    near = np.abs(w - lam_min) <= 1e-10 * max(1.0, abs(lam_min))
    hard = np.all(np.abs(gt[near]) <= 1e-12 * max(1.0, np.linalg.norm(g)))
    if hard:
        mask = ~near
        u0 = -V[:, mask] @ (gt[mask] / (w[mask] + lo)) if np.any(mask) else np.zeros(d)
        nrm = np.linalg.norm(u0)
        if nrm <= 1.0:
            u = u0 + math.sqrt(max(1.0 - nrm**2, 0.0)) * V[:, np.argmax(near)]
            return float(u @ A @ u + 2 * b @ u + c), u
    # secular equation |u(nu)| = 1 on nu > lo
    a_, b_ = lo, lo + max(1.0, np.linalg.norm(g))
    while np.linalg.norm(u_of(b_)) > 1.0:
        b_ = lo + 2 * (b_ - lo)
    a_ = lo + 1e-300 if hard is False else lo
    for _ in range(200):
        mid = 0.5 * (a_ + b_)
        if mid <= lo:
            break
        if np.linalg.norm(u_of(mid)) > 1.0:
            a_ = mid
        else:
            b_ = mid
        if b_ - a_ <= 1e-15 * max(1.0, b_):
            break
    u = u_of(b_)
    u = u / max(np.linalg.norm(u), 1.0)
    return float(u @ A @ u + 2 * b @ u + c), u


def max_quad_ellipsoid(g: QuadForm, center: np.ndarray, shape: np.ndarray):
    """Max over {(z - z0)'Q0(z - z0) <= 1} with Q0 positive definite."""
    L = np.linalg.cholesky(shape)  # Q0 = L L'
    Linv_T = np.linalg.inv(L).T   # z = z0 + L^{-T} u
    A = Linv_T.T @ g.Q @ Linv_T
    b = Linv_T.T @ (g.Q @ center + g.q)
    c = g(center)
    val, u = trust_region_max(A, b, c)
    return val, center + Linv_T @ u


def max_quad_reals(g: QuadForm):
    w = np.linalg.eigvalsh(g.Q) if np.any(g.Q) else np.zeros(1)
    if w.max() > 1e-12:
        return INF, None
    z, *_ = np.linalg.lstsq(g.Q, -g.q, rcond=None)
    if np.linalg.norm(g.Q @ z + g.q) > 1e-9 * max(1.0, np.linalg.norm(g.q)):
        return INF, None
    return g(z), z


def max_quad_simplex(g: QuadForm):
    d = g.dim
    if d > 12:
        raise InvalidInput("exact simplex maximization is limited to d <= 12")
    best, arg = -INF, None
    for k in range(1, d + 1):
        for S in itertools.combinations(range(d), k):
            S = list(S)
            # stationary point on the affine hull of the face, via KKT
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = 2 * g.Q[np.ix_(S, S)]
            A[:k, k] = 1.0
            A[k, :k] = 1.0
            rhs = np.concatenate([-2 * g.q[S], [1.0]])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.linalg.norm(A @ sol - rhs) > 1e-9:
                continue
            z = np.zeros(d)
            z[S] = sol[:k]
            if np.any(z < -1e-12):
                continue
            z = np.clip(z, 0, None)
            z /= z.sum()
            v = g(z)
            if v > best + 1e-15:
                best, arg = v, z
    return best, arg


def max_quad_convex_set(g: QuadForm, constraints, x0=None):
    """Max over a convex set given by convex quadratic constraints.

    Exact when the piece is concave (convex program). Otherwise a
    deterministic multi-start local search, flagged heuristic.
    """
    import cvxpy as cp

    d = g.dim
    if g.is_concave:
        z = cp.Variable(d)
        obj = 2 * g.q @ z + g.q0
        if np.any(g.Q):
            obj = obj - cp.quad_form(z, cp.psd_wrap(-g.Q))
        prob = cp.Problem(cp.Maximize(obj), [quad_expr(c, z) <= 0 for c in constraints])
        prob.solve(solver=cp.CLARABEL)
        if prob.status == "unbounded":
            return INF, None, True
        if prob.status not in ("optimal", "optimal_inaccurate"):
            raise InvalidInput(f"support maximization failed ({prob.status})")
        return float(prob.value), np.asarray(z.value).reshape(-1), True
    from scipy.optimize import minimize

    rng = np.random.default_rng(0)
    cons = [{"type": "ineq", "fun": (lambda z, c=c: -c(z)), "jac": (lambda z, c=c: -c.gradient(z))}
            for c in constraints]
    start = np.zeros(d) if x0 is None else np.asarray(x0, float)
    best, arg = -INF, None
    for k in range(32):
        z0 = start + (rng.standard_normal(d) if k else 0.0)
        res = minimize(lambda z: -g(z), z0, jac=lambda z: -g.gradient(z), constraints=cons, method="SLSQP")
        if res.success and all(c(res.x) <= 1e-8 for c in constraints) and -res.fun > best:
            best, arg = -res.fun, res.x
    if arg is None:
        raise InvalidInput("could not maximize the piece over the support")
    return best, arg, False


def max_piece(g: QuadForm, support: SupportSet):
    """(value, maximizer, exact flag) of one quadratic piece over the support."""
    kind = support.kind
    if kind == "box":
        lo, hi = support.lower, support.upper
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            v, z = max_quad_box(g, lo, hi)
            return v, z, True
        return max_quad_convex_set(g, support.as_constraints()) if g.is_concave else (INF, None, True)
    if kind == "ellipsoid":
        if support.is_compact:
            v, z = max_quad_ellipsoid(g, support.center, support.shape)
            return v, z, True
        return max_quad_convex_set(g, support.as_constraints())
    if kind == "reals":
        v, z = max_quad_reals(g)
        return v, z, True
    if kind == "simplex":
        v, z = max_quad_simplex(g)
        return v, z, True
    return max_quad_convex_set(g, support.as_constraints())


def sup_loss(loss: PiecewiseLoss, support: SupportSet):
    """sup of a piecewise loss over the support: (value, argmax, exact).

    Ties between pieces resolve to the lexicographically smallest maximizer.
    """
    best, arg, exact = -INF, None, True
    for g in loss.pieces:
        v, z, ex = max_piece(g, support)
        exact = exact and ex
        if v > best + 1e-12 or (abs(v - best) <= 1e-12 and z is not None and arg is not None
                                and tuple(np.round(z, 12)) < tuple(np.round(arg, 12))):
            best, arg = v, z
    return best, arg, exact


def sup_loss_ball(loss: PiecewiseLoss, support: SupportSet, center, r: float, norm=2):
    """sup{l(z) : |z - center| <= r, z in support}: (value, argmax, exact)."""
    center = np.asarray(center, dtype=float).reshape(-1)
    d = center.shape[0]
    p = norm_order(norm)
    if r == 0:
        return loss(center), center.copy(), True
    # box-shaped balls (1-D, or the inf-norm) intersect boxes in boxes
    if (d == 1 or math.isinf(p)) and support.kind in ("box", "reals"):
        lo, hi = center - r, center + r
        if support.kind == "box":
            lo, hi = np.maximum(lo, support.lower), np.minimum(hi, support.upper)
        return sup_loss(loss, SupportSet.box(lo, hi))
    if p == 2 and (support.kind == "reals" or _ball_inside(support, center, r)):
        return sup_loss(loss, SupportSet.ball(center, r))
    # general case: convex constraints of the support plus the norm ball
    best, arg, exact = -INF, None, True
    for g in loss.pieces:
        v, z, ex = _max_piece_norm_ball(g, support, center, r, p)
        exact = exact and ex
        if v > best + 1e-12:
            best, arg = v, z
    return best, arg, exact


def _ball_inside(support: SupportSet, center, r) -> bool:
    if support.kind == "box":
        return bool(np.all(center - r >= support.lower - 1e-12) and np.all(center + r <= support.upper + 1e-12))
    return False


def _max_piece_norm_ball(g: QuadForm, support, center, r, p):
    import cvxpy as cp

    d = g.dim
    if g.is_concave:
        z = cp.Variable(d)
        obj = 2 * g.q @ z + g.q0
        if np.any(g.Q):
            obj = obj - cp.quad_form(z, cp.psd_wrap(-g.Q))
        cons = [quad_expr(c, z) <= 0 for c in support.as_constraints()]
        cons.append(cp.norm(z - center, p) <= r)
        prob = cp.Problem(cp.Maximize(obj), cons)
        prob.solve(solver=cp.CLARABEL)
        return float(prob.value), np.asarray(z.value).reshape(-1), True
    # convex piece: maximum sits at an extreme point; sample the boundary
    from scipy.optimize import minimize

    rng = np.random.default_rng(0)
    best, arg = -INF, None
    cons = [{"type": "ineq", "fun": (lambda z, c=c: -c(z))} for c in support.as_constraints()]
    cons.append({"type": "ineq", "fun": lambda z: r - np.linalg.norm(z - center, ord=p)})
    for k in range(32):
        z0 = center + (0.5 * r * rng.standard_normal(d) if k else 0.0)
        res = minimize(lambda z: -g(z), z0, constraints=cons, method="SLSQP")
        if res.success and -res.fun > best and contains(support, res.x, 1e-7):
            best, arg = -res.fun, res.x
    return best, arg, False
