"""Domain types shared by every drokit module.

Supports, reference distributions, piecewise quadratic losses, risk
specifications and ambiguity descriptors. All types are frozen after
construction and every helper here is a pure function.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


# ---------------------------------------------------------------------------
# errors and tolerances
# ---------------------------------------------------------------------------

class DroError(Exception):
    """Base class for drokit errors. `code` is the CLI exit status."""

    code = 1


class InvalidInput(DroError, ValueError):
    code = 4


class Infeasible(DroError):
    code = 2


class Unbounded(DroError):
    code = 3


class SolverFailure(DroError):
    code = 5


class TimeoutWithIncumbent(DroError):
    code = 6

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass
class Tolerances:
    feasibility: float = 1e-9
    probability: float = 1e-12
    psd: float = 1e-10
    moment: float = 1e-9


TOL = Tolerances()


def set_tolerances(**kwargs) -> Tolerances:
    """Override the global tolerance policy, returns the previous values."""
    old = Tolerances(**TOL.__dict__)
    for k, v in kwargs.items():
        if not hasattr(TOL, k):
            raise InvalidInput(f"unknown tolerance {k!r}")
        setattr(TOL, k, float(v))
    return old


def thread_limit() -> int:
    """Parallelism cap from DROKIT_THREADS (default 1)."""
    raw = os.environ.get("DROKIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInput(f"DROKIT_THREADS must be an integer, got {raw!r}")
    return max(1, n)


# ---------------------------------------------------------------------------
# extended reals
# ---------------------------------------------------------------------------

INF = math.inf


def ext_add(a: float, b: float, sense: str = "min") -> float:
    """a + b on the extended reals.

    inf - inf resolves to +inf in minimization contexts and -inf in
    maximization contexts (infeasibility trumps unboundedness).
    """
    if math.isinf(a) and math.isinf(b) and (a > 0) != (b > 0):
        return INF if sense == "min" else -INF
    return a + b


def ext_mul(a: float, b: float) -> float:
    """Product with the convention 0 * inf = 0."""
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


# ---------------------------------------------------------------------------
# linear algebra helpers
# ---------------------------------------------------------------------------

def as_vector(z, dim: Optional[int] = None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(z, dtype=float)).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise InvalidInput(f"expected a vector of length {dim}, got {v.shape[0]}")
    return v


def as_matrix(a, dim: Optional[int] = None) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise InvalidInput(f"expected a {dim}x{dim} matrix, got {m.shape}")
    return m


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def is_psd(a: np.ndarray, tol: float = None) -> bool:
    tol = TOL.psd if tol is None else tol
    if a.size == 0:
        return True
    return bool(np.linalg.eigvalsh(sym(a)).min() >= -tol * max(1.0, np.abs(a).max()))


def psd_clip(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(sym(a))
    return (v * np.clip(w, 0.0, None)) @ v.T


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalue clipping at zero."""
    w, v = np.linalg.eigh(sym(a))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def dual_norm_tag(norm) -> float:
    p = norm_order(norm)
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def norm_order(norm) -> float:
    if norm in (1, "1", "l1"):
        return 1.0
    if norm in (2, "2", "l2", None):
        return 2.0
    if norm in ("inf", "linf", math.inf, float("inf")):
        return math.inf
    try:
        p = float(norm)
    except (TypeError, ValueError):
        raise InvalidInput(f"unknown norm tag {norm!r}")
    if p < 1:
        raise InvalidInput(f"norm order must be >= 1, got {p}")
    return p


def vnorm(v, norm=2) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float).reshape(-1), ord=norm_order(norm)))


def dual_norm(v, norm=2) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=float).reshape(-1), ord=dual_norm_tag(norm)))


# ---------------------------------------------------------------------------
# supports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadForm:
    """z -> z'Qz + 2q'z + q0."""

    Q: np.ndarray
    q: np.ndarray
    q0: float = 0.0

    def __post_init__(self):
        q = as_vector(self.q)
        Q = as_matrix(self.Q, q.shape[0]) if np.size(self.Q) else np.zeros((q.shape[0], q.shape[0]))
        object.__setattr__(self, "Q", sym(Q))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q0", float(self.q0))

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @classmethod
    def affine(cls, a, b: float = 0.0) -> "QuadForm":
        a = as_vector(a)
        return cls(np.zeros((a.shape[0], a.shape[0])), a / 2.0, b)

    def __call__(self, z) -> float:
        z = as_vector(z, self.dim)
        return float(z @ self.Q @ z + 2.0 * self.q @ z + self.q0)

    def values(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        return np.einsum("ni,ij,nj->n", Z, self.Q, Z) + 2.0 * Z @ self.q + self.q0

    def gradient(self, z) -> np.ndarray:
        return 2.0 * self.Q @ as_vector(z, self.dim) + 2.0 * self.q

    @property
    def is_affine(self) -> bool:
        return not np.any(self.Q)

    @property
    def is_concave(self) -> bool:
        return self.is_affine or is_psd(-self.Q)

    @property
    def is_convex(self) -> bool:
        return self.is_affine or is_psd(self.Q)

    def shifted(self, c: float) -> "QuadForm":
        return QuadForm(self.Q, self.q, self.q0 + c)

    def scaled(self, s: float) -> "QuadForm":
        return QuadForm(s * self.Q, s * self.q, s * self.q0)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "q": self.q.tolist(), "q0": self.q0}


SUPPORT_KINDS = ("reals", "box", "ellipsoid", "simplex", "convex-quadratic-intersection")


@dataclass(frozen=True)
class SupportSet:
    kind: str
    dim: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None
    constraints: tuple = ()

    def __post_init__(self):
        if self.kind not in SUPPORT_KINDS:
            raise InvalidInput(f"unknown support kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidInput("support dimension must be positive")
        if self.kind == "box":
            lo, hi = as_vector(self.lower, self.dim), as_vector(self.upper, self.dim)
            if np.any(lo > hi):
                raise InvalidInput("box lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ellipsoid":
            c = as_vector(self.center, self.dim)
            Q0 = sym(as_matrix(self.shape, self.dim))
            if not is_psd(Q0):
                raise InvalidInput("ellipsoid shape matrix must be PSD")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "shape", Q0)
        elif self.kind == "convex-quadratic-intersection":
            cons = tuple(self.constraints)
            if not cons:
                raise InvalidInput("constraint list must be nonempty")
            for g in cons:
                if g.dim != self.dim:
                    raise InvalidInput("constraint dimension mismatch")
                if not g.is_convex:
                    raise InvalidInput("support constraints must be convex")
            object.__setattr__(self, "constraints", cons)

    # constructors
    @classmethod
    def reals(cls, dim: int) -> "SupportSet":
        return cls("reals", int(dim))

    @classmethod
    def box(cls, lower, upper) -> "SupportSet":
        lo = as_vector(lower)
        return cls("box", lo.shape[0], lower=lo, upper=as_vector(upper))

    @classmethod
    def interval(cls, a: float, b: float) -> "SupportSet":
        return cls.box([a], [b])

    @classmethod
    def ellipsoid(cls, center, shape) -> "SupportSet":
        c = as_vector(center)
        return cls("ellipsoid", c.shape[0], center=c, shape=shape)

    @classmethod
    def ball(cls, center, radius: float) -> "SupportSet":
        c = as_vector(center)
        return cls.ellipsoid(c, np.eye(c.shape[0]) / radius**2)

    @classmethod
    def simplex(cls, dim: int) -> "SupportSet":
        return cls("simplex", int(dim))

    @classmethod
    def intersection(cls, constraints: Sequence[QuadForm]) -> "SupportSet":
        cons = tuple(constraints)
        if not cons:
            raise InvalidInput("constraint list must be nonempty")
        return cls("convex-quadratic-intersection", cons[0].dim, constraints=cons)

    @property
    def is_compact(self) -> bool:
        if self.kind in ("box", "simplex"):
            return True
        if self.kind == "ellipsoid":
            return bool(np.linalg.eigvalsh(self.shape).min() > 0)
        if self.kind == "reals":
            return False
        try:
            lo, hi = self.bounding_box()
            return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
        except InvalidInput:
            return False

    def as_constraints(self) -> list:
        """Convex constraints g_k(z) <= 0 describing the set (empty for reals)."""
        d = self.dim
        if self.kind == "reals":
            return []
        if self.kind == "box":
            cons = []
            for i in range(d):
                e = np.zeros(d)
                e[i] = 1.0
                if np.isfinite(self.upper[i]):
                    cons.append(QuadForm.affine(e, -self.upper[i]))
                if np.isfinite(self.lower[i]):
                    cons.append(QuadForm.affine(-e, self.lower[i]))
            return cons
        if self.kind == "ellipsoid":
            Q0, z0 = self.shape, self.center
            return [QuadForm(Q0, -Q0 @ z0, float(z0 @ Q0 @ z0) - 1.0)]
        if self.kind == "simplex":
            cons = [QuadForm.affine(-np.eye(d)[i], 0.0) for i in range(d)]
            cons.append(QuadForm.affine(np.ones(d), -1.0))
            cons.append(QuadForm.affine(-np.ones(d), 1.0))
            return cons
        return list(self.constraints)

    def bounding_box(self):
        d = self.dim
        if self.kind == "reals":
            return np.full(d, -np.inf), np.full(d, np.inf)
        if self.kind == "box":
            return self.lower.copy(), self.upper.copy()
        if self.kind == "simplex":
            return np.zeros(d), np.ones(d)
        if self.kind == "ellipsoid":
            if not self.is_compact:
                return np.full(d, -np.inf), np.full(d, np.inf)
            half = np.sqrt(np.diag(np.linalg.inv(self.shape)))
            return self.center - half, self.center + half
        # intersection: bound each coordinate through a convex program
        import cvxpy as cp

        z = cp.Variable(d)
        cons = [quad_expr(g, z) <= 0 for g in self.constraints]
        lo, hi = np.empty(d), np.empty(d)
        for i in range(d):
            for sgn, out in ((1.0, lo), (-1.0, hi)):
                prob = cp.Problem(cp.Minimize(sgn * z[i]), cons)
                prob.solve(solver=cp.CLARABEL)
                if prob.status == "unbounded":
                    out[i] = -sgn * np.inf
                elif prob.status not in ("optimal", "optimal_inaccurate"):
                    raise InvalidInput("support set appears to be empty")
                else:
                    out[i] = sgn * prob.value
        return lo, hi

    def diameter(self, norm=2) -> float:
        lo, hi = self.bounding_box()
        return vnorm(hi - lo, norm)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            out.update(lower=self.lower.tolist(), upper=self.upper.tolist())
        elif self.kind == "ellipsoid":
            out.update(center=self.center.tolist(), shape=self.shape.tolist())
        elif self.kind == "convex-quadratic-intersection":
            out["constraints"] = [g.to_dict() for g in self.constraints]
        return out


def quad_expr(g: QuadForm, z):
    """cvxpy expression of a convex quadratic form."""
    import cvxpy as cp

    expr = 2.0 * g.q @ z + g.q0
    if np.any(g.Q):
        expr = expr + cp.quad_form(z, cp.psd_wrap(psd_clip(g.Q)))
    return expr


def contains(support: SupportSet, z, tol: float = None) -> bool:
    """Membership test with tolerance on each constraint."""
    tol = TOL.feasibility if tol is None else tol
    z = as_vector(z)
    if z.shape[0] != support.dim:
        raise InvalidInput(f"point of length {z.shape[0]} for a {support.dim}-dimensional support")
    if support.kind == "reals":
        return bool(np.all(np.isfinite(z)))
    if support.kind == "box":
        return bool(np.all(z >= support.lower - tol) and np.all(z <= support.upper + tol))
    if support.kind == "simplex":
        return bool(np.all(z >= -tol) and abs(z.sum() - 1.0) <= tol)
    return all(g(z) <= tol for g in support.as_constraints())


# ---------------------------------------------------------------------------
# distributions and moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteDistribution:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if atoms.shape[0] != probs.shape[0]:
            raise InvalidInput("atoms and probs have different lengths")
        if probs.size == 0:
            raise InvalidInput("distribution needs at least one atom")
        if np.any(probs < -TOL.probability) or not np.all(np.isfinite(probs)):
            raise InvalidInput("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > max(TOL.probability, 1e-12 * probs.size):
            raise InvalidInput(f"probabilities sum to {probs.sum()!r}, not 1")
        keep = probs > 0
        atoms, probs = atoms[keep], probs[keep]
        atoms, probs = _merge_atoms(atoms, probs)
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def normalized(cls, atoms, probs) -> "DiscreteDistribution":
        """Clip tiny negative weights from solvers and renormalize."""
        p = np.clip(np.asarray(probs, dtype=float).reshape(-1), 0.0, None)
        p[p < 1e-14 * max(p.max(initial=0.0), 1.0)] = 0.0
        if p.sum() <= 0:
            raise InvalidInput("no positive probability mass")
        return cls(atoms, p / p.sum())

    @classmethod
    def dirac(cls, z) -> "DiscreteDistribution":
        return cls(as_vector(z).reshape(1, -1), [1.0])

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def mean(self) -> np.ndarray:
        return self.probs @ self.atoms

    def second_moment(self) -> np.ndarray:
        return (self.atoms * self.probs[:, None]).T @ self.atoms

    def covariance(self) -> np.ndarray:
        m = self.mean()
        return self.second_moment() - np.outer(m, m)

    def moments(self) -> "MomentPair":
        return MomentPair(self.mean(), self.second_moment())

    def expect(self, f) -> float:
        return float(sum(p * f(z) for z, p in zip(self.atoms, self.probs)))

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


def _merge_atoms(atoms: np.ndarray, probs: np.ndarray):
    """Merge duplicate atoms (exact equality) keeping first-seen order."""
    if atoms.shape[0] <= 1:
        return atoms.copy(), probs.copy()
    _, first, inverse = np.unique(atoms, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    if first.shape[0] == atoms.shape[0]:
        return atoms.copy(), probs.copy()
    merged = np.zeros(first.shape[0])
    np.add.at(merged, inverse, probs)
    order = np.argsort(first)
    return atoms[first[order]].copy(), merged[order]


def empirical_from_samples(samples) -> DiscreteDistribution:
    """Uniform weights over the samples, duplicates merged."""
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise InvalidInput("need at least one sample")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    n = arr.shape[0]
    return DiscreteDistribution(arr, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = as_vector(self.mean)
        S = sym(as_matrix(self.cov, mu.shape[0]))
        w, v = np.linalg.eigh(S)
        if w.min() < -1e-10:
            raise InvalidInput("covariance must be PSD")
        S = (v * np.clip(w, 0.0, None)) @ v.T
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", S)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def moments(self) -> "MomentPair":
        return MomentPair(self.mean, self.cov + np.outer(self.mean, self.mean))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}


@dataclass(frozen=True)
class MomentPair:
    mean: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        mu = as_vector(self.mean)
        M = sym(as_matrix(self.second, mu.shape[0]))
        S = M - np.outer(mu, mu)
        if np.linalg.eigvalsh(S).min() < -TOL.moment * max(1.0, np.abs(M).max()):
            raise InvalidInput("second-moment matrix must dominate mean outer product")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "second", M)

    @classmethod
    def from_cov(cls, mean, cov) -> "MomentPair":
        mu = as_vector(mean)
        return cls(mu, as_matrix(cov, mu.shape[0]) + np.outer(mu, mu))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cov(self) -> np.ndarray:
        return sym(self.second - np.outer(self.mean, self.mean))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "second": self.second.tolist()}


def as_mean_cov(obj):
    if isinstance(obj, GaussianSpec):
        return obj.mean, obj.cov
    if isinstance(obj, MomentPair):
        return obj.mean, obj.cov
    raise InvalidInput(f"expected GaussianSpec or MomentPair, got {type(obj).__name__}")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiAffinePiece:
    """(x, z) -> x'Az + b'x + c'z + d."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        b, c = as_vector(self.b), as_vector(self.c)
        A = np.asarray(self.A, dtype=float).reshape(b.shape[0], c.shape[0])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    def at(self, x) -> QuadForm:
        x = as_vector(x, self.b.shape[0])
        return QuadForm.affine(self.A.T @ x + self.c, float(self.b @ x + self.d))

    def __call__(self, x, z) -> float:
        x, z = as_vector(x), as_vector(z)
        return float(x @ self.A @ z + self.b @ x + self.c @ z + self.d)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "c": self.c.tolist(), "d": self.d}


PIECE_CLASSES = ("general-quadratic", "affine", "concave-quadratic")


@dataclass(frozen=True)
class PiecewiseLoss:
    """Pointwise maximum of quadratic pieces, or of bi-affine (x, z) pieces."""

    pieces: tuple = ()
    coupled: tuple = ()
    piece_class: Optional[str] = None

    def __post_init__(self):
        pieces, coupled = tuple(self.pieces), tuple(self.coupled)
        if not pieces and not coupled:
            raise InvalidInput("loss needs at least one piece")
        if pieces and coupled:
            raise InvalidInput("mix of decision-free and coupled pieces is not supported")
        dims = {p.dim for p in pieces} | {p.c.shape[0] for p in coupled}
        if len(dims) != 1:
            raise InvalidInput("pieces have inconsistent dimensions")
        if coupled and len({p.b.shape[0] for p in coupled}) != 1:
            raise InvalidInput("coupled pieces have inconsistent decision dimensions")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "coupled", coupled)
        detected = self._detect_class()
        if self.piece_class is None:
            object.__setattr__(self, "piece_class", detected)
        else:
            if self.piece_class not in PIECE_CLASSES:
                raise InvalidInput(f"unknown piece class {self.piece_class!r}")
            if self.piece_class == "affine" and detected != "affine":
                raise InvalidInput("affine pieces must have Q = 0")
            if self.piece_class == "concave-quadratic" and detected == "general-quadratic":
                raise InvalidInput("concave-quadratic pieces must have Q <= 0")

    def _detect_class(self) -> str:
        if self.coupled or all(p.is_affine for p in self.pieces):
            return "affine"
        if all(p.is_concave for p in self.pieces):
            return "concave-quadratic"
        return "general-quadratic"

    @classmethod
    def affine(cls, slopes, intercepts) -> "PiecewiseLoss":
        """max_j a_j'z + b_j from a list of slope vectors and intercepts."""
        slopes = [as_vector(a) for a in slopes]
        return cls(tuple(QuadForm.affine(a, b) for a, b in zip(slopes, intercepts)))

    @classmethod
    def quadratic(cls, Q, q, q0=0.0) -> "PiecewiseLoss":
        return cls((QuadForm(Q, q, q0),))

    @property
    def dim(self) -> int:
        return self.pieces[0].dim if self.pieces else self.coupled[0].c.shape[0]

    @property
    def decision_dim(self) -> int:
        return self.coupled[0].b.shape[0] if self.coupled else 0

    @property
    def is_coupled(self) -> bool:
        return bool(self.coupled)

    @property
    def is_convex(self) -> bool:
        return all(p.is_convex for p in self.pieces)

    @property
    def is_concave(self) -> bool:
        return len(self.pieces) == 1 and self.pieces[0].is_concave

    @property
    def is_affine(self) -> bool:
        return all(p.is_affine for p in self.pieces)

    def at(self, x) -> "PiecewiseLoss":
        """Decision-free loss z -> l(x, z)."""
        if not self.coupled:
            if x is not None:
                raise InvalidInput("loss has no decision coupling")
            return self
        if x is None:
            raise InvalidInput("loss needs a decision x")
        return PiecewiseLoss(tuple(p.at(x) for p in self.coupled))

    def piece_values(self, z) -> np.ndarray:
        return np.array([p(z) for p in self.pieces])

    def values(self, Z) -> np.ndarray:
        """Vectorized loss on the rows of Z."""
        Z = np.asarray(Z, dtype=float).reshape(-1, self.dim)
        return np.max(np.stack([p.values(Z) for p in self.pieces]), axis=0)

    def __call__(self, z) -> float:
        return evaluate_loss(self, z)

    def lipschitz(self, norm=2) -> float:
        """Lipschitz modulus on R^d (finite only for affine pieces)."""
        if not self.is_affine:
            return math.inf
        return max(dual_norm(2.0 * p.q, norm) for p in self.pieces)

    def shift_scale(self, tau: float, scale: float) -> "PiecewiseLoss":
        """z -> max{scale * (l(z) - tau), 0}."""
        pieces = tuple(p.shifted(-tau).scaled(scale) for p in self.pieces)
        zero = QuadForm.affine(np.zeros(self.dim), 0.0)
        return PiecewiseLoss(pieces + (zero,))

    def to_dict(self) -> dict:
        if self.coupled:
            return {"coupled": [p.to_dict() for p in self.coupled]}
        return {"pieces": [p.to_dict() for p in self.pieces]}


def evaluate_loss(loss: PiecewiseLoss, z, x=None) -> float:
    """Max over pieces at z (and x for coupled losses)."""
    z = as_vector(z)
    if z.shape[0] != loss.dim:
        raise InvalidInput(f"z has length {z.shape[0]}, loss expects {loss.dim}")
    if loss.is_coupled:
        if x is None:
            raise InvalidInput("loss has decision coupling, x is required")
        x = as_vector(x)
        if x.shape[0] != loss.decision_dim:
            raise InvalidInput("decision dimension mismatch")
        return max(p(x, z) for p in loss.coupled)
    if x is not None:
        raise InvalidInput("loss has no decision coupling")
    return max(p(z) for p in loss.pieces)


# ---------------------------------------------------------------------------
# risk and ambiguity specifications
# ---------------------------------------------------------------------------

RISK_KINDS = ("expectation", "var", "cvar", "spectral")


@dataclass(frozen=True)
class RiskSpec:
    kind: str = "expectation"
    level: Optional[float] = None
    levels: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in RISK_KINDS:
            raise InvalidInput(f"unknown risk kind {self.kind!r}")
        if self.kind in ("var", "cvar"):
            if self.level is None or not 0.0 < float(self.level) < 1.0:
                raise InvalidInput("risk level must lie in (0, 1)")
            object.__setattr__(self, "level", float(self.level))
        if self.kind == "spectral":
            lv = tuple(float(b) for b in self.levels)
            wt = tuple(float(w) for w in self.weights)
            if not lv or len(lv) != len(wt):
                raise InvalidInput("spectral risk needs matching levels and weights")
            if any(b <= 0 or b > 1 for b in lv):
                raise InvalidInput("spectral levels must lie in (0, 1]")
            if any(w < 0 for w in wt) or abs(sum(wt) - 1.0) > 1e-12:
                raise InvalidInput("spectral weights must be nonnegative and sum to 1")
            object.__setattr__(self, "levels", lv)
            object.__setattr__(self, "weights", wt)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.level is not None:
            out["level"] = self.level
        if self.levels:
            out.update(levels=list(self.levels), weights=list(self.weights))
        return out


FAMILIES = (
    "support-only", "markov", "chebyshev", "chebyshev-uncertain-moments", "gelbrich",
    "phi-divergence", "wasserstein-p", "wasserstein-inf", "levy-prokhorov",
    "total-variation", "ot-custom",
)

Reference = Union[DiscreteDistribution, GaussianSpec, MomentPair, None]


@dataclass(frozen=True)
class AmbiguitySpec:
    family: str
    support: SupportSet
    reference: Reference = None
    radius: float = 0.0
    phi: Optional[str] = None
    cr_beta: Optional[float] = None
    restricted: bool = False
    norm: object = 2
    p: float = 1.0
    cost: object = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown ambiguity family {self.family!r}")
        r = float(self.radius)
        if not r >= 0:
            raise InvalidInput("radius must be nonnegative")
        object.__setattr__(self, "radius", r)
        norm_order(self.norm)
        ref = self.reference
        fam = self.family
        if fam in ("gelbrich",) and not isinstance(ref, (GaussianSpec, MomentPair)):
            raise InvalidInput("gelbrich sets need a GaussianSpec or MomentPair center")
        if fam in ("markov", "chebyshev", "chebyshev-uncertain-moments") and not isinstance(ref, (MomentPair, GaussianSpec)):
            raise InvalidInput(f"{fam} sets need moment information")
        if fam in ("wasserstein-p", "wasserstein-inf", "levy-prokhorov", "total-variation", "ot-custom") \
                and not isinstance(ref, DiscreteDistribution):
            raise InvalidInput(f"{fam} sets need a discrete reference distribution")
        if fam == "phi-divergence":
            if self.phi is None:
                raise InvalidInput("phi-divergence sets need an entropy family tag")
            if not isinstance(ref, (DiscreteDistribution, GaussianSpec)):
                raise InvalidInput("phi-divergence sets need a discrete or Gaussian reference")
        if fam == "wasserstein-p" and float(self.p) < 1:
            raise InvalidInput("Wasserstein order must be >= 1")
        if fam in ("total-variation", "levy-prokhorov") and r > 1:
            raise InvalidInput("radius of TV and Levy-Prokhorov balls is at most 1")
        if isinstance(ref, DiscreteDistribution):
            if ref.dim != self.support.dim:
                raise InvalidInput("reference and support dimensions differ")
            for z in ref.atoms:
                if not contains(self.support, z, tol=1e-7):
                    raise InvalidInput(f"reference atom {z.tolist()} lies outside the support")
        elif ref is not None and ref.dim != self.support.dim:
            raise InvalidInput("reference and support dimensions differ")

    @property
    def dim(self) -> int:
        return self.support.dim

    def with_radius(self, r: float) -> "AmbiguitySpec":
        kw = dict(self.__dict__)
        kw["radius"] = r
        return AmbiguitySpec(**kw)


# ---------------------------------------------------------------------------
# scalar risk helpers
# ---------------------------------------------------------------------------

def value_at_risk(values, probs, beta: float) -> float:
    """Leftmost (1 - beta)-quantile: inf{tau : P(l <= tau) >= 1 - beta}."""
    v = np.asarray(values, dtype=float).reshape(-1)
    p = np.asarray(probs, dtype=float).reshape(-1)
    order = np.argsort(v, kind="stable")
    v, p = v[order], p[order]
    cum = np.cumsum(p)
    k = int(np.searchsorted(cum, 1.0 - beta - 1e-15, side="left"))
    return float(v[min(k, v.size - 1)])


def cvar(values, probs, beta: float) -> float:
    """beta-CVaR (beta = tail mass) of a discrete loss, sorted-tail formula."""
    if not 0.0 < beta <= 1.0:
        raise InvalidInput("CVaR level must lie in (0, 1]")
    v = np.asarray(values, dtype=float).reshape(-1)
    p = np.asarray(probs, dtype=float).reshape(-1)
    order = np.argsort(-v, kind="stable")
    v, p = v[order], p[order]
    total, mass = 0.0, 0.0
    for vi, pi in zip(v, p):
        take = min(pi, beta - mass)
        if take <= 0:
            break
        total += take * vi
        mass += take
    return float(total / beta)


def cvar_tail_weights(values, probs, beta: float) -> np.ndarray:
    """Weights w with sum(w) = 1 such that CVaR = sum(w * values)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    p = np.asarray(probs, dtype=float).reshape(-1)
    order = np.argsort(-v, kind="stable")
    w = np.zeros_like(p)
    mass = 0.0
    for i in order:
        take = min(p[i], beta - mass)
        if take <= 0:
            break
        w[i] = take
        mass += take
    return w / beta


def spectral_risk(values, probs, risk: RiskSpec) -> float:
    if risk.kind == "expectation":
        return float(np.dot(values, probs))
    if risk.kind == "cvar":
        return cvar(values, probs, risk.level)
    if risk.kind == "var":
        return value_at_risk(values, probs, risk.level)
    return float(sum(w * cvar(values, probs, b) for b, w in zip(risk.levels, risk.weights)))
