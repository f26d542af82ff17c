"""Entropy functions, their conjugates and perspectives, and discrete
phi-divergences.

Conventions: phi(s) = +inf for s < 0, 0 * phi(s / 0) is the recession
function s * phi_inf(1), and the recession function of phi* is the support
function of [0, inf), i.e. 0 for t <= 0 and +inf for t > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import INF, DiscreteDistribution, InvalidInput

TAGS = ("kl", "likelihood", "total-variation", "pearson-chi2", "neyman-chi2",
        "cressie-read", "cressie-read-dual")

ALIASES = {
    "tv": "total-variation",
    "chi2": "pearson-chi2",
    "pearson": "pearson-chi2",
    "neyman": "neyman-chi2",
    "cr": "cressie-read",
    "burg": "likelihood",
}


@dataclass(frozen=True)
class EntropyFamily:
    tag: str
    beta: Optional[float] = None

    def __post_init__(self):
        tag = ALIASES.get(self.tag, self.tag)
        if tag not in TAGS:
            raise InvalidInput(f"unknown entropy family {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if tag.startswith("cressie-read"):
            if self.beta is None:
                raise InvalidInput("Cressie-Read needs a parameter beta")
            b = float(self.beta)
            if b <= 0 or b == 1:
                raise InvalidInput("Cressie-Read parameter must lie in (0,1) or (1,inf)")
            object.__setattr__(self, "beta", b)
        elif self.beta is not None:
            object.__setattr__(self, "beta", None)

    @property
    def exponent(self) -> Optional[float]:
        """Power in the Cressie-Read formula (1 - beta for the dual tag)."""
        if self.tag == "cressie-read":
            return self.beta
        if self.tag == "cressie-read-dual":
            return 1.0 - self.beta
        return None

    @property
    def name(self) -> str:
        return self.tag if self.beta is None else f"{self.tag}({self.beta:g})"


def family(tag, beta=None) -> EntropyFamily:
    if isinstance(tag, EntropyFamily):
        return tag
    return EntropyFamily(tag, beta)


# ---------------------------------------------------------------------------
# scalar functions
# ---------------------------------------------------------------------------

def _cr_value(g: float, s: float) -> float:
    if s == 0.0:
        return INF if g < 0 else 1.0 / g
    return (s**g - g * s + g - 1.0) / (g * (g - 1.0))


def entropy_value(fam: EntropyFamily, s: float) -> float:
    """phi(s), +inf outside the domain."""
    s = float(s)
    if s < 0:
        return INF
    t = fam.tag
    if t == "kl":
        return 1.0 if s == 0 else s * math.log(s) - s + 1.0
    if t == "likelihood":
        return INF if s == 0 else -math.log(s) + s - 1.0
    if t == "total-variation":
        return 0.5 * abs(s - 1.0)
    if t == "pearson-chi2":
        return (s - 1.0) ** 2
    if t == "neyman-chi2":
        return INF if s == 0 else (s - 1.0) ** 2 / s
    return _cr_value(fam.exponent, s)


def recession_slope(fam: EntropyFamily) -> float:
    """phi_inf(1) = lim phi(s) / s."""
    t = fam.tag
    if t in ("kl", "pearson-chi2"):
        return INF
    if t in ("likelihood", "neyman-chi2"):
        return 1.0
    if t == "total-variation":
        return 0.5
    g = fam.exponent
    return INF if g > 1 else 1.0 / (1.0 - g)


def phi_at_zero(fam: EntropyFamily) -> float:
    return entropy_value(fam, 0.0)


def second_derivative_at_one(fam: EntropyFamily) -> float:
    """phi''(1); the total variation entropy is not differentiable at 1."""
    t = fam.tag
    if t == "total-variation":
        return math.nan
    if t in ("pearson-chi2", "neyman-chi2"):
        return 2.0
    return 1.0


def conjugate_value(fam: EntropyFamily, t: float) -> float:
    """phi*(t) = sup_s s t - phi(s)."""
    t = float(t)
    tag = fam.tag
    if tag == "kl":
        return math.expm1(t) if t < 700 else INF
    if tag == "likelihood":
        return -math.log1p(-t) if t < 1 else INF
    if tag == "total-variation":
        return INF if t > 0.5 else max(t, -0.5)
    if tag == "pearson-chi2":
        return max(t / 2.0 + 1.0, 0.0) ** 2 - 1.0
    if tag == "neyman-chi2":
        return 2.0 - 2.0 * math.sqrt(1.0 - t) if t <= 1 else INF
    g = fam.exponent
    base = (g - 1.0) * t + 1.0
    if g > 1:
        if base <= 0:
            return -1.0 / g
        return (base ** (g / (g - 1.0)) - 1.0) / g
    # g < 1: domain t < 1/(1-g), closed at the boundary when g < 0
    if base < 0:
        return INF
    if base == 0:
        return INF if g > 0 else -1.0 / g
    return (base ** (g / (g - 1.0)) - 1.0) / g


def conjugate_derivative(fam: EntropyFamily, t: float) -> float:
    """(phi*)'(t) on the interior of the domain (a subgradient at kinks)."""
    tag = fam.tag
    if tag == "kl":
        return math.exp(t)
    if tag == "likelihood":
        return 1.0 / (1.0 - t)
    if tag == "total-variation":
        return 1.0 if t > -0.5 else 0.0
    if tag == "pearson-chi2":
        return max(t / 2.0 + 1.0, 0.0)
    if tag == "neyman-chi2":
        return 1.0 / math.sqrt(1.0 - t)
    g = fam.exponent
    base = (g - 1.0) * t + 1.0
    if base <= 0:
        return 0.0
    return base ** (1.0 / (g - 1.0))


def conjugate_recession(t: float) -> float:
    return 0.0 if t <= 0 else INF


def perspective_conjugate(fam: EntropyFamily, t: float, lam: float) -> float:
    """lam * phi*(t / lam), with the recession function at lam = 0."""
    lam = float(lam)
    if lam < 0:
        raise InvalidInput("perspective parameter must be nonnegative")
    if lam == 0:
        return conjugate_recession(t)
    v = conjugate_value(fam, t / lam)
    return INF if math.isinf(v) and v > 0 else lam * v


def perspective_value(fam: EntropyFamily, a: float, b: float) -> float:
    """b * phi(a / b) with 0 * phi(a / 0) = a * phi_inf(1)."""
    if b < 0:
        raise InvalidInput("perspective parameter must be nonnegative")
    if b == 0:
        if a == 0:
            return 0.0
        if a < 0:
            return INF
        return a * recession_slope(fam)
    v = entropy_value(fam, a / b)
    return INF if math.isinf(v) else b * v


def csiszar_dual(fam: EntropyFamily) -> EntropyFamily:
    """psi(s) = s * phi(1/s)."""
    t = fam.tag
    pairs = {"kl": "likelihood", "likelihood": "kl", "total-variation": "total-variation",
             "pearson-chi2": "neyman-chi2", "neyman-chi2": "pearson-chi2"}
    if t in pairs:
        return EntropyFamily(pairs[t])
    if t == "cressie-read":
        return EntropyFamily("cressie-read-dual", fam.beta)
    return EntropyFamily("cressie-read", fam.beta)


# ---------------------------------------------------------------------------
# divergences between discrete distributions
# ---------------------------------------------------------------------------

def common_ground(P: DiscreteDistribution, Q: DiscreteDistribution, tol: float = 1e-12):
    """Align two distributions on the union of their atoms."""
    if P.dim != Q.dim:
        raise InvalidInput("distributions live in different dimensions")
    atoms = [a for a in P.atoms]
    p = list(P.probs)
    q = [0.0] * len(atoms)
    for z, w in zip(Q.atoms, Q.probs):
        hit = None
        for k, a in enumerate(atoms):
            if np.max(np.abs(a - z)) <= tol:
                hit = k
                break
        if hit is None:
            atoms.append(z)
            p.append(0.0)
            q.append(w)
        else:
            q[hit] += w
    return np.array(atoms), np.array(p), np.array(q)


def phi_divergence(fam: EntropyFamily, P: DiscreteDistribution, Phat: DiscreteDistribution) -> float:
    """D_phi(P, Phat) with the counting measure on the union of atoms."""
    _, p, q = common_ground(P, Phat)
    total = 0.0
    for a, b in zip(p, q):
        v = perspective_value(fam, a, b)
        if math.isinf(v):
            return INF
        total += v
    return total


def divergence_upper_bound(fam: EntropyFamily) -> float:
    """phi(0) + phi_inf(1), the divergence between mutually singular laws."""
    return phi_at_zero(fam) + recession_slope(fam)


def conjugate_array(fam: EntropyFamily, t) -> np.ndarray:
    """Vectorized phi*(t); +inf outside the domain."""
    t = np.asarray(t, dtype=float)
    tag = fam.tag
    out = np.full(t.shape, INF)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if tag == "kl":
            return np.where(t < 700, np.expm1(np.minimum(t, 700)), INF)
        if tag == "likelihood":
            ok = t < 1
            out[ok] = -np.log1p(-t[ok])
            return out
        if tag == "total-variation":
            ok = t <= 0.5
            out[ok] = np.maximum(t[ok], -0.5)
            return out
        if tag == "pearson-chi2":
            return np.maximum(t / 2.0 + 1.0, 0.0) ** 2 - 1.0
        if tag == "neyman-chi2":
            ok = t <= 1
            out[ok] = 2.0 - 2.0 * np.sqrt(1.0 - t[ok])
            return out
        g = fam.exponent
        base = (g - 1.0) * t + 1.0
        if g > 1:
            return np.where(base <= 0, -1.0 / g, (np.maximum(base, 0.0) ** (g / (g - 1.0)) - 1.0) / g)
        ok = base > 0
        out[ok] = (base[ok] ** (g / (g - 1.0)) - 1.0) / g
        if g < 0:
            out[base == 0] = -1.0 / g
        return out


def perspective_conjugate_array(fam: EntropyFamily, t, lam: float) -> np.ndarray:
    """lam * phi*(t / lam) elementwise for a scalar lam >= 0."""
    t = np.asarray(t, dtype=float)
    if lam < 0:
        raise InvalidInput("perspective parameter must be nonnegative")
    if lam == 0:
        return np.where(t <= 0, 0.0, INF)
    v = conjugate_array(fam, t / lam)
    with np.errstate(invalid="ignore"):
        return np.where(np.isposinf(v), INF, lam * v)
