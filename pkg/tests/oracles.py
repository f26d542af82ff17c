"""Independent oracles and random instance generators for the test suite."""

import math

import numpy as np
from scipy.optimize import linprog

from drokit.core import DiscreteDistribution, GaussianSpec, MomentPair, PiecewiseLoss, QuadForm, SupportSet
from drokit.transport import TransportCost


def rel_close(a, b, rtol, atol=0.0):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b)) + atol


def moment_grid_lp(values, grid, rows, rhs):
    """max sum_i p_i values_i over p >= 0 on the grid with sum p = 1 and rows @ p = rhs."""
    A = np.vstack([np.ones(len(grid))] + [np.asarray(r, float) for r in rows])
    b = np.concatenate([[1.0], np.asarray(rhs, float)])
    res = linprog(-np.asarray(values, float), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return -res.fun


def ben_tal_hochman_grid(f, mu, mad, n):
    z = np.linspace(0.0, 1.0, n)
    return moment_grid_lp(f(z), z, [z, np.abs(z - mu)], [mu, mad])


def marshall_olkin_grid(delta, n, half=20.0):
    """sup P(Z >= delta) over laws on a grid with mean 0 and variance 1 (1-D)."""
    z = np.linspace(-half, half, n)
    return moment_grid_lp((z >= delta - 1e-12).astype(float), z, [z, z**2], [0.0, 1.0])


def barycentric_grid(loss, wbar, C, n):
    """Cross-moment LP over V = [0,1] times the simplex vertices (1-D v)."""
    v = np.linspace(0.0, 1.0, n)
    k = len(wbar)
    vals = np.concatenate([[loss(x, i) for x in v] for i in range(k)])
    rows = []
    for i in range(k):
        mass, first = np.zeros(n * k), np.zeros(n * k)
        mass[i * n:(i + 1) * n] = 1.0
        first[i * n:(i + 1) * n] = v
        rows += [mass, first]
    rhs = []
    for i in range(k):
        rhs += [wbar[i], C[i]]
    return moment_grid_lp(vals, np.zeros(n * k), rows, rhs)


def newsvendor_brute_force(xs, zgrid, mean, var, pieces):
    """min over xs of the grid-restricted worst case of max_j a_j x + c_j z under (mean, var)."""
    best = (math.inf, None)
    for x in xs:
        vals = np.max([a * x + c * zgrid for a, c in pieces], axis=0)
        v = moment_grid_lp(vals, zgrid, [zgrid, zgrid**2], [mean, var + mean**2])
        if v < best[0]:
            best = (v, x)
    return best


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_affine_loss(rng, d, k):
    return PiecewiseLoss.affine(rng.normal(size=(k, d)), rng.normal(size=k))


def random_discrete(rng, d, n, lo=-1.0, hi=1.0):
    return DiscreteDistribution.normalized(rng.uniform(lo, hi, size=(n, d)), rng.uniform(0.2, 1.0, n))


def random_moment_instance(rng):
    """Ellipsoid (or interval) support with moments of a random law inside it."""
    d = int(rng.integers(1, 3))
    support = SupportSet.interval(-2.0, 2.0) if d == 1 else SupportSet.ball(np.zeros(d), 2.0)
    P = random_discrete(rng, d, 4 + d, -1.0, 1.0)
    return support, P.moments(), random_affine_loss(rng, d, int(rng.integers(2, 4)))


def random_gelbrich_instance(rng, compact):
    d = int(rng.integers(1, 3))
    A = rng.normal(size=(d, d))
    center = GaussianSpec(rng.normal(scale=0.3, size=d), A @ A.T / d + 0.2 * np.eye(d))
    support = SupportSet.ball(np.zeros(d), 6.0) if compact else SupportSet.reals(d)
    return support, center, random_affine_loss(rng, d, int(rng.integers(2, 4))), float(rng.uniform(0.05, 0.5))


def random_phi_instance(rng):
    d = int(rng.integers(1, 3))
    support = SupportSet.box(np.zeros(d), np.ones(d))
    P = random_discrete(rng, d, int(rng.integers(3, 6)), 0.0, 1.0)
    return support, P, random_affine_loss(rng, d, int(rng.integers(1, 4))), float(rng.uniform(0.02, 0.5))


def random_ot_instance(rng):
    """Either a compact box with p = 1, or R^d with the superlinear p = 2 cost and concave pieces."""
    d = int(rng.integers(1, 3))
    P = random_discrete(rng, d, int(rng.integers(2, 5)), 0.0, 1.0)
    if rng.random() < 0.5:
        support = SupportSet.box(np.zeros(d), np.ones(d))
        cost = TransportCost("norm-power", p=1.0)
        loss = random_affine_loss(rng, d, int(rng.integers(1, 4)))
    else:
        support = SupportSet.reals(d)
        cost = TransportCost("norm-power", p=2.0)
        pieces = []
        for _ in range(int(rng.integers(1, 3))):
            B = rng.normal(size=(d, d))
            pieces.append(QuadForm(-(B @ B.T / d + 0.1 * np.eye(d)), rng.normal(size=d), rng.normal()))
        loss = PiecewiseLoss(tuple(pieces))
    return support, P, loss, cost, float(rng.uniform(0.01, 0.3))


def pushforward_pair(rng, d):
    """Discrete P and its image under z -> A z + b with A symmetric PSD."""
    P = random_discrete(rng, d, int(rng.integers(2, 6)), -1.0, 1.0)
    B = rng.normal(size=(d, d))
    A = B @ B.T + 0.05 * np.eye(d)
    b = rng.normal(size=d)
    Q = DiscreteDistribution(P.atoms @ A.T + b, P.probs)
    return P, Q


def moments_of(P: DiscreteDistribution) -> MomentPair:
    return MomentPair(P.mean(), P.second_moment())
