import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drokit.core import DiscreteDistribution, MomentPair
from drokit.transport import (TransportCost, gelbrich_distance, gelbrich_distance_sdp, levy_prokhorov, ot_cost,
                              total_variation, wasserstein_inf, wasserstein_p)


def dist(atoms, probs):
    return DiscreteDistribution(np.asarray(atoms, dtype=float).reshape(len(probs), -1), np.asarray(probs, float))


def test_ot_examples():
    d0, d1 = DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([1.0])
    val, plan = ot_cost(TransportCost("norm-power", p=1), d1, d0)
    assert val == pytest.approx(1.0)
    assert plan.matrix.sum() == pytest.approx(1.0)
    assert ot_cost(TransportCost(), d0, d0)[0] == pytest.approx(0.0)
    split = dist([0, 2], [0.5, 0.5])
    assert ot_cost(TransportCost(), split, d1)[0] == pytest.approx(1.0)


def test_wasserstein_examples():
    d0, d1 = DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([1.0])
    assert wasserstein_p(d0, d1, 1) == pytest.approx(1.0)
    assert wasserstein_p(dist([0, 2], [0.5, 0.5]), d1, 2) == pytest.approx(1.0)
    assert wasserstein_inf(d0, d1) == pytest.approx(1.0)
    assert wasserstein_inf(dist([0, 2], [0.5, 0.5]), dist([0.1, 1.9], [0.5, 0.5])) == pytest.approx(0.1)


def test_total_variation_and_levy_prokhorov():
    d0, d1 = DiscreteDistribution.dirac([0.0]), DiscreteDistribution.dirac([1.0])
    assert total_variation(d0, d1) == pytest.approx(1.0)
    assert total_variation(dist([0, 1], [0.5, 0.5]), dist([0, 1], [0.25, 0.75])) == pytest.approx(0.25)
    assert levy_prokhorov(d0, d0) == pytest.approx(0.0)
    assert levy_prokhorov(d0, DiscreteDistribution.dirac([0.3])) == pytest.approx(0.3)
    assert levy_prokhorov(d0, d1) == pytest.approx(1.0)
    assert levy_prokhorov(dist([0, 10], [0.9, 0.1]), d0) == pytest.approx(0.1)


def test_gelbrich_examples():
    a = MomentPair.from_cov([0.0], [[1.0]])
    b = MomentPair.from_cov([0.0], [[4.0]])
    assert gelbrich_distance(a, a) == pytest.approx(0.0, abs=1e-9)
    assert gelbrich_distance(a, b) == pytest.approx(1.0)
    assert gelbrich_distance_sdp(a, b) == pytest.approx(1.0, abs=1e-5)
    e = MomentPair.from_cov([1.0, 0.0], np.eye(2))
    assert gelbrich_distance(MomentPair.from_cov([0.0, 0.0], np.eye(2)), e) == pytest.approx(1.0)
    c = MomentPair.from_cov([0, 0], np.diag([1.0, 2.0]))
    d = MomentPair.from_cov([0, 0], np.diag([2.0, 1.0]))
    exact = math.sqrt(2 * (3 - 2 * math.sqrt(2)))
    assert gelbrich_distance(c, d) == pytest.approx(exact)
    assert gelbrich_distance_sdp(c, d) == pytest.approx(exact, abs=1e-5)


def random_dist(seed, n, d=1):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, n)
    return DiscreteDistribution(rng.normal(size=(n, d)), w / w.sum())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([1.0, 2.0]))
def test_wasserstein_metric_axioms(seed, p):
    P, Q, R = (random_dist(seed + k, 3 + k, 2) for k in range(3))
    pq, qp = wasserstein_p(P, Q, p), wasserstein_p(Q, P, p)
    assert pq == pytest.approx(qp, abs=1e-8)
    assert pq <= wasserstein_p(P, R, p) + wasserstein_p(R, Q, p) + 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_gelbrich_below_w2(seed):
    P, Q = random_dist(seed, 4, 2), random_dist(seed + 1, 5, 2)
    assert gelbrich_distance(P.moments(), Q.moments()) <= wasserstein_p(P, Q, 2) + 1e-7
