import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drokit.core import (AmbiguitySpec, DiscreteDistribution, InvalidInput, MomentPair, PiecewiseLoss,
                         QuadForm, RiskSpec, SupportSet, contains, cvar, empirical_from_samples,
                         evaluate_loss, ext_add, ext_mul, spectral_risk, value_at_risk)

INF = float("inf")


def test_loss_evaluation():
    absz = PiecewiseLoss.affine([[1.0], [-1.0]], [0.0, 0.0])
    assert evaluate_loss(absz, [-3.0]) == 3.0
    sq = PiecewiseLoss.quadratic([[1.0]], [0.0], -1.0)
    assert evaluate_loss(sq, [2.0]) == 3.0
    ramp = PiecewiseLoss.affine([[1.0], [0.0]], [-1.0, 0.0])
    assert evaluate_loss(ramp, [0.5]) == 0.0
    with pytest.raises(InvalidInput):
        evaluate_loss(absz, [1.0, 2.0])


def test_loss_classes():
    assert PiecewiseLoss.affine([[1.0], [-1.0]], [0, 0]).is_convex
    assert PiecewiseLoss.quadratic([[-1.0]], [0.0]).is_concave
    assert QuadForm.affine([2.0], 1.0)([1.0]) == 3.0


def test_contains():
    assert contains(SupportSet.ellipsoid([0, 0], np.eye(2)), [1.0, 0.0])
    assert not contains(SupportSet.box([0, 0], [1, 1]), [1.5, 0.0])
    assert contains(SupportSet.simplex(2), [0.3, 0.7])
    assert contains(SupportSet.reals(3), [1e6, -1e6, 0])


def test_compactness():
    assert SupportSet.box([0], [1]).is_compact
    assert SupportSet.ball([0, 0], 2.0).is_compact
    assert not SupportSet.reals(2).is_compact


def test_empirical():
    P = empirical_from_samples([[0.0], [1.0]])
    np.testing.assert_allclose(P.probs, [0.5, 0.5])
    P = empirical_from_samples([[0.0], [0.0], [1.0]])
    np.testing.assert_allclose(P.atoms.ravel(), [0, 1])
    np.testing.assert_allclose(P.probs, [2 / 3, 1 / 3])
    P = empirical_from_samples([[1.0]])
    assert P.size == 1 and P.probs[0] == 1.0
    with pytest.raises(InvalidInput):
        empirical_from_samples([])


def test_distribution_validation():
    with pytest.raises(InvalidInput):
        DiscreteDistribution(np.array([[0.0], [1.0]]), np.array([0.5, 0.6]))
    with pytest.raises(InvalidInput):
        DiscreteDistribution(np.array([[0.0]]), np.array([-1.0]))


def test_moment_pair_needs_psd_covariance():
    with pytest.raises(InvalidInput):
        MomentPair([0.0], [[-1.0]])
    m = MomentPair.from_cov([1.0], [[0.25]])
    np.testing.assert_allclose(m.cov, [[0.25]])


def test_ambiguity_validation():
    P = DiscreteDistribution.dirac([0.5])
    with pytest.raises(InvalidInput):
        AmbiguitySpec("wasserstein-p", SupportSet.interval(0, 1), P, radius=-1.0)
    with pytest.raises(InvalidInput):
        AmbiguitySpec("gelbrich", SupportSet.interval(0, 1), P, radius=1.0)
    with pytest.raises(InvalidInput):
        AmbiguitySpec("total-variation", SupportSet.interval(0, 1), P, radius=1.5)
    with pytest.raises(InvalidInput):
        AmbiguitySpec("wasserstein-p", SupportSet.interval(1, 2), P, radius=0.1)
    amb = AmbiguitySpec("wasserstein-p", SupportSet.interval(0, 1), P, radius=0.1)
    assert amb.with_radius(0.3).radius == 0.3


def test_extended_arithmetic():
    assert ext_add(INF, -INF, "min") == INF
    assert ext_add(INF, -INF, "max") == -INF
    assert ext_mul(0.0, INF) == 0.0
    assert ext_add(1.0, 2.0) == 3.0


def test_risk_helpers():
    v, p = np.array([1.0, 2, 3, 4]), np.full(4, 0.25)
    assert cvar(v, p, 0.5) == pytest.approx(3.5)
    assert cvar(v, p, 1.0) == pytest.approx(2.5)
    assert value_at_risk(v, p, 0.5) == 2.0
    spec = RiskSpec("spectral", levels=(0.5, 1.0), weights=(0.5, 0.5))
    assert spectral_risk(v, p, spec) == pytest.approx(3.0)
    with pytest.raises(InvalidInput):
        RiskSpec("cvar", level=1.5)


probs_strategy = st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(probs_strategy, st.floats(0.05, 1.0), st.integers(0, 1000))
def test_cvar_dominates_mean(weights, beta, seed):
    p = np.asarray(weights) / np.sum(weights)
    v = np.random.default_rng(seed).normal(size=p.size)
    assert cvar(v, p, beta) >= float(p @ v) - 1e-12
    assert cvar(v, p, beta) <= v.max() + 1e-12
