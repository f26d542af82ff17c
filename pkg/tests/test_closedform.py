import math

import numpy as np
import pytest

from drokit.closedform import (barycentric, ben_tal_hochman, chebyshev_risk, edmundson_madansky, gelbrich_risk,
                               jensen_bound, kl_gaussian_linear, lp_worst_case, marshall_olkin,
                               regularization_bounds, scarf, standard_risk_coefficient, tv_worst_case,
                               w1_lipschitz, w1_spectral_risk, winf_worst_case, wp_cvar)
from drokit.core import (DiscreteDistribution, GaussianSpec, InvalidInput, MomentPair, PiecewiseLoss, RiskSpec,
                         SupportSet)

UNIT = SupportSet.interval(0.0, 1.0)
IDENT = PiecewiseLoss.affine([[1.0]], [0.0])
ABS = PiecewiseLoss.affine([[1.0], [-1.0]], [0.0, 0.0])


def uniform(points):
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    return DiscreteDistribution(pts, np.full(len(points), 1.0 / len(points)))


def test_jensen():
    res = jensen_bound(PiecewiseLoss.quadratic([[-1.0]], [0.0]), [0.0], SupportSet.reals(1))
    assert res.value == pytest.approx(0.0)
    np.testing.assert_allclose(res.extremal.atoms, [[0.0]])
    shifted = PiecewiseLoss.quadratic([[-1.0]], [1.0], -1.0)
    assert jensen_bound(shifted, [0.5], SupportSet.reals(1)).value == pytest.approx(-0.25)
    assert jensen_bound(PiecewiseLoss.affine([[2.0]], [1.0]), [1.0], SupportSet.reals(1)).value == pytest.approx(3.0)
    with pytest.raises(InvalidInput):
        jensen_bound(shifted, [2.0], UNIT)


def test_edmundson_madansky():
    sq = PiecewiseLoss.quadratic(np.diag([1.0, 0.0]), [0.0, 0.0])
    assert edmundson_madansky(sq, [0.3, 0.7]).value == pytest.approx(0.3)
    mx = PiecewiseLoss.affine(np.eye(3), np.zeros(3))
    assert edmundson_madansky(mx, np.full(3, 1 / 3)).value == pytest.approx(1.0)
    lin = PiecewiseLoss.affine([[2.0, -1.0]], [0.5])
    assert edmundson_madansky(lin, [0.4, 0.6]).value == pytest.approx(lin(np.array([0.4, 0.6])))
    with pytest.raises(InvalidInput):
        edmundson_madansky(sq, [0.0, 1.0])


def test_barycentric():
    res = barycentric(lambda v, w: -v[0] ** 2 + w[0], [0.5], [0.5, 0.5], [[0.2, 0.3]], V=UNIT)
    assert res.value == pytest.approx(0.24)
    vbar, wbar = np.array([0.4]), np.array([0.3, 0.7])
    f = lambda v, w: -(v[0] - 1) ** 2 + 3 * w[1]
    res = barycentric(f, vbar, wbar, np.outer(vbar, wbar))
    assert res.value == pytest.approx(sum(wbar[i] * f(vbar, np.eye(2)[i]) for i in range(2)))
    with pytest.raises(InvalidInput):
        barycentric(f, [0.5], wbar, [[0.1, 0.1]])


def test_ben_tal_hochman():
    sq = PiecewiseLoss.quadratic([[1.0]], [0.0])
    res = ben_tal_hochman(sq, 0.5, 0.5)
    assert res.value == pytest.approx(0.5)
    assert ben_tal_hochman(sq, 0.5, 0.0).value == pytest.approx(0.25)
    kink = PiecewiseLoss.affine([[2.0], [-2.0]], [-1.0, 1.0])
    assert ben_tal_hochman(kink, 0.5, 0.25).value == pytest.approx(0.5)
    assert res.dual_objective == pytest.approx(res.value)
    with pytest.raises(InvalidInput):
        ben_tal_hochman(sq, 0.5, 0.9)


def test_scarf():
    res = scarf(1.0, 0.0, 1.0)
    assert res.value == pytest.approx(0.5 * (math.sqrt(2) - 1))
    assert scarf(0.0, 0.0, 1.0).value == pytest.approx(0.5)
    P = res.extremal
    np.testing.assert_allclose(P.atoms.ravel(), [1 - math.sqrt(2), 1 + math.sqrt(2)])
    np.testing.assert_allclose(P.probs, [0.5 * (1 + 1 / math.sqrt(2)), 0.5 * (1 - 1 / math.sqrt(2))])
    assert P.mean()[0] == pytest.approx(0.0, abs=1e-12)
    assert P.covariance()[0, 0] == pytest.approx(1.0)
    assert res.dual_objective == pytest.approx(res.value)
    with pytest.raises(InvalidInput):
        scarf(0.0, 0.0, 0.0)


def test_marshall_olkin():
    assert marshall_olkin(1.0).value == pytest.approx(0.5)
    assert marshall_olkin(3.0).value == pytest.approx(0.1)
    res = marshall_olkin(0.0)
    assert res.value == pytest.approx(1.0)
    assert not res.attained


def test_risk_coefficients():
    assert standard_risk_coefficient(RiskSpec("cvar", 0.5)) == pytest.approx(1.0)
    assert standard_risk_coefficient(RiskSpec("var", 0.05)) == pytest.approx(math.sqrt(19))
    assert standard_risk_coefficient(RiskSpec()) == 0.0


def test_chebyshev_and_gelbrich_risk():
    m = MomentPair.from_cov([0.0, 0.0], np.eye(2))
    assert chebyshev_risk([1, 1], m, 2.0) == pytest.approx(2 * math.sqrt(2))
    assert chebyshev_risk([1, 1], MomentPair.from_cov([1.0, 2.0], np.eye(2)), 0.0) == pytest.approx(3.0)
    assert chebyshev_risk([1, 0], MomentPair.from_cov([1.0, 0.0], np.zeros((2, 2))), 3.0) == pytest.approx(1.0)
    assert gelbrich_risk([1, 0], m, 0.5, 1.0) == pytest.approx(1 + 0.5 * math.sqrt(2))
    assert gelbrich_risk([1, 0], m, 0.0, 1.0) == pytest.approx(chebyshev_risk([1, 0], m, 1.0))
    assert gelbrich_risk([1, 0], m, 0.5, 0.0) == pytest.approx(0.5)


def test_kl_gaussian():
    g = GaussianSpec([0.0, 0.0], np.eye(2))
    assert kl_gaussian_linear([1, 0], g, 0.5).value == pytest.approx(1.0)
    assert kl_gaussian_linear([2, 0], g, 0.5).value == pytest.approx(2.0)
    assert kl_gaussian_linear([1, 0], g, 1e-12).value == pytest.approx(0.0, abs=1e-5)


def test_tv_lp_winf():
    P3 = uniform([0.0, 0.5, 1.0])
    assert tv_worst_case(IDENT, P3, UNIT, 1 / 3).value == pytest.approx(1 / 3 + (2 / 3) * 0.75)
    assert tv_worst_case(IDENT, P3, UNIT, 0.0).value == pytest.approx(0.5)
    const = PiecewiseLoss.affine([[0.0]], [2.5])
    assert tv_worst_case(const, P3, UNIT, 0.4).value == pytest.approx(2.5)
    half = DiscreteDistribution.dirac([0.5])
    assert lp_worst_case(IDENT, half, UNIT, 0.2).value == pytest.approx(0.76)
    assert lp_worst_case(IDENT, DiscreteDistribution.dirac([1.0]), UNIT, 0.3).value == pytest.approx(1.0)
    assert winf_worst_case(IDENT, half, UNIT, 0.3).value == pytest.approx(0.8)
    assert winf_worst_case(IDENT, half, UNIT, 0.0).value == pytest.approx(0.5)
    assert winf_worst_case(IDENT, half, UNIT, 5.0).value == pytest.approx(1.0)


def test_w1_family():
    d0 = DiscreteDistribution.dirac([0.0])
    assert w1_lipschitz(ABS, d0, 2.0).value == pytest.approx(2.0)
    assert w1_lipschitz(ABS, d0, 0.0).value == pytest.approx(0.0)
    lin = PiecewiseLoss.affine([[3.0, -4.0]], [1.0])
    P = uniform([[1.0, 0.0], [0.0, 1.0]])
    assert w1_lipschitz(lin, P, 0.5).value == pytest.approx(1.0 + 0.5 * (3 - 4) + 0.5 * 5.0)
    assert w1_spectral_risk(IDENT, d0, 1.0, RiskSpec("cvar", 0.5)) == pytest.approx(2.0)
    assert w1_spectral_risk(ABS, d0, 2.0, RiskSpec()) == pytest.approx(2.0)


def test_wp_cvar():
    d0 = DiscreteDistribution.dirac([0.0])
    assert wp_cvar([1.0], d0, 0.25, 2, 0.1) == pytest.approx(0.2)
    assert wp_cvar([1.0], uniform([1, 2, 3, 4]), 0.5, 2, 0.0) == pytest.approx(3.5)


def test_regularization_bounds():
    P = uniform([0.0, 1.0])
    assert regularization_bounds(IDENT, P, 1.0, "chi2-variance") == pytest.approx(1.0)
    conv = PiecewiseLoss.affine([[1.0], [-2.0]], [0.0, 0.5])
    assert regularization_bounds(conv, P, 0.3, "w1-lipschitz-ub") == pytest.approx(w1_lipschitz(conv, P, 0.3).value)
    risk = RiskSpec("cvar", 0.25)
    b = regularization_bounds(IDENT, P, 0.1, "risk-lipschitz", p=2, risk=risk)
    assert b == pytest.approx(1.0 + 0.1 * 0.25 ** -0.5)
