import math

import cvxpy as cp
import numpy as np
import pytest

from drokit.closedform import marshall_olkin, scarf
from drokit.core import DiscreteDistribution, MomentPair, PiecewiseLoss, QuadForm, SupportSet
from drokit.reformulate import (ConicProgram, MomentSet, build_gelbrich_dual, build_ot_dual, build_phi_dual,
                                chebyshev_worst_case, ot_worst_case, phi_worst_case, semi_infinite_certificate,
                                slater_point_exists, slemma_feasible, solve_conic)
from drokit.transport import TransportCost

RAMP0 = PiecewiseLoss.affine([[1.0], [0.0]], [0.0, 0.0])
ABS = PiecewiseLoss.affine([[1.0], [-1.0]], [0.0, 0.0])
IDENT = PiecewiseLoss.affine([[1.0]], [0.0])


def uniform(points):
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    return DiscreteDistribution(pts, np.full(len(points), 1.0 / len(points)))


def test_solve_conic_basic():
    x = cp.Variable()
    out = solve_conic(ConicProgram(cp.Problem(cp.Minimize(x), [x >= 1]), {"x": x}))
    assert out.optimal and out.objective == pytest.approx(1.0, abs=1e-7)
    X = cp.Variable((2, 2), symmetric=True)
    out = solve_conic(ConicProgram(cp.Problem(cp.Minimize(cp.trace(X)), [X >> np.eye(2)]), {"X": X}))
    assert out.optimal and out.objective == pytest.approx(2.0, abs=1e-6)
    y = cp.Variable()
    out = solve_conic(ConicProgram(cp.Problem(cp.Minimize(y), [y >= 1, y <= 0]), {"y": y}))
    assert out.status == "infeasible"


def test_s_lemma():
    # z^2 - 1 <= 0  implies  4 - z^2 >= 0
    ok, alpha, slater = slemma_feasible([[1.0]], [0.0], -1.0, [[-1.0]], [0.0], 4.0)
    assert ok and slater and alpha >= 0
    # z^2 <= 1 does not imply z >= 0.5
    ok, _, _ = slemma_feasible([[1.0]], [0.0], -1.0, [[0.0]], [0.5], -0.5)
    assert not ok
    assert slater_point_exists(np.eye(2), np.zeros(2), -1.0)
    assert not slater_point_exists(np.eye(2), np.zeros(2), 1.0)


def test_semi_infinite_certificate():
    box = SupportSet.interval(-1.0, 1.0)
    ok, margin = semi_infinite_certificate(QuadForm.affine([1.0], -1.0), box)
    assert ok and margin == pytest.approx(0.0, abs=1e-6)
    ok, margin = semi_infinite_certificate(QuadForm.affine([1.0], -0.5), box)
    assert not ok and margin == pytest.approx(0.5, abs=1e-6)


def test_chebyshev_dual():
    ell = SupportSet.interval(-10.0, 10.0)
    F = MomentSet.fixed(MomentPair.from_cov([0.0], [[1.0]]))
    res = chebyshev_worst_case(RAMP0, ell, F)
    assert res.value == pytest.approx(0.5, abs=1e-6)
    P = res.extremal
    assert P.probs.sum() == pytest.approx(1.0)
    assert P.expect(lambda z: max(z[0], 0.0)) == pytest.approx(0.5, abs=1e-5)
    assert all(abs(z[0]) <= 10 + 1e-6 for z in P.atoms)
    sq = PiecewiseLoss.quadratic([[1.0]], [0.0])
    assert chebyshev_worst_case(sq, ell, F).value == pytest.approx(1.0, abs=1e-6)
    ramp1 = PiecewiseLoss.affine([[1.0], [0.0]], [-1.0, 0.0])
    assert chebyshev_worst_case(ramp1, ell, F).value == pytest.approx(scarf(1.0, 0.0, 1.0).value, abs=1e-6)


def test_chebyshev_marshall_olkin_encoding():
    # on [-10, 1] the steep ramp max{0, 1 + k(z - 1)} tends to the indicator of {z >= 1}
    k = 1e3
    step = PiecewiseLoss.affine([[0.0], [k]], [0.0, 1.0 - k])
    F = MomentSet.fixed(MomentPair.from_cov([0.0], [[1.0]]))
    val = chebyshev_worst_case(step, SupportSet.interval(-10.0, 1.0), F).value
    assert val <= marshall_olkin(1.0).value + 1e-6
    assert val >= marshall_olkin(1.0).value - 2.0 / k
    capped = PiecewiseLoss.affine([[0.0]], [1.0])
    assert chebyshev_worst_case(capped, SupportSet.interval(-10.0, 10.0), F).value == pytest.approx(1.0, abs=1e-6)


def test_chebyshev_concave_recovers_dirac():
    conc = PiecewiseLoss.quadratic([[-1.0]], [0.0])
    F = MomentSet.fixed(MomentPair.from_cov([0.5], [[0.0]]))
    res = chebyshev_worst_case(conc, SupportSet.interval(-3, 3), F)
    assert res.value == pytest.approx(-0.25, abs=1e-5)


def test_gelbrich_dual():
    center = MomentPair.from_cov([0.0, 0.0], np.eye(2))
    lin = PiecewiseLoss.affine([[1.0, 0.0]], [0.0])
    big = SupportSet.ball([0.0, 0.0], 50.0)
    out = solve_conic(build_gelbrich_dual(lin, big, center, 0.5))
    assert out.objective == pytest.approx(0.5, abs=1e-5)
    tiny = solve_conic(build_gelbrich_dual(RAMP0, SupportSet.interval(-20, 20),
                                           MomentPair.from_cov([0.0], [[1.0]]), 1e-9))
    cheb = chebyshev_worst_case(RAMP0, SupportSet.interval(-20, 20),
                                MomentSet.fixed(MomentPair.from_cov([0.0], [[1.0]])))
    assert tiny.objective == pytest.approx(cheb.value, abs=1e-4)


def test_gelbrich_matches_scarf_scan():
    out = solve_conic(build_gelbrich_dual(RAMP0, SupportSet.interval(-20, 20),
                                          MomentPair.from_cov([0.0], [[1.0]]), 0.5))
    best = 0.0
    for m in np.linspace(-0.5, 0.5, 201):
        # the ball bounds (m, s): m^2 + (s - 1)^2 <= r^2
        s = 1.0 + math.sqrt(max(0.25 - m * m, 0.0))
        best = max(best, scarf(0.0, m, s).value)
    assert out.objective >= 0.5
    assert out.objective == pytest.approx(best, abs=1e-3)


def test_phi_dual():
    P = uniform([0.0, 1.0])
    kl = build_phi_dual(IDENT, SupportSet.interval(0, 1), P, "kl", math.log(2))
    assert kl.solve()[0] == pytest.approx(1.0, abs=1e-4)
    for tag in ("kl", "pearson-chi2", "total-variation", "likelihood"):
        val = build_phi_dual(IDENT, SupportSet.interval(0, 1), P, tag, 1e-9).solve()[0]
        assert val == pytest.approx(0.5, abs=1e-4)
    tv = phi_worst_case(IDENT, SupportSet.interval(0, 1), uniform([0.0, 0.5, 1.0]), "total-variation", 1 / 3)
    assert tv.value == pytest.approx(5 / 6, abs=1e-6)


def test_ot_dual():
    ball = SupportSet.ball([0.0], 10.0)
    res = ot_worst_case(ABS, ball, DiscreteDistribution.dirac([0.0]), TransportCost("norm-power", p=1), 1.0)
    assert res.value == pytest.approx(1.0, abs=1e-5)
    out = solve_conic(build_ot_dual(ABS, ball, DiscreteDistribution.dirac([0.0]), TransportCost(p=1), 0.0))
    assert out.objective == pytest.approx(0.0, abs=1e-6)
    neg = PiecewiseLoss.quadratic([[-1.0]], [0.0])
    res = ot_worst_case(neg, SupportSet.reals(1), DiscreteDistribution.dirac([0.0]), TransportCost(p=2), 1.0)
    assert res.value == pytest.approx(0.0, abs=1e-6)
