import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drokit.closedform import scarf
from drokit.core import AmbiguitySpec, DiscreteDistribution, InvalidInput, MomentPair, PiecewiseLoss, SupportSet
from drokit.verify import (bound_check, disappointment_mc, grid_oracle, radius_calibration, scenario_guarantee_mc,
                           taylor_check, toy_scenario_instance, trial_rngs)

LIN = PiecewiseLoss.affine([[1.0]], [0.0])
RAMP = PiecewiseLoss.affine([[1.0], [0.0]], [-1.0, 0.0])
UNIT = SupportSet.interval(0.0, 1.0)


def uniform(points):
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    return DiscreteDistribution(pts, np.full(len(points), 1.0 / len(points)))


def test_grid_oracle_scarf():
    amb = AmbiguitySpec("chebyshev", SupportSet.interval(-20, 20), MomentPair.from_cov([0.0], [[1.0]]))
    res = grid_oracle(RAMP, amb, resolution=10001)
    assert res.value == pytest.approx(scarf(1, 0, 1).value, abs=1e-3)
    assert res.value <= scarf(1, 0, 1).value + 1e-7


def test_grid_oracle_tv_and_zero_radius():
    amb = AmbiguitySpec("total-variation", UNIT, uniform([0.0, 0.5, 1.0]), 1 / 3)
    assert grid_oracle(LIN, amb, resolution=101).value == pytest.approx(5 / 6, abs=1e-9)
    P = uniform([0.1, 0.4, 0.9])
    ot = AmbiguitySpec("wasserstein-p", UNIT, P, 0.0)
    assert grid_oracle(LIN, ot, resolution=101).value == pytest.approx(float(P.atoms.ravel().mean()), abs=1e-9)


def test_taylor_slopes():
    P = uniform([0.0, 1.0])
    chi = taylor_check(LIN, P, "phi-smooth", [1e-4, 1e-3, 1e-2], phi="pearson-chi2", support=UNIT)
    assert chi.expected == pytest.approx(0.5) and chi.passed
    w1 = taylor_check(PiecewiseLoss.affine([[-3.0]], [1.0]), P, "wasserstein-p", [1e-3, 1e-2], p=1.0)
    assert w1.slope == pytest.approx(3.0, abs=1e-8)
    sq = PiecewiseLoss.quadratic([[1.0]], [0.0])
    w2 = taylor_check(sq, uniform([-1.0, 1.0]), "wasserstein-p", [1e-3, 1e-2, 1e-1], p=2.0)
    assert w2.expected == pytest.approx(2.0) and w2.passed


def test_bound_check():
    rep = bound_check("chi2-variance", LIN, uniform([0.0, 1.0]), 1.0, support=UNIT)
    assert rep.bound == pytest.approx(1.0) and rep.exact == pytest.approx(1.0, abs=1e-6) and rep.passed


def test_radius_calibration_examples():
    t = math.log(20.0)
    assert radius_calibration(3, 100, 0.05, 2.0, 1.0, 1.0, 1.0) == pytest.approx((t / 100) ** (1 / 3))
    assert radius_calibration(1, 100, 0.05, 2.0, 1.0, 1.0, 1.0) == pytest.approx((t / 100) ** 0.5)
    assert radius_calibration(1, 2, 0.05, 2.0, 1.0, 1.0, 1.0) == pytest.approx((t / 2) ** 0.5)
    assert radius_calibration(3, 100, 0.05, 2.0, 1.0, 1.0, 1.0) == pytest.approx(0.31058, abs=1e-5)
    with pytest.raises(InvalidInput):
        radius_calibration(3, 100, 0.05, 2.0, None, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        radius_calibration(2, 100, 0.05, 2.0, 1.0, 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 500), st.floats(0.01, 0.5), st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_radius_calibration_nonincreasing(d, N, eta, c1, c2):
    p = 1.0 if d != 2 else 3.0
    alpha = p + 1.0
    r1 = radius_calibration(d, N, eta, alpha, c1, c2, p)
    r2 = radius_calibration(d, N + 1, eta, alpha, c1, c2, p)
    assert r2 <= r1 + 1e-12


def test_disappointment_coverage():
    P0 = uniform([0.0, 1.0])
    full = disappointment_mc(P0, LIN, "wasserstein-p", "exact", 5, 40, seed=3, support=UNIT)
    assert full.coverage == 1.0 and full.containment == 1.0
    zero = disappointment_mc(P0, LIN, "wasserstein-p", 0.0, 5, 40, seed=3, support=UNIT)
    assert zero.coverage < 1.0
    assert zero.coverage_ci[0] <= zero.coverage <= zero.coverage_ci[1]


def test_scenario_guarantee_small():
    rep = scenario_guarantee_mc(toy_scenario_instance(), 0.2, 0.1, 60, seed=1, fresh=20000)
    assert rep.N > 0 and rep.trials == 60
    assert 0.0 <= rep.failure_rate <= 1.0


def test_trial_streams_reproducible():
    a = [g.random() for g in trial_rngs(7, 3)]
    b = [g.random() for g in trial_rngs(7, 3)]
    assert a == b and len(set(a)) == 3
