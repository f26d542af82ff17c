"""Acceptance suite: one test per criterion, summarized at the end of the run."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

import oracles as O
from drokit.closedform import (ben_tal_hochman, chebyshev_risk, edmundson_madansky, gelbrich_risk, jensen_bound,
                               kl_gaussian_linear, lp_worst_case, marshall_olkin, scarf, standard_risk_coefficient,
                               tv_worst_case, w1_lipschitz, winf_worst_case, barycentric)
from drokit.core import (AmbiguitySpec, DiscreteDistribution, GaussianSpec, MomentPair, PiecewiseLoss, RiskSpec,
                         SupportSet, contains)
from drokit.divergence import family, phi_divergence
from drokit.reformulate import MomentSet, chebyshev_worst_case, ot_worst_case, phi_worst_case
from drokit.solve import (DecisionSet, DroProblem, cutting_plane_solve, scenario_sample_size, semi_infinite_form,
                          solve_dro, worst_case)
from drokit.transport import gelbrich_distance, wasserstein_p
from drokit.verify import (bound_check, disappointment_mc, grid_oracle, scenario_guarantee_mc, taylor_check,
                           toy_scenario_instance)
from drokit.core import BiAffinePiece


def note(request, text):
    request.node.user_properties.append(("detail", text))


LIN = PiecewiseLoss.affine([[1.0]], [0.0])
RAMP = PiecewiseLoss.affine([[1.0], [0.0]], [-1.0, 0.0])
STD = MomentPair.from_cov([0.0], [[1.0]])


# ---------------------------------------------------------------------------
# 1. closed-form catalogue
# ---------------------------------------------------------------------------

def test_criterion_01_closed_form_catalogue(request):
    e1, I2 = np.array([1.0, 0.0]), np.eye(2)
    got = {
        "scarf": (scarf(1.0, 0.0, 1.0).value, 0.5 * (math.sqrt(2) - 1), 1e-12),
        "marshall_olkin": (marshall_olkin(1.0).value, 0.5, 1e-12),
        "cvar coefficient": (standard_risk_coefficient(RiskSpec("cvar", 0.05)), math.sqrt(19), 1e-12),
        "gelbrich_risk": (gelbrich_risk(e1, GaussianSpec(np.zeros(2), I2), 0.5, 1.0), 1 + 0.5 * math.sqrt(2), 1e-12),
        "kl_gaussian_linear": (kl_gaussian_linear(e1, GaussianSpec(np.zeros(2), I2), 0.5).value, 1.0, 1e-12),
        "ben_tal_hochman": (ben_tal_hochman(PiecewiseLoss.quadratic([[1.0]], [0.0]), 0.5, 0.5, (0, 1)).value,
                            0.5, 1e-12),
    }
    errs = {k: abs(v - want) for k, (v, want, _) in got.items()}
    note(request, f"max error {max(errs.values()):.1e}")
    for k, (v, want, tol) in got.items():
        assert errs[k] <= tol, (k, v, want)


# ---------------------------------------------------------------------------
# 2. oracle equivalence
# ---------------------------------------------------------------------------

def _oracle_catalogue():
    P3 = DiscreteDistribution([[0.0], [0.5], [1.0]], [1 / 3] * 3)
    unit = SupportSet.interval(0, 1)
    trunc = SupportSet.interval(-20, 20)
    hinge = PiecewiseLoss.affine([[1.0], [-2.0]], [0.0, 1.0])
    sq = PiecewiseLoss.quadratic([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
    neg = PiecewiseLoss.quadratic([[-1.0]], [0.0])
    G = GaussianSpec([0.0], [[1.0]])
    half = DiscreteDistribution([[0.5]], [1.0])
    fine = (2501, 5001, 10001)
    return [
        ("scarf", RAMP, AmbiguitySpec("chebyshev", trunc, STD), None, scarf(1, 0, 1).value, fine),
        ("chebyshev cvar", LIN, AmbiguitySpec("chebyshev", trunc, STD), RiskSpec("cvar", 0.2),
         chebyshev_risk([1.0], STD, standard_risk_coefficient(RiskSpec("cvar", 0.2))), fine),
        ("jensen", neg, AmbiguitySpec("markov", unit, MomentPair([0.3], [[0.3]])), None,
         jensen_bound(neg, [0.3], unit).value, fine),
        ("edmundson-madansky", sq, AmbiguitySpec("markov", SupportSet.simplex(2), MomentPair([0.3, 0.7], np.eye(2))),
         None, edmundson_madansky(sq, [0.3, 0.7]).value, (26, 51, 101)),
        ("total variation", LIN, AmbiguitySpec("total-variation", unit, P3, 1 / 3), None,
         tv_worst_case(LIN, P3, unit, 1 / 3).value, fine),
        ("levy-prokhorov", LIN, AmbiguitySpec("levy-prokhorov", unit, half, 0.2), None,
         lp_worst_case(LIN, half, unit, 0.2).value, fine),
        ("inf-wasserstein", LIN, AmbiguitySpec("wasserstein-inf", unit, P3, 0.2), None,
         winf_worst_case(LIN, P3, unit, 0.2).value, fine),
        ("1-wasserstein", hinge, AmbiguitySpec("wasserstein-p", SupportSet.reals(1), P3, 0.1, p=1), None,
         w1_lipschitz(hinge, P3, 0.1).value, fine),
        ("gelbrich", LIN, AmbiguitySpec("gelbrich", SupportSet.reals(1), G, 0.5), None,
         gelbrich_risk([1.0], G, 0.5, 0.0), fine),
    ]


def test_criterion_02_oracle_equivalence(request):
    t0 = time.time()
    rows = []
    for name, loss, amb, risk, exact, res in _oracle_catalogue():
        vals = [grid_oracle(loss, amb, n, risk=risk).value for n in res]
        rows.append((name, exact, vals))
    sq = lambda z: z**2
    bary = lambda v, i: -v**2 + (1.0 if i == 0 else 0.0)
    bary_exact = barycentric(lambda v, w: -float(v[0])**2 + float(w[0]), [0.5], [0.5, 0.5], [[0.2, 0.3]],
                             SupportSet.interval(0, 1)).value
    rows.append(("ben-tal-hochman", ben_tal_hochman(PiecewiseLoss.quadratic([[1.0]], [0.0]), 0.5, 0.5).value,
                 [O.ben_tal_hochman_grid(sq, 0.5, 0.5, n) for n in (2501, 5001, 10001)]))
    rows.append(("marshall-olkin", marshall_olkin(1.0).value,
                 [O.marshall_olkin_grid(1.0, n) for n in (2501, 5001, 10001)]))
    rows.append(("barycentric", bary_exact,
                 [O.barycentric_grid(bary, [0.5, 0.5], [0.2, 0.3], n) for n in (2501, 5001, 10001)]))
    elapsed = time.time() - t0
    worst = max(abs(v[-1] - ex) for _, ex, v in rows)
    note(request, f"{len(rows)} closed forms, worst gap {worst:.1e}, {elapsed:.0f}s")
    for name, exact, vals in rows:
        assert abs(vals[-1] - exact) <= 1e-3, (name, exact, vals)
        assert vals[-1] <= exact + 1e-7, (name, exact, vals)
        assert all(a <= b + 1e-8 for a, b in zip(vals, vals[1:])), (name, vals)
    assert elapsed < 120


# ---------------------------------------------------------------------------
# 3 and 4. strong duality and extremal attainment
# ---------------------------------------------------------------------------

PHI_FAMILIES = (("kl", None), ("total-variation", None), ("pearson-chi2", None), ("cressie-read", 0.5))


def _duality_instances(seed=2024, n=50):
    """Yield (label, value, dual value, extremal check or None, r=0 check or None)."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        S, F, L = O.random_moment_instance(rng)
        r = chebyshev_worst_case(L, S, MomentSet.fixed(F))
        ext = r.extremal

        def check(ext=ext, F=F, S=S, L=L, v=r.value):
            return (isinstance(ext, DiscreteDistribution)
                    and max(np.abs(ext.mean() - F.mean).max(), np.abs(ext.second_moment() - F.second).max()) <= 1e-6
                    and all(contains(S, z, 1e-6) for z in ext.atoms)
                    and abs(ext.probs @ L.values(ext.atoms) - v) <= 1e-5)
        yield "chebyshev", r.value, r.dual_objective, check, None
    for i in range(n):
        compact = i % 2 == 0
        S, G, L, rad = O.random_gelbrich_instance(rng, compact)
        r = chebyshev_worst_case(L, S, MomentSet.gelbrich(G, rad))
        ext = r.extremal

        def check(ext=ext, G=G, rad=rad, L=L, v=r.value):
            return (isinstance(ext, DiscreteDistribution)
                    and gelbrich_distance(GaussianSpec(ext.mean(), ext.covariance()), G) <= rad + 1e-6
                    and abs(ext.probs @ L.values(ext.atoms) - v) <= 1e-5)
        zero = None
        if i < 10:
            lin = PiecewiseLoss((L.pieces[0],))
            z0 = chebyshev_worst_case(lin, SupportSet.reals(G.dim), MomentSet.gelbrich(G, 0.0)).value
            zero = (z0, float(lin(G.mean)))
        yield "gelbrich", r.value, r.dual_objective, (check if compact else None), zero
    for tag, beta in PHI_FAMILIES:
        fam = family(tag, beta)
        for i in range(n):
            S, P, L, rad = O.random_phi_instance(rng)
            r = phi_worst_case(L, S, P, fam, rad)
            ext = r.extremal

            def check(ext=ext, fam=fam, P=P, rad=rad, S=S, L=L, v=r.value):
                return (ext is not None and phi_divergence(fam, ext, P) <= rad + 1e-6
                        and all(contains(S, z, 1e-6) for z in ext.atoms)
                        and abs(ext.probs @ L.values(ext.atoms) - v) <= 1e-5)
            zero = None
            if i < 10:
                zero = (phi_worst_case(L, S, P, fam, 0.0).value, float(P.probs @ L.values(P.atoms)))
            yield f"phi {fam.name}", r.value, r.flags.get("bidual_value", math.nan), check, zero
    for i in range(n):
        S, P, L, c, rad = O.random_ot_instance(rng)
        r = ot_worst_case(L, S, P, c, rad)
        ext = r.extremal

        def check(ext=ext, P=P, c=c, rad=rad, L=L, v=r.value):
            return (ext is not None and wasserstein_p(ext, P, c.p) ** c.p <= rad + 1e-6
                    and abs(ext.probs @ L.values(ext.atoms) - v) <= 1e-5)
        zero = None
        if i < 10:
            zero = (ot_worst_case(L, S, P, c, 0.0).value, float(P.probs @ L.values(P.atoms)))
        yield "transport", r.value, r.dual_objective, check, zero


@pytest.fixture(scope="module")
def duality_runs():
    return list(_duality_instances())


def test_criterion_03_strong_duality(request, duality_runs):
    gaps = [abs(v - d) / max(1.0, abs(v), abs(d)) for _, v, d, _, _ in duality_runs]
    zeros = [abs(a - b) for *_, z in duality_runs if z is not None for a, b in [z]]
    labels = sorted({lab for lab, *_ in duality_runs})
    note(request, f"{len(duality_runs)} instances over {len(labels)} families, max rel gap {max(gaps):.1e}, "
                  f"r=0 max error {max(zeros):.1e}")
    bad = [(lab, v, d) for (lab, v, d, _, _), g in zip(duality_runs, gaps) if not g <= 1e-6]
    assert not bad, bad[:5]
    assert max(zeros) <= 1e-4


def test_criterion_04_extremal_attainment(request, duality_runs):
    checks = [(lab, c) for lab, _, _, c, _ in duality_runs if c is not None]
    failed = [lab for lab, c in checks if not c()]
    note(request, f"{len(checks) - len(failed)}/{len(checks)} extremals feasible and attaining")
    assert not failed, failed[:5]


# ---------------------------------------------------------------------------
# 5. Gelbrich bound
# ---------------------------------------------------------------------------

def test_criterion_05_gelbrich_bound(request):
    rng = np.random.default_rng(5)
    worst_gap = math.inf
    for i in range(200):
        d = 1 + i % 2
        P = O.random_discrete(rng, d, int(rng.integers(1, 6)), -2, 2)
        Q = O.random_discrete(rng, d, int(rng.integers(1, 6)), -2, 2)
        gap = wasserstein_p(P, Q, 2.0) - gelbrich_distance(P.moments(), Q.moments())
        worst_gap = min(worst_gap, gap)
    eq = 0.0
    for i in range(100):
        P, Q = O.pushforward_pair(rng, 1 + i % 2)
        eq = max(eq, abs(wasserstein_p(P, Q, 2.0) - gelbrich_distance(P.moments(), Q.moments())))
    note(request, f"min(W2 - G) = {worst_gap:.1e}, pushforward max |W2 - G| = {eq:.1e}")
    assert worst_gap >= -1e-8
    assert eq <= 1e-6


# ---------------------------------------------------------------------------
# 6. Taylor slopes
# ---------------------------------------------------------------------------

def test_criterion_06_taylor_slopes(request):
    radii = [1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3]
    U = DiscreteDistribution([[0.0], [1.0], [3.0]], [0.3, 0.5, 0.2])
    reports = {}
    for tag, beta in (("pearson-chi2", None), ("kl", None), ("neyman-chi2", None), ("likelihood", None),
                      ("cressie-read", 0.5), ("cressie-read", 2.0)):
        # compact support: families with a finite recession slope move mass to the argmax
        reports[family(tag, beta).name] = taylor_check(LIN, U, "phi-smooth", radii, phi=tag, cr_beta=beta,
                                                       support=SupportSet.interval(0, 3))
    V = DiscreteDistribution([[-1.0], [1.0]], [0.5, 0.5])
    quad = PiecewiseLoss.quadratic([[1.0]], [0.0])
    reports["W2 quadratic"] = taylor_check(quad, V, "wasserstein-p", radii, p=2)
    reports["W1 affine"] = taylor_check(PiecewiseLoss.affine([[-3.0]], [1.0]), U, "wasserstein-p", radii, p=1)
    worst = max(r.rel_error for r in reports.values())
    # W1 on a convex loss: exactly linear in r with slope Lip
    hinge = PiecewiseLoss.affine([[1.0], [-2.0]], [0.0, 1.0])
    nominal = float(U.probs @ hinge.values(U.atoms))
    lin_err = max(abs((worst_case(AmbiguitySpec("wasserstein-p", SupportSet.reals(1), U, r, p=1), hinge).value
                       - nominal) / r - 2.0) for r in (1e-4, 1e-2, 0.5, 3.0))
    note(request, f"{len(reports)} families, max slope rel error {worst:.1e}, W1 linearity error {lin_err:.1e}")
    for name, r in reports.items():
        assert r.passed, (name, r.slope, r.expected)
    assert lin_err <= 1e-8


# ---------------------------------------------------------------------------
# 7. algorithm convergence
# ---------------------------------------------------------------------------

NV_PIECES = [(2.0, -2.0), (-1.0, 1.0)]  # loss max{2(x - z), z - x}


def newsvendor_problem():
    loss = PiecewiseLoss(coupled=tuple(BiAffinePiece([[0.0]], [a], [c]) for a, c in NV_PIECES))
    amb = AmbiguitySpec("chebyshev", SupportSet.interval(-4, 6), MomentPair.from_cov([1.0], [[0.25]]))
    return DroProblem(loss, amb, DecisionSet([0.0], [3.0]))


def test_criterion_07_algorithm_convergence(request):
    sip = semi_infinite_form(DroProblem(RAMP, AmbiguitySpec("chebyshev", SupportSet.interval(-10, 10), STD)))
    cp_scarf = cutting_plane_solve(sip, eps=1e-7)
    target = scarf(1, 0, 1).value
    prob = newsvendor_problem()
    cut = solve_dro(prob, "cutting-plane")
    onl = solve_dro(prob, "bisection+online", {"T": 20000})
    zg = np.linspace(-4, 6, 2001)
    coarse, xc = O.newsvendor_brute_force(np.linspace(0, 3, 301), zg, 1.0, 0.25, NV_PIECES)
    brute, xb = O.newsvendor_brute_force(np.linspace(xc - 0.01, xc + 0.01, 21), zg, 1.0, 0.25, NV_PIECES)
    note(request, f"Scarf {cp_scarf.master_value:.7f} in {cp_scarf.iterations} it; newsvendor cut "
                  f"{cut.objective:.6f} online {onl.objective:.6f} brute {brute:.6f} (x {cut.x[0]:.4f}/"
                  f"{onl.x[0]:.4f}/{xb:.4f})")
    assert abs(cp_scarf.master_value - target) <= 1e-5 and cp_scarf.iterations <= 50
    assert abs(cut.objective - onl.objective) <= 1e-3
    for rep in (cut, onl):
        assert abs(rep.objective - brute) <= 1e-3
        assert abs(rep.x[0] - xb) <= 2e-2


# ---------------------------------------------------------------------------
# 8. scenario guarantee
# ---------------------------------------------------------------------------

def test_criterion_08_scenario_guarantee(request):
    t0 = time.time()
    n1, n2 = scenario_sample_size(1, 0.1, 0.05), scenario_sample_size(2, 0.1, 0.05)
    rep = scenario_guarantee_mc(toy_scenario_instance(), 0.1, 0.05, 500, seed=8)
    elapsed = time.time() - t0
    note(request, f"N = {n1}, {n2}; failure rate {rep.failure_rate:.3f} <= {rep.threshold:.3f}; {elapsed:.0f}s")
    assert (n1, n2) == (29, 46)
    assert rep.passed and rep.failure_rate <= rep.threshold
    assert elapsed < 300


# ---------------------------------------------------------------------------
# 9. disappointment
# ---------------------------------------------------------------------------

def test_criterion_09_disappointment(request):
    P0 = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5])
    full = disappointment_mc(P0, LIN, "wasserstein-p", "exact", 10, 1000, seed=9)
    zero = disappointment_mc(P0, LIN, "wasserstein-p", 0.0, 10, 1000, seed=9)
    note(request, f"coverage exact-radius {full.coverage:.3f}, radius-0 {zero.coverage:.3f}")
    assert full.coverage == 1.0 and full.containment == 1.0
    assert zero.coverage < full.coverage


# ---------------------------------------------------------------------------
# 10. regularization bounds
# ---------------------------------------------------------------------------

def test_criterion_10_regularization_bounds(request):
    rng = np.random.default_rng(10)
    margins = {k: [] for k in ("chi2-variance", "w1-lipschitz-ub", "wp-variation", "risk-lipschitz")}
    w1_tight = []
    for _ in range(100):
        d = int(rng.integers(1, 3))
        P = O.random_discrete(rng, d, int(rng.integers(2, 5)))
        aff = O.random_affine_loss(rng, d, int(rng.integers(1, 4)))
        r = float(rng.uniform(0.01, 0.5))
        margins["chi2-variance"].append(bound_check("chi2-variance", aff, P, r).margin)
        m = bound_check("w1-lipschitz-ub", aff, P, r).margin
        margins["w1-lipschitz-ub"].append(m)
        w1_tight.append(abs(m))
        B = rng.normal(size=(d, d))
        quad = PiecewiseLoss.quadratic(B @ B.T / d + 0.1 * np.eye(d), rng.normal(size=d), rng.normal())
        margins["wp-variation"].append(bound_check("wp-variation", quad, P, r, p=2).margin)
        risk = RiskSpec("cvar", float(rng.uniform(0.1, 0.9)))
        margins["risk-lipschitz"].append(bound_check("risk-lipschitz", aff, P, r, p=1, risk=risk).margin)
    U = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5])
    chi_tight = bound_check("chi2-variance", LIN, U, 0.1).margin
    lows = {k: min(v) for k, v in margins.items()}
    note(request, "min margins " + ", ".join(f"{k} {v:.1e}" for k, v in lows.items())
         + f"; chi2 tight {chi_tight:.1e}; W1 max |margin| {max(w1_tight):.1e}")
    for k, v in lows.items():
        assert v >= -1e-8, (k, v)
    assert abs(chi_tight) <= 1e-8
    assert max(w1_tight) <= 1e-8


# ---------------------------------------------------------------------------
# 11. CLI determinism
# ---------------------------------------------------------------------------

SCARF_FILE = {"support": {"kind": "reals", "dim": 1},
              "reference": {"type": "moments", "mean": [0.0], "cov": [[1.0]]},
              "ambiguity": {"family": "chebyshev"},
              "loss": {"affine": {"slopes": [[1.0], [0.0]], "intercepts": [-1.0, 0.0]}}}
NV_FILE = {"support": {"kind": "box", "lower": [-4], "upper": [6]},
           "reference": {"type": "moments", "mean": [1.0], "cov": [[0.25]]},
           "ambiguity": {"family": "chebyshev"},
           "loss": {"coupled": [{"A": [[0.0]], "b": [2.0], "c": [-2.0]}, {"A": [[0.0]], "b": [-1.0], "c": [1.0]}]},
           "decision": {"lower": [0.0], "upper": [3.0]}}


def _run_cli(args):
    out = subprocess.run([sys.executable, "-m", "drokit.cli"] + args, capture_output=True, timeout=600)
    return out.returncode, out.stdout


def test_criterion_11_cli_determinism(request, tmp_path):
    scarf_path, nv_path = tmp_path / "scarf.json", tmp_path / "nv.json"
    scarf_path.write_text(json.dumps(SCARF_FILE))
    nv_path.write_text(json.dumps(NV_FILE))
    commands = [
        ["distance", "--type", "kl", "[0.5, 0.5]", "[0.25, 0.75]"],
        ["distance", "--type", "w2", '{"atoms": [[0], [1]], "probs": [0.5, 0.5]}', "[0.2, 0.8]"],
        ["worst-case", "--problem", str(scarf_path)],
        ["worst-case", "--problem", str(scarf_path), "--method", "reformulation"],
        ["extremal", "--problem", str(scarf_path)],
        ["solve", "--problem", str(nv_path), "--algorithm", "cutting-plane"],
        ["solve", "--problem", str(nv_path), "--algorithm", "scenario", "--seed", "3"],
        ["check", "--suite", "calibrate", "--d", "3", "--n", "100", "--eta", "0.05", "--c1", "1", "--c2", "1",
         "--alpha", "2"],
        ["check", "--suite", "scenario", "--trials", "50", "--seed", "4"],
        ["check", "--suite", "disappointment", "--trials", "50", "--seed", "4"],
    ]
    same = 0
    for cmd in commands:
        a, b = _run_cli(cmd), _run_cli(cmd)
        assert a[0] == 0, (cmd, a)
        assert a == b, cmd
        json.loads(a[1])
        same += 1
    note(request, f"{same}/{len(commands)} commands byte-identical across two runs")
