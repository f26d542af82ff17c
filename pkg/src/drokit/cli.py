"""Command-line front end.

Problem files are JSON documents with sections `support`, `reference`,
`ambiguity`, `loss`, `risk`, `decision` (optional) and `options`. Quadratic
pieces follow the core convention z'Qz + 2q'z + q0; matrices are row-major
nested arrays. Reports go to stdout with sorted keys, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from .closedform import WorstCaseResult, _jsonable
from .core import (AmbiguitySpec, BiAffinePiece, DiscreteDistribution, DroError, GaussianSpec, InvalidInput,
                   MomentPair, PiecewiseLoss, QuadForm, RiskSpec, SupportSet, TimeoutWithIncumbent)
from .divergence import family, phi_divergence
from .reformulate import MomentSet, chebyshev_worst_case, ot_worst_case, phi_worst_case
from .solve import METHODS, DecisionSet, DroProblem, solve_dro, worst_case
from .transport import (TransportCost, gelbrich_distance, levy_prokhorov, total_variation, wasserstein_inf,
                        wasserstein_p)

log = logging.getLogger("drokit")

SUITES = ("oracle", "taylor", "bounds", "disappointment", "scenario", "calibrate")
DISTANCES = ("kl", "tv", "chi2", "w1", "w2", "winf", "lp", "gelbrich")
WC_METHODS = ("auto", "closed-form", "reformulation", "oracle")
CONIC_METHODS = ("chebyshev-sdp", "chebyshev-bidual", "phi-dual", "phi-bidual", "ot-conic", "ot-bidual")


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

def _need(sec: dict, key: str, where: str):
    if key not in sec:
        raise InvalidInput(f"{where}: missing field {key!r}")
    return sec[key]


def _quad(d: dict) -> QuadForm:
    q = _need(d, "q", "quadratic piece")
    n = len(np.atleast_1d(q))
    return QuadForm(d.get("Q", np.zeros((n, n))), q, d.get("q0", 0.0))


def parse_support(d: dict) -> SupportSet:
    kind = _need(d, "kind", "support")
    if kind == "reals":
        return SupportSet.reals(_need(d, "dim", "support"))
    if kind == "box":
        return SupportSet.box(_need(d, "lower", "support"), _need(d, "upper", "support"))
    if kind == "ellipsoid":
        return SupportSet.ellipsoid(_need(d, "center", "support"), _need(d, "shape", "support"))
    if kind == "simplex":
        return SupportSet.simplex(_need(d, "dim", "support"))
    if kind == "convex-quadratic-intersection":
        return SupportSet.intersection([_quad(g) for g in _need(d, "constraints", "support")])
    raise InvalidInput(f"unknown support kind {kind!r}")


def parse_reference(d):
    if d is None:
        return None
    kind = _need(d, "type", "reference")
    if kind == "discrete":
        return DiscreteDistribution(_need(d, "atoms", "reference"), _need(d, "probs", "reference"))
    if kind == "gaussian":
        return GaussianSpec(_need(d, "mean", "reference"), _need(d, "cov", "reference"))
    if kind == "moments":
        if "second" in d:
            return MomentPair(_need(d, "mean", "reference"), d["second"])
        return MomentPair.from_cov(_need(d, "mean", "reference"), _need(d, "cov", "reference"))
    raise InvalidInput(f"unknown reference type {kind!r}")


def emit_reference(ref) -> Optional[dict]:
    if ref is None:
        return None
    if isinstance(ref, DiscreteDistribution):
        return {"type": "discrete", **ref.to_dict()}
    if isinstance(ref, GaussianSpec):
        return {"type": "gaussian", **ref.to_dict()}
    return {"type": "moments", **ref.to_dict()}


def parse_loss(d: dict) -> PiecewiseLoss:
    if "affine" in d:
        a = d["affine"]
        return PiecewiseLoss.affine(_need(a, "slopes", "loss.affine"), _need(a, "intercepts", "loss.affine"))
    if "coupled" in d:
        return PiecewiseLoss(coupled=tuple(BiAffinePiece(p["A"], p["b"], p["c"], p.get("d", 0.0))
                                           for p in d["coupled"]))
    return PiecewiseLoss(tuple(_quad(p) for p in _need(d, "pieces", "loss")))


def parse_cost(d) -> Optional[TransportCost]:
    if d is None:
        return None
    return TransportCost(**d)


def emit_cost(c: Optional[TransportCost]) -> Optional[dict]:
    if c is None:
        return None
    out = {"kind": c.kind, "p": c.p, "norm": c.norm, "threshold": c.threshold}
    if c.matrix is not None:
        out["matrix"] = np.asarray(c.matrix).tolist()
    return out


AMB_FIELDS = ("radius", "phi", "cr_beta", "restricted", "norm", "p")


def parse_problem(doc: dict) -> dict:
    """JSON document -> dict of core objects (support, reference, ambiguity, loss, risk, decision, options)."""
    if not isinstance(doc, dict):
        raise InvalidInput("problem file must hold a JSON object")
    support = parse_support(_need(doc, "support", "problem"))
    ref = parse_reference(doc.get("reference"))
    a = dict(_need(doc, "ambiguity", "problem"))
    fam = _need(a, "family", "ambiguity")
    unknown = set(a) - set(AMB_FIELDS) - {"family", "cost"}
    if unknown:
        raise InvalidInput(f"ambiguity: unknown fields {sorted(unknown)}")
    kw = {k: a[k] for k in AMB_FIELDS if k in a}
    amb = AmbiguitySpec(fam, support, ref, cost=parse_cost(a.get("cost")), **kw)
    loss = parse_loss(_need(doc, "loss", "problem"))
    if loss.dim != support.dim:
        raise InvalidInput("loss and support dimensions differ")
    risk = RiskSpec(**doc.get("risk", {"kind": "expectation"}))
    dec = doc.get("decision")
    decision = DecisionSet(dec["lower"], dec["upper"], dec.get("A"), dec.get("b")) if dec else None
    return {"support": support, "reference": ref, "ambiguity": amb, "loss": loss, "risk": risk,
            "decision": decision, "options": dict(doc.get("options", {}))}


def emit_problem(prob: dict) -> dict:
    """Inverse of parse_problem."""
    amb: AmbiguitySpec = prob["ambiguity"]
    a = {"family": amb.family, "radius": amb.radius, "restricted": amb.restricted, "norm": amb.norm,
         "p": amb.p}
    if amb.phi is not None:
        a["phi"] = amb.phi
    if amb.cr_beta is not None:
        a["cr_beta"] = amb.cr_beta
    if amb.cost is not None:
        a["cost"] = emit_cost(amb.cost)
    out = {"support": prob["support"].to_dict(), "reference": emit_reference(prob["reference"]),
           "ambiguity": a, "loss": prob["loss"].to_dict(), "risk": prob["risk"].to_dict(),
           "options": dict(prob.get("options") or {})}
    if prob.get("decision") is not None:
        out["decision"] = prob["decision"].to_dict()
    return _jsonable(out)


def load_problem(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInput(f"cannot read problem file: {exc}")
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"problem file is not valid JSON: {exc}")
    try:
        return parse_problem(doc)
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed problem file: {exc!r}")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=False)


def _text_lines(obj, path=""):
    if isinstance(obj, dict) and obj:
        for k in sorted(obj):
            yield from _text_lines(obj[k], f"{path}.{k}" if path else k)
    else:
        yield f"{path}: {json.dumps(obj)}"


def emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(dumps(report) + "\n")
    else:
        for line in _text_lines(_jsonable(report)):
            sys.stdout.write(line + "\n")


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def _read_spec(text: str):
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"distribution spec is not valid JSON: {exc}")


def _as_discrete(spec) -> DiscreteDistribution:
    if isinstance(spec, list):
        return DiscreteDistribution(np.arange(len(spec), dtype=float), spec)
    if isinstance(spec, dict) and "probs" in spec:
        return DiscreteDistribution(spec.get("atoms", np.arange(len(spec["probs"]), dtype=float)), spec["probs"])
    raise InvalidInput("expected a probability vector or {atoms, probs}")


def _as_moments(spec):
    """[mean, variance] in 1-D, {mean, cov}, or a discrete distribution."""
    if isinstance(spec, list) and len(spec) == 2 and all(np.isscalar(v) for v in spec):
        return GaussianSpec([spec[0]], [[spec[1]]])
    if isinstance(spec, dict) and "cov" in spec:
        return GaussianSpec(spec["mean"], spec["cov"])
    P = _as_discrete(spec)
    return GaussianSpec(P.mean(), P.covariance())


def distance(kind: str, a, b, norm=2) -> float:
    if kind == "gelbrich":
        return gelbrich_distance(_as_moments(a), _as_moments(b))
    P, Q = _as_discrete(a), _as_discrete(b)
    if kind == "kl":
        return phi_divergence(family("kl"), P, Q)
    if kind == "chi2":
        return phi_divergence(family("pearson-chi2"), P, Q)
    if kind == "tv":
        return total_variation(P, Q)
    if kind == "w1":
        return wasserstein_p(P, Q, 1.0, norm)
    if kind == "w2":
        return wasserstein_p(P, Q, 2.0, norm)
    if kind == "winf":
        return wasserstein_inf(P, Q, norm)
    if kind == "lp":
        return levy_prokhorov(P, Q, norm)
    raise InvalidInput(f"unknown distance {kind!r}")


def cmd_distance(args) -> dict:
    value = distance(args.type, _read_spec(args.first), _read_spec(args.second), args.norm)
    return {"command": "distance", "type": args.type, "value": value}


# ---------------------------------------------------------------------------
# worst case
# ---------------------------------------------------------------------------

def reformulation(amb: AmbiguitySpec, loss: PiecewiseLoss) -> WorstCaseResult:
    """Worst-case expectation through the conic reformulation only."""
    fam, S, ref = amb.family, amb.support, amb.reference
    mom = ref.moments() if isinstance(ref, GaussianSpec) else ref
    if fam == "markov":
        return chebyshev_worst_case(loss, S, MomentSet.mean_only(mom.mean))
    if fam == "chebyshev":
        return chebyshev_worst_case(loss, S, MomentSet.fixed(mom))
    if fam == "chebyshev-uncertain-moments":
        return chebyshev_worst_case(loss, S, MomentSet.bounded(mom))
    if fam == "gelbrich":
        return chebyshev_worst_case(loss, S, MomentSet.gelbrich(ref, amb.radius))
    if fam == "phi-divergence" and isinstance(ref, DiscreteDistribution):
        return phi_worst_case(loss, S, ref, family(amb.phi, amb.cr_beta), amb.radius, amb.restricted)
    if fam == "wasserstein-p":
        p = float(amb.p)
        return ot_worst_case(loss, S, ref, TransportCost("norm-power", p=p, norm=amb.norm), amb.radius**p)
    if fam == "ot-custom":
        return ot_worst_case(loss, S, ref, amb.cost or TransportCost(), amb.radius)
    raise InvalidInput(f"no conic reformulation for the {fam!r} family; use --method auto")


def evaluate(prob: dict, method: str, x=None) -> dict:
    amb, loss, risk = prob["ambiguity"], prob["loss"], prob["risk"]
    if loss.is_coupled:
        if x is None:
            raise InvalidInput("coupled loss: give the decision as options.x")
        loss = loss.at(x)
    if method == "oracle":
        from .verify import grid_oracle

        res = grid_oracle(loss, amb, int(prob["options"].get("resolution", 10001)), risk=risk)
        out = {"value": res.value, "method": "grid-oracle", "grid_size": res.grid_size,
               "box": [np.asarray(v).tolist() for v in res.box], "truncated": res.truncated}
        if res.distribution is not None:
            out["extremal"] = res.distribution.to_dict()
        return out
    if method == "reformulation":
        res = reformulation(amb, loss) if risk.kind == "expectation" else \
            worst_case(amb, loss, risk=risk, closed_form=False)
    else:
        res = worst_case(amb, loss, risk=risk)
        base = res.method.split(":")[-1]
        if method == "closed-form" and base in CONIC_METHODS:
            raise InvalidInput(f"no closed form applies (fell back to {res.method}); use --method auto")
    return res.to_dict()


def cmd_worst_case(args) -> dict:
    prob = _problem(args)
    out = evaluate(prob, args.method, prob["options"].get("x"))
    out["command"] = "worst-case"
    out["requested_method"] = args.method
    return out


def cmd_extremal(args) -> dict:
    prob = _problem(args)
    res = evaluate(prob, args.method, prob["options"].get("x"))
    return {"command": "extremal", "value": res["value"], "method": res["method"],
            "extremal": res.get("extremal"), "attained": res.get("attained", res.get("extremal") is not None)}


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(args) -> dict:
    prob = _problem(args)
    problem = DroProblem(prob["loss"], prob["ambiguity"], prob["decision"], prob["risk"])
    opts = dict(prob["options"])
    opts.pop("x", None)
    opts.pop("resolution", None)
    for key, val in (("eps", args.eps), ("max_iter", args.max_iter), ("seed", args.seed)):
        if val is not None:
            opts[key] = val
    method = args.algorithm or opts.pop("algorithm", "auto")
    opts.pop("algorithm", None)
    rep = solve_dro(problem, method, opts)
    out = rep.to_dict()
    out["command"] = "solve"
    return out


# ---------------------------------------------------------------------------
# check suites
# ---------------------------------------------------------------------------

def _chk(name: str, passed: bool, **fields) -> dict:
    return {"name": name, "passed": bool(passed), **fields}


def suite_oracle(args) -> list:
    from .closedform import scarf, tv_worst_case, w1_lipschitz
    from .verify import grid_oracle

    out = []
    ramp = PiecewiseLoss.affine([[1.0], [0.0]], [-1.0, 0.0])
    amb = AmbiguitySpec("chebyshev", SupportSet.interval(-20, 20), MomentPair.from_cov([0.0], [[1.0]]))
    exact = scarf(1.0, 0.0, 1.0).value
    vals = [grid_oracle(ramp, amb, n).value for n in (2501, 5001, 10001)]
    out.append(_chk("scarf", abs(vals[-1] - exact) <= 1e-3 and vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12,
                    exact=exact, oracle=vals))
    lin = PiecewiseLoss.affine([[1.0]], [0.0])
    P = DiscreteDistribution([[0.0], [0.5], [1.0]], [1 / 3, 1 / 3, 1 / 3])
    S = SupportSet.interval(0, 1)
    exact = tv_worst_case(lin, P, S, 1 / 3).value
    v = grid_oracle(lin, AmbiguitySpec("total-variation", S, P, 1 / 3), 1001).value
    out.append(_chk("total-variation", abs(v - exact) <= 1e-9, exact=exact, oracle=v))
    v = grid_oracle(lin, AmbiguitySpec("wasserstein-p", S, P, 0.0), 1001).value
    out.append(_chk("ot-radius-zero", abs(v - 0.5) <= 1e-9, exact=0.5, oracle=v))
    hinge = PiecewiseLoss.affine([[1.0], [-2.0]], [0.0, 1.0])
    exact = w1_lipschitz(hinge, P, 0.1).value
    v = grid_oracle(hinge, AmbiguitySpec("wasserstein-p", SupportSet.reals(1), P, 0.1, p=1), 10001).value
    out.append(_chk("w1-lipschitz", abs(v - exact) <= 1e-3, exact=exact, oracle=v))
    return out


def suite_taylor(args) -> list:
    from .verify import taylor_check

    lin = PiecewiseLoss.affine([[1.0]], [0.0])
    U = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5])
    V = DiscreteDistribution([[-1.0], [1.0]], [0.5, 0.5])
    small = [1e-5, 3e-5, 1e-4, 3e-4, 1e-3]
    cases = [("pearson-chi2", lambda: taylor_check(lin, U, "phi-smooth", small)),
             ("kl", lambda: taylor_check(lin, U, "phi-smooth", small, phi="kl")),
             ("w1-affine", lambda: taylor_check(lin, U, "wasserstein-p", small, p=1)),
             ("w2-quadratic", lambda: taylor_check(PiecewiseLoss.quadratic([[1.0]], [0.0]), V, "wasserstein-p",
                                                   small, p=2))]
    out = []
    for name, run in cases:
        r = run()
        out.append(_chk(name, r.passed, slope=r.slope, expected=r.expected, rel_error=r.rel_error))
    return out


def suite_bounds(args) -> list:
    from .verify import bound_check

    rng = np.random.default_rng(args.seed)
    lin = PiecewiseLoss.affine([[1.0]], [0.0])
    U = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5])
    out = []
    r = bound_check("chi2-variance", lin, U, 0.1)
    out.append(_chk("chi2-tight", abs(r.margin) <= 1e-8, margin=r.margin))
    r = bound_check("w1-lipschitz-ub", PiecewiseLoss.affine([[1.0], [-2.0]], [0.0, 0.0]), U, 0.1)
    out.append(_chk("w1-tight", abs(r.margin) <= 1e-8, margin=r.margin))
    margins = []
    for _ in range(int(args.trials or 20)):
        n = int(rng.integers(2, 5))
        P = DiscreteDistribution.normalized(rng.normal(size=(n, 1)), rng.uniform(0.1, 1.0, n))
        loss = PiecewiseLoss.quadratic([[rng.uniform(0.1, 2.0)]], [rng.normal()], rng.normal())
        margins.append(bound_check("wp-variation", loss, P, float(rng.uniform(0.01, 0.5)), p=2).margin)
    out.append(_chk("wp-variation", min(margins) >= -1e-8, min_margin=min(margins), instances=len(margins)))
    return out


def suite_disappointment(args) -> list:
    from .verify import disappointment_mc

    U = DiscreteDistribution([[0.0], [1.0]], [0.5, 0.5])
    lin = PiecewiseLoss.affine([[1.0]], [0.0])
    trials = int(args.trials or 200)
    csv_dir = args.csv_dir
    paths = [os.path.join(csv_dir, f"disappointment_{t}.csv") if csv_dir else None for t in ("exact", "zero")]
    full = disappointment_mc(U, lin, "wasserstein-p", "exact", 10, trials, args.seed, csv_path=paths[0])
    zero = disappointment_mc(U, lin, "wasserstein-p", 0.0, 10, trials, args.seed, csv_path=paths[1])
    return [_chk("exact-radius", full.coverage == 1.0, coverage=full.coverage, ci=full.coverage_ci,
                 csv=paths[0]),
            _chk("radius-zero-lower", zero.coverage < full.coverage, coverage=zero.coverage,
                 ci=zero.coverage_ci, csv=paths[1])]


def suite_scenario(args) -> list:
    from .solve import scenario_sample_size
    from .verify import scenario_guarantee_mc, toy_scenario_instance

    path = os.path.join(args.csv_dir, "scenario.csv") if args.csv_dir else None
    n1, n2 = scenario_sample_size(1, 0.1, 0.05), scenario_sample_size(2, 0.1, 0.05)
    r = scenario_guarantee_mc(toy_scenario_instance(), 0.1, 0.05, int(args.trials or 500), args.seed,
                              csv_path=path)
    return [_chk("sample-size", (n1, n2) == (29, 46), N=[n1, n2]),
            _chk("guarantee", r.passed, failure_rate=r.failure_rate, threshold=r.threshold, N=r.N, csv=path)]


def suite_calibrate(args) -> list:
    from .verify import radius_calibration

    need = {"d": args.d, "n": args.n, "eta": args.eta, "c1": args.c1, "c2": args.c2, "alpha": args.alpha}
    missing = [k for k, v in need.items() if v is None]
    if missing:
        raise InvalidInput(f"calibrate suite needs --{' --'.join(missing)}")
    r = radius_calibration(args.d, args.n, args.eta, args.alpha, args.c1, args.c2, args.p)
    return [_chk("radius", math.isfinite(r) and r > 0, radius=r)]


SUITE_RUNNERS = {"oracle": suite_oracle, "taylor": suite_taylor, "bounds": suite_bounds,
                 "disappointment": suite_disappointment, "scenario": suite_scenario,
                 "calibrate": suite_calibrate}


def cmd_check(args) -> dict:
    if not args.suite or args.suite not in SUITES:
        raise InvalidInput(f"--suite must be one of {', '.join(SUITES)}")
    if args.csv_dir:
        os.makedirs(args.csv_dir, exist_ok=True)
    checks = SUITE_RUNNERS[args.suite](args)
    return {"command": "check", "suite": args.suite, "seed": args.seed, "checks": checks,
            "passed": all(c["passed"] for c in checks)}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the invalid-input status."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(InvalidInput.code)


def _problem(args) -> dict:
    if not args.problem:
        raise InvalidInput("--problem is required")
    return load_problem(args.problem)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="path to a JSON problem file")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="drokit", description="Worst-case risk evaluation and distributionally robust solves.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("distance", parents=[common], help="discrepancy between two distributions")
    p.add_argument("first", help="JSON spec or path: probability list, {atoms, probs}, or {mean, cov}")
    p.add_argument("second")
    p.add_argument("--type", choices=DISTANCES, required=True)
    p.add_argument("--norm", type=float, default=2.0)
    p.set_defaults(func=cmd_distance)

    for name, func, hlp in (("worst-case", cmd_worst_case, "worst-case risk of a problem file"),
                            ("extremal", cmd_extremal, "worst-case distribution of a problem file")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--method", choices=WC_METHODS, default="auto")
        p.set_defaults(func=func)

    p = sub.add_parser("solve", parents=[common], help="solve a DRO problem file")
    p.add_argument("--algorithm", choices=METHODS)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", parents=[common], help="run a verification suite")
    p.add_argument("--suite", default="")
    p.add_argument("--trials", type=int)
    p.add_argument("--csv-dir", dest="csv_dir")
    for flag in ("d", "n"):
        p.add_argument(f"--{flag}", type=int)
    for flag in ("eta", "c1", "c2", "alpha"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--p", type=float, default=1.0)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = args.func(args)
    except TimeoutWithIncumbent as exc:
        log.error("%s", exc)
        if exc.incumbent is not None:
            rep = exc.incumbent.to_dict()
            rep.update(command=args.command, status="timeout")
            emit(rep, args.format)
        return exc.code
    except DroError as exc:
        log.error("%s", exc)
        return exc.code
    except (ValueError, TypeError, KeyError) as exc:
        log.error("invalid input: %s", exc)
        return InvalidInput.code
    emit(report, args.format)
    if args.command == "check" and not report["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
