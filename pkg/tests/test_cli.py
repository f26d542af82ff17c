import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drokit.cli import distance, emit_problem, main, parse_problem

SCARF_DOC = {"support": {"kind": "reals", "dim": 1},
             "reference": {"type": "moments", "mean": [0.0], "cov": [[1.0]]},
             "ambiguity": {"family": "chebyshev"},
             "loss": {"affine": {"slopes": [[1.0], [0.0]], "intercepts": [-1.0, 0.0]}}}
NV_DOC = {"support": {"kind": "box", "lower": [-4], "upper": [6]},
          "reference": {"type": "moments", "mean": [1.0], "cov": [[0.25]]},
          "ambiguity": {"family": "chebyshev"},
          "loss": {"coupled": [{"A": [[0.0]], "b": [2.0], "c": [-2.0]}, {"A": [[0.0]], "b": [-1.0], "c": [1.0]}]},
          "decision": {"lower": [0.0], "upper": [3.0]}}


def run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr().out


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, doc in (("scarf", SCARF_DOC), ("nv", NV_DOC)):
        paths[name] = tmp_path / f"{name}.json"
        paths[name].write_text(json.dumps(doc))
    return paths


def test_distance_command(capsys):
    code, out = run(capsys, ["distance", "--type", "kl", "[0.5, 0.5]", "[0.25, 0.75]"])
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(0.5 * np.log(2) + 0.5 * np.log(2 / 3))
    assert distance("w1", [1.0], {"atoms": [[1.0]], "probs": [1.0]}) == pytest.approx(1.0)
    assert distance("gelbrich", [0, 1], [0, 4]) == pytest.approx(1.0)


def test_worst_case_and_extremal(capsys, files):
    code, out = run(capsys, ["worst-case", "--problem", str(files["scarf"])])
    assert code == 0 and json.loads(out)["value"] == pytest.approx(0.5 * (np.sqrt(2) - 1))
    code, out = run(capsys, ["worst-case", "--problem", str(files["scarf"]), "--method", "reformulation"])
    assert code == 0 and json.loads(out)["value"] == pytest.approx(0.5 * (np.sqrt(2) - 1), abs=1e-6)
    code, out = run(capsys, ["extremal", "--problem", str(files["scarf"])])
    assert code == 0 and "extremal" in json.loads(out)


def test_text_format(capsys, files):
    code, out = run(capsys, ["worst-case", "--problem", str(files["scarf"]), "--format", "text"])
    assert code == 0
    assert any(line.startswith("value: ") for line in out.splitlines())


def test_solve_command(capsys, files):
    code, out = run(capsys, ["solve", "--problem", str(files["nv"]), "--algorithm", "cutting-plane"])
    rep = json.loads(out)
    assert code == 0 and rep["objective"] == pytest.approx(np.sqrt(2) / 2, abs=1e-4)


def test_timeout_exit_code(capsys, files):
    code, out = run(capsys, ["solve", "--problem", str(files["nv"]), "--algorithm", "cutting-plane",
                             "--max-iter", "2"])
    assert code == 6 and json.loads(out)["status"] == "timeout"


def test_invalid_inputs(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"support": {"kind": "reals", "dim": 1}}))
    assert run(capsys, ["worst-case", "--problem", str(bad)])[0] == 4
    assert run(capsys, ["worst-case", "--problem", str(tmp_path / "missing.json")])[0] == 4
    for argv in (["distance", "--type", "nope", "[1]", "[1]"], ["frobnicate"]):
        with pytest.raises(SystemExit) as err:
            main(argv)
        assert err.value.code == 4


def test_check_calibrate(capsys):
    code, out = run(capsys, ["check", "--suite", "calibrate", "--d", "3", "--n", "100", "--eta", "0.05",
                             "--c1", "1", "--c2", "1", "--alpha", "2"])
    assert code == 0 and json.loads(out)["passed"]


def test_output_is_deterministic(capsys, files):
    argv = ["solve", "--problem", str(files["nv"]), "--algorithm", "scenario", "--seed", "5"]
    assert run(capsys, argv) == run(capsys, argv)


radius = st.floats(0.0, 2.0, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(radius, st.sampled_from(["wasserstein-p", "phi-divergence", "total-variation"]),
       st.lists(st.floats(-1, 1), min_size=2, max_size=4))
def test_parse_emit_round_trip(r, fam, xs):
    pts = sorted(set(round(x, 6) for x in xs)) or [0.0]
    amb = {"family": fam, "radius": min(r, 1.0)}
    if fam == "phi-divergence":
        amb["phi"] = "kl"
    doc = {"support": {"kind": "box", "lower": [-1.0], "upper": [1.0]},
           "reference": {"type": "discrete", "atoms": [[p] for p in pts], "probs": [1 / len(pts)] * len(pts)},
           "ambiguity": amb,
           "loss": {"affine": {"slopes": [[1.0], [-2.0]], "intercepts": [0.5, 0.0]}}}
    once = emit_problem(parse_problem(doc))
    twice = emit_problem(parse_problem(json.loads(json.dumps(once))))
    assert once == twice
