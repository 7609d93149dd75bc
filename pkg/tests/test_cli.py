import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from altphillips import make_exponents
from altphillips.cli import (
    COMMANDS,
    ExpressionError,
    compile_expression,
    dumps_csv,
    dumps_json,
    line_plot_svg,
    main,
    profile_from_dict,
    profile_to_dict,
    validate_params,
)
from altphillips.cones import shoot_from_edge
from altphillips.errors import ManifestError

MANIFESTS = Path(__file__).resolve().parents[1] / "manifests"


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def read(out, name):
    return json.loads((out / name).read_text())


# --- expression grammar ------------------------------------------------------


def test_expression_arithmetic_and_functions():
    fn = compile_expression("max(x - 0.5, 0) + sin(pi*y)^2 - exp(-x)/2", 2)
    x, y = np.array([0.2, 0.9]), np.array([0.5, 0.25])
    expected = np.maximum(x - 0.5, 0) + np.sin(np.pi * y) ** 2 - np.exp(-x) / 2
    assert np.allclose(fn(x, y), expected, rtol=1e-15)


def test_caret_is_power_with_power_precedence():
    fn = compile_expression("x^2+1", 1)
    assert fn(np.array([3.0]))[0] == 10.0
    assert compile_expression("-x^2", 1)(np.array([2.0]))[0] == -4.0


def test_constant_expression_broadcasts_to_grid():
    out = compile_expression("2", 2)(np.zeros((3, 4)), np.zeros((3, 4)))
    assert out.shape == (3, 4) and np.all(out == 2)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "open(x)", "[x]", "x if x else 1", "lambda: 1",
                                  "sin(x, x)", "max(x)", "z", "", "x +", "True", "'a'"])
def test_expression_rejects_everything_outside_the_grammar(text):
    with pytest.raises(ExpressionError):
        compile_expression(text, 2)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.sampled_from(["+", "-", "*"]))
def test_expression_matches_python_on_random_linear_forms(c, op):
    text = f"({c[0]!r})*x {op} ({c[1]!r})*y + ({c[2]!r})"
    x, y = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    assert np.allclose(compile_expression(text, 2)(x, y), eval(text, {}, {"x": x, "y": y}), rtol=1e-14, atol=1e-14)


# --- validation --------------------------------------------------------------


def test_validation_reports_every_field():
    with pytest.raises(ManifestError) as exc:
        validate_params("hardy", {"s": "abc", "bogus": 1})
    probs = exc.value.problems
    assert set(probs) == {"params.d", "params.s", "params.bogus"}
    assert probs["params.d"] == "required"


def test_validation_fills_defaults_and_converts_lists():
    p = validate_params("sweep", {"gammas": "-1,-1.5"})
    assert p["gammas"] == [-1.0, -1.5] and p["d"] == 4 and p["delta"] == 0.5


def test_every_schema_has_a_runner():
    assert set(COMMANDS) == {"exponents", "minimize", "hodograph", "cone-shoot", "stability", "spectrum", "sweep", "hardy"}


# --- subcommands -------------------------------------------------------------


def test_exponents_command_values(tmp_path):
    code, out = run(tmp_path, "exponents", "--gamma", "-1")
    assert code == 0
    row = read(out, "result.json")["exponents"][0]
    assert row["beta"] == pytest.approx(2 / 3, rel=1e-15)
    assert row["s"] == pytest.approx(-2 / 3, rel=1e-15)
    assert row["c_beta"] == pytest.approx((2 / 3) ** (-2 / 3), rel=1e-15)
    assert (out / "exponents.csv").read_text().startswith("gamma,beta,s,c_beta")


def test_hardy_command_classical_value(tmp_path):
    code, out = run(tmp_path, "hardy", "--d", "3", "--s", "0")
    assert code == 0
    assert read(out, "result.json")["rows"][0]["constant"] == pytest.approx(0.25, rel=2e-2)


def test_malformed_manifest_exits_two_with_field_report(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"subcommand": "hardy", "params": {"d": [3], "s": [-2.0]}, "colour": 1}))
    code = main(["run", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    bad.write_text(json.dumps({"subcommand": "hardy", "params": {"d": [3], "s": [-2.0]}}))
    code = main(["run", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2
    assert read(tmp_path / "o", "error.json")["problems"] == {"params.s": "must exceed -1"}


def test_unparsable_manifest_exits_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_bad_expression_is_a_manifest_error(tmp_path):
    code, out = run(tmp_path, "stability", "--gamma", "-0.5", "--f", "open(x)")
    assert code == 2
    assert "params.f[0]" in read(out, "error.json")["problems"]


def test_numerical_failure_exits_one(tmp_path):
    code, out = run(tmp_path, "minimize", "--gamma", "-1", "--max-iters", "2")
    assert code == 1
    assert read(out, "error.json")["status"] == "numerical-failure"
    assert read(out, "result.json")["converged"] is False


def test_thread_variable_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("ALTPHILLIPS_THREADS", "zero")
    code, out = run(tmp_path, "hardy", "--d", "3", "--s", "0")
    assert code == 2
    assert "env.ALTPHILLIPS_THREADS" in read(out, "error.json")["problems"]


def test_cone_profile_file_feeds_spectrum(tmp_path):
    code, out = run(tmp_path, "cone-shoot", "--d", "4", "--gamma", "-1", "--theta0", repr(math.pi / 2))
    assert code == 0
    code = main(["spectrum", "--profile", str(out / "profile.json"), "--out", str(tmp_path / "section")])
    assert code == 0
    res = read(tmp_path / "section", "result.json")
    assert abs(res["lambda"]) < 1e-6 and res["stable"] is True


def test_profile_round_trip():
    p = shoot_from_edge(math.pi / 3, 3, make_exponents(-0.5))
    q = profile_from_dict(json.loads(dumps_json(profile_to_dict(p))))
    assert q.theta0 == p.theta0 and q.d == p.d and q.collapsed == p.collapsed
    assert np.array_equal(q.g, p.g) and np.array_equal(q.dg, p.dg)
    assert q.axis_defect == p.axis_defect or (math.isnan(q.axis_defect) and math.isnan(p.axis_defect))


def test_flags_override_manifest(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"subcommand": "hardy", "params": {"d": [5], "s": [0.0]}}))
    code, out = run(tmp_path, "hardy", "--manifest", str(m), "--d", "3")
    assert code == 0
    assert read(out, "params.json")["params"]["d"] == [3.0]


def test_run_meta_records_versions_and_seed(tmp_path):
    code, out = run(tmp_path, "exponents", "--gamma", "0.5", "--seed", "7")
    meta = read(out, "run_meta.json")
    assert code == 0 and meta["seed"] == 7
    assert set(meta["versions"]) == {"altphillips", "numpy", "scipy", "python"}
    assert meta["seconds"] >= 0


# --- writers -----------------------------------------------------------------


def test_json_writer_is_canonical():
    a = dumps_json({"b": np.float64(1.5), "a": [np.int64(2), float("nan"), np.array([1.0, np.inf])]})
    assert a == dumps_json({"a": [2, float("nan"), [1.0, float("inf")]], "b": 1.5})
    assert json.loads(a) == {"a": [2, "nan", [1.0, "inf"]], "b": 1.5}


def test_csv_writer_round_trips_floats():
    text = dumps_csv(["v"], [[0.1 + 0.2], [np.float64(1e-300)], [True]])
    lines = text.splitlines()
    assert float(lines[1]) == 0.1 + 0.2 and float(lines[2]) == 1e-300 and lines[3] == "true"


def test_svg_is_well_formed_and_breaks_at_nan():
    svg = line_plot_svg([("a", [0, 1, 2, 3], [0, 1, float("nan"), 2]), ("b", [0, 3], [1, 1])], "t", "x", "y")
    root = ET.fromstring(svg)
    lines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(lines) == 3


# --- shipped manifests -------------------------------------------------------


@pytest.mark.parametrize("name", ["01_exponents", "05_ode_average", "08_hardy", "11_sweep"])
def test_manifest_output_is_byte_identical_across_thread_counts(tmp_path, monkeypatch, name):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("ALTPHILLIPS_THREADS", threads)
        out = tmp_path / threads
        assert main(["run", str(MANIFESTS / f"{name}.json"), "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir() if p.name != "run_meta.json")
    assert files == sorted(p.name for p in outs[1].iterdir() if p.name != "run_meta.json")
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_every_shipped_manifest_validates():
    names = sorted(MANIFESTS.glob("*.json"))
    assert len(names) >= 11
    for path in names:
        data = json.loads(path.read_text())
        validate_params(data["subcommand"], data["params"])
