"""Command line front end.

Every subcommand takes its parameters from flags, from a JSON manifest, or
both (flags win).  A manifest looks like

    {"subcommand": "hardy", "params": {"d": 3, "s": 0.0}, "output": "out/hardy", "seed": 0}

Each run writes result.json, one or more CSV tables, optional SVG plots and
run_meta.json (versions, parameters, timings) into the output directory.
result.json and the CSV files depend only on the manifest; run_meta.json
carries the timings and is the only file that changes between runs.

Exit status: 0 ok, 1 numerical failure (diagnostics in error.json), 2 invalid
manifest or flags (field-level report in error.json and on stderr).
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import operator
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .errors import AltPhillipsError, ManifestError

THREADS_ENV = "ALTPHILLIPS_THREADS"
REQUIRED = object()


# ---------------------------------------------------------------------------
# expression grammar


class ExpressionError(ValueError):
    pass


_BINARY = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCTIONS = {"sin": (np.sin, 1), "cos": (np.cos, 1), "exp": (np.exp, 1), "max": (np.maximum, 2)}
_CONSTANTS = {"pi": math.pi}
COORDINATE_NAMES = ("x", "y", "z")


def compile_expression(text: str, dim: int) -> Callable:
    """Compile an arithmetic expression in the coordinates x, y, z (first `dim` of them).

    Grammar: numbers, coordinates, pi, + - * / and ^ (or **), unary minus,
    sin, cos, exp and two-argument max.  Anything else is rejected.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("expression must be a non-empty string")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    names = COORDINATE_NAMES[:dim]

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in names:
                k = names.index(node.id)
                return lambda env: env[k]
            if node.id in _CONSTANTS:
                v = _CONSTANTS[node.id]
                return lambda env: v
            raise ExpressionError(f"unknown name {node.id!r} (coordinates here: {', '.join(names)})")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            op, a, b = _BINARY[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, a = _UNARY[type(node.op)], build(node.operand)
            return lambda env: op(a(env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCTIONS:
            fn, arity = _FUNCTIONS[node.func.id]
            if node.keywords or len(node.args) != arity:
                raise ExpressionError(f"{node.func.id} takes {arity} positional argument(s)")
            args = [build(a) for a in node.args]
            return lambda env: fn(*(a(env) for a in args))
        raise ExpressionError(f"unsupported syntax in {text!r}: {type(node).__name__}")

    body = build(tree)

    def evaluate(*coords):
        coords = [np.asarray(c, float) for c in coords]
        with np.errstate(all="ignore"):
            out = np.asarray(body(coords), float)
        return np.broadcast_to(out, np.broadcast_shapes(*(c.shape for c in coords))).copy()

    return evaluate


# ---------------------------------------------------------------------------
# parameter schemas


@dataclass(frozen=True)
class Param:
    kind: str  # float, int, bool, str, floats, ints, expr, exprs, path
    default: Any = REQUIRED
    help: str = ""


def _as_float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ValueError("expected a number")
    out = float(v)
    if not math.isfinite(out):
        raise ValueError("expected a finite number")
    return out


def _as_int(v):
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, float) and not v.is_integer():
        raise ValueError("expected an integer")
    return int(v)


def _as_list(v, conv):
    if isinstance(v, str):
        v = [p for p in v.split(",") if p.strip()]
    if not isinstance(v, (list, tuple)):
        v = [v]
    return [conv(x) for x in v]


def _as_bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "yes", "1", "false", "no", "0"):
        return v.lower() in ("true", "yes", "1")
    raise ValueError("expected true or false")


def _convert(kind, v):
    if kind == "float":
        return _as_float(v)
    if kind == "int":
        return _as_int(v)
    if kind == "bool":
        return _as_bool(v)
    if kind in ("str", "expr", "path"):
        if not isinstance(v, str):
            raise ValueError("expected a string")
        return v
    if kind == "floats":
        return _as_list(v, _as_float)
    if kind == "ints":
        return _as_list(v, _as_int)
    if kind == "exprs":
        out = _as_list(v, str) if not isinstance(v, str) else [v]
        return out
    raise ValueError(f"unknown parameter kind {kind}")


def validate_params(command: str, raw: dict) -> dict:
    """Typed parameters with defaults filled in; raises ManifestError listing every problem."""
    schema = COMMANDS[command].schema
    problems = {}
    out = {}
    if not isinstance(raw, dict):
        raise ManifestError({"params": "must be an object"})
    for key in sorted(set(raw) - set(schema)):
        problems[f"params.{key}"] = "unknown parameter"
    for key, p in schema.items():
        if key not in raw or raw[key] is None:
            if p.default is REQUIRED:
                problems[f"params.{key}"] = "required"
            else:
                out[key] = p.default
            continue
        try:
            out[key] = _convert(p.kind, raw[key])
        except (TypeError, ValueError) as exc:
            problems[f"params.{key}"] = str(exc)
    if not problems:
        problems.update(COMMANDS[command].check(out))
    if problems:
        raise ManifestError(problems)
    return out


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_cell(v) for v in row])
    return buf.getvalue()


def line_plot_svg(series, title: str, xlabel: str, ylabel: str, width: int = 560, height: int = 360) -> str:
    """Minimal SVG line plot; series is a list of (label, xs, ys).  Non-finite points break the line."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{xlabel}</text>',
           f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>']
    for k in range(5):
        xv, yv = x0 + k * (x1 - x0) / 4, y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 15}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = colors[i % len(colors)]
        runs, cur = [], []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                cur.append(f"{sx(x):.2f},{sy(y):.2f}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        for run in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(run)}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * i}" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


class Artifacts:
    """Collects the files of one run; nothing is written until `write`."""

    def __init__(self):
        self.files: dict = {}
        self.exit_code = 0
        self.failure: str | None = None

    def json(self, name, obj):
        self.files[name] = dumps_json(obj)

    def csv(self, name, header, rows):
        self.files[name] = dumps_csv(header, rows)

    def svg(self, name, text):
        self.files[name] = text

    def fail(self, message: str):
        """Mark a numerical failure; results are still written."""
        self.exit_code = 1
        self.failure = message

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.files.items()):
            (out / name).write_text(text)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ManifestError({f"env.{THREADS_ENV}": f"must be a positive integer, got {raw!r}"})
    return n


def parallel_map(fn, items, threads: int):
    """Ordered map; per-item results do not depend on the thread count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# shared checks


def _gamma_problem(key, g):
    return {} if -2 < g < 2 else {f"params.{key}": "must lie in (-2, 2)"}


def _box(params, dim_key="shape"):
    shape, lo, hi = params[dim_key], params["lower"], params["upper"]
    problems = {}
    if not 1 <= len(shape) <= 3:
        problems[f"params.{dim_key}"] = "needs 1 to 3 entries"
    elif any(n < 3 for n in shape):
        problems[f"params.{dim_key}"] = "every entry must be at least 3"
    if len(lo) != len(shape):
        problems["params.lower"] = f"needs {len(shape)} entries"
    if len(hi) != len(shape):
        problems["params.upper"] = f"needs {len(shape)} entries"
    if not problems and any(b <= a for a, b in zip(lo, hi)):
        problems["params.upper"] = "must exceed lower in every entry"
    return problems


def _expr_problems(params, keys, dim):
    problems = {}
    for key in keys:
        vals = params[key]
        for i, text in enumerate(vals if isinstance(vals, list) else [vals]):
            if text is None:
                continue
            try:
                compile_expression(text, dim)
            except ExpressionError as exc:
                where = f"params.{key}" if not isinstance(vals, list) else f"params.{key}[{i}]"
                problems[where] = str(exc)
    return problems


def _field(params, text):
    from .fields import ScalarField

    fn = compile_expression(text, len(params["shape"]))
    return ScalarField.on_box(fn, params["lower"], params["upper"], params["shape"])


# ---------------------------------------------------------------------------
# subcommands


def _check_exponents(p):
    problems = {}
    for g in p["gamma"]:
        problems.update(_gamma_problem("gamma", g))
    if any(t <= 0 for t in p["t"]):
        problems["params.t"] = "sample points must be positive"
    return problems


def run_exponents(p, art: Artifacts, threads: int):
    from .exponents import d7_gamma_threshold, dimension_window, make_exponents, one_dim_solution

    rows, packs = [], []
    t = np.asarray(p["t"], float)
    for g in p["gamma"]:
        pack = make_exponents(g)
        u, w = one_dim_solution(t, pack)
        # u'' of c t**beta against (gamma/2) u**(gamma-1)
        upp = pack.c_beta * pack.beta * (pack.beta - 1) * t ** (pack.beta - 2)
        res = float(np.max(np.abs(upp - 0.5 * g * u ** (g - 1)) / np.abs(upp).clip(1e-300)))
        fb = float(np.max(np.abs(t**pack.s * (w / t - 1))))
        defects = pack.identity_defects()
        win = dimension_window(pack.s) if pack.s <= 1 else None
        row = dict(gamma=pack.gamma, beta=pack.beta, s=pack.s, c_beta=pack.c_beta,
                   defect_one_plus_s=defects["one_plus_s"], defect_c_beta=defects["c_beta"],
                   window_low=win.d_low if win else math.nan, window_high=win.d_high if win else math.nan,
                   ode_residual=res, free_boundary_defect=fb)
        packs.append(row)
        rows.append(list(row.values()))
    art.json("result.json", {"exponents": packs, "d7_gamma_threshold": d7_gamma_threshold()})
    art.csv("exponents.csv", list(packs[0].keys()), rows)


def _check_minimize(p):
    problems = _gamma_problem("gamma", p["gamma"])
    problems.update(_box(p))
    if not problems:
        problems.update(_expr_problems(p, ["initial", "boundary"], len(p["shape"])))
    if p["max_iters"] < 1:
        problems["params.max_iters"] = "must be positive"
    return problems


def run_minimize(p, art: Artifacts, threads: int):
    from .exponents import make_exponents
    from .minimize import DescentConfig, minimize_projected

    pack = make_exponents(p["gamma"])
    init = _field(p, p["initial"])
    if np.any(init.values < 0):
        init = init.with_values(np.maximum(init.values, 0.0))
    data = _field(p, p["boundary"]) if p["boundary"] else init
    r = minimize_projected(init, pack, DescentConfig(max_iters=p["max_iters"]), boundary=data.values.clip(0))
    coords = [c.ravel() for c in r.field.coords()]
    names = list(COORDINATE_NAMES[: len(coords)])
    art.csv("field.csv", names + ["w"], zip(*coords, r.field.values.ravel()))
    art.csv("energy.csv", ["iteration", "energy"], enumerate(r.energy_trace))
    result = {"energy": r.energy, "converged": r.converged, "iterations": r.iterations, "message": r.message,
              "snapped": r.snapped, "reactivated": r.reactivated, "residual": r.residual,
              "positive_fraction": float(np.mean(r.field.values > 0))}
    if len(coords) == 1:
        zero = coords[0][r.field.values == 0]
        result["front"] = float(zero.max()) if zero.size else math.nan
    art.json("result.json", result)
    if p["svg"]:
        art.svg("energy.svg", line_plot_svg([("E_h", list(range(len(r.energy_trace))), r.energy_trace)],
                                            "discrete energy", "iteration", "energy"))
    if not r.converged:
        art.fail(f"descent did not converge: {r.message}")


def _check_hodograph(p):
    problems = {}
    if not p["s"] > -1:
        problems["params.s"] = "must exceed -1"
    if p["mode"] not in ("solve", "ode-average"):
        problems["params.mode"] = "must be 'solve' or 'ode-average'"
    problems.update(_box(p))
    if not problems:
        keys = ["data"] if p["mode"] == "solve" else ["f", "closed_form"]
        problems.update(_expr_problems(p, keys, len(p["shape"])))
        if p["mode"] == "ode-average" and not p["f"]:
            problems["params.f"] = "required in ode-average mode"
        if p["mode"] == "solve" and len(p["shape"]) < 2:
            problems["params.shape"] = "the solver needs 2 or 3 dimensions"
    return problems


def run_hodograph(p, art: Artifacts, threads: int):
    from .hodograph import NewtonConfig, solve_quasilinear, weighted_ode_average

    coords_names = list(COORDINATE_NAMES[: len(p["shape"])])
    if p["mode"] == "ode-average":
        f = _field(p, p["f"])
        phi = weighted_ode_average(f, p["s"])
        coords = [c.ravel() for c in phi.coords()]
        result = {"mode": "ode-average"}
        cols = [phi.values.ravel()]
        header = coords_names + ["phi"]
        if p["closed_form"]:
            ref = _field(p, p["closed_form"]).values
            result["max_error"] = float(np.max(np.abs(phi.values - ref)))
            cols.append(ref.ravel())
            header.append("closed_form")
        art.csv("average.csv", header, zip(*coords, *cols))
        art.json("result.json", result)
        return
    data = _field(p, p["data"])
    r = solve_quasilinear(data, p["s"], NewtonConfig(max_iters=p["max_iters"], tolerance=p["tolerance"]))
    sol = r.solution.field
    coords = [c.ravel() for c in sol.coords()]
    art.csv("solution.csv", coords_names + ["h"], zip(*coords, sol.values.ravel()))
    art.csv("newton.csv", ["iteration", "residual", "energy"],
            [(k, a, b) for k, (a, b) in enumerate(zip(r.residual_history, r.energy_history))])
    art.json("result.json", {"mode": "solve", "converged": r.converged, "iterations": r.iterations,
                             "residual": r.residual_history[-1], "message": r.message})
    if p["svg"]:
        res = [math.log10(max(v, 1e-300)) for v in r.residual_history]
        art.svg("newton.svg", line_plot_svg([("log10 residual", list(range(len(res))), res)],
                                            "Newton residual", "iteration", "log10 max residual"))
    if not r.converged:
        art.fail(f"Newton did not converge: {r.message}")


def _check_cone_shoot(p):
    problems = {}
    for g in p["gamma"]:
        problems.update(_gamma_problem("gamma", g))
    if any(d < 2 for d in p["d"]):
        problems["params.d"] = "dimensions must be at least 2"
    if p["theta0"] is not None and not 0 < p["theta0"] < math.pi:
        problems["params.theta0"] = "must lie in (0, pi)"
    if p["theta0"] is not None and (len(p["d"]) != 1 or len(p["gamma"]) != 1):
        problems["params.theta0"] = "a single shot needs exactly one d and one gamma"
    if p["theta0"] is None and any(d < 3 for d in p["d"]):
        problems["params.d"] = "the cone search needs d >= 3"
    if p["steps"] < 10:
        problems["params.steps"] = "must be at least 10"
    return problems


def profile_to_dict(profile) -> dict:
    return {"d": profile.d, "gamma": profile.pack.gamma, "theta0": profile.theta0, "axis_defect": profile.axis_defect,
            "collapsed": profile.collapsed, "message": profile.message,
            "theta": profile.theta, "g": profile.g, "dg": profile.dg}


def profile_from_dict(data: dict):
    from .cones import ConeProfile
    from .exponents import make_exponents

    def num(v):
        return float(v)  # "nan" and "inf" strings come back as floats

    return ConeProfile(int(data["d"]), make_exponents(num(data["gamma"])), num(data["theta0"]),
                       np.asarray(data["theta"], float), np.asarray(data["g"], float),
                       np.asarray(data["dg"], float), num(data["axis_defect"]),
                       bool(data["collapsed"]), str(data.get("message", "")))


def _classify(profile, n):
    from .spectrum import lambda_s, spherical_section

    return lambda_s(spherical_section(profile), n=n)


def run_cone_shoot(p, art: Artifacts, threads: int):
    from .cones import find_axisymmetric_cone, shoot_from_edge
    from .exponents import make_exponents

    if p["theta0"] is not None:
        prof = shoot_from_edge(p["theta0"], p["d"][0], make_exponents(p["gamma"][0]), steps=p["steps"])
        art.json("profile.json", profile_to_dict(prof))
        art.csv("profile.csv", ["theta", "g", "dg"], zip(prof.theta, prof.g, prof.dg))
        art.json("result.json", {"theta0": prof.theta0, "axis_defect": prof.axis_defect,
                                 "collapsed": prof.collapsed, "message": prof.message, "half_space": prof.is_half_space})
        if p["svg"]:
            art.svg("profile.svg", line_plot_svg([("g", prof.theta, prof.g), ("g'", prof.theta, prof.dg)],
                                                 "cone profile", "theta", "value"))
        return
    lattice = [(d, g) for d in p["d"] for g in p["gamma"]]

    def one(item):
        d, g = item
        found = find_axisymmetric_cone(d, make_exponents(g), steps=p["steps"])
        out = []
        for prof in found:
            rep = _classify(prof, p["n"]) if p["classify"] else None
            out.append((d, g, prof, rep))
        return out

    rows, cands = [], []
    for entries in parallel_map(one, lattice, threads):
        for d, g, prof, rep in entries:
            row = {"d": d, "gamma": g, "theta0": prof.theta0, "half_space": prof.is_half_space,
                   "axis_defect": prof.axis_defect,
                   "lambda": rep.lam if rep else math.nan, "threshold": rep.threshold if rep else math.nan,
                   "stable": rep.stable if rep else None}
            cands.append(row)
            rows.append([row[k] for k in ("d", "gamma", "theta0", "half_space", "axis_defect", "lambda",
                                          "threshold", "stable")])
    non_half = [c for c in cands if not c["half_space"]]
    art.csv("candidates.csv", ["d", "gamma", "theta0", "half_space", "axis_defect", "lambda", "threshold", "stable"], rows)
    art.json("result.json", {"lattice": lattice, "candidates": cands,
                             "non_half_space": len(non_half),
                             "all_non_half_space_unstable": all(c["stable"] is False for c in non_half)})


def _check_stability(p):
    problems = _gamma_problem("gamma", p["gamma"])
    problems.update(_box(p))
    if not problems and len(p["shape"]) != 2:
        problems["params.shape"] = "stability runs on 2D grids"
    if not problems:
        problems.update(_expr_problems(p, ["w", "f"], 2))
    if not p["dt"] > 0:
        problems["params.dt"] = "must be positive"
    return problems


def run_stability(p, art: Artifacts, threads: int):
    from .exponents import make_exponents
    from .stability import quadratic_form_Q, second_variation_report, sternberg_zumbrun_check

    pack = make_exponents(p["gamma"])
    w = _field(p, p["w"])
    w = w.with_values(np.maximum(w.values, 0.0))
    rows, out = [], []
    for text in p["f"]:
        f = _field(p, text).values
        q = quadratic_form_Q(w, pack, f)
        rep = second_variation_report(w, pack, f, p["dt"])
        gap = abs(rep.value - q) / max(abs(q), 1e-300)
        rows.append([text, q, rep.value, rep.value_2dt, rep.richardson, gap])
        out.append({"f": text, "Q": q, "fd": rep.value, "fd_2dt": rep.value_2dt, "richardson": rep.richardson,
                    "relative_gap": gap})
    art.csv("variation.csv", ["f", "Q", "fd", "fd_2dt", "richardson", "relative_gap"], rows)
    result = {"s": pack.s, "variations": out}
    if p["sz"]:
        sz = sternberg_zumbrun_check(w)
        art.csv("sz.csv", ["level", "n_points", "max_abs", "scale", "discrepancy"],
                [[c.level, c.n_points, c.max_abs, c.scale, c.discrepancy] for c in sz.levels])
        result["sz_max_discrepancy"] = sz.max_discrepancy
    art.json("result.json", result)


def _check_spectrum(p):
    problems = {}
    if p["profile"] is None:
        problems.update(_gamma_problem("gamma", p["gamma"]))
        if p["d"] < 2:
            problems["params.d"] = "must be at least 2"
        if not 0 < p["theta0"] < math.pi:
            problems["params.theta0"] = "must lie in (0, pi)"
    elif not Path(p["profile"]).is_file():
        problems["params.profile"] = f"file not found: {p['profile']}"
    if p["curvature"] not in ("analytic", "grid"):
        problems["params.curvature"] = "must be 'analytic' or 'grid'"
    if p["n"] < 10:
        problems["params.n"] = "must be at least 10"
    if any(not 0 < t < math.pi for t in p["latitudes"]):
        problems["params.latitudes"] = "angles must lie in (0, pi)"
    return problems


def run_spectrum(p, art: Artifacts, threads: int):
    from .cones import shoot_from_edge
    from .exponents import make_exponents
    from .spectrum import jacobi_lambda_latitude, lambda_s, spherical_section

    if p["profile"]:
        prof = profile_from_dict(json.loads(Path(p["profile"]).read_text()))
    else:
        prof = shoot_from_edge(p["theta0"], p["d"], make_exponents(p["gamma"]))
    rep = lambda_s(spherical_section(prof, p["curvature"]), n=p["n"])
    art.csv("eigenfunction.csv", ["theta", "phi"], zip(rep.theta, rep.eigenfunction))
    result = {"d": prof.d, "gamma": prof.pack.gamma, "s": prof.s, "theta0": prof.theta0,
              "lambda": rep.lam, "threshold": rep.threshold, "stable": rep.stable,
              "eigenfunction_spread": float(np.ptp(rep.eigenfunction))}
    if p["latitudes"]:
        d = prof.d
        lat = parallel_map(lambda t: jacobi_lambda_latitude(d, t), p["latitudes"], threads)
        rows = [[t, r.lam, r.meta["closed_form"], r.threshold, r.stable] for t, r in zip(p["latitudes"], lat)]
        art.csv("latitudes.csv", ["theta0", "lambda", "closed_form", "threshold", "stable"], rows)
        result["latitudes"] = [dict(zip(["theta0", "lambda", "closed_form", "threshold", "stable"], r)) for r in rows]
    art.json("result.json", result)


def _check_sweep(p):
    problems = {}
    if p["schedule"] is not None:
        if not Path(p["schedule"]).is_file():
            problems["params.schedule"] = f"file not found: {p['schedule']}"
    elif not p["gammas"]:
        problems["params.gammas"] = "give gammas or a schedule file"
    if any(not -2 < g < 0 for g in p["gammas"]):
        problems["params.gammas"] = "sweep values must lie in (-2, 0)"
    if p["d"] < 3:
        problems["params.d"] = "must be at least 3"
    if not p["delta"] > 0:
        problems["params.delta"] = "must be positive"
    return problems


def run_sweep(p, art: Artifacts, threads: int):
    from .spectrum import asymptotic_sweep, jacobi_threshold

    gammas = p["gammas"]
    if p["schedule"]:
        data = json.loads(Path(p["schedule"]).read_text())
        gammas = [float(g) for g in (data["gammas"] if isinstance(data, dict) else data)]
        if any(not -2 < g < 0 for g in gammas):
            raise ManifestError({"params.schedule": "sweep values must lie in (-2, 0)"})
    rows = parallel_map(lambda g: asymptotic_sweep([g], p["d"], delta=p["delta"], n=p["n"])[0], gammas, threads)
    header = ["gamma", "s", "lambda", "threshold", "concentration", "jacobi_target", "note"]
    table = [[r.gamma, r.s, r.lam, r.threshold, r.concentration, r.jacobi_target, r.note] for r in rows]
    art.csv("sweep.csv", header, table)
    limit = jacobi_threshold(p["d"])
    art.json("result.json", {"d": p["d"], "delta": p["delta"], "limit_threshold": limit,
                             "rows": [dict(zip(header, r)) for r in table]})
    if p["svg"]:
        g = [r.gamma for r in rows]
        art.svg("sweep.svg", line_plot_svg([("lambda_s", g, [r.lam for r in rows]),
                                            ("threshold", g, [r.threshold for r in rows]),
                                            ("limit", g, [limit] * len(g))],
                                           "bottom eigenvalue along the sweep", "gamma", "value"))


def _check_hardy(p):
    problems = {}
    if len(p["s"]) != len(p["d"]) and len(p["s"]) != 1 and len(p["d"]) != 1:
        problems["params.s"] = "give one s, one d, or equally many of both"
    if any(s <= -1 for s in p["s"]):
        problems["params.s"] = "must exceed -1"
    if (p["r_min"] is None) != (p["r_max"] is None):
        problems["params.r_max"] = "give both r_min and r_max or neither"
    elif p["r_min"] is not None and not 0 < p["r_min"] < p["r_max"]:
        problems["params.r_min"] = "need 0 < r_min < r_max"
    if p["n"] < 10:
        problems["params.n"] = "must be at least 10"
    return problems


def run_hardy(p, art: Artifacts, threads: int):
    from .spectrum import hardy_constant_numeric, stability_threshold

    ds, ss = p["d"], p["s"]
    pairs = list(zip(ds * len(ss), ss)) if len(ds) == 1 else list(zip(ds, ss * len(ds))) if len(ss) == 1 else list(zip(ds, ss))

    def one(pair):
        d, s = pair
        return hardy_constant_numeric(d, s, p["r_min"], p["r_max"], n=p["n"])

    vals = parallel_map(one, pairs, threads)
    rows = []
    for (d, s), v in zip(pairs, vals):
        sharp = ((d + s - 2) / 2) ** 2
        rows.append([d, s, v, sharp, v / sharp - 1 if sharp else math.nan, stability_threshold(d, s)])
    header = ["d", "s", "constant", "sharp", "relative_excess", "threshold"]
    art.csv("hardy.csv", header, rows)
    art.json("result.json", {"rows": [dict(zip(header, r)) for r in rows]})


@dataclass(frozen=True)
class Command:
    run: Callable
    check: Callable
    schema: dict
    help: str


COMMANDS = {
    "exponents": Command(run_exponents, _check_exponents, {
        "gamma": Param("floats", REQUIRED, "one or more gamma values in (-2, 2)"),
        "t": Param("floats", [0.01, 0.1, 0.5, 1.0, 2.0], "sample points for the 1D solution checks"),
        "svg": Param("bool", False, "unused"),
    }, "exponent algebra and 1D solution checks"),
    "minimize": Command(run_minimize, _check_minimize, {
        "gamma": Param("float"),
        "shape": Param("ints", [129]),
        "lower": Param("floats", [0.0]),
        "upper": Param("floats", [1.0]),
        "initial": Param("expr", "0.7*x", "initial w (clipped at 0)"),
        "boundary": Param("expr", None, "face data for w (defaults to the initial field)"),
        "max_iters": Param("int", 4000),
        "svg": Param("bool", False),
    }, "projected descent minimizer of the discrete energy"),
    "hodograph": Command(run_hodograph, _check_hodograph, {
        "s": Param("float"),
        "mode": Param("str", "solve", "'solve' or 'ode-average'"),
        "shape": Param("ints", [33, 33]),
        "lower": Param("floats", [-0.5, 0.0]),
        "upper": Param("floats", [0.5, 1.0]),
        "data": Param("expr", "y + 0.05*x", "boundary data and initial guess (solve mode)"),
        "f": Param("expr", None, "right-hand side (ode-average mode)"),
        "closed_form": Param("expr", None, "expected average (ode-average mode)"),
        "max_iters": Param("int", 20),
        "tolerance": Param("float", 1e-10),
        "svg": Param("bool", False),
    }, "weighted quasilinear solver and weighted averages"),
    "cone-shoot": Command(run_cone_shoot, _check_cone_shoot, {
        "d": Param("ints"),
        "gamma": Param("floats"),
        "theta0": Param("float", None, "shoot once from this edge angle; omit to search"),
        "steps": Param("int", 2000),
        "classify": Param("bool", True, "compute lambda_s for every found cone"),
        "n": Param("int", 400, "elements for the classification"),
        "svg": Param("bool", False),
    }, "axisymmetric cone profiles by shooting"),
    "stability": Command(run_stability, _check_stability, {
        "gamma": Param("float"),
        "shape": Param("ints", [81, 81]),
        "lower": Param("floats", [-1.0, 0.0]),
        "upper": Param("floats", [1.0, 1.0]),
        "w": Param("expr", "y"),
        "f": Param("exprs", [], "test functions"),
        "dt": Param("float", 1e-3),
        "sz": Param("bool", False, "also run the level-set decomposition check"),
        "svg": Param("bool", False, "unused"),
    }, "second variation against the inner-variation oracle"),
    "spectrum": Command(run_spectrum, _check_spectrum, {
        "profile": Param("path", None, "profile.json written by cone-shoot"),
        "d": Param("int", 3),
        "gamma": Param("float", -1.0),
        "theta0": Param("float", math.pi / 2),
        "curvature": Param("str", "analytic"),
        "n": Param("int", 400),
        "latitudes": Param("floats", [], "latitude angles for the Jacobi eigenvalue"),
        "svg": Param("bool", False, "unused"),
    }, "weighted spherical eigenvalue of a cone section"),
    "sweep": Command(run_sweep, _check_sweep, {
        "d": Param("int", 4),
        "gammas": Param("floats", [], "gamma schedule (values in (-2, 0))"),
        "schedule": Param("path", None, "JSON file with a gamma list or {'gammas': [...]}"),
        "delta": Param("float", 0.5),
        "n": Param("int", 400),
        "svg": Param("bool", False),
    }, "half-space sweep toward gamma = -2"),
    "hardy": Command(run_hardy, _check_hardy, {
        "d": Param("floats"),
        "s": Param("floats"),
        "r_min": Param("float", None),
        "r_max": Param("float", None),
        "n": Param("int", 4000),
        "svg": Param("bool", False, "unused"),
    }, "numeric weighted Hardy constant"),
}


# ---------------------------------------------------------------------------
# manifests and entry point


def load_manifest(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ManifestError({"manifest": f"file not found: {path}"}) from None
    except json.JSONDecodeError as exc:
        raise ManifestError({"manifest": f"invalid JSON: {exc.msg} at line {exc.lineno}"}) from None
    if not isinstance(data, dict):
        raise ManifestError({"manifest": "must be a JSON object"})
    problems = {}
    for key in sorted(set(data) - {"subcommand", "params", "output", "seed"}):
        problems[key] = "unknown field"
    if data.get("subcommand") not in COMMANDS:
        problems["subcommand"] = f"must be one of {', '.join(COMMANDS)}"
    if not isinstance(data.get("params", {}), dict):
        problems["params"] = "must be an object"
    if "output" in data and not isinstance(data["output"], str):
        problems["output"] = "must be a string"
    if "seed" in data and (isinstance(data["seed"], bool) or not isinstance(data["seed"], int)):
        problems["seed"] = "must be an integer"
    if problems:
        raise ManifestError(problems)
    return data


def execute(command: str, raw_params: dict, out: Path, seed: int = 0) -> int:
    """Validate, run and write one experiment; returns the exit status."""
    t0 = time.perf_counter()
    art = Artifacts()
    try:
        threads = thread_count()
        params = validate_params(command, raw_params)
        np.random.seed(seed)  # only competitor sampling draws random numbers
        COMMANDS[command].run(params, art, threads)
    except ManifestError as exc:
        err = {"status": "manifest-error", "subcommand": command, "problems": exc.problems}
        _report(out, err)
        return 2
    except (AltPhillipsError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        err = {"status": "numerical-failure", "subcommand": command, "error": type(exc).__name__, "message": str(exc)}
        _report(out, err)
        return 1
    art.json("params.json", {"subcommand": command, "params": params, "seed": seed})
    art.write(out)
    meta = {"subcommand": command, "params": params, "seed": seed, "threads": threads,
            "versions": {"altphillips": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "seconds": time.perf_counter() - t0, "exit_code": art.exit_code}
    (out / "run_meta.json").write_text(dumps_json(meta))
    if art.failure:
        _report(out, {"status": "numerical-failure", "subcommand": command, "message": art.failure})
    return art.exit_code


def _report(out: Path, err: dict):
    text = dumps_json(err)
    sys.stderr.write(text)
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="altphillips", description="Numerical experiments for the Alt-Phillips problem.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a JSON manifest")
    run.add_argument("manifest")
    run.add_argument("--out", help="output directory (overrides the manifest)")
    for name, cmd in COMMANDS.items():
        sp = sub.add_parser(name, help=cmd.help)
        sp.add_argument("--manifest", help="JSON manifest; flags override its params")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        for key, p in cmd.schema.items():
            flag = "--" + key.replace("_", "-")
            if p.kind == "exprs":
                sp.add_argument(flag, dest=key, action="append", help=p.help)
            else:
                sp.add_argument(flag, dest=key, help=p.help or None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            data = load_manifest(args.manifest)
            command, params = data["subcommand"], dict(data.get("params", {}))
            out = args.out or data.get("output") or f"altphillips-out/{command}"
            seed = data.get("seed", 0)
        else:
            command = args.command
            params, seed, out = {}, 0, None
            if args.manifest:
                data = load_manifest(args.manifest)
                if data["subcommand"] != command:
                    raise ManifestError({"subcommand": f"manifest is for {data['subcommand']!r}, not {command!r}"})
                params, seed, out = dict(data.get("params", {})), data.get("seed", 0), data.get("output")
            for key in COMMANDS[command].schema:
                val = getattr(args, key)
                if val is not None:
                    params[key] = val
            if args.seed is not None:
                seed = args.seed
            out = args.out or out or f"altphillips-out/{command}"
    except ManifestError as exc:
        sys.stderr.write(dumps_json({"status": "manifest-error", "problems": exc.problems}))
        return 2
    return execute(command, params, Path(out), seed)


if __name__ == "__main__":
    sys.exit(main())
