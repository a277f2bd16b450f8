"""Problem-file and trace-file input/output.

Problem files are JSON with the schema documented in docs/problem_schema.md:

    {
      "constraint": {"A": [[...], ...], "b": [...]},
      "objective": {
        "smooth": null | {"kind": "quadratic", "Q": [[...]], "r": [...], "c": 0.0},
        "prox": {"kind": "zero" | "quadratic_form" | "box" | "l1" | "scad"
                         | "mcp" | "pointwise_min", ...},
        "implicit_class": {"kind": "lipschitz"|"bounded"|"unknown",
                           "constant": number | null}
      }
    }

Box bounds use null for an absent (infinite) bound. Traces are CSV with the
fixed header k,objective,feasibility,stationarity,lyapunov,lambda_norm,
xz_gap,wall_time and shortest round-trip float formatting.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .problem import (
    MCP,
    SCAD,
    BoxIndicator,
    ImplicitClass,
    L1,
    LinearConstraint,
    PointwiseMin,
    Problem,
    QuadraticForm,
    QuadraticSmooth,
    Zero,
)
from .solvers import TRACE_COLUMNS, Trace

__all__ = ["load_problem", "save_problem", "save_trace", "load_trace_columns",
           "save_summary", "CSV_HEADER"]

CSV_HEADER = ",".join(TRACE_COLUMNS)


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}.{key}", "missing field")
    return obj[key]


def _bound_in(value, where: str, sign: float):
    out = []
    for i, v in enumerate(value):
        if v is None:
            out.append(sign * math.inf)
        elif isinstance(v, (int, float)):
            out.append(float(v))
        else:
            raise SchemaError(f"{where}[{i}]", "bound must be a number or null")
    return out


def _bound_out(arr) -> list:
    return [None if not np.isfinite(v) else float(v) for v in arr]


def _implicit_in(obj, where: str) -> ImplicitClass:
    if obj is None:
        return ImplicitClass.unknown()
    kind = _need(obj, "kind", where)
    if kind == "unknown":
        return ImplicitClass.unknown()
    constant = _need(obj, "constant", where)
    try:
        return ImplicitClass(kind, float(constant))
    except ValueError as exc:
        raise SchemaError(where, str(exc)) from None


def _implicit_out(cls: ImplicitClass) -> dict:
    return {"kind": cls.kind, "constant": cls.constant}


def _prox_in(obj: dict, where: str):
    kind = _need(obj, "kind", where)
    try:
        if kind == "zero":
            return Zero()
        if kind == "quadratic_form":
            return QuadraticForm(Q=_need(obj, "Q", where), r=obj.get("r"),
                                 c=float(obj.get("c", 0.0)))
        if kind == "box":
            lower = _bound_in(_need(obj, "lower", where), f"{where}.lower", -1.0)
            upper = _bound_in(_need(obj, "upper", where), f"{where}.upper", +1.0)
            return BoxIndicator(lower=lower, upper=upper,
                                implicit_class=_implicit_in(obj.get("implicit_class"),
                                                            f"{where}.implicit_class"))
        if kind == "l1":
            return L1(weight=float(_need(obj, "weight", where)))
        if kind == "scad":
            return SCAD(lam=float(_need(obj, "lam", where)),
                        a=float(_need(obj, "a", where)))
        if kind == "mcp":
            return MCP(lam=float(_need(obj, "lam", where)),
                       a=float(_need(obj, "a", where)))
        if kind == "pointwise_min":
            pieces = []
            for i, piece in enumerate(_need(obj, "pieces", where)):
                quad = _prox_in(_need(piece, "quadratic", f"{where}.pieces[{i}]"),
                                f"{where}.pieces[{i}].quadratic")
                box = piece.get("box")
                box = _prox_in(box, f"{where}.pieces[{i}].box") if box else None
                pieces.append((quad, box))
            return PointwiseMin(pieces=tuple(pieces))
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError(where, str(exc)) from None
    raise SchemaError(f"{where}.kind", f"unknown prox kind {kind!r}")


def _prox_out(g) -> dict:
    if isinstance(g, Zero):
        return {"kind": "zero"}
    if isinstance(g, QuadraticForm):
        return {"kind": "quadratic_form", "Q": g.Q.tolist(), "r": g.r.tolist(),
                "c": g.c}
    if isinstance(g, BoxIndicator):
        return {"kind": "box", "lower": _bound_out(g.lower),
                "upper": _bound_out(g.upper),
                "implicit_class": _implicit_out(g.implicit_class)}
    if isinstance(g, L1):
        return {"kind": "l1", "weight": g.weight}
    if isinstance(g, SCAD):
        return {"kind": "scad", "lam": g.lam, "a": g.a}
    if isinstance(g, MCP):
        return {"kind": "mcp", "lam": g.lam, "a": g.a}
    if isinstance(g, PointwiseMin):
        return {"kind": "pointwise_min", "pieces": [
            {"quadratic": _prox_out(q), "box": _prox_out(b) if b is not None else None}
            for q, b in g.pieces
        ]}
    raise SchemaError("objective.prox", f"unserializable prox kind {type(g).__name__}")


def load_problem(path) -> Problem:
    """Parse a problem file; raises SchemaError with field context."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(str(path), f"unreadable problem file: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError(str(path), "top level must be an object")

    cons = _need(data, "constraint", "problem")
    try:
        constraint = LinearConstraint(_need(cons, "A", "constraint"),
                                      _need(cons, "b", "constraint"))
    except (TypeError, ValueError) as exc:
        raise SchemaError("constraint", str(exc)) from None

    obj = _need(data, "objective", "problem")
    smooth_obj = obj.get("smooth")
    smooth = None
    if smooth_obj is not None:
        kind = _need(smooth_obj, "kind", "objective.smooth")
        if kind != "quadratic":
            raise SchemaError("objective.smooth.kind",
                              f"only 'quadratic' is serializable, got {kind!r}")
        try:
            smooth = QuadraticSmooth(_need(smooth_obj, "Q", "objective.smooth"),
                                     smooth_obj.get("r"),
                                     float(smooth_obj.get("c", 0.0)))
        except (TypeError, ValueError) as exc:
            raise SchemaError("objective.smooth", str(exc)) from None

    prox_part = _prox_in(_need(obj, "prox", "objective"), "objective.prox")
    cls = obj.get("implicit_class")
    if cls is not None:
        prox_part.implicit_class = _implicit_in(cls, "objective.implicit_class")
    try:
        return Problem(constraint, prox_part, smooth)
    except ValueError as exc:
        raise SchemaError("problem", str(exc)) from None


def save_problem(problem: Problem, path) -> None:
    data = {
        "constraint": {"A": problem.constraint.A.tolist(),
                       "b": problem.constraint.b.tolist()},
        "objective": {
            "smooth": None,
            "prox": _prox_out(problem.prox_part),
            "implicit_class": _implicit_out(problem.prox_part.implicit_class),
        },
    }
    if problem.composite:
        terms = problem.smooth.quadratic_terms()
        if terms is None:
            raise SchemaError("objective.smooth",
                              "only quadratic smooth parts are serializable")
        Q, r, c = terms
        data["objective"]["smooth"] = {"kind": "quadratic", "Q": Q.tolist(),
                                       "r": r.tolist(), "c": c}
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


def _fmt_value(name: str, v) -> str:
    if name == "k":
        return str(int(v))
    return repr(float(v))  # shortest round-trip decimal


def save_trace(trace: Trace, path) -> None:
    """Write the fixed-header CSV; reruns differ only in wall_time."""
    lines = [CSV_HEADER]
    n = trace.n_rows
    for i in range(n):
        lines.append(",".join(
            _fmt_value(name, trace.columns[name][i]) for name in TRACE_COLUMNS
        ))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace_columns(path) -> dict:
    """Read a trace CSV back into column arrays (testing/analysis helper)."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if header != list(TRACE_COLUMNS):
        raise SchemaError(str(path), f"unexpected header {text[0]!r}")
    cols = {name: [] for name in header}
    for line in text[1:]:
        for name, tok in zip(header, line.split(",")):
            cols[name].append(float(tok))
    return {name: np.asarray(vals) for name, vals in cols.items()}


SUMMARY_COLUMNS = (
    "run", "algorithm", "status", "iterations_to_tol", "terminal_objective",
    "terminal_feasibility", "terminal_stationarity", "oscillating",
    "rate_kind", "rate_param", "rate_r2",
)


def save_summary(rows: list, path) -> None:
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        toks = []
        for name in SUMMARY_COLUMNS:
            v = row[name]
            if v is None:
                toks.append("")
            elif isinstance(v, bool):
                toks.append("true" if v else "false")
            elif isinstance(v, float):
                toks.append(repr(v))
            else:
                toks.append(str(v))
        lines.append(",".join(toks))
    Path(path).write_text("\n".join(lines) + "\n")
