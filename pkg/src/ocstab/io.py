"""Problem-file parsing and result serialisation."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ProblemFileError
from .grid import GridFn, TimeGrid
from .problem import Box, CostSpec, L2Ball, OcProblem, Parameter, SystemMatrices, Unconstrained

SCHEMA_DIR = Path(__file__).parent / "schemas"


def _require(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ProblemFileError(f"{where}{key}", "missing required field")
    return doc[key]


def _array(value, field: str, ndim: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(field, "expected a (nested) array of numbers") from None
    if ndim is not None and arr.ndim != ndim:
        raise ProblemFileError(field, f"expected {ndim}-dimensional array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError(field, "entries must be finite")
    return arr


def _matrix_fn(spec, field: str, grid: TimeGrid, shape: tuple[int, int]) -> np.ndarray:
    if not isinstance(spec, dict) or len(spec) != 1 or not ({"constant", "samples"} & set(spec)):
        raise ProblemFileError(field, 'expected {"constant": matrix} or {"samples": [matrix, ...]}')
    if "constant" in spec:
        mat = _array(spec["constant"], f"{field}.constant", 2)
        if mat.shape != shape:
            raise ProblemFileError(f"{field}.constant", f"expected shape {list(shape)}, got {list(mat.shape)}")
        return np.broadcast_to(mat, (grid.n_nodes, *shape))
    mats = _array(spec["samples"], f"{field}.samples", 3)
    if mats.shape != (grid.n_nodes, *shape):
        raise ProblemFileError(
            f"{field}.samples", f"expected {grid.n_nodes} samples of shape {list(shape)}, got {list(mats.shape)}"
        )
    return mats


def _vector_fn(spec, field: str, grid: TimeGrid, dim: int) -> GridFn:
    """Scalar, constant vector or {"samples": [[...], ...]} as a GridFn."""
    if isinstance(spec, dict):
        vals = _array(_require(spec, "samples", f"{field}."), f"{field}.samples")
        vals = vals.reshape(len(vals), -1) if vals.ndim == 1 else vals
        if vals.shape != (grid.n_nodes, dim):
            raise ProblemFileError(f"{field}.samples", f"expected shape [{grid.n_nodes}, {dim}], got {list(vals.shape)}")
        return GridFn(grid, vals)
    vals = _array(spec, field)
    if vals.ndim == 0:
        vals = np.full(dim, float(vals))
    if vals.shape != (dim,):
        raise ProblemFileError(field, f"expected a number or a length-{dim} vector")
    return GridFn.constant(grid, vals)


def _dim(doc: dict, key: str, minimum: int) -> int:
    val = _require(doc, key)
    if not isinstance(val, int) or isinstance(val, bool) or val < minimum:
        raise ProblemFileError(key, f"expected an integer >= {minimum}")
    return val


def problem_from_dict(doc: dict, grid_steps: int | None = None) -> tuple[OcProblem, Parameter]:
    """Build (problem, parameter) from a parsed problem document.

    ``grid_steps`` overrides the file's grid; sampled data must then match it.
    """
    if not isinstance(doc, dict):
        raise ProblemFileError("<root>", "expected a JSON object")
    n, m, k = _dim(doc, "n", 1), _dim(doc, "m", 1), _dim(doc, "k", 1)
    steps = grid_steps if grid_steps is not None else _dim(doc, "grid_steps", 2)
    if not isinstance(steps, int) or steps < 2:
        raise ProblemFileError("grid_steps", "expected an integer >= 2")
    grid = TimeGrid(steps)

    A = _matrix_fn(_require(doc, "A"), "A", grid, (n, n))
    B = _matrix_fn(_require(doc, "B"), "B", grid, (n, m))
    C = _matrix_fn(_require(doc, "C"), "C", grid, (n, k))
    mats = SystemMatrices(grid, A, B, C)

    cost_doc = doc.get("cost", {})
    if not isinstance(cost_doc, dict):
        raise ProblemFileError("cost", "expected an object")
    known = {"Q", "q", "c0", "Rx", "Ru", "Rtheta", "rx", "ru", "rtheta", "r0"}
    extra = set(cost_doc) - known
    if extra:
        raise ProblemFileError(f"cost.{sorted(extra)[0]}", "unknown cost field")
    parts = {}
    for key in known:
        if key in cost_doc:
            parts[key] = _array(cost_doc[key], f"cost.{key}")
    try:
        cost = CostSpec.build(n, m, k, **parts)
    except ValueError as exc:
        field, _, msg = str(exc).partition(": ")
        raise ProblemFileError(field, msg) from None

    cs_doc = doc.get("control_set", {"kind": "unconstrained"})
    kind = _require(cs_doc, "kind", "control_set.") if isinstance(cs_doc, dict) else None
    if kind == "unconstrained":
        cs = Unconstrained()
    elif kind == "l2ball":
        radius = _require(cs_doc, "radius", "control_set.")
        if not isinstance(radius, (int, float)) or isinstance(radius, bool) or not radius > 0:
            raise ProblemFileError("control_set.radius", "expected a positive number")
        cs = L2Ball(float(radius))
    elif kind == "box":
        lower = _vector_fn(_require(cs_doc, "lower", "control_set."), "control_set.lower", grid, m)
        upper = _vector_fn(_require(cs_doc, "upper", "control_set."), "control_set.upper", grid, m)
        try:
            cs = Box(lower, upper)
        except ValueError as exc:
            raise ProblemFileError("control_set", str(exc)) from None
    else:
        raise ProblemFileError("control_set.kind", 'expected one of "unconstrained", "l2ball", "box"')

    par = _require(doc, "parameter")
    if not isinstance(par, dict):
        raise ProblemFileError("parameter", "expected an object")
    alpha = _array(_require(par, "alpha", "parameter."), "parameter.alpha", 1)
    if alpha.shape != (n,):
        raise ProblemFileError("parameter.alpha", f"expected length {n}")
    theta_doc = par.get("theta", "zero")
    if theta_doc == "zero":
        theta = GridFn.zeros(grid, k)
    else:
        vals = _array(theta_doc, "parameter.theta", 2)
        if vals.shape != (grid.n_nodes, k):
            raise ProblemFileError("parameter.theta", f"expected \"zero\" or samples of shape [{grid.n_nodes}, {k}]")
        theta = GridFn(grid, vals)
    return OcProblem(grid, mats, cost, cs), Parameter(alpha, theta)


def load_problem(path, grid_steps: int | None = None) -> tuple[OcProblem, Parameter, dict]:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    prob, w = problem_from_dict(doc, grid_steps)
    return prob, w, doc


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, repr floats, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    write_atomic(path, dumps(obj))


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
