"""Model files: one JSON document per fitted model.

Layout::

    {"schema_version": 1, "method": ..., "config": {...},
     "shapes": {"m", "n", "p", "q", "d1", "d2"},
     "means": {name: matrix}, "matrices": {name: matrix}, "info": {...}}

Every matrix is ``{"rows", "cols", "data"}`` with ``data`` row-major. Floats
are written with 17 significant digits, which round-trips IEEE doubles
exactly, and keys are emitted in a fixed order so files are byte-stable.
"""
import json
import math

import numpy as np

from .baselines import LinearModel
from .cdtrl import Branch, CdtrlModel
from .correlation import ProjectionPair
from .errors import NumericError, ValidationError
from .evaluation import CorrelationModel, ViewModel

SCHEMA_VERSION = 1


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise NumericError("cannot serialize a non-finite value")
    text = format(x, ".17g")
    # keep integral values floats so that -0.0 survives a JSON parse
    return text + ".0" if text.lstrip("-").isdigit() else text


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        # number arrays stay on one line; everything else nests
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        if not obj:
            return "[]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _scalar(obj)


def _scalar(v):
    if v is None or isinstance(v, (bool, np.bool_)):
        return json.dumps(None if v is None else bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _num(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "data": [float(v) for v in a.ravel()]}


def _unmatrix(d, name="matrix"):
    try:
        rows, cols, data = int(d["rows"]), int(d["cols"]), d["data"]
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"{name}: expected {{rows, cols, data}}") from None
    arr = np.asarray(data, dtype=float)
    if arr.size != rows * cols:
        raise ValidationError(f"{name}: {arr.size} values for a {rows}x{cols} matrix")
    return arr.reshape(rows, cols)


def _projection_parts(base):
    mats = {"L_X": base.L_X, "R_X": base.R_X, "L_Y": base.L_Y, "R_Y": base.R_Y,
            "left_correlations": base.left_correlations,
            "right_correlations": base.right_correlations}
    info = {"iterations": int(base.iterations_run), "converged": bool(base.converged)}
    return mats, info


def _projection_from(mats, info):
    return ProjectionPair(mats["L_X"], mats["R_X"], mats["L_Y"], mats["R_Y"],
                          mats["left_correlations"].ravel(),
                          mats["right_correlations"].ravel(),
                          int(info["iterations"]), bool(info["converged"]))


def matrix_dict(a):
    """``{rows, cols, data}`` form of a matrix (vectors become one row)."""
    return _matrix(a)


def model_to_dict(model, config=None):
    """Plain-data form of a fitted model (see module docstring)."""
    info = {}
    if isinstance(model, CdtrlModel):
        method = "cdtrl"
        mats, info["base"] = _projection_parts(model.base)
        means = {"M_X": model.M_X, "M_Y": model.M_Y}
        info["mode"] = model.mode
        for b in model.branches():
            mats[f"{b.kind}_l"] = b.l
            mats[f"{b.kind}_r"] = b.r
            info[b.kind] = {"iterations": int(b.iterations), "converged": bool(b.converged),
                            "objective_trace": [float(v) for v in b.objective_trace]}
        shapes = model.M_X.shape + model.M_Y.shape + (model.base.d1, model.base.d2)
    elif isinstance(model, CorrelationModel):
        method = model.kind
        mats, info["base"] = _projection_parts(model.base)
        means = {"M_X": model.M_X, "M_Y": model.M_Y}
        shapes = model.M_X.shape + model.M_Y.shape + (model.base.d1, model.base.d2)
    elif isinstance(model, ViewModel):
        lin = model.model
        method = lin.kind
        mats = {"projection": lin.projection, "eigenvalues": lin.eigenvalues}
        means = {"mean": lin.mean}
        info["view"] = model.view
        mean2d = lin.mean if lin.mean.ndim == 2 else lin.mean[None, :]
        # single-view models: p, q repeat the modeled view, d1 x d2 is the feature shape
        if lin.kind in ("pca", "lda"):
            feat = (lin.width, 1)
        else:
            feat = (mean2d.shape[0], lin.width)
        shapes = mean2d.shape + mean2d.shape + feat
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "config": dict(config or {}),
        "shapes": dict(zip(("m", "n", "p", "q", "d1", "d2"), (int(s) for s in shapes))),
        "means": {k: _matrix(v) for k, v in means.items()},
        "matrices": {k: _matrix(v) for k, v in mats.items()},
        "info": info,
    }


def model_from_dict(doc):
    """Inverse of :func:`model_to_dict`; returns ``(model, config)``."""
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported model file (schema_version must be {SCHEMA_VERSION})")
    for key in ("method", "shapes", "means", "matrices", "info"):
        if key not in doc:
            raise ValidationError(f"model file lacks {key!r}")
    method = doc["method"]
    means = {k: _unmatrix(v, k) for k, v in doc["means"].items()}
    mats = {k: _unmatrix(v, k) for k, v in doc["matrices"].items()}
    info = doc["info"]
    config = doc.get("config", {})
    if method == "cdtrl":
        base = _projection_from(mats, info["base"])
        branches = {}
        for kind in ("range", "null"):
            if kind in info:
                bi = info[kind]
                branches[kind] = Branch(kind, mats[f"{kind}_l"], mats[f"{kind}_r"],
                                        tuple(float(v) for v in bi["objective_trace"]),
                                        (), int(bi["iterations"]), bool(bi["converged"]))
        model = CdtrlModel(base, means["M_X"], means["M_Y"], info["mode"],
                           branches.get("range"), branches.get("null"))
    elif method in ("cca", "2dcca", "l2dcca"):
        base = _projection_from(mats, info["base"])
        model = CorrelationModel(method, means["M_X"], means["M_Y"], base)
    elif method in ("pca", "2dpca", "lda", "2dlda"):
        mean = means["mean"]
        if method in ("pca", "lda"):
            mean = mean.ravel()
        lin = LinearModel(method, mean, mats["projection"], mats["eigenvalues"].ravel())
        model = ViewModel(lin, info.get("view", "x"))
    else:
        raise ValidationError(f"unknown method {method!r} in model file")
    return model, config


def dump_json(obj):
    """Deterministic JSON text with 17-significant-digit floats."""
    return _emit(obj, 1, 0) + "\n"


def dumps(model, config=None):
    """JSON text of a model; identical models give identical text."""
    return dump_json(model_to_dict(model, config))


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def save_model(path, model, config=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model, config))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
