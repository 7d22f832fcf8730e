"""Complete discriminative tensor representation learning.

2DCCA projections of the two views are stacked into maps ``F_i`` (X on top),
and a bilinear discriminant ``l' F r`` is learned by alternating left and
right updates in two branches:

* range branch: maximise ``tr(l' S_b l) / tr(l' S_w l)`` inside the range
  space of the within-class scatter;
* null branch: maximise ``tr(l' S_b l)`` inside its null space, where the
  within-class scatter of the projected maps vanishes.

Both branches are fit independently from the same stacked maps.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .correlation import SolverOpts, fit_2dcca
from .data import LabeledPairSet, PairBatch, center_pair
from .errors import ProtocolError, ShapeError, ValidationError
from .linalg import (apply_sign_convention, gen_eig, null_space, range_space, sym_eig,
                     trace_ratio)

MODES = ("range", "null", "complete")


@dataclass(frozen=True)
class StackedMaps:
    F: np.ndarray
    labels: np.ndarray
    M_F: np.ndarray
    class_means: np.ndarray
    counts: np.ndarray
    # class index per sample, classes numbered by first occurrence
    groups: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SideScatter:
    side: str
    S_w: np.ndarray
    S_b: np.ndarray


@dataclass(frozen=True)
class CdtrlOpts:
    mode: str = "complete"
    e_R: int | None = None
    e_r: int | None = None
    e_N: int | None = None
    e_n: int | None = None
    max_iter: int = 50
    conv_tol: float = 1e-8
    ridge: float | None = None
    null_tol: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("e_R", "e_r", "e_N", "e_n"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if not self.conv_tol > 0 or not self.null_tol > 0:
            raise ValidationError("tolerances must be positive")


@dataclass(frozen=True)
class Branch:
    """One fitted discriminant branch, ``feature = l' F r``."""

    kind: str
    l: np.ndarray
    r: np.ndarray
    objective_trace: tuple = ()
    half_steps: tuple = ()
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        # contiguous storage keeps matmul results identical after a reload
        for name in ('l', 'r'):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))

    @property
    def empty(self):
        return self.l.shape[1] == 0 or self.r.shape[1] == 0


@dataclass(frozen=True)
class CdtrlModel:
    base: object
    M_X: np.ndarray
    M_Y: np.ndarray
    mode: str
    range_branch: Branch | None
    null_branch: Branch | None

    @property
    def converged(self):
        return all(b.converged for b in self.branches() if not b.empty)

    @property
    def objective_trace(self):
        return {b.kind: list(b.objective_trace) for b in self.branches()}

    def branches(self):
        return [b for b in (self.range_branch, self.null_branch) if b is not None]

    def transform(self, data, branch=None):
        return transform(self, data, branch)


def project_pair(data, proj):
    """Bilinear projections ``L_X' X~_i R_X`` and ``L_Y' Y~_i R_Y``."""
    Xt, Yt = data.X_tilde, data.Y_tilde
    if Xt.shape[1:] != (proj.L_X.shape[0], proj.R_X.shape[0]):
        raise ShapeError(f"X samples {Xt.shape[1:]} do not fit projections "
                         f"{proj.L_X.shape} / {proj.R_X.shape}")
    if Yt.shape[1:] != (proj.L_Y.shape[0], proj.R_Y.shape[0]):
        raise ShapeError(f"Y samples {Yt.shape[1:]} do not fit projections "
                         f"{proj.L_Y.shape} / {proj.R_Y.shape}")
    return proj.L_X.T @ Xt @ proj.R_X, proj.L_Y.T @ Yt @ proj.R_Y


def stack_maps(X_P, Y_P, labels):
    """Stack per-sample maps vertically and compute total and class means."""
    X_P = np.asarray(X_P, dtype=float)
    Y_P = np.asarray(Y_P, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if X_P.shape != Y_P.shape or X_P.ndim != 3:
        raise ShapeError(f"projected maps differ in shape: {X_P.shape} vs {Y_P.shape}")
    if labels.shape != (len(X_P),):
        raise ShapeError(f"{len(labels)} labels for {len(X_P)} samples")
    F = np.concatenate([X_P, Y_P], axis=1)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    rank = {int(k): i for i, k in enumerate(order)}
    groups = np.array([rank[int(k)] for k in labels], dtype=np.intp)
    c = int(labels.max())
    class_means = np.zeros((c,) + F.shape[1:])
    counts = np.zeros(c)
    for k in order:
        members = F[labels == k]
        class_means[k - 1] = members.mean(axis=0)
        counts[k - 1] = len(members)
    return StackedMaps(F, labels, F.mean(axis=0), class_means, counts, groups, order)


def side_scatter(stacked, fixed, side):
    """Within/between scatter of the stacked maps with one factor held fixed.

    ``side="left"``: ``fixed`` is a right factor ``r`` (d2 rows) and the
    result is ``2 d1 x 2 d1``. ``side="right"``: ``fixed`` is a left factor
    ``l`` (2 d1 rows), maps are transposed, result is ``d2 x d2``.
    """
    fixed = np.asarray(fixed, dtype=float)
    F = stacked.F
    means = stacked.class_means[stacked.order - 1]
    counts = stacked.counts[stacked.order - 1]
    M_F = stacked.M_F
    if side == "right":
        F, means, M_F = F.transpose(0, 2, 1), means.transpose(0, 2, 1), M_F.T
    elif side != "left":
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if fixed.ndim != 2 or fixed.shape[0] != F.shape[2]:
        raise ShapeError(f"fixed factor needs {F.shape[2]} rows for the {side} side, "
                         f"got shape {fixed.shape}")
    S_w, S_b = kernels.scatter_pair(F, stacked.groups, means, M_F, counts, fixed)
    return SideScatter(side, S_w, S_b)


def _empty(dim):
    return np.zeros((dim, 0))


def solve_side(scatter, mode, width, ridge=None, null_tol=1e-8):
    """Discriminant directions for one side given its scatter pair."""
    S_w, S_b = scatter.S_w, scatter.S_b
    dim = S_w.shape[0]
    if mode == "range":
        if not np.trace(S_w) > 0:
            return _empty(dim)
        Q = range_space(S_w, null_tol)
        k = min(width, Q.shape[1])
        Sb_q, Sw_q = Q.T @ S_b @ Q, Q.T @ S_w @ Q
        seed = gen_eig(Sb_q, Sw_q, ridge).eigenvectors[:, :k]
        V, _ = trace_ratio(Sb_q, Sw_q, k, init=seed)
        return apply_sign_convention(Q @ V)
    if mode == "null":
        Z = null_space(S_w, null_tol)
        if Z.shape[1] == 0:
            return _empty(dim)
        k = min(width, Z.shape[1])
        U = sym_eig(Z.T @ S_b @ Z).eigenvectors[:, :k]
        Q, _ = np.linalg.qr(Z @ U)
        return apply_sign_convention(Q)
    raise ValueError(f"mode must be 'range' or 'null', got {mode!r}")


def update_side(stacked, fixed, side, mode, width, ridge=None, null_tol=1e-8):
    """One half-step: new factor for ``side`` with the other factor fixed.

    Range mode restricts both scatters to the range space of ``S_w``, seeds
    with the top ``width`` generalized eigenvectors of ``(S_b, S_w + ridge I)``
    and refines them to the orthonormal frame maximising
    ``tr(V' S_b V) / tr(V' S_w V)``, so a half-step never lowers the branch
    objective. Null mode returns the top eigenvectors of ``S_b`` inside the
    null space of ``S_w``. A zero-column array signals an empty branch.
    """
    return solve_side(side_scatter(stacked, fixed, side), mode, width, ridge, null_tol)


def branch_objective(stacked, l, r, mode):
    """Range: ``tr(S_b,lr) / tr(S_w,lr)``; null: ``tr(S_b,lr)``."""
    sc = side_scatter(stacked, r, "left")
    between = float(np.trace(l.T @ sc.S_b @ l))
    if mode == "null":
        return between
    within = float(np.trace(l.T @ sc.S_w @ l))
    return between / within if within > 0 else np.inf


def _default_width(n_classes, *dims):
    return max(1, min(n_classes - 1, *dims))


def fit_branch(stacked, mode, width_l=None, width_r=None, max_iter=50,
               conv_tol=1e-8, ridge=None, null_tol=1e-8):
    """Alternate left/right updates of one branch until the objective settles.

    Starts from the first columns of the identity on the right. Stops when
    the relative change of the objective between full iterations drops below
    ``conv_tol`` or after ``max_iter`` iterations.
    """
    a, d2 = stacked.F.shape[1:]
    c = len(stacked.order)
    r = np.eye(d2)[:, :width_r or _default_width(c, d2, a)]
    l = None
    trace, halves = [], []
    prev, converged, it = None, False, 0
    for it in range(1, max_iter + 1):
        before = branch_objective(stacked, l, r, mode) if l is not None else None
        sc = side_scatter(stacked, r, "left")
        if width_l is None:
            width_l = _auto_width(sc, mode, c, (a, d2), null_tol)
        l_new = solve_side(sc, mode, width_l, ridge, null_tol)
        if l_new.shape[1] == 0:
            if l is None:
                return Branch(mode, _empty(a), _empty(d2), (), (), it, True)
            break
        l = l_new
        mid = branch_objective(stacked, l, r, mode)
        halves.append(("left", before, mid))
        sc = side_scatter(stacked, l, "right")
        if width_r is None:
            width_r = _auto_width(sc, mode, c, (a, d2), null_tol)
        r_new = solve_side(sc, mode, width_r, ridge, null_tol)
        if r_new.shape[1] == 0:
            break
        r = r_new
        obj = branch_objective(stacked, l, r, mode)
        halves.append(("right", mid, obj))
        trace.append(obj)
        if prev is not None and abs(obj - prev) <= conv_tol * max(abs(prev), 1e-300):
            converged = True
            break
        prev = obj
    return Branch(mode, l, r, tuple(trace), tuple(halves), it, converged)


def _auto_width(scatter, mode, n_classes, dims, null_tol):
    # range: min(c - 1, d2, 2 d1) on both sides; null: null-space size, capped
    if mode == "range":
        return _default_width(n_classes, *dims)
    Z = null_space(scatter.S_w, null_tol)
    return max(1, min(Z.shape[1], n_classes - 1))


def fit_cdtrl(data, solver=SolverOpts(), opts=CdtrlOpts(), base=None):
    """Fit the full pipeline on a :class:`~planarcda.data.LabeledPairSet`.

    Centers both views, fits 2DCCA (or reuses ``base``), projects and stacks
    the maps, then fits the range and/or null branch according to
    ``opts.mode``.
    """
    if data.n_classes < 2:
        raise ProtocolError("discriminant fitting needs at least two classes")
    centered = center_pair(data)
    if base is None:
        base = fit_2dcca(centered, solver)
    stacked = stack_maps(*project_pair(centered, base), data.labels)
    common = dict(max_iter=opts.max_iter, conv_tol=opts.conv_tol,
                  ridge=opts.ridge, null_tol=opts.null_tol)
    range_branch = null_branch = None
    if opts.mode in ("range", "complete"):
        range_branch = fit_branch(stacked, "range", opts.e_R, opts.e_r, **common)
    if opts.mode in ("null", "complete"):
        null_branch = fit_branch(stacked, "null", opts.e_N, opts.e_n, **common)
    return CdtrlModel(base, centered.M_X, centered.M_Y, opts.mode, range_branch, null_branch)


def stacked_features(model, data):
    """Stacked 2DCCA maps ``F`` for new samples (or a single ``(X, Y)`` pair)."""
    if isinstance(data, (LabeledPairSet, PairBatch)):
        X, Y = data.X, data.Y
    else:
        X, Y = (np.asarray(v, dtype=float)[None] for v in data)
    if X.shape[1:] != model.M_X.shape or Y.shape[1:] != model.M_Y.shape:
        raise ShapeError(f"sample shapes {X.shape[1:]}, {Y.shape[1:]} differ from the "
                         f"training shapes {model.M_X.shape}, {model.M_Y.shape}")
    b = model.base
    X_P = b.L_X.T @ (X - model.M_X) @ b.R_X
    Y_P = b.L_Y.T @ (Y - model.M_Y) @ b.R_Y
    return np.concatenate([X_P, Y_P], axis=1)


def transform(model, data, branch=None):
    """Discriminant features of ``data`` under a fitted model.

    ``branch`` defaults to the model's mode. ``"complete"`` concatenates the
    range and null maps along columns, zero-padding the shorter one's rows.
    ``"base"`` returns the stacked 2DCCA maps. A single ``(X, Y)`` tuple
    yields a single matrix.
    """
    single = not isinstance(data, (LabeledPairSet, PairBatch))
    F = stacked_features(model, data)
    branch = branch or model.mode
    if branch == "base":
        out = F
    else:
        parts = []
        if branch in ("range", "complete") and model.range_branch is not None \
                and not model.range_branch.empty:
            parts.append(model.range_branch.l.T @ F @ model.range_branch.r)
        if branch in ("null", "complete") and model.null_branch is not None \
                and not model.null_branch.empty:
            parts.append(model.null_branch.l.T @ F @ model.null_branch.r)
        if branch not in MODES:
            raise ValueError(f"unknown branch {branch!r}")
        if not parts:
            why = " (the within-class scatter has a trivial null space)" \
                if branch == "null" and model.null_branch is not None else ""
            raise ProtocolError(f"model has no fitted {branch} branch{why}")
        rows = max(p.shape[1] for p in parts)
        parts = [np.pad(p, ((0, 0), (0, rows - p.shape[1]), (0, 0))) for p in parts]
        out = np.concatenate(parts, axis=2)
    return out[0] if single else out
