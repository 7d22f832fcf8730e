"""Recognition protocols: 1-NN matching, leave-one-out and train/test splits."""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines
from .cdtrl import CdtrlOpts, fit_cdtrl, stacked_features
from .correlation import SolverOpts, fit_2dcca, fit_cca, fit_l2dcca, weight_matrix
from .data import LabeledPairSet, center_pair, replicate_references
from .errors import ProtocolError, ShapeError, ValidationError

METHODS = ("cca", "2dcca", "l2dcca", "cdtrl", "pca", "2dpca", "lda", "2dlda")
CORRELATION_METHODS = ("cca", "2dcca", "l2dcca", "cdtrl")
DISPLAY = {"cca": "CCA", "2dcca": "2DCCA", "l2dcca": "L2DCCA", "cdtrl": "CDTRL",
           "pca": "PCA", "2dpca": "2DPCA", "lda": "LDA", "2dlda": "2DLDA"}
HEADER = ("method", "protocol", "accuracy", "n_test", "runtime_ms")


@dataclass(frozen=True)
class EvalRow:
    method: str
    protocol: str
    accuracy: float
    n_test: int
    runtime_ms: int = 0
    skipped: int = 0


@dataclass(frozen=True)
class CorrelationModel:
    """Centering means plus projections of a fitted CCA-family method."""

    kind: str
    M_X: np.ndarray
    M_Y: np.ndarray
    base: object

    def transform(self, data):
        if self.kind == "cca":
            x = data.X.reshape(len(data), -1) - self.M_X.ravel()
            y = data.Y.reshape(len(data), -1) - self.M_Y.ravel()
            return np.concatenate([x @ self.base.L_X, y @ self.base.L_Y], axis=1)[:, :, None]
        return stacked_features(self, data)


@dataclass(frozen=True)
class ViewModel:
    """A single-view baseline applied to one view of a paired set."""

    model: baselines.LinearModel
    view: str

    def transform(self, data):
        return self.model.transform(data.X if self.view == "x" else data.Y)


@dataclass(frozen=True)
class MethodSpec:
    """A method name plus the knobs it uses; ``fit`` returns a transformer."""

    method: str
    mode: str = "complete"
    d1: int | None = None
    d2: int | None = None
    width: int | None = None
    e_R: int | None = None
    e_r: int | None = None
    e_N: int | None = None
    e_n: int | None = None
    sigma: float | None = None
    ridge: float | None = None
    conv_tol: float = 1e-8
    max_iter: int = 50
    null_tol: float = 1e-8
    view: str = "x"
    label: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.view not in ("x", "y"):
            raise ValidationError("view must be 'x' or 'y'")
        self.solver_opts()
        if self.method == "cdtrl":
            self.cdtrl_opts()

    @property
    def name(self):
        if self.label:
            return self.label
        name = DISPLAY[self.method]
        if self.method == "cdtrl" and self.mode != "complete":
            name += f"-{self.mode}"
        return name

    def solver_opts(self):
        return SolverOpts(d1=self.d1, d2=self.d2, max_iter=self.max_iter,
                          conv_tol=self.conv_tol, ridge=self.ridge)

    def cdtrl_opts(self):
        return CdtrlOpts(mode=self.mode, e_R=self.e_R, e_r=self.e_r, e_N=self.e_N,
                         e_n=self.e_n, max_iter=self.max_iter, conv_tol=self.conv_tol,
                         ridge=self.ridge, null_tol=self.null_tol)

    def fit(self, train):
        m = self.method
        if m == "cdtrl":
            return fit_cdtrl(train, self.solver_opts(), self.cdtrl_opts())
        if m in ("2dcca", "l2dcca"):
            centered = center_pair(train)
            if m == "2dcca":
                base = fit_2dcca(centered, self.solver_opts())
            else:
                weights = weight_matrix(centered, self.sigma)
                base = fit_l2dcca(centered, weights, self.solver_opts())
            return CorrelationModel(m, centered.M_X, centered.M_Y, base)
        if m == "cca":
            Xv = train.X.reshape(len(train), -1)
            Yv = train.Y.reshape(len(train), -1)
            d = self.width or min(Xv.shape[1], Yv.shape[1], 8)
            base = fit_cca(Xv, Yv, d, self.ridge)
            return CorrelationModel(m, train.X.mean(axis=0), train.Y.mean(axis=0), base)
        images = train.X if self.view == "x" else train.Y
        if m == "pca":
            model = baselines.fit_pca(images.reshape(len(images), -1), self.width)
        elif m == "2dpca":
            model = baselines.fit_2dpca(images, self.width)
        elif m == "lda":
            model = baselines.fit_lda(images.reshape(len(images), -1), train.labels,
                                      self.width, self.ridge)
        else:
            model = baselines.fit_2dlda(images, train.labels, self.width, self.ridge)
        return ViewModel(model, self.view)


def nn_classify(train_feats, train_labels, probe):
    """Label of the Frobenius-nearest training feature (lowest index on ties)."""
    train_feats = np.asarray(train_feats, dtype=float)
    probe = np.asarray(probe, dtype=float)
    if len(train_feats) == 0:
        raise ShapeError("no training features")
    if train_feats.shape[1:] != probe.shape:
        raise ShapeError(f"probe shape {probe.shape} differs from {train_feats.shape[1:]}")
    diff = (train_feats - probe).reshape(len(train_feats), -1)
    dist = np.einsum("ij,ij->i", diff, diff)
    return int(np.asarray(train_labels)[int(np.argmin(dist))])


def _threads(threads):
    if threads is None:
        try:
            threads = int(os.environ.get("PLANARCDA_THREADS", "0") or 0)
        except ValueError:
            threads = 0
    return max(0, threads)


def _map_ordered(fn, items, threads):
    # results are collected in input order whatever the execution order
    threads = _threads(threads)
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def loo_folds(data, fit, views, threads=None, order=None):
    """Leave-one-out predictions for one fit and several feature views.

    ``fit(train)`` returns a model; ``views`` maps a key to
    ``fn(model, data) -> features``. Folds whose training part loses a class
    (or whose fit raises a protocol error) are skipped. Returns
    ``{key: (correct, evaluated)}`` and the skip count.
    """
    N = len(data)
    if N < 2:
        raise ProtocolError("leave-one-out needs at least two samples")
    everything = np.arange(N)

    def fold(i):
        try:
            train = data.subset(np.delete(everything, i))
            model = fit(train)
        except (ValidationError, ProtocolError):
            return None
        probe = data.take([i])
        out = {}
        for key, fn in views.items():
            label = nn_classify(fn(model, train), train.labels, fn(model, probe)[0])
            out[key] = label == data.labels[i]
        return out

    indices = list(everything if order is None else order)
    results = dict(zip(indices, _map_ordered(fold, indices, threads)))
    skipped = sum(r is None for r in results.values())
    tally = {}
    for key in views:
        hits = [results[i][key] for i in sorted(results) if results[i] is not None]
        tally[key] = (int(sum(hits)), len(hits))
    return tally, skipped


def _row(name, protocol, correct, evaluated, runtime_ms, skipped):
    if evaluated == 0:
        raise ProtocolError("every fold was skipped")
    return EvalRow(name, protocol, correct / evaluated, evaluated, runtime_ms, skipped)


def loo_cv(data, method, threads=None, timing=True, protocol="loo"):
    """Leave-one-out recognition accuracy of ``method`` on a paired set.

    Each sample is held out in turn; the method is fit on the remaining
    ``N - 1`` samples and the probe is matched by 1-NN on the transformed
    features. Accuracy is over the evaluated (non-skipped) folds.
    """
    start = time.perf_counter()
    tally, skipped = loo_folds(data, method.fit, {None: lambda m, d: m.transform(d)}, threads)
    ms = int(round((time.perf_counter() - start) * 1000)) if timing else 0
    return _row(method.name, protocol, *tally[None], ms, skipped)


def split_eval(train, test, method, timing=True, protocol="split"):
    """Fit once on ``train`` and classify every sample of ``test``."""
    if test is None or len(test) == 0:
        raise ProtocolError("empty test set")
    unseen = sorted(set(test.labels.tolist()) - set(train.labels.tolist()))
    if unseen:
        raise ProtocolError(f"test labels {unseen} do not occur in training")
    start = time.perf_counter()
    model = method.fit(train)
    train_feats = model.transform(train)
    test_feats = model.transform(test)
    correct = sum(nn_classify(train_feats, train.labels, f) == y
                  for f, y in zip(test_feats, test.labels))
    ms = int(round((time.perf_counter() - start) * 1000)) if timing else 0
    return EvalRow(method.name, protocol, correct / len(test), len(test), ms, 0)


def ar_protocol(refs, variants, methods, scope="variants", threads=None, timing=True):
    """Reference-replication protocol with leave-one-out.

    Correlation methods see pairs (reference copy, variant) and hold out one
    variant at a time; the other copies of its reference stay in training.
    Single-view baselines are evaluated by leave-one-out over the variant
    images only (``scope="variants"``, references always in training) or over
    references and variants together (``scope="all"``).
    """
    if scope not in ("variants", "all"):
        raise ValidationError("scope must be 'variants' or 'all'")
    pairs = replicate_references(refs, variants)
    pool_images = np.concatenate([variants.images, refs.images])
    pool_labels = np.concatenate([variants.labels, refs.labels])
    pool = LabeledPairSet(pool_images, pool_images, pool_labels)
    n_var = len(variants)
    rows = []
    for method in methods:
        if method.method in CORRELATION_METHODS:
            rows.append(loo_cv(pairs, method, threads, timing, protocol="ar-loo"))
            continue
        start = time.perf_counter()
        single = MethodSpec(**{**method.__dict__, "view": "x"})
        held = range(n_var) if scope == "variants" else range(len(pool))
        tally, skipped = loo_folds(pool, single.fit, {None: lambda m, d: m.transform(d)},
                                   threads, order=list(held))
        ms = int(round((time.perf_counter() - start) * 1000)) if timing else 0
        rows.append(_row(method.name, f"ar-loo-{scope}", *tally[None], ms, skipped))
    return rows


def emit_report(rows):
    """Tab-separated report: header line, then one line per row."""
    lines = ["\t".join(HEADER)]
    for r in rows:
        lines.append(f"{r.method}\t{r.protocol}\t{100.0 * r.accuracy:.2f}%\t"
                     f"{r.n_test}\t{r.runtime_ms}")
    return "\n".join(lines) + "\n"


def parse_report(text):
    """Inverse of :func:`emit_report` (accuracy recovered to 2 decimals)."""
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or tuple(lines[0].split("\t")) != HEADER:
        raise ValueError("missing report header")
    rows = []
    for ln in lines[1:]:
        method, protocol, acc, n_test, ms = ln.split("\t")
        rows.append(EvalRow(method, protocol, float(acc.rstrip("%")) / 100.0,
                            int(n_test), int(ms)))
    return rows
