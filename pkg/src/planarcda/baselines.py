"""Single-view comparison methods: PCA, 2DPCA, LDA and 2DLDA.

The 2D variants use the right-projection (column) form, ``X -> (X - M) R``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError, ShapeError
from .linalg import apply_sign_convention, gen_eig, sym_eig

KINDS = ("pca", "2dpca", "lda", "2dlda")


@dataclass(frozen=True)
class LinearModel:
    kind: str
    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        # contiguous storage keeps matmul results identical after a reload
        for name in ('mean', 'projection', 'eigenvalues'):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))

    @property
    def width(self):
        return self.projection.shape[1]

    def transform(self, samples):
        """Features for a stack of samples (vectors or matrices)."""
        samples = np.asarray(samples, dtype=float)
        if self.kind in ("pca", "lda"):
            flat = samples.reshape(len(samples), -1)
            if flat.shape[1] != self.mean.size:
                raise ShapeError(f"expected {self.mean.size}-dim samples, got {flat.shape[1]}")
            return ((flat - self.mean) @ self.projection)[:, :, None]
        if samples.shape[1:] != self.mean.shape:
            raise ShapeError(f"expected samples of shape {self.mean.shape}, got {samples.shape[1:]}")
        return (samples - self.mean) @ self.projection


def _variance_width(eigenvalues, fraction=0.95):
    ev = np.clip(eigenvalues, 0.0, None)
    total = ev.sum()
    if total <= 0:
        return 1
    return int(np.searchsorted(np.cumsum(ev) / total, fraction - 1e-12) + 1)


def _check_width(width, limit):
    if width is not None and not 1 <= width <= limit:
        raise ShapeError(f"width {width} out of range 1..{limit}")


def fit_pca(vectors, width=None):
    """Principal directions of ``vectors`` (N, D), variance-descending.

    ``width=None`` keeps enough components for 95% of the variance.
    Eigenvalues are sample variances (``N - 1`` normalisation).
    """
    Xv = np.asarray(vectors, dtype=float)
    if Xv.ndim != 2 or len(Xv) < 2:
        raise ShapeError("fit_pca needs an (N, D) array with N >= 2")
    _check_width(width, Xv.shape[1])
    mean = Xv.mean(axis=0)
    Xc = Xv - mean
    if Xv.shape[1] <= len(Xv):
        res = sym_eig(Xc.T @ Xc / (len(Xv) - 1))
        ev, W = res.eigenvalues, res.eigenvectors
    else:
        # thin SVD keeps the cost linear in D when N < D
        _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        ev = s ** 2 / (len(Xv) - 1)
        W = apply_sign_convention(Vt.T)
        if width is not None and width > W.shape[1]:
            raise ShapeError(f"width {width} exceeds the {W.shape[1]} available components")
    k = width if width is not None else _variance_width(ev)
    return LinearModel("pca", mean, W[:, :k], ev[:k])


def fit_2dpca(samples, width=None):
    """Right projection from the image scatter ``sum_i (X_i - M)'(X_i - M)``."""
    S = np.asarray(samples, dtype=float)
    if S.ndim != 3 or len(S) < 2:
        raise ShapeError("fit_2dpca needs an (N, m, n) stack with N >= 2")
    _check_width(width, S.shape[2])
    mean = S.mean(axis=0)
    D = S - mean
    G = np.einsum("kij,kil->jl", D, D)
    res = sym_eig(0.5 * (G + G.T))
    k = width if width is not None else _variance_width(res.eigenvalues)
    return LinearModel("2dpca", mean, res.eigenvectors[:, :k], res.eigenvalues[:k])


def _class_groups(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels")
    classes = list(dict.fromkeys(labels.tolist()))
    if len(classes) < 2:
        raise ProtocolError("discriminant analysis needs at least two classes")
    return labels, classes


def vector_scatter(vectors, labels):
    """Within- and between-class scatter of row vectors."""
    Xv = np.asarray(vectors, dtype=float)
    labels, classes = _class_groups(labels, len(Xv))
    mean = Xv.mean(axis=0)
    D = Xv.shape[1]
    Sw, Sb = np.zeros((D, D)), np.zeros((D, D))
    for k in classes:
        members = Xv[labels == k]
        mk = members.mean(axis=0)
        dev = members - mk
        Sw += dev.T @ dev
        b = (mk - mean)[:, None]
        Sb += len(members) * (b @ b.T)
    return 0.5 * (Sw + Sw.T), 0.5 * (Sb + Sb.T)


def image_scatter(samples, labels):
    """Right-sided (column) within/between scatter of image samples."""
    S = np.asarray(samples, dtype=float)
    labels, classes = _class_groups(labels, len(S))
    mean = S.mean(axis=0)
    n = S.shape[2]
    Sw, Sb = np.zeros((n, n)), np.zeros((n, n))
    for k in classes:
        members = S[labels == k]
        mk = members.mean(axis=0)
        dev = members - mk
        Sw += np.einsum("kij,kil->jl", dev, dev)
        b = mk - mean
        Sb += len(members) * (b.T @ b)
    return 0.5 * (Sw + Sw.T), 0.5 * (Sb + Sb.T)


def fit_lda(vectors, labels, width=None, ridge=None):
    """Fisher directions: top generalized eigenvectors of ``(S_b, S_w + ridge I)``."""
    Xv = np.asarray(vectors, dtype=float)
    if Xv.ndim != 2:
        raise ShapeError("fit_lda needs an (N, D) array")
    Sw, Sb = vector_scatter(Xv, labels)
    c = len(set(np.asarray(labels).tolist()))
    limit = min(c - 1, Xv.shape[1])
    _check_width(width, limit)
    res = gen_eig(Sb, Sw, ridge)
    k = width if width is not None else limit
    return LinearModel("lda", Xv.mean(axis=0), res.eigenvectors[:, :k], res.eigenvalues[:k])


def fit_2dlda(samples, labels, width=None, ridge=None):
    """Right-projection 2DLDA on image samples (N, m, n)."""
    S = np.asarray(samples, dtype=float)
    if S.ndim != 3:
        raise ShapeError("fit_2dlda needs an (N, m, n) stack")
    Sw, Sb = image_scatter(S, labels)
    c = len(set(np.asarray(labels).tolist()))
    _check_width(width, S.shape[2])
    res = gen_eig(Sb, Sw, ridge)
    k = width if width is not None else min(c - 1, S.shape[2])
    return LinearModel("2dlda", S.mean(axis=0), res.eigenvectors[:, :k], res.eigenvalues[:k])


def fisher_ratio(model, samples, labels):
    """``tr(W' S_b W) / tr(W' S_w W)`` of a fitted discriminant model."""
    if model.kind == "lda":
        Sw, Sb = vector_scatter(np.asarray(samples).reshape(len(samples), -1), labels)
    else:
        Sw, Sb = image_scatter(samples, labels)
    W = model.projection
    return float(np.trace(W.T @ Sb @ W) / np.trace(W.T @ Sw @ W))
