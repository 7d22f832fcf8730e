"""Dense symmetric eigen-solvers used by every fitting routine.

All routines return eigenvalues in descending order and apply a fixed sign
convention to eigenvectors (largest-magnitude entry positive) so that repeated
calls, and models serialized from them, are reproducible bit for bit.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericError, ShapeError, SingularityError

SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class GevResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ridge_used: float = 0.0


def _check_square(S, name="matrix"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise NumericError(f"{name} has non-finite entries")
    return S


def _check_symmetric(S, name="matrix"):
    S = _check_square(S, name)
    scale = np.abs(S).max()
    if scale > 0 and np.abs(S - S.T).max() > SYMMETRY_TOL * scale:
        raise ShapeError(f"{name} is not symmetric")
    return S


def sign_flips(V):
    """Per-column +-1 making each column's largest-magnitude entry positive."""
    V = np.asarray(V, dtype=float)
    if V.size == 0:
        return np.ones(V.shape[1] if V.ndim == 2 else 0)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def apply_sign_convention(V):
    """Flip columns so each one's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float, copy=True)
    return V * sign_flips(V)


def _descending(w, V):
    order = np.argsort(-w, kind="stable")
    return w[order], apply_sign_convention(V[:, order])


def default_ridge(B):
    """Scale-invariant ridge: 1e-8 times the mean diagonal of ``B``."""
    B = np.asarray(B, dtype=float)
    return 1e-8 * float(np.trace(B)) / B.shape[0]


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    S = _check_symmetric(S)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    w, V = _descending(w, V)
    return GevResult(w, V, 0.0)


def gen_eig(A, B, ridge=None):
    """Solve ``A v = lambda (B + ridge I) v`` for symmetric A and PSD B.

    Reduces to a standard problem through the Cholesky factor of the ridged
    ``B``, so the returned vectors are orthonormal in the ``B + ridge I``
    metric. ``ridge=None`` selects :func:`default_ridge`.

    Raises
    ------
    SingularityError
        If ``B + ridge I`` is not numerically positive definite.
    """
    A = _check_symmetric(A, "A")
    B = _check_symmetric(B, "B")
    if A.shape != B.shape:
        raise ShapeError(f"A and B differ in shape: {A.shape} vs {B.shape}")
    if ridge is None:
        ridge = default_ridge(B)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    k = A.shape[0]
    Br = 0.5 * (B + B.T) + ridge * np.eye(k)
    trace = float(np.trace(Br))
    msg = ("B + ridge*I is numerically singular; raise the ridge "
           "or use the null-space path")
    if trace <= 0:
        raise SingularityError(msg)
    try:
        G = np.linalg.cholesky(Br)
    except np.linalg.LinAlgError:
        raise SingularityError(msg) from None
    if np.min(np.diag(G)) ** 2 < PIVOT_TOL * trace:
        raise SingularityError(msg)
    Y = scipy.linalg.solve_triangular(G, 0.5 * (A + A.T), lower=True)
    C = scipy.linalg.solve_triangular(G, Y.T, lower=True).T
    w, U = np.linalg.eigh(0.5 * (C + C.T))
    V = scipy.linalg.solve_triangular(G.T, U, lower=False)
    w, V = _descending(w, V)
    return GevResult(w, V, float(ridge))


def null_space(S, rel_tol=1e-8):
    """Orthonormal basis of the numerical null space of a symmetric PSD matrix.

    Columns are eigenvectors whose eigenvalue is at most ``rel_tol`` times the
    largest eigenvalue; an ``(n, 0)`` array is returned for full-rank input.
    """
    res = sym_eig(S)
    w, V = res.eigenvalues, res.eigenvectors
    top = max(float(w[0]), 0.0)
    keep = w <= rel_tol * top
    return V[:, keep]


def range_space(S, rel_tol=1e-8):
    """Complement of :func:`null_space`: eigenvectors above the threshold."""
    res = sym_eig(S)
    w, V = res.eigenvalues, res.eigenvectors
    top = max(float(w[0]), 0.0)
    keep = w > rel_tol * top
    return V[:, keep]


def trace_ratio(A, B, k, init=None, tol=1e-14, max_iter=200):
    """Maximise ``tr(V' A V) / tr(V' B V)`` over orthonormal ``V`` with k columns.

    ``B`` must be positive definite on the whole space. Iterates
    ``rho <- ratio(V)``, ``V <- top-k eigenvectors of A - rho B``, which
    increases the ratio monotonically and converges to the global optimum.
    ``init`` (any k columns) seeds the first ratio.

    Returns ``(V, rho)``.
    """
    A = _check_symmetric(A, "A")
    B = _check_symmetric(B, "B")
    if init is None:
        V = sym_eig(A).eigenvectors[:, :k]
    else:
        V, _ = np.linalg.qr(np.asarray(init, dtype=float)[:, :k])
    rho = float(np.trace(V.T @ A @ V) / np.trace(V.T @ B @ V))
    for _ in range(max_iter):
        V = sym_eig(A - rho * B).eigenvectors[:, :k]
        new = float(np.trace(V.T @ A @ V) / np.trace(V.T @ B @ V))
        done = abs(new - rho) <= tol * max(abs(new), 1.0)
        rho = new
        if done:
            break
    return V, rho
