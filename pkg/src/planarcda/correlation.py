"""Unsupervised correlation solvers: vector CCA, 2DCCA and locality-weighted 2DCCA.

2DCCA alternates two generalized eigenproblems. With the right factors
``R_X, R_Y`` fixed, the left factors solve a CCA between the row-projected
samples ``X~_i R_X`` and ``Y~_i R_Y``; with the left factors fixed, the right
factors solve the CCA between ``X~_i' L_X`` and ``Y~_i' L_Y``. Covariances are
plain sums over samples (no ``1/N``), which only rescales the projections.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import ShapeError, SingularityError, ValidationError
from .linalg import PIVOT_TOL, default_ridge, gen_eig, sign_flips


@dataclass(frozen=True)
class SolverOpts:
    d1: int | None = None
    d2: int | None = None
    max_iter: int = 50
    conv_tol: float = 1e-8
    ridge: float | None = None
    init: str = "identity"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if not self.conv_tol > 0:
            raise ValidationError("conv_tol must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise ValidationError("ridge must be nonnegative")
        if self.init not in ("identity",):
            raise ValidationError(f"unknown init {self.init!r}")
        for name in ("d1", "d2"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class ProjectionPair:
    L_X: np.ndarray
    R_X: np.ndarray
    L_Y: np.ndarray
    R_Y: np.ndarray
    left_correlations: np.ndarray
    right_correlations: np.ndarray
    iterations_run: int = 0
    converged: bool = True

    def __post_init__(self):
        # contiguous storage keeps matmul results identical after a reload
        for name in ('L_X', 'R_X', 'L_Y', 'R_Y', 'left_correlations', 'right_correlations'):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))

    @property
    def d1(self):
        return self.L_X.shape[1]

    @property
    def d2(self):
        return self.R_X.shape[1]


@dataclass(frozen=True)
class WeightMatrix:
    A_X: np.ndarray
    A_Y: np.ndarray
    sigma: float


@dataclass
class HalfStep:
    """Record of one half-step of the alternation (kept when tracing)."""

    side: str
    fixed_x: np.ndarray
    fixed_y: np.ndarray
    new_x: np.ndarray
    new_y: np.ndarray
    correlations: np.ndarray
    covariances: tuple = field(repr=False, default=())


def _view_ridges(Cxx, Cyy, ridge):
    if ridge is None:
        return default_ridge(Cxx), default_ridge(Cyy)
    return ridge, ridge


def cca_step(Cxx, Cyy, Cxy, d, ridge=None):
    """Top ``d`` canonical pairs from (auto, auto, cross) covariances.

    Solves the symmetric block problem
    ``[[0, Cxy], [Cxy', 0]] v = rho blockdiag(Cxx + e_x I, Cyy + e_y I) v``
    and splits each leading eigenvector into its two halves, rescaled so each
    half is unit-norm in its own ridged covariance metric.
    """
    m, p = Cxx.shape[0], Cyy.shape[0]
    ex, ey = _view_ridges(Cxx, Cyy, ridge)
    A = np.zeros((m + p, m + p))
    A[:m, m:] = Cxy
    A[m:, :m] = Cxy.T
    B = np.zeros((m + p, m + p))
    B[:m, :m] = Cxx + ex * np.eye(m)
    B[m:, m:] = Cyy + ey * np.eye(p)
    res = gen_eig(A, B, 0.0)
    V = res.eigenvectors[:, :d] * np.sqrt(2.0)
    # anchor the sign on the X half, which is unaffected by rescaling either view
    V = V * sign_flips(V[:m])
    rho = np.clip(res.eigenvalues[:d], 0.0, 1.0)
    return V[:m], V[m:], rho


def _check_dims(opts, m, n, p, q):
    d1 = opts.d1 if opts.d1 is not None else min(m, p, 8)
    d2 = opts.d2 if opts.d2 is not None else min(n, q, 8)
    if d1 > min(m, p):
        raise ShapeError(f"d1={d1} exceeds min(m, p)={min(m, p)}")
    if d2 > min(n, q):
        raise ShapeError(f"d2={d2} exceeds min(n, q)={min(n, q)}")
    return d1, d2


def plain_covariances(U, V):
    return kernels.sym_gram(U), kernels.sym_gram(V), kernels.bilinear_gram(U, V)


def _alternate(Xt, Yt, opts, covariances, trace=None):
    N, m, n = Xt.shape
    _, p, q = Yt.shape
    if len(Yt) != N:
        raise ShapeError("views differ in sample count")
    if N < 2:
        raise ValidationError("need at least 2 samples")
    d1, d2 = _check_dims(opts, m, n, p, q)
    XtT = np.ascontiguousarray(Xt.transpose(0, 2, 1))
    YtT = np.ascontiguousarray(Yt.transpose(0, 2, 1))
    R_X, R_Y = np.eye(n)[:, :d2], np.eye(q)[:, :d2]
    prev = None
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        cov = covariances(Xt @ R_X, Yt @ R_Y)
        L_X, L_Y, rho_l = cca_step(*cov, d1, opts.ridge)
        if trace is not None:
            trace.append(HalfStep("left", R_X, R_Y, L_X, L_Y, rho_l, cov))
        cov = covariances(XtT @ L_X, YtT @ L_Y)
        new_RX, new_RY, rho_r = cca_step(*cov, d2, opts.ridge)
        if trace is not None:
            trace.append(HalfStep("right", L_X, L_Y, new_RX, new_RY, rho_r, cov))
        R_X, R_Y = new_RX, new_RY
        score = float(rho_r.sum())
        if prev is not None and abs(score - prev) < opts.conv_tol:
            converged = True
            break
        prev = score
    return ProjectionPair(L_X, R_X, L_Y, R_Y, rho_l, rho_r, it, converged)


def fit_2dcca(data, opts=SolverOpts(), trace=None):
    """Two-dimensional CCA on a :class:`~planarcda.data.CenteredPair`.

    Starts from the first ``d2`` columns of the identity on the right and
    alternates left/right eigen-solves until the sum of the right-side
    correlations moves by less than ``opts.conv_tol``. Pass a list as
    ``trace`` to collect a :class:`HalfStep` per half-step.
    """
    return _alternate(data.X_tilde, data.Y_tilde, opts, plain_covariances, trace)


def heat_kernel_weights(samples, sigma):
    """``A_ij = exp(-||S_i - S_j||_F^2 / sigma^2)`` for a stack of samples."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    S = np.asarray(samples, dtype=float)
    if S.ndim != 3:
        raise ShapeError("samples must be an (N, rows, cols) stack")
    return np.exp(-kernels.pairwise_sqdist(S) / sigma ** 2)


def median_distance(samples):
    """Median off-diagonal Frobenius distance, a common heat-kernel width."""
    D = kernels.pairwise_sqdist(np.asarray(samples, dtype=float))
    iu = np.triu_indices(len(D), 1)
    return float(np.sqrt(np.median(D[iu]))) if iu[0].size else 1.0


def weight_matrix(data, sigma=None):
    """Heat-kernel weights for both views of a centered pair.

    ``sigma=None`` uses the median pairwise distance of each view.
    """
    sx = sigma if sigma is not None else median_distance(data.X_tilde)
    sy = sigma if sigma is not None else median_distance(data.Y_tilde)
    return WeightMatrix(heat_kernel_weights(data.X_tilde, sx),
                        heat_kernel_weights(data.Y_tilde, sy),
                        float(sigma if sigma is not None else sx))


def fit_l2dcca(data, weights, opts=SolverOpts(), trace=None):
    """Locality-weighted 2DCCA.

    Covariances are accumulated over sample pairs,
    ``C_xy = sum_ij A^X_ij A^Y_ij dU_ij dV_ij' / 2N`` and
    ``C_xx = sum_ij (A^X_ij)^2 dU_ij dU_ij' / 2N`` (likewise ``C_yy``), where
    ``dU_ij = U_i - U_j``. All-ones weights reproduce :func:`fit_2dcca`.
    """
    N = len(data.X_tilde)
    AX = np.asarray(weights.A_X, dtype=float)
    AY = np.asarray(weights.A_Y, dtype=float)
    if AX.shape != (N, N) or AY.shape != (N, N):
        raise ShapeError(f"weight matrices must be {N}x{N}")
    Wxy, Wxx, Wyy = AX * AY, AX * AX, AY * AY
    scale = 1.0 / (2 * N)

    def covariances(U, V):
        Cxx = kernels.laplacian_gram(U, U, Wxx) * scale
        Cyy = kernels.laplacian_gram(V, V, Wyy) * scale
        Cxy = kernels.laplacian_gram(U, V, Wxy) * scale
        return 0.5 * (Cxx + Cxx.T), 0.5 * (Cyy + Cyy.T), Cxy

    return _alternate(data.X_tilde, data.Y_tilde, opts, covariances, trace)


def _chol(C, ridge, overwrite=False):
    """Lower Cholesky factor of ``C + ridge I``; may reuse ``C``'s memory."""
    k = C.shape[0]
    trace = float(np.trace(C)) + k * ridge
    Cr = C if overwrite else C.copy()
    Cr.flat[::k + 1] += ridge
    msg = "covariance is numerically singular; pass a positive ridge"
    try:
        # C is symmetric, so its transpose is the same matrix in Fortran order
        K = scipy.linalg.cholesky(Cr.T, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularityError(msg) from None
    # floor relative to the mean diagonal, so the default ridge stays
    # admissible for vectors with more than 1e4 entries
    if trace <= 0 or np.min(np.diag(K)) ** 2 < PIVOT_TOL * trace / k:
        raise SingularityError(msg)
    return K


def fit_cca(Xv, Yv, d=1, ridge=None):
    """Classical CCA on vectors, ``Xv`` (N, dx) and ``Yv`` (N, dy).

    Whitens each view by the Cholesky factor of its (ridged) covariance and
    takes the SVD of the whitened cross-covariance. Cost is cubic in the
    vector dimension; the large intermediates are updated in place so the
    peak memory stays near ``dx^2 + dx*dy + dy^2`` doubles. The result is a
    :class:`ProjectionPair` whose right factors are ``[[1.0]]``.
    """
    Xv = np.asarray(Xv, dtype=float)
    Yv = np.asarray(Yv, dtype=float)
    if Xv.ndim != 2 or Yv.ndim != 2 or len(Xv) != len(Yv):
        raise ShapeError("expected (N, dx) and (N, dy) arrays with equal N")
    if len(Xv) < 2:
        raise ValidationError("need at least 2 samples")
    if not 1 <= d <= min(Xv.shape[1], Yv.shape[1]):
        raise ShapeError(f"d={d} out of range")
    Xc = Xv - Xv.mean(axis=0)
    Yc = Yv - Yv.mean(axis=0)
    Cxx, Cyy = Xc.T @ Xc, Yc.T @ Yc
    ex, ey = _view_ridges(Cxx, Cyy, ridge)
    Kx, Ky = _chol(Cxx, ex, overwrite=True), _chol(Cyy, ey, overwrite=True)
    del Cxx, Cyy
    T = scipy.linalg.solve_triangular(Kx, Xc.T @ Yc, lower=True, overwrite_b=True,
                                      check_finite=False)
    T = scipy.linalg.solve_triangular(Ky, T.T, lower=True, overwrite_b=True,
                                      check_finite=False).T
    U, s, Vt = scipy.linalg.svd(T, full_matrices=False, overwrite_a=True, check_finite=False)
    del T
    Lx = scipy.linalg.solve_triangular(Kx.T, U[:, :d], lower=False)
    Ly = scipy.linalg.solve_triangular(Ky.T, Vt[:d].T, lower=False)
    flip = sign_flips(Lx)
    rho = np.clip(s[:d], 0.0, 1.0)
    one = np.ones((1, 1))
    return ProjectionPair(Lx * flip, one, Ly * flip, one, rho, rho[:1].copy(), 1, True)
