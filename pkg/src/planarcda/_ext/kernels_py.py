"""numpy reference versions of the accumulation kernels.

Signatures and results match ``_kernels.pyx``; only summation order differs,
so the two agree to rounding error.
"""
import numpy as np


def _sym(S):
    return 0.5 * (S + S.T)


def pairwise_sqdist(S):
    """Squared Frobenius distances between all pairs of samples ``S[i]``."""
    S = np.ascontiguousarray(S, dtype=float)
    N = S.shape[0]
    flat = S.reshape(N, -1)
    D = np.zeros((N, N))
    for i in range(N - 1):
        diff = flat[i + 1:] - flat[i]
        d = np.einsum("ij,ij->i", diff, diff)
        D[i, i + 1:] = d
        D[i + 1:, i] = d
    return D


def bilinear_gram(U, V):
    """``sum_i U[i] @ V[i].T`` for stacks ``U`` (N, a, k) and ``V`` (N, b, k)."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    return np.tensordot(U, V, axes=([0, 2], [0, 2]))


def sym_gram(U):
    """``sum_i U[i] @ U[i].T``, exactly symmetric."""
    return _sym(bilinear_gram(U, U))


def laplacian_gram(U, V, W):
    """``sum_ij W_ij (U_i - U_j)(V_i - V_j)'`` for symmetric weights ``W``.

    Evaluated as ``2 sum_i w_i U_i V_i' - 2 sum_ij W_ij U_i V_j'`` with
    ``w_i = sum_j W_ij``.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    w = W.sum(axis=1)
    diag = np.tensordot(U * w[:, None, None], V, axes=([0, 2], [0, 2]))
    mixed = np.tensordot(U, np.tensordot(W, V, axes=(1, 0)), axes=([0, 2], [0, 2]))
    return 2.0 * diag - 2.0 * mixed


def scatter_pair(F, groups, class_means, total_mean, counts, fixed):
    """Within/between scatter of maps ``F`` under right factor ``fixed``.

    ``S_w = sum_i (F_i - M_g(i)) P (F_i - M_g(i))'`` and
    ``S_b = sum_j n_j (M_j - M) P (M_j - M)'`` with ``P = fixed fixed'``.
    """
    F = np.asarray(F, dtype=float)
    groups = np.asarray(groups, dtype=np.intp)
    D = (F - class_means[groups]) @ fixed
    Sw = sym_gram(D)
    B = ((class_means - total_mean) @ fixed) * np.sqrt(counts)[:, None, None]
    Sb = sym_gram(B)
    return Sw, Sb
