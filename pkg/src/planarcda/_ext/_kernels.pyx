# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled accumulation loops; see kernels_py for the reference semantics."""
import numpy as np
from libc.math cimport sqrt


def pairwise_sqdist(S):
    cdef double[:, :, ::1] s = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t N = s.shape[0], a = s.shape[1], b = s.shape[2]
    out = np.zeros((N, N))
    cdef double[:, ::1] D = out
    cdef Py_ssize_t i, j, r, c
    cdef double acc, diff
    with nogil:
        for i in range(N):
            for j in range(i + 1, N):
                acc = 0.0
                for r in range(a):
                    for c in range(b):
                        diff = s[i, r, c] - s[j, r, c]
                        acc = acc + diff * diff
                D[i, j] = acc
                D[j, i] = acc
    return out


def bilinear_gram(U, V):
    cdef double[:, :, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, :, ::1] v = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t N = u.shape[0], a = u.shape[1], k = u.shape[2], b = v.shape[1]
    out = np.zeros((a, b))
    cdef double[:, ::1] G = out
    cdef Py_ssize_t i, r, c, t
    cdef double acc
    with nogil:
        for i in range(N):
            for r in range(a):
                for c in range(b):
                    acc = 0.0
                    for t in range(k):
                        acc = acc + u[i, r, t] * v[i, c, t]
                    G[r, c] += acc
    return out


cdef void _sym_accumulate(double[:, ::1] T, double[:, ::1] S, double weight) noexcept nogil:
    cdef Py_ssize_t a = T.shape[0], k = T.shape[1], r, c, t
    cdef double acc
    for r in range(a):
        for c in range(r, a):
            acc = 0.0
            for t in range(k):
                acc = acc + T[r, t] * T[c, t]
            S[r, c] += weight * acc


cdef void _mirror(double[:, ::1] S) noexcept nogil:
    cdef Py_ssize_t a = S.shape[0], r, c
    for r in range(a):
        for c in range(r + 1, a):
            S[c, r] = S[r, c]


def sym_gram(U):
    cdef double[:, :, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t N = u.shape[0], a = u.shape[1], i
    out = np.zeros((a, a))
    cdef double[:, ::1] S = out
    with nogil:
        for i in range(N):
            _sym_accumulate(u[i], S, 1.0)
        _mirror(S)
    return out


def laplacian_gram(U, V, W):
    cdef double[:, :, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, :, ::1] v = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t N = u.shape[0], a = u.shape[1], k = u.shape[2], b = v.shape[1]
    cdef Py_ssize_t i, j, r, c, t
    vt = np.zeros((N, b, k))
    cdef double[:, :, ::1] vw = vt
    rowsum = np.zeros(N)
    cdef double[::1] ws = rowsum
    out = np.zeros((a, b))
    cdef double[:, ::1] G = out
    cdef double acc, wij
    with nogil:
        for i in range(N):
            for j in range(N):
                wij = w[i, j]
                ws[i] += wij
                for c in range(b):
                    for t in range(k):
                        vw[i, c, t] += wij * v[j, c, t]
        for i in range(N):
            for r in range(a):
                for c in range(b):
                    acc = 0.0
                    for t in range(k):
                        acc = acc + u[i, r, t] * (ws[i] * v[i, c, t] - vw[i, c, t])
                    G[r, c] += 2.0 * acc
    return out


def scatter_pair(F, groups, class_means, total_mean, counts, fixed):
    cdef double[:, :, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t[::1] g = np.ascontiguousarray(groups, dtype=np.intp)
    cdef double[:, :, ::1] M = np.ascontiguousarray(class_means, dtype=np.float64)
    cdef double[:, ::1] M0 = np.ascontiguousarray(total_mean, dtype=np.float64)
    cdef double[::1] n = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double[:, ::1] P = np.ascontiguousarray(fixed, dtype=np.float64)
    cdef Py_ssize_t N = f.shape[0], a = f.shape[1], b = f.shape[2]
    cdef Py_ssize_t c = M.shape[0], k = P.shape[1]
    cdef Py_ssize_t i, j, r, s, t
    cdef double acc
    sw = np.zeros((a, a))
    sb = np.zeros((a, a))
    tmp = np.zeros((a, k))
    cdef double[:, ::1] Sw = sw
    cdef double[:, ::1] Sb = sb
    cdef double[:, ::1] T = tmp
    with nogil:
        for i in range(N):
            for r in range(a):
                for t in range(k):
                    acc = 0.0
                    for s in range(b):
                        acc = acc + (f[i, r, s] - M[g[i], r, s]) * P[s, t]
                    T[r, t] = acc
            _sym_accumulate(T, Sw, 1.0)
        for j in range(c):
            for r in range(a):
                for t in range(k):
                    acc = 0.0
                    for s in range(b):
                        acc = acc + (M[j, r, s] - M0[r, s]) * P[s, t]
                    T[r, t] = acc
            _sym_accumulate(T, Sb, n[j])
        _mirror(Sw)
        _mirror(Sb)
    return sw, sb
