"""The compiled kernels agree with the numpy fallback and with naive loops."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planarcda import kernels
from planarcda._ext import kernels_py

try:
    from planarcda._ext import _kernels as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def loop_sqdist(S):
    N = len(S)
    D = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            D[i, j] = np.sum((S[i] - S[j]) ** 2)
    return D


def loop_laplacian(U, V, W):
    # sum_ij W_ij (U_i - U_j)(V_i - V_j)'
    out = np.zeros((U.shape[1], V.shape[1]))
    for i in range(len(U)):
        for j in range(len(U)):
            out += W[i, j] * (U[i] - U[j]) @ (V[i] - V[j]).T
    return out


def loop_scatter(F, groups, fixed):
    c = groups.max() + 1
    M = F.mean(axis=0)
    Sw = np.zeros((F.shape[1], F.shape[1]))
    Sb = np.zeros_like(Sw)
    P = fixed @ fixed.T
    for k in range(c):
        members = F[groups == k]
        Mk = members.mean(axis=0)
        for f in members:
            Sw += (f - Mk) @ P @ (f - Mk).T
        Sb += len(members) * (Mk - M) @ P @ (Mk - M).T
    return Sw, Sb


def _triple(draw_seed, N, a, b, d):
    rng = np.random.default_rng(draw_seed)
    return rng.standard_normal((N, a, d)), rng.standard_normal((N, b, d))


BACKENDS = [kernels_py] + ([compiled] if compiled is not None else [])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestAgainstLoops:

    def test_pairwise_sqdist(self, impl, rng):
        S = rng.standard_normal((7, 3, 4))
        D = impl.pairwise_sqdist(S)
        np.testing.assert_allclose(D, loop_sqdist(S), rtol=1e-12, atol=1e-12)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)

    def test_grams(self, impl, rng):
        U, V = rng.standard_normal((6, 4, 3)), rng.standard_normal((6, 2, 3))
        np.testing.assert_allclose(impl.bilinear_gram(U, V),
                                   sum(u @ v.T for u, v in zip(U, V)), rtol=1e-12)
        G = impl.sym_gram(U)
        np.testing.assert_allclose(G, sum(u @ u.T for u in U), rtol=1e-12)
        assert np.array_equal(G, G.T)

    def test_laplacian_gram(self, impl, rng):
        U, V = rng.standard_normal((5, 3, 2)), rng.standard_normal((5, 4, 2))
        W = rng.random((5, 5))
        W = W + W.T
        np.testing.assert_allclose(impl.laplacian_gram(U, V, W), loop_laplacian(U, V, W),
                                   rtol=1e-11, atol=1e-11)

    def test_scatter_pair(self, impl, rng):
        F = rng.standard_normal((9, 4, 3))
        groups = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
        means = np.stack([F[groups == k].mean(axis=0) for k in range(3)])
        fixed = rng.standard_normal((3, 2))
        Sw, Sb = impl.scatter_pair(F, groups, means, F.mean(axis=0),
                                   np.array([3.0, 3.0, 3.0]), fixed)
        ow, ob = loop_scatter(F, groups, fixed)
        np.testing.assert_allclose(Sw, ow, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(Sb, ob, rtol=1e-12, atol=1e-12)


@needs_compiled
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 5),
       st.integers(1, 5), st.integers(1, 4))
def test_backends_agree(seed, N, a, b, d):
    U, V = _triple(seed, N, a, b, d)
    W = np.random.default_rng(seed + 1).random((N, N))
    W = W + W.T
    for name, args in (("pairwise_sqdist", (U,)), ("sym_gram", (U,)),
                       ("bilinear_gram", (U, V)), ("laplacian_gram", (U, V, W))):
        x = getattr(kernels_py, name)(*args)
        y = getattr(compiled, name)(*args)
        scale = max(1.0, float(np.abs(x).max()))
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12 * scale, err_msg=name)


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")
    assert (kernels.BACKEND == "compiled") <= kernels.compiled_available()


def _fit_in_subprocess(pure):
    code = ("import numpy as np\n"
            "from planarcda import kernels\n"
            "from planarcda.cdtrl import fit_cdtrl\n"
            "from planarcda.data import SynthSpec, gen_synthetic\n"
            "m = fit_cdtrl(gen_synthetic(SynthSpec(per_class=5, seed=4)))\n"
            "print(kernels.BACKEND)\n"
            "print(repr(m.range_branch.l.tolist()))\n")
    env = dict(os.environ, PLANARCDA_PURE=pure)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.splitlines()
    return out[0], np.array(eval(out[1]))


@needs_compiled
def test_env_switch_selects_fallback_and_fits_agree():
    b_pure, l_pure = _fit_in_subprocess("1")
    b_comp, l_comp = _fit_in_subprocess("0")
    assert (b_pure, b_comp) == ("python", "compiled")
    np.testing.assert_allclose(l_pure, l_comp, atol=1e-8)
