import os
import subprocess
import sys

import numpy as np
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from signorini_hom import kernels


def _random_mesh(rng, n):
    V = rng.uniform(size=(n + 3, 2))
    T = np.array([rng.choice(n + 3, 3, replace=False) for _ in range(n)], np.int64)
    return V, T


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 40))
def test_gradients_and_stiffness_agree(seed, n):
    rng = np.random.default_rng(seed)
    V, T = _random_mesh(rng, n)
    a_np, g_np = kernels.p1_gradients_numpy(V, T)
    a_nb, g_nb = kernels.p1_gradients_numba(V, T)
    ok = a_np > 1e-6
    assert np.allclose(a_np, a_nb, rtol=1e-12, atol=0)
    assert np.allclose(g_np[ok], g_nb[ok], rtol=1e-9, atol=1e-9)
    C = rng.normal(size=(n, 2, 2))
    k_np = kernels.element_stiffness_numpy(a_np[ok], g_np[ok], C[ok])
    k_nb = kernels.element_stiffness_numba(a_np[ok], g_np[ok], C[ok])
    assert np.allclose(k_np, k_nb, rtol=1e-12, atol=1e-12)


def test_gradients_reproduce_linear_functions():
    rng = np.random.default_rng(1)
    V, T = _random_mesh(rng, 20)
    areas, G = kernels.p1_gradients(V, T)
    u = 3 * V[:, 0] - 2 * V[:, 1] + 1
    g = np.einsum("tia,ti->ta", G, u[T])
    assert np.allclose(g[areas > 1e-6], [3, -2])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_psor_sweep_agree(seed):
    rng = np.random.default_rng(seed)
    n = 15
    B = rng.normal(size=(n, n))
    M = sp.csr_matrix(B @ B.T + n * np.eye(n))
    b = rng.normal(size=n)
    mask = rng.uniform(size=n) < 0.5
    x1, x2 = np.zeros(n), np.zeros(n)
    for _ in range(5):
        c1 = kernels.psor_sweep_numpy(M.indptr, M.indices, M.data, M.diagonal(), b, x1, mask, 1.3)
        c2 = kernels.psor_sweep_numba(M.indptr, M.indices, M.data, M.diagonal(), b, x2, mask, 1.3)
        assert np.allclose(x1, x2, rtol=1e-12, atol=1e-14)
        assert abs(c1 - c2) < 1e-12
    assert np.all(x1[mask] >= 0)


def test_window_sums_agree():
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 9, size=200)
    vals = rng.normal(size=(200, 2))
    assert np.allclose(kernels.window_sums_numpy(idx, vals, 9), kernels.window_sums_numba(idx, vals, 9))


def test_env_flag_selects_numpy_path():
    code = ("from signorini_hom import _accel, kernels; "
            "print(_accel.USE_NUMBA, kernels.psor_sweep is kernels.psor_sweep_numpy)")
    env = dict(os.environ, SIGNORINI_HOM_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
    env["SIGNORINI_HOM_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "False"]
