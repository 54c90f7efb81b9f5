"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``p1_gradients``, ``element_stiffness``, ``psor_sweep``,
``window_sums``) dispatch on :data:`signorini_hom._accel.USE_NUMBA`.  Both
flavours are importable under ``*_numba`` / ``*_numpy`` so the benchmark and
the tests can compare them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ----------------------------------------------------------------------------
# P1 geometry


def p1_gradients_numpy(vertices, triangles):
    p = vertices[triangles]  # (T, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    areas = 0.5 * np.abs(det)
    grads = np.empty((len(triangles), 3, 2))
    # gradient of barycentric coordinate i is rot(p_{i+2} - p_{i+1}) / det
    for i in range(3):
        a = p[:, (i + 1) % 3]
        b = p[:, (i + 2) % 3]
        grads[:, i, 0] = (a[:, 1] - b[:, 1]) / det
        grads[:, i, 1] = (b[:, 0] - a[:, 0]) / det
    return areas, grads


@njit
def p1_gradients_numba(vertices, triangles):
    nt = triangles.shape[0]
    areas = np.empty(nt)
    grads = np.empty((nt, 3, 2))
    for t in range(nt):
        i0, i1, i2 = triangles[t, 0], triangles[t, 1], triangles[t, 2]
        x0, y0 = vertices[i0, 0], vertices[i0, 1]
        x1, y1 = vertices[i1, 0], vertices[i1, 1]
        x2, y2 = vertices[i2, 0], vertices[i2, 1]
        det = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        areas[t] = 0.5 * abs(det)
        grads[t, 0, 0] = (y1 - y2) / det
        grads[t, 0, 1] = (x2 - x1) / det
        grads[t, 1, 0] = (y2 - y0) / det
        grads[t, 1, 1] = (x0 - x2) / det
        grads[t, 2, 0] = (y0 - y1) / det
        grads[t, 2, 1] = (x1 - x0) / det
    return areas, grads


# ----------------------------------------------------------------------------
# element stiffness |T| G A G^T


def element_stiffness_numpy(areas, grads, coeffs):
    return areas[:, None, None] * np.einsum("tia,tab,tjb->tij", grads, coeffs, grads)


@njit
def element_stiffness_numba(areas, grads, coeffs):
    nt = areas.shape[0]
    out = np.empty((nt, 3, 3))
    for t in range(nt):
        for i in range(3):
            g0 = coeffs[t, 0, 0] * grads[t, i, 0] + coeffs[t, 1, 0] * grads[t, i, 1]
            g1 = coeffs[t, 0, 1] * grads[t, i, 0] + coeffs[t, 1, 1] * grads[t, i, 1]
            for j in range(3):
                out[t, i, j] = areas[t] * (g0 * grads[t, j, 0] + g1 * grads[t, j, 1])
    return out


# ----------------------------------------------------------------------------
# projected SOR sweep on a CSR matrix; lower bound 0 on the masked entries


def psor_sweep_numpy(indptr, indices, data, diag, rhs, x, constrained, omega):
    change = 0.0
    for i in range(len(x)):
        lo, hi = indptr[i], indptr[i + 1]
        r = rhs[i] - np.dot(data[lo:hi], x[indices[lo:hi]])
        new = x[i] + omega * r / diag[i]
        if constrained[i] and new < 0.0:
            new = 0.0
        d = abs(new - x[i])
        if d > change:
            change = d
        x[i] = new
    return change


@njit
def psor_sweep_numba(indptr, indices, data, diag, rhs, x, constrained, omega):
    change = 0.0
    for i in range(x.shape[0]):
        r = rhs[i]
        for k in range(indptr[i], indptr[i + 1]):
            r -= data[k] * x[indices[k]]
        new = x[i] + omega * r / diag[i]
        if constrained[i] and new < 0.0:
            new = 0.0
        d = abs(new - x[i])
        if d > change:
            change = d
        x[i] = new
    return change


# ----------------------------------------------------------------------------
# per-window sums of per-triangle quantities


def window_sums_numpy(window_index, values, n_windows):
    out = np.zeros((n_windows, values.shape[1]))
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(window_index, weights=values[:, c], minlength=n_windows)
    return out


@njit
def window_sums_numba(window_index, values, n_windows):
    out = np.zeros((n_windows, values.shape[1]))
    for t in range(values.shape[0]):
        w = window_index[t]
        for c in range(values.shape[1]):
            out[w, c] += values[t, c]
    return out


if USE_NUMBA:
    p1_gradients = p1_gradients_numba
    element_stiffness = element_stiffness_numba
    psor_sweep = psor_sweep_numba
    window_sums = window_sums_numba
else:
    p1_gradients = p1_gradients_numpy
    element_stiffness = element_stiffness_numpy
    psor_sweep = psor_sweep_numpy
    window_sums = window_sums_numpy
