# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: isotonic regression, lower convex hull, coordinate descent."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pava_nondecreasing(double[::1] y, double[::1] w):
    """Weighted least-squares isotonic (nondecreasing) fit by pool-adjacent-violators."""
    cdef Py_ssize_t n = y.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] fit = out
    cdef cnp.ndarray[double, ndim=1] level = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] weight = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] size = np.empty(n, dtype=np.intp)
    cdef double[::1] lv = level
    cdef double[::1] wv = weight
    cdef cnp.intp_t[::1] sz = size
    cdef Py_ssize_t i, j, k, m = 0
    cdef double merged_w, merged_v

    for i in range(n):
        lv[m] = y[i]
        wv[m] = w[i]
        sz[m] = 1
        m += 1
        while m > 1 and lv[m - 2] > lv[m - 1]:
            merged_w = wv[m - 2] + wv[m - 1]
            merged_v = (wv[m - 2] * lv[m - 2] + wv[m - 1] * lv[m - 1]) / merged_w
            lv[m - 2] = merged_v
            wv[m - 2] = merged_w
            sz[m - 2] += sz[m - 1]
            m -= 1

    k = 0
    for j in range(m):
        for i in range(sz[j]):
            fit[k] = lv[j]
            k += 1
    return out


def lower_hull_indices(double[::1] x, double[::1] y):
    """Indices of the lower convex hull vertices of points with strictly increasing x."""
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.intp_t, ndim=1] stack = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] st = stack
    cdef Py_ssize_t i, m = 0
    cdef double cross

    for i in range(n):
        while m >= 2:
            # pop while the middle point lies on or above the chord
            cross = (x[st[m - 1]] - x[st[m - 2]]) * (y[i] - y[st[m - 2]]) - \
                    (y[st[m - 1]] - y[st[m - 2]]) * (x[i] - x[st[m - 2]])
            if cross <= 0.0:
                m -= 1
            else:
                break
        st[m] = i
        m += 1
    return np.asarray(stack[:m]).copy()


def enet_coordinate_descent(double[:, ::1] X, double[::1] z, double[::1] v,
                            double[::1] l1, double[::1] l2, double[::1] beta,
                            int max_iter, double tol):
    """Cyclic coordinate descent for weighted least squares with elastic-net penalty.

    Minimizes (1/2) sum_i v_i (z_i - x_i'b)^2 + sum_j l1_j |b_j| + (1/2) sum_j l2_j b_j^2.
    ``beta`` is updated in place; returns the number of full sweeps performed.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef cnp.ndarray[double, ndim=1] resid = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] diag = np.empty(p, dtype=np.float64)
    cdef double[::1] r = resid
    cdef double[::1] a = diag
    cdef Py_ssize_t i, j, it
    cdef double s, g, bj, d, delta

    for j in range(p):
        s = 0.0
        for i in range(n):
            s += v[i] * X[i, j] * X[i, j]
        a[j] = s

    for i in range(n):
        s = z[i]
        for j in range(p):
            s -= X[i, j] * beta[j]
        r[i] = s

    for it in range(max_iter):
        d = 0.0
        for j in range(p):
            if a[j] + l2[j] == 0.0:
                continue
            g = a[j] * beta[j]
            for i in range(n):
                g += v[i] * X[i, j] * r[i]
            if g > l1[j]:
                bj = (g - l1[j]) / (a[j] + l2[j])
            elif g < -l1[j]:
                bj = (g + l1[j]) / (a[j] + l2[j])
            else:
                bj = 0.0
            delta = bj - beta[j]
            if delta != 0.0:
                for i in range(n):
                    r[i] -= X[i, j] * delta
                beta[j] = bj
                if a[j] * delta * delta > d:
                    d = a[j] * delta * delta
        if d < tol:
            return it + 1
    return max_iter
