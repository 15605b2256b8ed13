"""Pure-Python/numpy fallback for the compiled kernels.

Semantics match ``_kernels.pyx``; floating point results may differ in the
last few ulps because numpy reductions do not sum in the same order as the
scalar C loops.
"""

from __future__ import annotations

import numpy as np


def pava_nondecreasing(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least-squares isotonic (nondecreasing) fit by pool-adjacent-violators."""
    n = len(y)
    level = np.empty(n)
    weight = np.empty(n)
    size = np.empty(n, dtype=np.intp)
    m = 0
    for i in range(n):
        level[m] = y[i]
        weight[m] = w[i]
        size[m] = 1
        m += 1
        while m > 1 and level[m - 2] > level[m - 1]:
            merged_w = weight[m - 2] + weight[m - 1]
            level[m - 2] = (weight[m - 2] * level[m - 2] + weight[m - 1] * level[m - 1]) / merged_w
            weight[m - 2] = merged_w
            size[m - 2] += size[m - 1]
            m -= 1
    return np.repeat(level[:m], size[:m])


def lower_hull_indices(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull vertices of points with strictly increasing x."""
    stack: list[int] = []
    for i in range(len(x)):
        while len(stack) >= 2:
            j, k = stack[-2], stack[-1]
            cross = (x[k] - x[j]) * (y[i] - y[j]) - (y[k] - y[j]) * (x[i] - x[j])
            if cross <= 0.0:
                stack.pop()
            else:
                break
        stack.append(i)
    return np.asarray(stack, dtype=np.intp)


def enet_coordinate_descent(X, z, v, l1, l2, beta, max_iter, tol):
    """Cyclic coordinate descent for weighted least squares with elastic-net penalty.

    Same contract as the compiled version: updates ``beta`` in place and
    returns the number of full sweeps performed.
    """
    p = X.shape[1]
    vX = v[:, None] * X
    a = np.einsum("ij,ij->j", vX, X)
    r = z - X @ beta
    for it in range(max_iter):
        d = 0.0
        for j in range(p):
            if a[j] + l2[j] == 0.0:
                continue
            g = a[j] * beta[j] + vX[:, j] @ r
            if g > l1[j]:
                bj = (g - l1[j]) / (a[j] + l2[j])
            elif g < -l1[j]:
                bj = (g + l1[j]) / (a[j] + l2[j])
            else:
                bj = 0.0
            delta = bj - beta[j]
            if delta != 0.0:
                r -= X[:, j] * delta
                beta[j] = bj
                d = max(d, a[j] * delta * delta)
        if d < tol:
            return it + 1
    return max_iter
