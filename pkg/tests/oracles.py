"""Independent reference implementations used by the tests."""

import numpy as np


def kmeans_1d_optimal_ss(values, k):
    """Exact minimum within-cluster sum of squares for 1-D k-means.

    Optimal 1-D clusters are contiguous runs of the sorted values, so a
    dynamic program over (clusters used, prefix length) finds the optimum.
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    s1 = np.concatenate([[0.0], np.cumsum(v)])
    s2 = np.concatenate([[0.0], np.cumsum(v * v)])

    def cost(lo, hi):
        # SS of v[lo:hi] for arrays of lo with fixed hi
        cnt = hi - lo
        tot = s1[hi] - s1[lo]
        return (s2[hi] - s2[lo]) - tot * tot / cnt

    prev = np.full(n + 1, np.inf)
    for i in range(1, n + 1):
        prev[i] = cost(np.array([0]), i)[0]
    for j in range(2, k + 1):
        cur = np.full(n + 1, np.inf)
        for i in range(j, n + 1):
            lo = np.arange(j - 1, i)
            cur[i] = np.min(prev[lo] + cost(lo, i))
        prev = cur
    return float(max(prev[n], 0.0))


def kkt_report(K, y, alpha, bias, C, tol):
    """Largest violation of the soft-margin dual optimality conditions."""
    f = K @ (alpha * y) + bias
    m = y * f
    worst = 0.0
    for a, mi in zip(alpha, m):
        if a <= 1e-8 * C:
            worst = max(worst, 1 - mi)
        elif a >= C * (1 - 1e-8):
            worst = max(worst, mi - 1)
        else:
            worst = max(worst, abs(mi - 1))
    return worst, float(abs(np.dot(alpha, y)))
