"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is not built or ``QLAB_PURE_PYTHON=1`` is set.
"""

import numpy as np


def pivot(T, r, c):
    """Gauss-Jordan pivot of tableau ``T`` (C-contiguous float64) on entry (r, c), in place.

    Only rows with a nonzero entry in column ``c`` and columns with a nonzero
    entry in row ``r`` are touched.
    """
    T[r] /= T[r, c]
    cols = np.flatnonzero(T[r])
    rows = np.flatnonzero(T[:, c])
    rows = rows[rows != r]
    if rows.size:
        T[np.ix_(rows, cols)] -= np.outer(T[rows, c], T[r, cols])
        T[rows, c] = 0.0
    T[r, c] = 1.0


def ratio_test(T, c, basis, tol):
    """Minimum-ratio row for entering column ``c``; -1 if the column is unbounded.

    Rows are the first ``len(basis)`` rows of ``T``; the right-hand side is the
    last column.  Ties (within 1e-12 relative) go to the row whose basic
    variable has the smallest index.  Returns ``(row, ratio)``.
    """
    m = basis.shape[0]
    col = T[:m, c]
    eligible = np.flatnonzero(col > tol)
    if eligible.size == 0:
        return -1, np.inf
    ratios = T[eligible, -1] / col[eligible]
    best = ratios.min()
    ties = eligible[ratios <= best + 1e-12 * (1.0 + abs(best))]
    row = ties[np.argmin(basis[ties])]
    return int(row), float(max(T[row, -1] / T[row, c], 0.0))


def pinball_terms(R, taus):
    """Composite pinball loss of residual matrix ``R`` (n x q) and its score matrix.

    Returns ``(total, psi)`` where ``total = sum_ij R_ij * psi_ij`` and
    ``psi_ij = taus_j - 1{R_ij < 0}``.
    """
    psi = taus[None, :] - (R < 0.0)
    return float(np.sum(R * psi)), psi


def pav(y, w):
    """Weighted least-squares isotonic (non-decreasing) fit by pool-adjacent-violators."""
    n = y.shape[0]
    level = np.empty(n)
    weight = np.empty(n)
    size = np.empty(n, dtype=np.intp)
    k = -1
    for i in range(n):
        k += 1
        level[k] = y[i]
        weight[k] = w[i]
        size[k] = 1
        while k > 0 and level[k - 1] > level[k]:
            tw = weight[k - 1] + weight[k]
            level[k - 1] = (weight[k - 1] * level[k - 1] + weight[k] * level[k]) / tw
            weight[k - 1] = tw
            size[k - 1] += size[k]
            k -= 1
    return np.repeat(level[: k + 1], size[: k + 1])
