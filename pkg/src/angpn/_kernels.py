"""Hot row-wise kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``ANGPN_NUMBA`` is not set
to ``0``/``false``/``off``. Both paths perform the same floating-point
operations in the same order, so for the simplex kernel they agree
bitwise; the distance kernel agrees to rounding.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _numba_requested():
    flag = os.environ.get("ANGPN_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# pure numpy


def pairwise_distances_numpy(x):
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n - 1):
        diff = x[i + 1:] - x[i]
        row = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        d[i, i + 1:] = row
        d[i + 1:, i] = row
    return d


def _offdiag(v):
    n = v.shape[0]
    keep = ~np.eye(n, dtype=bool)
    return v[keep].reshape(n, n - 1)


def simplex_rows_numpy(v):
    """Project each row of ``v`` (diagonal excluded) onto the simplex.

    Returns ``(s, eta)`` with ``s[i, j] = max(v[i, j] + eta[i], 0)`` for
    ``j != i`` and ``s[i, i] = 0``.
    """
    n = v.shape[0]
    u = -np.sort(-_offdiag(v), axis=1)
    cs = np.cumsum(u, axis=1)
    ranks = np.arange(1, n, dtype=np.float64)
    cond = u - (cs - 1.0) / ranks > 0
    # rho is the index before the first failure, as in the numba loop
    rho = np.where(cond.all(axis=1), n - 2, np.argmax(~cond, axis=1) - 1)
    tau = (cs[np.arange(n), rho] - 1.0) / (rho + 1.0)
    s = np.maximum(v - tau[:, None], 0.0)
    np.fill_diagonal(s, 0.0)
    return s, -tau


# ---------------------------------------------------------------------------
# numba

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def pairwise_distances_numba(x):
        n, m = x.shape
        d = np.zeros((n, n))
        for i in range(n - 1):
            for j in range(i + 1, n):
                acc = 0.0
                for c in range(m):
                    t = x[i, c] - x[j, c]
                    acc += t * t
                r = np.sqrt(acc)
                d[i, j] = r
                d[j, i] = r
        return d

    @numba.njit(cache=True)
    def simplex_rows_numba(v):
        # Every support entry satisfies v >= max(v) - 1, so only that
        # candidate set (plus slack) needs sorting. The threshold loop then
        # runs over the same descending prefix as a full sort would.
        n = v.shape[0]
        s = np.zeros((n, n))
        eta = np.empty(n)
        u = np.empty(n - 1)
        for i in range(n):
            vmax = -np.inf
            for j in range(n):
                if j != i and v[i, j] > vmax:
                    vmax = v[i, j]
            cut = vmax - 1.0 - 1e-6 * (1.0 + abs(vmax))
            p = 0
            for j in range(n):
                if j != i and v[i, j] >= cut:
                    u[p] = v[i, j]
                    p += 1
            srt = np.sort(u[:p])
            acc = 0.0
            tau = 0.0
            for r in range(p):
                val = srt[p - 1 - r]
                acc += val
                t = (acc - 1.0) / (r + 1.0)
                if val - t > 0:
                    tau = t
                else:
                    break
            for j in range(n):
                if j != i:
                    w = v[i, j] - tau
                    s[i, j] = w if w > 0.0 else 0.0
            eta[i] = -tau
        return s, eta

else:  # pragma: no cover
    pairwise_distances_numba = None
    simplex_rows_numba = None


def pairwise_distances(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return pairwise_distances_numba(x)
    return pairwise_distances_numpy(x)


def simplex_rows(v):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if USE_NUMBA:
        return simplex_rows_numba(v)
    return simplex_rows_numpy(v)
