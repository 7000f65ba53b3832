"""Pairwise distances, the adaptive-graph row solver, and the fixed kNN graph.

The adaptive graph solves, independently for every row ``i``::

    min_s  sum_j c_ij s_j + gamma_i * sum_j s_j**2
    s.t.   s >= 0,  sum_j s_j = 1,  s_i = 0

with costs ``c = D - beta * F F^T``. Two solvers are offered:

``exact-simplex``
    Euclidean projection of ``-c_i / (2 gamma_i)`` onto the simplex; the
    threshold ``eta`` is solved exactly so that each row sums to one.
``paper-literal``
    ``s_ij = max(-c_ij / (2 gamma_i) + eta_i, 0)`` with the closed-form
    threshold ``eta_i = 1/k + sum of the k smallest distances / (2 k gamma_i)``.
    The two agree whenever the optimal support is the k nearest neighbours.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError, ParameterError
from .numkit import Var, apply, as_matrix

EXACT = "exact-simplex"
PAPER = "paper-literal"
GLOBAL = "global"
PER_ROW_K = "per-row-k"

# per-row-k gammas are shrunk by this relative amount so that the
# (k+1)-th neighbour lands strictly outside the support despite rounding
_GAMMA_SHRINK = 1e-9


@dataclass(frozen=True)
class GraphMode:
    solver: str = EXACT
    gamma_mode: str = GLOBAL

    def __post_init__(self):
        if self.solver not in (EXACT, PAPER):
            raise ParameterError(f"unknown graph solver {self.solver!r}")
        if self.gamma_mode not in (GLOBAL, PER_ROW_K):
            raise ParameterError(f"unknown gamma mode {self.gamma_mode!r}")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Euclidean distances plus the per-row ascending neighbour order.

    ``order[i]`` lists every ``j != i`` sorted by ``d[i, j]``, ties by index.
    """

    d: np.ndarray
    order: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.d.shape[0]

    @property
    def sorted_d(self):
        """Row-wise ascending off-diagonal distances, shape (n, n - 1)."""
        if "sorted" not in self._cache:
            self._cache["sorted"] = np.take_along_axis(self.d, self.order, axis=1)
        return self._cache["sorted"]

    def sorted_row(self, i):
        return self.d[i, self.order[i]]

    @classmethod
    def from_matrix(cls, d):
        d = np.array(d, dtype=np.float64)
        n = d.shape[0]
        if d.ndim != 2 or d.shape[1] != n or n < 2:
            raise DataError(f"distance matrix must be square with n >= 2, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise DataError("distances must be finite and nonnegative")
        keep = ~np.eye(n, dtype=bool)
        cols = np.broadcast_to(np.arange(n), (n, n))[keep].reshape(n, n - 1)
        off = d[keep].reshape(n, n - 1)
        idx = np.argsort(off, axis=1, kind="stable")
        order = np.take_along_axis(cols, idx, axis=1)
        return cls(d, order)


def pairwise_euclidean(x):
    """All pairwise Euclidean distances between the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError(f"need at least two points, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("features contain NaN or Inf")
    return DistanceMatrix.from_matrix(_kernels.pairwise_distances(x))


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise ParameterError(f"k must be in [1, {n - 1}], got {k}")


def eta_paper(dist, i, k, gamma):
    """Closed-form threshold for row ``i`` assuming a k-nearest support."""
    _check_k(k, dist.n)
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    ds = dist.sorted_row(i)
    acc = 0.0
    for j in range(k):
        acc += ds[j]
    return 1.0 / k + acc / (2.0 * k * gamma)


def eta_paper_rows(dist, k, gamma):
    """Vectorised :func:`eta_paper` over all rows (``gamma`` per row)."""
    _check_k(k, dist.n)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (dist.n,))
    ds = dist.sorted_d
    acc = np.cumsum(ds[:, :k], axis=1)[:, -1]
    return 1.0 / k + acc / (2.0 * k * gamma)


def per_row_gamma(dist, k):
    """Row-wise gamma that makes the beta=0 support exactly the k nearest."""
    if not 1 <= k <= dist.n - 2:
        raise ParameterError(f"per-row gamma needs k in [1, {dist.n - 2}], got {k}")
    ds = dist.sorted_d
    g = 0.5 * (k * ds[:, k] - ds[:, :k].sum(axis=1))
    floor = 1e-12 * max(float(dist.d.mean()), 1.0)
    return np.maximum(g * (1.0 - _GAMMA_SHRINK), floor)


def resolve_gamma(dist, gamma, k, gamma_mode=GLOBAL):
    """Per-row gamma vector.

    In global mode ``gamma=None`` selects the mean of the per-row values,
    which scales with the data.
    """
    key = ("gamma", gamma, k, gamma_mode)
    if key in dist._cache:
        return dist._cache[key]
    if gamma_mode == PER_ROW_K:
        out = per_row_gamma(dist, k)
    else:
        if gamma is None:
            g = float(np.mean(per_row_gamma(dist, min(k, dist.n - 2))))
        else:
            g = float(gamma)
        if not g > 0:
            raise ParameterError(f"gamma must be positive, got {g}")
        out = np.full(dist.n, g)
    out.setflags(write=False)
    dist._cache[key] = out
    return out


@dataclass(frozen=True)
class SparseRowSolution:
    weights: np.ndarray
    eta: float
    support: np.ndarray


@dataclass(frozen=True, eq=False)
class GraphSolution:
    s: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray

    def row(self, i):
        w = self.s[i]
        return SparseRowSolution(w, float(self.eta[i]), np.flatnonzero(w > 0))

    def support_sizes(self):
        return np.count_nonzero(self.s > 0, axis=1)


def _costs(dist, f, beta):
    if beta == 0:
        return dist.d
    return dist.d - beta * (f @ f.T)


def solve_rows(dist, f, beta, gamma, k, solver=EXACT):
    """Solve every row subproblem for fixed features ``f`` (a plain array).

    ``gamma`` is the resolved per-row vector.
    """
    n = dist.n
    if f is not None:
        if f.shape[0] != n:
            raise DataError(f"features have {f.shape[0]} rows, distances have {n}")
        if not np.all(np.isfinite(f)):
            raise DataError("features contain NaN or Inf")
    if beta < 0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    c = _costs(dist, f, beta)
    v = -c / (2.0 * gamma[:, None])
    if solver == EXACT:
        s, eta = _kernels.simplex_rows(v)
    elif solver == PAPER:
        eta = eta_paper_rows(dist, k, gamma)
        s = np.maximum(v + eta[:, None], 0.0)
        np.fill_diagonal(s, 0.0)
    else:
        raise ParameterError(f"unknown graph solver {solver!r}")
    return GraphSolution(s, eta, gamma)


def _cost_cotangent(g, s, gamma, solver):
    """Cotangent of the costs given the cotangent ``g`` of the graph.

    On each row's support ``a`` the projection is affine with Jacobian
    ``(I_a - 1 1^T / |a|)``; the threshold solver has Jacobian ``I_a``.
    Both are scaled by ``-1 / (2 gamma_i)``.
    """
    active = s > 0
    ga = np.where(active, g, 0.0)
    if solver == EXACT:
        cnt = active.sum(axis=1, keepdims=True)
        mean = ga.sum(axis=1, keepdims=True) / np.maximum(cnt, 1)
        ga = np.where(active, ga - mean, 0.0)
    return ga * (-1.0 / (2.0 * gamma[:, None]))


def s_step_solution(dist, f, params, mode=None):
    """Full row solutions (graph, thresholds, gammas) for plain features."""
    mode = mode or params.mode
    gamma = resolve_gamma(dist, params.gamma, params.k, mode.gamma_mode)
    fv = f.value if isinstance(f, Var) else f
    return solve_rows(dist, fv, params.beta, gamma, params.k, mode.solver)


def s_step(dist, f, params, mode=None):
    """Adaptive graph for features ``f``.

    If ``f`` is a taped :class:`Var`, ``params.grad_mode`` is ``"unrolled"``
    and ``beta > 0``, the result is recorded so gradients flow into ``f``;
    otherwise the graph is returned as a constant array.
    """
    mode = mode or params.mode
    gamma = resolve_gamma(dist, params.gamma, params.k, mode.gamma_mode)
    beta, k, solver = params.beta, params.k, mode.solver

    def fwd(fv):
        return solve_rows(dist, fv, beta, gamma, k, solver).s

    taped = isinstance(f, Var) and beta > 0 and params.grad_mode == "unrolled"
    if not taped:
        return fwd(f.value if isinstance(f, Var) else f)

    def vjp(g, s, fv):
        gc = _cost_cotangent(g, s, gamma, solver)
        return (-beta * ((gc + gc.T) @ fv),)

    return apply("rowwise_threshold", fwd, vjp, f)


def simplex_project(v):
    """Euclidean projection of a vector onto the probability simplex.

    Returns ``(s, tau)`` with ``s = max(v - tau, 0)``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    u = np.sort(v)[::-1]
    cs = np.cumsum(u)
    ranks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - (cs - 1.0) / ranks > 0)[0][-1]
    tau = (cs[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0), tau


def knn_graph(dist, k):
    """Row-normalised k-nearest-neighbour graph (zero diagonal)."""
    _check_k(k, dist.n)
    n = dist.n
    m = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    m[rows, dist.order[:, :k].ravel()] = 1.0
    return m / m.sum(axis=1, keepdims=True)


def write_affinity_csv(path, s):
    s = as_matrix(s, "affinity")
    np.savetxt(path, s, delimiter=",", fmt="%.17g")


def write_edge_list(path, s):
    """Write ``i,j,weight`` lines for the nonzero entries of ``s``."""
    s = as_matrix(s, "affinity")
    ii, jj = np.nonzero(s)
    with open(path, "w") as fh:
        for i, j in zip(ii, jj):
            fh.write(f"{i},{j},{float(s[i, j])!r}\n")


def read_edge_list(path, n):
    s = np.zeros((n, n))
    with open(path) as fh:
        for line in fh:
            if line.strip():
                i, j, w = line.split(",")
                s[int(i), int(j)] = float(w)
    return s
