"""Slow, independent reference implementations used to check the fast paths.

Nothing here calls into the solvers it checks. Dense matrix products use
``numpy`` directly where a test needs bitwise agreement, and everything
else (sorting, thresholds, eliminations, sums) is written out in loops.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, OracleError

REL_FLOOR = 1e-8


def rel_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), REL_FLOOR)


# ---------------------------------------------------------------------------
# gradients


def fd_gradient(loss_fn, params, step=1e-5):
    """Central differences ``(L(p + s) - L(p - s)) / 2s`` for every entry.

    ``loss_fn`` takes a list of arrays and returns a float.
    """
    if not step > 0:
        raise ContractError("step must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            hi = loss_fn(params)
            p[idx] = orig - step
            lo = loss_fn(params)
            p[idx] = orig
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise OracleError(f"non-finite loss while perturbing entry {idx}")
            g[idx] = (hi - lo) / (2.0 * step)
        out.append(g)
    return out


@dataclass
class ParamReport:
    max_rel_error: float
    index: tuple
    analytic: float
    numeric: float


@dataclass
class GradReport:
    params: list = field(default_factory=list)

    @property
    def max_rel_error(self):
        return max((p.max_rel_error for p in self.params), default=0.0)

    def passed(self, tol=1e-4):
        return self.max_rel_error <= tol

    def format(self):
        lines = []
        for i, p in enumerate(self.params):
            lines.append(f"W{i}: max rel err {p.max_rel_error:.3e} at {p.index} "
                         f"(analytic {p.analytic:.10g}, numeric {p.numeric:.10g})")
        lines.append(f"overall max rel err {self.max_rel_error:.3e}")
        return "\n".join(lines)


def grad_report(analytic, numeric):
    rep = GradReport()
    for a, n in zip(analytic, numeric):
        worst = ParamReport(0.0, (), 0.0, 0.0)
        for idx in np.ndindex(a.shape):
            e = rel_error(float(a[idx]), float(n[idx]))
            if e >= worst.max_rel_error:
                worst = ParamReport(e, idx, float(a[idx]), float(n[idx]))
        rep.params.append(worst)
    return rep


# ---------------------------------------------------------------------------
# elementary arithmetic


def matmul_loops(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            acc = 0.0
            for t in range(m):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def pairwise_loops(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d[i, j] = math.sqrt(sum((x[i, t] - x[j, t]) ** 2 for t in range(x.shape[1])))
    return d


def objective_loops(s, f, d, h, alpha, beta, gamma):
    """The joint graph/feature energy summed entry by entry."""
    n, c = f.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,))
    mu = (1.0 - alpha) / alpha
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += d[i, j] * s[i, j] + gamma[i] * s[i, j] ** 2
            ident = 1.0 if i == j else 0.0
            inner = sum(f[i, t] * f[j, t] for t in range(c))
            total += beta * (ident - s[i, j]) * inner
        for t in range(c):
            total += mu * (f[i, t] - h[i, t]) ** 2
    return total


# ---------------------------------------------------------------------------
# graph step


def simplex_qp_oracle(costs, gamma):
    """Minimise ``c.s + gamma |s|^2`` over the simplex by active-set enumeration.

    For each candidate support ``A`` the stationarity conditions give
    ``s_A = (lam - c_A) / (2 gamma)`` with ``lam = (2 gamma + sum c_A) / |A|``;
    the support is accepted when ``s_A > 0`` and ``c_j >= lam`` off ``A``.
    """
    c = [float(x) for x in costs]
    m = len(c)
    if not 1 <= m <= 8:
        raise ContractError(f"KKT enumeration supports 1..8 entries, got {m}")
    if not gamma > 0:
        raise ContractError("gamma must be positive")
    best = None
    for size in range(1, m + 1):
        for support in itertools.combinations(range(m), size):
            lam = (2.0 * gamma + sum(c[j] for j in support)) / size
            s = [0.0] * m
            ok = True
            for j in support:
                s[j] = (lam - c[j]) / (2.0 * gamma)
                if s[j] <= 0:
                    ok = False
            tol = 1e-12 * max(1.0, abs(lam))
            for j in range(m):
                if j not in support and c[j] < lam - tol:
                    ok = False
            if ok:
                val = sum(cj * sj + gamma * sj * sj for cj, sj in zip(c, s))
                if best is None or val < best[0]:
                    best = (val, s)
    if best is None:
        raise OracleError("no active set satisfied the KKT conditions")
    return np.array(best[1])


def qp_value(costs, gamma, s):
    return float(np.dot(costs, s) + gamma * np.dot(s, s))


def simplex_grid(m, step):
    """All points of the ``m``-simplex whose coordinates are multiples of ``step``."""
    units = int(round(1.0 / step))
    pts = []
    for combo in itertools.product(range(units + 1), repeat=m - 1):
        rest = units - sum(combo)
        if rest >= 0:
            pts.append([u * step for u in combo] + [rest * step])
    return np.array(pts)


def _row_threshold(vals):
    """Sort-and-threshold written out with Python sorting and a running sum."""
    desc = sorted(vals, reverse=True)
    acc = 0.0
    tau = 0.0
    for r, u in enumerate(desc):
        acc += u
        t = (acc - 1.0) / (r + 1.0)
        if u - t > 0:
            tau = t
        else:
            break
    return tau


def graph_step_loops(d, f, beta, gamma, k, solver):
    """One graph step, row by row, with the diagonal excluded."""
    n = d.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n,))
    cost = d - beta * (f @ f.T)
    s = np.zeros((n, n))
    for i in range(n):
        v = {j: -cost[i, j] / (2.0 * gamma[i]) for j in range(n) if j != i}
        if solver == "exact-simplex":
            shift = -_row_threshold(list(v.values()))
        else:
            nearest = sorted((d[i, j], j) for j in range(n) if j != i)
            acc = 0.0
            for dist, _ in nearest[:k]:
                acc += dist
            shift = 1.0 / k + acc / (2.0 * k * gamma[i])
        for j, vj in v.items():
            s[i, j] = max(vj + shift, 0.0)
    return s


def layer_steps_oracle(d, h, alpha, beta, gamma, k, t_steps, solver):
    """Re-execute the propagation layer literally: F = H; T times rebuild S
    from F and set F = alpha S H + (1 - alpha) H."""
    f = h
    s = None
    for _ in range(t_steps):
        s = graph_step_loops(d, f, beta, gamma, k, solver)
        f = alpha * (s @ h) + (1.0 - alpha) * h
    return f, s


# ---------------------------------------------------------------------------
# propagation


def dense_fixed_point_oracle(s, h, alpha):
    """Solve ``(I - alpha S) F = (1 - alpha) H`` by textbook elimination."""
    s = np.asarray(s, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = s.shape[0]
    a = [[(1.0 if i == j else 0.0) - alpha * s[i, j] for j in range(n)] for i in range(n)]
    b = [list((1.0 - alpha) * h[i]) for i in range(n)]
    cols = len(b[0])
    for p in range(n):
        piv = a[p][p]
        for r in range(p + 1, n):
            factor = a[r][p] / piv
            if factor == 0.0:
                continue
            for j in range(p, n):
                a[r][j] -= factor * a[p][j]
            for j in range(cols):
                b[r][j] -= factor * b[p][j]
    x = [[0.0] * cols for _ in range(n)]
    for i in range(n - 1, -1, -1):
        for j in range(cols):
            acc = b[i][j]
            for t in range(i + 1, n):
                acc -= a[i][t] * x[t][j]
            x[i][j] = acc / a[i][i]
    return np.array(x)


def label_propagation_oracle(a, train_idx, labels, n_classes, alpha=0.99):
    """Closed-form label spreading ``(I - alpha A)^{-1} Y``; returns predictions."""
    n = a.shape[0]
    y = np.zeros((n, n_classes))
    y[train_idx, np.asarray(labels)[train_idx]] = 1.0
    scores = np.linalg.solve(np.eye(n) - alpha * a, y)
    return np.argmax(scores, axis=1)


def adam_scalar(params, grads_seq, lr=0.005, b1=0.9, b2=0.999, eps=1e-8):
    """Adam on flat Python floats, one entry at a time."""
    theta = [float(x) for x in params]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, grads in enumerate(grads_seq, start=1):
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for i, g in enumerate(grads):
            g = float(g)
            m[i] = b1 * m[i] + (1.0 - b1) * g
            v[i] = b2 * v[i] + (1.0 - b2) * (g * g)
            theta[i] = theta[i] - lr * (m[i] / c1) / (math.sqrt(v[i] / c2) + eps)
    return theta


def model_gradcheck(state, dist, x, split, step=1e-5, corrupt=False):
    """Compare taped gradients of the training loss with central differences."""
    from .model import loss_and_gradients, network_forward, semi_ce_loss

    _, analytic = loss_and_gradients(state, dist, x, split)
    if corrupt:
        analytic = [g.copy() for g in analytic]
        analytic[0].flat[0] += 1.0

    def loss_fn(ws):
        return semi_ce_loss(network_forward(state, dist, x, weights=ws), split)

    numeric = fd_gradient(loss_fn, state.weights, step)
    return grad_report(analytic, numeric)
