"""Feature propagation on fixed and adaptive neighbourhood graphs."""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import GraphError, NumericError, ParameterError
from .graphlearn import EXACT, GraphMode, resolve_gamma, s_step, solve_rows
from .numkit import add, matmul, scale

GRAD_MODES = ("unrolled", "frozen-graph")


@dataclass(frozen=True)
class HyperParams:
    """Propagation hyperparameters.

    ``gamma=None`` picks a data-scaled global gamma (see
    :func:`angpn.graphlearn.resolve_gamma`). ``alpha=0`` is accepted and
    disables propagation; everything else requires ``0 < alpha < 1``.
    """

    alpha: float = 0.5
    beta: float = 0.3
    gamma: float | None = None
    k: int = 10
    t_steps: int = 2
    mode: GraphMode = field(default_factory=GraphMode)
    grad_mode: str = "unrolled"

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ParameterError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.beta < 0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if self.gamma is not None and not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.t_steps < 1:
            raise ParameterError(f"t_steps must be >= 1, got {self.t_steps}")
        if self.grad_mode not in GRAD_MODES:
            raise ParameterError(f"grad_mode must be one of {GRAD_MODES}")

    @property
    def mu(self):
        if self.alpha == 0:
            raise ParameterError("mu is undefined for alpha = 0")
        return (1.0 - self.alpha) / self.alpha

    def with_(self, **kw):
        return replace(self, **kw)


def _check_stochastic(a, tol=1e-6):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"graph must be square, got {a.shape}")
    dev = np.abs(a.sum(axis=1) - 1.0).max()
    if dev > tol:
        raise GraphError(f"graph rows must sum to 1 (max deviation {dev:.3g})")
    return a


def _check_alpha(alpha):
    if not 0 <= alpha < 1:
        raise ParameterError(f"alpha must be in [0, 1), got {alpha}")


def nfp_iterate(a, h, alpha, steps):
    """Run ``F <- alpha A F + (1 - alpha) H`` ``steps`` times from ``F = H``."""
    a = _check_stochastic(a)
    _check_alpha(alpha)
    if steps < 0:
        raise ParameterError("steps must be >= 0")
    h = np.asarray(h, dtype=np.float64)
    f = h
    for _ in range(steps):
        f = alpha * (a @ f) + (1.0 - alpha) * h
    return f


def nfp_closed_form(a, h, alpha):
    """Equilibrium ``(1 - alpha) (I - alpha A)^{-1} H`` by an LU solve."""
    a = _check_stochastic(a)
    _check_alpha(alpha)
    h = np.asarray(h, dtype=np.float64)
    n = a.shape[0]
    try:
        f = np.linalg.solve(np.eye(n) - alpha * a, (1.0 - alpha) * h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"propagation system is singular: {exc}") from exc
    return f


def anfp_objective(s, f, dist, h, p, gamma=None):
    """Joint graph/feature energy.

    ``sum(D * S) + sum_i gamma_i ||S_i||^2 + beta tr(F^T (I - S) F)
    + mu ||F - H||^2``. ``gamma`` defaults to the vector resolved from ``p``.
    """
    if gamma is None:
        gamma = resolve_gamma(dist, p.gamma, p.k, p.mode.gamma_mode)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (dist.n,))
    graph = np.sum(dist.d * s) + np.sum(gamma * np.sum(s * s, axis=1))
    smooth = np.sum(f * f) - np.sum(s * (f @ f.T))
    fit = np.sum((f - h) ** 2)
    return float(graph + p.beta * smooth + p.mu * fit)


def anfp_propagate(dist, h, p):
    """Truncated alternation used inside a network layer.

    Starting from ``F = H``, repeat ``t_steps`` times: rebuild the graph
    from the current ``F``, then take one power step
    ``F = alpha S H + (1 - alpha) H``. Returns ``(F, S)``. ``h`` may be a
    taped ``Var``, in which case both outputs are taped as well.
    """
    f = h
    s = None
    for _ in range(p.t_steps):
        s = s_step(dist, f, p)
        f = add(scale(matmul(s, h), p.alpha), scale(h, 1.0 - p.alpha))
    return f, s


def _f_step_exact(s, h, beta, mu):
    # stationarity of beta tr(F^T (I - S) F) + mu ||F - H||^2
    n = s.shape[0]
    sym = 0.5 * (s + s.T)
    m = beta * (np.eye(n) - sym) + mu * np.eye(n)
    try:
        c = scipy.linalg.cho_factor(m)
    except np.linalg.LinAlgError as exc:
        raise NumericError("feature subproblem is not convex for this graph") from exc
    return scipy.linalg.cho_solve(c, mu * h)


def anfp_exact(dist, h, p, sweeps, f_step="objective"):
    """Alternate exact graph and feature steps on the joint energy.

    Returns ``(F, S, trace)`` where ``trace`` holds the energy after every
    half-step. ``f_step="objective"`` minimises the energy in ``F`` exactly;
    ``f_step="closed-form"`` uses ``(1 - alpha)(I - alpha S)^{-1} H``, which
    is the same minimiser only for ``beta = 1`` and symmetric ``S``.
    """
    if sweeps < 1:
        raise ParameterError("sweeps must be >= 1")
    h = np.asarray(h, dtype=np.float64)
    gamma = resolve_gamma(dist, p.gamma, p.k, p.mode.gamma_mode)
    f = h
    s = None
    trace = []
    for _ in range(sweeps):
        s = solve_rows(dist, f, p.beta, gamma, p.k, EXACT).s
        trace.append(anfp_objective(s, f, dist, h, p, gamma))
        if f_step == "objective":
            f = _f_step_exact(s, h, p.beta, p.mu)
        elif f_step == "closed-form":
            f = nfp_closed_form(s, h, p.alpha)
        else:
            raise ParameterError(f"unknown f_step {f_step!r}")
        trace.append(anfp_objective(s, f, dist, h, p, gamma))
    return f, s, trace
