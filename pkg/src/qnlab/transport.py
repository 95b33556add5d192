"""Optimal transport on phase space.

Exact solvers only: linear assignment for equal-weight ensembles of equal
size, a HiGHS linear program otherwise. Costs are the standard
``d_T(x, x')^p + |v - v'|^p``, its free-transport-sheared variant, and the
kinetic cost ``lam |dX|^2 + |dV|^2`` whose weight depends on the resulting
value through a scalar fixed point.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .dynamics import Trajectories, free_flow
from .errors import CapacityError
from .phase_space import ParticleEnsemble, minimal_image

ASSIGNMENT_CAP = 2000
LP_CAP = 500
Q_CEILING = 1.0 / math.e
MARGINAL_TOL = 1e-10


@dataclass(frozen=True)
class CostSpec:
    kind: str
    p: int = 2
    t: float = 0.0
    epsilon: float = 1.0
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in ("standard", "free_adapted", "kinetic"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def standard(cls, p=2):
        return cls("standard", p=p)

    @classmethod
    def free_adapted(cls, t, p=2):
        return cls("free_adapted", p=p, t=t)

    @classmethod
    def kinetic(cls, epsilon, lam=None):
        return cls("kinetic", p=2, epsilon=epsilon, lam=lam)


@dataclass(frozen=True)
class Coupling:
    """Sparse transport plan ``(i, j, mass)`` between two ensembles."""

    left: ParticleEnsemble
    right: ParticleEnsemble
    i: np.ndarray
    j: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        if np.any(self.mass < 0):
            raise ValueError("coupling masses must be nonnegative")
        rows = np.bincount(self.i, weights=self.mass, minlength=self.left.n)
        cols = np.bincount(self.j, weights=self.mass, minlength=self.right.n)
        err = max(np.max(np.abs(rows - self.left.w)), np.max(np.abs(cols - self.right.w)))
        if err > MARGINAL_TOL:
            raise ValueError(f"coupling marginals off by {err:.3e}")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "mass"])
        for a, b, m in zip(self.i, self.j, self.mass):
            w.writerow([int(a), int(b), repr(float(m))])
        return buf.getvalue()

    @classmethod
    def identity(cls, e: ParticleEnsemble):
        idx = np.arange(e.n)
        return cls(e, e, idx, idx, e.w.copy())


@dataclass(frozen=True)
class QState:
    """Kinetic transport quantity and its position weight.

    ``q`` and ``lam`` are ``None`` when no solution exists below the ceiling.
    """

    q: float | None
    lam: float | None
    valid: bool
    residual: float = 0.0


def _norm(a, p):
    if a.ndim == 1:
        return np.abs(a) ** p
    s = np.sqrt(np.sum(a * a, axis=-1))
    return s**p


def cost_matrix(a: ParticleEnsemble, b: ParticleEnsemble, cost: CostSpec):
    if a.dim != b.dim:
        raise ValueError("ensembles have different dimensions")
    dv = a.v[:, None, :] - b.v[None, :, :]
    if cost.kind == "standard":
        dx = minimal_image(a.x[:, None, :] - b.x[None, :, :])
        return _norm(dx, cost.p) + _norm(dv, cost.p)
    if cost.kind == "free_adapted":
        dx = minimal_image(a.x[:, None, :] - b.x[None, :, :] - cost.t * dv)
        return _norm(dx, cost.p) + _norm(dv, cost.p)
    dx = minimal_image(a.x[:, None, :] - b.x[None, :, :])
    lam = cost.lam if cost.lam is not None else cost.epsilon**-2
    return lam * _norm(dx, 2) + _norm(dv, 2)


def _equal_weights(e):
    return np.all(e.w == e.w[0]) or np.max(np.abs(e.w - 1.0 / e.n)) < 1e-15


def _solve_plan(a, b, c):
    if a.n == b.n and _equal_weights(a) and _equal_weights(b):
        if a.n > ASSIGNMENT_CAP:
            raise CapacityError(f"{a.n} points exceed the assignment cap {ASSIGNMENT_CAP}; subsample the ensembles")
        rows, cols = optimize.linear_sum_assignment(c)
        return Coupling(a, b, rows, cols, a.w[rows].copy())
    if max(a.n, b.n) > LP_CAP:
        raise CapacityError(f"{max(a.n, b.n)} points exceed the LP cap {LP_CAP}; subsample the ensembles")
    na, nb = a.n, b.n
    row_op = sparse.kron(sparse.eye(na), np.ones((1, nb)))
    col_op = sparse.kron(np.ones((1, na)), sparse.eye(nb))
    a_eq = sparse.vstack([row_op, col_op]).tocsr()
    b_eq = np.concatenate([a.w, b.w])
    res = optimize.linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.maximum(res.x.reshape(na, nb), 0.0)
    plan[plan < 1e-15] = 0.0
    ii, jj = np.nonzero(plan)
    mass = plan[ii, jj]
    # restore exact marginals after clipping round-off
    mass *= a.w[ii] / np.bincount(ii, weights=mass, minlength=na)[ii]
    return Coupling(a, b, ii, jj, mass)


def exact_discrete_ot(a: ParticleEnsemble, b: ParticleEnsemble, cost: CostSpec, max_iter=50):
    """Optimal coupling and its total cost ``sum c(z_i, z_j) pi_ij``.

    For the kinetic cost without a fixed ``lam`` the weight is iterated to
    self-consistency: solve with ``lam``, recompute ``lam`` from the kinetic
    quantity of the optimal plan, repeat until the plan stops changing.
    """
    if cost.kind == "kinetic" and cost.lam is None:
        lam = cost.epsilon**-2
        previous = None
        for _ in range(max_iter):
            plan, total = exact_discrete_ot(a, b, CostSpec.kinetic(cost.epsilon, lam))
            key = (tuple(plan.i), tuple(plan.j))
            state = kinetic_q_coupling(plan, cost.epsilon)
            if not state.valid:
                return plan, math.nan
            if key == previous:
                return plan, state.q
            previous, lam = key, state.lam
        return plan, state.q
    c = cost_matrix(a, b, cost)
    plan = _solve_plan(a, b, c)
    total = math.fsum(c[plan.i, plan.j] * plan.mass)
    return plan, total


def wasserstein(a, b, p=2):
    _, total = exact_discrete_ot(a, b, CostSpec.standard(p))
    return total ** (1.0 / p)


def adapted_distance(a: ParticleEnsemble, b: ParticleEnsemble, t, p=2):
    """Wasserstein distance after pulling both ensembles back by free transport."""
    return wasserstein(free_flow(a, -t), free_flow(b, -t), p)


# --- one-dimensional distances -------------------------------------------------


def _segment_abs_integral(g0, g1, c, h):
    a0, a1 = g0 - c, g1 - c
    same = a0 * a1 >= 0
    out = np.empty_like(a0)
    out[same] = 0.5 * h[same] * np.abs(a0[same] + a1[same])
    cross = ~same
    out[cross] = 0.5 * h[cross] * (a0[cross] ** 2 + a1[cross] ** 2) / np.abs(a1[cross] - a0[cross])
    return out.sum()


def _measure_below(g0, g1, c, h):
    lo, hi = np.minimum(g0, g1), np.maximum(g0, g1)
    flat = hi == lo
    frac = np.where(flat, (lo < c).astype(float), np.clip((c - lo) / np.where(flat, 1.0, hi - lo), 0.0, 1.0))
    return np.sum(frac * h)


def _w1_grid(mu, nu, space):
    n = mu.shape[0]
    h = np.full(n, 1.0 / n)
    edges = np.concatenate([[0.0], np.cumsum((mu - nu) * h)])
    g0, g1 = edges[:-1], edges[1:]
    if space == "line":
        return float(_segment_abs_integral(g0, g1, 0.0, h))
    lo, hi = float(edges.min()), float(edges.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _measure_below(g0, g1, mid, h) < 0.5:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    return float(_segment_abs_integral(g0, g1, 0.5 * (lo + hi), h))


def _w1_atoms(mu: ParticleEnsemble, nu: ParticleEnsemble, space):
    pos = np.concatenate([mu.x[:, 0], nu.x[:, 0]])
    mass = np.concatenate([mu.w, -nu.w])
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], mass[order]
    g = np.cumsum(mass)
    if space == "line":
        return float(np.sum(np.abs(g[:-1]) * np.diff(pos)))
    # G is 0 on [0, p_1) and g_k on [p_k, p_{k+1}), with p_{N+1} = 1
    values = np.concatenate([[0.0], g])
    lengths = np.diff(np.concatenate([[0.0], pos, [1.0]]))
    idx = np.argsort(values, kind="stable")
    cum = np.cumsum(lengths[idx])
    median = values[idx][np.searchsorted(cum, 0.5)]
    return float(np.sum(np.abs(values - median) * lengths))


def w1_1d(mu, nu, space="torus"):
    """One-dimensional W1 between probability measures.

    Inputs are either density arrays on the uniform cell grid of [0, 1)
    (cell averages) or 1D ``ParticleEnsemble``s. On the line the result is
    ``int |F_mu - F_nu|``; on the torus the antiderivative of ``mu - nu`` is
    first recentred at its median.
    """
    if space not in ("line", "torus"):
        raise ValueError(f"space must be 'line' or 'torus', got {space!r}")
    if isinstance(mu, ParticleEnsemble) and isinstance(nu, ParticleEnsemble):
        if mu.dim != 1 or nu.dim != 1:
            raise ValueError("w1_1d needs one-dimensional ensembles")
        return _w1_atoms(mu, nu, space)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape or mu.ndim != 1:
        raise ValueError("densities must be 1D arrays on the same grid")
    m_mu, m_nu = mu.mean(), nu.mean()
    if abs(m_mu - 1.0) > 1e-9 or abs(m_nu - 1.0) > 1e-9:
        raise ValueError(f"both densities must have unit mass (got {m_mu!r}, {m_nu!r})")
    return _w1_grid(mu, nu, space)


def l1_distance(mu, nu):
    """``int |mu - nu| dx`` for cell-average densities on [0, 1)."""
    return float(np.mean(np.abs(np.asarray(mu, dtype=float) - np.asarray(nu, dtype=float))))


def oscillating_density(eta, k, n):
    """Cell averages of ``1 + eta sin(2 pi k x)`` on n uniform cells."""
    edges = np.arange(n + 1) / n
    cos_edges = np.cos(2.0 * np.pi * k * edges)
    return 1.0 + eta * (cos_edges[:-1] - cos_edges[1:]) * n / (2.0 * np.pi * k)


# --- costs along flows ---------------------------------------------------------


def coupling_displacements(pi0: Coupling, flow1: Trajectories, flow2: Trajectories, t):
    """Paired displacements ``(dX, dV, mass)`` at time t.

    ``dX`` uses the minimal image chosen at t = 0 and follows the lifts.
    """
    if pi0.i.size and (pi0.i.max() >= flow1.n or pi0.j.max() >= flow2.n):
        raise ValueError("coupling refers to particles missing from the trajectory tables")
    x1, v1 = flow1.at(t)
    x2, v2 = flow2.at(t)
    start = flow1.x[0, pi0.i] - flow2.x[0, pi0.j]
    shift = minimal_image(start) - start
    dx = x1[pi0.i] - x2[pi0.j] + shift
    dv = v1[pi0.i] - v2[pi0.j]
    return dx, dv, pi0.mass


def pushforward_cost(pi0: Coupling, flow1: Trajectories, flow2: Trajectories, t, cost: CostSpec):
    """Cost of the initial coupling transported by the two flows to time t.

    standard: ``(int d_T^p + |dV|^p)^(1/p)`` with positions at time t, a
    feasible upper bound for W_p. free_adapted: the shear is taken at the
    evaluation time t, ``(int |dX - t dV|^p + |dV|^p)^(1/p)``. kinetic: the
    self-consistent kinetic quantity Q.
    """
    dx, dv, m = coupling_displacements(pi0, flow1, flow2, t)
    if cost.kind == "standard":
        c = np.abs(minimal_image(dx)) ** cost.p + np.abs(dv) ** cost.p
    elif cost.kind == "free_adapted":
        c = np.abs(dx - t * dv) ** cost.p + np.abs(dv) ** cost.p
    else:
        state = kinetic_q(dx, dv, m, cost.epsilon)
        if not state.valid:
            raise ValueError("kinetic quantity is above the smallness ceiling")
        return state.q
    return math.fsum(c * m) ** (1.0 / cost.p)


def kinetic_q(dx, dv, weights, epsilon, q_ceiling=Q_CEILING) -> QState:
    """Solve ``Q = eps^-2 max(1, |log Q|) A + B`` on ``(0, q_ceiling)``.

    ``A = sum w |dX|^2`` and ``B = sum w |dV|^2``. Below the ceiling
    ``|log Q| > 1`` and the map ``Q - eps^-2 |log Q| A - B`` is strictly
    increasing, so the root is unique; it is found by geometric bisection.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w = np.asarray(weights, dtype=float)
    pos = math.fsum(w * np.asarray(dx, dtype=float) ** 2)
    vel = math.fsum(w * np.asarray(dv, dtype=float) ** 2)
    return solve_kinetic_q(pos, vel, epsilon, q_ceiling)


def kinetic_q_coupling(pi: Coupling, epsilon, q_ceiling=Q_CEILING) -> QState:
    dx = minimal_image(pi.left.x[pi.i] - pi.right.x[pi.j])
    dv = pi.left.v[pi.i] - pi.right.v[pi.j]
    m = pi.mass[:, None]
    return solve_kinetic_q(float(np.sum(m * dx * dx)), float(np.sum(m * dv * dv)), epsilon, q_ceiling)


def _lam(q, epsilon):
    return epsilon**-2 * max(1.0, abs(math.log(q)))


def solve_kinetic_q(pos_cost, vel_cost, epsilon, q_ceiling=Q_CEILING) -> QState:
    a, b = float(pos_cost), float(vel_cost)
    if a < 0 or b < 0:
        raise ValueError("transport costs must be nonnegative")
    if a == 0 and b == 0:
        return QState(0.0, _lam(q_ceiling, epsilon), True, 0.0)
    if a == 0:
        if b >= q_ceiling:
            return QState(None, None, False)
        return QState(b, _lam(b, epsilon), True, 0.0)

    def g(q):
        return q - _lam(q, epsilon) * a - b

    if g(q_ceiling) <= 0:
        return QState(None, None, False)
    hi = q_ceiling
    # lam >= eps^-2 makes eps^-2 A + B a lower bracket
    lo = epsilon**-2 * a + b
    if g(lo) >= 0:
        return QState(lo, _lam(lo, epsilon), True, abs(g(lo)))
    while hi / lo - 1.0 > 1e-13:
        mid = math.exp(0.5 * (math.log(lo) + math.log(hi)))
        if not lo < mid < hi:
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    q = hi if abs(g(hi)) <= abs(g(lo)) else lo
    return QState(q, _lam(q, epsilon), True, abs(g(q)))


# --- bound evaluators ------------------------------------------------------------


def dobrushin_constant(B, t):
    """``min{(1+t) exp(2/3 B ((1+t)^3 - 1)), exp((1 + 2B) t)}``."""
    t = np.asarray(t, dtype=float)
    kinetic = (1.0 + t) * np.exp((2.0 / 3.0) * B * ((1.0 + t) ** 3 - 1.0))
    classical = np.exp((1.0 + 2.0 * B) * t)
    out = np.minimum(kinetic, classical)
    return float(out) if out.ndim == 0 else out


def kinetic_loeper_bound(q0, epsilon, a_integral, C):
    """``exp(-((sqrt|log q0| - C/eps * int A)_+)^2)``."""
    if not 0.0 < q0 < 1.0:
        raise ValueError(f"q0 must lie in (0, 1), got {q0}")
    margin = math.sqrt(abs(math.log(q0))) - (C / epsilon) * a_integral
    return math.exp(-max(margin, 0.0) ** 2)


def stability_budget(times, density_sup, epsilon, T, kappa):
    """``M = (1/eps) int_0^T density_sup dt`` (trapezoid) and ``exp(-kappa M^2)``."""
    times = np.asarray(times, dtype=float)
    vals = np.asarray(density_sup, dtype=float)
    if times[0] > 1e-12 or times[-1] < T - 1e-12:
        raise ValueError(f"series covers [{times[0]}, {times[-1]}], not [0, {T}]")
    sel = times <= T + 1e-12
    ts, vs = times[sel], vals[sel]
    if ts[-1] < T:
        ts = np.append(ts, T)
        vs = np.append(vs, np.interp(T, times, vals))
    m = float(np.trapezoid(vs, ts)) / epsilon
    return m, math.exp(-kappa * m * m)


def distance_sweep_csv(rows):
    """Rows of ``(t, value, cost_kind, epsilon)`` as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value", "cost_kind", "epsilon"])
    for t, value, kind, eps in rows:
        w.writerow([repr(float(t)), repr(float(value)), kind, repr(float(eps))])
    return buf.getvalue()
