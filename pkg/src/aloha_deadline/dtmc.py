"""Markov chains over the tagged node's head-of-line packet.

The state is the age ``t`` (slots in the system) of the head-of-line packet,
plus, when retransmissions are limited, the number ``r`` of failed attempts it
has made. ``Empty`` is the idle queue. Matrices are column stochastic: entry
``[i, j]`` is the probability of moving from state j to state i.

When the head departs at age t, the next head is the earliest packet that
arrived during its lifetime. Arrivals are Bernoulli(lam) at slot ends, so the
new head has age j with probability lam (1-lam)^(t-j), and the queue is empty
with probability (1-lam)^t.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .channel import SuccessTable
from .service import Scenario, service_prob

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, order=True)
class ChainState:
    """``t == 0`` is the empty queue. ``r is None`` in the full-retransmission chain."""

    t: int = 0
    r: Optional[int] = None

    @property
    def empty(self) -> bool:
        return self.t == 0

    @property
    def label(self) -> str:
        if self.t == 0:
            return "0"
        if self.r is None:
            return str(self.t)
        return f"{self.t},{self.r}"

    def __str__(self):
        return self.label


EMPTY = ChainState(0)


@dataclass
class MarkovModel:
    states: list
    matrix: np.ndarray
    success_set: list
    fd_set: list
    f_set: list
    mu: float
    q: Optional[float]
    lam: float
    deadline: int
    retx: int
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.states)}

    def mask(self, subset) -> np.ndarray:
        m = np.zeros(len(self.states), dtype=bool)
        for s in subset:
            m[self.index[s]] = True
        return m

    @property
    def labels(self) -> list:
        return [s.label for s in self.states]


@dataclass
class SteadyState:
    pi: np.ndarray
    method: str = "direct"
    unreached: list = field(default_factory=list)
    residual: float = 0.0

    @property
    def irreducible(self) -> bool:
        return not self.unreached


def _check_prob(name, x):
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def _handover(matrix, index, col, t, lam, mass, make_state):
    """Spread ``mass`` from column ``col`` over the next head-of-line state."""
    matrix[index[EMPTY], col] += mass * (1.0 - lam) ** t
    for j in range(1, t + 1):
        matrix[index[make_state(j)], col] += mass * lam * (1.0 - lam) ** (t - j)


def build_full_retx_chain(lam: float, mu: float, deadline: int, q: Optional[float] = None) -> MarkovModel:
    """Chain for n = D-1: a packet is retried every slot it is sent until success or expiry.

    The column of state D hands over with total mass 1. The packet leaves with
    certainty from its last slot, whether delivered or expired.
    """
    if deadline < 1:
        raise ValueError(f"D must be >= 1, got {deadline}")
    _check_prob("lambda", lam)
    _check_prob("mu", mu)
    if q is not None:
        _check_prob("q", q)
    states = [EMPTY] + [ChainState(t) for t in range(1, deadline + 1)]
    index = {s: i for i, s in enumerate(states)}
    m = np.zeros((len(states), len(states)))
    m[0, 0] = 1.0 - lam
    m[1, 0] = lam
    for t in range(1, deadline):
        col = index[ChainState(t)]
        m[index[ChainState(t + 1)], col] += 1.0 - mu
        _handover(m, index, col, t, lam, mu, ChainState)
    _handover(m, index, index[ChainState(deadline)], deadline, lam, 1.0, ChainState)
    return MarkovModel(states=states, matrix=m, success_set=states[1:],
                       fd_set=[ChainState(deadline)], f_set=[], mu=mu, q=q, lam=lam,
                       deadline=deadline, retx=deadline - 1)


def limited_state_count(deadline: int, retx: int) -> int:
    return deadline * (retx + 1) + 1 - retx * (retx + 1) // 2


def build_limited_retx_chain(lam: float, mu: float, q: float, retx: int, deadline: int) -> MarkovModel:
    """Chain over (age, failed attempts) for a budget of ``retx`` retransmissions.

    From (t, r) with t < D: success ``mu`` hands over, an idle slot ``1-q`` ages
    the packet, and a failed attempt ``q-mu`` either ages it with r+1 or, when
    r == n already, drops it and hands over. From (D, r) the packet always leaves.
    """
    if deadline < 1:
        raise ValueError(f"D must be >= 1, got {deadline}")
    if not 0 <= retx <= deadline - 1:
        raise ValueError(f"n must satisfy 0 <= n <= D-1, got n={retx}, D={deadline}")
    _check_prob("lambda", lam)
    _check_prob("mu", mu)
    _check_prob("q", q)
    if mu > q:
        raise ValueError(f"mu = {mu} exceeds q = {q}; a node cannot succeed without transmitting")
    states = [EMPTY] + [ChainState(t, r) for t in range(1, deadline + 1)
                        for r in range(min(retx, t - 1) + 1)]
    index = {s: i for i, s in enumerate(states)}
    fresh = lambda j: ChainState(j, 0)  # noqa: E731
    m = np.zeros((len(states), len(states)))
    m[0, 0] = 1.0 - lam
    m[index[fresh(1)], 0] = lam
    fail = q - mu
    for s in states[1:]:
        col = index[s]
        t, r = s.t, s.r
        if t == deadline:
            _handover(m, index, col, t, lam, 1.0, fresh)
            continue
        _handover(m, index, col, t, lam, mu, fresh)
        m[index[ChainState(t + 1, r)], col] += 1.0 - q
        if r < retx:
            m[index[ChainState(t + 1, r + 1)], col] += fail
        else:
            _handover(m, index, col, t, lam, fail, fresh)
    nonempty = states[1:]
    return MarkovModel(states=states, matrix=m, success_set=nonempty,
                       fd_set=[s for s in nonempty if s.t == deadline],
                       f_set=[s for s in nonempty if s.t < deadline and s.r == retx],
                       mu=mu, q=q, lam=lam, deadline=deadline, retx=retx)


def check_column_stochastic(matrix: np.ndarray, tol: float = STOCHASTIC_TOL):
    if np.any(matrix < -tol) or np.any(matrix > 1.0 + tol):
        raise ValueError("transition matrix has entries outside [0, 1]")
    dev = np.max(np.abs(matrix.sum(axis=0) - 1.0))
    if dev > tol:
        raise ValueError(f"transition matrix columns deviate from 1 by {dev:.3e}")


def _closed_class(matrix: np.ndarray, start: int = 0) -> np.ndarray:
    """Boolean mask of the closed communicating class reached from ``start``."""
    # graph edges go from-state -> to-state, i.e. the transpose of the column-stochastic matrix
    adj = (matrix.T > 0).astype(np.int8)
    _, comp = connected_components(adj, directed=True, connection="strong")
    n_comp = comp.max() + 1
    closed = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    leaving = comp[src] != comp[dst]
    closed[np.unique(comp[src[leaving]])] = False
    # walk from start until a closed class is hit
    seen = np.zeros(len(matrix), dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        i = stack.pop()
        if closed[comp[i]]:
            return comp == comp[i]
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    raise RuntimeError("no closed class reachable; matrix is not stochastic")


def _direct_solve(p: np.ndarray) -> np.ndarray:
    k = len(p)
    a = p - np.eye(k)
    a[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    return np.linalg.solve(a, rhs)


def _power_iteration(p: np.ndarray, tol: float = 1e-13, max_iter: int = 10**6) -> np.ndarray:
    k = len(p)
    lazy = 0.5 * (p + np.eye(k))  # aperiodic, same stationary vector
    x = np.full(k, 1.0 / k)
    for _ in range(max_iter):
        y = lazy @ x
        y /= y.sum()
        if np.max(np.abs(y - x)) < tol:
            return y
        x = y
    log.warning("power iteration hit %d iterations without reaching %.1e", max_iter, tol)
    return x


def steady_state(model, residual_tol: float = 1e-10) -> SteadyState:
    """Stationary distribution of a column-stochastic chain.

    Solves (M - I) pi = 0 with sum(pi) = 1 on the closed class reached from the
    first state; states outside it get probability 0 and are listed in ``unreached``.
    Falls back to power iteration if the linear solve is singular or inaccurate.
    Accepts a ``MarkovModel`` or a bare matrix.
    """
    matrix = model.matrix if isinstance(model, MarkovModel) else np.asarray(model, dtype=float)
    keep = _closed_class(matrix)
    sub = matrix[np.ix_(keep, keep)]
    method = "direct"
    try:
        pi_sub = _direct_solve(sub)
        if np.any(pi_sub < -residual_tol) or np.max(np.abs(sub @ pi_sub - pi_sub)) > residual_tol:
            raise np.linalg.LinAlgError("direct solve inaccurate")
    except np.linalg.LinAlgError:
        method = "power"
        pi_sub = _power_iteration(sub)
    pi_sub = np.clip(pi_sub, 0.0, None)
    pi_sub /= pi_sub.sum()
    pi = np.zeros(len(matrix))
    pi[keep] = pi_sub
    if isinstance(model, MarkovModel):
        unreached = [s for s, k in zip(model.states, keep) if not k]
    else:
        unreached = [int(i) for i in np.nonzero(~keep)[0]]
    residual = float(np.max(np.abs(matrix @ pi - pi)))
    return SteadyState(pi=pi, method=method, unreached=unreached, residual=residual)


def throughput(model: MarkovModel, pi: SteadyState) -> float:
    return model.mu * float(pi.pi[model.mask(model.success_set)].sum())


def drop_rate(model: MarkovModel, pi: SteadyState) -> float:
    p = pi.pi
    dr = (1.0 - model.mu) * float(p[model.mask(model.fd_set)].sum())
    if model.f_set:
        dr += (model.q - model.mu) * float(p[model.mask(model.f_set)].sum())
    return dr


def build_chain(scenario: Scenario, mu: float) -> MarkovModel:
    """Full-retransmission chain when n = D-1, the limited chain otherwise."""
    if scenario.full_retx:
        return build_full_retx_chain(scenario.lam, mu, scenario.deadline, q=scenario.q)
    return build_limited_retx_chain(scenario.lam, mu, scenario.q, scenario.retx, scenario.deadline)


@dataclass(frozen=True)
class Analysis:
    mu: float
    throughput: float
    drop_rate: float
    irreducible: bool


def analyze(scenario: Scenario, table: SuccessTable) -> Analysis:
    mu = service_prob(scenario, table).mu
    model = build_chain(scenario, mu)
    ss = steady_state(model)
    return Analysis(mu=mu, throughput=throughput(model, ss), drop_rate=drop_rate(model, ss),
                    irreducible=ss.irreducible)


OBJECTIVES = ("max-throughput", "min-drop-rate")


@dataclass(frozen=True)
class Optimum:
    q_grid: float
    value_grid: float
    q: float
    value: float
    objective: str


def _golden_max(f, lo, hi, tol):
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def optimize_q(scenario: Scenario, table: SuccessTable, objective: str = "max-throughput",
               grid: float = 0.1, tol: float = 1e-4) -> Optimum:
    """Best access probability for ``objective``, found numerically.

    Scans q over {grid, 2 grid, ..., 1 - grid}, keeping the first best point, then
    refines by golden-section search over the neighbouring cells.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if not 0.0 < grid <= 0.5:
        raise ValueError(f"grid step must lie in (0, 0.5], got {grid}")
    sign = 1.0 if objective == "max-throughput" else -1.0

    def score(q):
        a = analyze(scenario.replace(q=float(q)), table)
        return sign * (a.throughput if sign > 0 else a.drop_rate)

    n_points = int(round(1.0 / grid)) - 1
    qs = [round(grid * i, 12) for i in range(1, n_points + 1)]
    if not qs:
        qs = [grid]
    scores = [score(q) for q in qs]
    best = int(np.argmax(scores))  # first maximum, i.e. smallest q on ties
    q_grid = qs[best]
    lo = max(q_grid - grid, 1e-9)
    hi = min(q_grid + grid, 1.0)
    q_ref, s_ref = _golden_max(score, lo, hi, tol)
    if s_ref < scores[best]:
        q_ref, s_ref = q_grid, scores[best]
    return Optimum(q_grid=q_grid, value_grid=sign * scores[best], q=q_ref, value=sign * s_ref,
                   objective=objective)
