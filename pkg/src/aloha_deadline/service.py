"""Head-of-line service probability of the tagged node."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .channel import SuccessTable

# math.comb is exact; past this size the log-space path keeps the weights finite
EXACT_BINOMIAL_MAX_N = 64


@dataclass(frozen=True)
class Scenario:
    """One operating point: N nodes, access probability q, Bernoulli arrivals lam,
    deadline D, n allowed retransmissions and receiver MPR capability c.

    ``buffer`` defaults to the deadline and ``backlogged`` to ``n_nodes``.
    """

    n_nodes: int
    q: float
    lam: float
    deadline: int
    retx: int
    mpr_cap: int = 1
    buffer: Optional[int] = None
    backlogged: Optional[int] = None
    attempts: int = field(init=False)

    def __post_init__(self):
        if self.buffer is None:
            object.__setattr__(self, "buffer", self.deadline)
        if self.backlogged is None:
            object.__setattr__(self, "backlogged", self.n_nodes)
        object.__setattr__(self, "attempts", self.retx + 1)
        self.validate()

    def validate(self):
        if self.n_nodes < 1:
            raise ValueError(f"N must be >= 1, got {self.n_nodes}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.deadline < 1:
            raise ValueError(f"D must be >= 1, got {self.deadline}")
        if not 0 <= self.retx <= self.deadline - 1:
            raise ValueError(f"n must satisfy 0 <= n <= D-1 = {self.deadline - 1}, got {self.retx}")
        if not 1 <= self.mpr_cap <= self.n_nodes:
            raise ValueError(f"c must satisfy 1 <= c <= N = {self.n_nodes}, got {self.mpr_cap}")
        if self.buffer < self.deadline:
            raise ValueError(f"L must be >= D = {self.deadline}, got {self.buffer}")
        if not 1 <= self.backlogged <= self.n_nodes:
            raise ValueError(f"b must satisfy 1 <= b <= N = {self.n_nodes}, got {self.backlogged}")

    @property
    def full_retx(self) -> bool:
        return self.retx == self.deadline - 1

    def replace(self, **changes) -> "Scenario":
        kw = dict(n_nodes=self.n_nodes, q=self.q, lam=self.lam, deadline=self.deadline,
                  retx=self.retx, mpr_cap=self.mpr_cap, buffer=self.buffer,
                  backlogged=self.backlogged)
        kw.update(changes)
        return Scenario(**kw)


@dataclass(frozen=True)
class ServiceModel:
    mu: float
    nu: Optional[float]
    table: SuccessTable

    @property
    def nu_defined(self) -> bool:
        return self.nu is not None


def _binomial_weight(b: int, k: int, q: float) -> float:
    """C(b-1, k-1) q^k (1-q)^(b-k)."""
    if b <= EXACT_BINOMIAL_MAX_N:
        return math.comb(b - 1, k - 1) * q ** k * (1.0 - q) ** (b - k)
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0 if k == b else 0.0
    log_w = (math.lgamma(b) - math.lgamma(k) - math.lgamma(b - k + 1)
             + k * math.log(q) + (b - k) * math.log1p(-q))
    return math.exp(log_w)


def service_prob(scenario: Scenario, table: SuccessTable) -> ServiceModel:
    """Probability that the tagged head-of-line packet is delivered in a slot.

    The other b-1 nodes always contend. When k nodes transmit in total, the
    tagged node is decoded with probability ``table[k-1]`` if k <= c and never
    otherwise.
    """
    b = scenario.backlogged
    c = scenario.mpr_cap
    q = scenario.q
    if len(table) < min(c, b):
        raise ValueError(f"success table has {len(table)} entries, need at least {min(c, b)}")
    if q == 0.0:
        return ServiceModel(mu=0.0, nu=None, table=table)
    mu = 0.0
    for k in range(1, min(c, b) + 1):
        mu += _binomial_weight(b, k, q) * table[k - 1]
    mu = min(mu, q)
    return ServiceModel(mu=mu, nu=mu / q, table=table)
