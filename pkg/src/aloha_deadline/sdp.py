"""Successful delivery probability of a single head-of-line packet.

No buffering: the next packet is generated only once the current one has been
delivered or dropped. Each slot the packet is sent with probability ``q`` and a
sent packet gets through with probability ``nu`` (= mu / q).
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SdpQuery:
    q: float
    nu: float
    retx: int
    deadline: int

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")
        if self.deadline < 0:
            raise ValueError(f"D must be >= 0, got {self.deadline}")
        if not 0 <= self.retx <= max(self.deadline - 1, 0):
            raise ValueError(f"n must satisfy 0 <= n <= max(D-1, 0), got n={self.retx}, D={self.deadline}")


def sdp_no_retx(query: SdpQuery) -> float:
    if query.retx != 0:
        raise ValueError("sdp_no_retx requires retx == 0")
    if query.deadline == 0:
        return 0.0
    return query.nu * (1.0 - (1.0 - query.q) ** query.deadline)


def sdp_table(q: float, nu: float, max_retx: int, max_deadline: int) -> list:
    """``table[n][D]`` for 0 <= n <= max_retx, 0 <= D <= max_deadline.

    Entries with n > D-1 are filled too; there the budget can never be exhausted,
    so they equal ``table[D-1][D]``.
    """
    SdpQuery(q, nu, 0, 0)  # validates q and nu
    idle = 1.0 - q
    first = [q * idle ** (k - 1) for k in range(1, max_deadline + 1)]
    # a packet with no attempts left is never delivered
    prev = [0.0] * (max_deadline + 1)
    rows = []
    for _ in range(max_retx + 1):
        row = [0.0]
        for d in range(1, max_deadline + 1):
            row.append(sum(first[k - 1] * (nu + (1.0 - nu) * prev[d - k]) for k in range(1, d + 1)))
        rows.append(row)
        prev = row
    return rows


def sdp(query: SdpQuery) -> float:
    """p_s(n, D) by the first-attempt recursion; O(n * D^2)."""
    return sdp_table(query.q, query.nu, query.retx, query.deadline)[query.retx][query.deadline]
