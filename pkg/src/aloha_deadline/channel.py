"""Physical-layer success probabilities under Rayleigh fading and an SINR threshold.

A transmission from node i is decoded when its SINR exceeds the capture ratio
gamma. With exponentially distributed fading the success probabilities have a
closed form, so no fading values are ever drawn here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_mw(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0)


def convert_units(value: float, kind: str) -> float:
    """Convert a decibel quantity to linear scale.

    ``kind`` is ``"dBm"`` (power, result in mW) or ``"dB"`` (ratio).
    """
    if kind == "dBm":
        return dbm_to_mw(value)
    if kind == "dB":
        return db_to_linear(value)
    raise ValueError(f"unknown unit kind {kind!r}; expected 'dB' or 'dBm'")


def received_power_factor(ptx: float, r: float, alpha: float) -> float:
    if ptx <= 0 or r <= 0:
        raise ValueError(f"ptx and r must be positive (got ptx={ptx}, r={r})")
    return ptx * r ** (-alpha)


@dataclass(frozen=True)
class ChannelParams:
    """Linear-scale link parameters of one node. ``s`` is derived on construction."""

    gamma: float
    eta: float
    ptx: float
    v: float
    r: float
    alpha: float
    s: float = field(init=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not self.v > 0:
            raise ValueError(f"v must be > 0, got {self.v}")
        if not self.alpha >= 2:
            raise ValueError(f"alpha must be >= 2, got {self.alpha}")
        object.__setattr__(self, "s", received_power_factor(self.ptx, self.r, self.alpha))

    @classmethod
    def from_db(cls, gamma_db: float, eta_dbm: float, ptx: float, v: float, r: float,
                alpha: float) -> "ChannelParams":
        return cls(gamma=db_to_linear(gamma_db), eta=dbm_to_mw(eta_dbm), ptx=ptx, v=v, r=r,
                   alpha=alpha)


# Table of network parameters used throughout the evaluation scenarios.
TABLE2 = ChannelParams.from_db(gamma_db=0.0, eta_dbm=-115.4, ptx=0.01, v=1.0, r=100.0, alpha=4.5)

# Round success probabilities used for figure reproduction (p0 = 0.75, halved per interferer).
ROUND_TABLE = (0.75, 0.375, 0.1875, 0.09375, 0.046875)


def success_prob_solo(params: ChannelParams) -> float:
    return math.exp(-params.gamma * params.eta / (params.v * params.s))


def success_prob_mpr(target: ChannelParams, interferers: Sequence[ChannelParams] = ()) -> float:
    """Success probability of ``target`` while every node in ``interferers`` also transmits."""
    p = success_prob_solo(target)
    own = target.v * target.s
    for k in interferers:
        p /= 1.0 + target.gamma * k.v * k.s / own
    return p


@dataclass(frozen=True)
class SuccessTable:
    """``p[k]``: success probability of the tagged node when k other nodes transmit."""

    p: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if not p:
            raise ValueError("success table must have at least one entry")
        for x in p:
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"success probability {x} outside [0, 1]")
        for a, b in zip(p, p[1:]):
            if b > a:
                raise ValueError(f"success table must be nonincreasing, got {p}")
        object.__setattr__(self, "p", p)

    def __len__(self):
        return len(self.p)

    def __getitem__(self, k):
        return self.p[k]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "SuccessTable":
        return cls(tuple(values))


def symmetric_success_table(params: ChannelParams, n_nodes: int) -> SuccessTable:
    """Success table for ``n_nodes`` identical nodes: p[k] = p0 / (1 + gamma)^k."""
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    return SuccessTable(tuple(success_prob_mpr(params, [params] * k) for k in range(n_nodes)))
