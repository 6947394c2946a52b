"""Slot-level Monte-Carlo simulation of the tagged buffered node.

The other b-1 nodes are always backlogged, so only their transmit decisions
matter. The channel outcome is a Bernoulli draw with the success-table
probability, which has the same law as the SINR-threshold model.

Slot order: the head of the queue may transmit, then the channel resolves, the
head departs on success or on an exhausted retransmission budget, packets older
than the deadline are removed, and finally at most one new packet arrives.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import SuccessTable
from .service import Scenario

SEED_STRIDE = 0x9E3779B97F4A7C15
SEED_MASK = (1 << 64) - 1
Z99 = 2.5758293035489004  # two-sided 99% normal quantile
_BLOCK = 1 << 15
N_BATCHES = 100


def split_seed(base: int, i: int) -> int:
    return (base ^ (i * SEED_STRIDE)) & SEED_MASK


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    table: SuccessTable
    slots: int = 100_000
    seed: int = 1
    warmup: int = 1_000

    def __post_init__(self):
        if not self.slots > self.warmup >= 0:
            raise ValueError(f"need slots > warmup >= 0, got slots={self.slots}, warmup={self.warmup}")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        need = min(self.scenario.mpr_cap, self.scenario.backlogged)
        if len(self.table) < need:
            raise ValueError(f"success table has {len(self.table)} entries, need {need}")


@dataclass
class SimResult:
    """Counters cover the measured slots only (after warmup).

    Packet balance: ``backlog_start + arrivals == successes + drops + backlog_end``.
    """

    config: SimConfig
    seed: int
    measured_slots: int
    arrivals: int = 0
    successes: int = 0
    drops_deadline: int = 0
    drops_retx: int = 0
    drops_overflow: int = 0
    backlog_start: int = 0
    backlog_end: int = 0
    throughput: float = 0.0
    drop_rate: float = 0.0
    se_throughput: float = 0.0
    se_drop: float = 0.0
    reps: int = 1
    head_occupancy: dict = field(default_factory=dict)

    @property
    def drops(self) -> int:
        return self.drops_deadline + self.drops_retx + self.drops_overflow

    @property
    def ci99_throughput(self) -> float:
        return Z99 * self.se_throughput

    @property
    def ci99_drop(self) -> float:
        return Z99 * self.se_drop


def _batch_se(per_batch: np.ndarray, batch: int) -> float:
    """Standard error of a per-slot rate from non-overlapping batch means.

    Per-slot indicators are autocorrelated through the queue, which makes the
    i.i.d. variance too optimistic (by up to ~1.4x for drops); batch means absorb it.
    """
    if len(per_batch) < 2:
        return float("nan")
    means = per_batch / batch
    return float(means.std(ddof=1) / math.sqrt(len(means)))


def run_simulation(config: SimConfig, trace: Optional[str] = None) -> SimResult:
    """Simulate ``config.slots`` slots; deterministic for a given seed.

    ``trace`` is an optional CSV path receiving one row per slot.
    """
    sc = config.scenario
    q, lam, D, n_retx = sc.q, sc.lam, sc.deadline, sc.retx
    cap, L = sc.mpr_cap, sc.buffer
    others = sc.backlogged - 1
    p = [config.table[k] if k < len(config.table) else 0.0 for k in range(sc.backlogged)]
    rng = np.random.default_rng(config.seed)

    births: deque = deque()  # slot index at whose end the packet arrived
    fails: deque = deque()
    full = sc.full_retx
    res = SimResult(config=config, seed=config.seed, measured_slots=config.slots - config.warmup)
    occ: dict = {}
    n_meas = config.slots - config.warmup
    n_batches = N_BATCHES if n_meas >= 2 * N_BATCHES else n_meas
    batch = n_meas // n_batches
    succ_b = np.zeros(n_batches, dtype=np.int64)
    drop_b = np.zeros(n_batches, dtype=np.int64)

    writer = None
    fh = None
    if trace is not None:
        fh = open(trace, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["slot", "queue_len", "head_age", "head_fails", "event"])

    measuring = config.warmup == 0
    slot = 0
    try:
        while slot < config.slots:
            m = min(_BLOCK, config.slots - slot)
            u_tx = rng.random(m).tolist()
            k_oth = rng.binomial(others, q, m).tolist()
            u_ch = rng.random(m).tolist()
            u_arr = rng.random(m).tolist()
            for i in range(m):
                if not measuring and slot >= config.warmup:
                    measuring = True
                    res.backlog_start = len(births)
                event = ""
                dropped = 0
                if births:
                    age = slot - births[0]
                    if measuring:
                        key = (age, None if full else fails[0])
                        occ[key] = occ.get(key, 0) + 1
                    if writer is not None:
                        head = (len(births), age, fails[0])
                    if u_tx[i] < q:
                        k = 1 + k_oth[i]
                        if k <= cap and u_ch[i] < p[k - 1]:
                            births.popleft()
                            fails.popleft()
                            event = "success"
                            if measuring:
                                res.successes += 1
                                b = (slot - config.warmup) // batch
                                if b < n_batches:
                                    succ_b[b] += 1
                        else:
                            fails[0] += 1
                            # in its last slot the packet expires anyway; count that as a deadline drop
                            if fails[0] > n_retx and age < D:
                                births.popleft()
                                fails.popleft()
                                event = "drop_retx"
                                dropped += 1
                                if measuring:
                                    res.drops_retx += 1
                    # a packet in its D-th slot has just had its last chance
                    while births and slot - births[0] >= D:
                        births.popleft()
                        fails.popleft()
                        event = "drop_deadline"
                        dropped += 1
                        if measuring:
                            res.drops_deadline += 1
                elif writer is not None:
                    head = (0, 0, 0)
                if u_arr[i] < lam:
                    if measuring:
                        res.arrivals += 1
                    if len(births) >= L:
                        dropped += 1
                        event = event or "drop_overflow"
                        if measuring:
                            res.drops_overflow += 1
                    else:
                        births.append(slot)
                        fails.append(0)
                if measuring and dropped:
                    b = (slot - config.warmup) // batch
                    if b < n_batches:
                        drop_b[b] += dropped
                if writer is not None:
                    writer.writerow([slot, head[0], head[1], head[2], event])
                slot += 1
    finally:
        if fh is not None:
            fh.close()

    res.backlog_end = len(births)
    n = res.measured_slots
    res.throughput = res.successes / n
    res.drop_rate = res.drops / n
    res.se_throughput = _batch_se(succ_b, batch)
    res.se_drop = _batch_se(drop_b, batch)
    res.head_occupancy = occ
    return res


def run_replications(config: SimConfig, reps: int) -> SimResult:
    """Independent runs with seeds ``seed ^ (i * 0x9E3779B97F4A7C15)``, i = 0..reps-1.

    Counters are summed; throughput and drop rate are replication means and the
    standard errors are taken across replications. ``reps == 1`` returns the
    single run unchanged.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    runs = [run_simulation(replace(config, seed=split_seed(config.seed, i))) for i in range(reps)]
    if reps == 1:
        return runs[0]
    thr = np.array([r.throughput for r in runs])
    dr = np.array([r.drop_rate for r in runs])
    occ: dict = {}
    for r in runs:
        for k, v in r.head_occupancy.items():
            occ[k] = occ.get(k, 0) + v
    return SimResult(
        config=config,
        seed=config.seed,
        measured_slots=sum(r.measured_slots for r in runs),
        arrivals=sum(r.arrivals for r in runs),
        successes=sum(r.successes for r in runs),
        drops_deadline=sum(r.drops_deadline for r in runs),
        drops_retx=sum(r.drops_retx for r in runs),
        drops_overflow=sum(r.drops_overflow for r in runs),
        backlog_start=sum(r.backlog_start for r in runs),
        backlog_end=sum(r.backlog_end for r in runs),
        throughput=float(thr.mean()),
        drop_rate=float(dr.mean()),
        se_throughput=float(thr.std(ddof=1) / math.sqrt(reps)),
        se_drop=float(dr.std(ddof=1) / math.sqrt(reps)),
        reps=reps,
        head_occupancy=occ,
    )
