"""Periodic cache updating: alternating optimization over a historical window.

With the delivery decisions of a window fixed, the fronthaul term is linear
in the cache fractions and separates over SBSs into fractional knapsacks,
solved greedily by weight density.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .delivery import DeliverySolution, penalty_cccp
from .model import CacheAllocation, SystemConfig
from .scenario import Purpose, Slot, stream

log = logging.getLogger(__name__)

# deliver(slot, L, warm) with ``warm`` an earlier solution of the same slot or None
Deliver = Callable[[Slot, np.ndarray, "DeliverySolution | None"], DeliverySolution]


def cache_weights(clusterings: Iterable[np.ndarray], config: SystemConfig) -> np.ndarray:
    """w[f, b] = beta R_f sum_t e[f, b, t] over (F, B) binary clusterings."""
    count = np.zeros((config.num_files, config.num_sbs))
    for E in clusterings:
        count += np.asarray(E, dtype=float)
    return config.fronthaul_efficiency * config.rates[:, None] * count


def knapsack_column(w: np.ndarray, sizes: np.ndarray, capacity: float) -> np.ndarray:
    """Greedy fractional knapsack: fill by density w/s descending, ties by index."""
    order = np.lexsort((np.arange(len(w)), -(w / sizes)))
    out = np.zeros(len(w))
    left = float(capacity)
    for f in order:
        if left <= 0:
            break
        s = sizes[f]
        if left >= s * (1.0 - 1e-12):
            out[f] = 1.0
            left -= s
        else:
            out[f] = left / s
            left = 0.0
    return out


def solve_cache_lp(weights: np.ndarray, config: SystemConfig) -> CacheAllocation:
    """Maximize sum w[f, b] l[f, b] under per-SBS storage and 0 <= l <= 1."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (config.num_files, config.num_sbs):
        raise ValueError(f"weights must be ({config.num_files}, {config.num_sbs}), got {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    L = np.column_stack([knapsack_column(w[:, b], config.file_sizes, config.storage[b])
                         for b in range(config.num_sbs)])
    return CacheAllocation(L)


def default_deliver(config: SystemConfig) -> Deliver:
    """Penalty-CCCP delivery with the beamformer start drawn from the slot's own stream."""
    def deliver(slot: Slot, L: np.ndarray, warm: DeliverySolution | None = None) -> DeliverySolution:
        rng = stream(config.seed, Purpose.BEAM_INIT, slot.block, slot.index)
        return penalty_cccp(L, slot.requests, slot.channels, config, rng, warm=warm)
    return deliver


@dataclass
class OuterStep:
    iteration: int
    objective: float  # sum of slot powers over feasible slots
    infeasible: int
    change: float  # relative objective change from the previous step (nan at first)


@dataclass
class CacheUpdate:
    allocation: CacheAllocation
    trace: list[OuterStep]
    deliveries: list[DeliverySolution]  # delivery under the returned allocation

    @property
    def objective(self) -> float:
        return self.trace[-1].objective


def alternating_update(window: Sequence[Slot], L_init: np.ndarray | CacheAllocation, config: SystemConfig,
                       deliver: Deliver | None = None, map_fn=map) -> CacheUpdate:
    """Alternate slot-wise delivery with the cache LP until the window objective settles.

    Stops when the relative change in the summed slot power is at most
    ``config.outer_rel_tol``, when the LP returns the allocation it was
    given, or after ``config.outer_max_iter`` delivery passes. Infeasible
    slots contribute neither weights nor power. Passes after the first
    start each slot from its previous solution. ``map_fn`` may be a pool's
    ``map``; results do not depend on it.
    """
    deliver = deliver if deliver is not None else default_deliver(config)
    L = np.asarray(getattr(L_init, "fractions", L_init), dtype=float)
    trace: list[OuterStep] = []
    prev = None
    sols: list = [None] * len(window)
    for it in range(config.outer_max_iter):
        sols = list(map_fn(lambda sw: deliver(sw[0], L, sw[1]), zip(window, sols)))
        feas = [s for s in sols if s.feasible]
        obj = float(sum(s.power.total for s in feas))
        change = np.nan if prev is None else abs(obj - prev) / max(abs(prev), 1e-12)
        trace.append(OuterStep(it, obj, len(sols) - len(feas), change))
        for s, slot in zip(sols, window):
            if not s.feasible:
                log.info("block %d slot %d infeasible; left out of the cache weights", slot.block, slot.index)
        if prev is not None and change <= config.outer_rel_tol:
            break
        new = solve_cache_lp(cache_weights((s.full_clustering(config.num_files) for s in feas), config),
                             config).fractions
        if np.array_equal(new, L):
            break
        prev = obj
        if it + 1 == config.outer_max_iter:
            break
        L = new
    return CacheUpdate(CacheAllocation(L), trace, sols)


def write_allocation(L: np.ndarray | CacheAllocation, path: str | Path) -> None:
    L = np.asarray(getattr(L, "fractions", L))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("file", "sbs", "fraction"))
        for f, b in np.ndindex(L.shape):
            w.writerow((f, b, repr(float(L[f, b]))))


def read_allocation(path: str | Path, config: SystemConfig) -> CacheAllocation:
    L = np.zeros((config.num_files, config.num_sbs))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            L[int(row["file"]), int(row["sbs"])] = float(row["fraction"])
    return CacheAllocation(L)
