"""Comparison caching policies: uniform, least-recently-used and genie-aided."""
from __future__ import annotations

from collections import OrderedDict
from typing import Sequence

import numpy as np

from .cache import CacheUpdate, Deliver, alternating_update
from .model import CacheAllocation, SystemConfig
from .scenario import Slot


def uniform_caching(config: SystemConfig) -> CacheAllocation:
    """The same fraction mu of every file at every SBS."""
    return CacheAllocation(np.full((config.num_files, config.num_sbs), config.fractional_capacity))


class LRUCache:
    """Whole-file LRU for one SBS; at most one resident is partial.

    ``entries`` maps file -> cached fraction, least recent first.
    """

    def __init__(self, capacity: float, sizes: np.ndarray):
        self.capacity = float(capacity)
        self.sizes = np.asarray(sizes, dtype=float)
        self.entries: OrderedDict[int, float] = OrderedDict()

    def used(self) -> float:
        return float(sum(self.sizes[f] * frac for f, frac in self.entries.items()))

    def prefill(self, order: Sequence[int]) -> None:
        """Start from the recency ``order`` (first = least recent), keeping the most recent that fit."""
        self.entries.clear()
        left = self.capacity
        kept = []
        for f in reversed(list(order)):
            if left <= 0:
                break
            s = self.sizes[f]
            frac = 1.0 if left >= s * (1.0 - 1e-12) else left / s
            kept.append((int(f), frac))
            left -= s * frac
        for f, frac in reversed(kept):
            self.entries[f] = frac

    def access(self, f: int, serving: bool = True) -> None:
        """Record an access to file ``f``; a miss is filled only while this SBS serves ``f``."""
        f = int(f)
        if self.entries.get(f, 0.0) >= 1.0:
            self.entries.move_to_end(f)
            return
        if not serving:
            return
        self.entries.pop(f, None)
        s = self.sizes[f]
        need = min(s, self.capacity)
        free = self.capacity - self.used()
        while free < need * (1.0 - 1e-12) and self.entries:
            g, frac = next(iter(self.entries.items()))
            held = self.sizes[g] * frac
            if free + held <= need:
                del self.entries[g]
                free += held
            else:
                # partial eviction frees exactly what is missing
                self.entries[g] = (held - (need - free)) / self.sizes[g]
                free = need
        if need > 0:
            self.entries[f] = 1.0 if need >= s else need / s

    def fractions(self, num_files: int) -> np.ndarray:
        out = np.zeros(num_files)
        for f, frac in self.entries.items():
            out[f] = frac
        return out


def lru_update(cache: LRUCache, f: int, serving: bool) -> LRUCache:
    """Apply one access to a per-SBS LRU cache (in place) and return it."""
    cache.access(f, serving)
    return cache


class LRUState:
    """LRU caches of all SBSs, carried across slots and blocks."""

    def __init__(self, config: SystemConfig):
        self.config = config
        self.caches = [LRUCache(config.storage[b], config.file_sizes) for b in range(config.num_sbs)]
        # start full, lowest file index most recent
        for c in self.caches:
            c.prefill(range(config.num_files - 1, -1, -1))

    def allocation(self) -> CacheAllocation:
        return CacheAllocation(np.column_stack([c.fractions(self.config.num_files) for c in self.caches]))

    def record(self, E_full: np.ndarray) -> None:
        """Post-delivery update: one access per served (file, SBS) pair, by file then SBS index."""
        for f, b in zip(*np.nonzero(np.asarray(E_full) > 0.5)):
            self.caches[b].access(int(f), True)


def genie_aided_caching(window: Sequence[Slot], config: SystemConfig,
                        deliver: Deliver | None = None) -> CacheUpdate:
    """Alternating optimization on the very window it will serve (a lower bound)."""
    return alternating_update(window, uniform_caching(config), config, deliver)
