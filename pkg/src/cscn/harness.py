"""Two-timescale timeline, experiment sweeps, the brute-force oracle and output files.

A :class:`Timeline` owns one seeded scenario and memoizes slot deliveries:
delivery depends on the cache only through the rows of requested files, so
schemes that hand a slot the same rows share one solve. In particular the
first alternating pass (started from the uniform cache) doubles as the UC
scheme, and the proposed cache of block n is the genie-aided cache of
block n - 1. Deliveries under any other cache start from the slot's UC
solution. A mu sweep passes each value's UC solutions on as warm starts
for the next value (continuation in mu); requests and channels do not
depend on mu, so the warm points stay valid. QoS feasibility does not
depend on the cache either, so a slot found infeasible once is not
solved again.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .baselines import LRUState, uniform_caching
from .cache import CacheUpdate, alternating_update, default_deliver
from .delivery import DeliverySolution, fixed_clustering_beamforming
from .model import PowerBreakdown, RequestSlot, SystemConfig, dump_config, to_raw
from .scenario import Purpose, Scenario, Slot, stream

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "UC", "LRU", "GAC")
SWEEP_VARS = {"mu": "fractional_capacity", "I": "patterns", "K": "num_users"}
SWEEP_COLUMNS = ("sweep_var", "value", "scheme", "mean_power_w", "stderr_w", "infeasible_slots", "seed")
BLOCK_COLUMNS = ("block", "slot", "scheme", "status", "edge_w", "fronthaul_w", "total_w", "iterations")


class SlotError(RuntimeError):
    """Delivery failure with slot provenance."""


@dataclass
class BlockReport:
    scheme: str
    block: int
    solutions: list[DeliverySolution]
    allocations: list[np.ndarray]  # cache used in each slot (constant except for LRU)

    @property
    def powers(self) -> list[PowerBreakdown | None]:
        return [s.power if s.feasible else None for s in self.solutions]

    @property
    def infeasible(self) -> int:
        return sum(not s.feasible for s in self.solutions)

    @property
    def feasible_totals(self) -> np.ndarray:
        return np.array([s.power.total for s in self.solutions if s.feasible])

    @property
    def mean_power(self) -> float:
        t = self.feasible_totals
        return float(t.mean()) if t.size else math.nan


class Timeline:
    """One seeded network over consecutive blocks, shared by all schemes."""

    def __init__(self, config: SystemConfig, deliver=None,
                 uc_seeds: dict[tuple[int, int], DeliverySolution] | None = None):
        self.config = config
        self.scenario = Scenario(config)
        self._uc = uniform_caching(config).fractions
        self.uc_seeds = dict(uc_seeds or {})
        self.uc_solutions: dict[tuple[int, int], DeliverySolution] = {}
        self._infeasible = {k: s for k, s in self.uc_seeds.items() if not s.feasible}
        self._deliver = deliver if deliver is not None else default_deliver(config)
        self._memo: dict[tuple, DeliverySolution] = {}
        self._windows: dict[int, list[Slot]] = {}
        self._gac: dict[int, CacheUpdate] = {}
        self._lru: LRUState | None = None
        self._lru_block = -1
        self.solves = 0

    def window(self, block: int) -> list[Slot]:
        if block not in self._windows:
            self._windows[block] = self.scenario.window(block)
        return self._windows[block]

    def deliver(self, slot: Slot, L: np.ndarray, warm: DeliverySolution | None = None) -> DeliverySolution:
        sid = (slot.block, slot.index)
        is_uc = warm is None and np.array_equal(L, self._uc)
        if sid in self._infeasible:
            if is_uc:
                self.uc_solutions[sid] = self._infeasible[sid]
            return self._infeasible[sid]
        if is_uc:
            warm = self.uc_seeds.get(sid)
        rows = np.ascontiguousarray(np.asarray(L, dtype=float)[list(slot.requests.requested)])
        key = (slot.block, slot.index, rows.tobytes(), None if warm is None else warm.V.tobytes())
        if key not in self._memo:
            try:
                self._memo[key] = self._deliver(slot, L, warm)
            except Exception as exc:  # noqa: BLE001 - re-raised with provenance
                raise SlotError(f"block {slot.block} slot {slot.index}: {exc}") from exc
            self.solves += 1
        sol = self._memo[key]
        if not sol.feasible:
            self._infeasible[sid] = sol
        if is_uc:
            self.uc_solutions[sid] = sol
        return sol

    def deliver_from_uc(self, slot: Slot, L: np.ndarray) -> DeliverySolution:
        """Deliver under ``L`` starting from the slot's UC solution (which is computed anyway)."""
        if np.array_equal(L, self._uc):
            return self.deliver(slot, L)
        return self.deliver(slot, L, self.deliver(slot, self._uc))

    def genie(self, block: int) -> CacheUpdate:
        if block not in self._gac:
            self._gac[block] = alternating_update(self.window(block), self._uc, self.config, self.deliver)
        return self._gac[block]

    def allocation(self, scheme: str, block: int) -> np.ndarray:
        if scheme == "UC":
            return uniform_caching(self.config).fractions
        if scheme == "GAC":
            return self.genie(block).allocation.fractions
        if scheme == "proposed":
            if block == 0:
                return uniform_caching(self.config).fractions
            return self.genie(block - 1).allocation.fractions
        raise ValueError(f"scheme {scheme!r} has no block allocation")

    def run_block(self, scheme: str, block: int) -> BlockReport:
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        window = self.window(block)
        if scheme == "LRU":
            return self._run_lru(block, window)
        L = self.allocation(scheme, block)
        if scheme == "GAC":
            # the last alternating pass already delivered under this cache
            return BlockReport(scheme, block, list(self.genie(block).deliveries), [L] * len(window))
        return BlockReport(scheme, block, [self.deliver_from_uc(s, L) for s in window], [L] * len(window))

    def _run_lru(self, block: int, window: list[Slot]) -> BlockReport:
        # LRU state is carried over the timeline, so blocks must be visited in order
        if self._lru is None or block <= self._lru_block:
            self._lru = LRUState(self.config)
            for b in range(block):
                self._run_lru_window(self.window(b))
        sols, allocs = self._run_lru_window(window)
        self._lru_block = block
        return BlockReport("LRU", block, sols, allocs)

    def _run_lru_window(self, window):
        sols, allocs = [], []
        for s in window:
            L = self._lru.allocation().fractions
            sol = self.deliver_from_uc(s, L)
            if sol.feasible:
                self._lru.record(sol.full_clustering(self.config.num_files))
            sols.append(sol)
            allocs.append(L)
        return sols, allocs


def run_block(scheme: str, block: int, config: SystemConfig, timeline: Timeline | None = None) -> BlockReport:
    """Stage 1 (cache for the block) then stage 2 (delivery in every slot)."""
    return (timeline or Timeline(config)).run_block(scheme, block)


@dataclass
class SweepRow:
    sweep_var: str
    value: float
    scheme: str
    mean_power_w: float
    stderr_w: float
    infeasible_slots: int
    seed: int
    fronthaul_w: float = math.nan
    failed: str = ""

    def as_csv(self) -> tuple:
        return (self.sweep_var, _fmt(self.value), self.scheme, _fmt(self.mean_power_w), _fmt(self.stderr_w),
                self.infeasible_slots, self.seed)


@dataclass
class Experiment:
    rows: list[SweepRow] = field(default_factory=list)
    reports: list[BlockReport] = field(default_factory=list)

    def row(self, value, scheme) -> SweepRow:
        for r in self.rows:
            if r.value == value and r.scheme == scheme:
                return r
        raise KeyError((value, scheme))


def sweep_config(config: SystemConfig, var: str, value) -> SystemConfig:
    if var not in SWEEP_VARS:
        raise ValueError(f"unknown sweep variable {var!r}; choose from {sorted(SWEEP_VARS)}")
    name = SWEEP_VARS[var]
    return config.replace(**{name: int(value) if name != "fractional_capacity" else float(value)})


def run_experiment(config: SystemConfig, var: str, values: Iterable, schemes: Sequence[str],
                   repetitions: int = 1, blocks: int = 1, keep_reports: bool = False) -> Experiment:
    """Mean and standard error of the slot power per (value, scheme).

    Repetition r uses seed ``config.seed + r``. Each repetition evaluates
    blocks 1..``blocks``; block 0 only provides the proposed scheme's
    history. Infeasible slots are counted and left out of the means. A
    failing (value, scheme) is flagged and the sweep continues. For a mu
    sweep, UC deliveries are warm-started from the previous value's.
    """
    out = Experiment()
    seeds: dict[int, dict] = {}
    schemes = list(schemes)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    for value in values:
        cfg_v = sweep_config(config, var, value)
        pooled = {s: [] for s in schemes}
        front = {s: [] for s in schemes}
        infeasible = dict.fromkeys(schemes, 0)
        failed = dict.fromkeys(schemes, "")
        for rep in range(repetitions):
            timeline = Timeline(cfg_v.replace(seed=cfg_v.seed + rep), uc_seeds=seeds.get(rep))
            for scheme, block in itertools.product(schemes, range(1, blocks + 1)):
                if failed[scheme]:
                    continue
                try:
                    rep_ = timeline.run_block(scheme, block)
                except SlotError as exc:
                    log.warning("%s=%s %s failed: %s", var, value, scheme, exc)
                    failed[scheme] = str(exc)
                    continue
                pooled[scheme].extend(rep_.feasible_totals)
                front[scheme].extend(s.power.fronthaul for s in rep_.solutions if s.feasible)
                infeasible[scheme] += rep_.infeasible
                if keep_reports:
                    out.reports.append(rep_)
            if var == "mu":
                seeds[rep] = timeline.uc_solutions
        for scheme in schemes:
            p = np.asarray(pooled[scheme])
            mean = float(p.mean()) if p.size else math.nan
            se = float(p.std(ddof=1) / math.sqrt(p.size)) if p.size > 1 else math.nan
            fr = float(np.mean(front[scheme])) if front[scheme] else math.nan
            out.rows.append(SweepRow(var, value, scheme, mean, se, infeasible[scheme], config.seed, fr,
                                     failed[scheme]))
    return out


@dataclass
class OracleResult:
    power: float  # inf when every clustering is infeasible
    E: np.ndarray | None
    V: np.ndarray | None
    breakdown: PowerBreakdown | None = None

    @property
    def feasible(self) -> bool:
        return self.E is not None


def brute_force_oracle(requests: RequestSlot, channels: np.ndarray, L: np.ndarray, config: SystemConfig,
                       max_entries: int = 12) -> OracleResult:
    """Global optimum of one unicast slot by enumerating every binary clustering."""
    n_req, B = requests.num_requested, config.num_sbs
    if n_req * B > max_entries:
        raise ValueError(f"instance too large for enumeration: {n_req} files x {B} SBSs > {max_entries}")
    if any(len(g) > 1 for g in requests.groups.values()):
        raise ValueError("the oracle is exact for unicast slots only")
    best = OracleResult(math.inf, None, None)
    for bits in itertools.product((0.0, 1.0), repeat=n_req * B):
        E = np.array(bits).reshape(n_req, B)
        out = fixed_clustering_beamforming(E, L, requests, channels, config)
        if out is not None and out[1].total < best.power:
            best = OracleResult(out[1].total, E, out[0], out[1])
    return best


def tiny_config(base: SystemConfig) -> SystemConfig:
    """Two SBSs with two antennas each, two users."""
    return base.replace(num_sbs=2, num_antennas=2, num_users=2)


def tiny_instances(config: SystemConfig, count: int, seed: int = 0) -> list[tuple[SystemConfig, Slot]]:
    """Seeded unicast instances on :func:`tiny_config` networks, one network per instance.

    Both users request distinct files drawn uniformly from the library.
    """
    out = []
    for i in range(count):
        cfg = tiny_config(config).replace(seed=seed + i)
        sc = Scenario(cfg)
        rng = stream(cfg.seed, Purpose.REQUESTS, 0, 0)
        files = rng.choice(cfg.num_files, size=cfg.num_users, replace=False)
        out.append((cfg, Slot(RequestSlot(tuple(int(f) for f in files)), sc.channels(0).slot(0), 0, 0)))
    return out


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(rows: Iterable[Sequence], columns: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(r)


def write_sweep(exp: Experiment, path: str | Path) -> None:
    write_csv((r.as_csv() for r in exp.rows), SWEEP_COLUMNS, path)


def write_block(report: BlockReport, path: str | Path) -> None:
    rows = []
    for t, s in enumerate(report.solutions):
        p = s.power
        rows.append((report.block, t, report.scheme, s.status, _fmt(p.edge), _fmt(p.fronthaul), _fmt(p.total),
                     s.iterations))
    write_csv(rows, BLOCK_COLUMNS, path)


def config_hash(config: SystemConfig) -> str:
    import yaml

    text = yaml.safe_dump(to_raw(config), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(config: SystemConfig, path: str | Path, extra: dict | None = None) -> None:
    import clarabel
    import scipy

    lines = [f"config_sha256 {config_hash(config)}", f"seed {config.seed}", f"cscn {__version__}",
             f"python {platform.python_version()}", f"numpy {np.__version__}", f"scipy {scipy.__version__}",
             f"clarabel {clarabel.__version__}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_config(config: SystemConfig, path: str | Path) -> None:
    dump_config(config, path)
