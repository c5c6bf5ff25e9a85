"""Domain types, unit conversions and configuration validation.

Everything inside the package works in linear units (W, Hz, bits, bit/s).
dB and dBm only appear at the configuration boundary, in keys suffixed
``_db`` / ``_dbm``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant.

    The offending field name is available as ``.field``.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def db_to_linear(value):
    """Convert a dB ratio to a linear ratio."""
    return _scalar_or_array(np.power(10.0, np.asarray(value, dtype=float) / 10.0))


def dbm_to_watts(value):
    """Convert dBm to Watts."""
    return _scalar_or_array(np.power(10.0, np.asarray(value, dtype=float) / 10.0) / 1000.0)


def linear_to_db(value):
    return _scalar_or_array(10.0 * np.log10(np.asarray(value, dtype=float)))


def watts_to_dbm(value):
    return _scalar_or_array(10.0 * np.log10(np.asarray(value, dtype=float) * 1000.0))


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Validated scenario, physical and algorithm parameters.

    Per-file quantities (``file_sizes``, ``sinr_target``) have length F,
    per-SBS quantities (``storage``, ``max_power``, ``edge_slope``) length B
    and ``noise_power`` length K. Build instances with :func:`validate_config`.
    """

    num_sbs: int
    num_antennas: int
    num_users: int
    num_files: int
    file_sizes: np.ndarray
    storage: np.ndarray
    fractional_capacity: float
    max_power: np.ndarray
    sinr_target: np.ndarray
    bandwidth: float
    noise_power: np.ndarray
    edge_slope: np.ndarray
    fronthaul_efficiency: float
    block_length: int
    patterns: int
    skewness_range: tuple[float, float] = (1.0, 2.0)
    penalty_init: float = 1.0
    penalty_factor: float = 5.0
    penalty_max: float = 1000.0
    cluster_init: float = 0.1
    init_power_fraction: float = 0.5
    cccp_max_iter: int = 50
    cccp_rel_tol: float = 1e-4
    cccp_slack_tol: float = 1e-5
    outer_max_iter: int = 10
    flip_rounds: int = 2
    outer_rel_tol: float = 1e-3
    solver_tol: float = 1e-8
    qos_tol: float = 1e-6
    hexagon_edge_km: float = 1.0
    exclusion_radius_km: float = 0.03
    antenna_gain_db: float = 10.0
    shadowing_std_db: float = 8.0
    seed: int = 0

    @property
    def rates(self) -> np.ndarray:
        """Per-file delivery rate R_f = W log2(1 + gamma_f) in bit/s."""
        return self.bandwidth * np.log2(1.0 + self.sinr_target)

    @property
    def library_size(self) -> float:
        return float(np.sum(self.file_sizes))

    def replace(self, **changes) -> "SystemConfig":
        """Return a re-validated copy with ``changes`` applied.

        Changing ``fractional_capacity`` recomputes ``storage`` and vice versa.
        """
        raw = to_raw(self)
        if "fractional_capacity" in changes and "storage" not in changes:
            raw.pop("storage", None)
        if "storage" in changes and "fractional_capacity" not in changes:
            raw.pop("fractional_capacity", None)
        if "num_users" in changes and "noise_power" not in changes:
            raw["noise_power"] = float(self.noise_power[0])
        if "num_files" in changes:
            for key in ("file_sizes", "sinr_target"):
                if key not in changes:
                    raw[key] = float(getattr(self, key)[0])
            if "storage" not in changes:
                raw.pop("storage", None)
        if "num_sbs" in changes:
            for key in ("max_power", "edge_slope"):
                if key not in changes:
                    raw[key] = float(getattr(self, key)[0])
            if "storage" not in changes:
                raw.pop("storage", None)
        raw.update(changes)
        return validate_config(raw)


_COUNTS = ("num_sbs", "num_antennas", "num_users", "num_files", "block_length", "patterns")
_PER_FILE = ("file_sizes", "sinr_target")
_PER_SBS = ("max_power", "edge_slope", "storage")
_PER_USER = ("noise_power",)
_DB_KEYS = {"sinr_target_db": "sinr_target"}
_DBM_KEYS = {"max_power_dbm": "max_power", "noise_power_dbm": "noise_power"}

DESK_PROFILE: dict[str, Any] = {
    "num_sbs": 3,
    "num_antennas": 4,
    "num_users": 6,
    "num_files": 10,
    "file_sizes": 1e8,
    "fractional_capacity": 0.2,
    "max_power_dbm": 40.0,
    "sinr_target_db": 5.0,
    "bandwidth": 1e7,
    "noise_power_dbm": -102.0,
    "edge_slope": 4.0,
    "fronthaul_efficiency": 1e-7,
    "block_length": 20,
    "patterns": 2,
}

PAPER_PROFILE: dict[str, Any] = dict(
    DESK_PROFILE,
    num_sbs=7,
    num_antennas=4,
    num_users=16,
    num_files=100,
    block_length=100,
    patterns=4,
)

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


def _broadcast(name: str, value, length: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(length, float(arr[0]))
    if arr.shape != (length,):
        raise ConfigError(name, f"expected {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(name, "must be finite")
    return arr


def validate_config(raw: Mapping[str, Any] | None = None, **overrides) -> SystemConfig:
    """Build a :class:`SystemConfig` from raw key/value pairs.

    ``raw`` may name a base ``profile`` ("desk" or "paper"); remaining keys
    override it. Keys ending in ``_db``/``_dbm`` are converted to linear
    units. Exactly one of ``storage`` and ``fractional_capacity`` needs to
    be given; the other is derived. Raises :class:`ConfigError` on the first
    violated invariant.
    """
    data = dict(raw or {})
    data.update(overrides)
    profile = data.pop("profile", None)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError("profile", f"unknown profile {profile!r}")
        base = dict(PROFILES[profile])
        if "storage" in data:
            base.pop("fractional_capacity", None)
        # a linear key in the override shadows the dB key of the profile
        for db_key, lin_key in {**_DB_KEYS, **_DBM_KEYS}.items():
            if lin_key in data:
                base.pop(db_key, None)
        base.update(data)
        data = base

    for db_key, lin_key in _DB_KEYS.items():
        if db_key in data:
            if lin_key in data:
                raise ConfigError(db_key, f"both {db_key} and {lin_key} given")
            data[lin_key] = db_to_linear(data.pop(db_key))
    for dbm_key, lin_key in _DBM_KEYS.items():
        if dbm_key in data:
            if lin_key in data:
                raise ConfigError(dbm_key, f"both {dbm_key} and {lin_key} given")
            data[lin_key] = dbm_to_watts(data.pop(dbm_key))

    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = set(data) - known
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(name, "unknown configuration key")

    for name in _COUNTS:
        if name not in data:
            raise ConfigError(name, "missing")
        value = data[name]
        if isinstance(value, bool) or int(value) != value or int(value) < 1:
            raise ConfigError(name, f"must be a positive integer, got {value!r}")
        data[name] = int(value)

    B, F, K = data["num_sbs"], data["num_files"], data["num_users"]
    for name in ("file_sizes", "max_power", "sinr_target", "bandwidth", "noise_power",
                 "edge_slope", "fronthaul_efficiency"):
        if name not in data:
            raise ConfigError(name, "missing")

    data["file_sizes"] = _broadcast("file_sizes", data["file_sizes"], F)
    data["sinr_target"] = _broadcast("sinr_target", data["sinr_target"], F)
    data["max_power"] = _broadcast("max_power", data["max_power"], B)
    data["edge_slope"] = _broadcast("edge_slope", data["edge_slope"], B)
    data["noise_power"] = _broadcast("noise_power", data["noise_power"], K)

    for name in ("file_sizes", "max_power", "noise_power", "edge_slope"):
        if np.any(data[name] <= 0):
            raise ConfigError(name, "must be strictly positive")
    if np.any(data["sinr_target"] < 0):
        raise ConfigError("sinr_target", "must be non-negative")
    for name in ("bandwidth", "fronthaul_efficiency"):
        data[name] = float(data[name])
        if not math.isfinite(data[name]) or data[name] <= 0:
            raise ConfigError(name, "must be strictly positive")

    library = float(np.sum(data["file_sizes"]))
    has_storage = data.get("storage") is not None
    has_mu = data.get("fractional_capacity") is not None
    if has_mu:
        mu = float(data["fractional_capacity"])
        if not (0.0 <= mu <= 1.0):
            raise ConfigError("fractional_capacity", f"must lie in [0, 1], got {mu}")
    if has_storage:
        storage = _broadcast("storage", data["storage"], B)
        if np.any(storage < 0):
            raise ConfigError("storage", "must be non-negative")
        implied = float(np.sum(storage)) / (B * library)
        if has_mu and not math.isclose(implied, mu, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigError("storage", f"implies fractional capacity {implied}, not {mu}")
        if implied > 1.0 + 1e-12:
            raise ConfigError("storage", "total storage exceeds B times the library")
        mu = implied
    elif has_mu:
        storage = np.full(B, mu * library)
    else:
        raise ConfigError("fractional_capacity", "missing (or give storage)")
    data["storage"] = storage
    data["fractional_capacity"] = mu

    lo, hi = (float(x) for x in data.get("skewness_range", (1.0, 2.0)))
    if lo < 0 or hi < lo:
        raise ConfigError("skewness_range", f"need 0 <= lo <= hi, got ({lo}, {hi})")
    data["skewness_range"] = (lo, hi)

    if float(data.get("penalty_init", 1.0)) <= 0:
        raise ConfigError("penalty_init", "must be > 0")
    if float(data.get("penalty_factor", 5.0)) <= 1:
        raise ConfigError("penalty_factor", "must be > 1")
    if float(data.get("penalty_max", 1000.0)) < float(data.get("penalty_init", 1.0)):
        raise ConfigError("penalty_max", "must be >= penalty_init")
    if not (0.0 <= float(data.get("cluster_init", 0.1)) <= 1.0):
        raise ConfigError("cluster_init", "must lie in [0, 1]")
    if not (0.0 < float(data.get("init_power_fraction", 0.5)) <= 1.0):
        raise ConfigError("init_power_fraction", "must lie in (0, 1]")
    for name in ("cccp_max_iter", "outer_max_iter"):
        if name in data and int(data[name]) < 1:
            raise ConfigError(name, "must be >= 1")
    if "flip_rounds" in data:
        value = data["flip_rounds"]
        if isinstance(value, bool) or int(value) != value or int(value) < 0:
            raise ConfigError("flip_rounds", "must be a nonnegative integer")
        data["flip_rounds"] = int(value)
    for name in ("cccp_rel_tol", "cccp_slack_tol", "outer_rel_tol", "solver_tol", "qos_tol",
                 "hexagon_edge_km"):
        if name in data and not float(data[name]) > 0:
            raise ConfigError(name, "must be > 0")
    if float(data.get("exclusion_radius_km", 0.03)) < 0:
        raise ConfigError("exclusion_radius_km", "must be >= 0")
    if float(data.get("shadowing_std_db", 8.0)) < 0:
        raise ConfigError("shadowing_std_db", "must be >= 0")

    for name in _PER_FILE + _PER_SBS + _PER_USER:
        data[name] = _frozen(data[name])
    return SystemConfig(**data)


def to_raw(config: SystemConfig) -> dict[str, Any]:
    """Plain key/value form of a config (linear units, lists for arrays)."""
    out = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def load_config(path: str | Path) -> SystemConfig:
    """Read a YAML config file (flat keys, optional ``profile`` base)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return validate_config(raw)


def dump_config(config: SystemConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_raw(config), fh, sort_keys=False)


# ---------------------------------------------------------------- slot types


@dataclass(frozen=True)
class ChannelBlock:
    """Channels for a block of slots.

    ``gains[t, k, b]`` is the length-M vector h_{k,b,t}; ``large_scale[k, b]``
    the linear power gain shared by every slot of the block.
    """

    gains: np.ndarray  # (T, K, B, M) complex
    large_scale: np.ndarray  # (K, B)

    @property
    def slot_count(self) -> int:
        return self.gains.shape[0]

    def slot(self, t: int) -> np.ndarray:
        """Channels of slot ``t`` as a (K, B, M) array."""
        return self.gains[t]

    def integrated(self, t: int, k: int) -> np.ndarray:
        """Stacked channel h_{k,t} of length M*B."""
        return self.gains[t, k].reshape(-1)


@dataclass(frozen=True)
class RequestSlot:
    """Requests of one slot: ``assignment[k]`` is the file user k asks for."""

    assignment: tuple[int, ...]
    groups: dict[int, tuple[int, ...]] = field(init=False)

    def __post_init__(self):
        groups: dict[int, list[int]] = {}
        for k, f in enumerate(self.assignment):
            groups.setdefault(int(f), []).append(k)
        object.__setattr__(self, "groups", {f: tuple(groups[f]) for f in sorted(groups)})

    @property
    def requested(self) -> tuple[int, ...]:
        """Requested files in ascending order; column order of E_t and V_t."""
        return tuple(self.groups)

    @property
    def num_requested(self) -> int:
        return len(self.groups)


@dataclass(frozen=True)
class CacheAllocation:
    """F x B matrix of cached fractions."""

    fractions: np.ndarray

    def __post_init__(self):
        a = np.array(self.fractions, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "fractions", a)

    def check(self, config: SystemConfig, atol: float = 1e-9) -> None:
        """Raise ``ValueError`` unless the storage constraints hold."""
        L = self.fractions
        if L.shape != (config.num_files, config.num_sbs):
            raise ValueError(f"cache shape {L.shape} != ({config.num_files}, {config.num_sbs})")
        if np.any(L < -atol) or np.any(L > 1 + atol):
            raise ValueError("cache fractions outside [0, 1]")
        used = config.file_sizes @ L
        if np.any(used > config.storage * (1 + 1e-12) + atol * config.file_sizes.max()):
            raise ValueError("cache overflows storage")


@dataclass(frozen=True)
class PowerBreakdown:
    edge: float
    fronthaul: float

    @property
    def total(self) -> float:
        return self.edge + self.fronthaul
