"""Geometry, Zipf preference patterns, requests and channels.

All randomness comes from :func:`stream`, which derives an independent
generator for every (purpose, index...) tuple from the master seed, so a
slot's requests and channels never depend on evaluation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .model import ChannelBlock, RequestSlot, SystemConfig


class Purpose(IntEnum):
    POPULARITY = 1
    GEOMETRY = 2
    SHADOWING = 3
    REQUESTS = 4
    SMALL_SCALE = 5
    BEAM_INIT = 6


def stream(seed: int, purpose: Purpose, *indices: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, purpose, *indices)``."""
    key = (int(purpose),) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


class GeometryError(RuntimeError):
    pass


# ---------------------------------------------------------------- popularity


@dataclass(frozen=True)
class PopularityProfile:
    """Per-pattern Zipf distributions and the user-to-pattern map.

    ``ranks[i, f]`` is the popularity rank (1 = most popular) of file f in
    pattern i and ``probs[i, f] = norm[i] * ranks[i, f] ** -skewness[i]``.
    """

    skewness: np.ndarray
    ranks: np.ndarray
    norm: np.ndarray
    probs: np.ndarray
    user_pattern: np.ndarray

    @property
    def num_patterns(self) -> int:
        return len(self.skewness)

    def user_probs(self) -> np.ndarray:
        """(K, F) request distribution of every user."""
        return self.probs[self.user_pattern]


def zipf_probs(skewness: float, ranks: np.ndarray) -> tuple[float, np.ndarray]:
    weights = np.asarray(ranks, dtype=float) ** (-float(skewness))
    norm = 1.0 / weights.sum()
    return norm, norm * weights


def build_popularity(config: SystemConfig, rng: np.random.Generator | None = None) -> PopularityProfile:
    if rng is None:
        rng = stream(config.seed, Purpose.POPULARITY)
    I, F = config.patterns, config.num_files
    lo, hi = config.skewness_range
    skewness = rng.uniform(lo, hi, size=I)
    ranks = np.stack([rng.permutation(F) + 1 for _ in range(I)])
    norm = np.empty(I)
    probs = np.empty((I, F))
    for i in range(I):
        norm[i], probs[i] = zipf_probs(skewness[i], ranks[i])
    user_pattern = np.arange(config.num_users) % I
    return PopularityProfile(skewness, ranks, norm, probs, user_pattern)


def draw_files(user_probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One file index per user (row of ``user_probs``) by inverse CDF."""
    cdf = np.cumsum(user_probs, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(user_probs.shape[0])
    return np.array([int(np.searchsorted(cdf[k], u[k], side="right")) for k in range(len(u))])


def sample_requests(profile: PopularityProfile, t: int, rng: np.random.Generator) -> RequestSlot:
    """Every user requests one file from its pattern's distribution.

    ``t`` only labels the slot; determinism comes from the stream passed in
    (see :meth:`Scenario.requests`).
    """
    files = draw_files(profile.user_probs(), rng)
    return RequestSlot(tuple(int(f) for f in files))


# ---------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Geometry:
    sbs_xy: np.ndarray  # (B, 2) km
    user_xy: np.ndarray  # (K, 2) km

    def distances(self) -> np.ndarray:
        """(K, B) user-to-SBS distances in km."""
        diff = self.user_xy[:, None, :] - self.sbs_xy[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def dump(self, path: str | Path) -> None:
        data = {"sbs_xy_km": self.sbs_xy.tolist(), "user_xy_km": self.user_xy.tolist()}
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Geometry":
        data = json.loads(Path(path).read_text())
        return cls(np.array(data["sbs_xy_km"], dtype=float), np.array(data["user_xy_km"], dtype=float))


def in_hexagon(xy: np.ndarray, edge: float) -> np.ndarray:
    """Membership test for the flat-topped regular hexagon centred at 0."""
    x = np.abs(np.asarray(xy)[..., 0])
    y = np.abs(np.asarray(xy)[..., 1])
    h = math.sqrt(3.0) / 2.0 * edge
    return (y <= h) & (math.sqrt(3.0) * x + y <= math.sqrt(3.0) * edge)


def _uniform_hexagon_point(rng: np.random.Generator, edge: float) -> np.ndarray:
    h = math.sqrt(3.0) / 2.0 * edge
    while True:
        p = np.array([rng.uniform(-edge, edge), rng.uniform(-h, h)])
        if in_hexagon(p, edge):
            return p


def place_nodes(config: SystemConfig, rng: np.random.Generator | None = None,
                max_draws: int = 10_000) -> Geometry:
    """SBSs and users uniform in the macro-cell hexagon.

    Users closer than ``config.exclusion_radius_km`` to any SBS are redrawn.
    """
    if rng is None:
        rng = stream(config.seed, Purpose.GEOMETRY)
    edge = config.hexagon_edge_km
    sbs = np.array([_uniform_hexagon_point(rng, edge) for _ in range(config.num_sbs)])
    users = np.empty((config.num_users, 2))
    for k in range(config.num_users):
        for _ in range(max_draws):
            p = _uniform_hexagon_point(rng, edge)
            if np.min(np.hypot(*(sbs - p).T)) >= config.exclusion_radius_km:
                users[k] = p
                break
        else:
            raise GeometryError(f"could not place user {k} outside the SBS exclusion zones "
                                f"after {max_draws} draws")
    return Geometry(sbs, users)


# ---------------------------------------------------------------- channels


def path_loss_db(distance_km):
    return 148.1 + 37.6 * np.log10(distance_km)


def large_scale_gains(geometry: Geometry, config: SystemConfig,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """(K, B) linear power gains: path loss, antenna gain and shadowing."""
    if rng is None:
        rng = stream(config.seed, Purpose.SHADOWING)
    d = geometry.distances()
    shadow = rng.normal(0.0, config.shadowing_std_db, size=d.shape) if config.shadowing_std_db > 0 \
        else np.zeros_like(d)
    loss_db = path_loss_db(d) - config.antenna_gain_db + shadow
    return 10.0 ** (-loss_db / 10.0)


def rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_channels(large_scale: np.ndarray, config: SystemConfig, block: int,
                    slots: int | None = None) -> ChannelBlock:
    """Per-slot Rayleigh channels on top of fixed large-scale gains."""
    T = config.block_length if slots is None else slots
    K, B = large_scale.shape
    M = config.num_antennas
    gains = np.empty((T, K, B, M), dtype=complex)
    amp = np.sqrt(large_scale)[:, :, None]
    for t in range(T):
        gains[t] = amp * rayleigh(stream(config.seed, Purpose.SMALL_SCALE, block, t), (K, B, M))
    gains.setflags(write=False)
    return ChannelBlock(gains, np.array(large_scale))


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Slot:
    """What the cloud sees in one slot: requests plus (K, B, M) channels."""

    requests: RequestSlot
    channels: np.ndarray
    block: int
    index: int


class Scenario:
    """Quasi-static network instance derived from ``config.seed``.

    Geometry, shadowing and preference patterns are fixed for the whole
    timeline; requests and small-scale fading are redrawn every slot.
    """

    def __init__(self, config: SystemConfig, geometry: Geometry | None = None):
        self.config = config
        self.geometry = geometry if geometry is not None else place_nodes(config)
        self.large_scale = large_scale_gains(self.geometry, config)
        self.popularity = build_popularity(config)

    def requests(self, block: int, t: int) -> RequestSlot:
        rng = stream(self.config.seed, Purpose.REQUESTS, block, t)
        return sample_requests(self.popularity, t, rng)

    def channels(self, block: int) -> ChannelBlock:
        return sample_channels(self.large_scale, self.config, block)

    def window(self, block: int) -> list[Slot]:
        """All T slots of ``block``."""
        chans = self.channels(block)
        return [Slot(self.requests(block, t), chans.slot(t), block, t)
                for t in range(self.config.block_length)]
