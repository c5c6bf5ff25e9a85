"""SINR, QoS feasibility, fronthaul rate and power evaluation for one slot.

Shapes used throughout: ``H`` is (K, B, M) complex channels, ``V`` is
(F_req, B, M) complex beamformers (row j serves ``requests.requested[j]``),
``E`` is (F_req, B) clustering and ``L`` is the full (F, B) cache matrix.
"""
from __future__ import annotations

import numpy as np

from .model import PowerBreakdown, RequestSlot, SystemConfig


def received_powers(H: np.ndarray, V: np.ndarray) -> np.ndarray:
    """(K, F_req) matrix of |h_k^H v_j|^2."""
    K = H.shape[0]
    n = V.shape[0]
    if n == 0:
        return np.zeros((K, 0))
    return np.abs(H.reshape(K, -1).conj() @ V.reshape(n, -1).T) ** 2


def sinr(k: int, j: int, V: np.ndarray, H: np.ndarray, noise: float) -> float:
    """SINR of user ``k`` decoding the stream of beamformer row ``j``."""
    if not 0 <= k < H.shape[0]:
        raise IndexError(f"user {k} out of range")
    if not 0 <= j < V.shape[0]:
        raise IndexError(f"beamformer {j} out of range")
    p = received_powers(H[k:k + 1], V)[0]
    return float(p[j] / (p.sum() - p[j] + noise))


def slot_sinrs(requests: RequestSlot, V: np.ndarray, H: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """SINR of every user for the file it requested (length K)."""
    p = received_powers(H, V)
    col = {f: j for j, f in enumerate(requests.requested)}
    out = np.empty(H.shape[0])
    for k, f in enumerate(requests.assignment):
        j = col[f]
        out[k] = p[k, j] / (p[k].sum() - p[k, j] + noise[k])
    return out


def per_sbs_power(V: np.ndarray) -> np.ndarray:
    """Transmit power of each SBS, sum_j ||v_{j,b}||^2."""
    return np.sum(np.abs(V) ** 2, axis=(0, 2)) if V.size else np.zeros(V.shape[1])


def qos_satisfied(V: np.ndarray, E: np.ndarray, requests: RequestSlot, H: np.ndarray,
                  config: SystemConfig, tolerance: float | None = None,
                  cap_tolerance: float = 1e-9) -> tuple[bool, float]:
    """Check SINR targets, per-SBS power caps and zero blocks where E = 0.

    Returns ``(ok, worst)`` where ``worst`` is the smallest relative margin
    over all SINR constraints (SINR/gamma - 1) and power caps
    (1 - power/P_b); negative means violated. A nonzero beamformer block on
    an unselected SBS makes ``ok`` false and ``worst`` ``-inf``.
    """
    tol = config.qos_tol if tolerance is None else tolerance
    margins = [np.inf]
    ok = True
    if V.shape[0]:
        s = slot_sinrs(requests, V, H, config.noise_power)
        targets = config.sinr_target[list(requests.assignment)]
        active = targets > 0
        if np.any(active):
            m = s[active] / targets[active] - 1.0
            margins.append(float(m.min()))
            ok &= bool(np.all(m >= -tol))
        cap = 1.0 - per_sbs_power(V) / config.max_power
        margins.append(float(cap.min()))
        ok &= bool(np.all(cap >= -cap_tolerance))
        off = np.asarray(E) == 0
        if np.any(np.abs(V[off]) != 0):
            return False, -np.inf
    return ok, min(margins)


def fronthaul_rate(l_f: np.ndarray, e_f: np.ndarray, rate: float) -> float:
    """Fronthaul rate of one file: sum_b (1 - l_{f,b}) e_{f,b} R_f."""
    return float(np.sum((1.0 - np.asarray(l_f)) * np.asarray(e_f)) * rate)


def fronthaul_cost(L: np.ndarray, requested, config: SystemConfig) -> np.ndarray:
    """(F_req, B) linear cost beta (1 - l_{f,b}) R_f of selecting SBS b for file f."""
    files = list(requested)
    return config.fronthaul_efficiency * (1.0 - np.asarray(L)[files]) * config.rates[files][:, None]


def total_power(L: np.ndarray, V: np.ndarray, E: np.ndarray, requested,
                config: SystemConfig) -> PowerBreakdown:
    """Edge plus fronthaul power of one slot.

    Unrequested files have no beamformer and no clustering column, so the
    sums over the library reduce to sums over ``requested``.
    """
    if len(requested) == 0:
        return PowerBreakdown(0.0, 0.0)
    edge = float(np.sum(config.edge_slope * np.sum(np.abs(V) ** 2, axis=2)))
    front = float(np.sum(fronthaul_cost(L, requested, config) * np.asarray(E)))
    return PowerBreakdown(edge, front)
