"""Per-slot joint clustering and multicast beamforming by penalty CCCP.

:func:`penalty_cccp` relaxes the binary clustering to ``0 <= e <= 1`` plus
the concave constraint ``e - e^2 <= w`` with penalized slacks ``w``, then
solves a sequence of convex inner approximations while the penalty grows
geometrically up to its cap. :func:`round_and_polish` turns the relaxed
point into a binary clustering with exactly feasible beamformers.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic import (LinearizationError, assemble_fixed_clustering, assemble_subproblem,
                    beams_from_solution, solve, whiten)
from .model import PowerBreakdown, RequestSlot, SystemConfig
from .physics import fronthaul_cost, per_sbs_power, qos_satisfied, received_powers, total_power
from .scenario import rayleigh

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE_SLOT = "infeasible-slot"

TRACE_COLUMNS = ("iteration", "objective_w", "lambda", "omega_max")


@dataclass
class TraceRow:
    iteration: int
    objective: float
    penalty: float
    omega_max: float


@dataclass
class DeliverySolution:
    """Outcome of one slot.

    ``E`` is the binary (F_req, B) clustering (row j serves
    ``requests.requested[j]``), ``V`` the (F_req, B, M) beamformers.
    """

    requests: RequestSlot
    E: np.ndarray
    V: np.ndarray
    power: PowerBreakdown
    status: str
    omega_max: float = 0.0
    trace: list[TraceRow] = field(default_factory=list)
    relaxed_E: np.ndarray | None = None
    flips: int = 0

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE_SLOT

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def full_clustering(self, num_files: int) -> np.ndarray:
        """Clustering embedded in an (F, B) matrix (zero rows for unrequested files)."""
        out = np.zeros((num_files, self.E.shape[1]))
        if self.feasible and self.E.size:
            out[list(self.requests.requested)] = self.E
        return out


def _scale_to_power(V: np.ndarray, config: SystemConfig, fraction: float) -> np.ndarray:
    p = per_sbs_power(V)
    scale = np.sqrt(fraction * config.max_power / np.where(p > 0, p, 1.0))
    return V * scale[None, :, None]


def random_beams(requests: RequestSlot, config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Gaussian beamformers scaled so every SBS uses ``init_power_fraction`` of its cap."""
    V = rayleigh(rng, (requests.num_requested, config.num_sbs, config.num_antennas))
    return _scale_to_power(V, config, config.init_power_fraction)


def matched_beams(requests: RequestSlot, H: np.ndarray, config: SystemConfig, fraction: float) -> np.ndarray:
    """Sum of normalized whitened channels of each group, scaled per SBS."""
    Hw = whiten(H, config.noise_power)
    V = np.zeros((requests.num_requested, config.num_sbs, config.num_antennas), dtype=complex)
    for j, f in enumerate(requests.requested):
        for k in requests.groups[f]:
            V[j] += Hw[k] / np.linalg.norm(Hw[k])
    return _scale_to_power(V, config, fraction)


def eigen_beams(requests: RequestSlot, H: np.ndarray, config: SystemConfig, fraction: float) -> np.ndarray:
    """Principal eigenvector of each group's normalized channel covariance, scaled per SBS.

    Unlike the matched sum, members whose channels nearly cancel are not
    starved, which matters for multicast feasibility.
    """
    Hw = whiten(H, config.noise_power)
    V = np.zeros((requests.num_requested, config.num_sbs, config.num_antennas), dtype=complex)
    for j, f in enumerate(requests.requested):
        G = np.array([Hw[k].reshape(-1) / np.linalg.norm(Hw[k]) for k in requests.groups[f]])
        _, _, vh = np.linalg.svd(G)
        V[j] = vh[0].conj().reshape(config.num_sbs, config.num_antennas)
    return _scale_to_power(V, config, fraction)


def _feasible_start(requests: RequestSlot, H: np.ndarray, L: np.ndarray, config: SystemConfig,
                    backend: str) -> np.ndarray | None:
    """Beamformers meeting every QoS target with all SBSs on, if any exist.

    The convex subproblem is always feasible when linearized at a QoS
    feasible point.
    """
    E = np.ones((requests.num_requested, config.num_sbs))
    for start in (eigen_beams, matched_beams):
        out = fixed_clustering_beamforming(E, L, requests, H, config, start(requests, H, config, 1.0), backend)
        if out is not None:
            return out[0]
    return None


def _empty(requests: RequestSlot, config: SystemConfig) -> DeliverySolution:
    n = requests.num_requested
    return DeliverySolution(requests, np.zeros((n, config.num_sbs)),
                            np.zeros((n, config.num_sbs, config.num_antennas), dtype=complex),
                            PowerBreakdown(0.0, 0.0), CONVERGED)


def penalty_cccp(L: np.ndarray, requests: RequestSlot, H: np.ndarray, config: SystemConfig,
                 rng: np.random.Generator | None = None, V_init: np.ndarray | None = None,
                 backend: str = "clarabel", warm: DeliverySolution | None = None) -> DeliverySolution:
    """Penalty CCCP for one slot followed by :func:`round_and_polish`.

    The initial beamformers are ``V_init`` if given, else Gaussian draws
    from ``rng``. If the first convex subproblem is infeasible at that
    point, matched-filter starts at half and at full power, then a QoS
    feasible all-on point, are tried next.

    ``warm`` is a feasible solution of the same slot (e.g. under another
    cache); the iterations then start from its beamformers and clustering
    with the penalty already at its cap.
    """
    if requests.num_requested == 0:
        return _empty(requests, config)
    L = np.asarray(L, dtype=float)
    n_req, B = requests.num_requested, config.num_sbs
    if V_init is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        V_init = random_beams(requests, config, rng)
    starts = [lambda: V_init,
              lambda: matched_beams(requests, H, config, config.init_power_fraction),
              lambda: _feasible_start(requests, H, L, config, backend)]

    if warm is not None and warm.feasible:
        V_init = warm.V
    penalty = config.penalty_init if warm is None or not warm.feasible else config.penalty_max
    V = E = None
    trace: list[TraceRow] = []
    status = MAX_ITERATIONS
    omega_max = np.inf
    prev_obj = None
    E_local = np.full((n_req, B), config.cluster_init) if penalty < config.penalty_max else warm.E.astype(float)
    V_local = starts[0]()
    start_idx = 0
    it = 0
    while it < config.cccp_max_iter:
        try:
            prog = assemble_subproblem(L, requests, H, V_local, E_local, penalty, config)
            sol = solve(prog, config.solver_tol, backend)
            failure = None if sol.ok else sol.status
        except LinearizationError as exc:
            failure = str(exc)
        if failure is not None:
            while it == 0 and start_idx + 1 < len(starts):
                start_idx += 1
                V_local = starts[start_idx]()
                if V_local is not None:
                    break
            else:
                V_local = None
            if V_local is not None:
                log.debug("restarting CCCP from start %d: %s", start_idx, failure)
                continue
            log.debug("CCCP stopped at iteration %d: %s", it, failure)
            break
        x = sol.x
        V = beams_from_solution(prog, x, n_req, B, config.num_antennas)
        E = np.clip(x[prog.layout["e"]].reshape(n_req, B), 0.0, 1.0)
        w = x[prog.layout["w"]]
        omega_max = float(max(0.0, w.max()))
        obj = sol.objective
        trace.append(TraceRow(it, obj, penalty, omega_max))
        settled = (penalty >= config.penalty_max and prev_obj is not None
                   and prev_penalty >= config.penalty_max
                   and abs(obj - prev_obj) <= config.cccp_rel_tol * max(abs(prev_obj), 1e-12))
        V_local, E_local = V, E
        if settled and omega_max <= config.cccp_slack_tol:
            status = CONVERGED
            break
        if settled:
            # Stalled at a fractional point. Its rounded, polished neighbour has
            # zero slack; restart from it when that lowers the penalized objective.
            cand = round_and_polish(E, V, L, requests, H, config, backend)
            if cand.status == INFEASIBLE_SLOT or cand.power.total >= obj:
                break
            V_local, E_local = cand.V, cand.E
        prev_obj, prev_penalty = obj, penalty
        penalty = min(config.penalty_max, config.penalty_factor * penalty)
        it += 1

    if E is None:
        # no subproblem could be solved: try the all-on clustering directly
        E = np.ones((n_req, B))
        V = matched_beams(requests, H, config, 1.0)
        status = MAX_ITERATIONS
    result = round_and_polish(E, V, L, requests, H, config, backend)
    if result.status != INFEASIBLE_SLOT and config.flip_rounds:
        result = flip_search(result, L, H, config, backend)
    result.trace = trace
    result.omega_max = omega_max if trace else np.inf
    if result.status != INFEASIBLE_SLOT:
        result.status = status
    return result


def fixed_clustering_beamforming(E: np.ndarray, L: np.ndarray, requests: RequestSlot, H: np.ndarray,
                                 config: SystemConfig, V_local: np.ndarray | None = None,
                                 backend: str = "clarabel", passes: int = 5, restore_passes: int = 30):
    """Minimum edge-power beamformers for a binary clustering ``E``.

    Returns ``(V, power)`` or ``None`` when no feasible beamformer exists.
    Exact for singleton groups. Multicast groups re-linearize the QoS of
    non-reference members around the previous solution for up to
    ``passes`` rounds; the result is feasible but only locally optimal.
    """
    n_req, B, M = requests.num_requested, config.num_sbs, config.num_antennas
    E = (np.asarray(E) > 0.5).astype(float)
    if n_req == 0:
        return np.zeros((0, B, M), dtype=complex), PowerBreakdown(0.0, 0.0)
    for j, f in enumerate(requests.requested):
        if config.sinr_target[f] > 0 and not E[j].any():
            return None
    multicast = any(len(g) > 1 for f, g in requests.groups.items() if config.sinr_target[f] > 0)
    if multicast and V_local is None:
        V_local = matched_beams(requests, H, config, 1.0)
    best = None
    prev = None
    for it in range(passes if multicast else 1):
        prog = assemble_fixed_clustering(E, L, requests, H, config, V_local)
        sol = solve(prog, config.solver_tol, backend)
        if not sol.ok and it == 0 and multicast:
            V_local = _restore_feasibility(E, L, requests, H, config, V_local, backend, restore_passes)
            if V_local is None:
                return None
            prog = assemble_fixed_clustering(E, L, requests, H, config, V_local)
            sol = solve(prog, config.solver_tol, backend)
        if not sol.ok:
            break
        V = beams_from_solution(prog, sol.x, n_req, B, M)
        p = per_sbs_power(V)
        over = p > config.max_power
        if np.any(over):
            # clip interior-point overshoot of the power caps
            V[:, over] *= np.sqrt(config.max_power[over] / p[over])[None, :, None]
        V = _repair_qos(V, requests, H, config)
        power = total_power(L, V, E, requests.requested, config)
        best = (V, power)
        if prev is not None and prev - power.total <= 1e-5 * max(prev, 1e-12):
            break
        prev = power.total
        V_local = V
    return best


def _repair_qos(V: np.ndarray, requests: RequestSlot, H: np.ndarray, config: SystemConfig,
                max_growth: float = 1e-3) -> np.ndarray:
    """Scale all beams up just enough to absorb solver inaccuracy in the SINR targets.

    SINR(a V) = a^2 S / (a^2 I + N) grows with ``a``; the smallest ``a >= 1``
    meeting every target is found per user in closed form. Power caps are
    not rechecked here; the caller's QoS check covers them.
    """
    if V.shape[0] == 0:
        return V
    p = received_powers(H, V)
    col = {f: j for j, f in enumerate(requests.requested)}
    a2 = 1.0
    for k, f in enumerate(requests.assignment):
        gamma = config.sinr_target[f]
        if gamma <= 0:
            continue
        sig = p[k, col[f]]
        excess = sig - gamma * (p[k].sum() - sig)
        if excess <= 0:
            return V
        a2 = max(a2, gamma * config.noise_power[k] / excess * (1.0 + 1e-12))
    if a2 > 1.0 + max_growth:
        return V
    # only use the headroom left under the caps
    p_sbs = per_sbs_power(V)
    room = np.min(np.divide(config.max_power, p_sbs, out=np.full_like(p_sbs, np.inf), where=p_sbs > 0))
    return V * math.sqrt(min(a2, room))


def _restore_feasibility(E, L, requests, H, config, V_local, backend, passes: int = 30):
    """Minimize the slack of the expanded multicast constraints until it vanishes.

    Returns a local point at which the fixed-clustering program is feasible,
    or ``None`` if the slack does not reach zero.
    """
    if passes <= 0:
        return None
    weight = 1e3 * float(np.max(config.edge_slope)) * float(np.max(config.max_power))
    for _ in range(passes):
        prog = assemble_fixed_clustering(E, L, requests, H, config, V_local, slack_weight=weight)
        sol = solve(prog, config.solver_tol, backend)
        if not sol.ok:
            return None
        V_local = beams_from_solution(prog, sol.x, requests.num_requested, config.num_sbs,
                                      config.num_antennas)
        if np.max(sol.x[prog.layout["s"]], initial=0.0) <= 1e-9:
            return V_local
    return None


def _polish(E: np.ndarray, V_relaxed, L, requests, H, config, backend, flips=0, **effort):
    out = fixed_clustering_beamforming(E, L, requests, H, config, V_relaxed, backend, **effort)
    if out is None:
        return None
    V, power = out
    ok, _ = qos_satisfied(V, E, requests, H, config)
    if not ok:
        return None
    return DeliverySolution(requests, E.copy(), V, power, CONVERGED, flips=flips)


SUPPORT_THRESHOLD = 1e-6


def round_and_polish(E_relaxed: np.ndarray, V_relaxed: np.ndarray, L: np.ndarray, requests: RequestSlot,
                     H: np.ndarray, config: SystemConfig, backend: str = "clarabel") -> DeliverySolution:
    """Threshold at 0.5, then re-solve beamforming with the clustering fixed.

    The support of the relaxed clustering (entries above
    ``SUPPORT_THRESHOLD``) is polished as well and kept when it is cheaper:
    a nearby SBS may carry a beam so weak that its relaxed entry stays tiny.
    If neither is feasible, the largest sub-threshold relaxed entries are
    switched on one at a time (cumulatively) and the solve retried.
    """
    n_req, B = requests.num_requested, config.num_sbs
    E_relaxed = np.asarray(E_relaxed, dtype=float)
    E = (E_relaxed >= 0.5).astype(float)
    best = _polish(E, V_relaxed, L, requests, H, config, backend)
    support = (E_relaxed >= SUPPORT_THRESHOLD).astype(float)
    if not np.array_equal(support, E):
        alt = _polish(support, V_relaxed, L, requests, H, config, backend)
        if alt is not None and (best is None or alt.power.total < best.power.total):
            best = alt
    if best is None:
        off = np.flatnonzero(E.ravel() == 0)
        order = off[np.lexsort((off, -E_relaxed.ravel()[off]))]
        # every clustering is a restriction of the all-on one
        if len(order) and _polish(np.ones_like(E), V_relaxed, L, requests, H, config, backend) is not None:
            for flips in range(1, len(order) + 1):
                E.ravel()[order[flips - 1]] = 1.0
                best = _polish(E, V_relaxed, L, requests, H, config, backend, flips)
                if best is not None:
                    break
    if best is None:
        return DeliverySolution(requests, np.zeros((n_req, B)),
                                np.zeros((n_req, B, config.num_antennas), dtype=complex),
                                PowerBreakdown(0.0, 0.0), INFEASIBLE_SLOT, relaxed_E=E_relaxed)
    best.relaxed_E = E_relaxed
    return best


def flip_search(start: DeliverySolution, L: np.ndarray, H: np.ndarray, config: SystemConfig,
                backend: str = "clarabel") -> DeliverySolution:
    """First-improvement descent over single flips of the binary clustering.

    Each neighbour is priced by :func:`fixed_clustering_beamforming` with a
    reduced pass budget; the winner is re-polished at full effort. At most
    ``config.flip_rounds`` sweeps over all (file, SBS) entries are made; a
    sweep without improvement ends the search.
    """
    requests = start.requests
    best = start
    moved = False
    cost = fronthaul_cost(L, requests.requested, config)
    gamma = config.sinr_target[list(requests.requested)]
    for _ in range(config.flip_rounds):
        improved = False
        for j, b in np.ndindex(best.E.shape):
            E = best.E.copy()
            E[j, b] = 1.0 - E[j, b]
            if E[j, b] == 1.0 and cost[j, b] >= best.power.edge:
                continue  # added fronthaul alone outweighs all edge power
            if gamma[j] > 0 and not E[j].any():
                continue
            cand = _polish(E, best.V, L, requests, H, config, backend, best.flips + 1,
                           passes=1, restore_passes=0)
            if cand is not None and cand.power.total < best.power.total * (1.0 - 1e-9):
                best = cand
                improved = moved = True
        if not improved:
            break
    if moved:
        full = _polish(best.E, best.V, L, requests, H, config, backend, best.flips)
        if full is not None and full.power.total < best.power.total:
            best = full
    best.relaxed_E = start.relaxed_E
    return best


def write_trace(trace: list[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([row.iteration, repr(row.objective), repr(row.penalty), repr(row.omega_max)])
