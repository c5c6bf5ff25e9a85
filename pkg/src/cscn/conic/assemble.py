"""Assembly of the per-slot convex programs.

Two programs are built here:

* :func:`assemble_subproblem` -- the convex inner approximation solved at
  every penalty-CCCP iteration (beamformers, relaxed clustering and
  binarization slacks as variables).
* :func:`assemble_fixed_clustering` -- beamforming with a frozen binary
  clustering, used by the polish step and by the brute-force oracle.

Channels are whitened by the noise standard deviation of each user, so QoS
constraints read ``gamma * (interference + 1) <= signal``.
"""
from __future__ import annotations

import math

import numpy as np

from ..model import RequestSlot, SystemConfig
from ..physics import fronthaul_cost
from .program import NONNEG, SOC, ZERO, ConicProgram, ProgramBuilder, lift_functional


class LinearizationError(ValueError):
    """The local point makes some linearized QoS constraint unsatisfiable."""


class _Beams:
    """Column map for beamformer blocks v_{j,b}; inactive blocks get no columns."""

    def __init__(self, builder: ProgramBuilder, active: np.ndarray, M: int):
        self.M = M
        self.active = active
        n_req, B = active.shape
        self.start = -np.ones((n_req, B), dtype=int)
        self.jcols: list[np.ndarray] = []
        self.jmask: list[np.ndarray] = []
        for j in range(n_req):
            for b in range(B):
                if active[j, b]:
                    sl = builder.add_var(f"v[{j},{b}]", 2 * M)
                    self.start[j, b] = sl.start
            mask = np.repeat(active[j], 2 * M)
            self.jmask.append(mask)
            self.jcols.append(np.concatenate([self.cols(j, b) for b in np.flatnonzero(active[j])])
                              if mask.any() else np.zeros(0, dtype=int))

        # per beam column: owning request and position in the lifted (B, M) layout
        n = int(active.sum()) * 2 * M
        self.first = int(self.start[active].min()) if n else 0
        jb = np.argwhere(active)
        self.colj = np.repeat(jb[:, 0], 2 * M)
        self.pos = (jb[:, 1:2] * 2 * M + np.arange(2 * M)[None, :]).ravel()
        self.allcols = self.first + np.arange(n)

    def interference(self, re: np.ndarray, im: np.ndarray, j: int, row0: int, coef: float):
        """Triplets placing -coef Re/Im{h^H v_j'} for every j' != j in row pairs from ``row0``."""
        m = self.colj != j
        jj = self.colj[m]
        base = row0 + 2 * (jj - (jj > j))
        p = self.pos[m]
        cols = self.allcols[m]
        return (np.concatenate([base, base + 1]), np.concatenate([cols, cols]),
                -coef * np.concatenate([re[p], im[p]]))

    def cols(self, j: int, b: int) -> np.ndarray:
        s = self.start[j, b]
        return np.arange(s, s + 2 * self.M)

    def functional(self, hw: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Columns and rows of Re/Im{hw^H v_j} over the active blocks of j; hw is (B, M)."""
        re, im = lift_functional(hw)
        return self.take(j, re, im)

    def take(self, j: int, re: np.ndarray, im: np.ndarray):
        m = self.jmask[j]
        return self.jcols[j], re[m], im[m]


def whiten(H: np.ndarray, noise: np.ndarray) -> np.ndarray:
    return H / np.sqrt(np.asarray(noise, dtype=float))[:, None, None]


# caps inside the programs are tightened by this relative amount so that
# the post-solve SINR repair has headroom
CAP_BACKOFF = 1e-5


def _power_blocks(bld: ProgramBuilder, beams: _Beams, t_cols: np.ndarray, config: SystemConfig) -> None:
    """Epigraphs t_b >= sum_j ||v_{j,b}||^2 and the caps t_b <= P_b."""
    n_req, B = beams.active.shape
    span = np.arange(2 * beams.M)
    for b in range(B):
        st = beams.start[:, b]
        vcols = (st[st >= 0][:, None] + span[None, :]).ravel()
        nv = len(vcols)
        # ||(2 v, t - 1)|| <= t + 1
        rows = np.arange(nv) + 2
        bld.block(SOC, nv + 2, [([0, 1], [t_cols[b]] * 2, [-1.0, -1.0]), (rows, vcols, np.full(nv, -2.0))],
                  np.r_[1.0, -1.0, np.zeros(nv)], f"epigraph[{b}]")
    bld.block(NONNEG, B, [(np.arange(B), t_cols, np.ones(B))], config.max_power * (1.0 - CAP_BACKOFF), "cap")


def _rotated_qos(bld: ProgramBuilder, beams: _Beams, hw_k: np.ndarray, j: int, gamma: float,
                 v_local: np.ndarray, label: str, slack_col: int | None = None) -> None:
    """gamma (sum_{j' != j} |h^H v_j'|^2 + 1) <= y with y = 2 Re{c^* h^H v_j} - |c|^2, c = h^H v_j^(i).

    Written as ``||(2x, y/a - a)|| <= y/a + a`` with ``a = |c|`` so both
    cone heads are O(|c|) at the expansion point, then divided by ``||h||``;
    whitened gains span many orders of magnitude across users.
    """
    n_req = beams.active.shape[0]
    c = complex(np.vdot(hw_k.reshape(-1), v_local.reshape(-1)))
    a = max(abs(c), math.sqrt(gamma))
    scale = 1.0 / max(float(np.linalg.norm(hw_k)), 1e-300)
    re_all, im_all = lift_functional(hw_k)
    cols, re, im = beams.take(j, re_all, im_all)
    lin = 2.0 * (c.real * re + c.imag * im) / a * scale
    rows_total = 2 + 2 * (n_req - 1) + 1
    trips = [(np.zeros_like(cols), cols, -lin), (np.ones_like(cols), cols, -lin)]
    if slack_col is not None:
        # y is relaxed to y + s
        trips.append(([0, 1], [slack_col] * 2, [-scale / a] * 2))
    g2 = 2.0 * math.sqrt(gamma) * scale
    trips.append(beams.interference(re_all, im_all, j, 2, g2))
    h = np.zeros(rows_total)
    y0 = abs(c) ** 2 / a
    h[0], h[1], h[-1] = (a - y0) * scale, (-a - y0) * scale, g2
    bld.block(SOC, rows_total, trips, h, label)


def assemble_subproblem(L: np.ndarray, requests: RequestSlot, H: np.ndarray, V_local: np.ndarray,
                        E_local: np.ndarray, penalty: float, config: SystemConfig) -> ConicProgram:
    """Convex program solved at one penalty-CCCP iteration.

    Variables: v (lifted beamformers, all blocks), e (relaxed clustering),
    w (binarization slacks) and t (per-SBS transmit power epigraphs).
    The concave parts of the QoS and binarization constraints are replaced
    by their first-order expansions at ``(V_local, E_local)``.

    Raises :class:`LinearizationError` when some linearized QoS constraint
    cannot be met by any beamformer within the power caps.
    """
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    n_req = requests.num_requested
    B, M = config.num_sbs, config.num_antennas
    if V_local.shape != (n_req, B, M) or E_local.shape != (n_req, B):
        raise ValueError("local point does not match the slot dimensions")
    Hw = whiten(H, config.noise_power)
    files = requests.requested

    _check_linearization(Hw, requests, V_local, config)

    bld = ProgramBuilder()
    beams = _Beams(bld, np.ones((n_req, B), dtype=bool), M)
    e_sl = bld.add_var("e", n_req * B)
    w_sl = bld.add_var("w", n_req * B)
    t_sl = bld.add_var("t", B)
    e_cols = np.arange(e_sl.start, e_sl.stop).reshape(n_req, B)
    w_cols = np.arange(w_sl.start, w_sl.stop).reshape(n_req, B)
    t_cols = np.arange(t_sl.start, t_sl.stop)

    bld.cost(t_cols, config.edge_slope)
    bld.cost(e_cols.ravel(), fronthaul_cost(L, files, config).ravel())
    bld.cost(w_cols.ravel(), np.full(n_req * B, float(penalty)))

    # linearized binarization (e0^2 + (1 - 2 e0) e <= w), box 0 <= e <= 1 and w >= 0
    m = n_req * B
    idx = np.arange(m)
    e0 = np.asarray(E_local, dtype=float).ravel()
    bld.block(NONNEG, m, [(idx, e_cols.ravel(), 1.0 - 2.0 * e0), (idx, w_cols.ravel(), np.full(m, -1.0))],
              -e0 ** 2, "binarization")
    bld.block(NONNEG, 2 * m, [(idx, e_cols.ravel(), np.full(m, -1.0)), (idx + m, e_cols.ravel(), np.ones(m))],
              np.r_[np.zeros(m), np.ones(m)], "box")
    bld.block(NONNEG, m, [(idx, w_cols.ravel(), np.full(m, -1.0))], np.zeros(m), "slack")

    _power_blocks(bld, beams, t_cols, config)

    # ||v_{j,b}|| <= sqrt(P_b) e_{j,b}, one cone per (j, b)
    d = 2 * M + 1
    base = d * np.arange(m)
    heads_r, heads_c = base, e_cols.ravel()
    heads_v = -np.tile(np.sqrt(config.max_power), n_req)
    v0 = beams.start.ravel()
    tail_r = (base[:, None] + 1 + np.arange(2 * M)[None, :]).ravel()
    tail_c = (v0[:, None] + np.arange(2 * M)[None, :]).ravel()
    bld.blocks(SOC, [d] * m, np.r_[heads_r, tail_r], np.r_[heads_c, tail_c],
               np.r_[heads_v, np.full(tail_r.size, -1.0)], np.zeros(d * m),
               [f"cluster[{j},{b}]" for j in range(n_req) for b in range(B)])

    _qos_cones(bld, beams, Hw, requests, V_local, config)
    return bld.build()


def _qos_cones(bld: ProgramBuilder, beams: _Beams, Hw: np.ndarray, requests: RequestSlot,
               V_local: np.ndarray, config: SystemConfig) -> None:
    """All rotated QoS cones of the subproblem (every beamformer block present)."""
    n_req, B = beams.active.shape
    width = 2 * B * beams.M
    v0 = beams.start[:, 0]
    span = np.arange(width)
    d = 2 * n_req + 1
    users, js, gammas = [], [], []
    for j, f in enumerate(requests.requested):
        gamma = float(config.sinr_target[f])
        if gamma > 0:
            for k in requests.groups[f]:
                users.append(k)
                js.append(j)
                gammas.append(gamma)
    if not users:
        return
    n_u = len(users)
    hw = Hw[users].reshape(n_u, -1)
    re = np.empty((n_u, width))
    im = np.empty((n_u, width))
    re[:, 0::2], re[:, 1::2] = hw.real, hw.imag
    im[:, 0::2], im[:, 1::2] = -hw.imag, hw.real
    js = np.asarray(js)
    sg = np.sqrt(np.asarray(gammas))
    c = np.einsum("ui,ui->u", hw.conj(), V_local[js].reshape(n_u, -1))
    a = np.maximum(np.abs(c), sg)
    scale = 1.0 / np.maximum(np.linalg.norm(hw, axis=1), 1e-300)
    lin = 2.0 * (c.real[:, None] * re + c.imag[:, None] * im) * (scale / a)[:, None]
    g2 = 2.0 * sg * scale

    R, C, V = [], [], []
    h = np.zeros((n_u, d))
    for u in range(n_u):
        o = u * d
        cols = v0[js[u]] + span
        R += [np.full(width, o), np.full(width, o + 1)]
        C += [cols, cols]
        V += [-lin[u], -lin[u]]
        others = np.delete(np.arange(n_req), js[u])
        rows = o + 2 + 2 * np.arange(others.size)
        oc = (v0[others][:, None] + span[None, :]).ravel()
        R += [np.repeat(rows, width), np.repeat(rows + 1, width)]
        C += [oc, oc]
        V += [np.tile(-g2[u] * re[u], others.size), np.tile(-g2[u] * im[u], others.size)]
        y0 = abs(c[u]) ** 2 / a[u]
        h[u, 0], h[u, 1], h[u, -1] = (a[u] - y0) * scale[u], (-a[u] - y0) * scale[u], g2[u]
    bld.blocks(SOC, [d] * n_u, np.concatenate(R), np.concatenate(C), np.concatenate(V), h,
               [f"qos[{k}]" for k in users])


def _check_linearization(Hw: np.ndarray, requests: RequestSlot, V_local: np.ndarray,
                         config: SystemConfig) -> None:
    sqrt_p = np.sqrt(config.max_power)
    for j, f in enumerate(requests.requested):
        gamma = float(config.sinr_target[f])
        if gamma <= 0:
            continue
        for k in requests.groups[f]:
            c = abs(np.vdot(Hw[k].reshape(-1), V_local[j].reshape(-1)))
            best = 2.0 * c * float(np.sum(np.linalg.norm(Hw[k], axis=1) * sqrt_p)) - c ** 2
            if best < gamma:
                raise LinearizationError(
                    f"user {k}: linearized signal term at most {best:.3g} < target {gamma:.3g}")


def assemble_fixed_clustering(E: np.ndarray, L: np.ndarray, requests: RequestSlot, H: np.ndarray,
                              config: SystemConfig, V_local: np.ndarray | None = None,
                              slack_weight: float | None = None) -> ConicProgram:
    """Minimum edge-power beamforming for a frozen binary clustering ``E``.

    Beamformer blocks with ``E[j, b] == 0`` have no variables at all. The
    first member of each group is phase-aligned (``h^H v_j`` real and
    nonnegative), which makes its QoS constraint a second-order cone; this
    is exact for singleton groups. Further members of multicast groups use
    the CCCP expansion at ``V_local`` (rotated to the same phase reference).
    The fronthaul cost of ``E`` is carried as the objective offset.

    With ``slack_weight`` the expanded constraints get nonnegative slacks
    (variable ``s``) priced at that weight, so the program is always
    feasible; this is used to walk from a poor local point to a feasible one.
    """
    n_req = requests.num_requested
    B, M = config.num_sbs, config.num_antennas
    E = np.asarray(E)
    if E.shape != (n_req, B):
        raise ValueError("clustering does not match the slot dimensions")
    active = E > 0.5
    Hw = whiten(H, config.noise_power)
    files = requests.requested

    bld = ProgramBuilder()
    beams = _Beams(bld, active, M)
    t_sl = bld.add_var("t", B)
    t_cols = np.arange(t_sl.start, t_sl.stop)
    bld.cost(t_cols, config.edge_slope)
    bld.offset = float(np.sum(fronthaul_cost(L, files, config) * active))
    _power_blocks(bld, beams, t_cols, config)
    slack_cols = iter(())
    if slack_weight is not None:
        n_s = sum(len(requests.groups[f]) - 1 for f in files if config.sinr_target[f] > 0)
        s_sl = bld.add_var("s", n_s)
        s_all = np.arange(s_sl.start, s_sl.stop)
        bld.cost(s_all, np.full(n_s, float(slack_weight)))
        bld.block(NONNEG, n_s, [(np.arange(n_s), s_all, np.full(n_s, -1.0))], np.zeros(n_s), "s>=0")
        slack_cols = iter(s_all)

    for j, f in enumerate(files):
        gamma = float(config.sinr_target[f])
        if gamma <= 0:
            continue
        members = requests.groups[f]
        ref = members[0]
        scale = 1.0 / max(float(np.linalg.norm(Hw[ref])), 1e-300)
        re_all, im_all = lift_functional(Hw[ref] * scale)
        cols, re, im = beams.take(j, re_all, im_all)
        bld.block(ZERO, 1, [(np.zeros_like(cols), cols, im)], [0.0], f"phase[{ref}]")
        g = math.sqrt(gamma)
        rows = [(np.zeros_like(cols), cols, -re), beams.interference(re_all, im_all, j, 1, g)]
        r = 1 + 2 * (n_req - 1)
        h = np.zeros(r + 1)
        h[-1] = g * scale
        bld.block(SOC, r + 1, rows, h, f"qos[{ref}]")
        if len(members) > 1:
            if V_local is None:
                raise ValueError("multicast groups need a local point")
            v_loc = np.where(active[j][:, None], V_local[j], 0.0)
            c = np.vdot(Hw[ref].reshape(-1), v_loc.reshape(-1))
            if abs(c) > 0:
                v_loc = v_loc * (abs(c) / c)
            for k in members[1:]:
                _rotated_qos(bld, beams, Hw[k], j, gamma, v_loc, f"qos[{k}]", next(slack_cols, None))
    return bld.build()


def beams_from_solution(program: ConicProgram, x: np.ndarray, n_req: int, B: int, M: int) -> np.ndarray:
    """Unpack beamformer blocks (missing blocks are exact zeros)."""
    V = np.zeros((n_req, B, M), dtype=complex)
    for name, sl in program.layout.items():
        if name.startswith("v["):
            j, b = (int(s) for s in name[2:-1].split(","))
            V[j, b] = x[sl][0::2] + 1j * x[sl][1::2]
    return V
