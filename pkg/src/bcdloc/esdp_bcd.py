"""Anchored edge-based SDP relaxation solved by robot-wise exact BCD.

The lifted variable is the realization ``p`` together with the Gram-like
entries of ``X`` that any measurement or sensor pair touches: the diagonal,
one intra-robot entry per robot and one cross entry per measurement. Every
such pair carries the condition

    [[X_aa, X_ab, p_a^T], [X_ab, X_bb, p_b^T], [p_a, p_b, I]] >= 0,

and anchors (fixed, imperfect positions) remove the gauge freedom. Each robot
block is a small convex program, solved here with a log-barrier Newton
method; the result then seeds a BM-BCD refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import null_space

from . import engine
from .bm_bcd import BmConfig, SolveResult, run_bm_bcd
from .numerics import min_eig
from .recover_metrics import recover_poses, rmse_abs

E_FLOOR = 1e-8


class SubproblemError(RuntimeError):
    """Barrier Newton failure; ``last`` holds the final iterate."""

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass
class EsdpState:
    p: np.ndarray
    x_diag: np.ndarray
    x_intra: np.ndarray
    x_edge: np.ndarray

    def copy(self):
        return EsdpState(self.p.copy(), self.x_diag.copy(), self.x_intra.copy(), self.x_edge.copy())


@dataclass
class BarrierConfig:
    mu0: float = 1.0
    factor: float = 0.1
    tol: float = 1e-8
    newton_tol: float = 1e-9
    max_newton: int = 50

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("barrier decrease factor must lie in (0, 1)")
        if self.mu0 <= 0 or self.tol <= 0 or self.newton_tol <= 0:
            raise ValueError("barrier weight and tolerances must be positive")


@dataclass
class EsdpConfig:
    """Tunables for ESDP-BCD.

    ``mode`` is ``"overlap"`` (each cross entry belongs to both endpoint
    robots) or ``"strict"`` (only the smaller robot id updates it).
    ``refine=None`` skips the BM-BCD refinement.
    """

    eps: float = 5e-2
    max_iter: int = 100
    mode: str = "overlap"
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    refine: BmConfig | None = field(default_factory=BmConfig)
    parallel: bool = False
    seed: int | None = 0

    def __post_init__(self):
        if self.mode not in ("overlap", "strict"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


# -- incidence ----------------------------------------------------------------

class _Incidence:
    """Per-robot lists of graph measurements and anchor-other measurements."""

    def __init__(self, inst):
        g, anc = inst.graph, inst.anchors
        self.anchor_robots = set(int(r) for r in anc.robots)
        self.anchor_pos = {int(s): anc.points[:, k] for k, s in enumerate(anc.sensors)}
        self.graph_meas = [[] for _ in range(inst.n)]
        for m, (a, b) in enumerate(zip(g.a, g.b)):
            self.graph_meas[a // 2].append(m)
            self.graph_meas[b // 2].append(m)
        self.anchor_meas = [[] for _ in range(inst.n)]
        for m, other in enumerate(anc.b):
            self.anchor_meas[int(other) // 2].append(m)


def _incidence(inst):
    cached = getattr(inst, "_esdp_incidence", None)
    if cached is None:
        cached = _Incidence(inst)
        inst._esdp_incidence = cached
    return cached


# -- state ----------------------------------------------------------------------

def relaxation_error(state: EsdpState, sensor) -> float:
    """``x_diag - |p|^2`` of a sensor, floored at ``1e-8 * max(1, x_diag)``."""
    k = sensor if isinstance(sensor, (int, np.integer)) else sensor.flat
    x = state.x_diag[k]
    return float(max(x - state.p[:, k] @ state.p[:, k], E_FLOOR * max(1.0, x)))


def _baseline(inst, i, current):
    """Sensor baseline ``p0 - p1`` satisfying the z equality, strictly inside the norm one."""
    d = inst.d
    dnu = inst.dnu[i]
    if d == 3:
        dz = inst.dz[i]
        horiz = np.sqrt(max((dnu - dz * dz) / 2, 0.0))
        h = current[:2]
        h = h / np.linalg.norm(h) if np.linalg.norm(h) > 1e-12 else np.array([1.0, 0.0])
        delta = np.array([horiz * h[0], horiz * h[1], dz])
    else:
        h = current / np.linalg.norm(current) if np.linalg.norm(current) > 1e-12 else np.array([1.0, 0.0])
        delta = np.sqrt(dnu / 2) * h
    return delta, (dnu - delta @ delta) / 2


def initial_state(inst, p0=None, seed=None) -> EsdpState:
    """Strictly feasible starting state.

    ``p0`` defaults to the anchors' centroid plus Gaussian scatter of scale
    ``b``. Every non-anchor robot is rebuilt around its center so its
    equalities hold, cross entries are Gram values and the diagonal is
    inflated by one (the intra entry too, which keeps the equality).
    Anchors sit at their estimates with tight Gram entries.
    """
    inc = _incidence(inst)
    d, n = inst.d, inst.n
    if p0 is None:
        if not inc.anchor_pos:
            raise ValueError("ESDP needs at least one anchor")
        rng = np.random.default_rng(seed)
        center = np.mean(inst.anchors.points, axis=1)
        p0 = center[:, None] + inst.spacing * rng.normal(size=(d, 2 * n))
    p = np.array(p0, dtype=float, copy=True)
    x_diag = np.zeros(2 * n)
    x_intra = np.zeros(n)
    for i in range(n):
        k0, k1 = 2 * i, 2 * i + 1
        if i in inc.anchor_robots:
            p[:, k0], p[:, k1] = inc.anchor_pos[k0], inc.anchor_pos[k1]
            x_diag[k0], x_diag[k1] = p[:, k0] @ p[:, k0], p[:, k1] @ p[:, k1]
            x_intra[i] = p[:, k0] @ p[:, k1]
            continue
        mid = 0.5 * (p[:, k0] + p[:, k1])
        delta, slack = _baseline(inst, i, p[:, k0] - p[:, k1])
        p[:, k0], p[:, k1] = mid + delta / 2, mid - delta / 2
        x_diag[k0] = p[:, k0] @ p[:, k0] + slack + 1.0
        x_diag[k1] = p[:, k1] @ p[:, k1] + slack + 1.0
        x_intra[i] = p[:, k0] @ p[:, k1] + 1.0
    g = inst.graph
    x_edge = np.sum(p[:, g.a] * p[:, g.b], axis=0)
    return EsdpState(p, x_diag, x_intra, x_edge)


def cost_G(state: EsdpState, inst) -> float:
    """Weighted squared residuals over graph and anchor-other measurements.

    Cross entries with an anchor endpoint are the eliminated values
    ``a_hat . p``; anchor-anchor measurements are constants and left out.
    """
    inc = _incidence(inst)
    g, anc = inst.graph, inst.anchors
    p = state.p
    total = 0.0
    for m, (a, b) in enumerate(zip(g.a, g.b)):
        ra, rb = a // 2 in inc.anchor_robots, b // 2 in inc.anchor_robots
        if ra and rb:
            continue
        if ra or rb:
            x_ab = p[:, a] @ p[:, b]
        else:
            x_ab = state.x_edge[m]
        res = state.x_diag[a] - 2 * x_ab + state.x_diag[b] - g.q[m]
        total += res * res / g.sigma_q[m] ** 2
    for m, (s, o) in enumerate(zip(anc.a, anc.b)):
        ahat = inc.anchor_pos[int(s)]
        res = state.x_diag[o] - 2 * ahat @ p[:, o] + ahat @ ahat - anc.q[m]
        total += res * res / anc.sigma_q[m] ** 2
    return float(total)


def psd_blocks(state: EsdpState, inst, robots=None):
    """Smallest eigenvalue of every Eq.-style pair matrix, keyed by sensor pair.

    Pairs are the intra-robot pairs and every graph measurement; with
    ``robots`` given, only pairs touching those robots are returned.
    """
    d = inst.d
    p = state.p
    g = inst.graph
    pairs = []
    for i in range(inst.n):
        pairs.append((2 * i, 2 * i + 1, state.x_intra[i]))
    for m, (a, b) in enumerate(zip(g.a, g.b)):
        pairs.append((int(a), int(b), state.x_edge[m]))
    out = {}
    for a, b, xab in pairs:
        if robots is not None and a // 2 not in robots and b // 2 not in robots:
            continue
        M = np.zeros((d + 2, d + 2))
        M[0, 0], M[1, 1], M[0, 1] = state.x_diag[a], state.x_diag[b], xab
        M[0, 2:], M[1, 2:] = p[:, a], p[:, b]
        M[2:, 2:] = np.eye(d)
        M = np.triu(M) + np.triu(M, 1).T
        out[(a, b)] = float(min_eig(M))
    return out


# -- subproblem ---------------------------------------------------------------

@dataclass
class SubproblemModel:
    """Convex block program of one robot.

    Variables ``z = [p0, p1, x0, x1, x01, x_e...]``. The objective is
    ``sum w (L z + c)^2``, the equalities ``E z = f``. Edge constraints
    ``e_hat (x_u - |p_u|^2) - (x_e - p_u . p_j)^2 > 0`` address their local
    variables through ``e_idx`` (``[p_u..., x_u, x_e]``); a fixed cross entry
    points at the dummy slot ``nv`` and takes its value from ``e_xe``.
    """

    robot: int
    d: int
    nv: int
    L: np.ndarray
    c: np.ndarray
    w: np.ndarray
    E: np.ndarray
    f: np.ndarray
    e_idx: np.ndarray
    e_pj: np.ndarray
    e_hat: np.ndarray
    e_fixed: np.ndarray
    e_xe: np.ndarray
    z0: np.ndarray
    edge_meas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    anchor_meas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def n_ineq(self):
        return 3 + len(self.e_hat)

    def objective(self, z):
        r = self.L @ z + self.c
        return float(np.sum(self.w * r * r))


def assemble_subproblem(state: EsdpState, robot: int, inst, mode="overlap") -> SubproblemModel:
    """Build robot ``robot``'s block program from the (fixed) neighbour data."""
    inc = _incidence(inst)
    if robot in inc.anchor_robots:
        raise ValueError(f"robot {robot} is an anchor and never updates")
    g, anc = inst.graph, inst.anchors
    if not inc.graph_meas[robot] and not inc.anchor_meas[robot]:
        raise ValueError(f"unconstrained block: robot {robot} has no measurements")
    d = inst.d
    i = robot
    p, xd = state.p, state.x_diag
    base = 2 * d + 3
    var_edges, rows = [], []
    # edge bookkeeping: (own sensor u, neighbour sensor, measurement, slot or None)
    edges = []
    for m in inc.graph_meas[i]:
        a, b = int(g.a[m]), int(g.b[m])
        own, other = (a, b) if a // 2 == i else (b, a)
        u = own % 2
        j = other // 2
        if j in inc.anchor_robots:
            ahat = inc.anchor_pos[other]
            rows.append((u, ahat, None, ahat @ ahat - g.q[m], g.sigma_q[m]))
            continue
        variable = mode == "overlap" or min(i, j) == i
        slot = base + len(var_edges) if variable else None
        if variable:
            var_edges.append(m)
        edges.append((u, other, m, slot))
        rows.append((u, None, slot, xd[other] - g.q[m] - (0 if variable else 2 * state.x_edge[m]), g.sigma_q[m]))
    for m in inc.anchor_meas[i]:
        s, o = int(anc.a[m]), int(anc.b[m])
        ahat = inc.anchor_pos[s]
        rows.append((o % 2, ahat, None, ahat @ ahat - anc.q[m], anc.sigma_q[m]))
    nv = base + len(var_edges)

    L = np.zeros((len(rows), nv))
    c = np.zeros(len(rows))
    w = np.zeros(len(rows))
    for r, (u, ahat, slot, const, sq) in enumerate(rows):
        L[r, 2 * d + u] = 1.0
        if ahat is not None:
            L[r, u * d : (u + 1) * d] = -2 * ahat
        if slot is not None:
            L[r, slot] = -2.0
        c[r] = const
        w[r] = 1.0 / sq**2

    E = np.zeros((2 if d == 3 else 1, nv))
    E[0, 2 * d], E[0, 2 * d + 1], E[0, 2 * d + 2] = 1.0, 1.0, -2.0
    f = [inst.dnu[i]]
    if d == 3:
        E[1, 2], E[1, d + 2] = 1.0, -1.0
        f.append(inst.dz[i])

    e_idx = np.zeros((len(edges), d + 2), dtype=int)
    e_pj = np.zeros((len(edges), d))
    e_hat = np.zeros(len(edges))
    e_fixed = np.zeros(len(edges), dtype=bool)
    e_xe = np.zeros(len(edges))
    for k, (u, other, m, slot) in enumerate(edges):
        e_idx[k, :d] = np.arange(u * d, (u + 1) * d)
        e_idx[k, d] = 2 * d + u
        e_idx[k, d + 1] = nv if slot is None else slot
        e_pj[k] = p[:, other]
        e_hat[k] = relaxation_error(state, other)
        e_fixed[k] = slot is None
        e_xe[k] = state.x_edge[m]

    model = SubproblemModel(
        robot=i, d=d, nv=nv, L=L, c=c, w=w, E=E, f=np.array(f),
        e_idx=e_idx, e_pj=e_pj, e_hat=e_hat, e_fixed=e_fixed, e_xe=e_xe,
        z0=np.zeros(nv), edge_meas=np.array(var_edges, dtype=int),
        anchor_meas=np.array(inc.anchor_meas[i], dtype=int),
    )
    model.z0 = _feasible_start(model, state, inst)
    return model


def _feasible_start(model, state, inst):
    d, i = model.d, model.robot
    k0, k1 = 2 * i, 2 * i + 1
    P = state.p
    mid = 0.5 * (P[:, k0] + P[:, k1])
    delta, slack = _baseline(inst, i, P[:, k0] - P[:, k1])
    p0, p1 = mid + delta / 2, mid - delta / 2
    z = np.zeros(model.nv)
    z[:d], z[d : 2 * d] = p0, p1
    z[2 * d] = p0 @ p0 + slack
    z[2 * d + 1] = p1 @ p1 + slack
    z[2 * d + 2] = p0 @ p1
    pu = np.where((model.e_idx[:, 0] < d)[:, None], p0, p1)
    inner = np.sum(pu * model.e_pj, axis=1)
    free = ~model.e_fixed
    z[model.e_idx[free, d + 1]] = inner[free]
    if np.any(model.e_fixed):
        # fixed cross entries: lift x0, x1, x01 together (keeps the equality)
        r = model.e_xe[model.e_fixed] - inner[model.e_fixed]
        need = np.max(2 * r * r / model.e_hat[model.e_fixed]) - slack
        if need > 0:
            z[2 * d : 2 * d + 3] += need
    return z


def _values(model, z):
    d = model.d
    zz = np.append(z, 0.0)
    p0, p1 = z[:d], z[d : 2 * d]
    s0, s1 = z[2 * d] - p0 @ p0, z[2 * d + 1] - p1 @ p1
    cc = z[2 * d + 2] - p0 @ p1
    pu = zz[model.e_idx[:, :d]]
    xu = zz[model.e_idx[:, d]]
    xe = np.where(model.e_fixed, model.e_xe, zz[model.e_idx[:, d + 1]])
    r = xe - np.sum(pu * model.e_pj, axis=1)
    ge = model.e_hat * (xu - np.sum(pu * pu, axis=1)) - r * r
    return np.concatenate([[s0, s1, s0 * s1 - cc * cc], ge]), (pu, r)


def _phi(model, z, mu):
    g, _ = _values(model, z)
    if np.any(g <= 0):
        return np.inf
    return model.objective(z) - mu * float(np.sum(np.log(g)))


def _grad_hess(model, z, mu):
    d, nv = model.d, model.nv
    res = model.L @ z + model.c
    grad = np.zeros(nv + 1)
    H = np.zeros((nv + 1, nv + 1))
    grad[:nv] = 2 * model.L.T @ (model.w * res)
    H[:nv, :nv] = 2 * (model.L.T * model.w) @ model.L

    g, (pu, r) = _values(model, z)
    p0, p1 = z[:d], z[d : 2 * d]
    s0, s1, det = g[0], g[1], g[2]
    cc = z[2 * d + 2] - p0 @ p1
    n_loc = 2 * d + 3
    I = np.eye(d)

    # the two diagonal slacks
    for u, p_u, s in ((0, p0, s0), (1, p1, s1)):
        gl = np.zeros(n_loc)
        gl[u * d : (u + 1) * d] = -2 * p_u
        gl[2 * d + u] = 1.0
        Hl = np.zeros((n_loc, n_loc))
        Hl[u * d : (u + 1) * d, u * d : (u + 1) * d] = -2 * I
        grad[:n_loc] -= mu * gl / s
        H[:n_loc, :n_loc] += mu * (np.outer(gl, gl) / s**2 - Hl / s)

    # intra-robot determinant
    ds0 = np.zeros(n_loc)
    ds0[:d], ds0[2 * d] = -2 * p0, 1.0
    ds1 = np.zeros(n_loc)
    ds1[d : 2 * d], ds1[2 * d + 1] = -2 * p1, 1.0
    dc = np.zeros(n_loc)
    dc[:d], dc[d : 2 * d], dc[2 * d + 2] = -p1, -p0, 1.0
    H0 = np.zeros((n_loc, n_loc))
    H0[:d, :d] = -2 * I
    H1 = np.zeros((n_loc, n_loc))
    H1[d : 2 * d, d : 2 * d] = -2 * I
    Hc = np.zeros((n_loc, n_loc))
    Hc[:d, d : 2 * d] = -I
    Hc[d : 2 * d, :d] = -I
    gl = s1 * ds0 + s0 * ds1 - 2 * cc * dc
    Hl = (
        np.outer(ds0, ds1) + np.outer(ds1, ds0) + s1 * H0 + s0 * H1
        - 2 * np.outer(dc, dc) - 2 * cc * Hc
    )
    grad[:n_loc] -= mu * gl / det
    H[:n_loc, :n_loc] += mu * (np.outer(gl, gl) / det**2 - Hl / det)

    # neighbour edges
    ne = len(model.e_hat)
    if ne:
        ge = g[3:]
        eh = model.e_hat
        pj = model.e_pj
        gl = np.zeros((ne, d + 2))
        gl[:, :d] = -2 * eh[:, None] * pu + 2 * r[:, None] * pj
        gl[:, d] = eh
        gl[:, d + 1] = -2 * r
        Hl = np.zeros((ne, d + 2, d + 2))
        Hl[:, :d, :d] = -2 * eh[:, None, None] * I - 2 * pj[:, :, None] * pj[:, None, :]
        Hl[:, :d, d + 1] = 2 * pj
        Hl[:, d + 1, :d] = 2 * pj
        Hl[:, d + 1, d + 1] = -2.0
        gb = -gl / ge[:, None]
        Hb = gl[:, :, None] * gl[:, None, :] / (ge**2)[:, None, None] - Hl / ge[:, None, None]
        idx = model.e_idx
        np.add.at(grad, idx, mu * gb)
        np.add.at(H, (idx[:, :, None], idx[:, None, :]), mu * Hb)
    return grad[:nv], H[:nv, :nv]


def solve_subproblem(model: SubproblemModel, cfg: BarrierConfig | None = None):
    """Minimize the block program by a log-barrier path with equality-constrained Newton steps.

    Starts at the strictly feasible ``model.z0`` and works in the null space of
    ``E``, so the equalities hold to rounding throughout. The barrier weight
    starts relative to ``max(1, objective(z0))``; the stopping gap is measured
    against ``max(1, objective(z))`` at the current iterate.
    Returns the final ``z``.
    """
    cfg = cfg or BarrierConfig()
    z = model.z0.copy()
    if np.any(_values(model, z)[0] <= 0):
        raise SubproblemError("starting point is not strictly feasible", z)
    N = null_space(model.E)
    # the barrier weight starts relative to the objective's size; the gap
    # target follows the current objective so small optima stay accurate
    scale = max(model.objective(z), 1.0)
    mu = cfg.mu0 * scale
    m = model.n_ineq
    while True:
        for _ in range(cfg.max_newton):
            grad, H = _grad_hess(model, z, mu)
            gN = N.T @ grad
            HN = N.T @ H @ N
            try:
                dy = -np.linalg.solve(HN, gN)
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(HN, gN, rcond=None)[0]
            dec = -gN @ dy
            if not np.isfinite(dec):
                raise SubproblemError(f"robot {model.robot}: Newton step is not finite", z)
            # reduced-gradient (KKT) residual, relative to the current objective
            if np.linalg.norm(gN) <= cfg.newton_tol * max(model.objective(z), 1.0) or dec / 2 <= 1e-16 * scale:
                break
            dz = N @ dy
            phi0 = _phi(model, z, mu)
            t = 1.0
            for _ls in range(60):
                cand = z + t * dz
                val = _phi(model, cand, mu)
                if val <= phi0 - 0.25 * t * dec:
                    break
                t *= 0.5
            else:
                # no progress possible at this weight: numerically converged
                break
            z = cand
        if mu * m < cfg.tol * max(model.objective(z), 1.0):
            return z
        mu *= cfg.factor


def _apply(state, model, z, inst):
    d, i = model.d, model.robot
    k0, k1 = 2 * i, 2 * i + 1
    state.p[:, k0], state.p[:, k1] = z[:d], z[d : 2 * d]
    state.x_diag[k0], state.x_diag[k1] = z[2 * d], z[2 * d + 1]
    state.x_intra[i] = z[2 * d + 2]
    if len(model.edge_meas):
        state.x_edge[model.edge_meas] = z[2 * d + 3 :]
    # anchor cross entries follow the elimination x = a_hat . p
    inc = _incidence(inst)
    g = inst.graph
    for m in inc.graph_meas[i]:
        a, b = int(g.a[m]), int(g.b[m])
        if a // 2 in inc.anchor_robots or b // 2 in inc.anchor_robots:
            state.x_edge[m] = state.p[:, a] @ state.p[:, b]


class _EsdpAdapter:
    def __init__(self, inst, state, cfg, on_block=None):
        self.inst = inst
        self.state = state
        self.cfg = cfg
        self.stop = None
        self.phase = "esdp"
        self.hook = on_block

    def live(self):
        return self.state

    def snapshot(self):
        return self.state.copy()

    def solve(self, key, state):
        model = assemble_subproblem(state, key, self.inst, self.cfg.mode)
        return model, solve_subproblem(model, self.cfg.barrier)

    def write(self, key, value):
        model, z = value
        _apply(self.state, model, z, self.inst)

    def end_sweep(self, sweep):
        return self.stop(sweep)

    def on_block(self, key):
        if self.hook is not None:
            self.hook(self.phase, key, self)


def robot_classes(inst):
    """Color classes over non-anchor robots; graph neighbours never share a color."""
    inc = _incidence(inst)
    free = [i for i in range(inst.n) if i not in inc.anchor_robots]
    graph = {i: {j for j in inst.graph.neighbors[i] if j not in inc.anchor_robots} for i in free}
    return engine.greedy_coloring(graph)


def run_esdp_bcd(inst, cfg: EsdpConfig | None = None, p0=None, on_block=None) -> SolveResult:
    """ESDP-BCD followed by BM-BCD refinement.

    Parameters
    ----------
    inst : ProblemInstance
        Must carry at least one anchor.
    cfg : EsdpConfig, optional
    p0 : (d, 2n) ndarray, optional
        Initial realization (only seeds the state; the relaxation is convex).
    on_block : callable, optional
        ``on_block(phase, key, adapter)`` after every block solve, ESDP and
        refinement alike.

    Returns
    -------
    SolveResult
        ``stats.iterations`` is the ESDP plus refinement total;
        ``info["k"]`` gives the ``"k_esdp+k_refine"`` split and
        ``info["p_esdp"]`` the pre-refinement realization.
    """
    cfg = cfg or EsdpConfig()
    if len(inst.anchors) == 0:
        raise ValueError("ESDP-BCD needs at least one anchor")
    if not inst.graph.is_connected():
        raise ValueError("measurement graph must be connected")
    state = initial_state(inst, p0, cfg.seed)
    adapter = _EsdpAdapter(inst, state, cfg, on_block)
    prev = {"p": state.p.copy()}

    def stop(sweep):
        p = adapter.state.p
        den = np.linalg.norm(prev["p"])
        change = np.linalg.norm(p - prev["p"]) / den if den > 0 else 0.0
        prev["p"] = p.copy()
        return change <= cfg.eps

    adapter.stop = stop
    classes = robot_classes(inst)
    phase = engine.run_bcd(adapter, classes, cfg.max_iter, cfg.parallel, on_block=adapter.on_block)
    stats = engine.RoundStats(colors=len(classes))
    stats.add("esdp", phase)
    p_esdp = adapter.state.p.copy()
    info = {
        "state": adapter.state,
        "p_esdp": p_esdp,
        "objective_G": cost_G(adapter.state, inst),
    }
    free = [i for i in range(inst.n) if i not in _incidence(inst).anchor_robots]
    if inst.truth is not None and free:
        info["rmse_a"] = rmse_abs(p_esdp, inst.truth.p, free)

    if cfg.refine is None:
        stats.objective = info["objective_G"]
        info["k"] = f"{phase.iterations}+0"
        return SolveResult(p_esdp, recover_poses(p_esdp, inst), stats, info)

    refine_cfg = cfg.refine if cfg.refine.r is not None else replace(cfg.refine, r=inst.d + 1)
    refined = run_bm_bcd(inst, p_esdp, replace(refine_cfg, parallel=cfg.parallel), on_block)
    stats.merge(refined.stats, prefix="refine/")
    stats.objective = refined.stats.objective
    info["k"] = f"{phase.iterations}+{refined.stats.iterations}"
    info["refine"] = refined.info
    return SolveResult(refined.p, refined.poses, stats, info)
