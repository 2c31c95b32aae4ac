"""Burer-Monteiro factorized localization solved by exact column-wise BCD.

The decision variables are two ``r x 2n`` factors ``U`` and ``V`` with a
fixed projection ``Q = [I_d; 0]``; ``Q.T @ U`` is the sensor realization.
The cost couples them bilinearly,

    F = sum_m w_m ((U_a - U_b).(V_a - V_b) - q_m)^2
      + sum_i w_nu_i ((U_i0 - U_i1).(V_i0 - V_i1) - dnu_i)^2
      + sum_i w_z_i / 2 ((z(U_i0) - z(U_i1) - dz_i)^2 + (z(V_i0) - z(V_i1) - dz_i)^2)
      + sum_i gamma_i |U_i - V_i|^2

so each column minimization is an ``r x r`` SPD linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import engine
from .model import dz_sensitivity
from .numerics import solve_spd
from .recover_metrics import recover_poses

Z_ROW = 2


@dataclass
class FactorPair:
    U: np.ndarray
    V: np.ndarray
    d: int

    @property
    def r(self):
        return self.U.shape[0]

    @property
    def Q(self):
        return np.eye(self.r, self.d)

    @property
    def p(self):
        """Realization ``Q.T @ U`` (``U`` and ``V`` agree after averaging)."""
        return self.U[: self.d].copy()

    def copy(self):
        return FactorPair(self.U.copy(), self.V.copy(), self.d)

    def averaged(self):
        M = 0.5 * (self.U + self.V)
        return FactorPair(M, M.copy(), self.d)


@dataclass
class PenaltyState:
    sigma_nu: np.ndarray
    sigma_z: np.ndarray
    gamma: np.ndarray
    mu_l: float = 1 / 20
    mu_z: float = 1 / 20
    n_c: int = 3

    @property
    def w_nu(self):
        return 1.0 / self.sigma_nu**2

    @property
    def w_z(self):
        return 1.0 / self.sigma_z**2

    def shrink(self):
        self.sigma_nu = np.sqrt(self.mu_l) * self.sigma_nu
        self.sigma_z = np.sqrt(self.mu_z) * self.sigma_z

    def copy(self):
        return replace(
            self, sigma_nu=self.sigma_nu.copy(), sigma_z=self.sigma_z.copy(), gamma=self.gamma.copy()
        )


@dataclass
class BmConfig:
    """Tunables for BM-BCD.

    ``r=None`` means ``d + 1``. During the dynamic-gamma phase a robot whose
    local objective fell by less than ``gamma_progress`` (relative) in a sweep
    multiplies its ``gamma_i`` by ``gamma_factor``, clipped to
    ``[gamma_floor, gamma_ceil]`` times its initial value. ``gamma_mode`` is
    ``"per_robot"`` or ``"global"``.
    """

    r: int | None = None
    eps: float = 5e-4
    eps_F: float = 1e-3
    mu_l: float = 1 / 20
    mu_z: float = 1 / 20
    n_c: int = 3
    gamma_scale: float = 10.0
    gamma_factor: float = 2.0
    gamma_progress: float = 0.01
    gamma_floor: float = 1e-6
    gamma_ceil: float = 10.0
    gamma_mode: str = "per_robot"
    lift_scale: float = 0.1
    max_dynamic: int = 500
    max_continuation: int = 500
    max_refine: int = 1000
    refine: bool = True
    parallel: bool = False
    seed: int | None = 0

    def __post_init__(self):
        if self.eps <= 0 or self.eps_F <= 0:
            raise ValueError("eps and eps_F must be positive")
        if not (0 < self.mu_l < 1 and 0 < self.mu_z < 1):
            raise ValueError("mu_l and mu_z must lie in (0, 1)")
        if self.gamma_scale <= 0 or self.gamma_factor <= 0:
            raise ValueError("gamma_scale and gamma_factor must be positive")
        if self.gamma_mode not in ("per_robot", "global"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")


class BmStructure:
    """Per-sensor incidence lists for the inter-robot measurements."""

    def __init__(self, inst):
        g = inst.graph
        self.inst = inst
        self.d = inst.d
        self.n = inst.n
        self.a, self.b = g.a, g.b
        self.w = g.weights
        self.q = g.q
        self.nbr, self.nbr_w, self.nbr_q = [], [], []
        other = np.concatenate([self.b, self.a])
        own = np.concatenate([self.a, self.b])
        w2 = np.concatenate([self.w, self.w])
        q2 = np.concatenate([self.q, self.q])
        order = np.argsort(own, kind="stable")
        bounds = np.searchsorted(own[order], np.arange(2 * self.n + 1))
        for k in range(2 * self.n):
            sel = order[bounds[k] : bounds[k + 1]]
            self.nbr.append(other[sel])
            self.nbr_w.append(w2[sel])
            self.nbr_q.append(q2[sel])
        self.mean_w = np.array(
            [np.mean(np.concatenate([self.nbr_w[2 * i], self.nbr_w[2 * i + 1]])) for i in range(self.n)]
        )

    def sensor_graph(self, fixed=()):
        """Dependency graph over free sensors: measurement partners and siblings."""
        fixed = set(fixed)
        graph = {}
        for k in range(2 * self.n):
            if k // 2 in fixed:
                continue
            nb = {int(j) for j in self.nbr[k] if j // 2 not in fixed}
            if (k ^ 1) // 2 not in fixed:
                nb.add(k ^ 1)
            graph[k] = nb
        return graph


def _structure(inst):
    cached = getattr(inst, "_bm_structure", None)
    if cached is None:
        cached = BmStructure(inst)
        inst._bm_structure = cached
    return cached


def initial_penalties(inst, cfg: BmConfig | None = None):
    """Penalty coefficients at the start of a run.

    ``sigma_nu = 0.2 dnu``; ``sigma_z`` is the sum of the partial derivatives
    of ``dz`` w.r.t. pitch and roll at the priors, times ``pi / 45``;
    ``gamma_i`` is ``gamma_scale`` times the mean incident measurement weight.
    """
    cfg = cfg or BmConfig()
    st = _structure(inst)
    sigma_nu = 0.2 * inst.dnu
    if inst.d == 3:
        diff = inst.nu[:, 0] - inst.nu[:, 1]
        sens = np.array([dz_sensitivity(inst.pitch[i], inst.roll[i], diff[i]) for i in range(inst.n)])
        sigma_z = np.abs(sens) * np.pi / 45
        sigma_z = np.maximum(sigma_z, 1e-3 * np.sqrt(inst.dnu))
    else:
        sigma_z = np.ones(inst.n)
    gamma = cfg.gamma_scale * st.mean_w
    if cfg.gamma_mode == "global":
        gamma = np.full(inst.n, np.mean(gamma))
    return PenaltyState(sigma_nu, sigma_z, gamma, cfg.mu_l, cfg.mu_z, cfg.n_c)


def lift_initialization(p0, r, scale=0.0, rng=None):
    """Factor pair ``U = V`` with ``p0`` in the first ``d`` rows.

    Rows ``d..r-1`` are zero-mean Gaussian with standard deviation ``scale``.
    """
    p0 = np.asarray(p0, dtype=float)
    d = p0.shape[0]
    if r < d:
        raise ValueError(f"rank r={r} must be at least d={d}")
    rng = np.random.default_rng(rng)
    U = np.vstack([p0, scale * rng.normal(size=(r - d, p0.shape[1]))])
    return FactorPair(U, U.copy(), d)


def _terms(fp, inst, pen):
    st = _structure(inst)
    U, V = fp.U, fp.V
    dU = U[:, st.a] - U[:, st.b]
    dV = V[:, st.a] - V[:, st.b]
    meas = st.w * (np.sum(dU * dV, axis=0) - st.q) ** 2
    sU = U[:, 0::2] - U[:, 1::2]
    sV = V[:, 0::2] - V[:, 1::2]
    nu = pen.w_nu * (np.sum(sU * sV, axis=0) - inst.dnu) ** 2
    if inst.d == 3:
        z = 0.5 * pen.w_z * ((sU[Z_ROW] - inst.dz) ** 2 + (sV[Z_ROW] - inst.dz) ** 2)
    else:
        z = np.zeros(inst.n)
    diff = (U - V) ** 2
    gam = pen.gamma * (np.sum(diff[:, 0::2], axis=0) + np.sum(diff[:, 1::2], axis=0))
    return meas, nu, z, gam


def cost_F(fp: FactorPair, inst, pen: PenaltyState) -> float:
    meas, nu, z, gam = _terms(fp, inst, pen)
    return float(np.sum(meas) + np.sum(nu) + np.sum(z) + np.sum(gam))


def local_costs(fp, inst, pen):
    """Per-robot sum of the cost terms touching that robot."""
    st = _structure(inst)
    meas, nu, z, gam = _terms(fp, inst, pen)
    out = nu + z + gam
    np.add.at(out, st.a // 2, meas)
    np.add.at(out, st.b // 2, meas)
    return out


def block_update_column(fp: FactorPair, which, sensor, inst, pen: PenaltyState):
    """Exact minimizer of ``F`` over one column of ``U`` (or ``V``).

    All other columns and the other factor stay fixed; the result solves
    ``(A_d + A_nu + A_z + A_gamma) x = b_d + b_nu + b_z + b_gamma``.
    ``sensor`` is a flat index or :class:`~bcdloc.model.SensorIndex`.
    """
    k = sensor if isinstance(sensor, (int, np.integer)) else sensor.flat
    if which == "U":
        X, Y = fp.U, fp.V
    elif which == "V":
        X, Y = fp.V, fp.U
    else:
        raise ValueError(f"which must be 'U' or 'V', got {which!r}")
    st = _structure(inst)
    i, u = k // 2, k % 2
    sib = k ^ 1
    r = X.shape[0]

    nbr = st.nbr[k]
    y_k = Y[:, k]
    C = y_k[:, None] - Y[:, nbr]
    w = st.nbr_w[k]
    A = (C * w) @ C.T
    b = C @ (w * (np.sum(C * X[:, nbr], axis=0) + st.nbr_q[k]))

    cs = y_k - Y[:, sib]
    w_nu = 1.0 / pen.sigma_nu[i] ** 2
    A += w_nu * (cs[:, None] * cs)
    b += w_nu * (cs @ X[:, sib] + inst.dnu[i]) * cs

    if inst.d == 3:
        hw = 0.5 / pen.sigma_z[i] ** 2
        A[Z_ROW, Z_ROW] += hw
        b[Z_ROW] += hw * (X[Z_ROW, sib] + (1 - 2 * u) * inst.dz[i])

    g = pen.gamma[i]
    A.flat[:: r + 1] += g
    b += g * y_k
    return solve_spd(A, b)


class _BmAdapter:
    def __init__(self, inst, fp, pen, on_block=None):
        self.inst = inst
        self.fp = fp
        self.pen = pen
        self.stop = None
        self.phase = ""
        # bumped whenever penalties change or U, V get averaged
        self.epoch = 0
        self.hook = on_block

    def live(self):
        return self.fp

    def snapshot(self):
        return self.fp.copy()

    def solve(self, key, state):
        which, k = key
        return block_update_column(state, which, k, self.inst, self.pen)

    def write(self, key, value):
        which, k = key
        getattr(self.fp, which)[:, k] = value

    def end_sweep(self, sweep):
        return self.stop(sweep)

    def on_block(self, key):
        if self.hook is not None:
            self.hook(self.phase, key, self)


def _centered_norm(M):
    return float(np.linalg.norm(M - M.mean(axis=1, keepdims=True)))


def _rel(new, old):
    den = _centered_norm(old)
    return float(np.linalg.norm(new - old)) / den if den > 0 else 0.0


def color_classes(inst, fixed=()):
    """Color rounds for one sweep: every ``U`` class, then every ``V`` class."""
    st = _structure(inst)
    classes = engine.greedy_coloring(st.sensor_graph(fixed))
    return [[("U", k) for k in c] for c in classes] + [[("V", k) for k in c] for c in classes]


def gauge_robot(inst):
    """Robot whose sensors are held fixed: maximum degree, smallest id on ties."""
    deg = inst.graph.degrees
    return int(np.flatnonzero(deg == deg.max())[0])


@dataclass
class SolveResult:
    p: np.ndarray
    poses: list
    stats: engine.RoundStats
    info: dict = field(default_factory=dict)


def _dynamic_gamma(adapter, classes, cfg, stats, phase):
    inst, pen = adapter.inst, adapter.pen
    gamma0 = pen.gamma.copy()
    floor = cfg.gamma_floor * gamma0
    ceil = cfg.gamma_ceil * gamma0
    prev = {"U": adapter.fp.U.copy(), "V": adapter.fp.V.copy()}
    state = {"F": cost_F(adapter.fp, inst, pen), "local": local_costs(adapter.fp, inst, pen)}

    def stop(sweep):
        fp = adapter.fp
        F = cost_F(fp, inst, pen)
        decrease = (state["F"] - F) / state["F"] if state["F"] > 0 else 0.0
        gap = 4 * float(np.linalg.norm(fp.U - fp.V)) / (_centered_norm(fp.U) + _centered_norm(fp.V))
        change = max(gap, _rel(fp.U, prev["U"]), _rel(fp.V, prev["V"]))
        prev["U"], prev["V"] = fp.U.copy(), fp.V.copy()
        if decrease < cfg.eps_F or change < cfg.eps:
            return True
        local = local_costs(fp, inst, pen)
        if cfg.gamma_mode == "global":
            stalled = np.full(inst.n, (state["F"] - F) < cfg.gamma_progress * state["F"])
        else:
            old = state["local"]
            stalled = (old - local) < cfg.gamma_progress * old
        pen.gamma = np.where(stalled, np.clip(cfg.gamma_factor * pen.gamma, floor, ceil), pen.gamma)
        adapter.epoch += 1
        state["F"] = cost_F(fp, inst, pen)
        state["local"] = local_costs(fp, inst, pen)
        return False

    adapter.stop = stop
    adapter.phase = phase
    adapter.epoch += 1
    phase_stats = engine.run_bcd(adapter, classes, cfg.max_dynamic, cfg.parallel, on_block=adapter.on_block)
    adapter.fp = adapter.fp.averaged()
    stats.add(phase, phase_stats)


def _continuation(adapter, classes, cfg, stats, phase):
    inst, pen = adapter.inst, adapter.pen
    for _ in range(pen.n_c):
        prev = {"U": adapter.fp.U.copy(), "V": adapter.fp.V.copy()}

        def stop(sweep):
            fp = adapter.fp
            change = max(_rel(fp.U, prev["U"]), _rel(fp.V, prev["V"]))
            prev["U"], prev["V"] = fp.U.copy(), fp.V.copy()
            return change < cfg.eps

        adapter.stop = stop
        adapter.phase = phase
        adapter.epoch += 1
        phase_stats = engine.run_bcd(
            adapter, classes, cfg.max_continuation, cfg.parallel, on_block=adapter.on_block
        )
        adapter.fp = adapter.fp.averaged()
        pen.shrink()
        stats.add(phase, phase_stats)


def _bm_pass(inst, fp, cfg, stats, gauge, prefix, on_block, max_dyn=None):
    pen = initial_penalties(inst, cfg)
    adapter = _BmAdapter(inst, fp, pen, on_block)
    fixed = () if gauge is None else (gauge,)
    dyn_classes = color_classes(inst, fixed if prefix == "refine_" else ())
    dyn_cfg = replace(cfg, max_dynamic=max_dyn or cfg.max_dynamic)
    _dynamic_gamma(adapter, dyn_classes, dyn_cfg, stats, prefix + "dynamic")
    classes = color_classes(inst, fixed)
    stats.colors = max(stats.colors, len(classes))
    _continuation(adapter, classes, cfg, stats, prefix + "continuation")
    return adapter


def run_bm_bcd(inst, p0, cfg: BmConfig | None = None, on_block=None) -> SolveResult:
    """BM-BCD: dynamic-gamma, continuation and (for ``r > d``) rank-``d`` refinement.

    Parameters
    ----------
    inst : ProblemInstance
    p0 : (d, 2n) ndarray
        Initial realization.
    cfg : BmConfig, optional
    on_block : callable, optional
        ``on_block(phase, key, adapter)`` after every column update.

    Returns
    -------
    SolveResult
        Final realization (rows of ``Q.T U``), recovered poses and stats.
    """
    cfg = cfg or BmConfig()
    d = inst.d
    r = cfg.r if cfg.r is not None else d + 1
    if r < d:
        raise ValueError(f"rank r={r} must be at least d={d}")
    if not inst.graph.is_connected():
        raise ValueError("measurement graph must be connected")
    cfg = replace(cfg, r=r)
    stats = engine.RoundStats()
    fp = lift_initialization(p0, r, cfg.lift_scale * inst.spacing, cfg.seed)
    gauge = gauge_robot(inst)

    adapter = _bm_pass(inst, fp, cfg, stats, gauge, "", on_block)
    if r > d and cfg.refine:
        refined = FactorPair(adapter.fp.U[:d].copy(), adapter.fp.V[:d].copy(), d)
        adapter = _bm_pass(
            inst, refined, replace(cfg, r=d), stats, gauge, "refine_", on_block, cfg.max_refine
        )
    fp = adapter.fp
    stats.objective = cost_F(fp, inst, adapter.pen)
    p = fp.p
    poses = recover_poses(p, inst)
    return SolveResult(p, poses, stats, {"factors": fp, "penalties": adapter.pen, "gauge_robot": gauge})
