from dataclasses import replace

import numpy as np
import pytest

from bcdloc import model
from bcdloc.bm_bcd import BmConfig
from bcdloc.esdp_bcd import (
    E_FLOOR,
    BarrierConfig,
    EsdpConfig,
    EsdpState,
    SubproblemModel,
    assemble_subproblem,
    cost_G,
    initial_state,
    psd_blocks,
    relaxation_error,
    robot_classes,
    run_esdp_bcd,
    solve_subproblem,
    _values,
)
from bcdloc.engine import is_valid_coloring

from conftest import random_instance
from oracles import cvxpy_block, projection_splitting_block


def toy(d, seed=0, sigma=0.1):
    """Two robots, one edge, robot 0 an anchor."""
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 2, d, sigma=sigma, edges=[(0, 1)], anchors=(0,))
    return inst, rng


def chain(d, n=4, seed=0, anchors=(0,)):
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    return random_instance(rng, n, d, edges=edges, anchors=anchors), rng


def scatter(inst, rng, scale=3.0):
    return inst.truth.p + scale * rng.normal(size=inst.truth.p.shape)


# -- state helpers ------------------------------------------------------------------

def test_relaxation_error_examples():
    p = np.array([[1.0, 0.0], [2.0, 0.0]])
    st = EsdpState(p, np.array([5.0, 0.5]), np.zeros(1), np.zeros(0))
    assert relaxation_error(st, 0) == pytest.approx(E_FLOOR * 5.0)
    assert relaxation_error(st, model.SensorIndex(0, 1)) == pytest.approx(0.5)


def test_initial_state_is_strictly_feasible():
    inst, rng = chain(3, n=5, seed=2)
    st = initial_state(inst, scatter(inst, rng))
    blocks = psd_blocks(st, inst)
    free = [i for i in range(inst.n) if i not in inst.anchors.robots]
    # every non-anchor pair is strictly inside the cone
    assert min(v for (a, b), v in blocks.items() if a // 2 in free and b // 2 in free) > 0
    for i in free:
        k0, k1 = 2 * i, 2 * i + 1
        dx = st.x_diag[k0] - 2 * st.x_intra[i] + st.x_diag[k1]
        assert dx == pytest.approx(inst.dnu[i], rel=1e-12)
        assert st.p[2, k0] - st.p[2, k1] == pytest.approx(inst.dz[i], abs=1e-12)
    for s in inst.anchors.sensors:
        np.testing.assert_array_equal(st.p[:, s], inst.anchors.estimate(s))


def test_initial_state_default_scatter():
    inst, _ = chain(2, seed=1)
    a = initial_state(inst, seed=3)
    b = initial_state(inst, seed=3)
    np.testing.assert_array_equal(a.p, b.p)


# -- cost -------------------------------------------------------------------------------

def exact_state(inst):
    p = inst.truth.p
    g = inst.graph
    return EsdpState(
        p.copy(),
        np.sum(p * p, axis=0),
        np.sum(p[:, 0::2] * p[:, 1::2], axis=0),
        np.sum(p[:, g.a] * p[:, g.b], axis=0),
    )


def test_cost_zero_at_noiseless_truth():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 5, 3, sigma=0.0, anchors=(0,), eta=1.0)
    inst.anchors.points[:] = inst.truth.p[:, inst.anchors.sensors]
    assert cost_G(exact_state(inst), inst) <= 1e-8


def test_cost_edge_perturbation_matches_direct():
    inst, rng = chain(2, seed=4, anchors=(0,))
    st = initial_state(inst, scatter(inst, rng))
    g = inst.graph
    m = next(m for m in range(len(g.q)) if g.a[m] // 2 != 0 and g.b[m] // 2 != 0)
    delta = 0.37
    base = cost_G(st, inst)
    res = st.x_diag[g.a[m]] - 2 * st.x_edge[m] + st.x_diag[g.b[m]] - g.q[m]
    st.x_edge[m] += delta
    expect = ((res - 2 * delta) ** 2 - res**2) / g.sigma_q[m] ** 2
    assert cost_G(st, inst) - base == pytest.approx(expect, rel=1e-10)


def test_cost_ignores_intra_entries():
    inst, rng = chain(3, seed=5)
    st = initial_state(inst, scatter(inst, rng))
    base = cost_G(st, inst)
    st.x_intra += 10.0
    assert cost_G(st, inst) == base


# -- assembly ---------------------------------------------------------------------------

def test_assembly_variable_count():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 5, 3, edges=[(0, 1), (0, 2), (0, 3), (3, 4)], anchors=(4,))
    model_ = assemble_subproblem(initial_state(inst, scatter(inst, rng)), 0, inst)
    assert model_.nv == 21
    assert model_.E.shape[0] == 2


def test_anchor_only_block_has_no_edge_variables():
    inst, rng = toy(3)
    model_ = assemble_subproblem(initial_state(inst, scatter(inst, rng)), 1, inst)
    assert model_.nv == 2 * 3 + 3
    assert len(model_.e_hat) == 0
    # only the p and x_diag slots carry objective weight
    assert np.all(model_.L[:, 2 * 3 + 2] == 0)


def test_assembly_rejects_anchor_and_isolated():
    inst, rng = toy(2)
    st = initial_state(inst, scatter(inst, rng))
    with pytest.raises(ValueError, match="anchor"):
        assemble_subproblem(st, 0, inst)


def test_objective_hessian_psd_random_assemblies():
    rng = np.random.default_rng(7)
    for trial in range(100):
        d = 2 + trial % 2
        n = int(rng.integers(3, 7))
        inst = random_instance(rng, n, d, anchors=(0,))
        st = initial_state(inst, scatter(inst, rng))
        i = int(rng.integers(1, n))
        mode = "strict" if trial % 3 == 0 else "overlap"
        m = assemble_subproblem(st, i, inst, mode)
        H = 2 * (m.L.T * m.w) @ m.L
        assert np.linalg.eigvalsh(H)[0] >= -1e-9 * max(1.0, np.abs(H).max())
        assert np.all(_values(m, m.z0)[0] > 0), "feasible start must be strict"
        np.testing.assert_allclose(m.E @ m.z0, m.f, atol=1e-10)


# -- block solve --------------------------------------------------------------------------

def handmade_model(target, weight_p=1.0):
    """d=2 block: (x0 - target)^2 + (x1 - target)^2 + weight_p |p|^2, dnu = 1."""
    d, nv = 2, 7
    L = np.zeros((6, nv))
    c = np.zeros(6)
    L[0, 4], L[1, 5] = 1.0, 1.0
    c[:2] = -target
    L[2:, :4] = np.eye(4)
    w = np.array([1.0, 1.0] + [weight_p] * 4)
    E = np.zeros((1, nv))
    E[0, 4], E[0, 5], E[0, 6] = 1.0, 1.0, -2.0
    z0 = np.array([0.35, 0.0, -0.35, 0.0, 1.0, 1.0, 0.5])
    empty = np.zeros((0, d + 2), dtype=int)
    return SubproblemModel(
        robot=1, d=d, nv=nv, L=L, c=c, w=w, E=E, f=np.array([1.0]),
        e_idx=empty, e_pj=np.zeros((0, d)), e_hat=np.zeros(0), e_fixed=np.zeros(0, bool),
        e_xe=np.zeros(0), z0=z0,
    )


def test_inactive_constraint_toy():
    z = solve_subproblem(handmade_model(1.0, weight_p=100.0))
    assert z[4] == pytest.approx(1.0, abs=1e-6)
    assert z[5] == pytest.approx(1.0, abs=1e-6)
    assert np.abs(z[:4]).max() < 1e-6


def test_active_constraint_toy_kkt():
    # x_diag is pulled below |p|^2: the optimum sits on the boundary
    m = handmade_model(-1.0)
    z = solve_subproblem(m)
    z_ref, f_ref = cvxpy_block(m)
    assert m.objective(z) == pytest.approx(f_ref, rel=1e-6, abs=1e-8)
    g = _values(m, z)[0]
    assert np.all(g > 0)
    # smallest slack is (numerically) zero: complementary slackness with a positive multiplier
    assert g.min() <= 1e-6
    assert abs(m.E @ z - m.f).max() <= 1e-8


@pytest.mark.parametrize("seed", range(6))
def test_planar_toy_matches_projection_splitting(seed):
    inst, rng = toy(2, seed=seed)
    st = initial_state(inst, scatter(inst, rng))
    m = assemble_subproblem(st, 1, inst)
    z = solve_subproblem(m)
    _, f_ref = projection_splitting_block(m)
    # gap relative to max(1, f): zero optima are reached only asymptotically by splitting
    assert abs(m.objective(z) - f_ref) <= 1e-4 * max(1.0, f_ref)


@pytest.mark.parametrize("seed", range(4))
def test_spatial_toy_matches_conic_solver(seed):
    # the spatial anchor-only toy has a degenerate optimal face on which
    # first-order splitting converges sublinearly; cross-check with a conic solver
    inst, rng = toy(3, seed=seed)
    st = initial_state(inst, scatter(inst, rng))
    m = assemble_subproblem(st, 1, inst)
    z = solve_subproblem(m)
    _, f_ref = cvxpy_block(m)
    assert m.objective(z) == pytest.approx(f_ref, rel=1e-4, abs=1e-10)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("mode", ["overlap", "strict"])
def test_block_matches_conic_solver(d, mode):
    rng = np.random.default_rng(10 * d)
    for _ in range(3):
        inst = random_instance(rng, 6, d, anchors=(0,), eta=0.5)
        st = initial_state(inst, scatter(inst, rng))
        for i in range(1, inst.n):
            m = assemble_subproblem(st, i, inst, mode)
            z = solve_subproblem(m)
            _, f_ref = cvxpy_block(m)
            assert m.objective(z) == pytest.approx(f_ref, rel=1e-4, abs=1e-6)
            assert np.all(_values(m, z)[0] > 0)
            assert abs(m.E @ z - m.f).max() <= 1e-8


def test_anchor_elimination_matches_explicit_blocks():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 3, 2, edges=[(0, 1), (1, 2)], anchors=(0,), eta=1.0)
    st = initial_state(inst, scatter(inst, rng))
    m = assemble_subproblem(st, 1, inst)
    z = solve_subproblem(m)
    # rebuild without the eliminated anchor rows and add them back explicitly
    anchor_rows = np.any(m.L[:, : 2 * inst.d] != 0, axis=1)
    g = inst.graph
    explicit = []
    for k in np.flatnonzero([g.a[j] // 2 == 0 for j in range(len(g.q))]):
        u = g.b[k] % 2
        explicit.append((u, inst.anchors.estimate(g.a[k]), g.q[k], g.sigma_q[k]))
    reduced = replace(m, L=m.L[~anchor_rows], c=m.c[~anchor_rows], w=m.w[~anchor_rows])
    z_ref, f_ref = cvxpy_block(reduced, explicit_anchors=explicit)
    # the explicit blocks are singular at optimum, so the conic solver is only accurate to ~1e-5
    assert m.objective(z) == pytest.approx(f_ref, rel=1e-4)
    np.testing.assert_allclose(z[: 2 * inst.d], z_ref[: 2 * inst.d], atol=1e-4)


def test_barrier_config_validation():
    with pytest.raises(ValueError):
        BarrierConfig(factor=1.5)
    with pytest.raises(ValueError):
        EsdpConfig(mode="shared")


# -- full runs ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def esdp_cube():
    spec = model.ScenarioSpec(shape="CUBE", size=3, b=3.0, sigma=0.1, anchor_count=2, eta=0.3, seed=1)
    inst = model.generate_scenario(spec)
    return inst, model.sample_initialization(inst, 1.0, seed=1001)


def test_robot_classes(esdp_cube):
    inst, _ = esdp_cube
    classes = robot_classes(inst)
    free = [i for i in range(inst.n) if i not in inst.anchors.robots]
    graph = {i: {j for j in inst.graph.neighbors[i] if j in free} for i in free}
    assert is_valid_coloring(graph, classes)


def test_run_descent_and_feasibility(esdp_cube):
    inst, p0 = esdp_cube
    log = {"G": [], "eig": []}

    def hook(phase, key, adapter):
        if phase != "esdp":
            return
        log["G"].append(cost_G(adapter.state, inst))
        log["eig"].append(min(psd_blocks(adapter.state, inst, robots={key}).values()))

    res = run_esdp_bcd(inst, EsdpConfig(refine=None), p0=p0, on_block=hook)
    G = np.array(log["G"])
    assert np.max(np.diff(G) / G[:-1]) <= 1e-8
    assert min(log["eig"]) >= -1e-7
    assert res.info["k"].endswith("+0")
    assert res.stats.pt <= res.stats.st


def test_strict_mode_runs(esdp_cube):
    inst, p0 = esdp_cube
    res = run_esdp_bcd(inst, EsdpConfig(mode="strict", refine=None), p0=p0)
    assert min(psd_blocks(res.info["state"], inst).values()) >= -1e-7
    assert np.isfinite(res.info["objective_G"])


def test_initialization_independence():
    inst, rng = chain(2, n=6, seed=8, anchors=(0, 3))
    cfg = EsdpConfig(eps=1e-6, max_iter=400, refine=None)
    a = run_esdp_bcd(inst, cfg, p0=scatter(inst, rng, 1.0))
    b = run_esdp_bcd(inst, cfg, p0=scatter(inst, rng, 20.0))
    Ga, Gb = a.info["objective_G"], b.info["objective_G"]
    assert abs(Ga - Gb) <= 1e-3 * max(Ga, Gb)


def test_fully_anchored_noiseless():
    spec = model.ScenarioSpec(shape="CUBE", size=2, b=3.0, sigma=0.0, anchor_count=8, anchor_noise=0.0, seed=0)
    inst = model.generate_scenario(spec)
    res = run_esdp_bcd(inst, EsdpConfig(refine=BmConfig(lift_scale=0.0)))
    np.testing.assert_allclose(res.info["p_esdp"][:, inst.anchors.sensors], inst.anchors.points)
    rel = np.linalg.norm(res.p - res.info["p_esdp"]) / np.linalg.norm(res.info["p_esdp"])
    assert rel <= 5e-4


def test_refinement_follows_esdp(esdp_cube):
    inst, p0 = esdp_cube
    res = run_esdp_bcd(inst, p0=p0)
    k_esdp, k_ref = (int(x) for x in res.info["k"].split("+"))
    assert res.stats.iterations == k_esdp + k_ref
    assert any(name.startswith("refine/") for name in res.stats.phases)
    assert res.info["rmse_a"] >= 0


def test_needs_anchors():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 3, 2)
    with pytest.raises(ValueError, match="anchor"):
        run_esdp_bcd(inst)
