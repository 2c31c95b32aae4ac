"""Shared builders for small random problems."""

import numpy as np
import pytest

from bcdloc import model
from bcdloc.bm_bcd import BmConfig, PenaltyState, initial_penalties, lift_initialization


def random_poses(rng, n, d, spread=4.0, tilt=0.1):
    poses = []
    for _ in range(n):
        t = spread * rng.normal(size=d)
        if d == 3:
            poses.append(model.Pose(rng.uniform(-np.pi, np.pi), t, *rng.uniform(-tilt, tilt, size=2)))
        else:
            poses.append(model.Pose(rng.uniform(-np.pi, np.pi), t))
    return poses


def random_edges(rng, n, extra=0.4):
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.add((i, j))
    return sorted(edges)


def random_instance(rng, n, d, sigma=0.05, edges=None, anchors=(), eta=0.5):
    """Small instance with random poses, random connected graph and optional anchors."""
    poses = random_poses(rng, n, d)
    nu = model.default_offsets(n, d)
    nu[:, :, 0] += rng.uniform(-0.1, 0.1, size=(n, 1))
    p = model.poses_to_realization(poses, nu)
    edges = random_edges(rng, n) if edges is None else edges
    a, b = model._edge_sensor_pairs(edges)
    meas = model.simulate_measurements(p, sigma, list(zip(a, b)), rng)
    graph = model.MeasurementGraph(
        n, edges, [m.q_tilde for m in meas], [m.sigma_q for m in meas], [m.d_tilde for m in meas]
    )
    anchor_set = model.AnchorSet(points=np.zeros((d, 0)))
    if anchors:
        sensors = np.array([2 * r + u for r in anchors for u in (0, 1)])
        pts = p[:, sensors] + 0.05 * rng.normal(size=(d, len(sensors)))
        adjacent = set(edges)
        pairs = [
            (int(s), o)
            for s in sensors
            for o in range(2 * n)
            if o // 2 not in anchors and tuple(sorted((s // 2, o // 2))) not in adjacent
        ]
        pairs = [pr for pr in pairs if rng.random() < eta]
        am = model.simulate_measurements(p, sigma, pairs, rng)
        anchor_set = model.AnchorSet(
            anchors, sensors, pts,
            [pr[0] for pr in pairs], [pr[1] for pr in pairs],
            [m.q_tilde for m in am], [m.sigma_q for m in am], [m.d_tilde for m in am],
        )
    pitch = np.array([ps.pitch for ps in poses])
    roll = np.array([ps.roll for ps in poses])
    return model.ProblemInstance(
        d=d, graph=graph, nu=nu, pitch=pitch, roll=roll, anchors=anchor_set,
        truth=model.GroundTruth(poses, p), spacing=3.0, extent=2,
    )


def random_factors(rng, inst, r, scale=3.0):
    U = scale * rng.normal(size=(r, 2 * inst.n))
    V = U + 0.3 * rng.normal(size=U.shape)
    fp = lift_initialization(U[: inst.d], r)
    fp.U[:], fp.V[:] = U, V
    return fp


def random_penalties(rng, inst):
    pen = initial_penalties(inst, BmConfig())
    return PenaltyState(
        pen.sigma_nu * rng.uniform(0.5, 2.0, inst.n),
        pen.sigma_z * rng.uniform(0.5, 2.0, inst.n),
        pen.gamma * rng.uniform(0.1, 10.0, inst.n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cube_small():
    return model.ScenarioSpec(shape="CUBE", size=3, b=3.0, sigma=0.1, rho=0.5)


@pytest.fixture(scope="session")
def cube_esdp_small():
    return model.ScenarioSpec(shape="CUBE", size=3, b=3.0, sigma=0.1, rho=1.0, anchor_count=2, eta=0.3)


# -- acceptance summary -------------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
