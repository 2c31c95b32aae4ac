import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcdloc import engine


def random_graph(rng, n, p):
    graph = {v: set() for v in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                graph[i].add(j)
                graph[j].add(i)
    return graph


def fast_random_graph(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, 1)
    adj = upper | upper.T
    return {v: set(np.flatnonzero(adj[v]).tolist()) for v in range(n)}


def test_greedy_coloring_many_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        graph = fast_random_graph(rng, n, rng.uniform(0.0, 0.5) ** 2)
        classes = engine.greedy_coloring(graph)
        max_deg = max(len(nb) for nb in graph.values())
        assert len(classes) <= max_deg + 1
        assert engine.is_valid_coloring(graph, classes)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 25), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_greedy_coloring_property(n, p, seed):
    graph = random_graph(np.random.default_rng(seed), n, p)
    classes = engine.greedy_coloring(graph)
    assert engine.is_valid_coloring(graph, classes)
    assert len(classes) <= max(len(nb) for nb in graph.values()) + 1
    assert all(c == sorted(c) for c in classes)


def test_complete_graph_needs_n_colors():
    graph = {v: {u for u in range(5) if u != v} for v in range(5)}
    assert len(engine.greedy_coloring(graph)) == 5


def test_path_of_three_uses_two_colors():
    graph = {0: {1}, 1: {0, 2}, 2: {1}}
    assert engine.greedy_coloring(graph) == [[1], [0, 2]]


def test_k4_uses_four_colors():
    graph = {v: {u for u in range(4) if u != v} for v in range(4)}
    assert len(engine.greedy_coloring(graph)) == 4


def test_coloring_is_deterministic_and_ignores_self_loops():
    graph = {0: {0, 1}, 1: {0}, 2: set()}
    assert engine.greedy_coloring(graph) == engine.greedy_coloring(dict(reversed(graph.items())))
    assert engine.is_valid_coloring(graph, engine.greedy_coloring(graph))


def test_full_scale_cube_coloring():
    from bcdloc import cli, model
    from bcdloc.bm_bcd import _structure, color_classes
    from bcdloc.esdp_bcd import robot_classes

    inst = model.generate_scenario(cli.load_run_config("cube").scenario)
    assert inst.n == 125 and inst.graph.degrees.max() == 26
    robots = {i: set(inst.graph.neighbors[i]) for i in range(inst.n)}
    classes = engine.greedy_coloring(robots)
    assert engine.is_valid_coloring(robots, classes)
    assert len(classes) <= 27
    sensors = _structure(inst).sensor_graph(())
    half = color_classes(inst)[: len(color_classes(inst)) // 2]
    assert engine.is_valid_coloring(sensors, [[k for _, k in c] for c in half])
    assert len(half) <= max(len(nb) for nb in sensors.values()) + 1
    assert len(robot_classes(inst)) <= 27


def test_invalid_coloring_detected():
    graph = {0: {1}, 1: {0}, 2: set()}
    assert not engine.is_valid_coloring(graph, [[0, 1], [2]])
    assert not engine.is_valid_coloring(graph, [[0], [1]])
    assert engine.is_valid_coloring(graph, [[0, 2], [1]])


class ChainProblem:
    """Exact BCD on ``sum_i (x_i - x_{i+1})^2 + sum_i c_i (x_i - t_i)^2``."""

    def __init__(self, n, seed=0):
        rng = np.random.default_rng(seed)
        self.x = rng.normal(size=n)
        self.t = rng.normal(size=n)
        self.c = rng.uniform(0.5, 2.0, size=n)
        self.n = n
        self.sweeps = 0

    def live(self):
        return self.x

    def snapshot(self):
        return self.x.copy()

    def solve(self, i, x):
        nb = [x[j] for j in (i - 1, i + 1) if 0 <= j < self.n]
        return (sum(nb) + self.c[i] * self.t[i]) / (len(nb) + self.c[i])

    def write(self, i, value):
        self.x[i] = value

    def end_sweep(self, sweep):
        return sweep >= 25

    def cost(self):
        return float(np.sum(np.diff(self.x) ** 2) + np.sum(self.c * (self.x - self.t) ** 2))


def chain_classes(n):
    graph = {i: {j for j in (i - 1, i + 1) if 0 <= j < n} for i in range(n)}
    return engine.greedy_coloring(graph)


def test_parallel_schedule_bit_identical():
    a, b = ChainProblem(30), ChainProblem(30)
    classes = chain_classes(30)
    sa = engine.run_bcd(a, classes, 100)
    sb = engine.run_bcd(b, classes, 100, parallel=True, workers=4)
    np.testing.assert_array_equal(a.x, b.x)
    assert sa.iterations == sb.iterations == 25
    assert sa.comm_rounds == 25 * len(classes)


def test_run_bcd_descends_and_counts():
    prob = ChainProblem(12, seed=3)
    costs = [prob.cost()]
    stats = engine.run_bcd(prob, chain_classes(12), 100, on_block=lambda key: costs.append(prob.cost()))
    assert np.all(np.diff(costs) <= 1e-12 * costs[0])
    assert stats.converged
    assert 0 <= stats.pt <= stats.st


class IdentityProblem(ChainProblem):
    def solve(self, i, x):
        return x[i]

    def end_sweep(self, sweep):
        self.change = float(np.max(np.abs(self.x - self.prev)))
        self.prev = self.x.copy()
        return self.change == 0.0


def test_identity_solve_stops_after_one_sweep():
    prob = IdentityProblem(7)
    prob.prev = prob.x.copy()
    before = prob.x.copy()
    stats = engine.run_bcd(prob, chain_classes(7), 50)
    assert stats.iterations == 1 and stats.converged and prob.change == 0.0
    np.testing.assert_array_equal(prob.x, before)


@pytest.mark.parametrize("parallel", [False, True])
def test_comm_rounds_equal_colors_times_sweeps(parallel):
    prob = ChainProblem(9)
    classes = chain_classes(9)
    stats = engine.run_bcd(prob, classes, 100, parallel=parallel)
    assert stats.comm_rounds == len(classes) * stats.iterations
    assert 0 <= stats.pt <= stats.st


class SnapshotProbe(ChainProblem):
    """Counts block solves that saw a value written during their own color round."""

    def __init__(self, n):
        super().__init__(n)
        self.violations = 0

    def snapshot(self):
        self.round_start = self.x.copy()
        return super().snapshot()

    def solve(self, i, x):
        # every entry the block reads must equal its value at the start of the round
        if np.any(x != self.round_start):
            self.violations += 1
        return super().solve(i, x)


def test_parallel_blocks_read_round_start_snapshot():
    classes = engine.greedy_coloring({i: {(i + 1) % 10, (i - 1) % 10} for i in range(10)})
    prob = SnapshotProbe(10)
    engine.run_bcd(prob, classes, 5, parallel=True, workers=3)
    assert prob.violations == 0


def test_run_bcd_cap_marks_not_converged():
    prob = ChainProblem(5)
    prob.end_sweep = lambda sweep: False
    stats = engine.run_bcd(prob, chain_classes(5), 3)
    assert stats.iterations == 3 and not stats.converged


def test_block_failure_is_reported():
    prob = ChainProblem(5)

    def boom(i, x):
        raise ValueError("singular")

    prob.solve = boom
    with pytest.raises(engine.BlockSolveError, match="sweep 1"):
        engine.run_bcd(prob, chain_classes(5), 3)


def test_round_stats_merge():
    a = engine.RoundStats()
    a.add("x", engine.PhaseStats(2, 4, 1.0, 0.5, True))
    a.add("x", engine.PhaseStats(1, 2, 1.0, 0.5, False))
    b = engine.RoundStats()
    b.merge(a, prefix="refine/")
    assert a.iterations == 3 and a.comm_rounds == 6 and not a.converged
    assert b.phases["refine/x"].iterations == 3 and b.st == pytest.approx(2.0)
