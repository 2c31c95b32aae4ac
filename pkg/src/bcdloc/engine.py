"""Generic block coordinate descent scheduler.

A problem adapter exposes exact block solves; the engine sweeps the color
classes cyclically. Blocks of one class never depend on each other, so they
may be solved from a shared snapshot (``parallel=True``) or one after the
other on the live state; both orders give identical iterates.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Protocol


class BlockSolveError(RuntimeError):
    pass


class BlockProblem(Protocol):
    def live(self): ...

    def snapshot(self): ...

    def solve(self, key, state): ...

    def write(self, key, value) -> None: ...

    def end_sweep(self, sweep: int) -> bool: ...


@dataclass
class PhaseStats:
    iterations: int = 0
    comm_rounds: int = 0
    st: float = 0.0
    pt: float = 0.0
    converged: bool = True


@dataclass
class RoundStats:
    """Iteration, communication and timing totals, with a per-phase breakdown.

    ``st`` sums every block solve time; ``pt`` sums, over color rounds, the
    slowest block of the round (ideal parallel execution).
    """

    iterations: int = 0
    comm_rounds: int = 0
    st: float = 0.0
    pt: float = 0.0
    objective: float = float("nan")
    converged: bool = True
    colors: int = 0
    phases: dict = field(default_factory=dict)

    def add(self, name, phase: PhaseStats):
        self.iterations += phase.iterations
        self.comm_rounds += phase.comm_rounds
        self.st += phase.st
        self.pt += phase.pt
        self.converged = self.converged and phase.converged
        if name in self.phases:
            prev = self.phases[name]
            prev.iterations += phase.iterations
            prev.comm_rounds += phase.comm_rounds
            prev.st += phase.st
            prev.pt += phase.pt
            prev.converged = prev.converged and phase.converged
        else:
            self.phases[name] = PhaseStats(
                phase.iterations, phase.comm_rounds, phase.st, phase.pt, phase.converged
            )

    def merge(self, other: RoundStats, prefix=""):
        for name, phase in other.phases.items():
            self.add(prefix + name, phase)
        self.colors = max(self.colors, other.colors)


def greedy_coloring(graph: dict[Hashable, set]) -> list[list]:
    """Greedy vertex coloring, at most ``max_degree + 1`` colors.

    ``graph`` maps each vertex to its neighbour set (self-loops ignored).
    Vertices are visited by descending degree, ties by ascending id, and take
    the smallest color unused by already-colored neighbours. Returns the
    color classes, each sorted by vertex id.
    """
    degree = {v: len(set(nb) - {v}) for v, nb in graph.items()}
    order = sorted(graph, key=lambda v: (-degree[v], v))
    color = {}
    for v in order:
        taken = {color[u] for u in graph[v] if u in color and u != v}
        c = 0
        while c in taken:
            c += 1
        color[v] = c
    classes = [[] for _ in range(max(color.values(), default=-1) + 1)]
    for v in sorted(color):
        classes[color[v]].append(v)
    return classes


def is_valid_coloring(graph, classes):
    seen = {}
    for c, cls in enumerate(classes):
        for v in cls:
            if v in seen:
                return False
            seen[v] = c
    if set(seen) != set(graph):
        return False
    return all(seen[u] != seen[v] for u in graph for v in graph[u] if v != u)


def run_bcd(problem: BlockProblem, classes, max_sweeps, parallel=False, workers=None, on_block=None):
    """Sweep ``classes`` until ``problem.end_sweep`` asks to stop or the cap is hit.

    Parameters
    ----------
    problem : BlockProblem
        Adapter with exact block solves.
    classes : list of list
        Color classes, swept in order; one class is one communication round.
    max_sweeps : int
        Iteration cap; hitting it marks the phase non-converged.
    parallel : bool
        Solve each class from a snapshot, concurrently, then write back.
    on_block : callable, optional
        Called as ``on_block(key)`` after each block is written.

    Returns
    -------
    PhaseStats
    """
    stats = PhaseStats(converged=False)
    classes = [list(c) for c in classes if len(c)]
    pool = ThreadPoolExecutor(max_workers=workers) if parallel else None
    try:
        for sweep in range(1, max_sweeps + 1):
            for c, cls in enumerate(classes):
                if parallel:
                    state = problem.snapshot()
                    results = list(pool.map(lambda key: _timed(problem, key, state, sweep, c), cls))
                    for key, (value, _) in zip(cls, results):
                        problem.write(key, value)
                        if on_block is not None:
                            on_block(key)
                    times = [dt for _, dt in results]
                else:
                    times = []
                    for key in cls:
                        value, dt = _timed(problem, key, problem.live(), sweep, c)
                        problem.write(key, value)
                        times.append(dt)
                        if on_block is not None:
                            on_block(key)
                stats.st += sum(times)
                stats.pt += max(times)
                stats.comm_rounds += 1
            stats.iterations = sweep
            if problem.end_sweep(sweep):
                stats.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return stats


def _timed(problem, key, state, sweep, color):
    t0 = time.perf_counter()
    try:
        value = problem.solve(key, state)
    except Exception as exc:
        raise BlockSolveError(f"block {key!r} failed in sweep {sweep}, color round {color}: {exc}") from exc
    return value, time.perf_counter() - t0
