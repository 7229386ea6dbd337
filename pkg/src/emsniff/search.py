"""Two-phase greedy gradient search for a high-leakage cell.

Phase 1 measures the centre cell of each block of an M x M partition of the
grid. Phase 2 starts from the best of those and repeatedly estimates a
gradient from the four neighbouring cells, moves a fixed distance along it
(continuous position, clamped to the chip), and measures the cell it lands
in. Every cell is measured at most once; revisits reuse the cached value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .measures import LeakageScalar, Measure

# fixed application order of the neighbour measurements
NEIGHBOURS = (("E", (1, 0)), ("W", (-1, 0)), ("N", (0, 1)), ("S", (0, -1)))


class DegenerateGrid(ValueError):
    """No neighbour of the current cell lies inside the grid."""


class SearchAborted(RuntimeError):
    """A measurement failed mid-search; ``state`` holds the partial search."""

    def __init__(self, message: str, state: "SearchState"):
        super().__init__(message)
        self.state = state


@dataclass
class SearchParams:
    initial_grid_size: int = 2
    step_size_cells: float = 2.8
    max_iterations: int = 100
    # None: ceil(N / 3)
    no_improve_limit: int | None = None
    measure: Measure = Measure.SNR

    def __post_init__(self):
        self.measure = Measure(self.measure)
        if self.initial_grid_size < 1:
            raise ValueError("initial_grid_size must be >= 1")
        if not self.step_size_cells > 0:
            raise ValueError("step_size_cells must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.no_improve_limit is not None and self.no_improve_limit < 1:
            raise ValueError("no_improve_limit must be >= 1")

    def patience(self, n: int) -> int:
        return self.no_improve_limit if self.no_improve_limit is not None else math.ceil(n / 3)

    def to_dict(self) -> dict:
        return {
            "initial_grid_size": self.initial_grid_size,
            "step_size_cells": self.step_size_cells,
            "max_iterations": self.max_iterations,
            "no_improve_limit": self.no_improve_limit,
            "measure": self.measure.value,
        }


def effective_step_mm(step_size_cells: float, n: int, side_length_mm: float) -> float:
    """Probe displacement per step: (1/N) * L * step."""
    return side_length_mm / n * step_size_cells


@dataclass
class Visit:
    cell: tuple[int, int]
    leakage: float
    traces_used: int
    phase: str


@dataclass
class SearchState:
    n: int
    continuous_pos: tuple[float, float] = (0.0, 0.0)
    current_cell: tuple[int, int] | None = None
    best_cell: tuple[int, int] | None = None
    best_leakage: float = -math.inf
    measurements_made: int = 0
    measurements_to_best: int = 0
    traces_used: int = 0
    visited: dict = field(default_factory=dict)
    trajectory: list = field(default_factory=list)
    path: list = field(default_factory=list)
    iterations: int = 0
    edge_stop: bool = False


@dataclass
class SearchReport:
    best_cell: tuple[int, int]
    best_leakage: float
    measurements_made: int
    measurements_to_best: int
    traces_used: int
    iterations: int
    stop_reason: str
    trajectory: list
    path: list
    params: SearchParams
    n: int

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "grid_resolution": self.n,
            "best_cell": list(self.best_cell),
            "best_leakage": self.best_leakage,
            "measurements_made": self.measurements_made,
            "measurements_to_best": self.measurements_to_best,
            "traces_used": self.traces_used,
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "trajectory": [
                {"cell": list(v.cell), "leakage": v.leakage, "traces_used": v.traces_used, "phase": v.phase}
                for v in self.trajectory
            ],
            "path": [list(c) for c in self.path],
        }


Meter = Callable[[tuple[int, int]], LeakageScalar]


def grid_resolution(meter) -> int:
    if hasattr(meter, "grid_resolution"):
        return meter.grid_resolution
    return meter.backend.grid_resolution


class FunctionMeter:
    """Meter over a plain ``cell -> value`` function (no backend)."""

    def __init__(self, fn: Callable[[tuple[int, int]], float], n: int, kind: Measure = Measure.SNR, traces: int = 1):
        self.fn = fn
        self.grid_resolution = n
        self.kind = kind
        self.traces = traces
        self.calls: list[tuple[int, int]] = []

    def __call__(self, cell) -> LeakageScalar:
        i, j = cell
        if not (0 <= i < self.grid_resolution and 0 <= j < self.grid_resolution):
            raise ValueError(f"cell {cell} outside grid")
        self.calls.append((i, j))
        return LeakageScalar(self.kind, float(self.fn((i, j))), self.traces)


def initial_locations(m: int, n: int) -> list[tuple[int, int]]:
    """Centre cell of each block of an m x m partition of an n x n grid."""
    if not 1 <= m <= n:
        raise ValueError(f"initial grid size {m} must be in [1, {n}]")
    centres = [(2 * b + 1) * n // (2 * m) for b in range(m)]
    return [(i, j) for i in centres for j in centres]


def _measure(meter: Meter, state: SearchState, cell: tuple[int, int], phase: str) -> float:
    cached = state.visited.get(cell)
    if cached is not None:
        return cached.value
    try:
        result = meter(cell)
    except Exception as exc:
        raise SearchAborted(f"measurement at {cell} failed: {exc}", state) from exc
    state.visited[cell] = result
    state.measurements_made += 1
    state.traces_used += result.traces_used
    state.trajectory.append(Visit(cell, result.value, result.traces_used, phase))
    # ties go to the lowest cell among the initial points; afterwards only a
    # strict improvement moves the best
    tie = phase == "initial" and result.value == state.best_leakage and cell < state.best_cell
    if result.value > state.best_leakage or tie:
        if result.value > state.best_leakage:
            state.measurements_to_best = state.measurements_made
        state.best_leakage = result.value
        state.best_cell = cell
    return result.value


def initial_phase(meter: Meter, params: SearchParams) -> SearchState:
    n = grid_resolution(meter)
    state = SearchState(n=n)
    for cell in initial_locations(params.initial_grid_size, n):
        _measure(meter, state, cell, "initial")
    start = state.best_cell
    state.current_cell = start
    state.continuous_pos = (start[0] + 0.5, start[1] + 0.5)
    state.path.append(start)
    return state


def estimate_gradient(meter: Meter, state: SearchState) -> tuple[float, float]:
    """Average of the neighbour leakages as vectors pointing at each neighbour.

    Neighbours outside the grid contribute nothing.
    """
    if state.current_cell is None:
        raise ValueError("search state has no current cell")
    i, j = state.current_cell
    gx = gy = 0.0
    inside = 0
    for _name, (di, dj) in NEIGHBOURS:
        cell = (i + di, j + dj)
        if not (0 <= cell[0] < state.n and 0 <= cell[1] < state.n):
            continue
        inside += 1
        value = _measure(meter, state, cell, "neighbour")
        gx += value * di
        gy += value * dj
    if not inside:
        raise DegenerateGrid("no neighbour inside a 1x1 grid")
    return gx / 4.0, gy / 4.0


def step(meter: Meter, state: SearchState, g: tuple[float, float], params: SearchParams) -> SearchState:
    """Move ``step_size_cells`` along ``g`` (towards higher leakage), measure.

    A zero gradient leaves the probe where it is. A move that would leave the
    chip stops at the edge and sets ``edge_stop``.
    """
    gx, gy = g
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ValueError(f"gradient must be finite, got {g}")
    norm = math.hypot(gx, gy)
    if norm == 0.0:
        return state
    x, y = state.continuous_pos
    tx = x + params.step_size_cells * gx / norm
    ty = y + params.step_size_cells * gy / norm
    cx = min(max(tx, 0.0), float(state.n))
    cy = min(max(ty, 0.0), float(state.n))
    if (cx, cy) != (tx, ty):
        state.edge_stop = True
    state.continuous_pos = (cx, cy)
    cell = (min(int(math.floor(cx)), state.n - 1), min(int(math.floor(cy)), state.n - 1))
    state.current_cell = cell
    state.path.append(cell)
    _measure(meter, state, cell, "step")
    return state


def run(meter: Meter, params: SearchParams | None = None) -> SearchReport:
    params = params or SearchParams()
    n = grid_resolution(meter)
    if params.initial_grid_size > n:
        raise ValueError(f"initial grid size {params.initial_grid_size} exceeds grid resolution {n}")
    patience = params.patience(n)
    state = initial_phase(meter, params)
    stalled = 0
    reason = "max_iterations"
    while state.iterations < params.max_iterations:
        before = state.best_leakage
        if n == 1:
            reason = "degenerate_grid"
            break
        g = estimate_gradient(meter, state)
        step(meter, state, g, params)
        state.iterations += 1
        stalled = 0 if state.best_leakage > before else stalled + 1
        if state.edge_stop:
            reason = "edge"
            break
        if stalled >= patience:
            reason = "no_improvement"
            break
    return SearchReport(
        best_cell=state.best_cell,
        best_leakage=state.best_leakage,
        measurements_made=state.measurements_made,
        measurements_to_best=state.measurements_to_best,
        traces_used=state.traces_used,
        iterations=state.iterations,
        stop_reason=reason,
        trajectory=state.trajectory,
        path=state.path,
        params=params,
        n=n,
    )
