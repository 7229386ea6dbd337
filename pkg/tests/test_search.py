import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emsniff import search
from emsniff.device import Bump, ChipGeometry, LeakageField, SimDeviceConfig
from emsniff.meter import LeakageMeter
from emsniff.instrument import SimBackend
from emsniff.search import (DegenerateGrid, FunctionMeter, SearchAborted, SearchParams, SearchState,
                            estimate_gradient, initial_locations, initial_phase, run)


def test_initial_locations_block_centres():
    assert sorted(initial_locations(2, 30)) == [(7, 7), (7, 22), (22, 7), (22, 22)]
    assert initial_locations(1, 30) == [(15, 15)]
    with pytest.raises(ValueError):
        initial_locations(0, 30)
    with pytest.raises(ValueError):
        initial_locations(31, 30)


@given(st.integers(1, 8), st.integers(8, 60))
def test_initial_locations_distinct_and_inside(m, n):
    cells = initial_locations(m, n)
    assert len(set(cells)) == m * m
    assert all(0 <= i < n and 0 <= j < n for i, j in cells)


def test_initial_ties_go_to_lowest_cell():
    st_ = initial_phase(FunctionMeter(lambda c: 1.0, 30), SearchParams(initial_grid_size=3))
    assert st_.best_cell == (5, 5)


def test_initial_phase_measures_four_cells():
    meter = FunctionMeter(lambda c: c[0] + 2 * c[1], 30)
    st_ = initial_phase(meter, SearchParams(initial_grid_size=2))
    assert st_.measurements_made == 4 and sorted(meter.calls) == [(7, 7), (7, 22), (22, 7), (22, 22)]
    assert st_.best_cell == (22, 22) and st_.continuous_pos == (22.5, 22.5)


def _state_at(cell, n=30):
    s = SearchState(n=n, current_cell=cell, continuous_pos=(cell[0] + 0.5, cell[1] + 0.5))
    return s


def test_gradient_example():
    vals = {(11, 10): 3.0, (9, 10): 1.0, (10, 11): 4.0, (10, 9): 2.0}
    g = estimate_gradient(FunctionMeter(lambda c: vals[c], 30), _state_at((10, 10)))
    assert g == (0.5, 0.5)


def test_gradient_equal_neighbours_is_zero():
    assert estimate_gradient(FunctionMeter(lambda c: 7.0, 30), _state_at((10, 10))) == (0.0, 0.0)


def test_gradient_edge_cell_drops_missing_neighbour():
    vals = {(28, 10): 6.0, (29, 11): 1.0, (29, 9): 1.0}
    meter = FunctionMeter(lambda c: vals[c], 30)
    gx, gy = estimate_gradient(meter, _state_at((29, 10)))
    assert gx == -6.0 / 4 and gy == 0.0
    assert (30, 10) not in meter.calls


def test_gradient_degenerate_grid():
    with pytest.raises(DegenerateGrid):
        estimate_gradient(FunctionMeter(lambda c: 1.0, 1), _state_at((0, 0), n=1))


def test_step_arithmetic():
    s = _state_at((10, 10))
    search.step(FunctionMeter(lambda c: 0.0, 30), s, (1.0, 0.0), SearchParams(step_size_cells=2.8))
    assert s.continuous_pos == pytest.approx((13.3, 10.5)) and s.current_cell == (13, 10)
    assert not s.edge_stop


def test_step_clamps_at_edge():
    s = _state_at((29, 29))
    search.step(FunctionMeter(lambda c: 0.0, 30), s, (1 / math.sqrt(2), 1 / math.sqrt(2)), SearchParams(step_size_cells=4))
    assert s.continuous_pos == (30.0, 30.0) and s.current_cell == (29, 29) and s.edge_stop


def test_step_zero_gradient_does_not_move():
    s = _state_at((10, 10))
    meter = FunctionMeter(lambda c: 0.0, 30)
    search.step(meter, s, (0.0, 0.0), SearchParams())
    assert s.continuous_pos == (10.5, 10.5) and meter.calls == []
    with pytest.raises(ValueError):
        search.step(meter, s, (math.nan, 0.0), SearchParams())


def test_constant_field_stops_on_patience():
    meter = FunctionMeter(lambda c: 1.0, 30)
    rep = run(meter, SearchParams())
    assert rep.stop_reason == "no_improvement"
    assert rep.iterations == math.ceil(30 / 3)
    assert rep.best_cell == initial_locations(2, 30)[0]
    assert rep.measurements_to_best == 1


def test_no_cell_measured_twice():
    rng = np.random.default_rng(0)
    field = rng.random((20, 20))
    meter = FunctionMeter(lambda c: field[c], 20)
    rep = run(meter, SearchParams(max_iterations=200))
    assert len(meter.calls) == len(set(meter.calls)) == rep.measurements_made


@given(st.integers(0, 10_000))
def test_best_leakage_is_running_max(seed):
    rng = np.random.default_rng(seed)
    field = rng.random((15, 15))
    rep = run(FunctionMeter(lambda c: field[c], 15), SearchParams())
    values = [v.leakage for v in rep.trajectory]
    assert rep.best_leakage == max(values) == field[rep.best_cell]
    assert values[rep.measurements_to_best - 1] == rep.best_leakage


def test_single_bump_found():
    # smooth single bump at a random position, 100 seeds
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        c = rng.uniform(3, 27, 2)
        cfg = SimDeviceConfig(geometry=ChipGeometry(9.0, 30),
                              field=LeakageField((Bump(tuple(c), 1.0, 8.0),), 0.0, floor_snr=1e-3), seed=seed)
        truth = cfg.snr_map()
        rep = run(FunctionMeter(lambda cell: truth[cell], 30), SearchParams())
        peak = np.unravel_index(np.argmax(truth), truth.shape)
        near = max(abs(rep.best_cell[0] - peak[0]), abs(rep.best_cell[1] - peak[1])) <= 1
        hits += near and rep.measurements_made <= 60
    assert hits >= 95


def test_single_bump_found_with_measured_snr():
    cfg = SimDeviceConfig(geometry=ChipGeometry(9.0, 30),
                          field=LeakageField((Bump((12.0, 17.0), 1.0, 8.0),), 0.01, floor_snr=1e-3))
    meter = LeakageMeter(SimBackend(cfg, 4), "snr", cfg.key_bytes, cfg.fixed_plaintext, 1000, 4)
    rep = run(meter, SearchParams())
    assert abs(rep.best_cell[0] - 12) <= 2 and abs(rep.best_cell[1] - 17) <= 2
    assert rep.traces_used == 1000 * rep.measurements_made


def test_measurement_failure_keeps_partial_state():
    def fn(cell):
        if cell == (22, 22):
            raise OSError("probe lost")
        return 1.0
    with pytest.raises(SearchAborted) as info:
        run(FunctionMeter(fn, 30))
    assert info.value.state.measurements_made == 3


def test_params_validation_and_effective_step():
    for bad in ({"initial_grid_size": 0}, {"step_size_cells": 0}, {"max_iterations": 0}, {"no_improve_limit": 0}):
        with pytest.raises(ValueError):
            SearchParams(**bad)
    assert search.effective_step_mm(2.8, 30, 9.0) == pytest.approx(0.84)
    with pytest.raises(ValueError):
        run(FunctionMeter(lambda c: 1.0, 2), SearchParams(initial_grid_size=3))


def test_one_cell_grid_terminates():
    rep = run(FunctionMeter(lambda c: 1.0, 1), SearchParams(initial_grid_size=1))
    assert rep.stop_reason == "degenerate_grid" and rep.best_cell == (0, 0)
