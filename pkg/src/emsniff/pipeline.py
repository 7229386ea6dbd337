"""End-to-end flows shared by the CLI and the experiments: exhaustive
scans, CEMA at a fixed cell, and the search-then-attack run."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .attack import AttackResult, CemaAccumulator, CorrelationTrajectory, attack, mtd, DEFAULT_STRIDE
from .crypto import as_block, random_inputs
from .device import SimDeviceConfig
from .instrument import GcodeBackend, ScanBackend, SimBackend
from .measures import Measure
from .meter import LeakageMeter
from . import search

MTD_MEASURE = "mtd"


def make_backend(config: SimDeviceConfig, seed: int, spec: str = "sim", feed: float | None = None):
    """Backend from a CLI spec: ``sim`` or ``gcode:<path>``.

    Returns ``(backend, closer)``; call ``closer()`` when done.
    """
    sim = SimBackend(config, seed)
    if spec == "sim":
        return sim, lambda: None
    if spec.startswith("gcode:"):
        path = spec[len("gcode:"):]
        if not path:
            raise ValueError("gcode backend needs a path: gcode:<file>")
        fh = open(path, "wb")
        kw = {} if feed is None else {"feed_mm_min": feed}
        g = config.geometry
        backend = GcodeBackend(fh, g.grid_resolution, config.chip_origin_mm, g.cell_pitch_mm, capture_with=sim, **kw)
        backend.home()
        return backend, fh.close
    raise ValueError(f"unknown backend {spec!r}")


# -- exhaustive scans ---------------------------------------------------------

@dataclass
class ScanResult:
    measure: str
    values: np.ndarray
    traces_per_cell: int
    total_traces: int
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        v = self.values
        finite = np.isfinite(v)
        best = None
        if finite.any():
            flat = np.nanargmin(v) if self.measure == MTD_MEASURE else np.nanargmax(v)
            best = np.unravel_index(flat, v.shape)
        return {
            "measure": self.measure,
            "grid_resolution": int(v.shape[0]),
            "cells": int(v.size),
            "traces_per_cell": self.traces_per_cell,
            "total_traces": self.total_traces,
            "best_cell": [int(best[0]), int(best[1])] if best is not None else None,
            "best_value": float(v[best]) if best is not None else None,
            "undisclosed_cells": int((~finite).sum()) if self.measure == MTD_MEASURE else None,
        }


def _scan_rows(args):
    config, measure, traces, seed, rows, stride, backend = args
    n = config.n
    out = {}
    backend = backend or SimBackend(config, seed)
    if measure == MTD_MEASURE:
        for i in rows:
            for j in range(n):
                res = attack_fixed(backend, config.key_bytes, (i, j), traces, seed, stride)
                out[(i, j)] = res.key_mtd if res.key_mtd is not None else math.nan
    else:
        meter = LeakageMeter(backend, measure, config.key_bytes, config.fixed_plaintext, traces, seed)
        for i in rows:
            for j in range(n):
                out[(i, j)] = meter((i, j)).value
    return out


def full_scan(
    config: SimDeviceConfig,
    measure: str,
    traces_per_cell: int | None = None,
    seed: int | None = None,
    jobs: int = 1,
    stride: int = DEFAULT_STRIDE,
    backend: ScanBackend | None = None,
) -> ScanResult:
    """Measure every cell. ``measure`` is a leakage measure or ``"mtd"``
    (a CEMA of ``traces_per_cell`` traces at each cell; undisclosed = NaN).

    Cells are split across ``jobs`` worker processes unless an explicit
    ``backend`` is given, which is driven serially.
    """
    from .meter import DEFAULT_TRACES

    seed = config.seed if seed is None else seed
    if measure == MTD_MEASURE:
        traces = traces_per_cell or 1000
    else:
        measure = Measure(measure)
        traces = traces_per_cell or DEFAULT_TRACES[measure]
    n = config.n
    if backend is not None:
        jobs = 1
    chunks = [list(range(k, n, max(jobs, 1))) for k in range(max(jobs, 1))]
    work = [(config, measure, traces, seed, rows, stride, backend) for rows in chunks if rows]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_scan_rows, work))
    else:
        parts = [_scan_rows(w) for w in work]
    values = np.full((n, n), np.nan)
    for part in parts:
        for (i, j), v in part.items():
            values[i, j] = v
    if measure == Measure.TVLA:
        traces = 2 * (traces // 2)
    name = MTD_MEASURE if measure == MTD_MEASURE else measure.value
    return ScanResult(name, values, traces, traces * n * n)


# -- attacks --------------------------------------------------------------------

def attack_fixed(backend: ScanBackend, key, cell, traces: int, seed: int, stride: int = DEFAULT_STRIDE,
                 byte_indices=range(16)) -> AttackResult:
    """CEMA with exactly ``traces`` fresh random-plaintext traces at ``cell``."""
    backend.move_to(cell)
    inputs = random_inputs(seed, traces, key, seeding.ATTACK, cell[0], cell[1])
    batch = backend.capture_batch(traces, inputs)
    return attack(batch, key, byte_indices, stride)


def attack_until_disclosed(
    backend: ScanBackend,
    key,
    cell,
    seed: int,
    cap: int = 100_000,
    stride: int = DEFAULT_STRIDE,
    confirm_checkpoints: int = 5,
    byte_indices=range(16),
) -> AttackResult:
    """Capture in batches of ``stride`` until the key is disclosed or ``cap``.

    Disclosure is declared once every byte has led continuously for
    ``max(confirm_checkpoints * stride, MTD / 2)`` traces beyond its MTD.
    ``traces_available`` reports what was actually captured.
    """
    key = as_block(key)
    backend.move_to(cell)
    byte_indices = tuple(byte_indices)
    acc = CemaAccumulator(byte_indices)
    truth = np.array([key[b] for b in byte_indices])
    rows, cps = [], []
    # per byte: checkpoint index where the current leading run began, or -1
    run_start = np.full(len(byte_indices), -1)
    batch_no = 0
    while acc.n < cap:
        count = min(stride, cap - acc.n)
        inputs = random_inputs(seed, count, key, seeding.ATTACK, cell[0], cell[1], batch_no)
        batch_no += 1
        batch = backend.capture_batch(count, inputs)
        acc.update(batch.plaintexts, batch.samples)
        if acc.n < 2:
            continue
        scores = acc.scores()
        rows.append(scores)
        cps.append(acc.n)
        k = len(cps) - 1
        correct = scores[np.arange(len(byte_indices)), truth]
        masked = scores.copy()
        masked[np.arange(len(byte_indices)), truth] = -np.inf
        leading = correct > masked.max(axis=1)
        run_start = np.where(leading, np.where(run_start < 0, k, run_start), -1)
        if (run_start >= 0).all():
            key_mtd = max(cps[s] for s in run_start)
            if acc.n - key_mtd >= max(confirm_checkpoints * stride, key_mtd / 2):
                break
    stacked = np.stack(rows, axis=1) if rows else np.zeros((len(byte_indices), 0, 256))
    trajs = [CorrelationTrajectory(b, np.array(cps), stacked[slot]) for slot, b in enumerate(byte_indices)]
    guess = bytearray(16)
    for t in trajs:
        if len(cps):
            guess[t.byte_index] = t.best_guess()
    return AttackResult(
        recovered_key=bytes(guess),
        byte_mtd=[mtd(t, int(key[t.byte_index])) if len(cps) else None for t in trajs],
        trajectories=trajs,
        traces_available=acc.n,
    )


# -- search then attack ---------------------------------------------------------

@dataclass
class SniffResult:
    search: search.SearchReport
    attack: AttackResult
    traces_per_measure: int
    seed: int

    @property
    def search_traces(self) -> int:
        return self.search.traces_used

    @property
    def attack_traces(self) -> int | None:
        return self.attack.key_mtd

    @property
    def total_traces(self) -> int | None:
        """Search traces plus the MTD of the final CEMA; None if undisclosed."""
        if self.attack.key_mtd is None:
            return None
        return self.search_traces + self.attack.key_mtd

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "traces_per_measure": self.traces_per_measure,
            "search": self.search.to_dict(),
            "attack": self.attack.to_dict(),
            "search_traces": self.search_traces,
            "attack_traces_captured": self.attack.traces_available,
            "total_traces": self.total_traces,
            "disclosed": self.attack.disclosed,
        }


def sniff(
    config: SimDeviceConfig,
    params: search.SearchParams,
    traces_per_measure: int | None = None,
    cema_cap: int = 100_000,
    seed: int | None = None,
    backend: ScanBackend | None = None,
    stride: int = DEFAULT_STRIDE,
) -> SniffResult:
    seed = config.seed if seed is None else seed
    if backend is None:
        backend = SimBackend(config, seed)
    meter = LeakageMeter(backend, params.measure, config.key_bytes, config.fixed_plaintext, traces_per_measure, seed)
    report = search.run(meter, params)
    result = attack_until_disclosed(backend, config.key_bytes, report.best_cell, seed, cema_cap, stride)
    return SniffResult(report, result, meter.traces, seed)
