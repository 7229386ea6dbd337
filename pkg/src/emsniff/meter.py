"""Measure a leakage scalar at a cell through a scan backend."""
from __future__ import annotations

from . import measures, seeding
from .crypto import as_block, generate_tvla_sets, random_inputs
from .instrument import ScanBackend
from .measures import LeakageScalar, Measure

DEFAULT_TRACES = {
    Measure.AMPLITUDE: measures.DEFAULT_AMPLITUDE_TRACES,
    Measure.TVLA: 2 * measures.DEFAULT_TVLA_GROUP,
    Measure.SNR: measures.DEFAULT_SNR_TRACES,
}


class LeakageMeter:
    """Callable ``cell -> LeakageScalar`` that moves, captures and measures.

    ``traces`` is the total per measurement; TVLA splits it evenly between
    the fixed and random groups.
    """

    def __init__(
        self,
        backend: ScanBackend,
        measure: Measure | str,
        key,
        fixed_pt=None,
        traces: int | None = None,
        seed: int = 0,
        byte_index: int = 0,
    ):
        self.backend = backend
        self.measure = Measure(measure)
        self.key = as_block(key)
        self.fixed_pt = as_block(fixed_pt) if fixed_pt is not None else None
        self.traces = int(traces) if traces is not None else DEFAULT_TRACES[self.measure]
        if self.measure is Measure.TVLA:
            if self.fixed_pt is None:
                raise ValueError("TVLA needs a fixed plaintext")
            if self.traces < 4:
                raise ValueError("TVLA needs at least 2 traces per group")
        elif self.measure is Measure.SNR and self.traces < 2:
            raise ValueError("SNR needs at least 2 traces")
        elif self.traces < 1:
            raise ValueError("traces must be positive")
        self.seed = int(seed)
        self.byte_index = byte_index
        self.traces_spent = 0
        self.measurements = 0
        self._visits: dict[tuple[int, int], int] = {}

    def __call__(self, cell) -> LeakageScalar:
        self.backend.move_to(cell)
        cell = self.backend.current_cell
        k = self._visits.get(cell, 0)
        self._visits[cell] = k + 1
        labels = (cell[0], cell[1], k)
        if self.measure is Measure.TVLA:
            group = self.traces // 2
            sub_seed = int(seeding.stream(self.seed, seeding.TVLA, *labels).integers(2**62))
            fixed, rand = generate_tvla_sets(sub_seed, group, self.key, self.fixed_pt)
            result = measures.tvla(
                self.backend.capture_batch(group, fixed),
                self.backend.capture_batch(group, rand),
            )
        else:
            inputs = random_inputs(self.seed, self.traces, self.key, *labels)
            batch = self.backend.capture_batch(self.traces, inputs)
            if self.measure is Measure.SNR:
                result = measures.snr(batch, self.key, self.byte_index)
            else:
                result = measures.amplitude(batch)
        self.traces_spent += result.traces_used
        self.measurements += 1
        return result
