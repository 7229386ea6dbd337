"""Trace containers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


@dataclass(eq=False)
class Trace:
    samples: np.ndarray
    plaintext: np.ndarray
    key: np.ndarray
    cell: tuple[int, int] | None = None


@dataclass(eq=False)
class TraceSet:
    """A batch of traces captured at one cell under one key.

    ``samples`` is ``(n, samples_per_trace)`` float64 and ``plaintexts`` is
    ``(n, 16)`` uint8, row-aligned.
    """

    samples: np.ndarray
    plaintexts: np.ndarray
    key: np.ndarray
    cell: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        self.plaintexts = np.asarray(self.plaintexts, dtype=np.uint8).reshape(-1, 16)
        self.key = np.asarray(self.key, dtype=np.uint8)
        if len(self.samples) != len(self.plaintexts):
            raise ValueError("samples and plaintexts must have the same number of rows")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Trace]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TraceSet(self.samples[i], self.plaintexts[i], self.key, self.cell, dict(self.meta))
        return Trace(self.samples[i], self.plaintexts[i], self.key, self.cell)

    @property
    def samples_per_trace(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_traces(cls, traces: Sequence[Trace]) -> "TraceSet":
        if not traces:
            raise ValueError("no traces")
        cells = {t.cell for t in traces}
        return cls(
            np.stack([t.samples for t in traces]),
            np.stack([t.plaintext for t in traces]),
            traces[0].key,
            cells.pop() if len(cells) == 1 else None,
        )


def as_traceset(traces) -> TraceSet:
    if isinstance(traces, TraceSet):
        return traces
    return TraceSet.from_traces(list(traces))
