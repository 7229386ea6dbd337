"""Scan backends: move the probe to a grid cell, capture a batch there.

``SimBackend`` captures from a simulated device. ``GcodeBackend`` writes the
probe motion as G-code to a byte sink and can delegate captures to another
backend (normally a simulator) so that a scan run produces both traces and
a replayable motion transcript.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import BinaryIO

from . import seeding
from .crypto import InputSet
from .device import SimDeviceConfig, capture_batch
from .traces import TraceSet

DEFAULT_FEED_MM_MIN = 3000
# 180 mm/s printer limit
MAX_FEED_MM_MIN = 10800
MACHINE_STEP_MM = 0.1


class ProtocolViolation(RuntimeError):
    """Backend operations were issued in an order the contract forbids."""


class OutOfGrid(ValueError):
    """A move was requested to a cell outside the scan grid."""


@dataclass(frozen=True)
class MoveAck:
    cell: tuple[int, int]
    x_mm: float
    y_mm: float
    # target is not a multiple of the machine step; firmware will snap it
    off_step: bool = False

    @property
    def snapped_mm(self) -> tuple[float, float]:
        return snap_to_step(self.x_mm), snap_to_step(self.y_mm)


class ScanBackend(abc.ABC):
    def __init__(self, grid_resolution: int, chip_origin_mm=(0.0, 0.0), cell_pitch_mm: float = 1.0):
        self.grid_resolution = int(grid_resolution)
        self.chip_origin_mm = (float(chip_origin_mm[0]), float(chip_origin_mm[1]))
        self.cell_pitch_mm = float(cell_pitch_mm)
        self.current_cell: tuple[int, int] | None = None

    @property
    def capabilities(self) -> dict:
        return {
            "grid_resolution": self.grid_resolution,
            "chip_origin_mm": self.chip_origin_mm,
            "cell_pitch_mm": self.cell_pitch_mm,
        }

    def cell_center_mm(self, cell) -> tuple[float, float]:
        i, j = cell
        ox, oy = self.chip_origin_mm
        return ox + (i + 0.5) * self.cell_pitch_mm, oy + (j + 0.5) * self.cell_pitch_mm

    def _check_cell(self, cell) -> tuple[int, int]:
        i, j = (int(v) for v in cell)
        if not (0 <= i < self.grid_resolution and 0 <= j < self.grid_resolution):
            raise OutOfGrid(f"cell {(i, j)} outside the {self.grid_resolution}x{self.grid_resolution} grid")
        return i, j

    def move_to(self, cell) -> MoveAck:
        cell = self._check_cell(cell)
        x, y = self.cell_center_mm(cell)
        ack = MoveAck(cell, x, y, off_step=_off_step(x) or _off_step(y))
        self._move(ack)
        self.current_cell = cell
        return ack

    def home(self) -> None:
        self._home()
        self.current_cell = None

    def capture_batch(self, count: int, inputs: InputSet) -> TraceSet:
        if count < 1:
            raise ValueError("count must be positive")
        if self.current_cell is None:
            raise ProtocolViolation("capture requested before any move_to")
        if len(inputs) < count:
            raise ValueError(f"input set has {len(inputs)} plaintexts, {count} requested")
        return self._capture(count, inputs.head(count))

    @abc.abstractmethod
    def _move(self, ack: MoveAck) -> None: ...

    @abc.abstractmethod
    def _home(self) -> None: ...

    @abc.abstractmethod
    def _capture(self, count: int, inputs: InputSet) -> TraceSet: ...


def _off_step(v: float) -> bool:
    steps = v / MACHINE_STEP_MM
    return abs(steps - round(steps)) > 1e-6


class SimBackend(ScanBackend):
    """Captures from a simulated device.

    The noise of the k-th capture at a cell comes from the stream
    ``(seed, NOISE, i, j, k)``, so a replayed call sequence is bit-identical
    and results do not depend on the order in which cells are visited.
    """

    def __init__(self, config: SimDeviceConfig, seed: int | None = None):
        g = config.geometry
        super().__init__(g.grid_resolution, config.chip_origin_mm, g.cell_pitch_mm)
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        self.position = (0, 0)
        self.traces_captured = 0
        self._visits: dict[tuple[int, int], int] = {}

    def _move(self, ack: MoveAck) -> None:
        self.position = ack.cell

    def _home(self) -> None:
        self.position = (0, 0)

    def _capture(self, count: int, inputs: InputSet) -> TraceSet:
        cell = self.current_cell
        k = self._visits.get(cell, 0)
        self._visits[cell] = k + 1
        draw = seeding.stream(self.seed, seeding.NOISE, cell[0], cell[1], k)
        ts = capture_batch(self.config, cell, inputs.plaintexts, inputs.key, draw)
        ts.meta.update(backend="sim", seed=self.seed, capture=k)
        self.traces_captured += count
        return ts


class GcodeBackend(ScanBackend):
    """Emits probe motion as G-code text to a binary sink.

    Only G21, G90, G28, G1 (X/Y/F) and M400 are ever written; Z is never
    commanded. Captures go to ``capture_with`` if given.
    """

    def __init__(
        self,
        sink: BinaryIO,
        grid_resolution: int,
        chip_origin_mm=(50.0, 50.0),
        cell_pitch_mm: float = 0.3,
        feed_mm_min: float = DEFAULT_FEED_MM_MIN,
        capture_with: ScanBackend | None = None,
    ):
        super().__init__(grid_resolution, chip_origin_mm, cell_pitch_mm)
        self.sink = sink
        self.feed_mm_min = min(float(feed_mm_min), MAX_FEED_MM_MIN)
        if self.feed_mm_min <= 0:
            raise ValueError("feed rate must be positive")
        self.capture_with = capture_with

    def _emit(self, *lines: str) -> None:
        self.sink.write("".join(line + "\n" for line in lines).encode("ascii"))

    def _flush(self) -> None:
        flush = getattr(self.sink, "flush", None)
        if flush is not None:
            flush()

    def _move(self, ack: MoveAck) -> None:
        self._emit(f"G1 X{ack.x_mm:.2f} Y{ack.y_mm:.2f} F{_fmt_feed(self.feed_mm_min)}", "M400")
        self._flush()
        if self.capture_with is not None:
            self.capture_with.move_to(ack.cell)

    def _home(self) -> None:
        self._emit("G21", "G90", "G28")
        self._flush()
        if self.capture_with is not None:
            self.capture_with.home()

    def _capture(self, count: int, inputs: InputSet) -> TraceSet:
        if self.capture_with is None:
            raise ProtocolViolation("this G-code backend has no capture device attached")
        return self.capture_with.capture_batch(count, inputs)


def _fmt_feed(feed: float) -> str:
    return str(int(feed)) if float(feed).is_integer() else f"{feed:.1f}"


def snap_to_step(value_mm: float) -> float:
    return round(round(value_mm / MACHINE_STEP_MM) * MACHINE_STEP_MM, 10)
