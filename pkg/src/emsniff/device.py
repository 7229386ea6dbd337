"""Simulated device under test.

A device is a square chip scanned on an N x N grid. Each cell has a
ground-truth side-channel SNR given by a sum of radial bumps with frozen
log-normal roughness. A trace captured at a cell carries one
leaky sample per key byte whose data-dependent part follows the Hamming
weight of the first-round S-box output, scaled so that the variance ratio
signal/noise equals the cell's SNR.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from dataclasses import field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np

from . import seeding
from .crypto import HW, HW_VARIANCE, SBOX, as_block
from .traces import Trace, TraceSet

DEFAULT_KEY = "2b7e151628aed2a6abf7158809cf4f3c"
DEFAULT_FIXED_PT = "da39a3ee5e6b4b0d3255bfef95601890"

PRESETS = ("aes8bit", "aes32bit", "des", "rsa", "aes8bit_masked")


class ScenarioError(ValueError):
    """A scenario document that cannot be turned into a device."""


@dataclass(frozen=True)
class ChipGeometry:
    side_length_mm: float = 9.0
    grid_resolution: int = 30

    def __post_init__(self):
        if self.side_length_mm <= 0:
            raise ValueError("side_length_mm must be positive")
        if self.grid_resolution < 1:
            raise ValueError("grid_resolution must be >= 1")

    @property
    def cell_pitch_mm(self) -> float:
        return self.side_length_mm / self.grid_resolution

    def contains(self, cell) -> bool:
        i, j = cell
        n = self.grid_resolution
        return 0 <= i < n and 0 <= j < n

    def check(self, cell) -> tuple[int, int]:
        if len(cell) != 2 or not self.contains(cell):
            raise ValueError(f"cell {tuple(cell)} is outside the {self.grid_resolution}x{self.grid_resolution} grid")
        return int(cell[0]), int(cell[1])

    def cells(self):
        n = self.grid_resolution
        return [(i, j) for i in range(n) for j in range(n)]


PROFILES = ("gaussian", "cauchy", "flattop")


@dataclass(frozen=True)
class Bump:
    """Radial bump; ``center`` in cell-index units ``(i, j)``.

    ``gaussian``: ``peak * exp(-d^2 / 2r^2)``. ``cauchy``: ``peak / (1 + d^2/r^2)``,
    a sharp peak on long flanks. ``flattop``: ``peak * exp(-(d^2/r^2)^2 / 2)``,
    a plateau with steep shoulders.
    """

    center: tuple[float, float]
    peak: float
    radius_cells: float
    profile: str = "gaussian"

    def __post_init__(self):
        if self.peak <= 0 or self.radius_cells <= 0:
            raise ValueError("bump peak and radius must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown bump profile {self.profile!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def evaluate(self, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        d2 = (ii - self.center[0]) ** 2 + (jj - self.center[1]) ** 2
        u = d2 / self.radius_cells**2
        if self.profile == "cauchy":
            return self.peak / (1.0 + u)
        if self.profile == "flattop":
            return self.peak * np.exp(-0.5 * u * u)
        return self.peak * np.exp(-0.5 * u)

    def rescaled(self, factor: float) -> "Bump":
        # keep the physical position: cell i spans [i, i+1) * pitch
        cx, cy = self.center
        centre = ((cx + 0.5) * factor - 0.5, (cy + 0.5) * factor - 0.5)
        return Bump(centre, self.peak, self.radius_cells * factor, self.profile)


@dataclass(frozen=True)
class LeakageField:
    bumps: tuple[Bump, ...]
    roughness_sigma: float = 0.0
    floor_snr: float = 1e-3
    snr_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "bumps", tuple(self.bumps))
        if self.roughness_sigma < 0:
            raise ValueError("roughness_sigma must be nonnegative")
        if self.floor_snr <= 0 or self.snr_scale <= 0:
            raise ValueError("floor_snr and snr_scale must be positive")


@dataclass(frozen=True)
class SimDeviceConfig:
    geometry: ChipGeometry = ChipGeometry()
    field: LeakageField = LeakageField(())
    samples_per_trace: int = 32
    leaky_sample_index: int = 8
    signal_gain: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0
    # data-independent EM sources: raise the amplitude, not the SNR
    clutter: tuple[Bump, ...] = ()
    name: str = "custom"
    key: str = DEFAULT_KEY
    fixed_plaintext: str = DEFAULT_FIXED_PT
    chip_origin_mm: tuple[float, float] = (50.0, 50.0)
    _cache: dict = dc_field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "clutter", tuple(self.clutter))
        if self.samples_per_trace < 1:
            raise ValueError("samples_per_trace must be positive")
        if not 0 <= self.leaky_sample_index or self.leaky_sample_index + 15 >= self.samples_per_trace:
            raise ValueError("the 16 leaky slots must fit inside the trace")
        if self.signal_gain <= 0 or self.noise_sigma <= 0:
            raise ValueError("signal_gain and noise_sigma must be positive")

    @property
    def n(self) -> int:
        return self.geometry.grid_resolution

    @property
    def key_bytes(self) -> np.ndarray:
        return as_block(self.key)

    def leaky_slot(self, byte_index: int) -> int:
        return self.leaky_sample_index + byte_index

    def snr_map(self) -> np.ndarray:
        """Ground-truth SNR for every cell, indexed ``[i, j]``."""
        if "snr" not in self._cache:
            self._cache["snr"] = _snr_map(self)
        return self._cache["snr"]

    def clutter_map(self) -> np.ndarray:
        if "clutter" not in self._cache:
            ii, jj = _grid(self.n)
            amp = np.zeros((self.n, self.n))
            for b in self.clutter:
                amp += b.evaluate(ii, jj)
            self._cache["clutter"] = amp
        return self._cache["clutter"]

    def with_resolution(self, n: int) -> "SimDeviceConfig":
        """Same chip, same physical field, scanned at ``n x n``."""
        factor = n / self.n
        fld = replace(self.field, bumps=tuple(b.rescaled(factor) for b in self.field.bumps))
        return replace(
            self,
            geometry=ChipGeometry(self.geometry.side_length_mm, n),
            field=fld,
            clutter=tuple(b.rescaled(factor) for b in self.clutter),
            _cache={},
        )

    def with_snr_scale(self, scale: float) -> "SimDeviceConfig":
        return replace(self, field=replace(self.field, snr_scale=scale), _cache={})

    def with_seed(self, seed: int) -> "SimDeviceConfig":
        return replace(self, seed=seed, _cache={})

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("_cache")
        return d


def _grid(n: int):
    idx = np.arange(n, dtype=float)
    return np.meshgrid(idx, idx, indexing="ij")


def _snr_map(config: SimDeviceConfig) -> np.ndarray:
    n = config.n
    ii, jj = _grid(n)
    fld = config.field
    total = np.zeros((n, n))
    for b in fld.bumps:
        total += b.evaluate(ii, jj)
    base = np.maximum(fld.floor_snr, total)
    if fld.roughness_sigma > 0:
        rng = seeding.stream(config.seed, seeding.ROUGHNESS, n)
        base = base * np.exp(fld.roughness_sigma * rng.standard_normal((n, n)))
    return fld.snr_scale * base


def true_snr_at(config: SimDeviceConfig, cell) -> float:
    i, j = config.geometry.check(cell)
    return float(config.snr_map()[i, j])


def signal_scale(config: SimDeviceConfig, cell) -> float:
    """``alpha`` for a cell: ``gain * alpha`` is the leakage per HW unit.

    Chosen so that ``gain**2 * alpha**2 * Var[HW] / noise_sigma**2`` equals
    the cell's SNR.
    """
    snr = true_snr_at(config, cell)
    return math.sqrt(snr * config.noise_sigma**2 / HW_VARIANCE) / config.signal_gain


def _clutter_waveform(samples: int) -> np.ndarray:
    t = np.arange(samples)
    return math.sqrt(2.0) * np.sin(2.0 * math.pi * 3.0 * t / samples + 0.25)


def capture_batch(config: SimDeviceConfig, cell, plaintexts, key, draw: np.random.Generator | None) -> TraceSet:
    """Capture one trace per plaintext row at ``cell``.

    ``draw`` supplies the Gaussian noise; ``None`` captures noiseless traces.
    """
    i, j = config.geometry.check(cell)
    pts = np.asarray(plaintexts, dtype=np.uint8).reshape(-1, 16)
    key = as_block(key)
    n, s = len(pts), config.samples_per_trace
    if draw is None:
        samples = np.zeros((n, s))
    else:
        samples = draw.normal(0.0, config.noise_sigma, size=(n, s))
    amp = config.signal_gain * signal_scale(config, (i, j))
    leak = HW[SBOX[pts ^ key]].astype(np.float64)
    lo = config.leaky_sample_index
    samples[:, lo:lo + 16] += amp * leak
    c = config.clutter_map()[i, j]
    if c:
        samples += c * _clutter_waveform(s)
    return TraceSet(samples, pts, key, (i, j))


def capture_trace(config: SimDeviceConfig, cell, plaintext, key, draw: np.random.Generator | None) -> Trace:
    ts = capture_batch(config, cell, as_block(plaintext)[None, :], key, draw)
    return ts[0]


# -- scenario files ---------------------------------------------------------

def _bump(d: dict, where: str, peak_key: str) -> Bump:
    try:
        return Bump(tuple(d["center"]), float(d[peak_key]), float(d["radius_cells"]), d.get("profile", "gaussian"))
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def config_from_dict(doc: dict) -> SimDeviceConfig:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        geo = ChipGeometry(**doc.get("geometry", {}))
        fdoc = dict(doc.get("field", {}))
        bumps = tuple(_bump(b, f"field.bumps[{k}]", "peak_snr") for k, b in enumerate(fdoc.pop("bumps", [])))
        fld = LeakageField(bumps, **fdoc)
        clutter = tuple(_bump(b, f"clutter[{k}]", "amplitude") for k, b in enumerate(doc.get("clutter", [])))
        rest = {k: v for k, v in doc.items() if k not in ("geometry", "field", "clutter")}
        if "chip_origin_mm" in rest:
            rest["chip_origin_mm"] = tuple(rest["chip_origin_mm"])
        cfg = SimDeviceConfig(geometry=geo, field=fld, clutter=clutter, **rest)
        as_block(cfg.key)
        as_block(cfg.fixed_plaintext)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None
    return cfg


def config_to_dict(config: SimDeviceConfig) -> dict:
    d = config.to_dict()
    d["field"]["bumps"] = [
        {"center": list(b["center"]), "peak_snr": b["peak"], "radius_cells": b["radius_cells"], "profile": b["profile"]}
        for b in d["field"]["bumps"]
    ]
    d["clutter"] = [
        {"center": list(b["center"]), "amplitude": b["peak"], "radius_cells": b["radius_cells"], "profile": b["profile"]}
        for b in d["clutter"]
    ]
    d["chip_origin_mm"] = list(d["chip_origin_mm"])
    return d


def parse_scenario(text: str) -> SimDeviceConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def load_scenario(source: str | Path) -> SimDeviceConfig:
    """Load a scenario from a path or a shipped preset name."""
    if str(source) in PRESETS:
        text = resources.files(__package__).joinpath("scenarios").joinpath(f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    return parse_scenario(text)


def dump_scenario(config: SimDeviceConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2)
