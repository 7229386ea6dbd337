"""Trace-budget models for searched versus exhaustive attacks.

With an N x N scan grid and a device SNR:

* searched, TVLA measure:  N * c0 / snr + k1 / snr**2
* searched, SNR measure:   N * c1 / snr + k1 / snr**2
* exhaustive CEMA:         N**2 * k1 / snr**2

``c0`` and ``c1`` scale the traces one leakage measurement needs, ``k1``
the traces one CEMA needs; ``k0`` is the MTD proportionality constant.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class IllConditionedFit(ValueError):
    """Too few points, or too narrow an SNR span, to fit a constant."""


@dataclass(frozen=True)
class BudgetConstants:
    k0: float
    k1: float
    c0: float
    c1: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BudgetConstants":
        return cls(**{k: float(d[k]) for k in ("k0", "k1", "c0", "c1")})


def _check(n: int, snr: float) -> None:
    if n < 1:
        raise ValueError("N must be >= 1")
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")


def n_scn_tvla(n: int, snr: float, c: BudgetConstants) -> float:
    _check(n, snr)
    return n * c.c0 / snr + c.k1 / snr**2


def n_scn_snr(n: int, snr: float, c: BudgetConstants) -> float:
    _check(n, snr)
    return n * c.c1 / snr + c.k1 / snr**2


def n_exh(n: int, snr: float, c: BudgetConstants) -> float:
    _check(n, snr)
    return n * n * c.k1 / snr**2


def crossover_snr(n: int, c: BudgetConstants) -> float | None:
    """SNR below which the exhaustive budget exceeds the searched (TVLA) one.

    Solves ``N**2 k1 / s**2 = N c0 / s + k1 / s**2``; ``None`` for N = 1.
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    if n == 1:
        return None
    return c.k1 * (n * n - 1) / (n * c.c0)


def _fixed_slope_fit(points: dict, slope: float, what: str) -> float:
    """Least squares of ``log y = log a + slope * log snr`` for ``a``."""
    if len(points) < 3:
        raise IllConditionedFit(f"{what}: need at least 3 points, got {len(points)}")
    s = np.array([float(k) for k in points], dtype=float)
    y = np.array([float(v) for v in points.values()], dtype=float)
    if (s <= 0).any() or (y <= 0).any():
        raise IllConditionedFit(f"{what}: snr and counts must be positive")
    if math.log10(s.max() / s.min()) < 1.0:
        raise IllConditionedFit(f"{what}: snr span below one decade")
    return float(np.exp(np.mean(np.log(y) - slope * np.log(s))))


def fit_constants(mtd: dict, tvla_cost: dict, snr_cost: dict, attack_cost: dict | None = None) -> BudgetConstants:
    """Fit the four constants from ``{snr: traces}`` measurements.

    ``mtd`` gives k0 (slope -2). ``attack_cost`` (default: ``mtd``) gives k1,
    the cost of the one CEMA a search ends with. ``tvla_cost`` and
    ``snr_cost`` are traces per measurement and give c0 and c1 (slope -1).
    """
    k0 = _fixed_slope_fit(mtd, -2.0, "mtd")
    k1 = _fixed_slope_fit(attack_cost, -2.0, "attack_cost") if attack_cost is not None else k0
    c0 = _fixed_slope_fit(tvla_cost, -1.0, "tvla_cost")
    c1 = _fixed_slope_fit(snr_cost, -1.0, "snr_cost")
    return BudgetConstants(k0=k0, k1=k1, c0=c0, c1=c1)


@dataclass
class BudgetCurve:
    n: int
    snr_grid: list
    n_scn_tvla: list
    n_scn_snr: list
    n_exh: list

    def rows(self):
        return zip(self.snr_grid, self.n_scn_tvla, self.n_scn_snr, self.n_exh)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snr", "n_scn_tvla", "n_scn_snr", "n_exh"])
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])


def curve(n: int, c: BudgetConstants, snr_min: float, snr_max: float, points: int = 50) -> BudgetCurve:
    if not (0 < snr_min < snr_max) or points < 2:
        raise ValueError("need 0 < snr_min < snr_max and at least 2 points")
    grid = np.logspace(math.log10(snr_min), math.log10(snr_max), points)
    return BudgetCurve(
        n=n,
        snr_grid=grid.tolist(),
        n_scn_tvla=[n_scn_tvla(n, s, c) for s in grid],
        n_scn_snr=[n_scn_snr(n, s, c) for s in grid],
        n_exh=[n_exh(n, s, c) for s in grid],
    )


def read_curve_csv(path: str | Path) -> BudgetCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    cols = list(zip(*[[float(v) for v in r] for r in rows]))
    return BudgetCurve(0, list(cols[0]), list(cols[1]), list(cols[2]), list(cols[3]))


def write_fit_report(path: str | Path, constants: BudgetConstants, inputs: dict | None = None) -> None:
    doc = {"constants": constants.to_dict()}
    if inputs is not None:
        doc["inputs"] = {k: {repr(float(s)): v for s, v in pts.items()} for k, pts in inputs.items() if pts}
    Path(path).write_text(json.dumps(doc, indent=2))


def read_constants(path: str | Path) -> BudgetConstants:
    doc = json.loads(Path(path).read_text())
    return BudgetConstants.from_dict(doc.get("constants", doc))


def read_fit_inputs(path: str | Path) -> dict:
    """Fit inputs JSON: ``{"mtd": {snr: traces}, "tvla_cost": ..., "snr_cost": ...}``."""
    doc = json.loads(Path(path).read_text())
    doc = doc.get("inputs", doc)
    return {k: {float(s): float(v) for s, v in pts.items()} for k, pts in doc.items()}
