"""Correlation EM analysis (CEMA) on the first-round S-box output.

For every key byte and each of its 256 hypotheses the Hamming weight of
``S(p ^ k)`` is correlated with every sample column; the hypothesis score
is the largest absolute Pearson coefficient over time. Scores are recorded
at increasing trace-count checkpoints so that the minimum traces to
disclosure (MTD) can be read off afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .crypto import HW_SBOX, as_block
from .measures import UndefinedStatistic
from .traces import as_traceset

DEFAULT_STRIDE = 50


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if len(x) < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatistic("constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


class CemaAccumulator:
    """Running sums for the 256-hypothesis correlation of several key bytes.

    Traces and hypotheses are shifted by a per-column reference (the first
    batch's mean, and HW 4) before summation to keep the one-pass
    covariance well conditioned.
    """

    def __init__(self, byte_indices=range(16)):
        self.byte_indices = tuple(byte_indices)
        self.n = 0
        self._ref = None

    def update(self, plaintexts, samples) -> None:
        pts = np.asarray(plaintexts, dtype=np.uint8).reshape(-1, 16)
        x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if len(pts) != len(x):
            raise ValueError("plaintexts and samples must have the same number of rows")
        if not len(x):
            return
        if self._ref is None:
            s = x.shape[1]
            nb = len(self.byte_indices)
            self._ref = x.mean(axis=0)
            self.sum_t = np.zeros(s)
            self.sum_tt = np.zeros(s)
            self.sum_h = np.zeros((nb, 256))
            self.sum_hh = np.zeros((nb, 256))
            self.sum_ht = np.zeros((nb, 256, s))
        xc = x - self._ref
        self.sum_t += xc.sum(axis=0)
        self.sum_tt += (xc * xc).sum(axis=0)
        for slot, b in enumerate(self.byte_indices):
            h = HW_SBOX[pts[:, b]].astype(np.float64) - 4.0
            self.sum_h[slot] += h.sum(axis=0)
            self.sum_hh[slot] += (h * h).sum(axis=0)
            self.sum_ht[slot] += h.T @ xc
        self.n += len(x)

    def correlations(self) -> np.ndarray:
        """Pearson coefficients, shape ``(bytes, 256, samples)``; NaN if undefined."""
        if self.n < 2:
            raise ValueError("need at least two traces")
        n = self.n
        cov = self.sum_ht - self.sum_h[:, :, None] * self.sum_t[None, None, :] / n
        var_h = self.sum_hh - self.sum_h**2 / n
        var_t = self.sum_tt - self.sum_t**2 / n
        den = np.sqrt(np.clip(var_h, 0, None)[:, :, None] * np.clip(var_t, 0, None)[None, None, :])
        # relative floor: variances that are round-off of zero count as zero
        tiny_h = var_h <= 1e-12 * np.maximum(self.sum_hh, 1e-300)
        tiny_t = var_t <= 1e-12 * np.maximum(self.sum_tt, 1e-300)
        bad = tiny_h[:, :, None] | tiny_t[None, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(bad, np.nan, cov / den)
        return np.clip(r, -1.0, 1.0)

    def scores(self) -> np.ndarray:
        """Max over samples of |rho| per hypothesis, shape ``(bytes, 256)``.

        Undefined correlations contribute 0.
        """
        r = np.abs(self.correlations())
        return np.nan_to_num(r, nan=0.0).max(axis=2)


@dataclass
class CorrelationTrajectory:
    byte_index: int
    checkpoints: np.ndarray
    # (len(checkpoints), 256) max-|rho| per hypothesis
    scores: np.ndarray

    def ranking(self, at: int = -1) -> np.ndarray:
        """Hypotheses sorted best first at checkpoint position ``at``."""
        return np.argsort(-self.scores[at], kind="stable")

    def best_guess(self, at: int = -1) -> int:
        return int(self.ranking(at)[0])

    def leads(self, key_byte: int) -> np.ndarray:
        """Whether ``key_byte`` is strictly top-ranked at each checkpoint."""
        others = np.delete(self.scores, key_byte, axis=1).max(axis=1)
        return self.scores[:, key_byte] > others

    def to_rows(self) -> list[list]:
        return [[int(c)] + [float(v) for v in row] for c, row in zip(self.checkpoints, self.scores)]


def checkpoints_for(total: int, stride: int = DEFAULT_STRIDE) -> list[int]:
    if stride < 1:
        raise ValueError("stride must be positive")
    pts = list(range(stride, total + 1, stride))
    if not pts or pts[-1] != total:
        pts.append(total)
    return pts


def _normalize_checkpoints(checkpoints, total: int) -> list[int]:
    if checkpoints is None:
        return checkpoints_for(total)
    if isinstance(checkpoints, int):
        return checkpoints_for(total, checkpoints)
    pts = [int(c) for c in checkpoints if int(c) <= total]
    if not pts:
        raise ValueError("no checkpoint within the available traces")
    if any(b <= a for a, b in zip(pts, pts[1:])) or pts[0] < 1:
        raise ValueError("checkpoints must be positive and strictly increasing")
    return pts


def cema_multi(traces, byte_indices=range(16), checkpoints=None) -> list[CorrelationTrajectory]:
    """Trajectories for several key bytes in one pass over the traces."""
    ts = as_traceset(traces)
    if len(ts) < 2:
        raise ValueError("CEMA needs at least two traces")
    pts = _normalize_checkpoints(checkpoints, len(ts))
    acc = CemaAccumulator(byte_indices)
    rows = []
    start = 0
    for c in pts:
        acc.update(ts.plaintexts[start:c], ts.samples[start:c])
        start = c
        rows.append(acc.scores() if acc.n >= 2 else np.zeros((len(acc.byte_indices), 256)))
    stacked = np.stack(rows, axis=1)
    cps = np.array(pts)
    return [CorrelationTrajectory(b, cps, stacked[slot]) for slot, b in enumerate(acc.byte_indices)]


def cema(traces, byte_index: int, checkpoints=None) -> CorrelationTrajectory:
    return cema_multi(traces, (byte_index,), checkpoints)[0]


def mtd(trajectory: CorrelationTrajectory, key_byte: int | None, total_traces: int | None = None) -> int | None:
    """Smallest checkpoint from which the true key byte stays strictly top-ranked.

    ``None`` means not disclosed within the trajectory.
    """
    if key_byte is None:
        raise ValueError("MTD needs the true key byte")
    if not 0 <= key_byte < 256:
        raise ValueError(f"key byte out of range: {key_byte}")
    if not len(trajectory.checkpoints):
        raise ValueError("empty trajectory")
    leads = trajectory.leads(key_byte)
    if not leads[-1]:
        return None
    k = len(leads) - 1
    while k > 0 and leads[k - 1]:
        k -= 1
    value = int(trajectory.checkpoints[k])
    if total_traces is not None and value > total_traces:
        return None
    return value


@dataclass
class AttackResult:
    recovered_key: bytes
    byte_mtd: list
    trajectories: list = field(repr=False)
    traces_available: int = 0

    @property
    def key_mtd(self) -> int | None:
        """Traces after which every attacked byte stays disclosed."""
        if any(m is None for m in self.byte_mtd):
            return None
        return max(self.byte_mtd)

    @property
    def disclosed(self) -> bool:
        return self.key_mtd is not None

    def to_dict(self) -> dict:
        return {
            "recovered_key": self.recovered_key.hex(),
            "byte_mtd": self.byte_mtd,
            "key_mtd": self.key_mtd,
            "disclosed": self.disclosed,
            "traces_available": self.traces_available,
            "bytes": [t.byte_index for t in self.trajectories],
        }


def attack(traces, key, byte_indices=range(16), checkpoints=None) -> AttackResult:
    """Run CEMA on ``traces`` and score it against the true ``key``."""
    ts = as_traceset(traces)
    key = as_block(key)
    trajs = cema_multi(ts, byte_indices, checkpoints)
    guess = bytearray(16)
    for t in trajs:
        guess[t.byte_index] = t.best_guess()
    return AttackResult(
        recovered_key=bytes(guess),
        byte_mtd=[mtd(t, int(key[t.byte_index]), len(ts)) for t in trajs],
        trajectories=trajs,
        traces_available=len(ts),
    )
