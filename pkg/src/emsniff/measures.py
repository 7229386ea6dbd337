"""Leakage measures for a batch of traces taken at one cell."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .crypto import HW_SBOX, as_block
from .kernels import binned_moments
from .traces import as_traceset

TVLA_THRESHOLD = 4.5
# reported in place of an unbounded SNR when the pooled noise variance is 0
SNR_CAP = 1e12

DEFAULT_AMPLITUDE_TRACES = 10
DEFAULT_TVLA_GROUP = 200
DEFAULT_SNR_TRACES = 1000


class UndefinedStatistic(ArithmeticError):
    """The statistic has a zero denominator (constant data)."""


class InsufficientClasses(ValueError):
    """Fewer than two Hamming-weight classes are populated."""


class Measure(str, enum.Enum):
    AMPLITUDE = "amplitude"
    TVLA = "tvla"
    SNR = "snr"


@dataclass(frozen=True)
class LeakageScalar:
    kind: Measure
    value: float
    traces_used: int
    leak_detected: bool | None = None
    saturated: bool = False
    sample_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "value": self.value,
            "traces_used": self.traces_used,
            "leak_detected": self.leak_detected,
            "saturated": self.saturated,
            "sample_index": self.sample_index,
        }


def _samples(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(np.asarray(traces, dtype=np.float64))
    return as_traceset(traces).samples


def amplitude(traces) -> LeakageScalar:
    """Mean over traces of each trace's mean-square sample value."""
    if len(traces) == 0:
        raise ValueError("amplitude needs at least one trace")
    x = _samples(traces)
    return LeakageScalar(Measure.AMPLITUDE, float(np.mean(x * x)), x.shape[0])


def welch_t(sample_index: int, group_a, group_b) -> float:
    """Welch's t statistic of one sample column between two groups."""
    a = _column(group_a, sample_index)
    b = _column(group_b, sample_index)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two traces")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        raise UndefinedStatistic("both groups have zero variance")
    return float((a.mean() - b.mean()) / math.sqrt(va / len(a) + vb / len(b)))


def _column(group, sample_index: int) -> np.ndarray:
    x = np.asarray(group, dtype=np.float64) if not hasattr(group, "samples") else group.samples
    if x.ndim == 1:
        if sample_index != 0:
            raise IndexError("1-D group has only sample 0")
        return x
    return x[:, sample_index]


def welch_t_all(group_a, group_b) -> np.ndarray:
    """t for every sample column; NaN where both variances are zero."""
    a, b = _samples(group_a), _samples(group_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("groups must share the sample length")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each group needs at least two traces")
    labels = np.concatenate([np.zeros(len(a), np.intp), np.ones(len(b), np.intp)])
    counts, means, m2 = binned_moments(labels, np.concatenate([a, b]), 2)
    var = m2 / (counts[:, None] - 1)
    den2 = var[0] / counts[0] + var[1] / counts[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (means[0] - means[1]) / np.sqrt(den2)
    return np.where(den2 > 0, t, np.nan)


def tvla(fixed_traces, random_traces) -> LeakageScalar:
    """Non-specific fixed-vs-random t-test reduced to max |t| over time.

    Samples where t is undefined are skipped; if every sample is undefined
    the error propagates.
    """
    t = welch_t_all(fixed_traces, random_traces)
    if np.isnan(t).all():
        raise UndefinedStatistic("t is undefined at every sample")
    abs_t = np.abs(t)
    k = int(np.nanargmax(abs_t))
    value = float(abs_t[k])
    used = len(_samples(fixed_traces)) + len(_samples(random_traces))
    return LeakageScalar(Measure.TVLA, value, used, leak_detected=value > TVLA_THRESHOLD, sample_index=k)


def hw_classes(plaintexts, key, byte_index: int) -> np.ndarray:
    """Hamming-weight class of the S-box output for one key byte, per trace."""
    key = as_block(key)
    pts = np.asarray(plaintexts, dtype=np.uint8).reshape(-1, 16)
    return HW_SBOX[pts[:, byte_index], key[byte_index]].astype(np.intp)


def snr_profile(samples, classes) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample signal variance and pooled noise variance.

    Signal variance is the class-size-weighted variance of the class means;
    noise variance is the pooled within-class variance with n - K degrees
    of freedom.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    counts, means, m2 = binned_moments(classes, x, 9)
    present = counts > 0
    k = int(present.sum())
    n = x.shape[0]
    if k < 2:
        raise InsufficientClasses(f"{k} Hamming-weight class(es) populated, need 2")
    w = counts[present, None] / n
    grand = (w * means[present]).sum(axis=0)
    signal = (w * (means[present] - grand) ** 2).sum(axis=0)
    noise = m2[present].sum(axis=0) / (n - k) if n > k else np.zeros(x.shape[1])
    return signal, noise


def snr(traces, key, byte_index: int = 0) -> LeakageScalar:
    """Max over samples of signal/noise variance under the HW(S-box) model."""
    ts = as_traceset(traces)
    if len(ts) < 2:
        raise InsufficientClasses("need at least two traces")
    signal, noise = snr_profile(ts.samples, hw_classes(ts.plaintexts, key, byte_index))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(noise > 0, signal / noise, np.where(signal > 0, np.inf, 0.0))
    k = int(np.argmax(ratio))
    value = float(ratio[k])
    saturated = not math.isfinite(value) or value > SNR_CAP
    return LeakageScalar(Measure.SNR, SNR_CAP if saturated else value, len(ts), saturated=saturated, sample_index=k)
