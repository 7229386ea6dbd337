"""Measure, on the simulator, the quantities the budget models are fitted to.

Each probe uses a one-cell device whose true SNR is uniform, so the result
depends only on the SNR and the seed.
"""
from __future__ import annotations

import numpy as np

from .attack import DEFAULT_STRIDE
from .device import ChipGeometry, LeakageField, SimDeviceConfig
from .instrument import SimBackend
from .measures import Measure
from .meter import LeakageMeter
from .pipeline import attack_until_disclosed

DETECTION_RATE = 0.8
SNR_TOLERANCE = 0.5


def uniform_device(snr: float, base: SimDeviceConfig | None = None) -> SimDeviceConfig:
    """A 1x1 device whose only cell has true SNR ``snr``."""
    base = base or SimDeviceConfig()
    return SimDeviceConfig(
        geometry=ChipGeometry(base.geometry.side_length_mm, 1),
        field=LeakageField((), 0.0, floor_snr=snr),
        samples_per_trace=base.samples_per_trace,
        leaky_sample_index=base.leaky_sample_index,
        signal_gain=base.signal_gain,
        noise_sigma=base.noise_sigma,
        key=base.key,
        fixed_plaintext=base.fixed_plaintext,
        name=f"uniform-{snr:g}",
    )


def trace_ladder(lo: int = 8, hi: int = 1 << 18):
    """Trace counts growing by about sqrt(2)."""
    k = 0
    # rounded before comparing so float drift cannot drop the top rung
    while (n := 2 * round(lo * 2.0 ** (k / 2) / 2)) <= hi:
        yield n
        k += 1


def mtd_at(snr: float, seed: int, cap: int = 200_000, stride: int = DEFAULT_STRIDE) -> int | None:
    cfg = uniform_device(snr)
    res = attack_until_disclosed(SimBackend(cfg, seed), cfg.key_bytes, (0, 0), seed, cap, stride)
    return res.key_mtd


def _cost(snr: float, measure: Measure, accept, repeats: int, seed: int, rate: float) -> int | None:
    cfg = uniform_device(snr)
    for n in trace_ladder():
        meter = LeakageMeter(SimBackend(cfg, seed), measure, cfg.key_bytes, cfg.fixed_plaintext, n, seed + n)
        hits = sum(bool(accept(meter((0, 0)))) for _ in range(repeats))
        if hits >= rate * repeats:
            return n
    return None


def tvla_cost(snr: float, repeats: int = 10, seed: int = 0, rate: float = DETECTION_RATE) -> int | None:
    """Fewest traces (both groups) at which TVLA flags the leak in ``rate`` of runs."""
    return _cost(snr, Measure.TVLA, lambda r: r.leak_detected, repeats, seed, rate)


def snr_cost(snr: float, repeats: int = 10, seed: int = 0, rate: float = DETECTION_RATE,
             tolerance: float = SNR_TOLERANCE) -> int | None:
    """Fewest traces at which the SNR estimate is within ``tolerance`` (relative)
    of the truth in ``rate`` of runs."""
    return _cost(snr, Measure.SNR, lambda r: abs(r.value / snr - 1.0) <= tolerance, repeats, seed, rate)


def calibrate(snrs, repeats: int = 5, seed: int = 0, cap: int = 200_000, stride: int = DEFAULT_STRIDE) -> dict:
    """Fit inputs ``{"mtd", "tvla_cost", "snr_cost"}``, each ``{snr: traces}``.

    MTD is the median over ``repeats`` attacks; points that never disclose
    within ``cap`` are dropped.
    """
    out = {"mtd": {}, "tvla_cost": {}, "snr_cost": {}}
    for k, snr in enumerate(snrs):
        snr = float(snr)
        mtds = [mtd_at(snr, seed + 1000 * k + r, cap, stride) for r in range(repeats)]
        mtds = [m for m in mtds if m is not None]
        if len(mtds) * 2 > repeats:
            out["mtd"][snr] = float(np.median(mtds))
        for name, fn in (("tvla_cost", tvla_cost), ("snr_cost", snr_cost)):
            c = fn(snr, max(repeats, 10), seed + 1000 * k)
            if c is not None:
                out[name][snr] = float(c)
    return out
