"""Pure-numpy fallback for the compiled kernels; same signatures and results."""
from __future__ import annotations

import numpy as np


def binned_moments(labels, traces, n_bins: int):
    lab = np.ascontiguousarray(labels, dtype=np.intp)
    x = np.ascontiguousarray(traces, dtype=np.float64)
    if lab.shape[0] != x.shape[0]:
        raise ValueError("labels and traces must have the same number of rows")
    if lab.size and (lab.min() < 0 or lab.max() >= n_bins):
        raise ValueError(f"label outside [0, {n_bins})")
    counts = np.bincount(lab, minlength=n_bins).astype(np.int64)
    s = x.shape[1]
    sums = np.empty((n_bins, s))
    for c in range(s):
        sums[:, c] = np.bincount(lab, weights=x[:, c], minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts[:, None] > 0, sums / counts[:, None], 0.0)
    dev = x - means[lab]
    m2 = np.empty((n_bins, s))
    for c in range(s):
        m2[:, c] = np.bincount(lab, weights=dev[:, c] ** 2, minlength=n_bins)
    return counts, means, m2
