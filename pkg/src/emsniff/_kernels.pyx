# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-class moment accumulation."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def binned_moments(labels, traces, Py_ssize_t n_bins):
    """Per-label count, mean and centered sum of squares of every column.

    Two passes over the data: means first, then squared deviations, so the
    result does not suffer the cancellation of a sum/sum-of-squares pass.
    """
    cdef const cnp.intp_t[::1] lab = np.ascontiguousarray(labels, dtype=np.intp)
    cdef const double[:, ::1] x = np.ascontiguousarray(traces, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], s = x.shape[1]
    if lab.shape[0] != n:
        raise ValueError("labels and traces must have the same number of rows")
    counts_arr = np.zeros(n_bins, dtype=np.int64)
    means_arr = np.zeros((n_bins, s), dtype=np.float64)
    m2_arr = np.zeros((n_bins, s), dtype=np.float64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[:, ::1] means = means_arr
    cdef double[:, ::1] m2 = m2_arr
    cdef Py_ssize_t r, c, b
    cdef double d
    with nogil:
        for r in range(n):
            b = lab[r]
            if b < 0 or b >= n_bins:
                with gil:
                    raise ValueError(f"label {b} outside [0, {n_bins})")
            counts[b] += 1
            for c in range(s):
                means[b, c] += x[r, c]
        for b in range(n_bins):
            if counts[b]:
                for c in range(s):
                    means[b, c] /= counts[b]
        for r in range(n):
            b = lab[r]
            for c in range(s):
                d = x[r, c] - means[b, c]
                m2[b, c] += d * d
    return counts_arr, means_arr, m2_arr
