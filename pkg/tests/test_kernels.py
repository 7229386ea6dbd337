import numpy as np
import pytest
from hypothesis import given, strategies as st

from emsniff import _kernels_py, kernels

try:
    from emsniff import _kernels as compiled
except ImportError:  # built without the extension
    compiled = None

IMPLS = [_kernels_py] + ([compiled] if compiled is not None else [])


def reference(labels, x, k):
    counts = np.array([(labels == b).sum() for b in range(k)])
    means = np.array([x[labels == b].mean(axis=0) if counts[b] else np.zeros(x.shape[1]) for b in range(k)])
    m2 = np.array([((x[labels == b] - means[b]) ** 2).sum(axis=0) for b in range(k)])
    return counts, means, m2


@pytest.mark.parametrize("impl", IMPLS)
@given(st.integers(1, 200), st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_binned_moments_matches_reference(impl, n, s, k, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, n)
    x = rng.normal(size=(n, s)) * 10 + 100
    got = impl.binned_moments(labels, x, k)
    for g, e in zip(got, reference(labels, x, k)):
        np.testing.assert_allclose(g, e, rtol=1e-10, atol=1e-9)


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
def test_compiled_and_python_agree():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 9, 5000)
    x = rng.normal(size=(5000, 32))
    for a, b in zip(compiled.binned_moments(labels, x, 9), _kernels_py.binned_moments(labels, x, 9)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", IMPLS)
def test_bad_labels_rejected(impl):
    x = np.zeros((3, 2))
    with pytest.raises(ValueError):
        impl.binned_moments(np.array([0, 1, 9]), x, 9)
    with pytest.raises(ValueError):
        impl.binned_moments(np.array([0, 1]), x, 9)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
