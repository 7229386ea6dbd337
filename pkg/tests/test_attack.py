import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from emsniff import attack as atk
from emsniff.attack import CemaAccumulator, CorrelationTrajectory, cema, mtd, pearson
from emsniff.calibrate import uniform_device
from emsniff.crypto import random_inputs
from emsniff.device import capture_batch
from emsniff.instrument import SimBackend
from emsniff.measures import UndefinedStatistic
from emsniff.pipeline import attack_fixed, attack_until_disclosed

KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == 1.0
    assert pearson([1, 2, 3], [-1, -2, -3]) == -1.0
    with pytest.raises(UndefinedStatistic):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1], [2])


@given(arrays(float, 12, elements=st.floats(-100, 100)), arrays(float, 12, elements=st.floats(-100, 100)))
def test_pearson_matches_oracle(x, y):
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    assert pearson(x, y) == pytest.approx(oracles.pearson(list(x), list(y)), abs=1e-9)


def _traces(snr, n, seed, noisy=True):
    cfg = uniform_device(snr)
    pts = random_inputs(seed, n, cfg.key_bytes).plaintexts
    draw = np.random.default_rng(seed) if noisy else None
    return capture_batch(cfg, (0, 0), pts, cfg.key_bytes, draw)


def test_accumulator_matches_direct_correlation():
    ts = _traces(0.3, 400, 1)
    acc = CemaAccumulator((0, 5))
    acc.update(ts.plaintexts[:150], ts.samples[:150])
    acc.update(ts.plaintexts[150:], ts.samples[150:])
    r = acc.correlations()
    for slot, b in enumerate((0, 5)):
        for k in (0, 0x2B, 0x9F):
            h = np.array([bin(oracles.SBOX[p ^ k]).count("1") for p in ts.plaintexts[:, b]], float)
            for s in (0, 8 + b, 20):
                assert r[slot, k, s] == pytest.approx(np.corrcoef(h, ts.samples[:, s])[0, 1], abs=1e-10)


def test_noiseless_key_top_ranked_at_32():
    ts = _traces(1.0, 64, 2, noisy=False)
    for b in (0, 7, 15):
        t = cema(ts, b, [16, 32, 48, 64])
        assert t.best_guess(1) == KEY[b]
        assert t.scores[1, KEY[b]] == pytest.approx(1.0)


def test_cema_needs_two_traces():
    with pytest.raises(ValueError):
        cema(_traces(1.0, 1, 0), 0)


@given(st.floats(0.1, 50) | st.floats(-50, -0.1), st.floats(-100, 100))
def test_scores_affine_invariant(scale, shift):
    ts = _traces(0.5, 200, 3)
    base = cema(ts, 0, [100, 200]).scores
    ts2 = type(ts)(ts.samples * scale + shift, ts.plaintexts, ts.key)
    np.testing.assert_allclose(cema(ts2, 0, [100, 200]).scores, base, atol=1e-8)


def _traj(leading_at):
    # checkpoints 100..1000; the true key (0) leads where listed
    cps = np.arange(100, 1001, 100)
    scores = np.full((len(cps), 256), 0.1)
    scores[:, 1] = 0.5
    for c in leading_at:
        scores[list(cps).index(c), 0] = 0.9
    return CorrelationTrajectory(0, cps, scores)


def test_mtd_examples():
    cps = np.array([50, 100, 150, 200, 250, 300, 350])
    scores = np.full((len(cps), 256), 0.1)
    scores[:, 3] = 0.2
    scores[4:, 0x2B] = 0.4
    assert mtd(CorrelationTrajectory(0, cps, scores), 0x2B) == 250
    assert mtd(_traj([]), 0) is None
    assert mtd(_traj([300, 500, 600, 700, 800, 900, 1000]), 0) == 500
    with pytest.raises(ValueError):
        mtd(_traj([]), None)


def test_mtd_tie_is_not_a_lead():
    t = _traj([])
    t.scores[:, 0] = 0.5
    assert mtd(t, 0) is None


def test_checkpoints():
    assert atk.checkpoints_for(120, 50) == [50, 100, 120]
    assert atk.checkpoints_for(100, 50) == [50, 100]
    with pytest.raises(ValueError):
        atk.checkpoints_for(100, 0)


def test_attack_fixed_recovers_key_at_high_snr():
    cfg = uniform_device(2.0)
    res = attack_fixed(SimBackend(cfg, 0), cfg.key_bytes, (0, 0), 500, 0)
    assert res.recovered_key == KEY and res.disclosed and res.key_mtd <= 500


def test_attack_until_disclosed_high_snr():
    cfg = uniform_device(2.0)
    mtds = [attack_until_disclosed(SimBackend(cfg, s), cfg.key_bytes, (0, 0), s).key_mtd for s in range(5)]
    assert all(m is not None and m <= 250 for m in mtds)


def test_attack_until_disclosed_respects_cap():
    cfg = uniform_device(1e-4)
    res = attack_until_disclosed(SimBackend(cfg, 0), cfg.key_bytes, (0, 0), 0, cap=300)
    assert res.traces_available == 300 and not res.disclosed


def test_mtd_shrinks_with_snr():
    cfg_lo, cfg_hi = uniform_device(0.05), uniform_device(0.5)
    lo = np.median([attack_until_disclosed(SimBackend(cfg_lo, s), cfg_lo.key_bytes, (0, 0), s).key_mtd
                    for s in range(3)])
    hi = np.median([attack_until_disclosed(SimBackend(cfg_hi, s), cfg_hi.key_bytes, (0, 0), s).key_mtd
                    for s in range(3)])
    assert lo > 3 * hi
