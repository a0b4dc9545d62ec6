#!/usr/bin/env python3
"""
Tests for LMMSE detection, QAM mapping and the BER harness
"""

import os
import sys
import time

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.analytics import Analytics
from src.exceptions import NumericalWarning
from src.models import CovarianceSet, SystemConfig
from src.numerics import dft_matrix
from src.receiver import (
    ber_monte_carlo,
    build_effective_channel,
    lmmse_detect,
    lmmse_detect_fast,
    qam_demap,
    qam_map,
    qam_slice,
)
from src.system_model import generate_channels, legacy_filterbank, random_filterbank, transmit_circular


def received(cfg, channels, filters, symbols, rng, N0):
    y = transmit_circular(symbols, filters, channels, cfg)
    noise = np.sqrt(N0 / 2) * (rng.standard_normal(cfg.np_len) + 1j * rng.standard_normal(cfg.np_len))
    return dft_matrix(cfg.np_len) @ (y + noise)


def test_qam_roundtrip_and_energy():
    rng = np.random.default_rng(20)
    for K in (4, 16, 64):
        k = int(np.log2(K))
        bits = rng.integers(0, 2, 60 * k)
        assert np.array_equal(qam_demap(qam_map(bits, K), K), bits)
        every = np.array([[(i >> (k - 1 - j)) & 1 for j in range(k)] for i in range(K)]).ravel()
        points = qam_map(every, K)
        assert np.isclose(np.mean(np.abs(points) ** 2), 1.0)
        assert np.unique(np.round(points, 12)).size == K


def test_qam_gray_labels():
    scale = 1.0 / np.sqrt(10.0)
    assert np.isclose(qam_map([0, 0, 0, 0], 16)[0], scale * (3 + 3j))
    # I amplitudes along 00, 01, 11, 10 step down one level at a time
    amps = [qam_map(list(b) + [0, 0], 16)[0].real / scale for b in ((0, 0), (0, 1), (1, 1), (1, 0))]
    assert np.allclose(amps, [3, 1, -1, -3])
    assert np.allclose(qam_slice(np.array([0.9 + 0.2j]) * 3 * scale, 16), scale * (3 + 1j))
    with pytest.raises(ValueError):
        qam_map([0, 1], 8)
    with pytest.raises(ValueError):
        qam_map([0, 1, 0], 16)


def test_block_lmmse_matches_dense():
    rng = np.random.default_rng(21)
    cfg = SystemConfig(num_users=3, block_len=8, upsample=3, filter_len=6, channel_len=3)
    channels = generate_channels(cfg, 4)
    filters = random_filterbank(cfg, 4)
    eff = build_effective_channel(channels, filters, cfg, CovarianceSet.identity(cfg))
    assert eff.block_cols is not None
    Y = rng.standard_normal(cfg.np_len) + 1j * rng.standard_normal(cfg.np_len)
    dense = lmmse_detect(Y, eff, 1.0)
    fast = lmmse_detect_fast(Y, eff, 1.0)
    assert np.max(np.abs(dense.estimates - fast.estimates)) < 1e-9
    assert np.allclose(dense.mse, fast.mse, atol=1e-9)
    assert np.all((fast.mse > 0) & (fast.mse < 1))


def test_noiseless_detection_recovers_symbols():
    rng = np.random.default_rng(22)
    cfg = SystemConfig(num_users=2, block_len=4, upsample=2, filter_len=4, channel_len=1)
    channels = generate_channels(cfg, 7)
    filters = random_filterbank(cfg, 7)
    bits = rng.integers(0, 2, (2, 4 * 4))
    symbols = np.stack([qam_map(b, 16) for b in bits])
    eff = build_effective_channel(channels, filters, cfg)
    Y = received(cfg, channels, filters, symbols, rng, 0.0)
    result = lmmse_detect_fast(Y, eff, 1e-12, qam_order=16)
    assert np.allclose(result.estimates, symbols, atol=1e-4)
    assert np.allclose(result.hard, symbols)
    decided = np.stack([qam_demap(row, 16) for row in result.estimates])
    assert np.array_equal(decided, bits)


def test_unstructured_channel_uses_dense_detector():
    rng = np.random.default_rng(23)
    cfg = SystemConfig(num_users=2, block_len=4, upsample=2, filter_len=4, channel_len=2)
    channels = generate_channels(cfg, 1)
    filters = random_filterbank(cfg, 1)
    A = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    covs = CovarianceSet(A @ np.swapaxes(A, -1, -2).conj())
    eff = build_effective_channel(channels, filters, cfg, covs)
    assert eff.block_cols is None
    Y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    with pytest.warns(NumericalWarning):
        fast = lmmse_detect_fast(Y, eff, 1.0)
    assert np.allclose(fast.estimates, lmmse_detect(Y, eff, 1.0).estimates)


def test_block_lmmse_is_faster_at_scale():
    rng = np.random.default_rng(24)
    cfg = SystemConfig(num_users=8, block_len=64, upsample=8, filter_len=32, channel_len=10)
    eff = build_effective_channel(generate_channels(cfg, 0), legacy_filterbank(cfg), cfg)
    Y = rng.standard_normal(cfg.np_len) + 1j * rng.standard_normal(cfg.np_len)

    def best_of(detect, runs=3):
        times = []
        for _ in range(runs):
            start = time.perf_counter()
            detect(Y, eff, 1.0)
            times.append(time.perf_counter() - start)
        return min(times)

    assert best_of(lmmse_detect_fast) < best_of(lmmse_detect)


def test_ber_curve_decreases_with_snr():
    cfg = SystemConfig(num_users=2, block_len=8, upsample=2, filter_len=4, channel_len=2)
    channels = generate_channels(cfg, 3)
    filters = random_filterbank(cfg, 3)
    frame = ber_monte_carlo(cfg, channels, filters, None, [0.0, 10.0, 20.0], trials=20, seed=3)
    assert list(frame.columns) == ['snr_db', 'ber', 'ci_low', 'ci_high', 'trials']
    assert len(frame) == 3
    assert np.all(frame['ci_low'] <= frame['ber']) and np.all(frame['ber'] <= frame['ci_high'])
    assert Analytics.ber_non_increasing(frame)
    assert frame['ber'].iloc[0] > frame['ber'].iloc[-1]
    with pytest.raises(ValueError):
        ber_monte_carlo(cfg, channels, filters, None, [0.0], trials=0, seed=0)


def main():
    from tests.runner import collect, run_suite
    return run_suite("RECEIVER TEST SUITE", collect(globals()))


if __name__ == "__main__":
    sys.exit(main())
