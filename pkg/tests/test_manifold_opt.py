#!/usr/bin/env python3
"""
Tests for the Riemannian waveform optimizer
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from src.manifold_opt import (
    WaveformOptimizer,
    euclidean_grad,
    objective,
    optimize_P1,
    retract,
    riemannian_grad,
    solve_P1_1,
)
from src.models import CovarianceSet, OptimizerParams, SystemConfig
from src.numerics import normalize
from src.system_model import SystemModel, generate_channels, legacy_filterbank


def random_b_mats(rng, count, size):
    A = rng.standard_normal((count, size, size)) + 1j * rng.standard_normal((count, size, size))
    return A @ np.swapaxes(A, -1, -2).conj()


def small_setup(seed=0):
    cfg = SystemConfig(num_users=3, block_len=6, upsample=2, filter_len=4, channel_len=2, seed=seed)
    return cfg, generate_channels(cfg, seed)


def test_riemannian_gradient_is_tangent():
    rng = np.random.default_rng(30)
    b_mats = random_b_mats(rng, 5, 4)
    for _ in range(10):
        f = normalize(rng.standard_normal(4) + 1j * rng.standard_normal(4))
        grad = riemannian_grad(f, euclidean_grad(f, b_mats))
        assert abs(np.real(np.vdot(grad, f))) < 1e-12


def test_retraction_stays_on_sphere():
    rng = np.random.default_rng(31)
    f = normalize(rng.standard_normal(6) + 1j * rng.standard_normal(6))
    d = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    d -= np.real(np.vdot(f, d)) * f
    assert np.allclose(retract(f, 0.0, d), f)
    for step in (1e-3, 0.5, 10.0):
        assert np.isclose(np.linalg.norm(retract(f, step, d)), 1.0)
    small = retract(f, 1e-6, d)
    assert np.allclose(small, f + 1e-6 * d, atol=1e-10)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(31)
    b_mats = random_b_mats(rng, 6, 5)
    f = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    g = euclidean_grad(f, b_mats)
    h = 1e-6
    for _ in range(5):
        d = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        numeric = (objective(f + h * d, b_mats) - objective(f - h * d, b_mats)) / (2 * h)
        analytic = 2.0 * np.real(np.vdot(d, g))
        assert abs(numeric - analytic) <= 1e-5 * max(1.0, abs(analytic))


def test_zero_channel_leaves_filter_unchanged():
    f0 = normalize(np.arange(1, 5, dtype=complex))
    f, trace = solve_P1_1(f0, np.zeros((3, 4, 4), dtype=complex), OptimizerParams())
    assert np.allclose(f, f0)
    assert trace.iterations == 0
    assert trace.objectives == [0.0]


def test_single_block_converges_to_dominant_eigenvector():
    b_mats = np.diag([10.0, 1.0, 1.0, 1.0]).astype(complex)[None]
    params = OptimizerParams(inner_eps=1e-12, max_inner=3000)
    f, trace = solve_P1_1(np.ones(4, dtype=complex), b_mats, params)
    assert abs(objective(f, b_mats) - np.log2(11.0)) < 1e-9
    assert abs(abs(f[0]) - 1.0) < 1e-5
    assert np.all(np.diff(trace.objectives) >= 0)


def test_inner_ascent_is_monotone():
    rng = np.random.default_rng(32)
    b_mats = random_b_mats(rng, 8, 6)
    f0 = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    params = OptimizerParams(inner_eps=1e-8, max_inner=100)
    f, trace = solve_P1_1(f0, b_mats, params)
    assert np.isclose(np.linalg.norm(f), 1.0)
    assert np.all(np.diff(trace.objectives) >= 0)
    assert trace.objectives[-1] >= objective(normalize(f0), b_mats)


def test_optimize_P1_is_monotone_and_beats_legacy():
    cfg, channels = small_setup(1)
    params = OptimizerParams(max_outer=200)
    filters, trajectory = optimize_P1(cfg, channels, params)
    assert trajectory.is_monotone()
    assert trajectory.converged
    assert filters.is_unit_energy()
    model = SystemModel(cfg, channels)
    covs = CovarianceSet.identity(cfg)
    legacy = model.sum_rate(legacy_filterbank(cfg), covs)
    assert np.isclose(trajectory.initial_sum_rate, legacy)
    assert trajectory.final_sum_rate >= legacy
    assert np.isclose(trajectory.final_sum_rate, model.sum_rate(filters, covs), rtol=1e-9)


def test_woodbury_tracking_matches_rebuild():
    cfg, channels = small_setup(2)
    params = OptimizerParams(max_outer=3)
    f_wb, t_wb = optimize_P1(cfg, channels, params, use_woodbury=True)
    f_rb, t_rb = optimize_P1(cfg, channels, params, use_woodbury=False)
    assert np.allclose(f_wb.coeffs, f_rb.coeffs, atol=1e-7)
    assert np.allclose(t_wb.sum_rates, t_rb.sum_rates, rtol=1e-9)


def test_trajectory_frame_layout():
    cfg, channels = small_setup(3)
    optimizer = WaveformOptimizer(SystemModel(cfg, channels), OptimizerParams(max_outer=2, init="random"))
    init = optimizer.initial_filters(seed=5)
    assert init.is_unit_energy()
    _, trajectory = optimizer.optimize(init)
    frame = trajectory.to_frame()
    assert list(frame.columns) == ['outer_iter', 'sum_rate', 'per_user_rate_1', 'per_user_rate_2',
                                   'per_user_rate_3', 'inner_iters', 'grad_norm']
    assert frame['outer_iter'].tolist() == list(range(1, len(trajectory) + 1))


def main():
    from tests.runner import collect, run_suite
    return run_suite("WAVEFORM OPTIMIZER TEST SUITE", collect(globals()))


if __name__ == "__main__":
    sys.exit(main())
