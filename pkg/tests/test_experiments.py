#!/usr/bin/env python3
"""
Reduced-seed runs of the experiment claims: convergence speed of the
full-band optimizer, rate gains over the legacy filters, filter length and
upsampling comparisons, and the stopband-constrained method ordering
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from src.joint_opt import JointOptimizer, stopband_baseline_filterbank
from src.manifold_opt import optimize_P1
from src.models import CovarianceSet, OptimizerParams, StopbandSpec, SystemConfig
from src.system_model import SystemModel, generate_channels, legacy_filterbank

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def paper_config(**changes):
    cfg = SystemConfig.from_json(os.path.join(ROOT, "presets", "paper.json"))
    return cfg.with_updates(**changes) if changes else cfg


def legacy_rate(cfg, seed):
    model = SystemModel(cfg, generate_channels(cfg, seed))
    return model.sum_rate(legacy_filterbank(cfg), CovarianceSet.identity(cfg))


def optimized_rate(cfg, seed, params=None):
    _, trajectory = optimize_P1(cfg, generate_channels(cfg, seed), params)
    return trajectory.final_sum_rate


def test_full_band_optimizer_converges_within_ten_sweeps():
    cfg = paper_config().with_snr_db(10.0)
    params = OptimizerParams(max_outer=10)
    for seed in range(5):
        _, trajectory = optimize_P1(cfg, generate_channels(cfg, seed), params)
        assert trajectory.is_monotone(tol=1e-9)
        assert trajectory.converged, f"seed {seed}: no convergence in {len(trajectory)} sweeps"
        assert len(trajectory) <= 10


def test_gradient_tolerance_barely_moves_the_rate():
    cfg = paper_config().with_snr_db(10.0)
    loose = optimized_rate(cfg, 0, OptimizerParams(inner_eps=1.0))
    tight = optimized_rate(cfg, 0, OptimizerParams(inner_eps=1e-5))
    assert abs(tight - loose) < 0.005 * loose


def test_optimized_rate_beats_legacy_by_twenty_percent():
    cfg = paper_config().with_snr_db(15.0)
    seeds = range(5)
    legacy = np.mean([legacy_rate(cfg, s) for s in seeds])
    optimized = np.mean([optimized_rate(cfg, s) for s in seeds])
    assert optimized >= 1.2 * legacy


def test_short_optimized_filters_beat_long_legacy_filters():
    seeds = range(3)
    for snr in (10.0, 15.0):
        short = paper_config(filter_len=16).with_snr_db(snr)
        long = paper_config(filter_len=48).with_snr_db(snr)
        optimized = np.mean([optimized_rate(short, s) for s in seeds])
        legacy = np.mean([legacy_rate(long, s) for s in seeds])
        assert optimized >= legacy


def test_upsampling_gain_is_small_next_to_optimization_gain():
    # the legacy proxy loses rate at P = M/4 because the CP grows from 6 to 21 symbols
    seeds = range(3)
    full = paper_config().with_snr_db(15.0)
    reduced = paper_config(upsample=full.num_users // 4).with_snr_db(15.0)
    legacy_full = np.mean([legacy_rate(full, s) for s in seeds])
    legacy_reduced = np.mean([legacy_rate(reduced, s) for s in seeds])
    optimized_full = np.mean([optimized_rate(full, s) for s in seeds])
    upsampling_gain = legacy_reduced / legacy_full - 1.0
    optimization_gain = optimized_full / legacy_full - 1.0
    assert optimization_gain > 0
    assert optimization_gain > 3.0 * upsampling_gain
    assert upsampling_gain < 0.1
    assert reduced.cp_len == 21 and full.cp_len == 6


def test_joint_beats_waveform_only_beats_baseline():
    cfg = SystemConfig.from_json(os.path.join(ROOT, "presets", "desk.json"))
    stopbands = StopbandSpec.from_json(os.path.join(ROOT, "presets", "stopbands_desk.json"))
    params = OptimizerParams(max_outer=10)
    for snr in (5.0, 15.0, 25.0):
        rows = []
        config = cfg.with_snr_db(snr)
        for seed in range(3):
            model = SystemModel(config, generate_channels(config, seed))
            start = stopband_baseline_filterbank(config, stopbands)
            baseline = model.sum_rate(start, CovarianceSet.identity(config))
            frozen = JointOptimizer(model, stopbands, params, freeze_covariance=True)
            f_w, _, traj_w = frozen.optimize(start)
            joint = JointOptimizer(model, stopbands, params)
            f_j, _, traj_j = joint.optimize(start)
            for filters, optimizer in ((f_w, frozen), (f_j, joint)):
                assert filters.is_unit_energy(tol=1e-12)
                assert optimizer.violation(filters) <= 1e-8
            assert traj_w.final_sum_rate >= baseline - 1e-9
            assert traj_j.final_sum_rate >= baseline - 1e-9
            rows.append((baseline, traj_w.final_sum_rate, traj_j.final_sum_rate))
        baseline, waveform_only, joint = np.mean(rows, axis=0)
        assert waveform_only >= baseline
        # three seeds instead of twenty: allow 1 % on the joint vs waveform-only ordering
        assert joint >= 0.99 * waveform_only


def main():
    from tests.runner import collect, run_suite
    return run_suite("EXPERIMENT CLAIMS TEST SUITE", collect(globals()))


if __name__ == "__main__":
    sys.exit(main())
