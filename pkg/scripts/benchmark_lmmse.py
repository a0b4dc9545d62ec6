#!/usr/bin/env python3
"""
Benchmark the dense and the block LMMSE detectors
Times both on the same effective channel for N in {16, 32, 64} with P = M = 8
"""

import argparse
import os
import sys
import time

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from tabulate import tabulate

from src.models import SystemConfig
from src.receiver import build_effective_channel, lmmse_detect, lmmse_detect_fast
from src.system_model import generate_channels, legacy_filterbank
from src.ui import UI

BLOCK_LENGTHS = (16, 32, 64)


def best_time(detect, Y, eff, N0, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        detect(Y, eff, N0)
        times.append(time.perf_counter() - start)
    return min(times)


def benchmark(block_len, repeats, seed):
    cfg = SystemConfig(num_users=8, block_len=block_len, upsample=8, filter_len=32, channel_len=10, seed=seed)
    rng = np.random.default_rng(seed)
    eff = build_effective_channel(generate_channels(cfg, seed), legacy_filterbank(cfg), cfg)
    Y = rng.standard_normal(cfg.np_len) + 1j * rng.standard_normal(cfg.np_len)
    dense = best_time(lmmse_detect, Y, eff, cfg.noise_power, repeats)
    fast = best_time(lmmse_detect_fast, Y, eff, cfg.noise_power, repeats)
    gap = np.max(np.abs(lmmse_detect(Y, eff, cfg.noise_power).estimates
                        - lmmse_detect_fast(Y, eff, cfg.noise_power).estimates))
    return [block_len, cfg.np_len, dense * 1e3, fast * 1e3, dense / fast, gap]


def main():
    parser = argparse.ArgumentParser(description="Dense vs block LMMSE timing")
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per detector (best is kept)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    UI.print_header("LMMSE DETECTOR BENCHMARK")
    rows = [benchmark(N, args.repeats, args.seed) for N in BLOCK_LENGTHS]
    print(tabulate(rows, headers=["N", "NP", "dense [ms]", "block [ms]", "speed-up", "max |diff|"],
                   tablefmt="grid", floatfmt=(".0f", ".0f", ".3f", ".3f", ".1f", ".1e")))
    if all(row[4] > 1.0 for row in rows):
        UI.print_success("Block detector is faster at every size")
    else:
        UI.print_warning("Block detector was not faster at every size")
    return 0


if __name__ == "__main__":
    sys.exit(main())
