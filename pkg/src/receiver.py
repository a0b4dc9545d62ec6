"""
Receiver module
Frequency-domain LMMSE multi-user detection, Gray-coded QAM and a BER harness
"""

import warnings

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from src.exceptions import NumericalWarning
from src.models import CovarianceSet, DetectionResult, EffectiveChannel
from src.numerics import dft_matrix, interleave_indices, sqrt_psd
from src.system_model import circulant_spectrum, is_block_structured, transmit_linear_cp, upsampler


def build_effective_channel(channels, filters, config, covs=None):
    """
    T_m = Lambda_H Lambda_F W_NP U C_m^{1/2} W_N^H for every user.
    Without covariances the symbols enter unshaped (C_m^{1/2} = I).
    """
    N, P, NP = config.block_len, config.upsample, config.np_len
    W_np = dft_matrix(NP)
    W_n = dft_matrix(N)
    base = W_np @ upsampler(N, P)
    blocks = []
    for m in range(config.num_users):
        diag = circulant_spectrum(channels[m], NP) * circulant_spectrum(filters[m], NP)
        shaped = base if covs is None else base @ sqrt_psd(covs[m])
        blocks.append(diag[:, None] * shaped @ W_n.conj().T)
    blocks = np.array(blocks)

    block_cols = None
    if covs is None or all(is_block_structured(C) for C in covs.covs):
        # T_m only has entries (i N + n, n); gather them as t_n[i, m]
        idx = interleave_indices(N, P)
        cols = np.arange(N)[:, None]
        block_cols = np.stack([blocks[m][idx, cols] for m in range(config.num_users)], axis=-1)
    return EffectiveChannel(blocks=blocks, block_cols=block_cols, block_len=N, upsample=P)


def _to_time(freq, N):
    """W_N^H applied to every row"""
    return np.fft.ifft(freq, axis=-1) * np.sqrt(N)


def lmmse_detect(Y, eff, N0, qam_order=None):
    """x^ = W_(M)^H T^H (T T^H + N0 I)^{-1} Y, dense"""
    T = eff.stacked
    NP = T.shape[0]
    M, N = eff.num_users, eff.block_len
    gram = T @ T.conj().T + N0 * np.eye(NP)
    K_inv_T = np.linalg.solve(gram, T)
    freq = (T.conj().T @ np.linalg.solve(gram, Y)).reshape(M, N)
    err = 1.0 - np.real(np.einsum("ij,ij->j", T.conj(), K_inv_T))
    mse = err.reshape(M, N).mean(axis=1)
    est = _to_time(freq, N)
    hard = qam_slice(est, qam_order) if qam_order else None
    return DetectionResult(estimates=est, mse=mse, hard=hard)


def lmmse_detect_fast(Y, eff, N0, qam_order=None):
    """Same estimate as lmmse_detect from N independent P x P solves"""
    if eff.block_cols is None:
        warnings.warn("effective channel lacks the block structure; using the dense detector",
                      NumericalWarning, stacklevel=2)
        return lmmse_detect(Y, eff, N0, qam_order)
    t = eff.block_cols
    N, P, M = t.shape
    idx = interleave_indices(N, P)
    K = t @ np.swapaxes(t, -1, -2).conj() + N0 * np.eye(P)
    z = np.linalg.solve(K, Y[idx][..., None])[..., 0]
    freq = np.einsum("npm,np->mn", t.conj(), z)
    kt = np.linalg.solve(K, t)
    err = 1.0 - np.real(np.einsum("npm,npm->mn", t.conj(), kt))
    est = _to_time(freq, N)
    hard = qam_slice(est, qam_order) if qam_order else None
    return DetectionResult(estimates=est, mse=err.mean(axis=1), hard=hard)


# --- QAM ------------------------------------------------------------------------

def _qam_geometry(qam_order):
    if qam_order not in (4, 16, 64):
        raise ValueError(f"unsupported QAM order {qam_order}")
    bits_per_symbol = int(np.log2(qam_order))
    levels = int(round(np.sqrt(qam_order)))
    scale = 1.0 / np.sqrt(2.0 * (qam_order - 1) / 3.0)
    return bits_per_symbol, levels, scale


def _gray_to_index(g):
    idx = g.copy()
    shift = g >> 1
    while np.any(shift):
        idx ^= shift
        shift >>= 1
    return idx


def qam_map(bits, qam_order):
    """Gray-mapped square QAM with unit average energy; first half of each group drives I"""
    bits = np.asarray(bits, dtype=int).ravel()
    k, levels, scale = _qam_geometry(qam_order)
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} is not a multiple of {k}")
    half = k // 2
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(half - 1, -1, -1)
    gi = groups[:, :half] @ weights
    gq = groups[:, half:] @ weights
    amp_i = (levels - 1) - 2 * _gray_to_index(gi)
    amp_q = (levels - 1) - 2 * _gray_to_index(gq)
    return scale * (amp_i + 1j * amp_q)


def qam_demap(symbols, qam_order):
    """Hard-decision inverse of qam_map"""
    k, levels, scale = _qam_geometry(qam_order)
    half = k // 2
    sym = np.asarray(symbols).ravel() / scale

    def axis_bits(values):
        idx = np.clip(np.rint(((levels - 1) - values) / 2.0), 0, levels - 1).astype(int)
        gray = idx ^ (idx >> 1)
        shifts = np.arange(half - 1, -1, -1)
        return (gray[:, None] >> shifts) & 1

    return np.hstack([axis_bits(sym.real), axis_bits(sym.imag)]).ravel()


def qam_slice(symbols, qam_order):
    symbols = np.asarray(symbols)
    return qam_map(qam_demap(symbols, qam_order), qam_order).reshape(symbols.shape)


# --- Monte-Carlo BER ------------------------------------------------------------------

def ber_monte_carlo(config, channels, filters, covs, snr_grid_db, trials, seed, fast=True):
    """
    BER of the LMMSE receiver over the physical CP path, one row per SNR.
    The SNR fixes every user's power to gamma * N0; covariances are rescaled
    to that power (identity covariances when covs is None).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    k = int(np.log2(config.qam_order))
    M, N, NP, N0 = config.num_users, config.block_len, config.np_len, config.noise_power
    detect = lmmse_detect_fast if fast else lmmse_detect
    W_np = dft_matrix(NP)
    rows = []
    for snr_db in snr_grid_db:
        cfg = config.with_snr_db(snr_db)
        if covs is None:
            point_covs = CovarianceSet.identity(cfg)
        else:
            point_covs = covs.scaled([p / q for p, q in zip(cfg.user_power, config.user_power)])
        eff = build_effective_channel(channels, filters, cfg, point_covs)
        errors = 0
        total = 0
        for _ in range(trials):
            bits = rng.integers(0, 2, size=(M, N * k))
            symbols = np.stack([qam_map(b, cfg.qam_order) for b in bits])
            y = transmit_linear_cp(symbols, filters, channels, cfg, point_covs)
            y = y + np.sqrt(N0 / 2) * (rng.standard_normal(NP) + 1j * rng.standard_normal(NP))
            result = detect(W_np @ y, eff, N0)
            decided = np.stack([qam_demap(row, cfg.qam_order) for row in result.estimates])
            errors += int(np.sum(decided != bits))
            total += bits.size
        ci = binomtest(errors, total).proportion_ci(confidence_level=0.95, method="wilson")
        rows.append({
            'snr_db': float(snr_db),
            'ber': errors / total,
            'ci_low': float(ci.low),
            'ci_high': float(ci.high),
            'trials': trials,
        })
    return pd.DataFrame(rows, columns=['snr_db', 'ber', 'ci_low', 'ci_high', 'trials'])
