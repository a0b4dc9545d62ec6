"""
CP-FBMA system model
Structured matrices, interference states, sum-rate evaluators and the
time-domain transmit paths for one channel realization
"""

import math
import warnings

import numpy as np
import scipy.linalg as sla

from src.exceptions import ConfigError, NotPsdError, NumericalWarning
from src.models import ChannelSet, FilterBank, InterferenceState, ReducedUserChannel
from src.numerics import (
    LN2,
    block_inv_sqrt,
    dft_matrix,
    hermitize,
    interleave_indices,
    log2det,
    sqrt_psd,
    woodbury_update,
)

STRUCTURE_TOL = 1e-8


# --- dimensioning utilities ---------------------------------------------------

def cp_length(filter_len, channel_len, upsample):
    """L_g = ceil((N_f + L_h - 1) / P)"""
    if min(filter_len, channel_len, upsample) < 1:
        raise ConfigError("cp_length arguments must be >= 1")
    return math.ceil((filter_len + channel_len - 1) / upsample)


def spectral_efficiency(block_len, cp_len, qam_order):
    """N log2(K) / (N + L_g) in bits/s/Hz"""
    return block_len * math.log2(qam_order) / (block_len + cp_len)


def channel_length_from_delay(max_excess_delay, sample_interval):
    """Channel taps covered by the maximum excess delay, floor(tau_max / T_s)"""
    return int(math.floor(max_excess_delay / sample_interval + 1e-9))


def block_duration(block_len, cp_len, upsample, sample_interval):
    """Duration (N + L_g) P T_s of one CP-FBMA block in seconds"""
    return (block_len + cp_len) * upsample * sample_interval


def max_block_length(coherence_time, sample_interval, cp_len, upsample):
    """Largest N whose block still fits in the coherence time"""
    return int(math.floor(coherence_time / (upsample * sample_interval) + 1e-9)) - cp_len


def blocks_per_coherence(coherence_time, block_len, cp_len, upsample, sample_interval):
    return int(math.floor(coherence_time / block_duration(block_len, cp_len, upsample, sample_interval)))


# --- structured matrices ------------------------------------------------------

def upsampler(N, P):
    """NP x N matrix with ones at (nP, n)"""
    U = np.zeros((N * P, N))
    U[np.arange(N) * P, np.arange(N)] = 1.0
    return U


def omega_permutation(N, P):
    """pi(w1 P + w2) = w1 + w2 N; row w of Omega selects entry pi(w)"""
    return interleave_indices(N, P).ravel()


def omega_matrix(N, P):
    perm = omega_permutation(N, P)
    Om = np.zeros((N * P, N * P))
    Om[np.arange(N * P), perm] = 1.0
    return Om


def circulant_spectrum(v, size):
    """Unnormalized size-point DFT of zero-padded v (diagonal of W Circ(v) W^H)"""
    v = np.asarray(v)
    if v.size > size:
        raise ConfigError(f"vector of length {v.size} does not fit a {size}-point DFT")
    return np.fft.fft(v, size)


def circulant_matrix(v, size):
    padded = np.zeros(size, dtype=complex)
    padded[: len(v)] = v
    return sla.circulant(padded)


def filter_dft(f, N, P):
    """NP-point spectrum of a synthesis filter"""
    return circulant_spectrum(f, N * P)


def frequency_profile(C):
    """
    Diagonal d_n of W_N C W_N^H and the relative off-diagonal mass.
    The block-domain evaluators need the off-diagonal mass to vanish.
    """
    C = np.asarray(C)
    W = dft_matrix(C.shape[0])
    D = W @ C @ W.conj().T
    d = np.real(np.diag(D))
    total = np.linalg.norm(D)
    off = np.linalg.norm(D - np.diag(np.diag(D))) / total if total > 0 else 0.0
    return d, float(off)


def is_block_structured(C, tol=STRUCTURE_TOL):
    return frequency_profile(C)[1] <= tol


def q_profile(C, P, N0):
    """Length-NP vector holding sqrt(d_n / (P N0)) at every index i N + n"""
    d, _ = frequency_profile(C)
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    if np.any(d < -1e-10 * scale):
        raise NotPsdError("covariance has a negative frequency-domain power")
    vals = np.sqrt(np.maximum(d, 0.0) / (P * N0))
    return np.tile(vals, P)


def build_q_vectors(C, P, N0):
    """Rows q_{m,n}, n = 0..N-1, each nonzero only at indices i N + n"""
    N = np.asarray(C).shape[0]
    profile = q_profile(C, P, N0)
    Q = np.zeros((N, N * P))
    idx = interleave_indices(N, P)
    for n in range(N):
        Q[n, idx[n]] = profile[idx[n]]
    return Q


def dft_columns(N, P, filter_len):
    """sqrt(NP) W_NP restricted to its first N_f columns"""
    NP = N * P
    return np.exp(-2j * np.pi * np.outer(np.arange(NP), np.arange(filter_len)) / NP)


def build_G(h, q, N, P, filter_len):
    """Dense G_{m,n} = sqrt(NP) Lambda_H Lambda_q W_NP Pad (NP x N_f)"""
    hs = circulant_spectrum(h, N * P)
    return (hs * np.asarray(q))[:, None] * dft_columns(N, P, filter_len)


def build_interference(g_tensors, filters, exclude=None):
    """
    Phi_m = I + sum_{i != m} sum_n G_{i,n} f_i f_i^H G_{i,n}^H in interleaved
    block form. g_tensors has shape (M, N, P, N_f).
    """
    vecs = np.einsum("mnpj,mj->mnp", g_tensors, filters.coeffs)
    return interference_from_vectors(vecs, exclude)


def interference_from_vectors(vecs, exclude=None):
    M, N, P = vecs.shape
    mask = np.ones(M, dtype=bool)
    if exclude is not None:
        mask[exclude] = False
    phi = np.broadcast_to(np.eye(P, dtype=complex), (N, P, P)).copy()
    phi += np.einsum("mnp,mnq->npq", vecs[mask], vecs[mask].conj())
    phi_inv, phi_inv_sqrt = block_inv_sqrt(phi)
    return InterferenceState(hermitize(phi), phi_inv, phi_inv_sqrt, excluded=exclude)


def reduce_user_channel(state, g_tensor):
    """G~_{m,n} = Phi_n^{-1/2} G_{m,n} on the nonzero rows, B_{m,n} = G~^H G~"""
    g_tilde = np.einsum("npq,nqj->npj", state.phi_inv_sqrt_blocks, g_tensor)
    b_mats = hermitize(np.einsum("npi,npj->nij", g_tilde.conj(), g_tilde))
    return ReducedUserChannel(g_tilde=g_tilde, b_mats=b_mats)


def reduced_rate(f, b_mats):
    """sum_n log2(1 + f^H B_{m,n} f), user m's rate above log2|Phi_m|"""
    quad = np.real(np.einsum("i,nij,j->n", f.conj(), b_mats, f))
    return float(np.sum(np.log1p(np.maximum(quad, 0.0))) / LN2)


# --- random and reference inputs ------------------------------------------------

def generate_channels(config, seed):
    """Equal-power complex Gaussian taps normalized to unit total power"""
    rng = np.random.default_rng(seed)
    shape = (config.num_users, config.channel_len)
    taps = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2 * config.channel_len)
    taps /= np.linalg.norm(taps, axis=1, keepdims=True)
    return ChannelSet(taps)


def legacy_filterbank(config):
    """
    Wide-band reference filters: a Hamming-tapered truncated Dirichlet lowpass
    of NP/M bins modulated to bin m NP/M, unit energy.
    """
    M, NP, Nf = config.num_users, config.np_len, config.filter_len
    if Nf < M:
        raise ConfigError(f"legacy filters need filter_len >= num_users ({Nf} < {M})")
    width = NP / M
    t = np.arange(Nf) - (Nf - 1) / 2.0
    proto = np.sinc(width * t / NP) * np.hamming(Nf)
    if not np.any(proto):
        proto = np.ones(Nf)
    rows = []
    for m in range(M):
        f = proto * np.exp(2j * np.pi * m * width * np.arange(Nf) / NP)
        rows.append(f / np.linalg.norm(f))
    return FilterBank(np.array(rows))


def random_filterbank(config, seed):
    rng = np.random.default_rng(seed)
    shape = (config.num_users, config.filter_len)
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return FilterBank(coeffs / np.linalg.norm(coeffs, axis=1, keepdims=True))


# --- transmit paths -------------------------------------------------------------

def _shaped_symbols(symbols, covs, m):
    if covs is None:
        return np.asarray(symbols[m], dtype=complex)
    return sqrt_psd(covs[m]) @ symbols[m]


def transmit_circular(symbols, filters, channels, config, covs=None):
    """Noiseless received block sum_m H_m F_m U x_m of the circular model"""
    N, P, NP = config.block_len, config.upsample, config.np_len
    y = np.zeros(NP, dtype=complex)
    for m in range(config.num_users):
        up = np.zeros(NP, dtype=complex)
        up[::P] = _shaped_symbols(symbols, covs, m)
        spec = circulant_spectrum(channels[m], NP) * circulant_spectrum(filters[m], NP)
        y += np.fft.ifft(spec * np.fft.fft(up))
    return y


def transmit_linear_cp(symbols, filters, channels, config, covs=None, cp_len=None):
    """CP insertion, upsampling, linear convolution with f_m and h_m, CP removal"""
    N, P = config.block_len, config.upsample
    cp = config.cp_len if cp_len is None else int(cp_len)
    total = (N + cp) * P
    rx = None
    for m in range(config.num_users):
        x = _shaped_symbols(symbols, covs, m)
        x_cp = np.concatenate([x[N - cp:], x]) if cp else x
        up = np.zeros(total, dtype=complex)
        up[::P] = x_cp
        out = np.convolve(np.convolve(up, filters[m]), channels[m])
        rx = out if rx is None else rx + out
    return rx[cp * P: cp * P + N * P]


# --- interference bookkeeping -------------------------------------------------------

class InterferenceTracker:
    """Keeps Psi = I + sum over all users and derives each Phi_m by a rank-one downdate"""

    def __init__(self, vecs, use_woodbury=True):
        self.vecs = np.array(vecs, dtype=complex)
        self.use_woodbury = use_woodbury
        _, N, P = self.vecs.shape
        self.psi = np.broadcast_to(np.eye(P, dtype=complex), (N, P, P)).copy()
        self.psi += np.einsum("mnp,mnq->npq", self.vecs, self.vecs.conj())
        self.psi_inv, _ = block_inv_sqrt(self.psi)

    def state_excluding(self, m):
        if not self.use_woodbury:
            return interference_from_vectors(self.vecs, exclude=m)
        g = self.vecs[m]
        phi = self.psi - g[:, :, None] * g.conj()[:, None, :]
        phi_inv = hermitize(woodbury_update(self.psi_inv, g, sign=-1))
        w, V = np.linalg.eigh(phi_inv)
        inv_sqrt = (V * np.sqrt(np.maximum(w, 0.0))[:, None, :]) @ np.swapaxes(V, -1, -2).conj()
        return InterferenceState(hermitize(phi), phi_inv, hermitize(inv_sqrt), excluded=m)

    def update_user(self, m, new_vec, state):
        """Replace user m's block vectors, state being Phi_m from state_excluding(m)"""
        self.vecs[m] = new_vec
        outer = new_vec[:, :, None] * new_vec.conj()[:, None, :]
        self.psi = hermitize(state.phi_blocks + outer)
        if self.use_woodbury:
            self.psi_inv = hermitize(woodbury_update(state.phi_inv_blocks, new_vec, sign=1))
        else:
            self.psi_inv, _ = block_inv_sqrt(self.psi)

    def log2det_psi(self):
        return float(np.sum(log2det(self.psi)))


class SystemModel:
    """Structured matrices and rate evaluators of one channel realization"""

    def __init__(self, config, channels):
        self.config = config
        self.channels = channels
        N, P = config.block_len, config.upsample
        self.idx = interleave_indices(N, P)
        self.h_spec = np.stack([circulant_spectrum(h, config.np_len) for h in channels.taps])
        self.dft_cols = dft_columns(N, P, config.filter_len)

    @property
    def num_users(self):
        return self.config.num_users

    def all_structured(self, covs):
        return all(is_block_structured(C) for C in covs.covs)

    def g_tensor(self, m, C):
        """Compressed G_{m,n}: shape (N, P, N_f), rows i of block n are row i N + n"""
        q = q_profile(C, self.config.upsample, self.config.noise_power)
        full = (self.h_spec[m] * q)[:, None] * self.dft_cols
        return full[self.idx]

    def g_tensors(self, covs):
        return np.stack([self.g_tensor(m, covs[m]) for m in range(self.num_users)])

    def block_vectors(self, filters, covs, g_tensors=None):
        g = self.g_tensors(covs) if g_tensors is None else g_tensors
        return np.einsum("mnpj,mj->mnp", g, filters.coeffs)

    def interference(self, filters, covs, exclude):
        return build_interference(self.g_tensors(covs), filters, exclude)

    # rates without the 1/((N+L_g)P) prefactor

    def dense_covariance_sum(self, filters, covs, exclude=None):
        """I + (1/N0) sum_m H_m F_m U C_m U^T F_m^H H_m^H in the time domain"""
        cfg = self.config
        NP = cfg.np_len
        U = upsampler(cfg.block_len, cfg.upsample)
        total = np.eye(NP, dtype=complex)
        for m in range(self.num_users):
            if m == exclude:
                continue
            A = circulant_matrix(self.channels[m], NP) @ circulant_matrix(filters[m], NP) @ U
            total += A @ covs[m] @ A.conj().T / cfg.noise_power
        return hermitize(total)

    def log2det_all(self, filters, covs):
        if self.all_structured(covs):
            vecs = self.block_vectors(filters, covs)
            return float(np.sum(log2det(interference_from_vectors(vecs).phi_blocks)))
        warnings.warn("covariance lacks the block structure; evaluating densely",
                      NumericalWarning, stacklevel=3)
        return float(log2det(self.dense_covariance_sum(filters, covs)))

    def sum_rate(self, filters, covs, fast=True):
        """Sum rate in bits/s/Hz including the 1/((N+L_g)P) prefactor"""
        if fast:
            raw = self.log2det_all(filters, covs)
        else:
            raw = float(log2det(self.dense_covariance_sum(filters, covs)))
        return raw * self.config.rate_prefactor

    def per_user_rates(self, filters, covs):
        """(log2|Psi| - log2|Phi_m|) / ((N+L_g)P) for every user"""
        pref = self.config.rate_prefactor
        if self.all_structured(covs):
            vecs = self.block_vectors(filters, covs)
            psi = interference_from_vectors(vecs)
            total = float(np.sum(log2det(psi.phi_blocks)))
            rates = []
            for m in range(self.num_users):
                g = vecs[m]
                phi = psi.phi_blocks - g[:, :, None] * g.conj()[:, None, :]
                rates.append((total - float(np.sum(log2det(phi)))) * pref)
            return rates
        total = float(log2det(self.dense_covariance_sum(filters, covs)))
        return [(total - float(log2det(self.dense_covariance_sum(filters, covs, exclude=m)))) * pref
                for m in range(self.num_users)]

    def b_form_sum_rate(self, filters, covs):
        """Sum rate assembled as log2|Phi_m| + sum_n log2(1 + f^H B_{m,n} f) around user 0"""
        state = self.interference(filters, covs, exclude=0)
        reduced = reduce_user_channel(state, self.g_tensor(0, covs[0]))
        raw = state.log2det() + reduced_rate(filters[0], reduced.b_mats)
        return raw * self.config.rate_prefactor

    def check_power(self, f, C):
        return check_power(f, C, self.config)


# --- module-level evaluators ------------------------------------------------------

def sum_rate_time(config, channels, filters, covs):
    """Dense time-domain sum rate"""
    return SystemModel(config, channels).sum_rate(filters, covs, fast=False)


def sum_rate_fast(config, channels, filters, covs):
    """Sum rate over the N interleaved P x P blocks"""
    return SystemModel(config, channels).sum_rate(filters, covs, fast=True)


def check_power(f, C, config):
    """tr(F U C U^T F^H) / (NP) evaluated in the frequency domain"""
    N, P, NP = config.block_len, config.upsample, config.np_len
    spec2 = np.abs(circulant_spectrum(f, NP)) ** 2
    d, _ = frequency_profile(C)
    return float(np.sum(spec2 * np.tile(d, P)) / (P * NP))
