"""
Data models for the toolkit
Defines system configuration, channels, filters, covariances, stopbands,
optimizer settings, trajectories, solver problems and run bookkeeping
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.exceptions import ConfigError

QAM_ORDERS = (4, 16, 64)
SCENARIO_NAMES = (
    "convergence",
    "rate_vs_snr",
    "filter_length_sweep",
    "upsample_sweep",
    "joint_vs_waveform_only",
    "ber_curve",
    "equivalence_audit",
)


@dataclass
class SystemConfig:
    """Scalar dimensions and powers of a CP-FBMA uplink"""
    num_users: int
    block_len: int
    upsample: int
    filter_len: int
    channel_len: int
    noise_power: float = 1.0
    user_power: List[float] = field(default_factory=list)
    qam_order: int = 16
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.user_power, (int, float)):
            self.user_power = [float(self.user_power)] * int(self.num_users)
        elif not self.user_power:
            # 10 dB per user
            self.user_power = [10.0 * self.noise_power] * int(self.num_users)
        self.user_power = [float(p) for p in self.user_power]
        self.validate()

    @property
    def np_len(self):
        """Length NP of one upsampled block"""
        return self.block_len * self.upsample

    @property
    def cp_len(self):
        """CP length L_g in symbols, smallest value covering filter and channel"""
        return math.ceil((self.filter_len + self.channel_len - 1) / self.upsample)

    @property
    def rate_prefactor(self):
        return 1.0 / ((self.block_len + self.cp_len) * self.upsample)

    def snr_db(self, m=0):
        return 10.0 * math.log10(self.user_power[m] / self.noise_power)

    def validate(self):
        """Raise ConfigError naming the first violated invariant"""
        M, N, P = self.num_users, self.block_len, self.upsample
        if M < 1 or N < 1 or self.filter_len < 1 or self.channel_len < 1:
            raise ConfigError("num_users, block_len, filter_len and channel_len must be >= 1")
        if not 1 <= P <= M:
            raise ConfigError(f"upsample must satisfy 1 <= P <= M, got P={P}, M={M}")
        if self.filter_len % P:
            raise ConfigError(f"filter_len ({self.filter_len}) must be a multiple of upsample ({P})")
        if self.filter_len > N * P:
            raise ConfigError(f"filter_len ({self.filter_len}) must not exceed N*P ({N * P})")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")
        if len(self.user_power) != M:
            raise ConfigError(f"user_power must list {M} values, got {len(self.user_power)}")
        if any(p <= 0 for p in self.user_power):
            raise ConfigError("every user_power must be positive")
        if self.qam_order not in QAM_ORDERS:
            raise ConfigError(f"qam_order must be one of {QAM_ORDERS}, got {self.qam_order}")
        if self.cp_len * P < self.filter_len + self.channel_len - 1:
            raise ConfigError("cyclic prefix does not cover filter and channel")

    def with_updates(self, **changes):
        return replace(self, **changes)

    def with_snr_db(self, snr_db):
        """Copy with every user's power set to gamma * N0"""
        power = self.noise_power * 10.0 ** (snr_db / 10.0)
        return replace(self, user_power=[power] * self.num_users)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown SystemConfig key(s): {', '.join(unknown)}")
        missing = sorted(k for k in ("num_users", "block_len", "upsample", "filter_len", "channel_len")
                         if k not in data)
        if missing:
            raise ConfigError(f"missing SystemConfig key(s): {', '.join(missing)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid SystemConfig: {e}") from e

    @classmethod
    def from_json(cls, path):
        if not os.path.exists(path):
            raise FileNotFoundError(
                f"System configuration '{path}' not found. "
                "Use --preset paper|desk or point --config at a JSON file.")
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __str__(self):
        return (f"M={self.num_users} N={self.block_len} P={self.upsample} "
                f"N_f={self.filter_len} L_h={self.channel_len} L_g={self.cp_len}")


@dataclass
class ChannelSet:
    """Channel taps h_m, one row per user"""
    taps: np.ndarray

    @property
    def num_users(self):
        return self.taps.shape[0]

    def __getitem__(self, m):
        return self.taps[m]

    def to_dict(self):
        return {'taps': [[complex(t) for t in row] for row in self.taps]}


@dataclass
class FilterBank:
    """Synthesis filters f_m, one row per user"""
    coeffs: np.ndarray

    @property
    def num_users(self):
        return self.coeffs.shape[0]

    @property
    def filter_len(self):
        return self.coeffs.shape[1]

    def __getitem__(self, m):
        return self.coeffs[m]

    def copy(self):
        return FilterBank(self.coeffs.copy())

    def energies(self):
        return np.real(np.sum(self.coeffs * self.coeffs.conj(), axis=1))

    def is_unit_energy(self, tol=1e-10):
        return bool(np.all(np.abs(self.energies() - 1.0) <= tol))

    def __str__(self):
        return f"FilterBank({self.num_users} x {self.filter_len})"


@dataclass
class CovarianceSet:
    """Transmit covariances C_m (N x N), one per user"""
    covs: np.ndarray

    @classmethod
    def identity(cls, config):
        """C_m = P * P_m * I_N for every user"""
        eye = np.eye(config.block_len, dtype=complex)
        return cls(np.stack([config.upsample * p * eye for p in config.user_power]))

    @property
    def num_users(self):
        return self.covs.shape[0]

    def __getitem__(self, m):
        return self.covs[m]

    def copy(self):
        return CovarianceSet(self.covs.copy())

    def with_cov(self, m, C):
        out = self.copy()
        out.covs[m] = C
        return out

    def scaled(self, factors):
        factors = np.broadcast_to(np.asarray(factors, dtype=float), (self.num_users,))
        return CovarianceSet(self.covs * factors[:, None, None])


@dataclass
class Stopband:
    """One stopband: a set of NP-point DFT bins and an energy budget"""
    bins: np.ndarray
    budget: float

    def to_dict(self):
        return {'bins': [int(b) for b in self.bins], 'budget': float(self.budget)}


@dataclass
class StopbandSpec:
    """Per-user lists of stopbands"""
    users: List[List[Stopband]]

    @property
    def num_users(self):
        return len(self.users)

    def stopband_count(self, m):
        return len(self.users[m])

    def validate(self, config):
        if self.num_users != config.num_users:
            raise ConfigError(f"stopband spec lists {self.num_users} users, config has {config.num_users}")
        for m, bands in enumerate(self.users):
            for i, band in enumerate(bands):
                bins = np.asarray(band.bins)
                if bins.size != np.unique(bins).size:
                    raise ConfigError(f"stopband ({m},{i}) has duplicate bins")
                if bins.size and (bins.min() < 0 or bins.max() >= config.np_len):
                    raise ConfigError(f"stopband ({m},{i}) bins outside 0..{config.np_len - 1}")
                if band.budget <= 0:
                    raise ConfigError(f"stopband ({m},{i}) budget must be positive")
        return self

    def scaled(self, factor):
        """Copy with every budget multiplied by factor"""
        if factor <= 0:
            raise ConfigError("budget scale must be positive")
        return StopbandSpec([[Stopband(b.bins.copy(), b.budget * factor) for b in bands]
                             for bands in self.users])

    def to_dict(self):
        return {'users': [[b.to_dict() for b in bands] for bands in self.users]}

    @classmethod
    def empty(cls, num_users):
        return cls([[] for _ in range(num_users)])

    @classmethod
    def from_dict(cls, data):
        users = data['users'] if isinstance(data, dict) else data
        spec = []
        for bands in users:
            parsed = []
            for band in bands:
                bins = band['bins']
                if isinstance(bins, dict):
                    bins = range(int(bins['start']), int(bins['end']))
                parsed.append(Stopband(np.asarray(list(bins), dtype=int), float(band['budget'])))
            spec.append(parsed)
        return cls(spec)

    @classmethod
    def from_json(cls, path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Stopband file '{path}' not found.")
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class OptimizerParams:
    """Step-size, stopping and initialization settings shared by both algorithms"""
    inner_eps: float = 1.0
    rho0: float = 0.01
    backtrack_shrink: float = 0.5
    armijo_c: float = 1e-4
    max_inner: int = 200
    max_outer: int = 50
    outer_tol: float = 1e-4
    init: str = "legacy"
    min_step: float = 1e-16
    sdp_tolerance: float = 1e-7
    sdp_max_iter: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.inner_eps <= 0:
            raise ConfigError("inner_eps must be positive")
        if not 0 < self.backtrack_shrink < 1:
            raise ConfigError("backtrack_shrink must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ConfigError("armijo_c must lie in (0, 1)")
        if self.rho0 <= 0:
            raise ConfigError("rho0 must be positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ConfigError("max_inner and max_outer must be >= 1")
        if self.outer_tol <= 0:
            raise ConfigError("outer_tol must be positive")
        if self.init not in ("legacy", "random"):
            raise ConfigError("init must be 'legacy' or 'random'")
        return self

    def with_updates(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


@dataclass
class InterferenceState:
    """Phi_m, its inverse and inverse square root, stored as N interleaved P x P blocks"""
    phi_blocks: np.ndarray
    phi_inv_blocks: np.ndarray
    phi_inv_sqrt_blocks: np.ndarray
    excluded: Optional[int] = None

    @property
    def block_count(self):
        return self.phi_blocks.shape[0]

    @property
    def block_size(self):
        return self.phi_blocks.shape[1]

    def _dense(self, blocks):
        from src.numerics import from_blocks
        return from_blocks(blocks, self.block_count, self.block_size)

    @property
    def phi(self):
        return self._dense(self.phi_blocks)

    @property
    def phi_inv(self):
        return self._dense(self.phi_inv_blocks)

    @property
    def phi_inv_sqrt(self):
        return self._dense(self.phi_inv_sqrt_blocks)

    def log2det(self):
        from src.numerics import log2det
        return float(np.sum(log2det(self.phi_blocks)))


@dataclass
class ReducedUserChannel:
    """Whitened per-block channels G~_{m,n} (P x N_f) and B_{m,n} = G~^H G~"""
    g_tilde: np.ndarray
    b_mats: np.ndarray


@dataclass
class EffectiveChannel:
    """Frequency-domain effective channels T_m (NP x N) and their interleaved columns"""
    blocks: np.ndarray
    block_cols: Optional[np.ndarray]
    block_len: int
    upsample: int

    @property
    def num_users(self):
        return self.blocks.shape[0]

    @property
    def stacked(self):
        """T = [T_1, ..., T_M]"""
        return np.concatenate(list(self.blocks), axis=1)


@dataclass
class DetectionResult:
    """LMMSE soft estimates, optional hard decisions and per-user MSE"""
    estimates: np.ndarray
    mse: np.ndarray
    hard: Optional[np.ndarray] = None


@dataclass
class TaylorModel:
    """Quadratic model of a user's rate around a base filter"""
    hessian: np.ndarray
    eta: np.ndarray
    base: np.ndarray


@dataclass
class PowerQuadratic:
    """Power constraint f^H R f = target with target = P_m/N0"""
    matrix: np.ndarray
    target: float


@dataclass
class SdpProblem:
    """maximize tr(A0 X) s.t. tr(A_i X) = b_i, tr(C_j X) <= d_j, X Hermitian PSD"""
    objective: np.ndarray
    equalities: list
    inequalities: list = field(default_factory=list)
    tolerance: float = 1e-7
    max_iter: int = 100

    @property
    def dim(self):
        return self.objective.shape[0]


@dataclass
class SdpSolution:
    """Solver output with status optimal | max_iter | infeasible"""
    X: np.ndarray
    value: float
    dual_value: float
    gap: float
    status: str
    iterations: int
    primal_res: float
    dual_res: float
    trace: List[Dict] = field(default_factory=list)

    @property
    def optimal(self):
        return self.status == "optimal"

    def trace_frame(self):
        return pd.DataFrame(self.trace, columns=['iter', 'gap', 'primal_res', 'dual_res'])


@dataclass
class IterationRecord:
    """One outer sweep of an optimizer"""
    outer_iter: int
    sum_rate: float
    per_user_rates: List[float]
    inner_iters: int
    grad_norm: float
    wall_time: float = 0.0
    stopband_viol_max: float = 0.0
    sdp_gap: float = 0.0
    rank1_leak: float = 0.0


@dataclass
class RateTrajectory:
    """Sum rate history over outer sweeps"""
    initial_sum_rate: float = 0.0
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def sum_rates(self):
        return [r.sum_rate for r in self.records]

    @property
    def final_sum_rate(self):
        return self.records[-1].sum_rate if self.records else self.initial_sum_rate

    def is_monotone(self, tol=1e-9):
        rates = [self.initial_sum_rate] + self.sum_rates
        return all(b >= a - tol for a, b in zip(rates, rates[1:]))

    def to_frame(self, joint=False):
        """CSV layout: outer_iter, sum_rate, per_user_rate_1..M, inner_iters, grad_norm[, joint columns]"""
        rows = []
        for r in self.records:
            row = {'outer_iter': r.outer_iter, 'sum_rate': r.sum_rate}
            for m, rate in enumerate(r.per_user_rates, 1):
                row[f'per_user_rate_{m}'] = rate
            row['inner_iters'] = r.inner_iters
            row['grad_norm'] = r.grad_norm
            if joint:
                row['stopband_viol_max'] = r.stopband_viol_max
                row['sdp_gap'] = r.sdp_gap
                row['rank1_leak'] = r.rank1_leak
            rows.append(row)
        return pd.DataFrame(rows)


@dataclass
class Scenario:
    """One named experiment"""
    name: str
    config: SystemConfig
    seeds: List[int]
    snr_grid_db: List[float]
    output_dir: str = "results"
    stopbands: Optional[StopbandSpec] = None
    filter_lengths: List[int] = field(default_factory=list)
    upsample_divisors: List[int] = field(default_factory=list)
    budget_scales: List[float] = field(default_factory=lambda: [1.0])
    ber_trials: int = 200
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.name not in SCENARIO_NAMES:
            raise ConfigError(f"unknown scenario '{self.name}' (choose from {', '.join(SCENARIO_NAMES)})")
        if not self.seeds:
            raise ConfigError("scenario needs at least one seed")
        if not self.snr_grid_db:
            raise ConfigError("scenario needs a non-empty SNR grid")
        if list(self.snr_grid_db) != sorted(self.snr_grid_db):
            raise ConfigError("snr_grid_db must be sorted ascending")
        if self.name == "joint_vs_waveform_only" and self.stopbands is None:
            raise ConfigError("joint_vs_waveform_only requires a stopband spec")
        if self.stopbands is not None:
            self.stopbands.validate(self.config)
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self


@dataclass
class RunManifest:
    """What a scenario run produced"""
    scenario: str
    config: Dict
    seeds: List[int]
    version: str
    outputs: List[str] = field(default_factory=list)
    wall_times: Dict[str, float] = field(default_factory=dict)
    failed_cells: List[str] = field(default_factory=list)
    passed: bool = True
    started_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec='seconds'))

    @property
    def ok(self):
        return self.passed and not self.failed_cells

    def to_dict(self):
        return asdict(self)

    def __str__(self):
        state = "ok" if self.ok else f"{len(self.failed_cells)} failed cell(s)"
        return f"{self.scenario}: {len(self.outputs)} file(s), {state}"
