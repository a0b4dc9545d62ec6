"""
Joint waveform and covariance optimization under stopband energy caps
Per user and sweep: a semidefinite-relaxation filter step followed by a
GSVD / water-filling covariance step
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from src.exceptions import DegenerateVectorError, NumericalWarning
from src.manifold_opt import euclidean_grad
from src.models import (
    CovarianceSet,
    FilterBank,
    IterationRecord,
    OptimizerParams,
    PowerQuadratic,
    RateTrajectory,
    SdpProblem,
    StopbandSpec,
    TaylorModel,
)
from src.numerics import LN2, dft_matrix, gsvd, hermitize, log2det, normalize, water_fill
from src.sdp import rank1_extract, solve_sdp
from src.system_model import (
    SystemModel,
    check_power,
    circulant_spectrum,
    filter_dft,
    interference_from_vectors,
    is_block_structured,
    legacy_filterbank,
    q_profile,
    reduce_user_channel,
    reduced_rate,
    upsampler,
)

VIOLATION_TOL = 1e-8
MAX_HALVINGS = 30


# --- quadratic forms ------------------------------------------------------------

def stopband_matrix(bins, N, P, filter_len):
    """E = Wsel^H Wsel with Wsel the unitary NP-point DFT rows `bins`, first N_f columns"""
    bins = np.asarray(bins, dtype=int)
    if bins.size == 0:
        return np.zeros((filter_len, filter_len), dtype=complex)
    W = dft_matrix(N * P)[bins][:, :filter_len]
    return hermitize(W.conj().T @ W)


def stopband_energy(f, E):
    return float(max(0.0, np.real(np.vdot(f, E @ f))))


def user_stopband_matrices(stopbands, m, config):
    """[(E, budget)] for user m"""
    if stopbands is None:
        return []
    N, P, Nf = config.block_len, config.upsample, config.filter_len
    return [(stopband_matrix(b.bins, N, P, Nf), b.budget) for b in stopbands.users[m]]


def max_violation(f, stop_mats):
    """Largest energy excess over the budgets, 0 when all are met"""
    return max([stopband_energy(f, E) - e for E, e in stop_mats] + [0.0])


def build_power_quadratic(C, config, m=0):
    """R with N0 f^H R f = check_power(f, C); target P_m / N0"""
    N, P, NP, Nf = config.block_len, config.upsample, config.np_len, config.filter_len
    q2 = q_profile(C, P, config.noise_power) ** 2
    Wpad = dft_matrix(NP)[:, :Nf]
    R = hermitize(Wpad.conj().T @ (q2[:, None] * Wpad))
    return PowerQuadratic(matrix=R, target=config.user_power[m] / config.noise_power)


def hessian(f, b_mats):
    """(1/ln2) sum_n [(1 + s_n) B_n - B_n f f^H B_n] / (1 + s_n)^2 with s_n = f^H B_n f"""
    bf = np.einsum("nij,j->ni", b_mats, f)
    s = np.real(bf @ f.conj())
    denom = 1.0 + s
    first = np.sum(b_mats / denom[:, None, None], axis=0)
    second = np.einsum("ni,nj->ij", bf / denom[:, None], (bf / denom[:, None]).conj())
    return hermitize(first - second) / LN2


def taylor_model(f, b_mats):
    H = hessian(f, b_mats)
    return TaylorModel(hessian=H, eta=euclidean_grad(f, b_mats) - H @ f, base=np.array(f, copy=True))


def _lift(block, scalar=0.0):
    n = block.shape[0]
    out = np.zeros((n + 1, n + 1), dtype=complex)
    out[:n, :n] = block
    out[n, n] = scalar
    return out


def assemble_qcqp(taylor, power, stop_mats, tolerance=1e-7, max_iter=100):
    """
    Lift the quadratic model to X = [f; t][f; t]^H: objective [[H, eta], [eta^H, 0]],
    equalities for the power quadratic, unit energy and the corner, one
    inequality per stopband.
    """
    n = taylor.hessian.shape[0]
    A0 = _lift(taylor.hessian)
    A0[:n, n] = taylor.eta
    A0[n, :n] = taylor.eta.conj()
    corner = np.zeros((n + 1, n + 1), dtype=complex)
    corner[n, n] = 1.0
    equalities = [
        (_lift(power.matrix), float(power.target)),
        (_lift(np.eye(n, dtype=complex)), 1.0),
        (corner, 1.0),
    ]
    inequalities = [(_lift(E), float(e)) for E, e in stop_mats]
    return SdpProblem(objective=A0, equalities=equalities, inequalities=inequalities,
                      tolerance=tolerance, max_iter=max_iter)


# --- filter step ------------------------------------------------------------------

@dataclass
class FilterStepResult:
    filter: np.ndarray
    accepted: bool
    kappa: float = 1.0
    alpha: float = 0.0
    sdp_status: str = ""
    sdp_gap: float = 0.0
    rank1_leak: float = 0.0
    violation: float = 0.0


def _power_scaled_rate(f, b_mats, power):
    """Rate term after rescaling C_m so that f meets the power quadratic, and that scale"""
    quad = float(np.real(np.vdot(f, power.matrix @ f)))
    if quad <= 1e-300:
        return -np.inf, np.inf
    kappa = power.target / quad
    return reduced_rate(f, kappa * b_mats), kappa


def filter_step(f_prev, b_mats, power, stop_mats, params=None):
    """
    One relaxed QCQP step for a single user. The candidate is accepted only if
    it meets every stopband budget and does not lower the user's rate term;
    otherwise it is pulled back toward f_prev, and f_prev is kept if no pulled
    back point qualifies.
    """
    params = params or OptimizerParams()
    f_prev = np.asarray(f_prev, dtype=complex)
    n = f_prev.size
    base_rate = reduced_rate(f_prev, b_mats)
    result = FilterStepResult(filter=f_prev, accepted=False, kappa=1.0,
                              violation=max_violation(f_prev, stop_mats))

    problem = assemble_qcqp(taylor_model(f_prev, b_mats), power, stop_mats,
                            params.sdp_tolerance, params.sdp_max_iter)
    solution = solve_sdp(problem)
    result.sdp_status = solution.status
    if solution.status == "infeasible":
        warnings.warn("relaxed filter problem reported infeasible; filter kept",
                      NumericalWarning, stacklevel=2)
        return result
    result.sdp_gap = float(abs(solution.gap))
    try:
        cand, leak = rank1_extract(solution.X, keep=n, anchor=n)
        cand = normalize(cand)
    except DegenerateVectorError:
        return result
    result.rank1_leak = leak
    overlap = np.vdot(cand, f_prev)
    if abs(overlap) > 0:
        cand = cand * (overlap / abs(overlap))

    alpha = 1.0
    for _ in range(MAX_HALVINGS + 1):
        try:
            trial = normalize((1.0 - alpha) * f_prev + alpha * cand)
        except DegenerateVectorError:
            alpha *= 0.5
            continue
        if max_violation(trial, stop_mats) <= VIOLATION_TOL:
            rate, kappa = _power_scaled_rate(trial, b_mats, power)
            if rate >= base_rate and np.isfinite(kappa):
                result.filter = trial
                result.accepted = True
                result.kappa = kappa
                result.alpha = alpha
                result.violation = max_violation(trial, stop_mats)
                return result
        alpha *= 0.5
    return result


# --- covariance step ----------------------------------------------------------------

@dataclass
class CovarianceStepResult:
    cov: np.ndarray
    rate_term: float
    improved: bool
    deficiency: int = 0
    mode_powers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _covariance_maps(f, state, h, config):
    """Whitened channel map M_m and power map N_m, both NP x N"""
    N, P, NP, N0 = config.block_len, config.upsample, config.np_len, config.noise_power
    WU = dft_matrix(NP) @ upsampler(N, P)
    fs = filter_dft(f, N, P)
    hs = circulant_spectrum(h, NP)
    M_map = state.phi_inv_sqrt @ ((hs * fs)[:, None] * WU) / np.sqrt(N0)
    N_map = fs[:, None] * WU
    return M_map, N_map


def _rate_term(M_map, C):
    NP = M_map.shape[0]
    return float(log2det(hermitize(np.eye(NP) + M_map @ C @ M_map.conj().T)))


def covariance_step(f, state, h, config, m=0, C_prev=None):
    """
    Water-filled covariance of user m given its filter and the interference
    state Phi_m. Power is restored exactly to P_m; the previous covariance is
    kept when the new one does not raise the user's rate.
    """
    M_map, N_map = _covariance_maps(f, state, h, config)
    factors = gsvd(M_map, N_map)
    gains = factors.sig_M ** 2
    weights = factors.sig_N ** 2
    usable = (gains > 0) & (weights > 0)
    budget = config.np_len * config.user_power[m]
    powers = np.zeros(gains.size)
    if np.any(usable):
        powers[usable] = water_fill(gains[usable], weights[usable], budget)
    Z = factors.common_inv_h
    C = hermitize((Z * powers) @ Z.conj().T)

    spent = check_power(f, C, config)
    if spent > 0:
        C = C * (config.user_power[m] / spent)
    if not is_block_structured(C):
        warnings.warn("water-filled covariance lost the frequency-diagonal structure",
                      NumericalWarning, stacklevel=2)

    rate = _rate_term(M_map, C)
    if C_prev is not None:
        prev_rate = _rate_term(M_map, C_prev)
        if not rate > prev_rate:
            return CovarianceStepResult(cov=np.array(C_prev, copy=True), rate_term=prev_rate,
                                        improved=False, deficiency=factors.deficiency,
                                        mode_powers=powers)
    return CovarianceStepResult(cov=C, rate_term=rate, improved=True,
                                deficiency=factors.deficiency, mode_powers=powers)


# --- baselines and the alternating loop --------------------------------------------

def stopband_baseline_filterbank(config, stopbands):
    """Per user the unit-energy filter of least total stopband energy"""
    legacy = legacy_filterbank(config)
    rows = []
    for m in range(config.num_users):
        mats = user_stopband_matrices(stopbands, m, config)
        if not mats:
            rows.append(legacy[m].copy())
            continue
        total = hermitize(sum(E for E, _ in mats))
        _, V = sla.eigh(total, subset_by_index=[0, 0])
        f = V[:, 0]
        lead = f[np.argmax(np.abs(f))]
        f = f * (np.conj(lead) / abs(lead))
        if max_violation(f, mats) > VIOLATION_TOL:
            warnings.warn(f"user {m}: no unit-energy filter meets its stopband budgets",
                          NumericalWarning, stacklevel=2)
        rows.append(f / np.linalg.norm(f))
    return FilterBank(np.array(rows))


class JointOptimizer:
    """Alternates filter and covariance steps, users in index order each sweep"""

    def __init__(self, model, stopbands=None, params=None, freeze_covariance=False, verbose=False):
        self.model = model
        cfg = model.config
        self.stopbands = stopbands if stopbands is not None else StopbandSpec.empty(cfg.num_users)
        self.stopbands.validate(cfg)
        self.params = params or OptimizerParams()
        self.freeze_covariance = freeze_covariance
        self.verbose = verbose
        self.stop_mats = [user_stopband_matrices(self.stopbands, m, cfg) for m in range(cfg.num_users)]

    def initial_filters(self):
        return stopband_baseline_filterbank(self.model.config, self.stopbands)

    def violation(self, filters):
        return max(max_violation(filters[m], self.stop_mats[m]) for m in range(filters.num_users))

    def optimize(self, init=None, covs=None):
        """Return (FilterBank, CovarianceSet, RateTrajectory)"""
        model, params = self.model, self.params
        cfg = model.config
        filters = (init or self.initial_filters()).copy()
        covs = (covs or CovarianceSet.identity(cfg)).copy()
        g_tensors = model.g_tensors(covs)
        vecs = model.block_vectors(filters, covs, g_tensors)

        trajectory = RateTrajectory(initial_sum_rate=model.sum_rate(filters, covs))
        previous = trajectory.initial_sum_rate
        for sweep in range(1, params.max_outer + 1):
            start = time.perf_counter()
            gap_max = leak_max = 0.0
            accepted = 0
            for m in range(cfg.num_users):
                state = interference_from_vectors(vecs, exclude=m)
                reduced = reduce_user_channel(state, g_tensors[m])
                power = build_power_quadratic(covs[m], cfg, m)
                step = filter_step(filters[m], reduced.b_mats, power, self.stop_mats[m], params)
                gap_max = max(gap_max, step.sdp_gap)
                leak_max = max(leak_max, step.rank1_leak)
                if step.accepted:
                    accepted += 1
                    filters.coeffs[m] = step.filter
                    covs.covs[m] = covs[m] * step.kappa
                if not self.freeze_covariance:
                    cov = covariance_step(filters[m], state, model.channels[m], cfg, m, covs[m])
                    covs.covs[m] = cov.cov
                g_tensors[m] = model.g_tensor(m, covs[m])
                vecs[m] = g_tensors[m] @ filters[m]

            rate = model.sum_rate(filters, covs)
            trajectory.append(IterationRecord(
                outer_iter=sweep,
                sum_rate=rate,
                per_user_rates=model.per_user_rates(filters, covs),
                inner_iters=accepted,
                grad_norm=0.0,
                wall_time=time.perf_counter() - start,
                stopband_viol_max=self.violation(filters),
                sdp_gap=gap_max,
                rank1_leak=leak_max,
            ))
            if self.verbose:
                from src.ui import UI
                UI.print_info(f"sweep {sweep}: sum rate {rate:.6f} bits/s/Hz, "
                              f"{accepted}/{cfg.num_users} filters accepted, leak {leak_max:.2e}")
            if abs(rate - previous) <= params.outer_tol * max(abs(previous), 1e-12):
                trajectory.converged = True
                break
            previous = rate
        return filters, covs, trajectory


def optimize_P2(config, channels, stopbands=None, params=None, init=None,
                freeze_covariance=False, verbose=False):
    """Joint optimization from the stopband baseline (or init) with C_m = P P_m I"""
    optimizer = JointOptimizer(SystemModel(config, channels), stopbands, params,
                               freeze_covariance, verbose)
    return optimizer.optimize(init)
