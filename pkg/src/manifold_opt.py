"""
Full-band waveform optimization
Block-coordinate sweeps over users, each solving the per-user problem by
Riemannian gradient ascent on the unit sphere with Armijo backtracking
"""

import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from src.models import CovarianceSet, IterationRecord, OptimizerParams, RateTrajectory
from src.numerics import LN2, normalize
from src.system_model import (
    InterferenceTracker,
    SystemModel,
    legacy_filterbank,
    random_filterbank,
    reduce_user_channel,
    reduced_rate,
)


def objective(f, b_mats):
    """Per-user rate sum_n log2(1 + f^H B_n f)"""
    return reduced_rate(f, b_mats)


def euclidean_grad(f, b_mats):
    """(1/ln2) sum_n B_n f / (1 + f^H B_n f), the gradient with respect to conj(f)"""
    bf = np.einsum("nij,j->ni", b_mats, f)
    quad = np.real(bf @ f.conj())
    return np.sum(bf / (1.0 + quad)[:, None], axis=0) / LN2


def riemannian_grad(f, g):
    """Projection of g onto the tangent space {z : Re(z^H f) = 0}"""
    return g - np.real(np.vdot(g, f)) * f


def retract(f, step, direction):
    return normalize(f + step * direction)


@dataclass
class InnerTrace:
    """Per-user ascent history"""
    iterations: int = 0
    grad_norm_sq: float = 0.0
    objectives: List[float] = field(default_factory=list)
    stalled: bool = False


def solve_P1_1(f0, b_mats, params):
    """
    Maximize sum_n log2(1 + f^H B_n f) over the unit sphere from f0.

    Each search starts from twice the last accepted step (rho0 on the first
    step) and backtracks until the Armijo condition holds. Stops once
    ||grad||^2 <= inner_eps, after max_inner steps, or when backtracking
    shrinks the step below min_step.
    """
    f = normalize(np.asarray(f0, dtype=complex))
    value = objective(f, b_mats)
    trace = InnerTrace(objectives=[value])
    last_step = 0.5 * params.rho0
    for _ in range(params.max_inner):
        grad = riemannian_grad(f, euclidean_grad(f, b_mats))
        gn2 = float(np.real(np.vdot(grad, grad)))
        trace.grad_norm_sq = gn2
        if gn2 <= params.inner_eps:
            break
        step = 2.0 * last_step
        accepted = False
        while step >= params.min_step:
            cand = retract(f, step, grad)
            cand_value = objective(cand, b_mats)
            if cand_value >= value + params.armijo_c * step * gn2:
                accepted = True
                break
            step *= params.backtrack_shrink
        if not accepted:
            trace.stalled = True
            break
        f, value, last_step = cand, cand_value, step
        trace.iterations += 1
        trace.objectives.append(value)
    else:
        grad = riemannian_grad(f, euclidean_grad(f, b_mats))
        trace.grad_norm_sq = float(np.real(np.vdot(grad, grad)))
    return f, trace


class WaveformOptimizer:
    """Sweeps users in index order with covariances fixed to P P_m I"""

    def __init__(self, model, params=None, use_woodbury=True, verbose=False):
        self.model = model
        self.params = params or OptimizerParams()
        self.use_woodbury = use_woodbury
        self.verbose = verbose

    def initial_filters(self, seed=None):
        cfg = self.model.config
        if self.params.init == "random":
            return random_filterbank(cfg, cfg.seed if seed is None else seed)
        return legacy_filterbank(cfg)

    def optimize(self, init=None):
        """Return (FilterBank, RateTrajectory)"""
        model, params = self.model, self.params
        cfg = model.config
        filters = (init or self.initial_filters()).copy()
        covs = CovarianceSet.identity(cfg)
        g_tensors = model.g_tensors(covs)
        tracker = InterferenceTracker(model.block_vectors(filters, covs, g_tensors), self.use_woodbury)

        trajectory = RateTrajectory(initial_sum_rate=tracker.log2det_psi() * cfg.rate_prefactor)
        previous = trajectory.initial_sum_rate
        for sweep in range(1, params.max_outer + 1):
            start = time.perf_counter()
            inner_total = 0
            grad_max = 0.0
            for m in range(cfg.num_users):
                state = tracker.state_excluding(m)
                reduced = reduce_user_channel(state, g_tensors[m])
                f_new, inner = solve_P1_1(filters[m], reduced.b_mats, params)
                filters.coeffs[m] = f_new
                tracker.update_user(m, g_tensors[m] @ f_new, state)
                inner_total += inner.iterations
                grad_max = max(grad_max, float(np.sqrt(inner.grad_norm_sq)))

            rate = tracker.log2det_psi() * cfg.rate_prefactor
            trajectory.append(IterationRecord(
                outer_iter=sweep,
                sum_rate=rate,
                per_user_rates=model.per_user_rates(filters, covs),
                inner_iters=inner_total,
                grad_norm=grad_max,
                wall_time=time.perf_counter() - start,
            ))
            if self.verbose:
                from src.ui import UI
                UI.print_info(f"sweep {sweep}: sum rate {rate:.6f} bits/s/Hz, {inner_total} inner steps")
            if abs(rate - previous) <= params.outer_tol * max(abs(previous), 1e-12):
                trajectory.converged = True
                break
            previous = rate
        return filters, trajectory


def optimize_P1(config, channels, params=None, init=None, use_woodbury=True, verbose=False):
    """Full-band waveform optimization with identity covariances"""
    optimizer = WaveformOptimizer(SystemModel(config, channels), params, use_woodbury, verbose)
    return optimizer.optimize(init)
