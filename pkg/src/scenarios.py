"""
Scenario runner
Named experiments over seeds and SNR grids; every cell is independent and
results are merged by cell key so outputs do not depend on thread timing
"""

import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from src import __version__
from src.analytics import Analytics
from src.exceptions import ConfigError, DegenerateVectorError, NumericalError
from src.export import ResultExporter
from src.joint_opt import JointOptimizer, stopband_baseline_filterbank
from src.manifold_opt import optimize_P1
from src.models import CovarianceSet, OptimizerParams, RunManifest, StopbandSpec, SystemConfig
from src.numerics import dft_matrix, from_blocks, woodbury_update
from src.receiver import ber_monte_carlo, build_effective_channel, lmmse_detect, lmmse_detect_fast
from src.system_model import (
    SystemModel,
    check_power,
    circulant_matrix,
    filter_dft,
    generate_channels,
    interference_from_vectors,
    legacy_filterbank,
    random_filterbank,
    transmit_circular,
    transmit_linear_cp,
    upsampler,
)

PRESET_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "presets")
AUDIT_TOL = 1e-8
SPECTRUM_FLOOR_DB = -300.0
EPSILON_CHECK = (1.0, 1e-5)


def load_preset(name):
    """SystemConfig shipped as presets/<name>.json"""
    return SystemConfig.from_json(os.path.join(PRESET_DIR, f"{name}.json"))


def load_stopband_preset(name):
    return StopbandSpec.from_json(os.path.join(PRESET_DIR, f"stopbands_{name}.json"))


def version_string():
    """git describe output when available, else the package version"""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(PRESET_DIR))
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def emit_waveform_spectrum(f, N, P):
    """NP rows (bin, magnitude_db) of the filter spectrum, peak at 0 dB"""
    mag = np.abs(filter_dft(f, N, P))
    peak = float(mag.max()) if mag.size else 0.0
    if peak <= 0:
        raise DegenerateVectorError("cannot normalize the spectrum of a zero filter")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    return pd.DataFrame({'bin': np.arange(N * P), 'magnitude_db': np.maximum(db, SPECTRUM_FLOOR_DB)})


class ScenarioRunner:
    """Executes one Scenario and writes its CSV tables and manifest"""

    def __init__(self, scenario, params=None, verbose=False):
        self.scenario = scenario.validate()
        self.params = params or OptimizerParams()
        self.verbose = verbose
        self.exporter = ResultExporter(scenario.output_dir)
        self.manifest = RunManifest(
            scenario=scenario.name,
            config=scenario.config.to_dict(),
            seeds=list(scenario.seeds),
            version=version_string(),
        )

    # --- plumbing ----------------------------------------------------------------

    def _info(self, text):
        if self.verbose:
            from src.ui import UI
            UI.print_info(text)

    def _run_cells(self, cells, work):
        """
        Run work(cell) for every (key, payload) cell in the pool. Returns the
        successful results sorted by key; numerical failures mark the cell failed.
        """
        def timed(cell):
            key, payload = cell
            start = time.perf_counter()
            try:
                return key, work(payload), None, time.perf_counter() - start
            except NumericalError as e:
                return key, None, e, time.perf_counter() - start

        with ThreadPoolExecutor(max_workers=self.scenario.threads) as pool:
            outcomes = list(pool.map(timed, cells))
        results = []
        for key, value, error, seconds in sorted(outcomes, key=lambda o: o[0]):
            label = "/".join(str(k) for k in key)
            self.manifest.wall_times[label] = seconds
            if error is not None:
                self.manifest.failed_cells.append(f"{label}: {error}")
                self._info(f"cell {label} failed: {error}")
            else:
                results.append((key, value))
        return results

    def _write(self, frame, filename):
        path, message = self.exporter.write_frame(frame, filename)
        if path is None:
            raise OSError(message)
        self.manifest.outputs.append(path)
        return path

    def _write_summary(self, frame, keys, methods, baseline=None):
        summary = Analytics(frame).summarize(keys, methods, baseline)
        self._write(summary, f"summary_{self.scenario.name}.csv")
        return summary

    def _channels(self, config, seed):
        return generate_channels(config, seed)

    def _rates(self, config, channels, seed):
        """(legacy, optimized) sum rates for one cell"""
        model = SystemModel(config, channels)
        covs = CovarianceSet.identity(config)
        legacy = model.sum_rate(legacy_filterbank(config), covs)
        init = random_filterbank(config, seed) if self.params.init == "random" else None
        _, trajectory = optimize_P1(config, channels, self.params, init=init)
        return legacy, trajectory.final_sum_rate

    # --- scenarios ----------------------------------------------------------------

    def run(self):
        handler = getattr(self, f"_run_{self.scenario.name}")
        self.summary = handler()
        self._write_manifest()
        return self.manifest

    def _write_manifest(self):
        path, message = self.exporter.write_manifest(self.manifest)
        if path is None:
            raise OSError(message)

    def _run_convergence(self):
        s = self.scenario
        cfg = s.config

        def work(seed):
            channels = self._channels(cfg, seed)
            init = random_filterbank(cfg, seed) if self.params.init == "random" else legacy_filterbank(cfg)
            filters, trajectory = optimize_P1(cfg, channels, self.params, init=init)
            eps_rows = []
            for eps in EPSILON_CHECK:
                params = self.params.with_updates(inner_eps=eps)
                _, traj = optimize_P1(cfg, channels, params, init=init)
                eps_rows.append({
                    'seed': seed,
                    'inner_eps': eps,
                    'sum_rate': traj.final_sum_rate,
                    'inner_iters_mean': float(np.mean([r.inner_iters for r in traj.records])) if traj.records else 0.0,
                })
            return init, filters, trajectory, eps_rows

        rows, eps_rows = [], []
        for (seed,), (init, filters, trajectory, eps) in self._run_cells([((seed,), seed) for seed in s.seeds], work):
            self._write_trajectory(trajectory, f"trajectory_seed{seed}.csv")
            for m in range(min(2, cfg.num_users)):
                self._write_spectrum(init[m], f"spectrum_seed{seed}_user{m + 1}_legacy.csv")
                self._write_spectrum(filters[m], f"spectrum_seed{seed}_user{m + 1}_optimized.csv")
            rows.append({
                'seed': seed,
                'snr_db': cfg.snr_db(),
                'legacy': trajectory.initial_sum_rate,
                'optimized': trajectory.final_sum_rate,
                'sweeps': len(trajectory),
                'converged': trajectory.converged,
                'monotone': trajectory.is_monotone(),
            })
            eps_rows.extend(eps)
        frame = pd.DataFrame(rows, columns=['seed', 'snr_db', 'legacy', 'optimized', 'sweeps', 'converged', 'monotone'])
        self._write(frame, "convergence.csv")
        self._write(pd.DataFrame(eps_rows, columns=['seed', 'inner_eps', 'sum_rate', 'inner_iters_mean']),
                    "epsilon_check.csv")
        return self._write_summary(frame, ['snr_db'], ['legacy', 'optimized'], baseline='legacy')

    def _write_trajectory(self, trajectory, filename, joint=False):
        path, message = self.exporter.write_trajectory(trajectory, filename, joint=joint)
        if path is None:
            raise OSError(message)
        self.manifest.outputs.append(path)

    def _write_spectrum(self, f, filename):
        cfg = self.scenario.config
        frame = emit_waveform_spectrum(f, cfg.block_len, cfg.upsample)
        path, message = self.exporter.write_spectrum(frame, filename)
        if path is None:
            raise OSError(message)
        self.manifest.outputs.append(path)

    def _sweep(self, name, variants):
        """
        rate_vs_snr style sweep. variants is a list of (value, config); value
        lands in column `name` unless name is None.
        """
        s = self.scenario
        cells = []
        for seed in s.seeds:
            for v_index, (value, base) in enumerate(variants):
                for snr in s.snr_grid_db:
                    cells.append(((seed, v_index, float(snr)), (seed, value, base.with_snr_db(snr))))

        def work(payload):
            seed, value, config = payload
            return self._rates(config, self._channels(config, seed), seed)

        rows = []
        for (seed, v_index, snr), (legacy, optimized) in self._run_cells(cells, work):
            row = {'seed': seed}
            if name is not None:
                row[name] = variants[v_index][0]
            row.update({'snr_db': snr, 'legacy': legacy, 'optimized': optimized})
            rows.append(row)
        columns = ['seed'] + ([name] if name else []) + ['snr_db', 'legacy', 'optimized']
        frame = pd.DataFrame(rows, columns=columns)
        self._write(frame, f"{s.name}.csv")
        keys = ([name] if name else []) + ['snr_db']
        return self._write_summary(frame, keys, ['legacy', 'optimized'], baseline='legacy')

    def _run_rate_vs_snr(self):
        return self._sweep(None, [(None, self.scenario.config)])

    def _run_filter_length_sweep(self):
        cfg = self.scenario.config
        lengths = self.scenario.filter_lengths or [cfg.filter_len]
        return self._sweep('filter_len', [(n, cfg.with_updates(filter_len=n)) for n in lengths])

    def _run_upsample_sweep(self):
        cfg = self.scenario.config
        variants = []
        for divisor in self.scenario.upsample_divisors or [1]:
            if divisor < 1 or cfg.num_users % divisor:
                raise ConfigError(f"upsample divisor {divisor} does not divide num_users={cfg.num_users}")
            P = cfg.num_users // divisor
            variants.append((P, cfg.with_updates(upsample=P)))
        return self._sweep('upsample', variants)

    def _run_joint_vs_waveform_only(self):
        s = self.scenario
        cells = []
        for seed in s.seeds:
            for scale in s.budget_scales:
                stopbands = s.stopbands.scaled(scale)
                for snr in s.snr_grid_db:
                    cells.append(((seed, float(scale), float(snr)),
                                  (seed, stopbands, s.config.with_snr_db(snr))))

        def work(payload):
            seed, stopbands, config = payload
            model = SystemModel(config, self._channels(config, seed))
            baseline_filters = stopband_baseline_filterbank(config, stopbands)
            baseline = model.sum_rate(baseline_filters, CovarianceSet.identity(config))
            frozen = JointOptimizer(model, stopbands, self.params, freeze_covariance=True)
            f_w, _, traj_w = frozen.optimize(baseline_filters)
            joint = JointOptimizer(model, stopbands, self.params)
            f_j, _, traj_j = joint.optimize(baseline_filters)
            viol = max(frozen.violation(f_w), joint.violation(f_j))
            return baseline, traj_w.final_sum_rate, traj_j.final_sum_rate, viol

        rows = []
        for (seed, scale, snr), (baseline, waveform_only, joint, viol) in self._run_cells(cells, work):
            rows.append({'seed': seed, 'budget_scale': scale, 'snr_db': snr, 'baseline': baseline,
                         'waveform_only': waveform_only, 'joint': joint, 'stopband_viol_max': viol})
        frame = pd.DataFrame(rows, columns=['seed', 'budget_scale', 'snr_db', 'baseline',
                                            'waveform_only', 'joint', 'stopband_viol_max'])
        self._write(frame, f"{s.name}.csv")
        return self._write_summary(frame, ['budget_scale', 'snr_db'],
                                   ['baseline', 'waveform_only', 'joint'], baseline='baseline')

    def _run_ber_curve(self):
        s = self.scenario
        cfg = s.config

        def work(seed):
            channels = self._channels(cfg, seed)
            filters, _ = optimize_P1(cfg, channels, self.params)
            return ber_monte_carlo(cfg, channels, filters, None, s.snr_grid_db, s.ber_trials, seed)

        frames = []
        for (seed,), table in self._run_cells([((seed,), seed) for seed in s.seeds], work):
            table.insert(0, 'seed', seed)
            frames.append(table)
        columns = ['seed', 'snr_db', 'ber', 'ci_low', 'ci_high', 'trials']
        frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
        self._write(frame[columns], f"{s.name}.csv")
        return self._write_summary(frame, ['snr_db'], ['ber'])

    def _run_equivalence_audit(self):
        s = self.scenario
        cells = [((seed,), seed) for seed in s.seeds]
        rows = []
        for (seed,), checks in self._run_cells(cells, lambda seed: audit_instance(s.config, seed)):
            rows.extend(checks)
        frame = pd.DataFrame(rows, columns=['seed', 'check', 'value', 'reference', 'abs_error', 'passed'])
        self._write(frame, f"{s.name}.csv")
        self.manifest.passed = bool(not frame.empty and frame['passed'].all())
        return self._write_summary(frame, ['check'], ['abs_error'])


def _check(seed, name, value, reference, tol=AUDIT_TOL):
    value, reference = float(value), float(reference)
    err = abs(value - reference)
    return {'seed': seed, 'check': name, 'value': value, 'reference': reference,
            'abs_error': err, 'passed': bool(err <= tol * max(1.0, abs(reference)))}


def audit_instance(config, seed):
    """Every evaluation-chain equality on one random instance"""
    rng = np.random.default_rng(seed)
    N, P, NP, N0 = config.block_len, config.upsample, config.np_len, config.noise_power
    channels = generate_channels(config, seed)
    filters = random_filterbank(config, seed)
    model = SystemModel(config, channels)
    rows = []

    covs = CovarianceSet.identity(config)
    time_rate = model.sum_rate(filters, covs, fast=False)
    rows.append(_check(seed, "sum_rate_fast", model.sum_rate(filters, covs), time_rate))
    rows.append(_check(seed, "b_form_sum_rate", model.b_form_sum_rate(filters, covs), time_rate))

    # frequency-diagonal covariances keep the block structure
    W = dft_matrix(N)
    shaped = []
    for m in range(config.num_users):
        d = rng.uniform(0.2, 2.0, N) * config.upsample * config.user_power[m]
        shaped.append(W.conj().T @ np.diag(d) @ W)
    shaped = CovarianceSet(np.array(shaped))
    rows.append(_check(seed, "sum_rate_fast_shaped", model.sum_rate(filters, shaped),
                       model.sum_rate(filters, shaped, fast=False)))

    f, C = filters[0], shaped[0]
    FU = circulant_matrix(f, NP) @ upsampler(N, P)
    rows.append(_check(seed, "check_power", check_power(f, C, config),
                       np.real(np.trace(FU @ C @ FU.conj().T)) / NP))

    symbols = (rng.standard_normal((config.num_users, N)) + 1j * rng.standard_normal((config.num_users, N))) / np.sqrt(2)
    circ = transmit_circular(symbols, filters, channels, config)
    lin = transmit_linear_cp(symbols, filters, channels, config)
    rows.append(_check(seed, "cp_circularization", np.linalg.norm(lin - circ), 0.0))

    eff = build_effective_channel(channels, filters, config)
    Y = dft_matrix(NP) @ (circ + np.sqrt(N0 / 2) * (rng.standard_normal(NP) + 1j * rng.standard_normal(NP)))
    dense = lmmse_detect(Y, eff, N0)
    fast = lmmse_detect_fast(Y, eff, N0)
    rows.append(_check(seed, "lmmse_block_vs_dense", np.max(np.abs(dense.estimates - fast.estimates)), 0.0))

    vecs = model.block_vectors(filters, covs)
    psi = interference_from_vectors(vecs)
    chain = psi.phi_inv_blocks
    for m in range(config.num_users):
        chain = woodbury_update(chain, vecs[m], sign=-1)
        chain = woodbury_update(chain, vecs[m], sign=1)
    direct = np.linalg.inv(from_blocks(psi.phi_blocks, N, P))
    rows.append(_check(seed, "woodbury_chain", np.max(np.abs(from_blocks(chain, N, P) - direct)), 0.0, tol=1e-7))
    return rows


def run_scenario(scenario, params=None, verbose=False):
    """Run one scenario and return its RunManifest"""
    return ScenarioRunner(scenario, params, verbose).run()
