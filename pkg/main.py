#!/usr/bin/env python3
"""
CP-FBMA experiment runner
Runs one named scenario and writes its CSV tables and run manifest
"""

import argparse
import os
import sys
import warnings

from src.exceptions import ConfigError, NumericalError, NumericalWarning
from src.models import SCENARIO_NAMES, Scenario, StopbandSpec, SystemConfig
from src.scenarios import ScenarioRunner, load_preset, load_stopband_preset
from src.settings import Settings
from src.ui import UI
from src.utils import parse_float_list, parse_seeds, validate_threads

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_OUTPUT = 4
EXIT_INTERRUPTED = 130


def build_parser():
    parser = argparse.ArgumentParser(
        description="CP-FBMA waveform and covariance optimization experiments")
    parser.add_argument("--scenario", required=True, choices=SCENARIO_NAMES,
                        help="experiment to run")
    parser.add_argument("--config", help="SystemConfig JSON file (overrides --preset)")
    parser.add_argument("--preset", choices=("paper", "desk"),
                        help="shipped system configuration")
    parser.add_argument("--seeds", help="comma list or inclusive range, e.g. 0,1,2 or 0-19")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", help="worker threads for scenario cells")
    parser.add_argument("--snr-grid", help="SNR grid in dB, e.g. 0,5,10 or 0:30:5")
    parser.add_argument("--stopbands", help="stopband JSON file (default: preset stopbands)")
    parser.add_argument("--settings", help="INI settings file (default: config.ini)")
    parser.add_argument("--verbose", action="store_true", help="report every optimizer sweep")
    return parser


def _checked(parsed, flag):
    ok, value = parsed
    if not ok:
        raise ConfigError(f"{flag}: {value}")
    return value


def build_scenario(args, settings):
    """Scenario from flags layered over the settings"""
    preset = args.preset or settings.preset
    config = SystemConfig.from_json(args.config) if args.config else load_preset(preset)
    seeds = _checked(parse_seeds(args.seeds), "--seeds") if args.seeds else settings.seeds
    snr_grid = (_checked(parse_float_list(args.snr_grid, sort=True), "--snr-grid")
                if args.snr_grid else settings.snr_grid_db)
    threads = _checked(validate_threads(args.threads), "--threads") if args.threads else settings.threads

    stopbands = None
    if args.stopbands:
        stopbands = StopbandSpec.from_json(args.stopbands)
    elif args.scenario == "joint_vs_waveform_only":
        stopbands = load_stopband_preset(preset)

    return Scenario(
        name=args.scenario,
        config=config,
        seeds=seeds,
        snr_grid_db=snr_grid,
        output_dir=os.path.join(args.out or settings.output_dir, args.scenario),
        stopbands=stopbands,
        filter_lengths=settings.filter_lengths,
        upsample_divisors=settings.upsample_divisors,
        budget_scales=settings.budget_scales,
        ber_trials=settings.ber_trials,
        threads=threads,
    )


def main(argv=None):
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    try:
        settings = Settings(args.settings)
        scenario = build_scenario(args, settings)
        params = settings.optimizer_params()
        UI.show_banner(scenario.name, scenario.config, scenario.seeds, scenario.output_dir)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NumericalWarning)
            runner = ScenarioRunner(scenario, params, verbose=args.verbose)
            manifest = runner.run()
        seen = set()
        for w in caught:
            if issubclass(w.category, NumericalWarning) and str(w.message) not in seen:
                seen.add(str(w.message))
                UI.print_warning(str(w.message))
        if scenario.name == "equivalence_audit":
            UI.display_audit(runner.exporter.read_frame(f"{scenario.name}.csv"))
        UI.display_table(runner.summary, title=f"Summary over {len(scenario.seeds)} seed(s)")
        UI.display_manifest(manifest)
        return EXIT_OK if manifest.ok else EXIT_NUMERICAL
    except KeyboardInterrupt:
        print("\n")
        UI.print_warning("Run interrupted by user")
        return EXIT_INTERRUPTED
    except (ConfigError, FileNotFoundError) as e:
        UI.print_error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        UI.print_error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        UI.print_error(f"Cannot write results: {e}")
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
