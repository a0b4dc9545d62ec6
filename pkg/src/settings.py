"""
Runner settings
Defaults from config.ini, overridden by CPFBMA_* environment variables
(optionally loaded from a .env file) and finally by command line flags
"""

import configparser
import os

from dotenv import load_dotenv

from src.exceptions import ConfigError
from src.models import OptimizerParams
from src.utils import parse_float_list, parse_int_list, parse_seeds, validate_threads

DEFAULT_CONFIG = "config.ini"

DEFAULTS = {
    'runner': {
        'output_dir': 'results',
        'threads': '1',
        'preset': 'desk',
        'seeds': '0',
    },
    'optimizer': {
        'inner_eps': '1.0',
        'rho0': '0.01',
        'backtrack_shrink': '0.5',
        'armijo_c': '1e-4',
        'max_inner': '200',
        'max_outer': '50',
        'outer_tol': '1e-4',
        'init': 'legacy',
    },
    'sdp': {
        'tolerance': '1e-7',
        'max_iter': '100',
    },
    'scenarios': {
        'snr_grid_db': '0,5,10,15,20,25,30',
        'filter_lengths': '16,32,48',
        'upsample_divisors': '1,2,4',
        'budget_scales': '1.0',
        'ber_trials': '200',
    },
}

ENV_OVERRIDES = {
    'CPFBMA_OUTPUT_DIR': ('runner', 'output_dir'),
    'CPFBMA_THREADS': ('runner', 'threads'),
}


class Settings:
    """Layered configuration for the scenario runner"""

    def __init__(self, config_path=None, env_file=".env"):
        if env_file and os.path.exists(env_file):
            load_dotenv(env_file, override=False)
        explicit = config_path or os.environ.get('CPFBMA_CONFIG')
        self.config_path = explicit or DEFAULT_CONFIG
        self.parser = configparser.ConfigParser()
        self.parser.read_dict(DEFAULTS)
        self.load_config(required=bool(explicit))
        for var, (section, key) in ENV_OVERRIDES.items():
            value = os.environ.get(var)
            if value:
                self.parser.set(section, key, value)

    def load_config(self, required):
        """Read the INI file; only an explicitly requested file must exist"""
        if not os.path.exists(self.config_path):
            if required:
                raise FileNotFoundError(
                    f"Configuration file '{self.config_path}' not found. "
                    "Please copy config.ini from the repository root or drop --config."
                )
            return
        try:
            self.parser.read(self.config_path)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {self.config_path}: {e}") from e

    def get(self, section, key):
        return self.parser.get(section, key)

    @property
    def output_dir(self):
        return self.get('runner', 'output_dir')

    @property
    def preset(self):
        return self.get('runner', 'preset')

    @property
    def threads(self):
        ok, value = validate_threads(self.get('runner', 'threads'))
        if not ok:
            raise ConfigError(f"[runner] threads: {value}")
        return value

    @property
    def seeds(self):
        return self._parsed(parse_seeds, 'runner', 'seeds')

    @property
    def snr_grid_db(self):
        return self._parsed(lambda t: parse_float_list(t, sort=True), 'scenarios', 'snr_grid_db')

    @property
    def filter_lengths(self):
        return self._parsed(parse_int_list, 'scenarios', 'filter_lengths')

    @property
    def upsample_divisors(self):
        return self._parsed(parse_int_list, 'scenarios', 'upsample_divisors')

    @property
    def budget_scales(self):
        return self._parsed(parse_float_list, 'scenarios', 'budget_scales')

    @property
    def ber_trials(self):
        try:
            return self.parser.getint('scenarios', 'ber_trials')
        except ValueError as e:
            raise ConfigError(f"[scenarios] ber_trials: {e}") from e

    def optimizer_params(self):
        """OptimizerParams from [optimizer] and [sdp]"""
        p = self.parser
        try:
            return OptimizerParams(
                inner_eps=p.getfloat('optimizer', 'inner_eps'),
                rho0=p.getfloat('optimizer', 'rho0'),
                backtrack_shrink=p.getfloat('optimizer', 'backtrack_shrink'),
                armijo_c=p.getfloat('optimizer', 'armijo_c'),
                max_inner=p.getint('optimizer', 'max_inner'),
                max_outer=p.getint('optimizer', 'max_outer'),
                outer_tol=p.getfloat('optimizer', 'outer_tol'),
                init=p.get('optimizer', 'init'),
                sdp_tolerance=p.getfloat('sdp', 'tolerance'),
                sdp_max_iter=p.getint('sdp', 'max_iter'),
            )
        except ValueError as e:
            raise ConfigError(f"invalid optimizer setting: {e}") from e

    def _parsed(self, parser, section, key):
        ok, value = parser(self.get(section, key))
        if not ok:
            raise ConfigError(f"[{section}] {key}: {value}")
        return value
