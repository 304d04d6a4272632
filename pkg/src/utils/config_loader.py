import copy
import logging
import os
from pathlib import Path

import yaml

from src.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    'logging': {
        'level': 'INFO',
        'file': 'logs/fits.jsonl',
    },
    'optimizer': {
        'max_iterations': 10000,
        'rel_f_tol': 1e-10,
        'grad_tol': 1e-9,
        'line_search': {'c1': 1e-4, 'c2': 0.1, 'max_trials': 50},
        'cg_update': 'polak_ribiere_plus',
    },
    'cp': {
        'n_starts': 10,
        'seed': 0,
        'uniqueness_fms_threshold': 0.95,
        'n_jobs': 1,
    },
    'acmtf': {
        'rank': 10,
        'beta': 1e-3,
        'gamma': 1.0,
        'l1_epsilon': 1e-8,
        'n_starts': 32,
        'seed': 0,
        'share_threshold': 0.05,
        'uniqueness_fms_threshold': 0.95,
        'n_jobs': 1,
    },
    'preprocessing': {
        'center_mode': 2,
        'scale_mode': 1,
        'acmtf_unit_norm': True,
    },
    'analysis': {
        'alpha': 0.05,
        'equal_var': True,
        'congruence_threshold': 0.97,
        'zmap_threshold': 2.7,
    },
    'output': {
        'directory': 'results',
    },
}


def _deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(file_path=None):
    """
    Load configuration from YAML, merged over the built-in defaults.

    Args:
        file_path: Explicit config path; falls back to $CONFIG_PATH, then config.yaml

    Returns:
        Configuration dictionary with every section present
    """
    path = Path(file_path or os.environ.get('CONFIG_PATH', 'config.yaml'))
    if not path.exists():
        if file_path:
            raise ConfigError(f"Config file not found: {path}")
        logger.info(f"No config file at {path}, using built-in defaults")
        return copy.deepcopy(DEFAULT_CONFIG)

    try:
        with open(path, 'r') as f:
            user_config = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}") from e

    if not isinstance(user_config, dict):
        raise ConfigError(f"Top level of {path} must be a mapping")

    logger.debug(f"Loaded configuration from {path}")
    return _deep_merge(DEFAULT_CONFIG, user_config)
