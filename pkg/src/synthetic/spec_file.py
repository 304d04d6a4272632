"""
Flat ``key = value`` files describing a SynthSpec.

Lists are comma-separated, booleans are true/false/1/0 and ``#`` starts a
comment. Example:

    dims = 38, 451, 11, 600
    rank = 3
    in_matrix = true, true, false
    group_sizes = 22, 16
    group_effects = 1.5, 0, 0
"""
import logging
from pathlib import Path
from typing import Dict

from src.synthetic.generator import SynthSpec
from src.utils.exceptions import DataFormatError

logger = logging.getLogger(__name__)

_TRUE = {'true', 'yes', '1'}
_FALSE = {'false', 'no', '0'}


def _to_bool(text: str, key: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise DataFormatError(f"'{key}' expects true/false values, got '{text.strip()}'")


def _split(text: str):
    return [part.strip() for part in text.split(',') if part.strip()]


_PARSERS = {
    'dims': lambda v, k: tuple(int(x) for x in _split(v)),
    'rank': lambda v, k: int(v),
    'in_tensor': lambda v, k: tuple(_to_bool(x, k) for x in _split(v)),
    'in_matrix': lambda v, k: tuple(_to_bool(x, k) for x in _split(v)),
    'tensor_weights': lambda v, k: tuple(float(x) for x in _split(v)),
    'matrix_weights': lambda v, k: tuple(float(x) for x in _split(v)),
    'noise_tensor': lambda v, k: float(v),
    'noise_matrix': lambda v, k: float(v),
    'group_sizes': lambda v, k: tuple(int(x) for x in _split(v)),
    'group_effects': lambda v, k: tuple(float(x) for x in _split(v)),
    'smooth_time': lambda v, k: _to_bool(v, k),
    'seed': lambda v, k: int(v),
}


def parse_spec_text(text: str, source: str = '<text>') -> SynthSpec:
    """
    Parse spec text into a SynthSpec.

    Raises:
        DataFormatError: for syntax problems and unknown or missing keys
        DomainError: when the parsed values violate SynthSpec invariants
    """
    values: Dict = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        if '=' not in content:
            raise DataFormatError(f"{source}:{number}: expected 'key = value', got '{content}'")
        key, raw = (part.strip() for part in content.split('=', 1))
        if key not in _PARSERS:
            raise DataFormatError(f"{source}:{number}: unknown key '{key}'")
        if key in values:
            raise DataFormatError(f"{source}:{number}: duplicate key '{key}'")
        try:
            values[key] = _PARSERS[key](raw, key)
        except ValueError as e:
            raise DataFormatError(f"{source}:{number}: bad value for '{key}': {e}") from e

    missing = [k for k in ('dims', 'rank') if k not in values]
    if missing:
        raise DataFormatError(f"{source}: missing required keys {missing}")
    return SynthSpec(**values)


def read_spec_file(file_path) -> SynthSpec:
    path = Path(file_path)
    if not path.exists():
        raise DataFormatError(f"Spec file not found: {path}")
    spec = parse_spec_text(path.read_text(), str(path))
    logger.info(f"Loaded synthetic spec from {path}: dims {spec.dims}, rank {spec.rank}")
    return spec


def _join(values) -> str:
    return ', '.join(str(v).lower() if isinstance(v, bool) else repr(v) for v in values)


def write_spec_file(spec: SynthSpec, file_path) -> None:
    lines = [
        f"dims = {_join(spec.dims)}",
        f"rank = {spec.rank}",
        f"in_tensor = {_join(spec.in_tensor)}",
        f"in_matrix = {_join(spec.in_matrix)}",
        f"tensor_weights = {_join(spec.tensor_weights)}",
        f"matrix_weights = {_join(spec.matrix_weights)}",
        f"noise_tensor = {spec.noise_tensor!r}",
        f"noise_matrix = {spec.noise_matrix!r}",
        f"group_sizes = {_join(spec.group_sizes)}",
        f"group_effects = {_join(spec.group_effects)}",
        f"smooth_time = {str(spec.smooth_time).lower()}",
        f"seed = {spec.seed}",
    ]
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(lines) + '\n')
