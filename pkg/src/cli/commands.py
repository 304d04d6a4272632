"""
Command-line interface for CP and coupled matrix-tensor fusion.

Commands:
    cp      Fit a CP model to a tensor file
    acmtf   Fit a coupled tensor/matrix model and classify shared components
    synth   Write synthetic coupled data with known structure
    stats   Test factor columns for group differences

Exit codes: 0 success, 2 usage errors, 3 data/config errors, 4 fit failures.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from src.analysis.significance import significance_report, significance_table
from src.core.tensor import select_indices
from src.data_processing.data_loader import (
    read_labels, read_matrix, read_tensor, write_labels, write_matrix, write_tensor,
)
from src.data_processing.preprocessor import preprocess_matrix, preprocess_tensor
from src.models.acmtf import AcmtfConfig, AcmtfProblem, fit_acmtf
from src.models.cp_opt import CpConfig, CpProblem, fit_cp
from src.results.bundle import objective_check, write_model, write_preprocessing, write_report
from src.synthetic.generator import generate, paper_shaped_preset
from src.synthetic.spec_file import read_spec_file, write_spec_file
from src.utils.config_loader import load_config
from src.utils.exceptions import FitFailureError, FusionError
from src.utils.helpers import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not 0 <= value < float('inf'):
        raise argparse.ArgumentTypeError(f"must be a finite value >= 0, got {value}")
    return value


def _job_count(text: str) -> int:
    """joblib worker count: positive, or negative to count back from all cores."""
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value == 0:
        raise argparse.ArgumentTypeError("must be a positive count or -1 for all cores, got 0")
    return value


def _index_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got '{text}'")


def _optimizer_section(config: Dict, args) -> Dict:
    section = dict(config.get('optimizer', {}))
    if args.tol_rel_f is not None:
        section['rel_f_tol'] = args.tol_rel_f
    if args.max_iters is not None:
        section['max_iterations'] = args.max_iters
    return section


def _progress(args) -> bool:
    return not args.no_progress and sys.stderr.isatty()


def _significance(model, args, config: Dict):
    if not args.groups:
        return None
    labels = read_labels(args.groups)
    analysis = config.get('analysis', {})
    alpha = args.alpha if args.alpha is not None else float(analysis.get('alpha', 0.05))
    equal_var = not args.welch and bool(analysis.get('equal_var', True))
    return significance_report(model, labels, alpha=alpha, equal_var=equal_var)


def _finish_bundle(out: Path, model, fit_report, objective, preprocessing, significance,
                   inputs: Dict, command: str, zmap_threshold: float) -> Dict:
    zmaps = write_model(out, model, zmap_threshold)
    check = objective_check(out, objective, fit_report.model_objective)
    write_preprocessing(out, preprocessing)
    report = {
        'command': command,
        'inputs': inputs,
        'fit': fit_report.to_dict(),
        'objective_check': check,
        'significance': [s.to_dict() for s in significance] if significance else None,
    }
    if zmaps:
        report['zmaps'] = zmaps
    write_report(out, report)
    if not check['passed']:
        raise FitFailureError(
            f"Reloaded model objective differs from the fitted one by {check['relative_discrepancy']:.3e}",
            report=fit_report,
        )
    if significance:
        print(significance_table(significance).to_string())
    return report


def cmd_cp(args, config: Dict) -> int:
    tensor = read_tensor(args.input)
    if args.electrodes:
        tensor = select_indices(tensor, 3, args.electrodes)

    records = []
    if not args.no_preprocess:
        prep = config.get('preprocessing', {})
        tensor, records = preprocess_tensor(
            tensor, int(prep.get('center_mode', 2)), int(prep.get('scale_mode', 1)))

    cfg = CpConfig.from_dict(
        config.get('cp', {}), optimizer=_optimizer_section(config, args),
        rank=args.rank, n_starts=args.inits, seed=args.seed, n_jobs=args.jobs,
        degeneracy_threshold=config.get('analysis', {}).get('congruence_threshold'),
    )
    model, fit_report = fit_cp(tensor, cfg, progress=_progress(args))
    significance = _significance(model, args, config)

    problem = CpProblem(tensor, cfg.rank)
    inputs = {'tensor': str(args.input), 'dims': list(tensor.dims), 'electrodes': args.electrodes}
    _finish_bundle(
        Path(args.out), model, fit_report, problem.model_objective, {'tensor': records},
        significance, inputs, 'cp', float(config.get('analysis', {}).get('zmap_threshold', 2.7)),
    )
    print(pd.DataFrame(fit_report.components).set_index('component').to_string())
    return EXIT_OK


def cmd_acmtf(args, config: Dict) -> int:
    tensor = read_tensor(args.tensor)
    matrix = read_matrix(args.matrix)
    if tensor.dims[0] != matrix.dims[0]:
        logger.error(f"Subject counts differ: tensor {tensor.dims[0]}, matrix {matrix.dims[0]}")
        return EXIT_DATA
    if args.electrodes:
        tensor = select_indices(tensor, 3, args.electrodes)

    records = {'tensor': [], 'matrix': []}
    if not args.no_preprocess:
        prep = config.get('preprocessing', {})
        unit_norm = bool(prep.get('acmtf_unit_norm', True))
        tensor, records['tensor'] = preprocess_tensor(
            tensor, int(prep.get('center_mode', 2)), int(prep.get('scale_mode', 1)), unit_norm=unit_norm)
        matrix, records['matrix'] = preprocess_matrix(matrix, unit_norm=unit_norm)

    cfg = AcmtfConfig.from_dict(
        config.get('acmtf', {}), optimizer=_optimizer_section(config, args),
        rank=args.rank, beta=args.beta, n_starts=args.inits, seed=args.seed, n_jobs=args.jobs,
        degeneracy_threshold=config.get('analysis', {}).get('congruence_threshold'),
    )
    model, fit_report = fit_acmtf(tensor, matrix, cfg, progress=_progress(args))
    significance = _significance(model, args, config)

    problem = AcmtfProblem(tensor, matrix, cfg)
    inputs = {
        'tensor': str(args.tensor), 'matrix': str(args.matrix),
        'dims': list(tensor.dims) + [matrix.dims[1]], 'electrodes': args.electrodes,
    }
    _finish_bundle(
        Path(args.out), model, fit_report, problem.model_objective, records,
        significance, inputs, 'acmtf', float(config.get('analysis', {}).get('zmap_threshold', 2.7)),
    )
    print(pd.DataFrame(fit_report.components).set_index('component').to_string())
    return EXIT_OK


def cmd_synth(args, config: Dict) -> int:
    if args.preset:
        spec = paper_shaped_preset(seed=args.seed if args.seed is not None else 0)
    else:
        spec = read_spec_file(args.spec)
    data = generate(spec)

    out = Path(args.out)
    write_tensor(data.tensor, out / 'tensor.txt')
    write_matrix(data.matrix, out / 'matrix.txt')
    write_labels(data.labels, out / 'labels.txt')
    write_spec_file(spec, out / 'spec.txt')
    write_model(out / 'truth', data.truth)
    write_report(out / 'truth', {
        'command': 'synth',
        'dims': list(spec.dims),
        'rank': spec.rank,
        'in_tensor': list(spec.in_tensor),
        'in_matrix': list(spec.in_matrix),
        'group_sizes': list(spec.group_sizes),
        'group_effects': list(spec.group_effects),
        'seed': spec.seed,
    })
    print(f"Wrote tensor {data.tensor.dims} and matrix {data.matrix.dims} to {out}")
    return EXIT_OK


def cmd_stats(args, config: Dict) -> int:
    factors = read_matrix(args.factors)
    results = _significance(factors.data, args, config)
    print(significance_table(results).to_string())
    return EXIT_OK


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--inits', type=_positive_int, help='Number of random starts')
    p.add_argument('--seed', type=_non_negative_int, help='Base random seed')
    p.add_argument('--tol-rel-f', type=float, help='Relative objective change tolerance')
    p.add_argument('--max-iters', type=_positive_int, help='Iteration budget per start')
    p.add_argument('--out', '-o', required=True, help='Result bundle directory')
    p.add_argument('--groups', help='Labels file (one 0/1 per subject)')
    p.add_argument('--no-preprocess', action='store_true', help='Skip centering and scaling')
    p.add_argument('--electrodes', type=_index_list, help='Zero-based electrode indices to keep')
    p.add_argument('--jobs', type=_job_count, help='Parallel workers for the starts')
    p.add_argument('--welch', action='store_true', help="Use Welch's t-test")
    p.add_argument('--alpha', type=float, help='Significance level')
    p.add_argument('--no-progress', action='store_true', help='Hide the progress bar')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='CP and coupled matrix-tensor factorization for multimodal fusion')
    parser.add_argument('--config', help='Path to config.yaml (default: $CONFIG_PATH or ./config.yaml)')
    parser.add_argument('--log-level', help='Logging level (default from config)')

    subparsers = parser.add_subparsers(dest='command', help='Command')

    cp_parser = subparsers.add_parser('cp', help='Fit a CP model to a tensor')
    cp_parser.add_argument('--input', '-i', required=True, help='TensorFile')
    cp_parser.add_argument('--rank', '-r', type=_positive_int, required=True, help='Number of components')
    _add_fit_flags(cp_parser)
    cp_parser.set_defaults(func=cmd_cp)

    acmtf_parser = subparsers.add_parser('acmtf', help='Fit a coupled tensor/matrix model')
    acmtf_parser.add_argument('--tensor', '-t', required=True, help='TensorFile')
    acmtf_parser.add_argument('--matrix', '-m', required=True, help='MatrixFile')
    acmtf_parser.add_argument('--rank', '-r', type=_positive_int, help='Number of components (default from config)')
    acmtf_parser.add_argument('--beta', type=_non_negative_float, help='Weight sparsity penalty (default from config)')
    _add_fit_flags(acmtf_parser)
    acmtf_parser.set_defaults(func=cmd_acmtf)

    synth_parser = subparsers.add_parser('synth', help='Generate synthetic coupled data')
    source = synth_parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--spec', help='Spec file (key = value lines)')
    source.add_argument('--preset', choices=['paper'], help='Built-in preset')
    synth_parser.add_argument('--seed', type=_non_negative_int, help='Seed for the preset')
    synth_parser.add_argument('--out', '-o', required=True, help='Output directory')
    synth_parser.set_defaults(func=cmd_synth)

    stats_parser = subparsers.add_parser('stats', help='Group-difference tests on a factor matrix')
    stats_parser.add_argument('--factors', '-f', required=True, help='MatrixFile (subjects x components)')
    stats_parser.add_argument('--groups', '-g', required=True, help='Labels file')
    stats_parser.add_argument('--welch', action='store_true', help="Use Welch's t-test")
    stats_parser.add_argument('--alpha', type=float, help='Significance level')
    stats_parser.set_defaults(func=cmd_stats)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    try:
        config = load_config(args.config)
    except FusionError as e:
        setup_logging('INFO')
        logger.error(str(e))
        return EXIT_DATA

    logging_cfg = config.get('logging', {})
    setup_logging(args.log_level or logging_cfg.get('level', 'INFO'), logging_cfg.get('file'))

    try:
        return args.func(args, config)
    except FitFailureError as e:
        logger.error(f"Fit failed: {e}")
        return EXIT_FIT
    except (FusionError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
