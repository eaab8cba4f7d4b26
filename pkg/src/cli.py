"""
Command-line front end: ``check``, ``oracle``, ``regime-map`` and ``verify``.

Exit codes: 0 when every requested condition holds (or no suboptimality
witness is found), 2 when a condition is violated or a cross-validation
disagrees, 1 on errors.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .app_utils import configure_logging, load_environment, suppress_numeric_warnings
from .applications import (
    CrraParams,
    crra_model,
    crra_regime,
    check_separable_derivative_condition,
    multiplicative_benchmark,
    sender_slope,
    separable_params_from,
)
from .conditions import (
    ConditionVerdict,
    Disclosure,
    GridSpec,
    Status,
    check_derivable_condition,
    check_derivative_conditions,
    check_linear_case,
    check_linear_receiver,
    check_suboptimality,
    check_weak_condition,
    default_grid,
    disclosure_verdict,
)
from .errors import ConcavityViolation, ConfigError, UnsupportedSupportSize
from .model_core import StateActionModel, ratio
from .oracle import binary_pair_scan, concavify_2state, concavify_3state, gain_via_integrals
from .report_operations import (
    ensure_dir,
    read_jsonl,
    summary_text,
    verdict_records,
    verdicts_frame,
    witnesses_frame,
    write_csv,
    write_jsonl,
    write_text,
)
from .report_visualization import plot_envelope, plot_ratio_field, plot_regime_map
from .run_config import KNOWN_FORMATS, RunConfig, load_config, parse_grid

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED = 0, 1, 2
VERIFY_REL_TOL = 1e-9
REGIME_STATES = (1.0, 2.0)
# reported for comparison only; never drives the exit code
COMPARISON_ONLY = frozenset({'linear_receiver_kolotilin'})


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML run config')
    common.add_argument('--out', help='Output directory (default: output.directory, $PERSUASION_OUT_DIR, ./out)')
    common.add_argument('--grid', type=parse_grid, help='Grid resolution NxM (states x actions)')
    common.add_argument('--format', action='append', choices=KNOWN_FORMATS, dest='formats',
                        help='Output format; repeat for several (default: all)')
    common.add_argument('--seed', type=int, help='Seed for randomized subsampling')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    parser = argparse.ArgumentParser(
        prog='disclosure-check',
        description='Check sufficient conditions for optimal full disclosure and cross-validate them.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', help='Commands')

    subparsers.add_parser('check', parents=[common], help='Run the condition checkers of a config')
    subparsers.add_parser('oracle', parents=[common], help='Run the brute-force persuasion oracle')

    cmd_map = subparsers.add_parser('regime-map', parents=[common],
                                    help='Sweep the CRRA (gamma, rho) regime classifier')
    cmd_map.add_argument('--gamma-range', type=float, nargs=2, default=[0.0, 2.5])
    cmd_map.add_argument('--rho-range', type=float, nargs=2, default=[0.0, 2.5])
    cmd_map.add_argument('--resolution', type=int, default=26, help='Lattice points per axis')
    cmd_map.add_argument('--epsilon-band', type=float, default=0.02,
                         help='Half-width of the excluded band around 1')
    cmd_map.add_argument('--validate-every', type=int, default=4,
                         help='Cross-validate every k-th classified lattice point (0 disables)')
    cmd_map.add_argument('--workers', type=int, default=1)
    cmd_map.add_argument('--delta', type=float, default=0.5)
    cmd_map.add_argument('--kappa', type=float, default=0.5)

    cmd_verify = subparsers.add_parser('verify', parents=[common],
                                       help='Recompute a verdict stream and compare')
    cmd_verify.add_argument('--verdicts', required=True, help='verdicts.jsonl to re-validate')
    return parser


def _output_dir(args, config: Optional[RunConfig], env: Dict) -> str:
    out = args.out or (config.output_dir if config else None) or env.get('out_dir') or 'out'
    return ensure_dir(out)


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    return load_config(args.config).with_overrides(grid=args.grid, formats=args.formats)


def compute_verdicts(config: RunConfig, model: StateActionModel, grid: GridSpec) -> List[ConditionVerdict]:
    """Run every requested check in config order."""
    verdicts = []
    for name in config.checks:
        logger.info(f"Running check '{name}' on a {grid.resolution[0]}x{grid.resolution[1]} grid")
        if name == 'weak':
            verdicts.append(check_weak_condition(model, grid))
        elif name == 'derivable':
            verdicts.append(check_derivable_condition(model, grid))
        elif name == 'derivative':
            verdicts.append(check_derivative_conditions(model, grid))
        elif name == 'subopt':
            verdicts.append(check_suboptimality(model, grid, config.prior.support))
        elif name == 'linear_case':
            if model.family != 'linear_case':
                raise ConfigError("check 'linear_case' needs the linear_case family")
            verdicts.append(check_linear_case(sender_slope(model), grid))
        elif name == 'linear_receiver':
            pair = check_linear_receiver(model, grid)
            verdicts.extend([pair['ours'], pair['kolotilin']])
        elif name in ('separable', 'benchmark'):
            if model.family != 'separable':
                raise ConfigError(f"check '{name}' needs the separable family")
            params = separable_params_from(config.params)
            if name == 'separable':
                verdicts.append(check_separable_derivative_condition(params, grid))
            else:
                verdicts.extend(multiplicative_benchmark(params.phi, grid).values())
    return verdicts


def _combined_disclosure(verdicts: Sequence[ConditionVerdict]) -> Optional[Disclosure]:
    by_name = {v.condition: v for v in verdicts}
    if 'weak' in by_name and 'subopt' in by_name:
        return disclosure_verdict(by_name['weak'], by_name['subopt'])
    return None


def run_check(config: RunConfig, out_dir: str) -> int:
    model = config.build_model()
    grid = config.build_grid(model)
    logger.info(f"Model {config.family} built; grid {grid.resolution[0]}x{grid.resolution[1]}")
    verdicts = compute_verdicts(config, model, grid)
    disclosure = _combined_disclosure(verdicts)

    if 'json-lines' in config.formats:
        records = verdict_records(verdicts, config)
        for record in records:
            record['grid'] = list(grid.resolution)
        write_jsonl(records, os.path.join(out_dir, 'verdicts.jsonl'))
    if 'csv' in config.formats:
        write_csv(verdicts_frame(verdicts), os.path.join(out_dir, 'verdicts.csv'), config.sha256)
        write_csv(witnesses_frame(verdicts), os.path.join(out_dir, 'witnesses.csv'), config.sha256)
    if 'svg' in config.formats:
        try:
            w, a = grid.mesh()
            values = np.asarray(ratio(model, w, a), dtype=float)
            weak = next((v for v in verdicts if v.condition == 'weak'), None)
            plot_ratio_field(grid, values, weak.witnesses if weak else (),
                             os.path.join(out_dir, 'ratio_field.svg'))
        except ConcavityViolation as e:
            logger.warning(f"Skipping ratio_field.svg: {str(e)}")
    summary = summary_text(verdicts, config, disclosure)
    write_text(summary, os.path.join(out_dir, 'summary.txt'))
    print(summary, end='')

    if config.oracle.enabled:
        run_oracle(config, out_dir, model)

    violated = [v.condition for v in verdicts
                if v.status == Status.VIOLATED and v.condition not in COMPARISON_ONLY]
    if violated:
        logger.warning(f"Violated: {violated}")
        return EXIT_VIOLATED
    return EXIT_OK


def run_oracle(config: RunConfig, out_dir: str, model: Optional[StateActionModel] = None) -> int:
    prior = config.prior
    if len(prior) >= 4:
        raise UnsupportedSupportSize(f"The oracle handles 2 or 3 support states, got {len(prior)}")
    if len(prior) < 2:
        raise ConfigError("The oracle needs a prior with at least two support states")
    model = model or config.build_model()
    settings = config.oracle

    scan = binary_pair_scan(model, prior.support, settings.pi_grid)
    table = scan.table.copy()
    table['gain_integral'] = [
        gain_via_integrals(model, r.omega_1, r.omega_2, r.pi_1, settings.quad_points)
        for r in table.itertuples(index=False)
    ]
    if len(prior) == 2:
        envelope = concavify_2state(model, prior.support, prior.probabilities[1], settings.resolution_2state)
    else:
        envelope = concavify_3state(model, prior.support, prior, settings.resolution_3state)

    if 'csv' in config.formats:
        write_csv(table, os.path.join(out_dir, 'binary_splits.csv'), config.sha256)
        write_csv(envelope.samples_frame(), os.path.join(out_dir, 'envelope_samples.csv'), config.sha256)
    if 'svg' in config.formats and len(prior) == 2:
        plot_envelope(envelope, os.path.join(out_dir, 'envelope.svg'))
    if 'json-lines' in config.formats:
        records = [
            {'kind': 'envelope', **envelope.to_record()},
            {'kind': 'pair_scan', 'min_gain': scan.min_gain, 'certificate': scan.certificate,
             'worst': scan.worst},
        ]
        write_jsonl(records, os.path.join(out_dir, 'oracle.jsonl'))

    line = f"{envelope.verdict.value} margin={envelope.margin:.17g}"
    if scan.certificate:
        w = scan.worst
        line += f" certificate: pool ({w['omega_1']:g}, {w['omega_2']:g}) at pi_1={w['pi_1']:g}, gain={w['gain']:.6g}"
    print(line)
    logger.info(line)
    return EXIT_OK


def _lattice(lo: float, hi: float, resolution: int) -> np.ndarray:
    if resolution < 1:
        raise ConfigError("resolution must be positive")
    if resolution == 1 or lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, resolution)


def validate_regime_point(gamma: float, rho: float, delta: float, kappa: float,
                          grid_shape: Optional[Tuple[int, int]] = None) -> Dict[str, object]:
    """Compare the analytic regime with the weak/suboptimality checkers on states {1, 2}."""
    regime = crra_regime(gamma, rho)
    model = crra_model(CrraParams(gamma, rho, delta, kappa), REGIME_STATES)
    n_states, n_actions = grid_shape or (101, 201)
    grid = default_grid(model, n_states, n_actions)
    weak = check_weak_condition(model, grid)
    subopt = check_suboptimality(model, grid, REGIME_STATES)
    found = subopt.status == Status.HOLDS_STRICTLY
    if regime == Disclosure.OPTIMAL:
        agrees = weak.holds and not found
    elif regime == Disclosure.SUBOPTIMAL:
        agrees = found
    else:
        agrees = weak.status == Status.VIOLATED and not found
    return {'weak_status': weak.status.value, 'subopt_status': subopt.status.value, 'agrees': bool(agrees)}


def run_regime_map(args, out_dir: str, formats: Sequence[str]) -> int:
    band = args.epsilon_band
    for name, (lo, hi) in (('gamma', args.gamma_range), ('rho', args.rho_range)):
        if lo > hi or lo < 0:
            raise ConfigError(f"--{name}-range must satisfy 0 <= lo <= hi")
        if band <= 0 and lo <= 1 <= hi:
            raise ConfigError(f"--{name}-range crosses 1; set a positive --epsilon-band")
    if not 0 < args.delta < 1 or not 0 < args.kappa < 1:
        raise ConfigError("--delta and --kappa must lie in (0, 1)")

    gammas = _lattice(*args.gamma_range, args.resolution)
    rhos = _lattice(*args.rho_range, args.resolution)
    rows = []
    for rho in rhos:
        for gamma in gammas:
            excluded = abs(gamma - 1) < band or abs(rho - 1) < band or gamma == 1 or rho == 1
            regime = 'EXCLUDED' if excluded else crra_regime(gamma, rho).value
            rows.append({'gamma': float(gamma), 'rho': float(rho), 'regime': regime})
    df = pd.DataFrame(rows)

    classified = np.flatnonzero(df['regime'] != 'EXCLUDED')
    every = args.validate_every
    if every <= 0:
        chosen = np.array([], dtype=int)
    elif args.seed is not None:
        rng = np.random.default_rng(args.seed)
        size = len(classified[::every])
        chosen = np.sort(rng.choice(classified, size=size, replace=False))
    else:
        chosen = classified[::every]
    logger.info(f"Lattice {gammas.size}x{rhos.size}: {classified.size} classified, validating {chosen.size}")

    def validate(idx):
        row = df.iloc[idx]
        return validate_regime_point(row['gamma'], row['rho'], args.delta, args.kappa, args.grid)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(validate, chosen))
    else:
        results = [validate(idx) for idx in chosen]

    df['validated'] = False
    df['agrees'] = pd.Series([pd.NA] * len(df), dtype='boolean')
    df['weak_status'] = ''
    df['subopt_status'] = ''
    for idx, result in zip(chosen, results):
        df.loc[idx, 'validated'] = True
        df.loc[idx, 'agrees'] = result['agrees']
        df.loc[idx, 'weak_status'] = result['weak_status']
        df.loc[idx, 'subopt_status'] = result['subopt_status']

    if 'csv' in formats:
        write_csv(df, os.path.join(out_dir, 'regime_map.csv'))
    if 'svg' in formats:
        plot_regime_map(df.assign(agrees=df['agrees'].fillna(True).astype(bool)),
                        os.path.join(out_dir, 'regime_map.svg'))

    disagreements = df[df['validated'] & ~df['agrees'].fillna(True).astype(bool)]
    counts = df['regime'].value_counts().to_dict()
    print(f"regimes: {dict(sorted(counts.items()))}; validated {len(chosen)}, disagreements {len(disagreements)}")
    if not disagreements.empty:
        for row in disagreements.itertuples(index=False):
            logger.error(f"Disagreement at gamma={row.gamma:g}, rho={row.rho:g}: regime {row.regime}, "
                         f"weak {row.weak_status}, subopt {row.subopt_status}")
        return EXIT_VIOLATED
    return EXIT_OK


def _margins_match(expected, actual) -> bool:
    if expected is None or actual is None:
        return expected is None and actual is None
    scale = max(abs(expected), abs(actual), 1e-300)
    return abs(expected - actual) <= VERIFY_REL_TOL * scale or expected == actual


def run_verify(args) -> int:
    records = read_jsonl(args.verdicts)
    if not records:
        raise ConfigError(f"No verdict records in {args.verdicts}")
    groups: Dict[Tuple[str, Tuple[int, int]], List[Dict]] = {}
    for record in records:
        path = args.config or record.get('config')
        if not path:
            raise ConfigError("Verdict record names no config; pass --config")
        groups.setdefault((path, tuple(record.get('grid') or record['resolution'])), []).append(record)

    mismatches = 0
    for (path, shape), group in groups.items():
        config = load_config(path).with_overrides(grid=shape)
        if group[0].get('config_sha256') and group[0]['config_sha256'] != config.sha256:
            logger.warning(f"{path} changed since the verdicts were written")
        model = config.build_model()
        fresh = {v.condition: v for v in compute_verdicts(config, model, config.build_grid(model))}
        for record in group:
            current = fresh.get(record['condition'])
            if current is None:
                logger.error(f"{record['condition']}: not produced by {path}")
                mismatches += 1
            elif current.status.value != record['status'] or not _margins_match(record['min_margin'], current.min_margin):
                logger.error(f"{record['condition']}: recorded {record['status']} / {record['min_margin']}, "
                             f"recomputed {current.status.value} / {current.min_margin}")
                mismatches += 1
    print(f"verified {len(records)} records, {mismatches} mismatches")
    return EXIT_VIOLATED if mismatches else EXIT_OK


def cmd_check(args, env) -> int:
    config = _require_config(args)
    return run_check(config, _output_dir(args, config, env))


def cmd_oracle(args, env) -> int:
    config = _require_config(args)
    return run_oracle(config, _output_dir(args, config, env))


def cmd_regime_map(args, env) -> int:
    return run_regime_map(args, _output_dir(args, None, env), args.formats or ('csv', 'svg'))


def cmd_verify(args, env) -> int:
    return run_verify(args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_ERROR

    env = load_environment()
    configure_logging('DEBUG' if args.verbose else env['log_level'])
    suppress_numeric_warnings()
    if args.seed is not None:
        logger.info(f"Seed {args.seed}")

    command_map = {
        'check': cmd_check,
        'oracle': cmd_oracle,
        'regime-map': cmd_regime_map,
        'verify': cmd_verify,
    }
    try:
        return command_map[args.command](args, env)
    except Exception as e:
        logger.error(f"Command failed: {str(e)}")
        if args.verbose:
            logger.exception(e)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
