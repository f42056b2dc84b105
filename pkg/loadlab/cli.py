"""
Command-line interface: ``loadlab <subcommand> [options]``.
"""

import argparse
import logging
import sys

from pythonjsonlogger import jsonlogger

import loadlab
import loadlab.config as config_module
import loadlab.exceptions as exceptions
import loadlab.pipeline as pipeline
import loadlab.synth as synth

_log = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'
_handler = None


def configure_logging(level='INFO', fmt='text', stream=None):
    """Attach one handler to the ``loadlab`` logger."""
    global _handler
    logger = logging.getLogger('loadlab')
    if _handler is not None:
        logger.removeHandler(_handler)
    _handler = logging.StreamHandler(stream or sys.stderr)
    if fmt == 'json':
        _handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(_handler)
    logger.setLevel(level.upper())
    return _handler


def _common():
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group('global options')
    group.add_argument('--config', help='JSON config merged over defaults')
    group.add_argument('--threads', type=int,
                       help='worker threads (default: $LOADLAB_THREADS, '
                            'then the CPU count)')
    group.add_argument('--log-level', default='INFO',
                       choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    group.add_argument('--log-format', default='text',
                       choices=['text', 'json'])
    group.add_argument('--print-config', action='store_true',
                       help='print the effective config and exit')
    group.add_argument('--force', action='store_true',
                       help='rebuild stale intermediates')
    return parser


def _k_range(text):
    """Parse ``K_MIN:K_MAX`` into a tuple of ints."""
    try:
        k_min, k_max = (int(part) for part in text.split(':'))
    except ValueError:
        raise argparse.ArgumentTypeError(
            'expected K_MIN:K_MAX, got {!r}'.format(text))
    if k_min < 1 or k_max < k_min:
        raise argparse.ArgumentTypeError(
            'need 1 <= K_MIN <= K_MAX, got {!r}'.format(text))
    return k_min, k_max


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog='loadlab',
        description='Load profile clustering and longitudinal analytics '
                    'for solar home system telemetry.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + loadlab.__version__)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('synth', parents=[common],
                       help='generate a synthetic fleet')
    p.add_argument('--households', type=int, default=200)
    p.add_argument('--days', type=int, default=730)
    p.add_argument('--scenario', default='clean',
                   choices=sorted(synth.SCENARIOS))
    p.add_argument('--seed', type=int)
    p.add_argument('--out-dir', required=True)

    p = sub.add_parser('ingest', parents=[common],
                       help='raw CSVs to daily profiles')
    p.add_argument('--telemetry')
    p.add_argument('--credit')
    p.add_argument('--meta')
    p.add_argument('--out', required=True)
    p.add_argument('--lenient', action='store_true',
                   help='skip malformed rows instead of failing')
    p.add_argument('--max-hold-minutes', type=float)
    p.add_argument('--min-ownership-days', type=int)

    p = sub.add_parser('sample', parents=[common],
                       help='two-stage stratified sample')
    p.add_argument('--profiles', required=True)
    p.add_argument('--days-per-household', type=int)
    p.add_argument('--stage2-target', type=int)
    p.add_argument('--bins', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)

    p = sub.add_parser('distances', parents=[common],
                       help='DTW distance matrix of the sample')
    p.add_argument('--profiles', required=True)
    p.add_argument('--sample', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--export-csv', action='store_true')

    p = sub.add_parser('cluster', parents=[common],
                       help='k-medoids sweep over a distance matrix')
    p.add_argument('--distances', required=True)
    p.add_argument('--profiles', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--sweep-out')
    p.add_argument('--k-min', type=int)
    p.add_argument('--k-max', type=int)
    ks = p.add_mutually_exclusive_group()
    ks.add_argument('--k', type=int, help='solve this k only')
    ks.add_argument('--k-sweep', type=_k_range, metavar='K_MIN:K_MAX',
                    help='solve every k in the range and pick one by '
                         'silhouette')
    p.add_argument('--select-k', type=int,
                   help='use this k of the sweep instead of the silhouette '
                        'choice')
    p.add_argument('--solver', choices=['exact', 'pam'])
    p.add_argument('--time-limit', type=float)
    p.add_argument('--restarts', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--require-proof', action='store_true')
    p.add_argument('--plot', help='write the medoid figure here')

    p = sub.add_parser('assign', parents=[common],
                       help='label every profile with its nearest medoid')
    p.add_argument('--profiles', required=True)
    p.add_argument('--model', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--batch-size', type=int)

    p = sub.add_parser('analyze', parents=[common],
                       help='tables, trends and figures')
    p.add_argument('--labels', required=True)
    p.add_argument('--profiles', required=True)
    p.add_argument('--credit')
    p.add_argument('--meta')
    p.add_argument('--model')
    p.add_argument('--distances')
    p.add_argument('--out-dir', required=True)
    p.add_argument('--plots', action='store_true')

    sub.add_parser('run', parents=[common], help='run the whole pipeline')
    return parser


def _pick(value, default):
    return default if value is None else value


def _overrides(args):
    overrides = {}
    if args.threads is not None:
        overrides['threads'] = args.threads
    if getattr(args, 'seed', None) is not None:
        overrides['seed'] = args.seed
    return overrides


def _synth(args, config):
    fleet = synth.generate_fleet(args.households, args.days, config['seed'],
                                 args.scenario, args.out_dir,
                                 threads=config['threads'])
    _log.info('fleet written', extra=fleet.to_dict())


def _ingest(args, config):
    inputs = config['inputs']
    hold = _pick(args.max_hold_minutes,
                 config['ingest']['max_hold_minutes'])
    pipeline.run_ingest(
        _pick(args.telemetry, inputs['telemetry']),
        _pick(args.credit, inputs['credit']),
        _pick(args.meta, inputs['meta']), args.out,
        strict=not args.lenient and inputs['strict'],
        max_hold_s=hold * 60 if hold is not None else None,
        min_ownership_days=_pick(args.min_ownership_days,
                                 config['ingest']['min_ownership_days']),
        threads=config['threads'])


def _sample(args, config):
    s = config['sample']
    pipeline.run_sample(
        args.profiles, args.out,
        _pick(args.days_per_household, s['days_per_household']),
        _pick(args.stage2_target, s['target']), _pick(args.bins, s['bins']),
        config['seed'])


def _distances(args, config):
    pipeline.run_distances(args.profiles, args.sample, args.out,
                           config['threads'], args.export_csv)


def _cluster(args, config):
    s = config['cluster']
    k_min = _pick(args.k_min, s['k_min'])
    k_max = _pick(args.k_max, s['k_max'])
    select_k = _pick(args.select_k, s['select_k'])
    if args.k_sweep is not None:
        k_min, k_max = args.k_sweep
        select_k = args.select_k
    if args.k is not None:
        k_min = k_max = select_k = args.k
    pipeline.run_cluster(
        args.distances, args.profiles, args.out, args.sweep_out, k_min,
        k_max, select_k, _pick(args.solver, s['solver']),
        _pick(args.time_limit, s['time_limit_s']),
        _pick(args.restarts, s['restarts']), config['seed'],
        args.require_proof or s['require_proof'], args.plot)


def _assign(args, config):
    pipeline.run_assign(args.profiles, args.model, args.out,
                        _pick(args.batch_size, config['assign']['batch_size']),
                        config['threads'])


def _analyze(args, config):
    inputs = config['inputs']
    pipeline.run_analyze(
        args.labels, args.profiles, _pick(args.credit, inputs['credit']),
        _pick(args.meta, inputs['meta']), args.out_dir, config['analyze'],
        args.model, args.distances, args.plots, inputs['strict'])


def _run(args, config):
    pipeline.run_pipeline(config, force=args.force)


COMMANDS = {
    'synth': _synth,
    'ingest': _ingest,
    'sample': _sample,
    'distances': _distances,
    'cluster': _cluster,
    'assign': _assign,
    'analyze': _analyze,
    'run': _run,
}


def main(argv=None):
    """
    Entry point.

    :returns: process exit code: 0 ok, 2 config error, 3 data error,
              4 solver time limit without a required proof
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    try:
        config = config_module.load_config(args.config, _overrides(args))
        if args.print_config:
            sys.stdout.write(config_module.dumps(config) + '\n')
            return 0
        COMMANDS[args.command](args, config)
    except exceptions.LoadlabException as exc:
        _log.error('%s failed: %s', args.command, exc,
                   extra={'command': args.command,
                          'error': type(exc).__name__})
        return exc.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
