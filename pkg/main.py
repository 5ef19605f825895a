#!/usr/bin/env python3
"""
FactorLab - Command Line Interface
"""

import argparse
import logging
import sys
from dataclasses import asdict

import numpy as np
import pandas as pd

from factorlab.anova import run_anova
from factorlab.config import (DEFAULT_ALPHA, DEFAULT_CI_LEVEL, DEFAULT_EPSILON, DEFAULT_MAX_ORDER,
                              DEFAULT_RUNS, DEFAULT_TOP_K)
from factorlab.correlate import correlogram_by_dataset, correlogram_by_metric
from factorlab.ensemble import (BestFirst, CandidateFilter, Pooling, RandomOrder, order_candidates,
                                prefix_curve, random_ensemble_curves)
from factorlab.errors import FactorLabError, InputFormatError
from factorlab.files import (load_manifest, load_outcomes, load_predictions, outcomes_frame,
                             predictions_frame, skeleton_frame)
from factorlab.metrics import ResponseSpec
from factorlab.protocol import blind_protocol, privileged_protocol
from factorlab.report_writer import ReportWriter
from factorlab.sequential import SequentialOptimizer, SeqSimConfig
from factorlab.synth import PlantedEffects, SkillModel, gen_outcomes, gen_predictions

logger = logging.getLogger('factorlab')


def split_list(text):
    """Split a comma-separated flag value, dropping blanks."""
    return [part.strip() for part in (text or '').split(',') if part.strip()]


def parse_order(token):
    """Parse --order: best:<dataset> or random:<seed>."""
    kind, sep, value = (token or '').partition(':')
    if sep and kind == 'best' and value:
        return BestFirst(value)
    if sep and kind == 'random':
        try:
            return RandomOrder(int(value))
        except ValueError:
            pass
    raise InputFormatError(f"Bad --order {token!r}; expected best:<dataset> or random:<seed>")


def response_spec(args, available, default=None):
    """Resolve the response from flags, then the manifest, then every metric.

    Args:
        args: Parsed arguments with response/logit/epsilon
        available: Metric (or class) names the input provides
        default: ResponseSpec from a manifest, if any
    """
    names = split_list(args.response)
    if names:
        unknown = [name for name in names if name not in available]
        if unknown:
            raise InputFormatError(f"Unknown metric(s) in --response: {', '.join(unknown)}")
    elif default is not None:
        names = list(default.metric_names)
    else:
        names = list(available)
    transform = 'logit' if args.logit else (default.transform if default is not None else 'identity')
    epsilon = args.epsilon if args.epsilon is not None else (
        default.epsilon if default is not None else DEFAULT_EPSILON)
    return ResponseSpec(tuple(names), transform, epsilon)


def _load_table(args):
    manifest = load_manifest(args.manifest) if args.manifest else None
    table = load_outcomes(args.outcomes, manifest)
    inputs = [args.outcomes] + ([args.manifest] if args.manifest else [])
    return table, manifest, inputs


def _candidates(matrix, expression):
    if not expression:
        return None
    kept = CandidateFilter.parse(expression).apply(matrix)
    if not kept:
        raise InputFormatError(f"--filter {expression!r} excludes every model")
    return kept


def cmd_design(args):
    """Emit the outcomes-file skeleton of a manifest."""
    manifest = load_manifest(args.manifest)
    frame = skeleton_frame(manifest, split_list(args.metrics))
    ReportWriter('design', [args.manifest]).write_csv(frame, args.out)
    return 0


def cmd_anova(args):
    """Emit the ANOVA table of an outcomes file."""
    table, manifest, inputs = _load_table(args)
    spec = response_spec(args, table.metric_names, manifest.response if manifest else None)
    result = run_anova(table, spec, args.max_order)
    rows = result.summary(args.alpha) if args.summary else None
    records = result.to_records(args.alpha, rows)
    writer = ReportWriter('anova', inputs)
    if args.format == 'json':
        writer.write_json({
            'response': {'metrics': list(spec.metric_names), 'transform': spec.transform, 'epsilon': spec.epsilon},
            'max_order': result.max_order,
            'dataset_factor': result.dataset_factor,
            'ss_total': result.ss_total,
            'rows': records,
        }, args.out)
    else:
        frame = pd.DataFrame(records).drop(columns=['significant'])
        writer.write_csv(frame, args.out)
    return 0


def cmd_correlate(args):
    """Emit a correlogram over datasets or metrics."""
    table, manifest, inputs = _load_table(args)
    if args.axis == 'dataset':
        spec = response_spec(args, table.metric_names, manifest.response if manifest else None)
        correlogram = correlogram_by_dataset(table, spec, args.level)
        document = {'axis_kind': 'dataset', 'metrics': list(spec.metric_names)}
    else:
        if not args.dataset:
            raise InputFormatError("--axis metric needs --dataset")
        metrics = split_list(args.metrics) or list(table.metric_names)
        correlogram = correlogram_by_metric(table, args.dataset, metrics, args.level)
        document = {'axis_kind': 'metric', 'dataset': args.dataset}
    document['level'] = args.level
    document.update(correlogram.to_dict())
    ReportWriter('correlate', inputs).write_json(document, args.out)
    return 0


def _treatment_label(optimizer, indices):
    design = optimizer.table.design
    return ';'.join(f"{s}={design.factor(s).levels[i]}" for s, i in zip(optimizer.symbols, indices))


def cmd_simulate_seq(args):
    """Simulate sequential single-factor optimization; emit runs and summaries."""
    table, manifest, inputs = _load_table(args)
    spec = response_spec(args, table.metric_names, manifest.response if manifest else None)
    hyperopt = split_list(args.hyperopt)
    if not hyperopt:
        raise InputFormatError("--hyperopt needs at least one dataset")
    choices = [s for s in table.design.symbols if s != table.dataset_factor]
    optimizer = SequentialOptimizer(table, split_list(args.factors) or choices, spec)
    for dataset in hyperopt + [args.measure]:
        if dataset not in table.dataset_levels:
            raise InputFormatError(f"Unknown dataset level {dataset!r}")

    records = []
    summaries = {}
    for dataset in hyperopt:
        if args.exhaustive:
            report = optimizer.exhaustive(dataset, args.measure)
        else:
            report = optimizer.simulate(SeqSimConfig(dataset, args.measure, args.runs, args.seed))
        summaries[dataset] = asdict(report.summary)
        for index, run in enumerate(report.runs):
            records.append({
                'hyperopt': dataset,
                'measure': args.measure,
                'run': index,
                'start': _treatment_label(optimizer, run.start),
                'order': '>'.join(run.order),
                'final': _treatment_label(optimizer, run.final),
                'start_response': run.start_response,
                'hyperopt_response': run.hyperopt_response,
                'measured_response': run.measured_response,
                'experiments': run.experiments,
            })
    seed = None if args.exhaustive else args.seed
    writer = ReportWriter('simulate-seq', inputs, seed)
    writer.write_csv(pd.DataFrame(records), args.out)
    if args.summary_out:
        writer.write_json({'measure': args.measure, 'exhaustive': args.exhaustive,
                           'summaries': summaries}, args.summary_out)
    return 0


def _curve_records(curve, classes, sample=None):
    records = []
    for point in curve:
        record = {} if sample is None else {'sample': sample}
        record.update(size=point.size, added=point.added, response=point.response)
        record.update({f"auc_{name}": value for name, value in zip(classes, point.class_aucs)})
        records.append(record)
    return records


def cmd_ensemble(args):
    """Emit incremental-ensemble curves."""
    pooling = Pooling.parse(args.pooling)
    ordering = parse_order(args.order)
    matrix = load_predictions(args.predictions)
    spec = response_spec(args, matrix.classes)
    candidates = _candidates(matrix, args.filter)
    seed = None
    if isinstance(ordering, RandomOrder):
        seed = ordering.seed
        results = random_ensemble_curves(matrix, pooling, args.measure, spec, ordering.seed,
                                         args.samples, candidates)
        records = [r for sample, (_, curve) in enumerate(results)
                   for r in _curve_records(curve, spec.metric_names, sample)]
    else:
        matrix.dataset(args.measure)
        ordered = order_candidates(matrix, ordering, spec, candidates)
        records = _curve_records(prefix_curve(matrix, ordered, pooling, args.measure, spec), spec.metric_names)
    ReportWriter('ensemble', [args.predictions], seed).write_csv(pd.DataFrame(records), args.out)
    return 0


def cmd_protocol(args):
    """Simulate the blind or the privileged selection protocol."""
    pooling = Pooling.parse(args.pooling)
    matrix = load_predictions(args.predictions)
    spec = response_spec(args, matrix.classes)
    candidates = _candidates(matrix, args.filter)
    inputs = [args.predictions]
    if args.mode == 'blind':
        missing = [flag for flag in ('internal', 'validation', 'test') if not getattr(args, flag)]
        if missing:
            raise InputFormatError(f"Blind mode needs {', '.join('--' + f for f in missing)}")
        table, table_spec = None, None
        if args.outcomes:
            table, manifest, table_inputs = _load_table(args)
            inputs += table_inputs
            table_spec = manifest.response if manifest and manifest.response else ResponseSpec(table.metric_names)
        report = blind_protocol(matrix, args.internal, args.validation, args.test, spec,
                                args.topk, pooling, candidates, table, table_spec)
    else:
        if not args.test:
            raise InputFormatError("Privileged mode needs --test")
        report = privileged_protocol(matrix, args.test, spec, args.topk, pooling, candidates)
    document = report.to_dict()
    document['response'] = {'metrics': list(spec.metric_names), 'transform': spec.transform}
    ReportWriter('protocol', inputs).write_json(document, args.out)
    return 0


def _synth_outcomes(args):
    manifest = load_manifest(args.manifest)
    terms = []
    scales = []
    for entry in args.term or ():
        symbols, sep, scale = entry.partition('=')
        try:
            scales.append(float(scale))
        except ValueError:
            raise InputFormatError(f"Bad --term {entry!r}; expected symbols=scale, e.g. b=1.5 or a:b=0.5")
        if not sep:
            raise InputFormatError(f"Bad --term {entry!r}; expected symbols=scale")
        terms.append(tuple(symbols.split(':')))
    effects = PlantedEffects.random(manifest.design, terms, scales, args.intercept, args.sigma, args.seed)
    metrics = split_list(args.metrics) or list(manifest.metrics) or ['auc']
    table = gen_outcomes(manifest.design, effects, manifest.dataset_factor, metrics)
    ReportWriter('synth outcomes', [args.manifest], args.seed).write_csv(outcomes_frame(table), args.out)
    return 0


def _synth_predictions(args):
    if args.models < 1:
        raise InputFormatError("--models must be positive")
    separations = np.linspace(args.min_separation, args.max_separation, args.models)
    per_model = {f"m{i:03d}": float(s) for i, s in enumerate(separations)}
    sizes = {}
    for entry in split_list(args.datasets):
        name, sep, count = entry.partition('=')
        try:
            sizes[name] = int(count)
        except ValueError:
            raise InputFormatError(f"Bad --datasets entry {entry!r}; expected name=count")
        if not sep or sizes[name] < 1:
            raise InputFormatError(f"Bad --datasets entry {entry!r}; expected name=count")
    skill = SkillModel(per_model, sizes, tuple(split_list(args.classes)), None, args.jitter, args.seed)
    matrix = gen_predictions(skill)
    ReportWriter('synth predictions', seed=args.seed).write_csv(predictions_frame(matrix), args.out)
    return 0


def cmd_synth(args):
    """Emit synthetic outcomes or predictions files."""
    if args.kind == 'outcomes':
        return _synth_outcomes(args)
    return _synth_predictions(args)


def _add_response_flags(parser):
    parser.add_argument('--response',
                        help='Comma-separated metric (or class) names averaged into the response '
                             '(default: the manifest response, else every metric or class column)')
    parser.add_argument('--logit', action='store_true', help='Analyse the logit of the mean')
    parser.add_argument('--epsilon', type=float, default=None, help='Logit clamp (default 1e-6)')


def _add_outcomes_flags(parser):
    parser.add_argument('outcomes', help='Outcomes CSV file')
    parser.add_argument('--manifest', help='Design manifest JSON (inferred from the file when omitted)')
    _add_response_flags(parser)


def build_parser():
    parser = argparse.ArgumentParser(prog='factorlab', description='Factorial experiment analysis toolkit')
    parser.add_argument('-v', '--verbose', action='store_true', help='Log debug detail')
    parser.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    design = commands.add_parser('design', help='Emit the outcomes-file skeleton of a manifest')
    design.add_argument('manifest')
    design.add_argument('--metrics', help='Metric columns (default: the manifest metrics)')
    design.add_argument('--out')
    design.set_defaults(handler=cmd_design)

    anova = commands.add_parser('anova', help='Multi-way ANOVA of an outcomes file')
    _add_outcomes_flags(anova)
    anova.add_argument('--max-order', type=int, default=DEFAULT_MAX_ORDER)
    anova.add_argument('--alpha', type=float, default=DEFAULT_ALPHA)
    anova.add_argument('--summary', action='store_true', help='Emit only the reported lines')
    anova.add_argument('--format', choices=('csv', 'json'), default='csv')
    anova.add_argument('--out')
    anova.set_defaults(handler=cmd_anova)

    correlate = commands.add_parser('correlate', help='Spearman correlogram over datasets or metrics')
    _add_outcomes_flags(correlate)
    correlate.add_argument('--axis', choices=('dataset', 'metric'), default='dataset')
    correlate.add_argument('--dataset', help='Dataset level (metric axis)')
    correlate.add_argument('--metrics', help='Metrics to correlate (metric axis; default all)')
    correlate.add_argument('--level', type=float, default=DEFAULT_CI_LEVEL)
    correlate.add_argument('--out')
    correlate.set_defaults(handler=cmd_correlate)

    seq = commands.add_parser('simulate-seq', help='Simulate sequential hyperparameter optimization')
    _add_outcomes_flags(seq)
    seq.add_argument('--hyperopt', required=True, help='Comma-separated hyperopt dataset(s)')
    seq.add_argument('--measure', required=True)
    seq.add_argument('--factors', help='Factors to optimize (default: every design choice)')
    seq.add_argument('--runs', type=int, default=DEFAULT_RUNS)
    seq.add_argument('--seed', type=int, default=0)
    seq.add_argument('--exhaustive', action='store_true', help='Every start with every factor order')
    seq.add_argument('--out')
    seq.add_argument('--summary-out', help='Summary JSON path')
    seq.set_defaults(handler=cmd_simulate_seq)

    ensemble = commands.add_parser('ensemble', help='Incremental ensemble curve')
    ensemble.add_argument('predictions')
    ensemble.add_argument('--pooling', default='average')
    ensemble.add_argument('--order', required=True, help='best:<dataset> or random:<seed>')
    ensemble.add_argument('--measure', required=True)
    ensemble.add_argument('--filter', help='Exclusions such as h=svm;f=yes')
    ensemble.add_argument('--samples', type=int, default=1, help='Shuffled orderings (random order only)')
    _add_response_flags(ensemble)
    ensemble.add_argument('--out')
    ensemble.set_defaults(handler=cmd_ensemble)

    protocol = commands.add_parser('protocol', help='Blind or privileged model-selection protocol')
    protocol.add_argument('predictions')
    protocol.add_argument('--mode', choices=('blind', 'privileged'), default='blind')
    protocol.add_argument('--internal')
    protocol.add_argument('--validation')
    protocol.add_argument('--test')
    protocol.add_argument('--topk', type=int, default=DEFAULT_TOP_K)
    protocol.add_argument('--pooling', default='average')
    protocol.add_argument('--filter')
    protocol.add_argument('--outcomes', help='Outcomes CSV to take the blind ranking from')
    protocol.add_argument('--manifest')
    _add_response_flags(protocol)
    protocol.add_argument('--out')
    protocol.set_defaults(handler=cmd_protocol)

    synth = commands.add_parser('synth', help='Synthetic outcomes or predictions')
    synth.add_argument('kind', choices=('outcomes', 'predictions'))
    synth.add_argument('--manifest', help='Design manifest (outcomes)')
    synth.add_argument('--term', action='append', help='Planted term, e.g. b=1.5 or a:b=0.5 (repeatable)')
    synth.add_argument('--intercept', type=float, default=0.0)
    synth.add_argument('--sigma', type=float, default=0.0)
    synth.add_argument('--metrics')
    synth.add_argument('--models', type=int, default=8)
    synth.add_argument('--min-separation', type=float, default=0.0)
    synth.add_argument('--max-separation', type=float, default=2.0)
    synth.add_argument('--datasets', default='internal=300,validation=300,test=600')
    synth.add_argument('--classes', default='melanoma,keratosis,nevus')
    synth.add_argument('--jitter', type=float, default=0.0)
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--out')
    synth.set_defaults(handler=cmd_synth)
    return parser


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format='%(levelname)s %(name)s: %(message)s')


def main(argv=None):
    """Run one sub-command.

    Returns:
        int: 0 on success, else the failing error's exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return stop.code
    configure_logging(args.verbose, args.quiet)
    if args.command == 'synth' and args.kind == 'outcomes' and not args.manifest:
        logger.error("synth outcomes needs --manifest")
        return InputFormatError.exit_code
    try:
        return args.handler(args)
    except FactorLabError as error:
        logger.error("%s", error)
        return error.exit_code
    except ValueError as error:
        # Out-of-range flag values such as --max-order or --level
        logger.error("%s", error)
        return InputFormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
