# main.py
import argparse
import json
import logging
import sys
import traceback

from config import B_CONST, TOL_FEAS, TOL_RANK, TOL_KKT, DEFAULT_SEED, PARALLEL_WORKERS
from errors import (
    AmbiguousSeed, BoundaryPoint, ConfigError, DimensionMismatch, EmptyClass,
    LayerBudgetExceeded, ParseError, UnexploredPoint
)
from logging_setup import setup_logging
from regpath.explorer import ExploreConfig, ORIGIN, run
from regpath.model_query import evaluate, predict
from reporting.svg_renderer import write_svg
from reporting.validation import validate
from storage.dataset_loader import load_dataset, parse_line
from storage.path_storage import export_alpha_traces, load_path, save_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_BUDGET = 3

INPUT_ERRORS = (ParseError, EmptyClass, ConfigError, DimensionMismatch, AmbiguousSeed,
                FileNotFoundError, UnexploredPoint, BoundaryPoint)


def parse_pair(text):
    """'a,b' -> (a, b)"""
    try:
        a, b = (float(v) for v in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def parse_init(text):
    if text == ORIGIN:
        return ORIGIN
    if text.startswith('point:'):
        return parse_pair(text[len('point:'):])
    raise argparse.ArgumentTypeError(f"--init must be 'origin' or 'point:CP,CM', got {text!r}")


def parse_samples(text):
    return [int(v) for v in text.split(',') if v.strip() != '']


def cmd_trace(args):
    data = load_dataset(args.dataset, args.b_const)
    config = ExploreConfig(
        init=args.init,
        tol_feas=args.tol_feas,
        tol_rank=args.tol_rank,
        tol_kkt=args.tol_kkt,
        max_layers=args.max_layers,
        parallel_facets=args.parallel > 1,
        workers=args.parallel,
        restart_on_halt=not args.no_restart,
        seed=args.seed,
        progress=not args.quiet,
    )
    graph = run(data, config)
    save_path(graph, args.out)
    if args.csv:
        save_path(graph, args.csv, 'csv')
    if args.svg:
        write_svg(graph, args.svg, args.window)
    if args.alpha_traces:
        export_alpha_traces(graph, data, args.alpha_traces)
    return EXIT_OK


def cmd_query(args):
    data = load_dataset(args.dataset, args.b_const)
    graph = load_path(args.path)
    model = evaluate(graph, data, args.at, accept_boundary=args.accept_boundary)
    output = {
        'c': list(model.c),
        'facet': model.facet_id,
        'alpha': [float(a) for a in model.alpha],
        'beta': [float(b) for b in model.beta],
    }
    if args.test:
        predictions = []
        with open(args.test, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip('\r\n')
                if line.strip() == '':
                    continue
                label, values = parse_line(line, line_number)
                raw = [values.get(k + 1, 0.0) for k in range(data.feature_dim_raw)]
                if values and max(values) > data.feature_dim_raw:
                    raise DimensionMismatch(f"line {line_number} has feature {max(values)} beyond {data.feature_dim_raw}")
                score, predicted = predict(model.beta, raw, data.B)
                predictions.append({'label': label, 'score': score, 'predicted': predicted})
        output['predictions'] = predictions
        accuracy = sum(p['label'] == p['predicted'] for p in predictions) / max(1, len(predictions))
        logger.info(f"Accuracy on {args.test}: {accuracy:.4f}")
    print(json.dumps(output, indent=1))
    return EXIT_OK


def cmd_validate(args):
    data = load_dataset(args.dataset, args.b_const)
    graph = load_path(args.path)
    report = validate(graph, data, args.samples, args.seed, args.window, progress=not args.quiet)
    print(json.dumps(report.as_dict(), indent=1))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_export(args):
    graph = load_path(args.path)
    save_path(graph, args.out, args.format, args.samples)
    return EXIT_OK


def cmd_render(args):
    graph = load_path(args.path)
    write_svg(graph, args.out, args.window, show_means=not args.no_means, event_samples=args.events or ())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description="Two-dimensional regularization path of the asymmetric-cost linear SVM")
    parser.add_argument('--b-const', type=float, default=B_CONST,
                        help=f'Bias augmentation constant B (default: {B_CONST})')
    parser.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')
    parser.add_argument('--log-level', default=None, help='Override LOG_LEVEL')
    parser.add_argument('--seed', type=int, default=DEFAULT_SEED, help='Random seed')
    commands = parser.add_subparsers(dest='command', required=True)

    trace = commands.add_parser('trace', help='Explore the path of a dataset')
    trace.add_argument('dataset', help='Sparse label index:value file')
    trace.add_argument('--out', default='path.json', help='JSON output (default: path.json)')
    trace.add_argument('--csv', help='Also write the per-sample event paths as CSV')
    trace.add_argument('--svg', help='Also render the tiling as SVG')
    trace.add_argument('--alpha-traces', help='Also write alpha at every facet vertex as CSV')
    trace.add_argument('--window', type=parse_pair, default=(1.0, 1.0), help='SVG window CP,CM')
    trace.add_argument('--init', type=parse_init, default=ORIGIN, help="'origin' or 'point:CP,CM'")
    trace.add_argument('--tol-feas', type=float, default=TOL_FEAS)
    trace.add_argument('--tol-rank', type=float, default=TOL_RANK)
    trace.add_argument('--tol-kkt', type=float, default=TOL_KKT)
    trace.add_argument('--max-layers', type=int, default=None, help='Layer budget (default: 50 x N)')
    trace.add_argument('--parallel', type=int, default=PARALLEL_WORKERS, help='Worker threads for facet closing')
    trace.add_argument('--no-restart', action='store_true', help='Stop at the first halt instead of reseeding beyond the explored area')
    trace.set_defaults(handler=cmd_trace)

    query = commands.add_parser('query', help='Evaluate the model at a cost pair')
    query.add_argument('path', help='JSON path from trace')
    query.add_argument('dataset', help='Training dataset of the path')
    query.add_argument('--at', type=parse_pair, required=True, help='CP,CM')
    query.add_argument('--test', help='Samples to predict, same sparse format')
    query.add_argument('--accept-boundary', action='store_true', help='Use an adjacent facet on boundaries')
    query.set_defaults(handler=cmd_query)

    check = commands.add_parser('validate', help='Run the invariant suites on a path')
    check.add_argument('path', help='JSON path from trace')
    check.add_argument('dataset', help='Training dataset of the path')
    check.add_argument('--samples', type=int, default=200, help='Random points per suite')
    check.add_argument('--window', type=parse_pair, default=None, help='Sampling window CP,CM')
    check.set_defaults(handler=cmd_validate)

    export = commands.add_parser('export', help='Re-export a path')
    export.add_argument('path', help='JSON path from trace')
    export.add_argument('--format', choices=['json', 'csv'], default='csv')
    export.add_argument('--samples', type=parse_samples, default=None, help='Samples for the CSV, e.g. 0,3,5')
    export.add_argument('--out', required=True)
    export.set_defaults(handler=cmd_export)

    render = commands.add_parser('render', help='Draw a path as SVG')
    render.add_argument('path', help='JSON path from trace')
    render.add_argument('--window', type=parse_pair, required=True, help='CP,CM')
    render.add_argument('--events', type=parse_samples, default=None, help='Samples whose event paths are drawn')
    render.add_argument('--no-means', action='store_true', help='Hide facet means')
    render.add_argument('--out', default='path.svg')
    render.set_defaults(handler=cmd_render)
    return parser


def main(argv=None):
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    setup_logging('WARNING' if args.quiet else args.log_level)
    try:
        logger.info(f"Running {args.command}")
        return args.handler(args)
    except LayerBudgetExceeded as e:
        logger.error(f"Layer budget exceeded: {str(e)}")
        if e.graph is not None and getattr(args, 'out', None):
            save_path(e.graph, args.out)
        return EXIT_BUDGET
    except INPUT_ERRORS as e:
        logger.error(f"Input error: {str(e)}")
        return EXIT_INPUT
    except Exception as e:
        logger.error(f"Unexpected error in main: {str(e)}")
        logger.error(traceback.format_exc())
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
