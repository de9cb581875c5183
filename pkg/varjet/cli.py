# Copyright (c) 2020, NVIDIA CORPORATION. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Command-line surface of varjet.

Every command writes one JSON report per line to stdout and logs to stderr.
The exit status is 0 when every check passes, 1 when a check fails and 2 on
usage or model format errors.
"""
import logging
import os
import sys
from argparse import ArgumentParser, ArgumentTypeError, Namespace
from time import perf_counter
from typing import Dict, List, NoReturn, Optional, Sequence, TextIO, Tuple

import numpy
from numpy.polynomial import Polynomial
from numpy.random import SeedSequence, default_rng

from varjet.acceptance import Battery, relative_difference, run_acceptance
from varjet.errors import (BindingError, ChartError, ExpressionSyntaxError,
                           ModelFormatError, NormalFormError, VarjetError)
from varjet.expr import Evaluator, literal
from varjet.homogeneous import (lift_equation, lift_lagrangian,
                                project_jet)
from varjet.jet_core import (DEFAULT_SEED, DEFAULT_TOLERANCE, HOMOGENEOUS,
                             PARAMETRIC, JetChart, JetPoint, Metric,
                             coordinate_name, prolong_curve, sample_points)
from varjet.normal_forms import (SHAPE3_CONDITIONS, SHAPE4_CONDITIONS, Shape3,
                                 extract_shape3, extract_shape4,
                                 shape3_condition_residuals,
                                 shape4_condition_residuals)
from varjet.parser_io import Model, load_model, render_expression
from varjet.reports import Report, Stopwatch
from varjet.symmetry import (NOGO_FLOOR, nogo_certificate, sample_generator,
                             symmetry_sweep)
from varjet.top_model import (TopConfig, family_ranges, integrate_batch,
                              write_trajectory_csv)
from varjet.variational import (euler_poisson, helmholtz_residuals,
                                helmholtz_residuals_split, zermelo_residuals)


logger = logging.getLogger(__name__)

CHECK_MODEL = 'check-model'
EL = 'el'
HELMHOLTZ = 'helmholtz'
ZERMELO = 'zermelo'
LIFT = 'lift'
PROJECT = 'project'
SHAPE = 'shape'
SYMMETRY = 'symmetry'
NOGO = 'nogo'
TOP_SIMULATE = 'top-simulate'
TOP_VERIFY = 'top-verify'

SEED_VARIABLE = 'VARJET_SEED'
BUNDLED_MODEL = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                             'data', 'top2d.model')
DEFAULT_SAMPLES = 50
DRIFT_TOLERANCE = 1e-6
NOGO_TRIALS = 1000

# Failures of the input rather than of a check.
USAGE_ERRORS = (ModelFormatError, ExpressionSyntaxError, ChartError,
                BindingError)

_handler: Optional[logging.Handler] = None


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise ArgumentTypeError('invalid seed {!r}'.format(text))
    if value < 0:
        raise ArgumentTypeError('seeds must not be negative')
    return value


def _binding(text: str) -> Tuple[str, float]:
    name, separator, value = text.partition('=')
    if not separator or not name.strip():
        raise ArgumentTypeError('expected NAME=VALUE, got {!r}'.format(text))
    try:
        return name.strip(), float(value)
    except ValueError:
        raise ArgumentTypeError('invalid value in {!r}'.format(text))


def _curve(text: str) -> Tuple[int, List[float]]:
    name, separator, values = text.partition('=')
    name = name.strip()
    if not separator or not name.startswith('X') or not name[1:].isdigit():
        raise ArgumentTypeError('expected Xk=c0,c1,..., got {!r}'
                                .format(text))
    try:
        coefficients = [float(item) for item in values.split(',')]
    except ValueError:
        raise ArgumentTypeError('invalid coefficients in {!r}'.format(text))
    return int(name[1:]), coefficients


def _parse_args(argv: Optional[Sequence[str]] = None) -> Namespace:
    """
    Parse arguments passed to the application.

    A parent parser carries the options shared by every command and a second
    one the options of commands that read a model.

    Returns
    -------
    Namespace
        Returns a ``Namespace`` of all of the arguments that were parsed.
    """
    message = """
    Check whether differential equations on jet spaces are variational and
    verify the planar relativistic top.
    """
    parser = ArgumentParser(prog='varjet', description=message)
    commands = parser.add_subparsers(dest='command', metavar='command')
    common = ArgumentParser(add_help=False)
    common.add_argument('--seed', type=_seed,
                        default=os.environ.get(SEED_VARIABLE,
                                               str(DEFAULT_SEED)),
                        help='Seed for every random draw; defaults to the '
                        '{} environment variable or {:#x}'
                        .format(SEED_VARIABLE, DEFAULT_SEED))
    common.add_argument('--samples', type=int, default=None,
                        help='The number of sampled points or cases')
    common.add_argument('--tol', type=float, default=None,
                        help='Override the tolerance of the checks')
    common.add_argument('--no-timing', dest='timing', action='store_false',
                        help='Report every timing as 0')
    common.add_argument('--processes', type=int, default=1,
                        help='Worker processes for trajectory integration')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true',
                           help='Log debugging information')
    verbosity.add_argument('--quiet', action='store_true',
                           help='Only log errors')

    modeled = ArgumentParser(add_help=False)
    modeled.add_argument('--model', default=BUNDLED_MODEL,
                         help='Path to a model file; defaults to the bundled '
                         'top model')
    modeled.add_argument('--const', type=_binding, action='append',
                         default=[], metavar='NAME=VALUE',
                         help='Set or override a constant of the model')

    commands.add_parser(CHECK_MODEL, help='Load and validate a model',
                        parents=[common, modeled])

    el = commands.add_parser(EL, help='Euler-Poisson form of a Lagrangian',
                             parents=[common, modeled])
    el.add_argument('--name', required=True, help='The Lagrangian')
    el.add_argument('--against', help='A form to compare the result with')

    helmholtz = commands.add_parser(HELMHOLTZ, help='Check a form for '
                                    'variationality', parents=[common,
                                                               modeled])
    helmholtz.add_argument('--name', required=True, help='The form')
    helmholtz.add_argument('--split', action='store_true',
                           help='Report the antisymmetric block and the '
                           'higher blocks separately')

    zermelo = commands.add_parser(ZERMELO, help='Check a homogeneous '
                                  'Lagrangian for parameter invariance',
                                  parents=[common, modeled])
    zermelo.add_argument('--name', required=True, help='The Lagrangian')

    lift = commands.add_parser(LIFT, help='Lift a parametric Lagrangian or '
                               'form to the homogeneous chart',
                               parents=[common, modeled])
    lift.add_argument('--name', required=True,
                      help='A parametric Lagrangian or form')
    lift.add_argument('--against', help='A homogeneous counterpart')

    project = commands.add_parser(PROJECT, help='Project the jet of a '
                                  'polynomial curve', parents=[common])
    project.add_argument('--curve', type=_curve, action='append',
                         required=True, metavar='Xk=c0,c1,...',
                         help='Ascending coefficients of one coordinate')
    project.add_argument('--at', type=float, required=True,
                         help='The curve parameter of the jet')
    project.add_argument('--order', type=int, default=3, choices=(1, 2, 3),
                         help='The order of the projected jet')

    shape = commands.add_parser(SHAPE, help='Extract a variational normal '
                                'form and check its conditions',
                                parents=[common, modeled])
    shape.add_argument('--name', required=True, help='The form')
    shape.add_argument('--order', type=int, default=3, choices=(3, 4),
                       help='The order of the normal form')

    symmetry = commands.add_parser(SYMMETRY, help='Check invariance of a '
                                   'third-order form under Lorentz '
                                   'generators', parents=[common, modeled])
    symmetry.add_argument('--name', required=True, help='The form')
    symmetry.add_argument('--perturb', type=float, default=0.0,
                          help='Add a constant to every entry of c')

    nogo = commands.add_parser(NOGO, help='Search no-go certificates',
                               parents=[common])
    nogo.add_argument('--trials', type=int, default=NOGO_TRIALS,
                      help='Directions tried per vector')
    nogo.add_argument('--signature', default='---',
                      help='Signature of the three-dimensional block')

    simulate = commands.add_parser(TOP_SIMULATE, help='Integrate a top '
                                   'trajectory', parents=[common])
    simulate.add_argument('--mu', type=float, default=1.0)
    simulate.add_argument('--h', type=float, default=1e-3,
                          help='The step size')
    simulate.add_argument('--steps', type=int, default=10000)
    simulate.add_argument('--signature', default='+--')
    simulate.add_argument('--x0', type=float, nargs=2, default=(0.0, 0.0))
    simulate.add_argument('--v0', type=float, nargs=2, default=(0.1, 0.0))
    simulate.add_argument('--vp0', type=float, nargs=2, default=(0.0, 0.2))
    simulate.add_argument('--homogeneous', action='store_true',
                          help='Integrate in the homogeneous chart')
    simulate.add_argument('--u0', type=float, nargs=3, default=None)
    simulate.add_argument('--ud0', type=float, nargs=3, default=None)
    simulate.add_argument('--out', help='Path of the CSV to write')

    commands.add_parser(TOP_VERIFY, help='Run the acceptance battery of the '
                        'top', parents=[common, modeled])
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error('a command is required')
    if args.samples is not None and args.samples < 1:
        parser.error('--samples must be positive')
    return args


def _configure_logging(args: Namespace) -> None:
    global _handler
    root = logging.getLogger('varjet')
    if _handler is not None:
        root.removeHandler(_handler)
    _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(logging.Formatter(
        '%(levelname)s %(name)s: %(message)s'))
    root.addHandler(_handler)
    if args.verbose:
        root.setLevel(logging.DEBUG)
    elif args.quiet:
        root.setLevel(logging.ERROR)
    else:
        root.setLevel(logging.WARNING)


def _load(args: Namespace) -> Tuple[Model, Dict[str, float]]:
    model = load_model(args.model)
    return model, model.constant_values(dict(args.const))


def _tolerance(args: Namespace, default: float = DEFAULT_TOLERANCE) -> float:
    return default if args.tol is None else args.tol


def _samples(args: Namespace, default: int = DEFAULT_SAMPLES) -> int:
    return default if args.samples is None else args.samples


def _points(chart: JetChart, args: Namespace,
            count: Optional[int] = None) -> List[JetPoint]:
    return sample_points(chart, family_ranges(chart), args.seed,
                         _samples(args) if count is None else count)


def _report(args: Namespace, check: str, count: int, residual: float,
            tolerance: float, watch: Stopwatch,
            detail: Optional[dict] = None) -> Report:
    return Report(check, args.seed, count, residual, tolerance,
                  watch.elapsed(), detail or {})


def check_model(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    detail = {
        'chart': model.chart.kind,
        'n': model.chart.n,
        'order': model.chart.order,
        'signature': str(model.metric),
        'constants': values,
        'lagrangians': sorted(model.lagrangians),
        'forms': sorted(model.forms),
        'covectors': sorted(model.covectors),
    }
    return [_report(args, 'model-load', 0, 0.0, _tolerance(args, 0.0), watch,
                    detail)]


def euler_poisson_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    lagrangian = model.lagrangian(args.name)
    form = euler_poisson(lagrangian)
    if args.against is None:
        detail = {'order': form.order,
                  'components': [render_expression(c)
                                 for c in form.components]}
        return [_report(args, 'euler-poisson', 0, 0.0, _tolerance(args),
                        watch, detail)]
    target = model.form(args.against)
    if target.chart.kind != form.chart.kind or target.chart.n != form.chart.n:
        raise ChartError('{} lives on a {} chart with n = {} but {} on a {} '
                         'chart with n = {}'.format(
                             args.name, form.chart.kind, form.chart.n,
                             args.against, target.chart.kind,
                             target.chart.n))
    chart = JetChart(form.chart.kind, form.chart.n,
                     max(form.order, target.order))
    points = _points(chart, args)
    worst = max(relative_difference(form.evaluate(p, values),
                                    target.evaluate(p, values))
                for p in points)
    return [_report(args, 'euler-poisson', len(points), worst,
                    _tolerance(args), watch, {'against': args.against})]


def helmholtz_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    form = model.form(args.name)
    chart = form.chart.with_order(2 * form.order)
    points = _points(chart, args)
    tolerance = _tolerance(args)
    if not args.split:
        worst = max(helmholtz_residuals(form, p, values).max_relative()
                    for p in points)
        return [_report(args, 'helmholtz', len(points), worst, tolerance,
                        watch, {'name': args.name})]
    halves = [helmholtz_residuals_split(form, p, values) for p in points]
    return [_report(args, 'helmholtz-' + label, len(points),
                    max(pair[position].max_relative() for pair in halves),
                    tolerance, watch, {'name': args.name})
            for position, label in enumerate(('antisymmetric', 'blocks'))]


def zermelo_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    lagrangian = model.lagrangian(args.name)
    points = _points(lagrangian.chart.with_order(2), args)
    worst = max(abs(z) for p in points
                for z in zermelo_residuals(lagrangian, p, values))
    return [_report(args, 'zermelo', len(points), worst, _tolerance(args),
                    watch, {'name': args.name})]


def lift_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    tolerance = _tolerance(args)
    if args.name in model.lagrangians:
        lifted = lift_lagrangian(model.lagrangian(args.name))
        points = _points(lifted.chart.with_order(2), args)
        reports = [_report(args, 'lift-zermelo', len(points), max(
            abs(z) for p in points
            for z in zermelo_residuals(lifted, p, values)), tolerance, watch,
            {'lifted': render_expression(lifted.expr)})]
        if args.against is not None:
            target = model.lagrangian(args.against)
            worst = 0.0
            for point in points:
                evaluator = Evaluator(point, values)
                worst = max(worst, relative_difference(
                    evaluator(lifted.expr), evaluator(target.expr)))
            reports.append(_report(args, 'lift-agreement', len(points),
                                   worst, tolerance, watch,
                                   {'against': args.against}))
        return reports
    form = model.form(args.name)
    chart = JetChart(HOMOGENEOUS, form.chart.n, max(form.order, 1))
    target = model.form(args.against) if args.against is not None else None
    if target is not None:
        chart = chart.with_order(max(chart.order, target.order))
    points = _points(chart, args)
    lifted = [lift_equation(form, p, values) for p in points]
    contraction = max(abs(float(numpy.dot(p.vector(0), e)))
                      for p, e in zip(points, lifted))
    reports = [_report(args, 'lift-contraction', len(points), contraction,
                       _tolerance(args, 1e-12), watch, {'name': args.name})]
    if target is not None:
        worst = max(relative_difference(e, target.evaluate(p, values))
                    for p, e in zip(points, lifted))
        reports.append(_report(args, 'lift-agreement', len(points), worst,
                               tolerance, watch, {'against': args.against}))
    return reports


def _reparametrized(coefficients: Dict[int, List[float]], at: float,
                    rng) -> Dict[int, numpy.ndarray]:
    """Compose each coordinate with ``zeta = at + a1 s + a2 s^2 + a3 s^3``."""
    slope = rng.uniform(0.5, 2.0)
    curvature = rng.uniform(-0.5, 0.5, 2)
    change = Polynomial([at, slope, curvature[0], curvature[1]])
    return {index: Polynomial(c)(change).coef
            for index, c in coefficients.items()}


def project_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    coefficients = dict(args.curve)
    if len(coefficients) != len(args.curve):
        raise ChartError('Each coordinate may be given once')
    point = prolong_curve(coefficients, args.at, args.order, HOMOGENEOUS)
    projected = project_jet(point, args.order)
    reference = projected.as_array()[1:]
    count = _samples(args)
    rng = default_rng(args.seed)
    worst = 0.0
    for _ in range(count):
        changed = prolong_curve(_reparametrized(coefficients, args.at, rng),
                                0.0, args.order, HOMOGENEOUS)
        other = project_jet(changed, args.order).as_array()[1:]
        worst = max(worst, relative_difference(other, reference))
    detail = {'t': projected.t_value}
    detail.update({coordinate_name(coord): value
                   for coord, value in projected.values.items()})
    return [_report(args, 'project-invariance', count, worst,
                    _tolerance(args), watch, detail)]


def shape_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    form = model.form(args.name)
    tolerance = _tolerance(args)
    count = _samples(args)
    try:
        if args.order == 3:
            shape = extract_shape3(form, values, seed=args.seed)
        else:
            shape = extract_shape4(form, values, seed=args.seed)
    except NormalFormError as error:
        logger.warning(str(error))
        return [_report(args, 'shape{}-extraction'.format(args.order), 0,
                        float('inf'), tolerance, watch,
                        {'error': str(error)})]
    if args.order == 3:
        names, evaluate = SHAPE3_CONDITIONS, shape3_condition_residuals
    else:
        names, evaluate = SHAPE4_CONDITIONS, shape4_condition_residuals
    points = _points(JetChart(PARAMETRIC, form.chart.n, 2), args, count)
    worst = dict.fromkeys(names, 0.0)
    for point in points:
        for name, residuals in evaluate(shape, point, values).items():
            worst[name] = max(worst[name], residuals.max_relative())
    return [_report(args, 'shape{}-{}'.format(args.order, name), count,
                    worst[name], tolerance, watch, {'name': args.name})
            for name in names]


def symmetry_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    model, values = _load(args)
    shape = extract_shape3(model.form(args.name), values, seed=args.seed)
    if args.perturb:
        shape = Shape3(shape.A, shape.B,
                       [c + literal(args.perturb) for c in shape.c])
    count = _samples(args)
    points = _points(JetChart(PARAMETRIC, shape.n, 2), args, count)
    generators = [sample_generator(model.metric, child)
                  for child in SeedSequence(args.seed).spawn(count)]
    tolerance = _tolerance(args)
    detail = {'name': args.name, 'perturb': args.perturb,
              'generators': count}
    methods = [('lsq', False)]
    if shape.n == 2:
        methods.insert(0, ('exact2d', True))
    return [_report(args, 'symmetry-' + label, count,
                    float(numpy.max(symmetry_sweep(shape, generators, points,
                                                   values, exact),
                                    initial=0.0)),
                    tolerance, watch, detail)
            for label, exact in methods]


def nogo_command(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    metric = Metric.parse(args.signature)
    count = _samples(args)
    rng = default_rng(args.seed)
    lowest = float('inf')
    for child in SeedSequence(args.seed).spawn(count):
        a = rng.uniform(-1.0, 1.0, metric.dim)
        v = rng.uniform(-0.5, 0.5, metric.dim)
        lowest = min(lowest, nogo_certificate(a, v, metric, args.trials,
                                              child))
    zero = nogo_certificate(numpy.zeros(metric.dim),
                            rng.uniform(-0.5, 0.5, metric.dim), metric,
                            args.trials, args.seed)
    return [
        _report(args, 'nogo-certificate', count,
                max(0.0, NOGO_FLOOR - lowest), _tolerance(args, 0.0), watch,
                {'min_certificate': lowest, 'trials': args.trials}),
        _report(args, 'nogo-zero', 1, abs(zero), _tolerance(args, 0.0),
                watch, {'certificate': zero}),
    ]


def top_simulate(args: Namespace) -> List[Report]:
    watch = Stopwatch(args.timing)
    config = TopConfig(mu=args.mu, metric=Metric.parse(args.signature),
                       h=args.h, steps=args.steps, x0=tuple(args.x0),
                       v0=tuple(args.v0), vp0=tuple(args.vp0),
                       u0=args.u0, ud0=args.ud0)
    kind = HOMOGENEOUS if args.homogeneous else PARAMETRIC
    trajectory = integrate_batch([config], kind, args.processes)[0]
    if args.out:
        write_trajectory_csv(trajectory, args.out)
    drift = (float('inf') if trajectory.halted
             else trajectory.max_momentum_drift())
    detail = {'kind': kind, 'samples': len(trajectory),
              'halted': trajectory.halted,
              'norm_drift': trajectory.max_norm_drift(), 'out': args.out}
    if trajectory.message:
        detail['message'] = trajectory.message
    return [_report(args, 'top-momentum-drift', len(trajectory), drift,
                    _tolerance(args, DRIFT_TOLERANCE), watch, detail)]


def top_verify(args: Namespace) -> List[Report]:
    model, values = _load(args)
    battery = Battery(model, values, args.seed, args.samples,
                      args.processes, args.timing)
    return run_acceptance(battery)


COMMANDS = {
    CHECK_MODEL: check_model,
    EL: euler_poisson_command,
    HELMHOLTZ: helmholtz_command,
    ZERMELO: zermelo_command,
    LIFT: lift_command,
    PROJECT: project_command,
    SHAPE: shape_command,
    SYMMETRY: symmetry_command,
    NOGO: nogo_command,
    TOP_SIMULATE: top_simulate,
    TOP_VERIFY: top_verify,
}


def run_command(argv: Optional[Sequence[str]] = None,
                stream: Optional[TextIO] = None) -> int:
    """
    Run one command and write its reports.

    Parameters
    ----------
    argv : sequence (optional)
        The arguments without the program name. Defaults to ``sys.argv``.
    stream : file (optional)
        Where reports are written. Defaults to stdout.

    Returns
    -------
    int
        0 when every check passed, 1 when one failed or a computation broke
        down and 2 for usage and model format errors.
    """
    stream = sys.stdout if stream is None else stream
    try:
        args = _parse_args(argv)
    except SystemExit as error:
        return 0 if error.code in (0, None) else 2
    _configure_logging(args)
    started = perf_counter()
    try:
        reports = COMMANDS[args.command](args)
    except USAGE_ERRORS as error:
        logger.error(str(error))
        return 2
    except VarjetError as error:
        logger.error(str(error))
        return 1
    for report in reports:
        stream.write(report.to_json() + '\n')
    stream.flush()
    logger.info('Completed {} checks in {} seconds'
                .format(len(reports), round(perf_counter() - started, 3)))
    return 0 if all(report.passed for report in reports) else 1


def _main() -> NoReturn:
    """Run the command line and exit with its status."""
    sys.exit(run_command())
