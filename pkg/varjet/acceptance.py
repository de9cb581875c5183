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
The acceptance battery of the planar top.

``run_acceptance`` evaluates twelve criteria against a top model and returns
one ``Report`` per criterion. A report's residual is the largest ratio of a
measured value to its limit, so every criterion is judged against a
tolerance of 1. The measured values themselves go in the report's detail.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy
from numpy.random import SeedSequence, default_rng

from varjet.errors import ModelFormatError
from varjet.expr import Evaluator, coordinate, literal, total_derivative
from varjet.homogeneous import lift_equation, lift_lagrangian
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             JetPoint, Metric, admissible_ranges,
                             sample_points)
from varjet.normal_forms import (SHAPE3, SHAPE4, Shape3,
                                 coefficients_from_lagrangian, extract_shape3,
                                 extract_shape4, shape3_condition_residuals,
                                 shape4_condition_residuals)
from varjet.parser_io import Model, parse_expression
from varjet.reports import Bounds, Report, Stopwatch
from varjet.symmetry import (NOGO_FLOOR, appendix_pde_residuals,
                             f_equation_residual, lorentz_generator,
                             nogo_certificate, sample_generator,
                             symmetry_sweep)
from varjet.top_model import (ETA3, MU, SIGMA3, TopConfig, family_ranges,
                              hom_components, integrate_batch,
                              mp_planar_form, richardson_ratio)
from varjet.variational import (LagrangianDef, euler_poisson,
                                helmholtz_residuals,
                                helmholtz_residuals_split,
                                random_polynomial_lagrangian,
                                zermelo_residuals)


logger = logging.getLogger(__name__)

VARIATIONALITY = 'variationality'
TWO_LAGRANGIANS = 'two-lagrangians'
ZERMELO = 'zermelo'
HOMOGENEOUS_COHERENCE = 'homogeneous-coherence'
MOMENTUM_LAW = 'momentum-law'
MP_EQUIVALENCE = 'mp-equivalence'
NORMAL_FORM = 'normal-form'
GENERATED_LAGRANGIANS = 'generated-lagrangians'
SYMMETRY = 'symmetry'
APPENDIX = 'appendix'
NOGO = 'nogo'
DETERMINISM = 'determinism'
CRITERIA = (VARIATIONALITY, TWO_LAGRANGIANS, ZERMELO, HOMOGENEOUS_COHERENCE,
            MOMENTUM_LAW, MP_EQUIVALENCE, NORMAL_FORM, GENERATED_LAGRANGIANS,
            SYMMETRY, APPENDIX, NOGO, DETERMINISM)

# Criteria cheap enough to be repeated by the determinism check.
REPEATED = (ZERMELO, APPENDIX, NOGO)

NOGO_TRIALS = 1000
RICHARDSON_STEP = 0.05
RICHARDSON_SPAN = 10.0
RICHARDSON_WINDOW = (12.0, 20.0)
PERTURBATION = 0.1
GENERATED_POINTS = 5
MP_PARAMETERS = (0.7, 2.0, -1.0)


def relative_difference(got, expected) -> float:
    """``max |got - expected| / max(1, |expected|)``."""
    got = numpy.asarray(got, dtype=float)
    expected = numpy.asarray(expected, dtype=float)
    scale = numpy.maximum(1.0, numpy.abs(expected))
    return float(numpy.max(numpy.abs(got - expected) / scale, initial=0.0))


def _worst(function: Callable[[JetPoint], float],
           points: Sequence[JetPoint]) -> float:
    return max((float(function(point)) for point in points), default=0.0)


@dataclass(frozen=True)
class Battery:
    """
    Shared settings of one acceptance run.

    Parameters
    ----------
    model : Model
        The top model, with ``E10``, ``HOM``, ``MPPLANAR``, ``L1``, ``L2``,
        ``LH0``, ``LH1``, ``LH2`` and the covector ``P``.
    values : dict
        Numeric values of the model's constants.
    seed : int
        The run's seed. Every criterion draws from its own child seed.
    samples : int (optional)
        Overrides every point count when given.
    processes : int (optional)
        Worker processes for trajectory integration.
    timing : bool (optional)
        Whether reports carry wall times.
    """
    model: Model
    values: Dict[str, float]
    seed: int
    samples: Optional[int] = None
    processes: Optional[int] = 1
    timing: bool = True

    def count(self, default: int) -> int:
        return default if self.samples is None else self.samples

    def seed_for(self, criterion: str) -> int:
        states = SeedSequence(self.seed).generate_state(len(CRITERIA))
        return int(states[CRITERIA.index(criterion)])

    def points(self, criterion: str, kind: str, order: int,
               count: int) -> List[JetPoint]:
        chart = JetChart(kind, self.model.chart.n, order)
        return sample_points(chart, family_ranges(chart),
                             self.seed_for(criterion), count)

    def start(self) -> Stopwatch:
        return Stopwatch(self.timing)


def check_variationality(battery: Battery) -> Report:
    watch = battery.start()
    form = battery.model.form('E10')
    count = battery.count(100)
    points = battery.points(VARIATIONALITY, PARAMETRIC, 2 * form.order, count)
    bounds = Bounds()
    bounds.upper('max_relative_helmholtz', _worst(
        lambda p: helmholtz_residuals(form, p, battery.values).max_relative(),
        points), 1e-9)
    return bounds.report(VARIATIONALITY, battery.seed, count, watch)


def check_two_lagrangians(battery: Battery) -> Report:
    watch = battery.start()
    model = battery.model
    target = model.form('E10')
    first, second = (euler_poisson(model.lagrangian(name))
                     for name in ('L1', 'L2'))
    order = max(target.order, first.order, second.order)
    count = battery.count(50)
    points = battery.points(TWO_LAGRANGIANS, PARAMETRIC, order, count)
    worst = {'L1': 0.0, 'L2': 0.0, 'mean': 0.0}
    for point in points:
        expected = target.evaluate(point, battery.values)
        got_first = first.evaluate(point, battery.values)
        got_second = second.evaluate(point, battery.values)
        for name, got in (('L1', got_first), ('L2', got_second),
                          ('mean', (got_first + got_second) / 2)):
            worst[name] = max(worst[name], relative_difference(got, expected))
    bounds = Bounds()
    for name, value in worst.items():
        bounds.upper('max_relative_' + name, value, 1e-9)
    return bounds.report(TWO_LAGRANGIANS, battery.seed, count, watch)


def check_zermelo(battery: Battery) -> Report:
    watch = battery.start()
    count = battery.count(50)
    points = battery.points(ZERMELO, HOMOGENEOUS, 2, count)
    bounds = Bounds()
    for name in ('LH0', 'LH1', 'LH2'):
        lagrangian = battery.model.lagrangian(name)
        bounds.upper('max_abs_' + name, _worst(
            lambda p: max(abs(z) for z in
                          zermelo_residuals(lagrangian, p, battery.values)),
            points), 1e-10)
    # u0^2 is homogeneous of degree 2, so Z1 reproduces it.
    u0 = coordinate(Coord(HOMOGENEOUS, 0, 0))
    quadratic = LagrangianDef.of(u0 * u0, HOMOGENEOUS, battery.model.chart.n)

    def mismatch(point: JetPoint) -> float:
        first, _ = zermelo_residuals(quadratic, point)
        return abs(first - Evaluator(point)(quadratic.expr))

    bounds.exact('quadratic_z1_minus_l', _worst(mismatch, points))
    return bounds.report(ZERMELO, battery.seed, count, watch)


def check_homogeneous_coherence(battery: Battery) -> Report:
    watch = battery.start()
    model, values = battery.model, battery.values
    e10, hom = model.form('E10'), model.form('HOM')
    lifted = lift_lagrangian(model.lagrangian('L1'))
    family = model.lagrangian('LH1')
    count = battery.count(50)
    points = battery.points(HOMOGENEOUS_COHERENCE, HOMOGENEOUS,
                            max(e10.order, hom.order, 2), count)
    equation = lagrangian = contraction = 0.0
    for point in points:
        u = point.vector(0)
        lifted_values = lift_equation(e10, point, values)
        hom_values = hom.evaluate(point, values)
        equation = max(equation,
                       relative_difference(lifted_values, hom_values))
        evaluator = Evaluator(point, values)
        lagrangian = max(lagrangian, relative_difference(
            evaluator(lifted.expr), evaluator(family.expr)))
        contraction = max(contraction, abs(numpy.dot(u, lifted_values)),
                          abs(numpy.dot(u, hom_values)))
    bounds = Bounds()
    bounds.upper('max_relative_lifted_equation', equation, 1e-9)
    bounds.upper('max_relative_lifted_lagrangian', lagrangian, 1e-9)
    bounds.upper('max_abs_contraction', contraction, 1e-12)
    return bounds.report(HOMOGENEOUS_COHERENCE, battery.seed, count, watch)


def check_momentum_law(battery: Battery) -> Report:
    watch = battery.start()
    model, values = battery.model, battery.values
    hom = model.form('HOM')
    if 'P' not in model.covectors:
        raise ModelFormatError('The model has no momentum covector P')
    rates = [total_derivative(component, HOMOGENEOUS)
             for component in model.covectors['P']]
    count = battery.count(50)
    points = battery.points(MOMENTUM_LAW, HOMOGENEOUS, hom.order, count)
    bounds = Bounds()
    bounds.upper('max_relative_identity', _worst(
        lambda p: relative_difference(
            hom.evaluate(p, values), -Evaluator(p, values).many(rates)),
        points), 1e-10)
    config = TopConfig(mu=values[MU], metric=model.metric)
    for kind in (PARAMETRIC, HOMOGENEOUS):
        trajectory = integrate_batch([config], kind, battery.processes)[0]
        bounds.note('halted_' + kind, trajectory.halted)
        drift = (float('inf') if trajectory.halted
                 else trajectory.max_momentum_drift())
        bounds.upper('momentum_drift_' + kind, drift, 1e-6)
    coarse = config.with_step(RICHARDSON_STEP,
                              int(round(RICHARDSON_SPAN / RICHARDSON_STEP)))
    ratio = richardson_ratio(coarse, PARAMETRIC, battery.processes)
    low, high = RICHARDSON_WINDOW
    bounds.upper('richardson_ratio', ratio, high)
    bounds.lower('richardson_ratio', ratio, low)
    return bounds.report(MOMENTUM_LAW, battery.seed, count, watch)


def check_mp_equivalence(battery: Battery) -> Report:
    watch = battery.start()
    model, values = battery.model, battery.values
    m0, sigma3, eta3 = MP_PARAMETERS
    mp = mp_planar_form(m0, sigma3, eta3, model.metric)
    hom = hom_components(m0 / (eta3 * sigma3), model.metric)
    bundled, reference = model.form('MPPLANAR'), model.form('HOM')
    bundled_factor = -values[ETA3] * values[SIGMA3]
    count = battery.count(50)
    points = battery.points(MP_EQUIVALENCE, HOMOGENEOUS, 3, count)
    bounds = Bounds()
    bounds.upper('max_relative_generic', _worst(
        lambda p: relative_difference(
            mp.evaluate(p), -eta3 * sigma3 * Evaluator(p).many(hom)),
        points), 1e-9)
    bounds.upper('max_relative_model', _worst(
        lambda p: relative_difference(
            bundled.evaluate(p, values),
            bundled_factor * reference.evaluate(p, values)),
        points), 1e-9)
    return bounds.report(MP_EQUIVALENCE, battery.seed, count, watch)


def _b_template(point: JetPoint, metric: Metric) -> numpy.ndarray:
    """``-g_i (N^2 delta_ij - g_j v_i v_j) / N^3`` with ``N^2 = u.u``."""
    v = point.vector(0)
    g = numpy.array(metric.signature[1:], dtype=float)
    norm2 = metric.dot(numpy.concatenate(([1.0], v)),
                       numpy.concatenate(([1.0], v)))
    matrix = norm2 * numpy.eye(len(v)) - numpy.outer(v, g * v)
    return -g[:, None] * matrix / norm2 ** 1.5


def check_normal_form(battery: Battery) -> Report:
    watch = battery.start()
    model, values = battery.model, battery.values
    seed = battery.seed_for(NORMAL_FORM)
    shape = extract_shape3(model.form('E10'), values, seed=seed)
    count = battery.count(100)
    points = battery.points(NORMAL_FORM, PARAMETRIC, 2, count)
    scalar_points = points[:battery.count(30)]
    rest = points[0].with_values({Coord(PARAMETRIC, index, 0): 0.0
                                  for index in points[0].chart.indices})
    at_rest = shape.evaluate(rest, values)[0][0, 1]
    bounds = Bounds()
    bounds.upper('a12_at_rest_error', abs(abs(at_rest) - 1.0), 1e-10)
    skew = scaling = 0.0
    for point in scalar_points:
        A = shape.evaluate(point, values)[0]
        v = numpy.concatenate(([1.0], point.vector(0)))
        scaled = A[0, 1] * model.metric.dot(v, v) ** 1.5
        skew = max(skew, float(numpy.max(numpy.abs(A + A.T))))
        scaling = max(scaling, abs(scaled - at_rest) / abs(at_rest))
    bounds.upper('max_abs_skew_defect', skew, 1e-10)
    bounds.upper('max_relative_scaling_defect', scaling, 1e-10)

    extracted = [shape.evaluate(point, values)[1] for point in points]
    templates = [_b_template(point, model.metric) for point in points]
    numerator = sum(float(numpy.sum(B * T))
                    for B, T in zip(extracted, templates))
    denominator = sum(float(numpy.sum(T * T)) for T in templates)
    fitted = numerator / denominator
    bounds.note('fitted_constant', fitted)
    bounds.upper('max_relative_b_fit', max(
        relative_difference(fitted * T, B)
        for B, T in zip(extracted, templates)), 1e-9)

    worst = {}
    for point in points:
        for name, residuals in shape3_condition_residuals(
                shape, point, values).items():
            worst[name] = max(worst.get(name, 0.0), residuals.max_relative())
    for name, value in worst.items():
        bounds.upper('max_relative_' + name, value, 1e-9)
    return bounds.report(NORMAL_FORM, battery.seed, count, watch)


def check_generated_lagrangian(lagrangian: LagrangianDef, seed: int,
                               count: int = GENERATED_POINTS
                               ) -> Dict[str, float]:
    """
    Check one Lagrangian's Euler-Poisson form end to end.

    Returns
    -------
    dict
        The worst Helmholtz residuals (full and split), the worst
        normal-form condition residual and the worst disagreement between
        extracted coefficients and the ones written from the Lagrangian.
    """
    form = euler_poisson(lagrangian)
    n = lagrangian.chart.n
    chart = JetChart(PARAMETRIC, n, max(2 * form.order, 2))
    points = sample_points(chart, admissible_ranges(chart), seed, count)
    helmholtz = _worst(
        lambda p: helmholtz_residuals(form, p).max_relative(), points)
    split = _worst(
        lambda p: max(part.max_relative()
                      for part in helmholtz_residuals_split(form, p)),
        points)
    if form.order <= 3:
        shape = extract_shape3(form, seed=seed)
        expected = coefficients_from_lagrangian(lagrangian, SHAPE3,
                                                seed=seed)
        conditions = shape3_condition_residuals
    else:
        shape = extract_shape4(form, seed=seed)
        expected = coefficients_from_lagrangian(lagrangian, SHAPE4,
                                                seed=seed)
        conditions = shape4_condition_residuals

    def flat(coefficients, point: JetPoint) -> numpy.ndarray:
        return numpy.concatenate([numpy.ravel(block) for block in
                                  coefficients.evaluate(point)])

    return {
        'helmholtz': helmholtz,
        'helmholtz_split': split,
        'conditions': _worst(
            lambda p: max((r.max_relative() for r in
                           conditions(shape, p).values()), default=0.0),
            points),
        'agreement': _worst(
            lambda p: relative_difference(flat(shape, p), flat(expected, p)),
            points),
        'order': form.order,
    }


def check_generated_lagrangians(battery: Battery) -> Report:
    watch = battery.start()
    count = battery.count(20)
    states = SeedSequence(battery.seed_for(GENERATED_LAGRANGIANS)) \
        .generate_state(max(count, 1))
    worst = {'helmholtz': 0.0, 'helmholtz_split': 0.0, 'conditions': 0.0,
             'agreement': 0.0}
    orders = {SHAPE3: 0, SHAPE4: 0}
    for number in range(count):
        order = 1 + (number // 3) % 2
        lagrangian = random_polynomial_lagrangian(
            1 + number % 3, order, int(states[number]),
            affine=order == 2 and (number // 6) % 2 == 0)
        result = check_generated_lagrangian(lagrangian, int(states[number]))
        orders[SHAPE3 if result.pop('order') <= 3 else SHAPE4] += 1
        for name, value in result.items():
            worst[name] = max(worst[name], value)
    bounds = Bounds()
    for name, value in worst.items():
        bounds.upper('max_relative_' + name, value, 1e-8)
    bounds.note('shape3_cases', orders[SHAPE3])
    bounds.note('shape4_cases', orders[SHAPE4])
    return bounds.report(GENERATED_LAGRANGIANS, battery.seed, count, watch)


def check_symmetry(battery: Battery) -> Report:
    watch = battery.start()
    model, values = battery.model, battery.values
    seed = battery.seed_for(SYMMETRY)
    shape = extract_shape3(model.form('E10'), values, seed=seed)
    count = battery.count(100)
    points = battery.points(SYMMETRY, PARAMETRIC, 2, count)
    generators = [sample_generator(model.metric, child)
                  for child in SeedSequence(seed).spawn(count)]
    bounds = Bounds()
    exact = symmetry_sweep(shape, generators, points, values)
    bounds.upper('max_abs_exact2d', float(numpy.max(exact, initial=0.0)),
                 1e-9)

    perturbed = Shape3(shape.A, shape.B,
                       [c + literal(PERTURBATION) for c in shape.c])
    n = shape.n
    rng = default_rng(seed)
    boosts = [lorentz_generator(numpy.zeros((n, n)), pi, model.metric)
              for pi in rng.uniform(-1.0, 1.0, (10, n))]
    broken = symmetry_sweep(perturbed, boosts, points[:10], values)
    bounds.lower('max_abs_perturbed_boost',
                 float(numpy.nanmax(broken)) if broken.size else 0.0, 1e-3)
    return bounds.report(SYMMETRY, battery.seed, count, watch)


def check_appendix(battery: Battery) -> Report:
    watch = battery.start()
    chart = JetChart(PARAMETRIC, 2, 1)
    a = parse_expression('(1 - v1^2 - v2^2)^(-3/2)', chart)
    f = parse_expression('3 * (v1^2 + v2^2) / (1 - v1^2 - v2^2)', chart)
    count = battery.count(50)
    points = sample_points(chart, admissible_ranges(chart),
                           battery.seed_for(APPENDIX), count)
    bounds = Bounds()
    bounds.upper('max_abs_pde', _worst(
        lambda p: max(abs(r) for r in appendix_pde_residuals(a, p).values()),
        points), 1e-10)
    bounds.upper('max_abs_f_equation', _worst(
        lambda p: abs(f_equation_residual(f, p)), points), 1e-10)
    bounds.exact('unit_boost_11_plus_3', _worst(
        lambda p: abs(appendix_pde_residuals(literal(1.0), p)['boost_11'] +
                      3.0), points))
    return bounds.report(APPENDIX, battery.seed, count, watch)


def check_nogo(battery: Battery) -> Report:
    watch = battery.start()
    metric = Metric((-1, -1, -1))
    count = battery.count(50)
    seed = battery.seed_for(NOGO)
    rng = default_rng(seed)
    children = SeedSequence(seed).spawn(count)
    lowest = float('inf')
    for child in children:
        a = rng.uniform(-1.0, 1.0, 3)
        while not numpy.any(a):
            a = rng.uniform(-1.0, 1.0, 3)
        v = rng.uniform(-0.5, 0.5, 3)
        lowest = min(lowest, nogo_certificate(a, v, metric, NOGO_TRIALS,
                                              child))
    bounds = Bounds()
    bounds.lower('min_certificate', lowest, NOGO_FLOOR)
    bounds.exact('zero_certificate', nogo_certificate(
        numpy.zeros(3), rng.uniform(-0.5, 0.5, 3), metric, NOGO_TRIALS,
        seed))
    return bounds.report(NOGO, battery.seed, count, watch)


def check_determinism(battery: Battery) -> Report:
    watch = battery.start()
    quiet = replace(battery, timing=False)
    runs = [[CHECKS[name](quiet).to_json() for name in REPEATED]
            for _ in range(2)]
    differing = sum(first != second for first, second in zip(*runs))
    bounds = Bounds()
    bounds.exact('differing_reports', differing)
    bounds.note('repeated', list(REPEATED))
    return bounds.report(DETERMINISM, battery.seed, len(REPEATED), watch)


CHECKS = {
    VARIATIONALITY: check_variationality,
    TWO_LAGRANGIANS: check_two_lagrangians,
    ZERMELO: check_zermelo,
    HOMOGENEOUS_COHERENCE: check_homogeneous_coherence,
    MOMENTUM_LAW: check_momentum_law,
    MP_EQUIVALENCE: check_mp_equivalence,
    NORMAL_FORM: check_normal_form,
    GENERATED_LAGRANGIANS: check_generated_lagrangians,
    SYMMETRY: check_symmetry,
    APPENDIX: check_appendix,
    NOGO: check_nogo,
    DETERMINISM: check_determinism,
}


def run_acceptance(battery: Battery,
                   criteria: Sequence[str] = CRITERIA) -> List[Report]:
    """
    Evaluate acceptance criteria in order.

    Parameters
    ----------
    battery : Battery
        The model and run settings.
    criteria : sequence (optional)
        Names from ``CRITERIA``; all of them by default.

    Returns
    -------
    list
        One ``Report`` per criterion.
    """
    reports = []
    for name in criteria:
        if name not in CHECKS:
            raise KeyError('Unknown criterion {!r}'.format(name))
        report = CHECKS[name](battery)
        logger.info('{}: {} ({:.3g})'.format(
            name, 'pass' if report.passed else 'FAIL',
            report.max_abs_residual))
        reports.append(report)
    return reports
