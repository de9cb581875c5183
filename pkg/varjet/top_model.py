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
The planar relativistic top.

The homogeneous equation of the top is ``-D_zeta p = 0`` for the covector::

    p = (u' x u) / |u|^3 + mu u / |u|

with ``|u| = sqrt(u.u)`` in the metric, lowered components and the cross
product ``(a x b)_k = sign * e_kij a^i b^j``. Its parametric counterpart is
the restriction to the gauge ``u = (1, v)``, ``u' = (0, v')``.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from multiprocessing.pool import Pool
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy

from varjet.errors import (AdmissibilityError, BindingError, ChartError,
                           SingularityError)
from varjet.expr import (Evaluator, Expr, ZERO, ONE, as_expr, constant,
                         coordinate, power, sqrt, substitute)
from varjet.jet_core import (ADMISSIBLE_FLOOR, DEFAULT_SEED, HOMOGENEOUS,
                             PARAMETRIC, Coord, JetChart, Metric,
                             admissible_ranges, sample_points)
from varjet.parser_io import Model
from varjet.variational import DynamicalForm, LagrangianDef, euler_poisson


logger = logging.getLogger(__name__)

CROSS_SIGN = -1
DEFAULT_MU = 1.0
MU = 'mu'
SIGMA3 = 'sigma3'
ETA3 = 'eta3'
CALIBRATION_TOLERANCE = 1e-8

Parameter = Union[str, float, Expr]


def _parameter(value: Parameter) -> Expr:
    if isinstance(value, str):
        return constant(value)
    return as_expr(value)


def _hom(index: int, rank: int) -> Expr:
    return coordinate(Coord(HOMOGENEOUS, index, rank))


def _hom_vectors(rank: int, dim: int = 3) -> List[Expr]:
    return [_hom(index, rank) for index in range(dim)]


def _dot(metric: Metric, a: Sequence[Expr], b: Sequence[Expr]) -> Expr:
    total = ZERO
    for weight, left, right in zip(metric.signature, a, b):
        total = total + weight * left * right
    return total


def _cross(metric: Metric, a: Sequence[Expr], b: Sequence[Expr],
           sign: int) -> List[Expr]:
    symbol = metric.levi_civita()
    result = []
    for k in range(3):
        total = ZERO
        for i in range(3):
            for j in range(3):
                weight = sign * symbol[k, i, j]
                if weight:
                    total = total + float(weight) * a[i] * b[j]
        result.append(total)
    return result


def effective_sign(metric: Metric) -> int:
    """The cross-product sign matching ``metric``'s orientation."""
    return CROSS_SIGN * metric.orientation


def _metric(metric: Optional[Metric]) -> Metric:
    metric = metric or Metric()
    if metric.dim != 3:
        raise ChartError('The planar top needs a 3-dimensional metric, got '
                         'one of dimension {}'.format(metric.dim))
    return metric


def hom_components(mu: Parameter = MU, metric: Optional[Metric] = None,
                   sign: Optional[int] = None) -> List[Expr]:
    """
    The homogeneous equation as trees::

        E_a = -(u'' x u)_a / |u|^3 + 3 (u' x u)_a (u'.u) / |u|^5
              - mu / |u|^3 ((u.u) u'_a - (u'.u) u_a)
    """
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    mu = _parameter(mu)
    u, du, ddu = (_hom_vectors(rank) for rank in (0, 1, 2))
    uu = _dot(metric, u, u)
    duu = _dot(metric, du, u)
    inverse3 = power(uu, Fraction(-3, 2))
    inverse5 = power(uu, Fraction(-5, 2))
    accel = _cross(metric, ddu, u, sign)
    spin = _cross(metric, du, u, sign)
    components = []
    for a, weight in enumerate(metric.signature):
        components.append(-accel[a] * inverse3 +
                          3 * spin[a] * duu * inverse5 -
                          mu * inverse3 * (uu * weight * du[a] -
                                           duu * weight * u[a]))
    return components


def momentum_components(mu: Parameter = MU, metric: Optional[Metric] = None,
                        sign: Optional[int] = None) -> List[Expr]:
    """``p_a = (u' x u)_a / |u|^3 + mu u_a / |u|`` as trees."""
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    mu = _parameter(mu)
    u, du = _hom_vectors(0), _hom_vectors(1)
    uu = _dot(metric, u, u)
    spin = _cross(metric, du, u, sign)
    return [spin[a] * power(uu, Fraction(-3, 2)) +
            mu * weight * u[a] / sqrt(uu)
            for a, weight in enumerate(metric.signature)]


def homogeneous_lagrangian(k: int, metric: Optional[Metric] = None,
                           mu: Parameter = MU) -> LagrangianDef:
    """
    Member ``k`` of the homogeneous Lagrangian family.

    With ``a = k``, ``b = k + 1`` and ``c = k + 2`` taken cyclically::

        L = u_a (u'_c u_b - u'_b u_c) / (|u| (g_b u_b^2 + g_c u_c^2))
            + mu |u|

    Every member varies to the same homogeneous equation. Member 0 is
    singular where ``u1 = u2 = 0``.
    """
    metric = _metric(metric)
    a, b, c = k % 3, (k + 1) % 3, (k + 2) % 3
    g = metric.signature
    u, du = _hom_vectors(0), _hom_vectors(1)
    norm = sqrt(_dot(metric, u, u))
    expr = (u[a] * (du[c] * u[b] - du[b] * u[c]) /
            (norm * (g[b] * u[b] * u[b] + g[c] * u[c] * u[c])) +
            _parameter(mu) * norm)
    return LagrangianDef.of(expr, HOMOGENEOUS, 2)


def gauge_bindings(n: int = 2) -> Dict[Coord, Expr]:
    """Homogeneous coordinates in the gauge ``X0 = t``, ``u0 = 1``."""
    t = coordinate(Coord(PARAMETRIC, 0, -2))
    bindings = {Coord(HOMOGENEOUS, 0, -2): t,
                Coord(HOMOGENEOUS, 0, -1): t}
    for rank in range(0, 4):
        bindings[Coord(HOMOGENEOUS, 0, rank)] = ONE if rank == 0 else ZERO
    for index in range(1, n + 1):
        for rank in range(-1, 4):
            bindings[Coord(HOMOGENEOUS, index, rank)] = coordinate(
                Coord(PARAMETRIC, index, rank))
    return bindings


def restrict_to_gauge(e: Expr, n: int = 2) -> Expr:
    """Rewrite a homogeneous expression in the gauge ``u = (1, v)``."""
    return substitute(e, gauge_bindings(n), JetChart(PARAMETRIC, n, 4))


def e10_components(mu: Parameter = MU, metric: Optional[Metric] = None,
                   sign: Optional[int] = None) -> List[Expr]:
    """
    The parametric third-order equation.

    For the default metric, with ``s = 1 - v1^2 - v2^2`` and
    ``P = v1 v1' + v2 v2'``::

        E_1 =  v2'' / s^(3/2) + 3 v2' P / s^(5/2) + mu (s v1' + v1 P) / s^(3/2)
        E_2 = -v1'' / s^(3/2) - 3 v1' P / s^(5/2) + mu (s v2' + v2 P) / s^(3/2)
    """
    return [restrict_to_gauge(component)
            for component in hom_components(mu, metric, sign)[1:]]


def mp_planar_form(m0: Parameter, sigma3: Parameter, eta3: Parameter = -1.0,
                   metric: Optional[Metric] = None,
                   sign: Optional[int] = None) -> DynamicalForm:
    """
    The planar reduction of the spinning-particle equations::

        eta3 sigma3 ((u'' x u) / |u|^3 - 3 (u'.u)(u' x u) / |u|^5)
            + m0 / |u|^3 ((u.u) u' - (u'.u) u)

    It equals ``-eta3 sigma3`` times the homogeneous equation when
    ``mu = m0 / (eta3 sigma3)``.

    Raises
    ------
    SingularityError
        Raises a ``SingularityError`` when ``sigma3 = 0``.
    """
    if not isinstance(sigma3, (str, Expr)) and sigma3 == 0:
        raise SingularityError('The planar reduction needs sigma3 != 0')
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    m0 = _parameter(m0)
    factor = _parameter(eta3) * _parameter(sigma3)
    u, du, ddu = (_hom_vectors(rank) for rank in (0, 1, 2))
    uu = _dot(metric, u, u)
    duu = _dot(metric, du, u)
    inverse3 = power(uu, Fraction(-3, 2))
    accel = _cross(metric, ddu, u, sign)
    spin = _cross(metric, du, u, sign)
    components = [factor * (accel[a] * inverse3 -
                            3 * duu * spin[a] * power(uu, Fraction(-5, 2))) +
                  m0 * inverse3 * (uu * weight * du[a] - duu * weight * u[a])
                  for a, weight in enumerate(metric.signature)]
    return DynamicalForm.of(components, HOMOGENEOUS, 2)


def build_top_model(mu: Optional[float] = DEFAULT_MU,
                    metric: Optional[Metric] = None) -> Model:
    """
    Build the top model in code.

    Parameters
    ----------
    mu : float (optional)
        The value of the constant ``mu``; ``None`` leaves it free.
    metric : Metric (optional)
        The metric. Defaults to ``diag(1, -1, -1)``.

    Returns
    -------
    Model
        Forms ``E10``, ``HOM`` and ``MPPLANAR``, Lagrangians ``L1``, ``L2``,
        ``LH0``, ``LH1`` and ``LH2`` and the covector ``P``, all written with
        the constants ``mu``, ``sigma3 = 1`` and ``eta3 = -1``. ``MPPLANAR``
        uses ``m0 = mu eta3 sigma3``, so it equals ``HOM``.
    """
    metric = _metric(metric)
    family = {'LH{}'.format(k): homogeneous_lagrangian(k, metric, MU)
              for k in range(3)}
    lagrangians = {
        'L1': LagrangianDef.of(restrict_to_gauge(family['LH1'].expr),
                               PARAMETRIC, 2),
        'L2': LagrangianDef.of(restrict_to_gauge(family['LH2'].expr),
                               PARAMETRIC, 2),
    }
    lagrangians.update(family)
    forms = {
        'E10': DynamicalForm.of(e10_components(MU, metric), PARAMETRIC, 2),
        'HOM': DynamicalForm.of(hom_components(MU, metric), HOMOGENEOUS, 2),
        'MPPLANAR': mp_planar_form(
            constant(MU) * constant(ETA3) * constant(SIGMA3), SIGMA3, ETA3,
            metric),
    }
    covectors = {'P': tuple(momentum_components(MU, metric))}
    constants = {MU: mu, SIGMA3: 1.0, ETA3: -1.0}
    return Model(JetChart(PARAMETRIC, 2, 3), metric, constants, lagrangians,
                 forms, covectors)


def family_ranges(chart: JetChart) -> List:
    """
    Admissible ranges with ``u1`` kept away from 0 on planar homogeneous
    charts.
    """
    ranges = admissible_ranges(chart)
    if chart.kind == HOMOGENEOUS and chart.n == 2 and chart.order >= 1:
        ranges[1] = [(1.2, 2.0), (0.3, 0.7), (-0.7, 0.7)]
    return ranges


def calibrate_orientation(model: Model, samples: int = 5,
                          seed: int = DEFAULT_SEED,
                          constants: Optional[Dict[str, float]] = None) -> int:
    """
    The cross-product sign for which ``LH0`` varies to the equation.

    The Euler-Poisson form of the model's ``LH0`` is compared with the
    homogeneous equation built with either sign.

    Raises
    ------
    SingularityError
        Raises a ``SingularityError`` when neither sign matches.
    """
    values = model.constant_values(constants)
    varied = euler_poisson(model.lagrangian('LH0'))
    chart = JetChart(HOMOGENEOUS, 2, max(varied.order, 3))
    points = sample_points(chart, family_ranges(chart), seed, samples)
    for sign in (1, -1):
        candidate = hom_components(MU, model.metric, sign)
        worst = 0.0
        for point in points:
            evaluator = Evaluator(point, values)
            expected = evaluator.many(candidate)
            got = evaluator.many(varied.components)
            scale = max(1.0, float(numpy.max(numpy.abs(expected))))
            worst = max(worst, float(numpy.max(numpy.abs(got - expected))) /
                        scale)
        logger.debug('Orientation sign {:+d}: worst relative residual {:.3e}'
                     .format(sign, worst))
        if worst <= CALIBRATION_TOLERANCE:
            return sign
    raise SingularityError('No cross-product sign reproduces the homogeneous '
                           'equation')


@dataclass(frozen=True)
class TopConfig:
    """
    Physical and numerical settings of one trajectory.

    The parametric state is ``(x, v, v')`` at ``t0``; the homogeneous one is
    ``(X, u, u')`` and defaults to the gauge image ``((t0, x), (1, v),
    (0, v'))`` of the parametric state.
    """
    mu: float = DEFAULT_MU
    metric: Metric = field(default_factory=Metric)
    h: float = 1e-3
    steps: int = 10000
    t0: float = 0.0
    x0: Tuple[float, ...] = (0.0, 0.0)
    v0: Tuple[float, ...] = (0.1, 0.0)
    vp0: Tuple[float, ...] = (0.0, 0.2)
    X0: Optional[Tuple[float, ...]] = None
    u0: Optional[Tuple[float, ...]] = None
    ud0: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        for name in ('x0', 'v0', 'vp0', 'X0', 'u0', 'ud0'):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name,
                                   tuple(float(item) for item in value))
        _metric(self.metric)
        if not self.h > 0 or not math.isfinite(self.h):
            raise AdmissibilityError('Step size must be positive and finite, '
                                     'got {}'.format(self.h))
        if self.steps < 0:
            raise AdmissibilityError('Step count must not be negative')
        if not math.isfinite(self.mu):
            raise AdmissibilityError('mu must be finite')
        if any(len(vector) != 2 for vector in (self.x0, self.v0, self.vp0)):
            raise ChartError('Parametric states have 2 components')
        for vector in (self.X0, self.u0, self.ud0):
            if vector is not None and len(vector) != 3:
                raise ChartError('Homogeneous states have 3 components')
        _, u, _ = self.homogeneous_state()
        uu = self.metric.dot(u, u)
        if uu < ADMISSIBLE_FLOOR or u[0] <= 0:
            raise AdmissibilityError('Initial state is outside the admissible '
                                     'region (u.u = {:.3g}, u0 = {:.3g})'
                                     .format(uu, u[0]))

    def homogeneous_state(self) -> Tuple[numpy.ndarray, numpy.ndarray,
                                         numpy.ndarray]:
        X = (self.X0 if self.X0 is not None else (self.t0,) + self.x0)
        u = self.u0 if self.u0 is not None else (1.0,) + self.v0
        ud = self.ud0 if self.ud0 is not None else (0.0,) + self.vp0
        return (numpy.array(X, dtype=float), numpy.array(u, dtype=float),
                numpy.array(ud, dtype=float))

    def with_step(self, h: float, steps: int) -> 'TopConfig':
        return replace(self, h=h, steps=steps)


@dataclass
class Trajectory:
    """
    Samples of an integrated trajectory.

    Attributes
    ----------
    kind : string
        ``parametric`` or ``homogeneous``.
    params : numpy.ndarray
        The parameter ``t`` or ``zeta`` of every sample.
    positions, velocities, accelerations : numpy.ndarray
        ``(x, v, v')`` or ``(X, u, u')`` per sample.
    momenta : numpy.ndarray
        The covector ``p`` per sample.
    norms : numpy.ndarray
        ``u.u`` per sample, with ``u = (1, v)`` for parametric runs.
    halted : bool
        ``True`` when the run left the admissible region early.
    """
    kind: str
    params: numpy.ndarray
    positions: numpy.ndarray
    velocities: numpy.ndarray
    accelerations: numpy.ndarray
    momenta: numpy.ndarray
    norms: numpy.ndarray
    halted: bool = False
    message: Optional[str] = None

    def __len__(self) -> int:
        return len(self.params)

    @property
    def momentum_drift(self) -> numpy.ndarray:
        return numpy.max(numpy.abs(self.momenta - self.momenta[0]), axis=1)

    @property
    def norm_drift(self) -> numpy.ndarray:
        return numpy.abs(self.norms - self.norms[0])

    def max_momentum_drift(self) -> float:
        return float(numpy.max(self.momentum_drift, initial=0.0))

    def max_norm_drift(self) -> float:
        return float(numpy.max(self.norm_drift, initial=0.0))

    def columns(self) -> List[str]:
        if self.kind == PARAMETRIC:
            names = (['t', 'x1', 'x2', 'v1', 'v2', 'vprime1', 'vprime2'])
        else:
            names = (['zeta', 'X0', 'X1', 'X2', 'u0', 'u1', 'u2', 'udot0',
                      'udot1', 'udot2'])
        return names + ['p0', 'p1', 'p2', 'uu_drift', 'p_drift']

    def table(self) -> numpy.ndarray:
        return numpy.column_stack((self.params, self.positions,
                                   self.velocities, self.accelerations,
                                   self.momenta, self.norm_drift,
                                   self.momentum_drift))


def conserved_momentum(u: Sequence[float], ud: Sequence[float],
                       mu: float = DEFAULT_MU,
                       metric: Optional[Metric] = None,
                       sign: Optional[int] = None) -> numpy.ndarray:
    """
    ``p_a = (u' x u)_a / |u|^3 + mu u_a / |u|`` at one state.

    Raises
    ------
    AdmissibilityError
        Raises an ``AdmissibilityError`` when ``u.u <= 0``.
    """
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    u = numpy.asarray(u, dtype=float)
    uu = metric.dot(u, u)
    if uu <= 0:
        raise AdmissibilityError('Momentum needs u.u > 0, got {:.3g}'
                                 .format(uu))
    norm = math.sqrt(uu)
    return (metric.cross(ud, u, sign) / norm ** 3 +
            mu * metric.lower(u) / norm)


def _gauge_acceleration(v1: float, v2: float, w1: float, w2: float,
                        mu: float, g: Tuple[int, ...],
                        sign: int) -> Tuple[float, float]:
    uu = g[0] + g[1] * v1 * v1 + g[2] * v2 * v2
    if uu < ADMISSIBLE_FLOOR:
        raise AdmissibilityError('State left the admissible region '
                                 '(u.u = {:.3g})'.format(uu))
    duu = g[1] * w1 * v1 + g[2] * w2 * v2
    norm = math.sqrt(uu)
    norm3 = uu * norm
    rest1 = (3 * sign * w2 * duu / (norm3 * uu) -
             mu * (uu * g[1] * w1 - duu * g[1] * v1) / norm3)
    rest2 = (-3 * sign * w1 * duu / (norm3 * uu) -
             mu * (uu * g[2] * w2 - duu * g[2] * v2) / norm3)
    return -sign * norm3 * rest2, sign * norm3 * rest1


def solve_acceleration_parametric(v: Sequence[float], vp: Sequence[float],
                                  mu: float = DEFAULT_MU,
                                  metric: Optional[Metric] = None,
                                  sign: Optional[int] = None
                                  ) -> numpy.ndarray:
    """
    The unique ``v''`` solving the parametric equation at ``(v, v')``.

    Raises
    ------
    AdmissibilityError
        Raises an ``AdmissibilityError`` when ``u.u`` of ``u = (1, v)`` falls
        below the admissible floor.
    """
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    return numpy.array(_gauge_acceleration(v[0], v[1], vp[0], vp[1], mu,
                                           metric.signature,
                                           sign * metric.orientation))


def _cross_matrix(u: numpy.ndarray, metric: Metric,
                  sign: int) -> numpy.ndarray:
    """The matrix ``C`` with ``C a = a x u``."""
    return sign * numpy.einsum('kij,j->ki', metric.levi_civita(), u)


def solve_acceleration_homogeneous(u: numpy.ndarray, ud: numpy.ndarray,
                                   mu: float = DEFAULT_MU,
                                   metric: Optional[Metric] = None,
                                   sign: Optional[int] = None
                                   ) -> numpy.ndarray:
    """
    The gauge-fixed ``u''`` solving the homogeneous equation.

    The equation fixes ``u'' x u``; the remaining component along ``u`` is
    fixed by ``u''.u = -u'.u'``, which keeps ``u.u`` constant.
    """
    metric = _metric(metric)
    sign = effective_sign(metric) if sign is None else sign
    uu = metric.dot(u, u)
    if uu < ADMISSIBLE_FLOOR or u[0] <= 0:
        raise AdmissibilityError('State left the admissible region '
                                 '(u.u = {:.3g}, u0 = {:.3g})'
                                 .format(uu, u[0]))
    norm = math.sqrt(uu)
    duu = metric.dot(ud, u)
    lowered_ud = metric.lower(ud)
    lowered_u = metric.lower(u)
    rest = (3 * metric.cross(ud, u, sign) * duu / norm ** 5 -
            mu / norm ** 3 * (uu * lowered_ud - duu * lowered_u))
    system = numpy.vstack((_cross_matrix(u, metric, sign), lowered_u))
    rhs = numpy.concatenate((norm ** 3 * rest, [-metric.dot(ud, ud)]))
    return numpy.linalg.lstsq(system, rhs, rcond=None)[0]


def _rk4(derivative, state: numpy.ndarray, h: float) -> numpy.ndarray:
    k1 = derivative(state)
    k2 = derivative(state + 0.5 * h * k1)
    k3 = derivative(state + 0.5 * h * k2)
    k4 = derivative(state + h * k3)
    return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _run(cfg: TopConfig, kind: str, state: numpy.ndarray, start: float,
         derivative, observe) -> Trajectory:
    params = [start]
    samples = [state]
    observed = [observe(state)]
    halted = False
    message = None
    for step in range(1, cfg.steps + 1):
        try:
            state = _rk4(derivative, state, cfg.h)
            observed.append(observe(state))
        except AdmissibilityError as error:
            halted = True
            message = 'Halted at step {}: {}'.format(step, error)
            logger.warning(message)
            break
        params.append(start + step * cfg.h)
        samples.append(state)
    samples = numpy.array(samples)
    momenta = numpy.array([item[0] for item in observed])
    norms = numpy.array([item[1] for item in observed])
    width = samples.shape[1] // 3
    return Trajectory(kind, numpy.array(params), samples[:, :width],
                      samples[:, width:2 * width], samples[:, 2 * width:],
                      momenta, norms, halted, message)


def integrate_parametric(cfg: TopConfig) -> Trajectory:
    """
    Integrate ``(x, v, v')`` with fixed-step classical Runge-Kutta.

    Leaving the admissible region halts the run; the partial trajectory is
    returned with ``halted`` set.
    """
    metric = cfg.metric
    sign = effective_sign(metric)
    g = metric.signature
    mu = cfg.mu

    def derivative(state: numpy.ndarray) -> numpy.ndarray:
        _, _, v1, v2, w1, w2 = state
        a1, a2 = _gauge_acceleration(v1, v2, w1, w2, mu, g,
                                     sign * metric.orientation)
        return numpy.array((v1, v2, w1, w2, a1, a2))

    def observe(state: numpy.ndarray):
        u = numpy.concatenate(([1.0], state[2:4]))
        if metric.dot(u, u) < ADMISSIBLE_FLOOR:
            raise AdmissibilityError('u.u = {:.3g} is below the admissible '
                                     'floor'.format(metric.dot(u, u)))
        ud = numpy.concatenate(([0.0], state[4:6]))
        return (conserved_momentum(u, ud, mu, metric, sign),
                metric.dot(u, u))

    state = numpy.array(cfg.x0 + cfg.v0 + cfg.vp0, dtype=float)
    logger.debug('Integrating the parametric equation: h = {}, steps = {}'
                 .format(cfg.h, cfg.steps))
    return _run(cfg, PARAMETRIC, state, cfg.t0, derivative, observe)


def integrate_homogeneous(cfg: TopConfig, zeta0: float = 0.0) -> Trajectory:
    """
    Integrate ``(X, u, u')`` with fixed-step classical Runge-Kutta.

    The initial ``u'`` is replaced by its component orthogonal to ``u`` so
    that ``u.u`` stays constant along the run. The removed part only
    reparametrizes the curve, so the world line and the momentum ``p`` are
    unchanged.
    """
    metric = cfg.metric
    sign = effective_sign(metric)
    mu = cfg.mu
    X, u, ud = cfg.homogeneous_state()
    along = metric.dot(ud, u) / metric.dot(u, u)
    if along != 0:
        logger.debug('Projecting the initial u\' orthogonal to u, removed '
                     '{:.3g} u'.format(along))
    ud = ud - along * u

    def derivative(state: numpy.ndarray) -> numpy.ndarray:
        u, ud = state[3:6], state[6:9]
        return numpy.concatenate(
            (u, ud, solve_acceleration_homogeneous(u, ud, mu, metric, sign)))

    def observe(state: numpy.ndarray):
        u, ud = state[3:6], state[6:9]
        return (conserved_momentum(u, ud, mu, metric, sign),
                metric.dot(u, u))

    state = numpy.concatenate((X, u, ud))
    logger.debug('Integrating the homogeneous equation: h = {}, steps = {}'
                 .format(cfg.h, cfg.steps))
    return _run(cfg, HOMOGENEOUS, state, zeta0, derivative, observe)


def _integrate(cfg: TopConfig, kind: str) -> Trajectory:
    if kind == PARAMETRIC:
        return integrate_parametric(cfg)
    return integrate_homogeneous(cfg)


def integrate_batch(configs: Sequence[TopConfig], kind: str = PARAMETRIC,
                    processes: Optional[int] = None) -> List[Trajectory]:
    """
    Integrate independent trajectories in a process pool.

    ``processes = 1`` integrates in the calling process.
    """
    if kind not in (PARAMETRIC, HOMOGENEOUS):
        raise ChartError('Unknown chart kind {!r}'.format(kind))
    if processes == 1 or len(configs) < 2:
        return [_integrate(cfg, kind) for cfg in configs]
    pool = Pool(processes)
    try:
        return pool.starmap(_integrate, ((cfg, kind) for cfg in configs))
    finally:
        pool.close()
        pool.join()


def richardson_ratio(cfg: TopConfig, kind: str = PARAMETRIC,
                     processes: Optional[int] = None) -> float:
    """
    Ratio of the momentum drift at ``h`` to the drift at ``h / 2``.

    Both runs cover the same parameter span. A fourth-order method gives a
    ratio near 16 while truncation error dominates round-off.
    """
    coarse, fine = integrate_batch(
        [cfg, cfg.with_step(cfg.h / 2, cfg.steps * 2)], kind, processes)
    if coarse.halted or fine.halted:
        raise AdmissibilityError('Richardson runs left the admissible region')
    fine_drift = fine.max_momentum_drift()
    if fine_drift == 0:
        raise SingularityError('Momentum drift vanished at the finer step')
    return coarse.max_momentum_drift() / fine_drift


def _hermite(params: numpy.ndarray, values: numpy.ndarray,
             slopes: numpy.ndarray, at: numpy.ndarray) -> numpy.ndarray:
    index = numpy.clip(numpy.searchsorted(params, at) - 1, 0,
                       len(params) - 2)
    left, right = params[index], params[index + 1]
    width = (right - left)[:, None]
    s = ((at - left) / (right - left))[:, None]
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return (h00 * values[index] + h10 * width * slopes[index] +
            h01 * values[index + 1] + h11 * width * slopes[index + 1])


def compare_trajectories(parametric: Trajectory,
                         homogeneous: Trajectory) -> float:
    """
    Largest deviation between a parametric path and a projected one.

    Homogeneous samples are projected to ``(t, x, v)`` and compared with the
    parametric path, cubic-Hermite interpolated at the same ``t``. Samples
    outside the parametric span are ignored.
    """
    if parametric.kind != PARAMETRIC or homogeneous.kind != HOMOGENEOUS:
        raise ChartError('Expected a parametric and a homogeneous trajectory')
    if len(parametric) < 2:
        raise BindingError('The parametric trajectory needs two samples')
    u0 = homogeneous.velocities[:, 0]
    if numpy.any(u0 <= 0):
        raise AdmissibilityError('Projection needs u0 > 0 along the run')
    times = homogeneous.positions[:, 0]
    inside = ((times >= parametric.params[0]) &
              (times <= parametric.params[-1]))
    times = times[inside]
    projected_x = homogeneous.positions[inside, 1:]
    projected_v = homogeneous.velocities[inside, 1:] / u0[inside, None]
    x = _hermite(parametric.params, parametric.positions,
                 parametric.velocities, times)
    v = _hermite(parametric.params, parametric.velocities,
                 parametric.accelerations, times)
    return float(max(numpy.max(numpy.abs(x - projected_x), initial=0.0),
                     numpy.max(numpy.abs(v - projected_v), initial=0.0)))


def write_trajectory_csv(trajectory: Trajectory, path: str) -> None:
    """Write a trajectory as CSV with a header row."""
    numpy.savetxt(path, trajectory.table(), delimiter=',', fmt='%.17g',
                  header=','.join(trajectory.columns()), comments='')
