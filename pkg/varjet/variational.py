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
Euler-Poisson expressions, Helmholtz criteria and Zermelo conditions.

The sign convention is ``E_i = sum_k (-1)^k D^k dL/dv^i_(k-1)`` everywhere.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy

from varjet.errors import ChartError, OrderError
from varjet.expr import (Combination, Evaluator, Expr, ZERO, as_expr,
                         coordinate, iterated_total_derivative, max_order,
                         partial, total_derivative)
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             JetPoint, POSITION_RANK)


logger = logging.getLogger(__name__)


def _binomial(n: int, k: int) -> int:
    result = 1
    for step in range(1, k + 1):
        result = result * (n - k + step) // step
    return result


def _check_chart(exprs: Sequence[Expr], chart: JetChart) -> None:
    for e in exprs:
        for coord in e.coords:
            if not chart.contains(coord):
                raise ChartError('{} is not a coordinate of the {} chart with '
                                 'n = {} and order {}'.format(
                                     coord.name, chart.kind, chart.n,
                                     chart.order))


@dataclass(frozen=True)
class LagrangianDef:
    """
    A Lagrange function of a given order.

    Parameters
    ----------
    expr : Expr
        The Lagrangian.
    chart : JetChart
        The chart it lives in; ``chart.order`` is the Lagrangian's order.
    """
    expr: Expr
    chart: JetChart

    def __post_init__(self):
        _check_chart((self.expr,), self.chart)

    @classmethod
    def of(cls, expr: Expr, kind: str, n: int,
           order: Optional[int] = None) -> 'LagrangianDef':
        """Wrap ``expr``, using its highest referenced order by default."""
        expr = as_expr(expr)
        if order is None:
            order = max_order(expr)
        return cls(expr, JetChart(kind, n, order))

    @property
    def order(self) -> int:
        return self.chart.order


@dataclass(frozen=True)
class DynamicalForm:
    """
    The components ``E_i`` of a dynamical form.

    Parameters
    ----------
    components : tuple
        One ``Expr`` per chart index.
    chart : JetChart
        The chart; ``chart.order`` must equal the highest order referenced.
    """
    components: Tuple[Expr, ...]
    chart: JetChart

    def __post_init__(self):
        components = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, 'components', components)
        if len(components) != self.chart.dim:
            raise ChartError('A form on a chart with {} indices needs {} '
                             'components, got {}'.format(
                                 self.chart.dim, self.chart.dim,
                                 len(components)))
        _check_chart(components, self.chart)
        referenced = max((max_order(c) for c in components), default=0)
        if referenced != self.chart.order:
            raise OrderError('Form declared with order {} references order {}'
                             .format(self.chart.order, referenced))

    @classmethod
    def of(cls, components: Sequence[Expr], kind: str,
           n: int) -> 'DynamicalForm':
        """Wrap ``components``, reading the order off the trees."""
        components = tuple(as_expr(c) for c in components)
        order = max((max_order(c) for c in components), default=0)
        return cls(components, JetChart(kind, n, order))

    @property
    def order(self) -> int:
        return self.chart.order

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, index: int) -> Expr:
        """Component by chart index (``1..n`` or ``0..n``)."""
        return self.components[self.chart.indices.index(index)]

    def evaluate(self, point: JetPoint,
                 constants: Optional[Mapping[str, float]] = None
                 ) -> numpy.ndarray:
        return Evaluator(point, constants).many(self.components)


class Residuals(NamedTuple):
    """Residual values together with the largest term magnitudes."""
    values: numpy.ndarray
    scales: numpy.ndarray

    @property
    def relative(self) -> numpy.ndarray:
        return numpy.abs(self.values) / numpy.maximum(1.0, self.scales)

    def max_abs(self) -> float:
        return float(numpy.max(numpy.abs(self.values), initial=0.0))

    def max_relative(self) -> float:
        return float(numpy.max(self.relative, initial=0.0))


def evaluate_combinations(combinations, point: JetPoint,
                          constants: Optional[Mapping[str, float]] = None
                          ) -> Residuals:
    """
    Evaluate a nested list of ``Combination`` objects at one point.

    Returns
    -------
    Residuals
        Arrays shaped like the nested input.
    """
    evaluator = Evaluator(point, constants)

    def walk(item):
        if isinstance(item, Combination):
            return item.evaluate(evaluator)
        return [walk(child) for child in item]

    pairs = numpy.array(walk(combinations), dtype=float)
    if pairs.size == 0:
        shape = numpy.shape(combinations)
        return Residuals(numpy.zeros(shape), numpy.zeros(shape))
    return Residuals(pairs[..., 0], pairs[..., 1])


def euler_poisson(lagrangian: LagrangianDef) -> DynamicalForm:
    """
    Euler-Poisson expressions of a Lagrangian.

    ``E_i = sum_{k=0}^{K} (-1)^k D^k dL/dv^i_(k-1)`` where ``v_(-1)`` is the
    position and ``K`` the Lagrangian's order. Works on parametric and on
    homogeneous charts.

    Parameters
    ----------
    lagrangian : LagrangianDef
        The Lagrangian to vary.

    Returns
    -------
    DynamicalForm
        A form of order at most twice the Lagrangian's order.
    """
    chart = lagrangian.chart
    components = []
    for index in chart.indices:
        total = ZERO
        for k in range(chart.order + 1):
            term = partial(lagrangian.expr,
                           Coord(chart.kind, index, k + POSITION_RANK))
            term = iterated_total_derivative(term, k, chart.kind)
            total = total + term if k % 2 == 0 else total - term
        components.append(total)
    return DynamicalForm.of(components, chart.kind, chart.n)


def _point_order_check(form: DynamicalForm, point: JetPoint) -> None:
    needed = 2 * form.order
    if point.order < needed:
        raise OrderError('Helmholtz residuals of an order-{} form need a '
                         'point of order {}, got {}'.format(
                             form.order, needed, point.order))
    if point.chart.kind != form.chart.kind:
        raise ChartError('A {} form cannot be checked at a {} point'
                         .format(form.chart.kind, point.chart.kind))


def _form_partials(form: DynamicalForm, a: int, b: int, rank: int) -> Expr:
    return partial(form[a], Coord(form.chart.kind, b, rank))


@lru_cache(maxsize=64)
def helmholtz_terms(form: DynamicalForm) -> List[List[List[Combination]]]:
    """
    The criterion tensor as combinations, indexed ``[r][i][j]``.

    ``R[r][i][j] = dE_i/dv^j_(r-1) - sum_{k=r}^{s} (-1)^k C(k, r)
    D^{k-r} dE_j/dv^i_(k-1)`` for ``r = 0..s``.
    """
    chart = form.chart
    s = form.order
    kind = chart.kind
    blocks = []
    logger.debug('Building criterion terms for an order-{} form on {} '
                 'indices'.format(s, chart.dim))
    for r in range(s + 1):
        rows = []
        for i in chart.indices:
            row = []
            for j in chart.indices:
                combination = Combination.of(
                    _form_partials(form, i, j, r + POSITION_RANK))
                for k in range(r, s + 1):
                    term = iterated_total_derivative(
                        _form_partials(form, j, i, k + POSITION_RANK),
                        k - r, kind)
                    combination = combination + Combination.of(
                        term, -(-1) ** k * _binomial(k, r))
                row.append(combination)
            rows.append(row)
        blocks.append(rows)
    return blocks


@lru_cache(maxsize=64)
def helmholtz_split_terms(form: DynamicalForm):
    """
    The two-part criterion as combinations.

    Returns the antisymmetric block
    ``dE_i/dx^j - dE_j/dx^i + sum_{k=0}^{s} (-1)^k D^k (dE_i/dv^j_(k-1) -
    dE_j/dv^i_(k-1))`` and the blocks ``r = 1..s``.
    """
    chart = form.chart
    s = form.order
    kind = chart.kind
    antisymmetric = []
    for i in chart.indices:
        row = []
        for j in chart.indices:
            combination = (
                Combination.of(_form_partials(form, i, j, POSITION_RANK)) -
                Combination.of(_form_partials(form, j, i, POSITION_RANK)))
            for k in range(s + 1):
                sign = (-1) ** k
                rank = k + POSITION_RANK
                combination = combination + Combination((
                    (sign, iterated_total_derivative(
                        _form_partials(form, i, j, rank), k, kind)),
                    (-sign, iterated_total_derivative(
                        _form_partials(form, j, i, rank), k, kind))))
            row.append(combination)
        antisymmetric.append(row)
    return antisymmetric, helmholtz_terms(form)[1:]


def helmholtz_residuals(form: DynamicalForm, point: JetPoint,
                        constants: Optional[Mapping[str, float]] = None
                        ) -> Residuals:
    """
    Evaluate the variationality criterion at a point.

    Parameters
    ----------
    form : DynamicalForm
        The form of order ``s`` to test.
    point : JetPoint
        A point of order at least ``2 s``.
    constants : dict (optional)
        Values of named constants.

    Returns
    -------
    Residuals
        Values shaped ``(s + 1, n, n)``; all vanish for a variational form.

    Raises
    ------
    OrderError
        Raises an ``OrderError`` when the point is too short.
    """
    _point_order_check(form, point)
    return evaluate_combinations(helmholtz_terms(form), point, constants)


def helmholtz_residuals_split(form: DynamicalForm, point: JetPoint,
                              constants: Optional[Mapping[str, float]] = None
                              ) -> Tuple[Residuals, Residuals]:
    """
    Evaluate the antisymmetric block and the higher blocks separately.

    Returns
    -------
    tuple
        The ``(n, n)`` antisymmetric residuals and the ``(s, n, n)`` residuals
        of the blocks ``r = 1..s``.
    """
    _point_order_check(form, point)
    antisymmetric, blocks = helmholtz_split_terms(form)
    first = evaluate_combinations(antisymmetric, point, constants)
    if blocks:
        rest = evaluate_combinations(blocks, point, constants)
    else:
        dim = form.chart.dim
        rest = Residuals(numpy.zeros((0, dim, dim)),
                         numpy.zeros((0, dim, dim)))
    return first, rest


@lru_cache(maxsize=64)
def zermelo_expressions(lagrangian: LagrangianDef) -> Tuple[Expr, Expr]:
    """
    The Zermelo expressions of a homogeneous Lagrangian.

    ``Z1 = u.dL/du + 2 u'.dL/du' - L`` and ``Z2 = u.dL/du'``.

    Raises
    ------
    ChartError
        Raises a ``ChartError`` for a parametric Lagrangian.
    OrderError
        Raises an ``OrderError`` above order 2.
    """
    chart = lagrangian.chart
    if chart.kind != HOMOGENEOUS:
        raise ChartError('Zermelo conditions apply to homogeneous '
                         'Lagrangians, got a {} one'.format(chart.kind))
    if chart.order > 2:
        raise OrderError('Zermelo conditions are defined up to order 2, got '
                         '{}'.format(chart.order))
    expr = lagrangian.expr
    first = -expr
    second = ZERO
    for index in chart.indices:
        velocity = Coord(HOMOGENEOUS, index, 0)
        acceleration = Coord(HOMOGENEOUS, index, 1)
        first = first + coordinate(velocity) * partial(expr, velocity)
        if chart.order == 2:
            by_acceleration = partial(expr, acceleration)
            first = first + 2 * coordinate(acceleration) * by_acceleration
            second = second + coordinate(velocity) * by_acceleration
    return first, second


def zermelo_residuals(lagrangian: LagrangianDef, point: JetPoint,
                      constants: Optional[Mapping[str, float]] = None
                      ) -> Tuple[float, float]:
    """Evaluate ``(Z1, Z2)`` at a homogeneous point."""
    first, second = zermelo_expressions(lagrangian)
    evaluator = Evaluator(point, constants)
    return evaluator(first), evaluator(second)


def generalized_momentum(lagrangian: LagrangianDef) -> Tuple[Expr, ...]:
    """
    The momentum covector of a Lagrangian of order at most 2.

    ``p_a = dL/dv^a - D dL/dv'^a``.
    """
    chart = lagrangian.chart
    if chart.order > 2:
        raise OrderError('Momentum is defined for Lagrangians up to order 2, '
                         'got {}'.format(chart.order))
    expr = lagrangian.expr
    components = []
    for index in chart.indices:
        momentum = partial(expr, Coord(chart.kind, index, 0))
        if chart.order == 2:
            momentum = momentum - total_derivative(
                partial(expr, Coord(chart.kind, index, 1)), chart.kind)
        components.append(momentum)
    return tuple(components)


def random_polynomial_lagrangian(n: int, order: int, seed, terms: int = 4,
                                 degree: int = 3,
                                 affine: bool = False) -> LagrangianDef:
    """
    Draw a parametric polynomial Lagrangian.

    Every monomial multiplies up to ``degree`` coordinates of ranks ``-1``
    through ``order - 1`` with a coefficient in ``[-1, 1]``. With
    ``affine = True`` a monomial holds at most one factor of rank 1, so the
    Lagrangian is affine in ``v'``. The top rank always occurs, so the
    Lagrangian has exactly the requested order.
    """
    if order not in (1, 2):
        raise OrderError('Random Lagrangians have order 1 or 2, got {}'
                         .format(order))
    rng = numpy.random.default_rng(seed)
    chart = JetChart(PARAMETRIC, n, order)
    lower = [Coord(PARAMETRIC, index, rank) for rank in range(-1, order - 1)
             for index in chart.indices]
    top = [Coord(PARAMETRIC, index, order - 1) for index in chart.indices]
    expr = ZERO
    for number in range(terms):
        factors = [top[rng.integers(len(top))]] if number == 0 else []
        for _ in range(rng.integers(1, degree + 1) - len(factors)):
            saturated = affine and any(f.rank == 1 for f in factors)
            pool = lower if saturated else lower + top
            factors.append(pool[rng.integers(len(pool))])
        term = as_expr(round(float(rng.uniform(-1.0, 1.0)), 6))
        for factor in factors:
            term = term * coordinate(factor)
        expr = expr + term
    return LagrangianDef(expr, chart)
