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
Conversion between parametric and homogeneous descriptions.

A homogeneous point ``(zeta, X, u, u', u'')`` projects to the parametric
point with ``t = X0`` and ``x = (X1..Xn)``, the velocities following from the
chain rule with ``dt/dzeta = u0``.
"""
from functools import lru_cache
from typing import Dict, Mapping, Optional

import numpy

from varjet.errors import ChartError, OrderError, ProjectionError
from varjet.expr import Evaluator, Expr, ZERO, coordinate, power, substitute
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             JetPoint)
from varjet.variational import DynamicalForm, LagrangianDef


MAX_PROJECTION_ORDER = 3
MAX_LIFT_ORDER = 2


def _check_homogeneous(point: JetPoint) -> None:
    if point.chart.kind != HOMOGENEOUS:
        raise ChartError('Expected a homogeneous point, got a {} one'
                         .format(point.chart.kind))


def project_jet(point: JetPoint, order: Optional[int] = None) -> JetPoint:
    """
    Project a homogeneous jet to the parametric chart.

    ``v = u / u0``, ``v' = (u0 u' - u0' u) / u0^3`` and
    ``v'' = (u0^2 u'' - 3 u0 u0' u' + (3 u0'^2 - u0 u0'') u) / u0^5``.

    Parameters
    ----------
    point : JetPoint
        A homogeneous point.
    order : int (optional)
        The order of the returned point, at most 3. Defaults to the point's
        order capped at 3.

    Returns
    -------
    JetPoint
        The parametric point of the requested order.

    Raises
    ------
    ProjectionError
        Raises a ``ProjectionError`` when ``u0 = 0``.
    OrderError
        Raises an ``OrderError`` above order 3 or beyond the point's order.
    """
    _check_homogeneous(point)
    if order is None:
        order = min(point.order, MAX_PROJECTION_ORDER)
    if order > MAX_PROJECTION_ORDER:
        raise OrderError('Projection is available up to order {}, requested '
                         '{}'.format(MAX_PROJECTION_ORDER, order))
    if order > point.order:
        raise OrderError('Cannot project a point of order {} to order {}'
                         .format(point.order, order))
    chart = JetChart(PARAMETRIC, point.chart.n, order)
    positions = point.vector(-1)
    vectors = [positions[1:]]
    if order >= 1:
        u = point.vector(0)
        dt = u[0]
        if dt == 0:
            raise ProjectionError('Projection is singular where u0 = 0')
        vectors.append(u[1:] / dt)
    if order >= 2:
        du = point.vector(1)
        ddt = du[0]
        vectors.append((dt * du[1:] - ddt * u[1:]) / dt ** 3)
    if order >= 3:
        dddu = point.vector(2)
        dddt = dddu[0]
        vectors.append((dt ** 2 * dddu[1:] - 3 * dt * ddt * du[1:] +
                        (3 * ddt ** 2 - dt * dddt) * u[1:]) / dt ** 5)
    return JetPoint.from_vectors(chart, positions[0], vectors)


@lru_cache(maxsize=32)
def projection_bindings(n: int, order: int) -> Dict[Coord, Expr]:
    """
    Parametric coordinates written as homogeneous expressions.

    The bindings realize the projection formulas of ``project_jet`` on
    expression trees, so a parametric expression composed with them becomes
    a homogeneous one.
    """
    if order > MAX_PROJECTION_ORDER:
        raise OrderError('Projection is available up to order {}, requested '
                         '{}'.format(MAX_PROJECTION_ORDER, order))

    def h(index: int, rank: int) -> Expr:
        return coordinate(Coord(HOMOGENEOUS, index, rank))

    bindings = {Coord(PARAMETRIC, 0, -2): h(0, -1)}
    dt = h(0, 0)
    for index in range(1, n + 1):
        bindings[Coord(PARAMETRIC, index, -1)] = h(index, -1)
        if order >= 1:
            bindings[Coord(PARAMETRIC, index, 0)] = h(index, 0) / dt
        if order >= 2:
            bindings[Coord(PARAMETRIC, index, 1)] = (
                (dt * h(index, 1) - h(0, 1) * h(index, 0)) / power(dt, 3))
        if order >= 3:
            bindings[Coord(PARAMETRIC, index, 2)] = (
                (power(dt, 2) * h(index, 2) -
                 3 * dt * h(0, 1) * h(index, 1) +
                 (3 * power(h(0, 1), 2) - dt * h(0, 2)) * h(index, 0)) /
                power(dt, 5))
    return bindings


def lift_lagrangian(lagrangian: LagrangianDef) -> LagrangianDef:
    """
    Lift a parametric Lagrangian to the homogeneous chart.

    The lift is ``(L composed with the projection) * u0``; it never depends
    on ``zeta``.

    Raises
    ------
    OrderError
        Raises an ``OrderError`` above order 2.
    """
    chart = lagrangian.chart
    if chart.kind != PARAMETRIC:
        raise ChartError('Only parametric Lagrangians can be lifted')
    if chart.order > MAX_LIFT_ORDER:
        raise OrderError('Lagrangians can be lifted up to order {}, got {}'
                         .format(MAX_LIFT_ORDER, chart.order))
    target = JetChart(HOMOGENEOUS, chart.n, max(chart.order, 1))
    composed = substitute(lagrangian.expr,
                          projection_bindings(chart.n, chart.order), target)
    lifted = composed * coordinate(Coord(HOMOGENEOUS, 0, 0))
    return LagrangianDef.of(lifted, HOMOGENEOUS, chart.n)


def lift_form(form: DynamicalForm) -> DynamicalForm:
    """
    Lift a parametric form to homogeneous components as trees.

    ``E_0 = -u^i (E_i o p)`` and ``E_i = u0 (E_i o p)``.
    """
    chart = form.chart
    if chart.kind != PARAMETRIC:
        raise ChartError('Only parametric forms can be lifted')
    if chart.order > MAX_PROJECTION_ORDER:
        raise OrderError('Forms can be lifted up to order {}, got {}'
                         .format(MAX_PROJECTION_ORDER, chart.order))
    bindings = projection_bindings(chart.n, chart.order)
    target = JetChart(HOMOGENEOUS, chart.n, max(chart.order, 1))
    composed = [substitute(component, bindings, target)
                for component in form.components]
    dt = coordinate(Coord(HOMOGENEOUS, 0, 0))
    first = ZERO
    for index, component in zip(chart.indices, composed):
        first = first - coordinate(Coord(HOMOGENEOUS, index, 0)) * component
    return DynamicalForm.of([first] + [dt * c for c in composed],
                            HOMOGENEOUS, chart.n)


def lift_equation(form: DynamicalForm, point: JetPoint,
                  constants: Optional[Mapping[str, float]] = None
                  ) -> numpy.ndarray:
    """
    Values of the homogeneous counterpart of a parametric form.

    Parameters
    ----------
    form : DynamicalForm
        A parametric form of order at most 3.
    point : JetPoint
        A homogeneous point of at least the form's order.
    constants : dict (optional)
        Values of named constants.

    Returns
    -------
    numpy.ndarray
        ``(E_0, E_1, ..., E_n)`` with ``E_0 = -u^i E_i`` and
        ``E_i = u0 E_i``, so the contraction with ``u`` vanishes.

    Raises
    ------
    ProjectionError
        Raises a ``ProjectionError`` when ``u0 = 0``.
    """
    _check_homogeneous(point)
    if form.chart.kind != PARAMETRIC:
        raise ChartError('Only parametric forms can be lifted')
    projected = project_jet(point, max(form.order, 1))
    values = Evaluator(projected, constants).many(form.components)
    u = point.vector(0)
    return numpy.concatenate(([-numpy.dot(u[1:], values)], u[0] * values))


def permute_point(point: JetPoint, shift: int) -> JetPoint:
    """
    Cyclically permute the axes of a homogeneous point.

    The returned point carries at axis ``a`` what ``point`` carries at axis
    ``(a + shift) mod (n + 1)``.
    """
    _check_homogeneous(point)
    dim = point.chart.dim
    vectors = [numpy.roll(vector, -(shift % dim))
               for vector in point.vectors()]
    return JetPoint.from_vectors(point.chart, point.t_value, vectors)
