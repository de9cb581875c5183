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
Poincare generators and invariance residuals of third-order systems.

A third-order system with coefficients ``A`` and ``k`` is invariant under a
generator ``X`` when the Lie derivative of its Lepagean form
``A_ij dw^j + k_i dt`` is a combination of the form itself and of the
contact forms ``dx - v dt`` and ``dv - w dt``::

    X(A dw + k dt) = Phi (A dw + k dt) + Xi (dx - v dt) + Pi (dv - w dt)

Comparing the ``dw``, ``dv``, ``dx`` and ``dt`` coefficients gives four
blocks of equations that are linear in ``Phi``, ``Xi`` and ``Pi``.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy
from numpy.random import default_rng

from varjet.errors import ChartError, GeneratorError, SingularityError
from varjet.expr import (DiffOperator, Evaluator, Expr, ZERO, as_expr,
                         coordinate, literal, partial)
from varjet.jet_core import (DEFAULT_SEED, PARAMETRIC, Coord, JetPoint,
                             Metric)
from varjet.normal_forms import Shape3


logger = logging.getLogger(__name__)

SINGULAR_DETERMINANT = 1e-14
NOGO_FLOOR = 1e-6

APPENDIX_RESIDUALS = ('rotation_1', 'rotation_2', 'boost_11', 'boost_22',
                      'boost_21', 'boost_12', 'f_equation')


def _coord(index: int, rank: int) -> Coord:
    return Coord(PARAMETRIC, index, rank)


def _symbols(n: int, rank: int):
    return [coordinate(_coord(index, rank)) for index in range(1, n + 1)]


def _dot(weights, symbols) -> Expr:
    total = ZERO
    for weight, symbol in zip(weights, symbols):
        total = total + literal(float(weight)) * symbol
    return total


@dataclass(frozen=True, eq=False)
class Generator:
    """
    An infinitesimal Poincare transformation, prolonged to ``(t, x, v, w)``.

    With dot products taken in the spatial block of ``metric`` and
    ``g00 = metric.signature[0]``::

        xi_t  = a_0 - pi.x
        xi_x  = a_x + g00 t pi + Omega x
        eta_v = g00 pi + (pi.v) v + Omega v
        eta_w = 2 (pi.v) w + (pi.w) v + Omega w

    Parameters
    ----------
    omega : numpy.ndarray
        A skew ``n x n`` rotation matrix.
    pi : numpy.ndarray
        The ``n`` boost parameters.
    metric : Metric
        A metric of dimension ``n + 1``.
    translation : numpy.ndarray (optional)
        The ``n + 1`` translation parameters ``(a_0, a_x)``.
    """
    omega: numpy.ndarray
    pi: numpy.ndarray
    metric: Metric = field(default_factory=Metric)
    translation: Optional[numpy.ndarray] = None

    @property
    def n(self) -> int:
        return len(self.pi)

    @property
    def pi_lowered(self) -> numpy.ndarray:
        return self.metric.spatial().lower(self.pi)

    def coefficients(self) -> Dict[Coord, Expr]:
        n = self.n
        g00 = float(self.metric.signature[0])
        t = coordinate(_coord(0, -2))
        x, v, w = _symbols(n, -1), _symbols(n, 0), _symbols(n, 1)
        pi_v = _dot(self.pi_lowered, v)
        pi_w = _dot(self.pi_lowered, w)
        translation = (numpy.zeros(n + 1) if self.translation is None
                       else self.translation)
        result = {_coord(0, -2): literal(float(translation[0])) -
                  _dot(self.pi_lowered, x)}
        for p in range(n):
            index = p + 1
            result[_coord(index, -1)] = (
                literal(float(translation[index])) +
                literal(g00 * float(self.pi[p])) * t +
                _dot(self.omega[p], x))
            result[_coord(index, 0)] = (
                literal(g00 * float(self.pi[p])) + pi_v * v[p] +
                _dot(self.omega[p], v))
            result[_coord(index, 1)] = (
                2 * pi_v * w[p] + pi_w * v[p] + _dot(self.omega[p], w))
        return result

    @property
    def operator(self) -> DiffOperator:
        return DiffOperator(self.coefficients())

    def __call__(self, e: Expr) -> Expr:
        return self.operator(e)

    def __add__(self, other: 'Generator') -> 'Generator':
        translations = [numpy.zeros(self.n + 1) if g.translation is None
                        else g.translation for g in (self, other)]
        return Generator(self.omega + other.omega, self.pi + other.pi,
                         self.metric, translations[0] + translations[1])


def lorentz_generator(omega: Sequence[Sequence[float]], pi: Sequence[float],
                      metric: Optional[Metric] = None,
                      translation: Optional[Sequence[float]] = None
                      ) -> Generator:
    """
    Build a Poincare generator.

    Raises
    ------
    GeneratorError
        Raises a ``GeneratorError`` when ``omega`` is not skew or the shapes
        do not match the metric.
    """
    metric = metric or Metric()
    omega = numpy.asarray(omega, dtype=float)
    pi = numpy.asarray(pi, dtype=float)
    n = metric.dim - 1
    if omega.shape != (n, n) or pi.shape != (n,):
        raise GeneratorError('A metric of dimension {} needs a {}x{} rotation '
                             'and {} boost parameters'.format(metric.dim, n,
                                                              n, n))
    if not numpy.allclose(omega, -omega.T, rtol=0.0, atol=1e-12):
        raise GeneratorError('The rotation matrix must be skew')
    if translation is not None:
        translation = numpy.asarray(translation, dtype=float)
        if translation.shape != (n + 1,):
            raise GeneratorError('Expected {} translation parameters'
                                 .format(n + 1))
    return Generator(omega, pi, metric, translation)


def sample_generator(metric: Metric, seed, scale: float = 1.0) -> Generator:
    """Draw a generator with entries uniform in ``[-scale, scale]``."""
    n = metric.dim - 1
    rng = default_rng(seed)
    upper = numpy.triu(rng.uniform(-scale, scale, (n, n)), 1)
    pi = rng.uniform(-scale, scale, n)
    return lorentz_generator(upper - upper.T, pi, metric)


class InvarianceBlocks(NamedTuple):
    """Left-hand sides of the invariance equations at one point."""
    A: numpy.ndarray
    k: numpy.ndarray
    v: numpy.ndarray
    w: numpy.ndarray
    dw: numpy.ndarray
    dv: numpy.ndarray
    dx: numpy.ndarray
    dt: numpy.ndarray


class _InvarianceTerms(NamedTuple):
    A: List[List[Expr]]
    k: List[Expr]
    X_A: List[List[Expr]]
    X_k: List[Expr]
    jacobians: Dict[int, List[List[Expr]]]
    gradients: Dict[int, List[Expr]]
    dt_eta: List[Expr]
    dt_xi: Expr


def _invariance_terms(A: Sequence[Sequence[Expr]], k: Sequence[Expr],
                      generator: Generator) -> _InvarianceTerms:
    n = generator.n
    coefficients = generator.coefficients()
    operator = DiffOperator(coefficients)
    A = [[as_expr(e) for e in row] for row in A]
    k = [as_expr(e) for e in k]
    xi_t = coefficients[_coord(0, -2)]
    eta_w = [coefficients[_coord(index, 1)] for index in range(1, n + 1)]
    ranks = (1, 0, -1)
    return _InvarianceTerms(
        A=A, k=k,
        X_A=[[operator(e) for e in row] for row in A],
        X_k=[operator(e) for e in k],
        jacobians={rank: [[partial(e, _coord(index, rank))
                           for index in range(1, n + 1)] for e in eta_w]
                   for rank in ranks},
        gradients={rank: [partial(xi_t, _coord(index, rank))
                          for index in range(1, n + 1)] for rank in ranks},
        dt_eta=[partial(e, _coord(0, -2)) for e in eta_w],
        dt_xi=partial(xi_t, _coord(0, -2)))


def _evaluate_terms(terms: _InvarianceTerms, point: JetPoint,
                    constants: Optional[Mapping[str, float]]
                    ) -> InvarianceBlocks:
    n = len(terms.k)
    if point.chart.kind != PARAMETRIC or point.chart.n != n:
        raise ChartError('Invariance is checked at parametric points with '
                         '{} components'.format(n))
    if point.order < 2:
        raise ChartError('Invariance residuals need a point of order 2')
    evaluator = Evaluator(point, constants)

    def matrix(rows) -> numpy.ndarray:
        return numpy.array([evaluator.many(row) for row in rows])

    A = matrix(terms.A)
    k = evaluator.many(terms.k)
    jacobian = {rank: matrix(rows) for rank, rows in terms.jacobians.items()}
    gradient = {rank: evaluator.many(row)
                for rank, row in terms.gradients.items()}
    return InvarianceBlocks(
        A=A, k=k, v=point.vector(0), w=point.vector(1),
        dw=matrix(terms.X_A) + A @ jacobian[1] + numpy.outer(k, gradient[1]),
        dv=A @ jacobian[0] + numpy.outer(k, gradient[0]),
        dx=A @ jacobian[-1] + numpy.outer(k, gradient[-1]),
        dt=(evaluator.many(terms.X_k) + A @ evaluator.many(terms.dt_eta) +
            k * evaluator(terms.dt_xi)))


def invariance_blocks(A: Sequence[Sequence[Expr]], k: Sequence[Expr],
                      generator: Generator, point: JetPoint,
                      constants: Optional[Mapping[str, float]] = None
                      ) -> InvarianceBlocks:
    """
    Evaluate the Lie derivative of ``A dw + k dt`` along ``generator``.

    Returns
    -------
    InvarianceBlocks
        The ``dw``, ``dv`` and ``dx`` coefficients as ``n x n`` matrices and
        the ``dt`` coefficient as an ``n``-vector, next to the values of
        ``A``, ``k``, ``v`` and ``w``.
    """
    if len(k) != generator.n:
        raise ChartError('A generator with {} components cannot act on a '
                         'system with {}'.format(generator.n, len(k)))
    return _evaluate_terms(_invariance_terms(A, k, generator), point,
                           constants)


@dataclass
class SymmetryResidual:
    """
    Solved multipliers and the remaining defect at one point.

    Attributes
    ----------
    point : JetPoint
        The point of evaluation.
    phi, xi, pi : numpy.ndarray
        The multipliers of the form and of the two contact forms.
    residual : numpy.ndarray
        The unexplained part of the equations.
    """
    point: JetPoint
    phi: numpy.ndarray
    xi: numpy.ndarray
    pi: numpy.ndarray
    residual: numpy.ndarray

    def max_abs(self) -> float:
        return float(numpy.max(numpy.abs(self.residual), initial=0.0))

    @property
    def defect(self) -> float:
        return float(numpy.linalg.norm(self.residual))


def _exact2d_from_blocks(point: JetPoint,
                         blocks: InvarianceBlocks) -> SymmetryResidual:
    if abs(numpy.linalg.det(blocks.A)) <= SINGULAR_DETERMINANT:
        raise SingularityError('A is singular at the point')
    phi = blocks.dw @ numpy.linalg.inv(blocks.A)
    residual = (phi @ blocks.k - blocks.dx @ blocks.v - blocks.dv @ blocks.w -
                blocks.dt)
    return SymmetryResidual(point, phi, blocks.dx, blocks.dv, residual)


def _lsq_from_blocks(point: JetPoint,
                     blocks: InvarianceBlocks) -> SymmetryResidual:
    n = len(blocks.k)
    identity = numpy.eye(n)
    size = n * n
    zero = numpy.zeros((size, size))
    system = numpy.block([
        [numpy.kron(identity, blocks.A.T), zero, zero],
        [zero, numpy.eye(size), zero],
        [zero, zero, numpy.eye(size)],
        [numpy.kron(identity, blocks.k[None, :]),
         -numpy.kron(identity, blocks.v[None, :]),
         -numpy.kron(identity, blocks.w[None, :])]])
    rhs = numpy.concatenate((blocks.dw.ravel(), blocks.dx.ravel(),
                             blocks.dv.ravel(), blocks.dt))
    solution, _, rank, _ = numpy.linalg.lstsq(system, rhs, rcond=None)
    if rank < system.shape[1]:
        logger.debug('Invariance system is rank deficient ({} of {})'
                     .format(rank, system.shape[1]))
    phi, xi, pi = (solution[:size].reshape(n, n),
                   solution[size:2 * size].reshape(n, n),
                   solution[2 * size:].reshape(n, n))
    return SymmetryResidual(point, phi, xi, pi, system @ solution - rhs)


def symmetry_residual_exact2d(shape: Shape3, generator: Generator,
                              point: JetPoint,
                              constants: Optional[Mapping[str, float]] = None
                              ) -> SymmetryResidual:
    """
    Solve the invariance equations of a planar third-order system.

    ``Phi`` follows from the ``dw`` block through ``A^-1``, ``Pi`` and ``Xi``
    are read off the ``dv`` and ``dx`` blocks and the residual is
    ``Phi k - Xi v - Pi w - dt``.

    Raises
    ------
    SingularityError
        Raises a ``SingularityError`` when ``A`` vanishes at the point.
    """
    if shape.n != 2:
        raise ChartError('The exact solve is defined for planar systems, got '
                         'n = {}'.format(shape.n))
    blocks = invariance_blocks(shape.A, shape.k(), generator, point,
                               constants)
    return _exact2d_from_blocks(point, blocks)


def symmetry_residual_lsq(A: Sequence[Sequence[Expr]], k: Sequence[Expr],
                          generator: Generator, point: JetPoint,
                          constants: Optional[Mapping[str, float]] = None
                          ) -> SymmetryResidual:
    """
    Least-squares solve of the invariance equations for any ``n``.

    The unknowns ``Phi``, ``Xi`` and ``Pi`` are stacked row-major and the
    four coefficient blocks are solved together with
    ``numpy.linalg.lstsq``. The residual is the stacked misfit of all four
    blocks, whose norm is the defect.
    """
    blocks = invariance_blocks(A, k, generator, point, constants)
    return _lsq_from_blocks(point, blocks)


def basis_generators(metric: Metric) -> List[Generator]:
    """
    Unit generators, one per rotation plane ``i < j`` followed by one per
    boost direction.
    """
    n = metric.dim - 1
    basis = []
    for i in range(n):
        for j in range(i + 1, n):
            omega = numpy.zeros((n, n))
            omega[i, j], omega[j, i] = 1.0, -1.0
            basis.append(Generator(omega, numpy.zeros(n), metric))
    for p in range(n):
        pi = numpy.zeros(n)
        pi[p] = 1.0
        basis.append(Generator(numpy.zeros((n, n)), pi, metric))
    return basis


def generator_weights(generator: Generator) -> numpy.ndarray:
    """Coordinates of a translation-free generator in ``basis_generators``."""
    n = generator.n
    rows, cols = numpy.triu_indices(n, 1)
    return numpy.concatenate((generator.omega[rows, cols], generator.pi))


def _combine(basis: Sequence[InvarianceBlocks],
             weights: numpy.ndarray) -> InvarianceBlocks:
    first = basis[0]
    return first._replace(
        dw=sum(c * b.dw for c, b in zip(weights, basis)),
        dv=sum(c * b.dv for c, b in zip(weights, basis)),
        dx=sum(c * b.dx for c, b in zip(weights, basis)),
        dt=sum(c * b.dt for c, b in zip(weights, basis)))


def symmetry_sweep(shape: Shape3, generators: Sequence[Generator],
                   points: Sequence[JetPoint],
                   constants: Optional[Mapping[str, float]] = None,
                   exact: bool = True) -> numpy.ndarray:
    """
    Residuals of many generators at many points.

    The invariance blocks are linear in the generator parameters, so they
    are evaluated once per basis generator and point and then combined.
    Translations are ignored.

    Returns
    -------
    numpy.ndarray
        The ``len(points) x len(generators)`` array of ``max_abs`` values,
        ``nan`` where ``A`` is singular.
    """
    if exact and shape.n != 2:
        raise ChartError('The exact solve is defined for planar systems, got '
                         'n = {}'.format(shape.n))
    if not generators:
        return numpy.zeros((len(points), 0))
    metric = generators[0].metric
    if any(g.n != shape.n for g in generators):
        raise ChartError('Generators must act on {} components'
                         .format(shape.n))
    basis = basis_generators(metric)
    weights = [generator_weights(g) for g in generators]
    k = shape.k()
    solve = _exact2d_from_blocks if exact else _lsq_from_blocks
    terms = [_invariance_terms(shape.A, k, g) for g in basis]
    result = numpy.full((len(points), len(generators)), numpy.nan)
    for i, point in enumerate(points):
        blocks = [_evaluate_terms(t, point, constants) for t in terms]
        for j, weight in enumerate(weights):
            try:
                result[i, j] = solve(point, _combine(blocks, weight)).max_abs()
            except SingularityError:
                logger.debug('Skipping singular point {}'.format(i))
                break
    return result


def _planar_operators():
    v1, v2 = (coordinate(_coord(index, 0)) for index in (1, 2))

    def d1(e):
        return partial(e, _coord(1, 0))

    def d2(e):
        return partial(e, _coord(2, 0))

    def rho(e):
        return v1 * d2(e) - v2 * d1(e)

    def euler(e):
        return v1 * d1(e) + v2 * d2(e)

    return v1, v2, d1, d2, rho, euler


def f_equation_residual(f: Expr, point: JetPoint,
                        constants: Optional[Mapping[str, float]] = None
                        ) -> float:
    """
    Residual of ``(1 - y) f'(y) - f - 3`` for ``f`` given in ``(v1, v2)``.

    ``y = v1^2 + v2^2`` and ``f'(y)`` is taken as the Euler derivative of
    ``f`` divided by ``2 y``.

    Raises
    ------
    SingularityError
        Raises a ``SingularityError`` at ``y = 0``.
    """
    v1, v2, _, _, _, euler = _planar_operators()
    y = v1 * v1 + v2 * v2
    evaluator = Evaluator(point, constants)
    y_value = evaluator(y)
    if y_value == 0:
        raise SingularityError('The f-equation is singular at v = 0')
    slope = evaluator(euler(f)) / (2 * y_value)
    return (1 - y_value) * slope - evaluator(f) - 3.0


def appendix_pde_residuals(a: Expr, point: JetPoint,
                           constants: Optional[Mapping[str, float]] = None
                           ) -> Dict[str, float]:
    """
    Residuals of the equations that single out the scalar of ``A``.

    For a planar system with ``A = a(v) J``, invariance under rotations and
    boosts requires, with ``rho = v1 d2 - v2 d1`` and
    ``E = v1 d1 + v2 d2``::

        rotation_1: rho d1 a + d2 a - (d1 a / a) rho a
        rotation_2: rho d2 a - d1 a - (d2 a / a) rho a
        boost_ii:   (di - vi E) di a - vi di a - E a
                    - (di a / a)(di - vi E) a - 3 a
        boost_ij:   (dj - vj E) di a - vj di a - (di a / a)(dj - vj E) a

    and ``f = E a / a`` must solve ``(1 - y) f'(y) - f - 3 = 0``.

    Parameters
    ----------
    a : Expr
        A parametric expression in ``v1`` and ``v2``.
    point : JetPoint
        A parametric point with ``n = 2``.

    Returns
    -------
    dict
        A ``dict`` mapping each name in ``APPENDIX_RESIDUALS`` to a value.

    Raises
    ------
    SingularityError
        Raises a ``SingularityError`` where ``a = 0``.
    """
    if point.chart.kind != PARAMETRIC or point.chart.n != 2:
        raise ChartError('The planar equations need a parametric point with '
                         'n = 2')
    v1, v2, d1, d2, rho, euler = _planar_operators()
    evaluator = Evaluator(point, constants)
    a_value = evaluator(a)
    if a_value == 0:
        raise SingularityError('a vanishes at the point')
    value = evaluator
    velocity = (v1, v2)
    derivative = (d1, d2)

    def boost(i: int, j: int) -> float:
        d_i, d_j, v_j = derivative[i], derivative[j], velocity[j]
        ratio = value(d_i(a)) / a_value
        result = (value(d_j(d_i(a)) - v_j * euler(d_i(a))) -
                  value(v_j * d_i(a)) -
                  ratio * value(d_j(a) - v_j * euler(a)))
        if i == j:
            result -= value(euler(a)) + 3 * a_value
        return result

    return {
        'rotation_1': (value(rho(d1(a)) + d2(a)) -
                       value(d1(a)) / a_value * value(rho(a))),
        'rotation_2': (value(rho(d2(a)) - d1(a)) -
                       value(d2(a)) / a_value * value(rho(a))),
        'boost_11': boost(0, 0),
        'boost_22': boost(1, 1),
        'boost_21': boost(0, 1),
        'boost_12': boost(1, 0),
        'f_equation': f_equation_residual(euler(a) / a, point, constants),
    }


def nogo_value(a: Sequence[float], v: Sequence[float], omega: Sequence[float],
               metric: Metric) -> float:
    """
    ``(a x omega)^2 + [a v omega]^2`` in a three-dimensional block.

    The squared cross product is written as
    ``(a.a)(omega.omega) - (a.omega)^2`` with the metric's dot product.
    """
    if metric.dim != 3:
        raise ChartError('The certificate lives in a three-dimensional block')
    a, v, omega = (numpy.asarray(item, dtype=float) for item in (a, v, omega))
    cross = (metric.dot(a, a) * metric.dot(omega, omega) -
             metric.dot(a, omega) ** 2)
    triple = numpy.linalg.det(numpy.stack((a, v, omega)))
    return float(cross + triple ** 2)


def nogo_certificate(a: Sequence[float], v: Sequence[float], metric: Metric,
                     trials: int = 1000, seed=DEFAULT_SEED) -> float:
    """
    Largest certificate value over ``trials`` seeded directions ``omega``.

    A strictly positive result witnesses that no direction annihilates the
    certificate for this ``a``; ``a = 0`` always gives 0.
    """
    rng = default_rng(seed)
    best = 0.0
    for omega in rng.uniform(-1.0, 1.0, (trials, 3)):
        best = max(best, nogo_value(a, v, omega, metric))
    return best
