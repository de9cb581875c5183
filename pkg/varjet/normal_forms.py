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
Variational normal forms of third- and fourth-order systems.

Notation used throughout this module, for a parametric chart::

    x = positions, v = velocities, w = v', w' = v'', w'' = v'''
    d_x, d_v, d_w             partial derivatives by x, v, w
    Dx = d_t + v.d_x          Dv = Dx + w.d_v

A third-order variational system reads
``E_i = A_ik w'^k + w^k d_v^k(A_il) w^l + B_ik w^k + c_i`` with ``A`` skew
and ``A, B, c`` functions of ``(t, x, v)``. A fourth-order one reads
``E_i = M_ij w''^j + (w'.d_w) M_ij w'^j + 2 Dv(M_ij) w'^j + A_ij w'^j + b_i``
with ``M`` symmetric in ``(t, x, v, w)``.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy

from varjet.errors import ChartError, NormalFormError, OrderError
from varjet.expr import (Combination, DiffOperator, Evaluator, Expr, ZERO,
                         as_expr, coordinate, partial, substitute)
from varjet.jet_core import (DEFAULT_SEED, PARAMETRIC, Coord, JetChart,
                             JetPoint, admissible_ranges, sample_points)
from varjet.variational import (DynamicalForm, LagrangianDef, Residuals,
                                evaluate_combinations)


logger = logging.getLogger(__name__)

STRUCTURE_SAMPLES = 20
STRUCTURE_TOLERANCE = 1e-8

SHAPE3 = 'shape3'
SHAPE4 = 'shape4'

SHAPE3_CONDITIONS = ('cyclic_a', 'skew_b', 'gradient_b', 'symmetric_c',
                     'gradient_c', 'curl_c')
SHAPE4_CONDITIONS = ('w_symmetry', 'mixed_a', 'cyclic_a', 'skew_b',
                     'hessian_b', 'gradient_b', 'symmetric_b', 'curl_b',
                     'consistency')

_PERMUTATIONS = (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1),
                 ((0, 2, 1), -1), ((2, 1, 0), -1), ((1, 0, 2), -1))

Matrix = Tuple[Tuple[Expr, ...], ...]


def _matrix(rows) -> Matrix:
    return tuple(tuple(as_expr(e) for e in row) for row in rows)


def _coord(n_index: int, rank: int) -> Coord:
    return Coord(PARAMETRIC, n_index, rank)


class _Calculus:
    """Partial and truncated total derivatives on a parametric chart."""
    def __init__(self, n: int):
        self.n = n
        self.indices = list(range(1, n + 1))
        self.Dx = DiffOperator.truncated(PARAMETRIC, n, -1)
        self.Dv = DiffOperator.truncated(PARAMETRIC, n, 0)

    def dx(self, e: Expr, p: int) -> Expr:
        return partial(e, _coord(self.indices[p], -1))

    def dv(self, e: Expr, p: int) -> Expr:
        return partial(e, _coord(self.indices[p], 0))

    def dw(self, e: Expr, p: int) -> Expr:
        return partial(e, _coord(self.indices[p], 1))

    def repeat(self, operator: DiffOperator, e: Expr, times: int) -> Expr:
        for _ in range(times):
            e = operator(e)
        return e

    def zero_bindings(self, *ranks: int) -> Dict[Coord, Expr]:
        return {_coord(index, rank): ZERO
                for rank in ranks for index in self.indices}

    def symbols(self, rank: int) -> List[Expr]:
        return [coordinate(_coord(index, rank)) for index in self.indices]


@dataclass(frozen=True)
class Shape3:
    """
    Coefficients of a third-order variational normal form.

    Parameters
    ----------
    A : tuple
        Skew ``n x n`` matrix in ``(t, x, v)``.
    B : tuple
        ``n x n`` matrix in ``(t, x, v)``.
    c : tuple
        ``n`` expressions in ``(t, x, v)``.
    """
    A: Matrix
    B: Matrix
    c: Tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, 'A', _matrix(self.A))
        object.__setattr__(self, 'B', _matrix(self.B))
        object.__setattr__(self, 'c', tuple(as_expr(e) for e in self.c))
        n = len(self.c)
        if (len(self.A) != n or len(self.B) != n or
                any(len(row) != n for row in self.A + self.B)):
            raise NormalFormError('Shape coefficients must be {0}x{0} '
                                  'matrices and a {0}-row'.format(n))
        for e in self.entries():
            if any(coord.rank > 0 or coord.kind != PARAMETRIC
                   for coord in e.coords):
                raise NormalFormError('Shape coefficients may only depend '
                                      'on t, x and v')

    @property
    def n(self) -> int:
        return len(self.c)

    def entries(self) -> List[Expr]:
        return [e for row in self.A + self.B for e in row] + list(self.c)

    def k(self) -> Tuple[Expr, ...]:
        """``k_i = w^k d_v^k(A_il) w^l + B_il w^l + c_i``."""
        calculus = _Calculus(self.n)
        w = calculus.symbols(1)
        result = []
        for i in range(self.n):
            total = self.c[i]
            for l in range(self.n):
                total = total + self.B[i][l] * w[l]
                for k in range(self.n):
                    total = total + w[k] * calculus.dv(self.A[i][l], k) * w[l]
            result.append(total)
        return tuple(result)

    def form(self) -> DynamicalForm:
        """Reassemble the dynamical form ``A w' + k``."""
        calculus = _Calculus(self.n)
        dw = calculus.symbols(2)
        components = []
        for i, k_i in enumerate(self.k()):
            total = k_i
            for j in range(self.n):
                total = total + self.A[i][j] * dw[j]
            components.append(total)
        return DynamicalForm.of(components, PARAMETRIC, self.n)

    def evaluate(self, point: JetPoint,
                 constants: Optional[Mapping[str, float]] = None
                 ) -> Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
        evaluator = Evaluator(point, constants)
        return (numpy.array([evaluator.many(row) for row in self.A]),
                numpy.array([evaluator.many(row) for row in self.B]),
                evaluator.many(self.c))


@dataclass(frozen=True)
class Shape4:
    """
    Coefficients of a fourth-order variational normal form.

    Parameters
    ----------
    M : tuple
        Symmetric ``n x n`` matrix in ``(t, x, v, w)``.
    A : tuple
        Skew ``n x n`` matrix in ``(t, x, v, w)``.
    b : tuple
        ``n`` expressions in ``(t, x, v, w)``.
    """
    M: Matrix
    A: Matrix
    b: Tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, 'M', _matrix(self.M))
        object.__setattr__(self, 'A', _matrix(self.A))
        object.__setattr__(self, 'b', tuple(as_expr(e) for e in self.b))
        n = len(self.b)
        if (len(self.M) != n or len(self.A) != n or
                any(len(row) != n for row in self.M + self.A)):
            raise NormalFormError('Shape coefficients must be {0}x{0} '
                                  'matrices and a {0}-row'.format(n))
        for e in self.entries():
            if any(coord.rank > 1 or coord.kind != PARAMETRIC
                   for coord in e.coords):
                raise NormalFormError('Shape coefficients may only depend '
                                      'on t, x, v and w')

    @property
    def n(self) -> int:
        return len(self.b)

    def entries(self) -> List[Expr]:
        return [e for row in self.M + self.A for e in row] + list(self.b)

    def form(self) -> DynamicalForm:
        """Reassemble the dynamical form from its coefficients."""
        calculus = _Calculus(self.n)
        dw = calculus.symbols(2)
        ddw = calculus.symbols(3)
        components = []
        for i in range(self.n):
            total = self.b[i]
            for j in range(self.n):
                total = (total + self.M[i][j] * ddw[j] +
                         2 * calculus.Dv(self.M[i][j]) * dw[j] +
                         self.A[i][j] * dw[j])
                for k in range(self.n):
                    slope = calculus.dw(self.M[i][j], k)
                    total = total + dw[k] * slope * dw[j]
            components.append(total)
        return DynamicalForm.of(components, PARAMETRIC, self.n)

    def evaluate(self, point: JetPoint,
                 constants: Optional[Mapping[str, float]] = None
                 ) -> Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
        evaluator = Evaluator(point, constants)
        return (numpy.array([evaluator.many(row) for row in self.M]),
                numpy.array([evaluator.many(row) for row in self.A]),
                evaluator.many(self.b))


def _structure_points(n: int, order: int, samples: int, seed: int,
                      ranges: Optional[Sequence]) -> List[JetPoint]:
    chart = JetChart(PARAMETRIC, n, order)
    if ranges is None:
        ranges = admissible_ranges(chart)
    return sample_points(chart, ranges, seed, samples)


def _require_vanishing(label: str, checks: Sequence[Tuple[Expr, Expr]],
                       points: Sequence[JetPoint],
                       constants: Optional[Mapping[str, float]]) -> None:
    """
    Require every ``residual`` to vanish relative to its ``reference``.

    Raises
    ------
    NormalFormError
        Raises a ``NormalFormError`` naming ``label`` on the first sample
        where a residual does not vanish.
    """
    for number, point in enumerate(points):
        evaluator = Evaluator(point, constants)
        for residual, reference in checks:
            value = abs(evaluator(residual))
            scale = max(1.0, abs(evaluator(reference)))
            if value > STRUCTURE_TOLERANCE * scale:
                raise NormalFormError('Form is not in normal form: {} fails '
                                      'at sample {} (|value| = {:.3e})'
                                      .format(label, number, value))
    logger.debug('Structure check {!r} passed at {} samples'
                 .format(label, len(points)))


def _check_form(form: DynamicalForm, highest: int) -> None:
    if form.chart.kind != PARAMETRIC:
        raise ChartError('Normal forms are extracted from parametric forms')
    if form.order > highest:
        raise OrderError('Expected a form of order at most {}, got {}'
                         .format(highest, form.order))


def extract_shape3(form: DynamicalForm,
                   constants: Optional[Mapping[str, float]] = None,
                   samples: int = STRUCTURE_SAMPLES,
                   seed: int = DEFAULT_SEED,
                   ranges: Optional[Sequence] = None) -> Shape3:
    """
    Extract ``(A, B, c)`` from a form of order at most 3.

    ``A = dE/dw'``; the remainder ``E - A w' - (w.d_v) A w`` must be affine
    in ``w`` with gradient ``B`` and value ``c`` at ``w = 0``. Structure is
    checked at sampled points rather than proven.

    Parameters
    ----------
    form : DynamicalForm
        A parametric form of order at most 3. Second-order forms give
        ``A = 0``.
    constants : dict (optional)
        Values of named constants used while checking structure.
    samples : int (optional)
        The number of sampled points used for structure checks.
    seed : int (optional)
        The sampling seed.
    ranges : sequence (optional)
        Sampling ranges; defaults to the admissible ranges.

    Returns
    -------
    Shape3
        The coefficient fields.

    Raises
    ------
    NormalFormError
        Raises a ``NormalFormError`` when the form is not affine in ``w'``,
        ``A`` is not skew or depends on ``w``, or ``B`` depends on ``w``.
    """
    _check_form(form, 3)
    n = form.chart.n
    calculus = _Calculus(n)
    points = _structure_points(n, 3, samples, seed, ranges)
    w = calculus.symbols(1)
    dw = calculus.symbols(2)
    components = form.components
    A_full = [[partial(components[i], _coord(calculus.indices[j], 2))
               for j in range(n)] for i in range(n)]
    _require_vanishing(
        'affine in v\'\'',
        [(partial(A_full[i][j], _coord(calculus.indices[k], 2)), A_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)],
        points, constants)
    _require_vanishing(
        'coefficient of v\'\' free of v\'',
        [(calculus.dw(A_full[i][j], k), A_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)],
        points, constants)
    _require_vanishing(
        'skew coefficient of v\'\'',
        [(A_full[i][j] + A_full[j][i], A_full[i][j])
         for i in range(n) for j in range(i, n)],
        points, constants)
    flatten = calculus.zero_bindings(1, 2)
    A = [[substitute(A_full[i][j], flatten) for j in range(n)]
         for i in range(n)]
    remainder = []
    for i in range(n):
        total = components[i]
        for l in range(n):
            total = total - A[i][l] * dw[l]
            for k in range(n):
                total = total - w[k] * calculus.dv(A[i][l], k) * w[l]
        remainder.append(total)
    B_full = [[calculus.dw(remainder[i], j) for j in range(n)]
              for i in range(n)]
    _require_vanishing(
        'remainder affine in v\'',
        [(calculus.dw(B_full[i][j], k), B_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)] +
        [(partial(B_full[i][j], _coord(calculus.indices[k], 2)), B_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)],
        points, constants)
    B = [[substitute(B_full[i][j], flatten) for j in range(n)]
         for i in range(n)]
    c = [substitute(remainder[i], flatten) for i in range(n)]
    return Shape3(A, B, c)


def extract_shape4(form: DynamicalForm,
                   constants: Optional[Mapping[str, float]] = None,
                   samples: int = STRUCTURE_SAMPLES,
                   seed: int = DEFAULT_SEED,
                   ranges: Optional[Sequence] = None) -> Shape4:
    """
    Extract ``(M, A, b)`` from a form of order at most 4.

    ``M = dE/dw''``; the remainder
    ``E - M w'' - (w'.d_w) M w' - 2 Dv(M) w'`` must be affine in ``w'`` with
    a skew gradient ``A`` and value ``b`` at ``w' = 0``.

    Raises
    ------
    NormalFormError
        Raises a ``NormalFormError`` on any structural violation, such as a
        form that is quadratic in ``w''``.
    """
    _check_form(form, 4)
    n = form.chart.n
    calculus = _Calculus(n)
    points = _structure_points(n, 4, samples, seed, ranges)
    dw = calculus.symbols(2)
    ddw = calculus.symbols(3)
    components = form.components
    M_full = [[partial(components[i], _coord(calculus.indices[j], 3))
               for j in range(n)] for i in range(n)]
    _require_vanishing(
        'affine in v\'\'\'',
        [(partial(M_full[i][j], _coord(calculus.indices[k], 3)), M_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)],
        points, constants)
    _require_vanishing(
        'coefficient of v\'\'\' free of v\'\'',
        [(partial(M_full[i][j], _coord(calculus.indices[k], 2)), M_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)],
        points, constants)
    _require_vanishing(
        'symmetric coefficient of v\'\'\'',
        [(M_full[i][j] - M_full[j][i], M_full[i][j])
         for i in range(n) for j in range(i + 1, n)],
        points, constants)
    flatten = calculus.zero_bindings(2, 3)
    M = [[substitute(M_full[i][j], flatten) for j in range(n)]
         for i in range(n)]
    remainder = []
    for i in range(n):
        total = components[i]
        for j in range(n):
            total = (total - M[i][j] * ddw[j] -
                     2 * calculus.Dv(M[i][j]) * dw[j])
            for k in range(n):
                total = total - dw[k] * calculus.dw(M[i][j], k) * dw[j]
        remainder.append(total)
    A_full = [[partial(remainder[i], _coord(calculus.indices[j], 2))
               for j in range(n)] for i in range(n)]
    _require_vanishing(
        'remainder affine in v\'\'',
        [(partial(A_full[i][j], _coord(calculus.indices[k], rank)),
          A_full[i][j])
         for i in range(n) for j in range(n) for k in range(n)
         for rank in (2, 3)],
        points, constants)
    _require_vanishing(
        'skew gradient of the remainder',
        [(A_full[i][j] + A_full[j][i], A_full[i][j])
         for i in range(n) for j in range(i, n)],
        points, constants)
    A = [[substitute(A_full[i][j], flatten) for j in range(n)]
         for i in range(n)]
    b = [substitute(remainder[i], flatten) for i in range(n)]
    return Shape4(M, A, b)


def _antisymmetrized(term, a: int, b: int, c: int) -> Combination:
    indices = (a, b, c)
    return Combination((sign / 6.0, term(*(indices[p] for p in permutation)))
                       for permutation, sign in _PERMUTATIONS)


@lru_cache(maxsize=32)
def shape3_condition_terms(shape: Shape3) -> Dict[str, list]:
    """
    The third-order conditions as combinations.

    ``cyclic_a[i][j][l]``
        antisymmetrization of ``d_v^i A_jl`` over ``(i, j, l)``.
    ``skew_b[i][j]``
        ``B_ij - B_ji - 3 Dx A_ij``.
    ``gradient_b[i][j][l]``
        ``d_v^i B_jl - d_v^j B_il - 2 (d_x^i A_jl - d_x^j A_il)
        + d_x^l A_ij + 2 Dx d_v^l A_ij``.
    ``symmetric_c[i][j]``
        ``(d_v^i c_j + d_v^j c_i) / 2 - Dx (B_ij + B_ji) / 2``.
    ``gradient_c[i][j][l]``
        ``d_v^l (d_v^i c_j - d_v^j c_i) - 2 (d_x^i B_jl - d_x^j B_il)
        + Dx^2 d_v^l A_ij + 6 Dx`` of the antisymmetrization of
        ``d_x^i A_jl``.
    ``curl_c[i][j]``
        ``2 (d_x^i c_j - d_x^j c_i) - Dx (d_v^i c_j - d_v^j c_i)
        - Dx^3 A_ij``.
    """
    n = shape.n
    calculus = _Calculus(n)
    A, B, c = shape.A, shape.B, shape.c
    dv, dx, Dx = calculus.dv, calculus.dx, calculus.Dx
    C = Combination.of
    span = range(n)
    cyclic_a = [[[_antisymmetrized(lambda a, b, d: dv(A[b][d], a), i, j, l)
                  for l in span] for j in span] for i in span]
    skew_b = [[C(B[i][j]) - C(B[j][i]) - C(Dx(A[i][j]), 3.0)
               for j in span] for i in span]
    gradient_b = [[[C(dv(B[j][l], i)) - C(dv(B[i][l], j)) -
                    C(dx(A[j][l], i), 2.0) + C(dx(A[i][l], j), 2.0) +
                    C(dx(A[i][j], l)) + C(Dx(dv(A[i][j], l)), 2.0)
                    for l in span] for j in span] for i in span]
    symmetric_c = [[C(dv(c[j], i), 0.5) + C(dv(c[i], j), 0.5) -
                    C(Dx(B[i][j]), 0.5) - C(Dx(B[j][i]), 0.5)
                    for j in span] for i in span]
    gradient_c = []
    for i in span:
        block = []
        for j in span:
            row = []
            for l in span:
                cyclic = _antisymmetrized(lambda a, b, d: dx(A[b][d], a),
                                          i, j, l).map(Dx) * 6.0
                row.append(C(dv(dv(c[j], i), l)) - C(dv(dv(c[i], j), l)) -
                           C(dx(B[j][l], i), 2.0) + C(dx(B[i][l], j), 2.0) +
                           C(calculus.repeat(Dx, dv(A[i][j], l), 2)) +
                           cyclic)
            block.append(row)
        gradient_c.append(block)
    curl_c = [[C(dx(c[j], i), 2.0) - C(dx(c[i], j), 2.0) -
               C(Dx(dv(c[j], i))) + C(Dx(dv(c[i], j))) -
               C(calculus.repeat(Dx, A[i][j], 3))
               for j in span] for i in span]
    return {'cyclic_a': cyclic_a, 'skew_b': skew_b, 'gradient_b': gradient_b,
            'symmetric_c': symmetric_c, 'gradient_c': gradient_c,
            'curl_c': curl_c}


def shape3_condition_residuals(shape: Shape3, point: JetPoint,
                               constants: Optional[Mapping[str, float]] = None
                               ) -> Dict[str, Residuals]:
    """
    Evaluate every third-order condition at a point of order at least 1.

    Returns
    -------
    dict
        A ``dict`` mapping each name of ``SHAPE3_CONDITIONS`` to its
        ``Residuals``.
    """
    if point.order < 1:
        raise OrderError('Third-order conditions need a point of order 1')
    terms = shape3_condition_terms(shape)
    return {name: evaluate_combinations(terms[name], point, constants)
            for name in SHAPE3_CONDITIONS}


@lru_cache(maxsize=32)
def shape4_condition_terms(shape: Shape4) -> Dict[str, list]:
    """
    The fourth-order conditions as combinations.

    ``w_symmetry[i][j][k]``
        ``(d_w^i M_jk - d_w^j M_ik) / 2``.
    ``mixed_a[i][j][k]``
        ``d_w^i A_jk + d_v^j M_ki - d_v^k M_ji``.
    ``cyclic_a[i][j][k]``
        antisymmetrization of ``d_v^i A_jk``.
    ``skew_b[i][j]``
        ``d_w^i b_j - d_w^j b_i + 3 Dv A_ij``.
    ``hessian_b[i][j][k]``
        ``d_w^i d_w^j b_k + d_v^i A_jk + d_v^j A_ik
        - (d_x^i M_jk + d_x^j M_ik + d_x^k M_ij) + Dv d_v^k M_ij
        - 2 Dv (d_v^i M_jk + d_v^j M_ik) - Dv^2 d_w^i M_jk``.
        The cyclic sum over ``d_x M`` carries coefficient 1 and the ``Dv``
        terms are fixed by requiring the condition to vanish on the
        coefficients of every second-order Lagrangian.
    ``gradient_b[i][j][k]``
        ``d_w^k (d_v^i b_j - d_v^j b_i) - 2 (d_x^i A_jk - d_x^j A_ik)
        + d_x^k A_ij + 2 Dv d_v^k A_ij - 2 Dv (d_x^i M_jk - d_x^j M_ik)
        - Dv^2 (d_v^i M_jk - d_v^j M_ik)``.
    ``symmetric_b[i][j]``
        ``(d_v^i b_j + d_v^j b_i) / 2 - Dv (d_w^i b_j + d_w^j b_i) / 2
        + Dv^3 M_ij``.
    ``curl_b[i][j]``
        ``2 (d_x^i b_j - d_x^j b_i) - Dv (d_v^i b_j - d_v^j b_i)
        - Dv^3 A_ij``.
    ``consistency[k][i][j]``
        ``d_w^k symmetric_b[i][j] - gradient_b[k][i][j]
        + 2 gradient_b[i][k][j] - d_w^k skew_b[i][j]
        + 2 d_v^j skew_b[i][k]``; it vanishes whenever the conditions it
        combines hold.
    """
    n = shape.n
    calculus = _Calculus(n)
    M, A, b = shape.M, shape.A, shape.b
    dv, dx, dw, Dv = calculus.dv, calculus.dx, calculus.dw, calculus.Dv
    repeat = calculus.repeat
    C = Combination.of
    span = range(n)
    w_symmetry = [[[C(dw(M[j][k], i), 0.5) - C(dw(M[i][k], j), 0.5)
                    for k in span] for j in span] for i in span]
    mixed_a = [[[C(dw(A[j][k], i)) + C(dv(M[k][i], j)) - C(dv(M[j][i], k))
                 for k in span] for j in span] for i in span]
    cyclic_a = [[[_antisymmetrized(lambda a, p, q: dv(A[p][q], a), i, j, k)
                  for k in span] for j in span] for i in span]
    skew_b = [[C(dw(b[j], i)) - C(dw(b[i], j)) + C(Dv(A[i][j]), 3.0)
               for j in span] for i in span]
    hessian_b = [[[C(dw(dw(b[k], j), i)) + C(dv(A[j][k], i)) +
                   C(dv(A[i][k], j)) - C(dx(M[j][k], i)) -
                   C(dx(M[i][k], j)) - C(dx(M[i][j], k)) +
                   C(Dv(dv(M[i][j], k))) - C(Dv(dv(M[j][k], i)), 2.0) -
                   C(Dv(dv(M[i][k], j)), 2.0) -
                   C(repeat(Dv, dw(M[j][k], i), 2))
                   for k in span] for j in span] for i in span]
    gradient_b = [[[C(dw(dv(b[j], i), k)) - C(dw(dv(b[i], j), k)) -
                    C(dx(A[j][k], i), 2.0) + C(dx(A[i][k], j), 2.0) +
                    C(dx(A[i][j], k)) + C(Dv(dv(A[i][j], k)), 2.0) -
                    C(Dv(dx(M[j][k], i)), 2.0) + C(Dv(dx(M[i][k], j)), 2.0) -
                    C(repeat(Dv, dv(M[j][k], i), 2)) +
                    C(repeat(Dv, dv(M[i][k], j), 2))
                    for k in span] for j in span] for i in span]
    symmetric_b = [[C(dv(b[j], i), 0.5) + C(dv(b[i], j), 0.5) -
                    C(Dv(dw(b[j], i)), 0.5) - C(Dv(dw(b[i], j)), 0.5) +
                    C(repeat(Dv, M[i][j], 3))
                    for j in span] for i in span]
    curl_b = [[C(dx(b[j], i), 2.0) - C(dx(b[i], j), 2.0) -
               C(Dv(dv(b[j], i))) + C(Dv(dv(b[i], j))) -
               C(repeat(Dv, A[i][j], 3))
               for j in span] for i in span]
    consistency = [[[symmetric_b[i][j].map(lambda e: dw(e, k)) -
                     gradient_b[k][i][j] + gradient_b[i][k][j] * 2.0 -
                     skew_b[i][j].map(lambda e: dw(e, k)) +
                     skew_b[i][k].map(lambda e: dv(e, j)) * 2.0
                     for j in span] for i in span] for k in span]
    return {'w_symmetry': w_symmetry, 'mixed_a': mixed_a,
            'cyclic_a': cyclic_a, 'skew_b': skew_b, 'hessian_b': hessian_b,
            'gradient_b': gradient_b, 'symmetric_b': symmetric_b,
            'curl_b': curl_b, 'consistency': consistency}


def shape4_condition_residuals(shape: Shape4, point: JetPoint,
                               constants: Optional[Mapping[str, float]] = None
                               ) -> Dict[str, Residuals]:
    """
    Evaluate every fourth-order condition at a point of order at least 2.

    Returns
    -------
    dict
        A ``dict`` mapping each name of ``SHAPE4_CONDITIONS`` to its
        ``Residuals``.
    """
    if point.order < 2:
        raise OrderError('Fourth-order conditions need a point of order 2')
    terms = shape4_condition_terms(shape)
    return {name: evaluate_combinations(terms[name], point, constants)
            for name in SHAPE4_CONDITIONS}


def coefficients_from_lagrangian(lagrangian: LagrangianDef,
                                 target: str = SHAPE4,
                                 constants: Optional[Mapping[str,
                                                             float]] = None,
                                 samples: int = STRUCTURE_SAMPLES,
                                 seed: int = DEFAULT_SEED):
    """
    Normal-form coefficients written directly in terms of a Lagrangian.

    For ``target='shape4'``::

        M_ij = d_w^i d_w^j L
        A_ij = d_w^i d_v^j L - d_w^j d_v^i L
        b_i  = Dv^2 d_w^i L - Dv d_v^i L + d_x^i L

    For ``target='shape3'`` the Lagrangian must be affine in ``w``, written
    ``L = phi.w + psi``, and::

        A_ik = d_v^k phi_i - d_v^i phi_k
        B_ik = 2 Dx d_v^k phi_i - Dx d_v^i phi_k + d_x^k phi_i
               + d_x^i phi_k - d_v^k d_v^i psi
        c_i  = Dx^2 phi_i - Dx d_v^i psi + d_x^i psi

    Raises
    ------
    OrderError
        Raises an ``OrderError`` for a Lagrangian above order 2.
    NormalFormError
        Raises a ``NormalFormError`` for ``shape3`` when ``L`` is not affine
        in ``w``.
    """
    chart = lagrangian.chart
    if chart.kind != PARAMETRIC:
        raise ChartError('Coefficients are defined for parametric '
                         'Lagrangians')
    if chart.order > 2:
        raise OrderError('Coefficients are defined for Lagrangians up to '
                         'order 2, got {}'.format(chart.order))
    n = chart.n
    calculus = _Calculus(n)
    L = lagrangian.expr
    dv, dx, dw = calculus.dv, calculus.dx, calculus.dw
    span = range(n)
    if target == SHAPE4:
        M = [[dw(dw(L, j), i) for j in span] for i in span]
        A = [[dw(dv(L, j), i) - dw(dv(L, i), j) for j in span] for i in span]
        b = [calculus.repeat(calculus.Dv, dw(L, i), 2) -
             calculus.Dv(dv(L, i)) + dx(L, i) for i in span]
        return Shape4(M, A, b)
    if target != SHAPE3:
        raise ValueError('Unknown target {!r}, expected {!r} or {!r}'
                         .format(target, SHAPE3, SHAPE4))
    points = _structure_points(n, 2, samples, seed, None)
    _require_vanishing(
        'Lagrangian affine in v\'',
        [(dw(dw(L, j), i), L) for i in span for j in span],
        points, constants)
    flatten = calculus.zero_bindings(1)
    phi = [substitute(dw(L, i), flatten) for i in span]
    psi = substitute(L, flatten)
    Dx = calculus.Dx
    A = [[dv(phi[i], k) - dv(phi[k], i) for k in span] for i in span]
    B = [[2 * Dx(dv(phi[i], k)) - Dx(dv(phi[k], i)) + dx(phi[i], k) +
          dx(phi[k], i) - dv(dv(psi, i), k) for k in span] for i in span]
    c = [calculus.repeat(Dx, phi[i], 2) - Dx(dv(psi, i)) + dx(psi, i)
         for i in span]
    return Shape3(A, B, c)


def selfadjoint_first_order_residuals(
    Psi: Sequence[Sequence[Expr]],
    psi: Sequence[Expr],
    point: JetPoint,
    constants: Optional[Mapping[str, float]] = None
) -> Tuple[Residuals, Residuals]:
    """
    Conditions for ``E = Psi.v + psi`` to be self-adjoint.

    The form reads ``E_i = Psi_ij v^j + psi_i``. The first tensor is
    ``d_x^i Psi_jk - d_x^j Psi_ik + d_x^k Psi_ij`` and the second
    ``d_x^i psi_j - d_x^j psi_i + d_t Psi_ij``.

    Raises
    ------
    NormalFormError
        Raises a ``NormalFormError`` when ``Psi`` is not skew at the point.
    """
    n = len(psi)
    if len(Psi) != n or any(len(row) != n for row in Psi):
        raise NormalFormError('Psi must be a {0}x{0} matrix'.format(n))
    calculus = _Calculus(n)
    evaluator = Evaluator(point, constants)
    for i in range(n):
        for j in range(i, n):
            total = evaluator(Psi[i][j] + Psi[j][i])
            if abs(total) > STRUCTURE_TOLERANCE:
                raise NormalFormError('Psi is not skew at ({}, {})'
                                      .format(i + 1, j + 1))
    dx = calculus.dx
    C = Combination.of
    span = range(n)
    independent = Coord(PARAMETRIC, 0, -2)
    first = [[[C(dx(Psi[j][k], i)) - C(dx(Psi[i][k], j)) +
               C(dx(Psi[i][j], k))
               for k in span] for j in span] for i in span]
    second = [[C(dx(psi[j], i)) - C(dx(psi[i], j)) +
               C(partial(Psi[i][j], independent))
               for j in span] for i in span]
    return (evaluate_combinations(first, point, constants),
            evaluate_combinations(second, point, constants))
