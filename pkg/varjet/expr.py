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
Expression trees over jet coordinates.

Nodes are interned: building the same node twice returns the same object, so
identity is structural equality and every cache below can be keyed on nodes
directly. Only local folding is performed (literal arithmetic and the
neutral/absorbing elements); equality of two different trees is established
by evaluating them at sampled points.
"""
import math
import weakref
from fractions import Fraction
from functools import lru_cache
from numbers import Real
from typing import (Dict, FrozenSet, Iterable, List, Mapping, Optional,
                    Sequence, Tuple, Union)

import numpy

from varjet.errors import BindingError, ChartError, EvaluationError
from varjet.jet_core import Coord, JetChart, JetPoint, POSITION_RANK


LITERAL = 'lit'
CONSTANT = 'const'
COORDINATE = 'coord'
NEGATE = 'neg'
SQRT = 'sqrt'
ADD = 'add'
SUB = 'sub'
MUL = 'mul'
DIV = 'div'
POW = 'pow'

LEAVES = (LITERAL, CONSTANT, COORDINATE)
UNARY = (NEGATE, SQRT)
BINARY = (ADD, SUB, MUL, DIV)

_INTERNED = weakref.WeakValueDictionary()


class Expr:
    """
    An immutable, interned expression node.

    Parameters
    ----------
    op : string
        One of the node kinds defined in this module.
    args : tuple
        Child nodes.
    value : object
        The payload of leaves (a ``float``, a constant name or a ``Coord``)
        or the ``Fraction`` exponent of a power node.
    """
    __slots__ = ('op', 'args', 'value', 'coords', 'constants', 'size',
                 '__weakref__')

    def __new__(cls, op: str, args: Tuple['Expr', ...] = (), value=None):
        key = (op, args, value)
        node = _INTERNED.get(key)
        if node is not None:
            return node
        node = object.__new__(cls)
        coords = frozenset()
        constants = frozenset()
        size = 1
        if op == COORDINATE:
            coords = frozenset((value,))
        elif op == CONSTANT:
            constants = frozenset((value,))
        for child in args:
            coords = coords | child.coords
            constants = constants | child.constants
            size += child.size
        for name, attribute in (('op', op), ('args', args), ('value', value),
                                ('coords', coords), ('constants', constants),
                                ('size', size)):
            object.__setattr__(node, name, attribute)
        _INTERNED[key] = node
        return node

    def __setattr__(self, name, value):
        raise AttributeError('Expr nodes are immutable')

    def __reduce__(self):
        return (Expr, (self.op, self.args, self.value))

    def __repr__(self) -> str:
        if self.op == LITERAL:
            return 'Expr({!r})'.format(self.value)
        if self.op in (CONSTANT, COORDINATE):
            label = self.value if self.op == CONSTANT else self.value.name
            return 'Expr({})'.format(label)
        return 'Expr<{}, {} nodes>'.format(self.op, self.size)

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        return power(self, exponent)

    @property
    def kinds(self) -> FrozenSet[str]:
        return frozenset(coord.kind for coord in self.coords)


ExprLike = Union[Expr, Real]


def literal(value: Real) -> Expr:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError('Literal values must be finite, got {}'.format(value))
    return Expr(LITERAL, (), value + 0.0)


def constant(name: str) -> Expr:
    return Expr(CONSTANT, (), str(name))


def coordinate(coord: Coord) -> Expr:
    return Expr(COORDINATE, (), Coord(*coord))


def as_expr(item: ExprLike) -> Expr:
    if isinstance(item, Expr):
        return item
    if isinstance(item, Real):
        return literal(item)
    raise TypeError('Cannot use {!r} as an expression'.format(item))


ZERO = literal(0.0)
ONE = literal(1.0)
TWO = literal(2.0)


def is_literal(e: Expr, value: Optional[float] = None) -> bool:
    if e.op != LITERAL:
        return False
    return value is None or e.value == value


def neg(a: Expr) -> Expr:
    if a.op == LITERAL:
        return literal(-a.value)
    if a.op == NEGATE:
        return a.args[0]
    return Expr(NEGATE, (a,))


def sqrt(a: ExprLike) -> Expr:
    a = as_expr(a)
    if a.op == LITERAL and a.value >= 0:
        return literal(math.sqrt(a.value))
    return Expr(SQRT, (a,))


def add(a: Expr, b: Expr) -> Expr:
    if a.op == LITERAL and b.op == LITERAL:
        return literal(a.value + b.value)
    if is_literal(a, 0.0):
        return b
    if is_literal(b, 0.0):
        return a
    if b.op == NEGATE:
        return sub(a, b.args[0])
    return Expr(ADD, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.op == LITERAL and b.op == LITERAL:
        return literal(a.value - b.value)
    if a is b:
        return ZERO
    if is_literal(b, 0.0):
        return a
    if is_literal(a, 0.0):
        return neg(b)
    if b.op == NEGATE:
        return add(a, b.args[0])
    return Expr(SUB, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.op == LITERAL and b.op == LITERAL:
        return literal(a.value * b.value)
    if is_literal(a, 0.0) or is_literal(b, 0.0):
        return ZERO
    if is_literal(a, 1.0):
        return b
    if is_literal(b, 1.0):
        return a
    if is_literal(a, -1.0):
        return neg(b)
    if is_literal(b, -1.0):
        return neg(a)
    return Expr(MUL, (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if a.op == LITERAL and b.op == LITERAL and b.value != 0.0:
        return literal(a.value / b.value)
    if is_literal(a, 0.0) and not is_literal(b, 0.0):
        return ZERO
    if is_literal(b, 1.0):
        return a
    return Expr(DIV, (a, b))


def _exponent(exponent) -> Fraction:
    if isinstance(exponent, Fraction):
        value = exponent
    elif isinstance(exponent, float):
        value = Fraction(exponent).limit_denominator(2)
        if float(value) != exponent:
            raise ValueError('Exponent {} is neither an integer nor a half '
                             'integer'.format(exponent))
    else:
        value = Fraction(exponent)
    if value.denominator not in (1, 2):
        raise ValueError('Exponent {} is neither an integer nor a half '
                         'integer'.format(value))
    return value


def power(a: ExprLike, exponent) -> Expr:
    """Raise ``a`` to an integer or half-integer exponent."""
    a = as_expr(a)
    exponent = _exponent(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return a
    if a.op == LITERAL:
        if exponent.denominator == 1 and (a.value != 0.0 or exponent > 0):
            return literal(a.value ** int(exponent))
        if a.value > 0:
            return literal(a.value ** float(exponent))
    if a.op == POW:
        inner = a.args[0]
        combined = a.value * exponent
        if a.value.denominator == 1 and exponent.denominator == 1:
            return power(inner, combined)
    return Expr(POW, (a,), exponent)


def max_order(e: Expr) -> int:
    """The highest jet order referenced by ``e`` (0 without velocities)."""
    return max((coord.order for coord in e.coords), default=0)


def single_kind(exprs: Iterable[Expr]) -> Optional[str]:
    """
    The chart kind shared by every coordinate of ``exprs``.

    Raises
    ------
    ChartError
        Raises a ``ChartError`` when coordinates from both kinds appear.
    """
    kinds = set()
    for e in exprs:
        kinds.update(e.kinds)
    if len(kinds) > 1:
        raise ChartError('Expressions mix coordinates of the {} charts'
                         .format(' and '.join(sorted(kinds))))
    return next(iter(kinds), None)


class _Partial:
    __slots__ = ('coord',)

    def __init__(self, coord: Coord):
        self.coord = coord

    def __hash__(self):
        return hash(('partial', self.coord))

    def __eq__(self, other):
        return isinstance(other, _Partial) and other.coord == self.coord

    def leaf(self, coord: Coord) -> Expr:
        return ONE if coord == self.coord else ZERO

    def touches(self, e: Expr) -> bool:
        return self.coord in e.coords


class _Total:
    __slots__ = ('kind',)

    def __init__(self, kind: str):
        self.kind = kind

    def __hash__(self):
        return hash(('total', self.kind))

    def __eq__(self, other):
        return isinstance(other, _Total) and other.kind == self.kind

    def leaf(self, coord: Coord) -> Expr:
        if coord.is_independent:
            return ONE
        return coordinate(coord.next())

    def touches(self, e: Expr) -> bool:
        return bool(e.coords)


class DiffOperator:
    """
    A first-order derivation ``sum c(coord) d/d(coord)``.

    The independent variable is an ordinary key of the coefficient map, so
    ``c_t d/dt`` is written with ``chart.independent`` as key.

    Parameters
    ----------
    coefficients : dict
        A ``dict`` mapping ``Coord`` to an ``Expr`` or a number. Zero
        coefficients are dropped.
    """
    __slots__ = ('_items', '_lookup', '_active', 'kind')

    def __init__(self, coefficients: Mapping[Coord, ExprLike]):
        items = []
        for coord, coefficient in coefficients.items():
            coefficient = as_expr(coefficient)
            if is_literal(coefficient, 0.0):
                continue
            items.append((Coord(*coord), coefficient))
        items.sort(key=lambda item: (item[0].rank, item[0].index))
        kinds = {coord.kind for coord, _ in items}
        kind = single_kind(coefficient for _, coefficient in items)
        if kind is not None:
            kinds.add(kind)
        if len(kinds) > 1:
            raise ChartError('Operator coefficients mix the {} charts'
                             .format(' and '.join(sorted(kinds))))
        self._items = tuple(items)
        self._lookup = dict(items)
        self._active = frozenset(self._lookup)
        self.kind = next(iter(kinds), None)

    @classmethod
    def zero(cls) -> 'DiffOperator':
        return cls({})

    @classmethod
    def total(cls, chart: JetChart) -> 'DiffOperator':
        """``D_t`` truncated to the coordinates of ``chart``."""
        return cls.truncated(chart.kind, chart.n, chart.order - 2)

    @classmethod
    def truncated(cls, kind: str, n: int, through: int) -> 'DiffOperator':
        """
        The total derivative truncated after ``through``.

        ``through = -1`` gives ``d_t + v.d_x``, ``0`` adds ``v'.d_v`` and
        ``1`` adds ``v''.d_v'``.
        """
        chart = JetChart(kind, n, max(through + 2, 0))
        coefficients = {chart.independent: ONE}
        for rank in range(POSITION_RANK, through + 1):
            for index in chart.indices:
                coefficients[Coord(kind, index, rank)] = coordinate(
                    Coord(kind, index, rank + 1))
        return cls(coefficients)

    @property
    def coefficients(self) -> Dict[Coord, Expr]:
        return dict(self._items)

    def leaf(self, coord: Coord) -> Expr:
        return self._lookup.get(coord, ZERO)

    def touches(self, e: Expr) -> bool:
        return not self._active.isdisjoint(e.coords)

    def __hash__(self):
        return hash(self._items)

    def __eq__(self, other):
        return isinstance(other, DiffOperator) and other._items == self._items

    def __add__(self, other: 'DiffOperator') -> 'DiffOperator':
        merged = dict(self._items)
        for coord, coefficient in other._items:
            merged[coord] = merged.get(coord, ZERO) + coefficient
        return DiffOperator(merged)

    def scaled(self, factor: ExprLike) -> 'DiffOperator':
        return DiffOperator({coord: coefficient * factor
                             for coord, coefficient in self._items})

    def __call__(self, e: Expr) -> Expr:
        return apply_operator(self, e)

    def __repr__(self) -> str:
        return 'DiffOperator({})'.format(
            ', '.join(coord.name for coord, _ in self._items))


@lru_cache(maxsize=1 << 18)
def _derive(e: Expr, rule) -> Expr:
    if not rule.touches(e):
        return ZERO
    op = e.op
    if op == COORDINATE:
        return rule.leaf(e.value)
    if op == NEGATE:
        return neg(_derive(e.args[0], rule))
    if op == SQRT:
        inner = _derive(e.args[0], rule)
        return div(inner, mul(TWO, e))
    a, = e.args[:1]
    da = _derive(a, rule)
    if op == POW:
        exponent = e.value
        return mul(mul(literal(float(exponent)), power(a, exponent - 1)), da)
    b = e.args[1]
    db = _derive(b, rule)
    if op == ADD:
        return add(da, db)
    if op == SUB:
        return sub(da, db)
    if op == MUL:
        return add(mul(da, b), mul(a, db))
    if op == DIV:
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    raise ValueError('Unknown node kind {!r}'.format(op))


def _check_kind(e: Expr, kind: Optional[str]) -> None:
    if kind is None:
        return
    other = e.kinds - {kind}
    if other:
        raise ChartError('Expression uses {} coordinates but the operator '
                         'acts on the {} chart'.format(
                             ' and '.join(sorted(other)), kind))


def partial(e: Expr, coord: Coord, chart: Optional[JetChart] = None) -> Expr:
    """
    Structural partial derivative of ``e`` with respect to ``coord``.

    Parameters
    ----------
    e : Expr
        The expression to differentiate.
    coord : Coord
        The coordinate to differentiate by.
    chart : JetChart (optional)
        When given, ``coord`` must be a coordinate of this chart.

    Raises
    ------
    ChartError
        Raises a ``ChartError`` when ``coord`` is not in ``chart`` or belongs
        to another chart kind than ``e``.
    """
    coord = Coord(*coord)
    if chart is not None and not chart.contains(coord):
        raise ChartError('{} is not a coordinate of the {} chart'
                         .format(coord.name, chart.kind))
    _check_kind(e, coord.kind)
    return _derive(e, _Partial(coord))


def total_derivative(e: Expr, kind: Optional[str] = None) -> Expr:
    """
    The formal total derivative ``D_t`` (or ``D_zeta``) of ``e``.

    ``D_t f = df/dt + sum v_(r+1) df/dv_(r)``; the chart kind is read from
    ``e`` unless given.
    """
    found = single_kind((e,))
    if kind is None:
        kind = found
    if kind is None:
        return ZERO
    _check_kind(e, kind)
    return _derive(e, _Total(kind))


def iterated_total_derivative(e: Expr, times: int,
                              kind: Optional[str] = None) -> Expr:
    for _ in range(times):
        e = total_derivative(e, kind)
    return e


def apply_operator(op: DiffOperator, e: Expr) -> Expr:
    """
    Apply a first-order derivation to ``e``.

    Raises
    ------
    ChartError
        Raises a ``ChartError`` when the operator and the expression live in
        different charts.
    """
    _check_kind(e, op.kind)
    return _derive(e, op)


def substitute(e: Expr, bindings: Mapping[Coord, ExprLike],
               target: Optional[JetChart] = None) -> Expr:
    """
    Simultaneously replace coordinates by expressions.

    Inserted trees are not substituted into again.

    Parameters
    ----------
    e : Expr
        The expression to rewrite.
    bindings : dict
        A ``dict`` mapping ``Coord`` to replacement expressions. Every
        replacement must use coordinates of a single chart.
    target : JetChart (optional)
        When given, every coordinate of ``e`` outside the target chart's kind
        must be bound.

    Raises
    ------
    BindingError
        Raises a ``BindingError`` when replacements span several charts or a
        coordinate that must be replaced has no binding.
    """
    table = {Coord(*coord): as_expr(value)
             for coord, value in bindings.items()}
    try:
        single_kind(table.values())
    except ChartError as error:
        raise BindingError('Substitution targets must share one chart: {}'
                           .format(error))
    if target is not None:
        missing = sorted(coord.name for coord in e.coords
                         if coord.kind != target.kind and coord not in table)
        if missing:
            raise BindingError('No binding for {}'.format(', '.join(missing)))
    memo = {}

    def rebuild(node: Expr) -> Expr:
        cached = memo.get(node)
        if cached is not None:
            return cached
        if node.op == COORDINATE:
            result = table.get(node.value, node)
        elif node.op in LEAVES or node.coords.isdisjoint(table):
            result = node
        else:
            result = _make(node.op, [rebuild(child) for child in node.args],
                           node.value)
        memo[node] = result
        return result

    return rebuild(e)


def bind_constants(e: Expr, constants: Mapping[str, ExprLike]) -> Expr:
    """Replace named constants by expressions or numbers."""
    table = {name: as_expr(value) for name, value in constants.items()}
    memo = {}

    def rebuild(node: Expr) -> Expr:
        cached = memo.get(node)
        if cached is not None:
            return cached
        if node.op == CONSTANT:
            result = table.get(node.value, node)
        elif node.op in LEAVES or node.constants.isdisjoint(table):
            result = node
        else:
            result = _make(node.op, [rebuild(child) for child in node.args],
                           node.value)
        memo[node] = result
        return result

    return rebuild(e)


def _make(op: str, args: List[Expr], value) -> Expr:
    if op == NEGATE:
        return neg(args[0])
    if op == SQRT:
        return sqrt(args[0])
    if op == POW:
        return power(args[0], value)
    if op == ADD:
        return add(*args)
    if op == SUB:
        return sub(*args)
    if op == MUL:
        return mul(*args)
    if op == DIV:
        return div(*args)
    raise ValueError('Unknown node kind {!r}'.format(op))


class Evaluator:
    """
    Evaluate expressions at one jet point, sharing a memo across calls.

    Parameters
    ----------
    point : JetPoint
        The point supplying coordinate values.
    constants : dict (optional)
        Values of named constants.
    """
    def __init__(self, point: JetPoint,
                 constants: Optional[Mapping[str, float]] = None):
        self.point = point
        self.constants = dict(constants or {})
        self._memo = {}

    def __call__(self, e: Expr) -> float:
        return self._eval(e)

    def many(self, exprs: Iterable[Expr]) -> numpy.ndarray:
        return numpy.array([self._eval(e) for e in exprs], dtype=float)

    def _eval(self, e: Expr) -> float:
        cached = self._memo.get(e)
        if cached is not None:
            return cached
        op = e.op
        if op == LITERAL:
            result = e.value
        elif op == CONSTANT:
            if e.value not in self.constants:
                raise BindingError('Constant {!r} is not bound'
                                   .format(e.value))
            result = float(self.constants[e.value])
        elif op == COORDINATE:
            result = self._coordinate(e.value)
        else:
            values = []
            for position, child in enumerate(e.args):
                try:
                    values.append(self._eval(child))
                except EvaluationError as error:
                    error.path.insert(0, position)
                    raise
            result = self._apply(op, values, e.value)
        self._memo[e] = result
        return result

    def _coordinate(self, coord: Coord) -> float:
        point = self.point
        if coord.kind != point.chart.kind:
            raise EvaluationError('{} coordinate {} evaluated at a {} point'
                                  .format(coord.kind, coord.name,
                                          point.chart.kind))
        try:
            return point[coord]
        except KeyError:
            raise EvaluationError('Point of order {} has no coordinate {}'
                                  .format(point.order, coord.name))

    @staticmethod
    def _apply(op: str, values: List[float], exponent) -> float:
        if op == NEGATE:
            return -values[0]
        if op == SQRT:
            if values[0] < 0:
                raise EvaluationError('sqrt of negative value {}'
                                      .format(values[0]))
            return math.sqrt(values[0])
        if op == POW:
            base = values[0]
            if exponent.denominator == 2 and base < 0:
                raise EvaluationError('Half-integer power of negative value '
                                      '{}'.format(base))
            if base == 0 and exponent < 0:
                raise EvaluationError('Division by zero in negative power')
            if exponent.denominator == 1:
                return base ** int(exponent)
            return math.sqrt(base) ** int(exponent * 2)
        a, b = values
        if op == ADD:
            return a + b
        if op == SUB:
            return a - b
        if op == MUL:
            return a * b
        if op == DIV:
            if b == 0:
                raise EvaluationError('Division by zero')
            return a / b
        raise EvaluationError('Unknown node kind {!r}'.format(op))


def evaluate(e: Expr, point: JetPoint,
             constants: Optional[Mapping[str, float]] = None) -> float:
    """
    Evaluate ``e`` at ``point`` in double precision.

    Raises
    ------
    EvaluationError
        Raises an ``EvaluationError`` on division by zero, a root of a
        negative value or a coordinate the point does not carry. The error's
        ``path`` locates the failing subtree.
    BindingError
        Raises a ``BindingError`` for an unbound named constant.
    """
    return Evaluator(point, constants)(e)


def evaluate_many(exprs: Sequence[Expr], point: JetPoint,
                  constants: Optional[Mapping[str, float]] = None
                  ) -> numpy.ndarray:
    return Evaluator(point, constants).many(exprs)


class Combination:
    """
    A linear combination of expressions kept as separate terms.

    Evaluating returns the combined value together with the largest term
    magnitude, so residuals can be judged relative to the terms that cancel.

    Parameters
    ----------
    terms : iterable
        ``(coefficient, Expr)`` pairs.
    """
    __slots__ = ('terms',)

    def __init__(self, terms: Iterable[Tuple[float, Expr]] = ()):
        self.terms = tuple((float(c), e) for c, e in terms
                           if c != 0 and not is_literal(e, 0.0))

    @classmethod
    def of(cls, e: Expr, coefficient: float = 1.0) -> 'Combination':
        return cls(((coefficient, e),))

    def __add__(self, other: 'Combination') -> 'Combination':
        return Combination(self.terms + other.terms)

    def __sub__(self, other: 'Combination') -> 'Combination':
        return self + other * -1.0

    def __mul__(self, factor: float) -> 'Combination':
        return Combination((c * factor, e) for c, e in self.terms)

    __rmul__ = __mul__

    def __neg__(self) -> 'Combination':
        return self * -1.0

    def map(self, function) -> 'Combination':
        """Apply a linear map to every expression of the combination."""
        return Combination((c, function(e)) for c, e in self.terms)

    def as_expr(self) -> Expr:
        total = ZERO
        for c, e in self.terms:
            total = total + literal(c) * e
        return total

    def evaluate(self, evaluator: Evaluator) -> Tuple[float, float]:
        value = 0.0
        scale = 0.0
        for c, e in self.terms:
            term = c * evaluator(e)
            value += term
            scale = max(scale, abs(term))
        return value, scale
