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
Coordinate charts, jet points, metrics and deterministic sampling.

A jet coordinate is identified by ``(kind, index, rank)``. Rank ``-2`` is the
independent variable (``t`` or ``zeta``), rank ``-1`` the position and rank
``r >= 0`` the ``r``-th derivative of the velocity, so a chart of order ``k``
carries ranks ``-1 .. k - 1``.
"""
import itertools
import math
from numbers import Real
from dataclasses import dataclass, field
from typing import (Dict, Iterable, List, Mapping, NamedTuple, Optional,
                    Sequence, Tuple, Union)

import numpy
from numpy.polynomial import Polynomial
from numpy.random import SeedSequence, default_rng

from varjet.errors import ChartError, MetricError, RangeError


PARAMETRIC = 'parametric'
HOMOGENEOUS = 'homogeneous'
KINDS = (PARAMETRIC, HOMOGENEOUS)

INDEPENDENT_RANK = -2
POSITION_RANK = -1

DEFAULT_SIGNATURE = (1, -1, -1)
DEFAULT_SEED = 0xC0FFEE
DEFAULT_TOLERANCE = 1e-9
ADMISSIBLE_FLOOR = 0.05

Interval = Tuple[float, float]
Seed = Union[int, SeedSequence]


class Coord(NamedTuple):
    """A single jet coordinate ``(kind, index, rank)``."""
    kind: str
    index: int
    rank: int

    @property
    def is_independent(self) -> bool:
        return self.rank == INDEPENDENT_RANK

    @property
    def order(self) -> int:
        """The jet order needed to carry this coordinate."""
        return max(self.rank + 1, 0)

    def next(self) -> 'Coord':
        """
        Return the coordinate one derivative higher.

        Raises
        ------
        ChartError
            Raises a ``ChartError`` for the independent variable, which has
            no derivative coordinate.
        """
        if self.is_independent:
            raise ChartError('The independent variable has no derivative '
                             'coordinate')
        return Coord(self.kind, self.index, self.rank + 1)

    @property
    def name(self) -> str:
        return coordinate_name(self)


def coordinate_name(coord: Coord) -> str:
    """
    Spell a coordinate the way expressions and model files write it.

    Parametric charts use ``t, x1, v1, v1', v1''`` and homogeneous charts use
    ``zeta, X0, u0, u0', u0''``.
    """
    parametric = coord.kind == PARAMETRIC
    if coord.is_independent:
        return 't' if parametric else 'zeta'
    if coord.rank == POSITION_RANK:
        return '{}{}'.format('x' if parametric else 'X', coord.index)
    return '{}{}{}'.format('v' if parametric else 'u', coord.index,
                           "'" * coord.rank)


@dataclass(frozen=True)
class JetChart:
    """
    A single global jet chart.

    Parameters
    ----------
    kind : string
        Either ``'parametric'`` (positions ``x1..xn`` over ``t``) or
        ``'homogeneous'`` (positions ``X0..Xn`` over ``zeta``).
    n : int
        The highest coordinate index.
    order : int
        The maximum jet order carried by points of this chart.
    """
    kind: str
    n: int
    order: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ChartError('Unknown chart kind {!r}, expected one of {}'
                             .format(self.kind, KINDS))
        if self.n < 1:
            raise ChartError('A chart needs n >= 1, got {}'.format(self.n))
        if self.order < 0:
            raise ChartError('A chart needs order >= 0, got {}'
                             .format(self.order))

    @property
    def indices(self) -> range:
        if self.kind == PARAMETRIC:
            return range(1, self.n + 1)
        return range(0, self.n + 1)

    @property
    def dim(self) -> int:
        return len(self.indices)

    @property
    def independent(self) -> Coord:
        return Coord(self.kind, 0, INDEPENDENT_RANK)

    def coordinate(self, index: int, rank: int) -> Coord:
        coord = Coord(self.kind, index, rank)
        if not self.contains(coord):
            raise ChartError('{} is not a coordinate of the {} chart of '
                             'order {} and n = {}'.format(
                                 coordinate_name(coord) if index >= 0
                                 else coord, self.kind, self.order, self.n))
        return coord

    def contains(self, coord: Coord) -> bool:
        if coord.kind != self.kind:
            return False
        if coord.is_independent:
            return True
        return (coord.index in self.indices and
                POSITION_RANK <= coord.rank < self.order)

    def coordinates(self) -> List[Coord]:
        """All dependent coordinates, ordered by rank then index."""
        return [Coord(self.kind, index, rank)
                for rank in range(POSITION_RANK, self.order)
                for index in self.indices]

    def with_order(self, order: int) -> 'JetChart':
        return JetChart(self.kind, self.n, order)

    def companion(self) -> 'JetChart':
        """The chart of the other kind over the same configuration space."""
        other = HOMOGENEOUS if self.kind == PARAMETRIC else PARAMETRIC
        return JetChart(other, self.n, self.order)


@dataclass(frozen=True)
class JetPoint:
    """
    A numeric assignment to every coordinate of a chart.

    Parameters
    ----------
    chart : JetChart
        The chart the point lives in.
    t_value : float
        The value of the independent variable.
    values : dict
        A ``dict`` mapping every dependent ``Coord`` of the chart to a
        ``float``.
    """
    chart: JetChart
    t_value: float
    values: Dict[Coord, float] = field(default_factory=dict)

    def __post_init__(self):
        values = {coord: float(value) for coord, value in self.values.items()}
        expected = set(self.chart.coordinates())
        missing = expected.difference(values)
        extra = set(values).difference(expected)
        if missing or extra:
            raise ChartError('Jet point does not match its chart: missing {}, '
                             'unexpected {}'.format(
                                 sorted(coordinate_name(c) for c in missing),
                                 sorted(str(c) for c in extra)))
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 't_value', float(self.t_value))

    @classmethod
    def from_vectors(cls, chart: JetChart, t_value: float,
                     vectors: Sequence[Sequence[float]]) -> 'JetPoint':
        """
        Build a point from one vector per jet order.

        ``vectors[0]`` holds the positions, ``vectors[1]`` the velocities
        and so on, each aligned with ``chart.indices``.
        """
        if len(vectors) != chart.order + 1:
            raise ChartError('Expected {} vectors for a chart of order {}, '
                             'got {}'.format(chart.order + 1, chart.order,
                                             len(vectors)))
        values = {}
        for jet_order, vector in enumerate(vectors):
            if len(vector) != chart.dim:
                raise ChartError('Expected {} components at jet order {}, '
                                 'got {}'.format(chart.dim, jet_order,
                                                 len(vector)))
            for index, value in zip(chart.indices, vector):
                values[Coord(chart.kind, index, jet_order - 1)] = value
        return cls(chart, t_value, values)

    @property
    def order(self) -> int:
        return self.chart.order

    def __getitem__(self, coord: Coord) -> float:
        if coord.kind == self.chart.kind and coord.is_independent:
            return self.t_value
        return self.values[coord]

    def vector(self, rank: int) -> numpy.ndarray:
        """Components at ``rank`` as a ``numpy`` array over the indices."""
        return numpy.array([self[Coord(self.chart.kind, index, rank)]
                            for index in self.chart.indices])

    def vectors(self) -> List[numpy.ndarray]:
        return [self.vector(rank)
                for rank in range(POSITION_RANK, self.chart.order)]

    def with_values(self, updates: Mapping[Coord, float]) -> 'JetPoint':
        """Return a copy with some coordinates replaced."""
        values = dict(self.values)
        t_value = self.t_value
        for coord, value in updates.items():
            if coord.kind == self.chart.kind and coord.is_independent:
                t_value = value
            elif coord not in values:
                raise ChartError('{} is not a coordinate of this point'
                                 .format(coordinate_name(coord)))
            else:
                values[coord] = value
        return JetPoint(self.chart, t_value, values)

    def truncated(self, order: int) -> 'JetPoint':
        if order > self.chart.order:
            raise ChartError('Cannot truncate a point of order {} to order {}'
                             .format(self.chart.order, order))
        chart = self.chart.with_order(order)
        return JetPoint(chart, self.t_value,
                        {c: self.values[c] for c in chart.coordinates()})

    def extended(self, order: int, fill: float = 0.0) -> 'JetPoint':
        """Return a point of higher order, new coordinates set to ``fill``."""
        chart = self.chart.with_order(max(order, self.chart.order))
        values = {c: self.values.get(c, fill) for c in chart.coordinates()}
        return JetPoint(chart, self.t_value, values)

    def as_array(self) -> numpy.ndarray:
        return numpy.array([self.t_value] +
                           [self.values[c] for c in self.chart.coordinates()])


def _interval(item: Sequence[float], label: str) -> Interval:
    try:
        low, high = (float(bound) for bound in item)
    except (TypeError, ValueError):
        raise RangeError('Interval for {} must be a (low, high) pair, got {!r}'
                         .format(label, item))
    if not (math.isfinite(low) and math.isfinite(high)):
        raise RangeError('Interval for {} is not finite: ({}, {})'
                         .format(label, low, high))
    if high < low:
        raise RangeError('Interval for {} is inverted: ({}, {})'
                         .format(label, low, high))
    return low, high


def _intervals_for_order(item, dim: int, jet_order: int) -> List[Interval]:
    label = 'jet order {}'.format(jet_order)
    if item is None or len(item) == 0:
        raise RangeError('Interval for {} is empty'.format(label))
    first = item[0]
    if isinstance(first, Real):
        return [_interval(item, label)] * dim
    if len(item) != dim:
        raise RangeError('Expected {} per-component intervals for {}, got {}'
                         .format(dim, label, len(item)))
    return [_interval(entry, label) for entry in item]


def sample_jetpoint(
    chart: JetChart,
    ranges: Sequence,
    seed: Seed,
    t_range: Interval = (0.0, 1.0)
) -> JetPoint:
    """
    Draw a jet point uniformly inside per-order intervals.

    Values are drawn with ``numpy.random.default_rng`` (PCG64): first the
    independent variable, then every jet order in turn with its components
    in index order. The same arguments always give the same point.

    Parameters
    ----------
    chart : JetChart
        The chart to sample.
    ranges : sequence
        One entry per jet order ``0 .. chart.order``. Each entry is either a
        single ``(low, high)`` pair shared by all components or a sequence of
        per-component pairs.
    seed : int or SeedSequence
        The seed for the generator.
    t_range : tuple (optional)
        The interval of the independent variable.

    Returns
    -------
    JetPoint
        The sampled point.

    Raises
    ------
    RangeError
        Raises a ``RangeError`` when an order is not covered or an interval
        is empty, inverted or not finite.
    """
    if len(ranges) < chart.order + 1:
        raise RangeError('Ranges cover {} jet orders but the chart needs {}'
                         .format(len(ranges), chart.order + 1))
    t_low, t_high = _interval(t_range, 'the independent variable')
    per_order = [_intervals_for_order(ranges[k], chart.dim, k)
                 for k in range(chart.order + 1)]
    rng = default_rng(seed)
    t_value = rng.uniform(t_low, t_high)
    vectors = [[rng.uniform(low, high) for low, high in intervals]
               for intervals in per_order]
    return JetPoint.from_vectors(chart, t_value, vectors)


def sample_points(
    chart: JetChart,
    ranges: Sequence,
    seed: int,
    count: int,
    t_range: Interval = (0.0, 1.0)
) -> List[JetPoint]:
    """
    Draw ``count`` points, each from its own spawned child seed.

    Child seeds come from ``SeedSequence(seed).spawn(count)`` so any slice of
    the sweep can be reproduced independently.
    """
    children = SeedSequence(seed).spawn(count)
    return [sample_jetpoint(chart, ranges, child, t_range)
            for child in children]


def admissible_ranges(chart: JetChart) -> List:
    """
    Standard sampling ranges keeping the top model inside its domain.

    Parametric velocities stay in ``[-0.5, 0.5]`` so that
    ``1 - v1^2 - v2^2 >= 0.5``. Homogeneous velocities use
    ``u0 in [1.2, 2]`` and ``ui in [-0.7, 0.7]``.
    """
    ranges = [(-1.0, 1.0)]
    if chart.order >= 1:
        if chart.kind == PARAMETRIC:
            ranges.append((-0.5, 0.5))
        else:
            ranges.append([(1.2, 2.0)] + [(-0.7, 0.7)] * chart.n)
    ranges.extend([(-1.0, 1.0)] * max(chart.order - 1, 0))
    return ranges


def prolong_curve(
    coeffs: Union[Mapping[int, Sequence[float]], Sequence[Sequence[float]]],
    at: float,
    order: int,
    kind: str = HOMOGENEOUS
) -> JetPoint:
    """
    Take the jet of a polynomial curve.

    Parameters
    ----------
    coeffs : dict or sequence
        Ascending polynomial coefficients per dependent coordinate, keyed by
        coordinate index, or a sequence aligned with the chart's indices
        (``0..n`` for homogeneous charts, ``1..n`` for parametric ones).
    at : float
        The curve parameter at which the jet is taken.
    order : int
        The jet order of the returned point.
    kind : string (optional)
        The chart kind of the returned point.

    Returns
    -------
    JetPoint
        The exact derivatives of the curve up to ``order``.
    """
    base = 0 if kind == HOMOGENEOUS else 1
    if not isinstance(coeffs, Mapping):
        coeffs = {base + offset: c for offset, c in enumerate(coeffs)}
    indices = sorted(coeffs)
    n = len(indices) - 1 + base
    if indices != list(range(base, n + 1)):
        raise ChartError('Curve indices {} do not form a {} chart'
                         .format(indices, kind))
    chart = JetChart(kind, n, order)
    polynomials = {index: Polynomial(numpy.asarray(coeffs[index], dtype=float))
                   for index in indices}
    vectors = [[polynomials[index].deriv(jet_order)(at)
                if jet_order else polynomials[index](at)
                for index in chart.indices]
               for jet_order in range(order + 1)]
    return JetPoint.from_vectors(chart, at, vectors)


def levi_civita(dim: int, orientation: int = 1) -> numpy.ndarray:
    """The permutation symbol of ``dim`` indices with ``e[0, 1, ...]`` set."""
    symbol = numpy.zeros((dim,) * dim)
    for permutation in itertools.permutations(range(dim)):
        inversions = sum(1 for a, b in itertools.combinations(permutation, 2)
                         if a > b)
        symbol[permutation] = orientation * (-1) ** inversions
    return symbol


@dataclass(frozen=True)
class Metric:
    """
    A diagonal metric with entries of modulus one.

    Parameters
    ----------
    signature : tuple (optional)
        The diagonal entries, each ``+1`` or ``-1``. Defaults to
        ``(1, -1, -1)``.
    orientation : int (optional)
        The value of the lowered permutation symbol at ``(0, 1, ..., n)``.
    """
    signature: Tuple[int, ...] = DEFAULT_SIGNATURE
    orientation: int = 1

    def __post_init__(self):
        signature = tuple(int(entry) for entry in self.signature)
        if not signature:
            raise MetricError('A metric needs at least one entry')
        if any(entry not in (1, -1) for entry in signature):
            raise MetricError('Metric entries must be +1 or -1, got {}'
                              .format(self.signature))
        if self.orientation not in (1, -1):
            raise MetricError('Orientation must be +1 or -1, got {}'
                              .format(self.orientation))
        object.__setattr__(self, 'signature', signature)

    @classmethod
    def parse(cls, text: str, orientation: int = 1) -> 'Metric':
        """Read a signature written as ``+--``."""
        text = text.strip()
        if not text or set(text) - {'+', '-'}:
            raise MetricError('Signature must be written with + and -, got '
                              '{!r}'.format(text))
        return cls(tuple(1 if sign == '+' else -1 for sign in text),
                   orientation)

    def __str__(self) -> str:
        return ''.join('+' if entry > 0 else '-' for entry in self.signature)

    @property
    def dim(self) -> int:
        return len(self.signature)

    @property
    def matrix(self) -> numpy.ndarray:
        return numpy.diag(numpy.array(self.signature, dtype=float))

    @property
    def determinant(self) -> int:
        return int(numpy.prod(self.signature))

    def dot(self, a: Iterable[float], b: Iterable[float]) -> float:
        return float(numpy.dot(self.lower(a), numpy.asarray(b, dtype=float)))

    def lower(self, a: Iterable[float]) -> numpy.ndarray:
        """Lower (or, equivalently for this metric, raise) an index."""
        a = numpy.asarray(a, dtype=float)
        if a.shape != (self.dim,):
            raise MetricError('Expected a {}-vector, got shape {}'
                              .format(self.dim, a.shape))
        return numpy.array(self.signature, dtype=float) * a

    def levi_civita(self) -> numpy.ndarray:
        return levi_civita(self.dim, self.orientation)

    def raised_levi_civita(self) -> numpy.ndarray:
        symbol = self.levi_civita()
        inverse = numpy.array(self.signature, dtype=float)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.dim
            symbol = symbol * inverse.reshape(shape)
        return symbol

    def epsilon_contraction(self) -> float:
        """Full contraction of the lowered and raised permutation symbols."""
        return float(numpy.sum(self.levi_civita() *
                               self.raised_levi_civita()))

    def cross(self, a: Iterable[float], b: Iterable[float],
              sign: int = 1) -> numpy.ndarray:
        """
        Cross product of two vectors in three dimensions as a covector.

        ``(a x b)_k = sign * e_kij a^i b^j`` with the lowered permutation
        symbol of this metric.
        """
        if self.dim != 3:
            raise MetricError('Cross products need a 3-dimensional metric, '
                              'this one has {}'.format(self.dim))
        return sign * numpy.einsum('kij,i,j->k', self.levi_civita(),
                                   numpy.asarray(a, dtype=float),
                                   numpy.asarray(b, dtype=float))

    def spatial(self) -> 'Metric':
        """The metric restricted to the axes after the first."""
        return Metric(self.signature[1:], self.orientation)

    def permuted(self, shift: int) -> 'Metric':
        """Cyclically shift the axes, so entry ``shift`` becomes entry 0."""
        shift %= self.dim
        return Metric(self.signature[shift:] + self.signature[:shift],
                      self.orientation)
