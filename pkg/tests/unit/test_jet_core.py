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
import numpy
import pytest
from varjet.errors import ChartError, MetricError, RangeError
from varjet.jet_core import (DEFAULT_SEED, HOMOGENEOUS, PARAMETRIC, Coord,
                             JetChart, JetPoint, Metric, admissible_ranges,
                             coordinate_name, levi_civita, prolong_curve,
                             sample_jetpoint, sample_points)


class TestCharts:
    def test_coordinate_names(self):
        assert coordinate_name(Coord(PARAMETRIC, 0, -2)) == 't'
        assert coordinate_name(Coord(PARAMETRIC, 2, -1)) == 'x2'
        assert coordinate_name(Coord(PARAMETRIC, 1, 0)) == 'v1'
        assert coordinate_name(Coord(PARAMETRIC, 1, 2)) == "v1''"
        assert coordinate_name(Coord(HOMOGENEOUS, 0, -2)) == 'zeta'
        assert coordinate_name(Coord(HOMOGENEOUS, 0, -1)) == 'X0'
        assert coordinate_name(Coord(HOMOGENEOUS, 0, 1)) == "u0'"

    def test_coordinate_orders(self):
        assert Coord(PARAMETRIC, 1, -1).order == 0
        assert Coord(PARAMETRIC, 1, 0).order == 1
        assert Coord(PARAMETRIC, 1, 2).order == 3
        assert Coord(PARAMETRIC, 1, 0).next() == Coord(PARAMETRIC, 1, 1)

    def test_independent_variable_has_no_next(self):
        with pytest.raises(ChartError):
            Coord(PARAMETRIC, 0, -2).next()

    def test_indices_depend_on_kind(self):
        assert list(JetChart(PARAMETRIC, 2, 1).indices) == [1, 2]
        assert list(JetChart(HOMOGENEOUS, 2, 1).indices) == [0, 1, 2]
        assert JetChart(HOMOGENEOUS, 3, 0).dim == 4

    def test_invalid_charts(self):
        with pytest.raises(ChartError):
            JetChart('affine', 2, 1)
        with pytest.raises(ChartError):
            JetChart(PARAMETRIC, 0, 1)
        with pytest.raises(ChartError):
            JetChart(PARAMETRIC, 2, -1)

    def test_chart_membership(self):
        chart = JetChart(PARAMETRIC, 2, 2)
        assert chart.contains(Coord(PARAMETRIC, 2, 1))
        assert not chart.contains(Coord(PARAMETRIC, 2, 2))
        assert not chart.contains(Coord(PARAMETRIC, 3, 0))
        assert not chart.contains(Coord(HOMOGENEOUS, 1, 0))
        assert chart.contains(chart.independent)
        with pytest.raises(ChartError):
            chart.coordinate(1, 2)

    def test_coordinates_are_ordered_by_rank(self):
        chart = JetChart(PARAMETRIC, 2, 2)
        names = [coord.name for coord in chart.coordinates()]
        assert names == ['x1', 'x2', 'v1', 'v2', "v1'", "v2'"]

    def test_companion(self):
        companion = JetChart(PARAMETRIC, 2, 3).companion()
        assert companion == JetChart(HOMOGENEOUS, 2, 3)


class TestJetPoints:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.chart = JetChart(PARAMETRIC, 2, 2)
        self.point = JetPoint.from_vectors(self.chart, 0.5,
                                           [[1, 2], [0.1, 0.2], [3, 4]])

    def test_from_vectors(self):
        assert self.point[Coord(PARAMETRIC, 2, -1)] == 2.0
        assert self.point[Coord(PARAMETRIC, 1, 1)] == 3.0
        assert self.point[self.chart.independent] == 0.5
        assert self.point.order == 2
        numpy.testing.assert_array_equal(self.point.vector(0), [0.1, 0.2])

    def test_as_array_starts_with_independent_variable(self):
        numpy.testing.assert_array_equal(self.point.as_array(),
                                         [0.5, 1, 2, 0.1, 0.2, 3, 4])

    def test_missing_coordinates_are_rejected(self):
        with pytest.raises(ChartError):
            JetPoint(self.chart, 0.0, {Coord(PARAMETRIC, 1, -1): 1.0})

    def test_extra_coordinates_are_rejected(self):
        values = dict(self.point.values)
        values[Coord(PARAMETRIC, 1, 2)] = 1.0
        with pytest.raises(ChartError):
            JetPoint(self.chart, 0.0, values)

    def test_wrong_vector_count(self):
        with pytest.raises(ChartError):
            JetPoint.from_vectors(self.chart, 0.0, [[1, 2]])

    def test_with_values(self):
        updated = self.point.with_values({Coord(PARAMETRIC, 1, 0): 0.3,
                                          self.chart.independent: 2.0})
        assert updated[Coord(PARAMETRIC, 1, 0)] == 0.3
        assert updated.t_value == 2.0
        assert self.point[Coord(PARAMETRIC, 1, 0)] == 0.1
        with pytest.raises(ChartError):
            self.point.with_values({Coord(PARAMETRIC, 1, 2): 1.0})

    def test_truncate_and_extend(self):
        short = self.point.truncated(1)
        assert short.order == 1
        assert len(short.values) == 4
        longer = self.point.extended(3, fill=7.0)
        assert longer[Coord(PARAMETRIC, 2, 2)] == 7.0
        assert longer[Coord(PARAMETRIC, 2, 1)] == 4.0
        with pytest.raises(ChartError):
            self.point.truncated(3)


class TestSampling:
    def test_same_seed_same_point(self):
        chart = JetChart(HOMOGENEOUS, 2, 3)
        ranges = admissible_ranges(chart)
        first = sample_jetpoint(chart, ranges, DEFAULT_SEED)
        second = sample_jetpoint(chart, ranges, DEFAULT_SEED)
        numpy.testing.assert_array_equal(first.as_array(),
                                         second.as_array())

    def test_different_seeds_differ(self):
        chart = JetChart(PARAMETRIC, 2, 2)
        ranges = admissible_ranges(chart)
        first = sample_jetpoint(chart, ranges, 1)
        second = sample_jetpoint(chart, ranges, 2)
        assert not numpy.array_equal(first.as_array(), second.as_array())

    def test_samples_respect_ranges(self):
        chart = JetChart(HOMOGENEOUS, 2, 2)
        for point in sample_points(chart, admissible_ranges(chart), 7, 20):
            u = point.vector(0)
            assert 1.2 <= u[0] <= 2.0
            assert numpy.all(numpy.abs(u[1:]) <= 0.7)
            assert numpy.all(numpy.abs(point.vector(1)) <= 1.0)
            assert 0.0 <= point.t_value <= 1.0

    def test_sweeps_are_reproducible(self):
        chart = JetChart(PARAMETRIC, 1, 2)
        ranges = admissible_ranges(chart)
        first = sample_points(chart, ranges, 11, 5)
        second = sample_points(chart, ranges, 11, 5)
        assert len(first) == 5
        for a, b in zip(first, second):
            numpy.testing.assert_array_equal(a.as_array(), b.as_array())

    def test_ranges_must_cover_every_order(self):
        chart = JetChart(PARAMETRIC, 2, 3)
        with pytest.raises(RangeError):
            sample_jetpoint(chart, [(-1, 1), (-1, 1)], 0)

    def test_inverted_interval(self):
        chart = JetChart(PARAMETRIC, 1, 0)
        with pytest.raises(RangeError):
            sample_jetpoint(chart, [(1.0, -1.0)], 0)

    def test_infinite_interval(self):
        chart = JetChart(PARAMETRIC, 1, 0)
        with pytest.raises(RangeError):
            sample_jetpoint(chart, [(0.0, float('inf'))], 0)


class TestCurves:
    def test_prolong_polynomial_curve(self):
        point = prolong_curve({0: [0, 1], 1: [1, 0, 1]}, 2.0, 3)
        assert point.chart == JetChart(HOMOGENEOUS, 1, 3)
        numpy.testing.assert_allclose(point.vector(-1), [2.0, 5.0])
        numpy.testing.assert_allclose(point.vector(0), [1.0, 4.0])
        numpy.testing.assert_allclose(point.vector(1), [0.0, 2.0])
        numpy.testing.assert_allclose(point.vector(2), [0.0, 0.0])
        assert point.t_value == 2.0

    def test_parametric_curve_from_sequence(self):
        point = prolong_curve([[0, 0, 1]], 1.0, 2, PARAMETRIC)
        assert point.chart == JetChart(PARAMETRIC, 1, 2)
        numpy.testing.assert_allclose(point.vector(0), [2.0])

    @pytest.mark.parametrize('kind', [HOMOGENEOUS, PARAMETRIC])
    def test_prolongation_is_additive(self, kind):
        rng = numpy.random.default_rng(11)
        for _ in range(20):
            p, q = rng.uniform(-1.0, 1.0, size=(2, 3, 6))
            at = float(rng.uniform(-1.0, 1.0))
            jets = [prolong_curve(c, at, 4, kind).as_array()[1:]
                    for c in (p, q, p + q)]
            numpy.testing.assert_allclose(jets[2], jets[0] + jets[1],
                                          rtol=1e-12, atol=1e-10)

    def test_gapped_indices(self):
        with pytest.raises(ChartError):
            prolong_curve({0: [1], 2: [1]}, 0.0, 1)


class TestMetric:
    def test_parse_and_render(self):
        metric = Metric.parse('+--')
        assert metric.signature == (1, -1, -1)
        assert str(metric) == '+--'
        assert metric.determinant == 1
        assert metric.dim == 3

    def test_invalid_metrics(self):
        with pytest.raises(MetricError):
            Metric((1, 2, -1))
        with pytest.raises(MetricError):
            Metric(orientation=0)
        with pytest.raises(MetricError):
            Metric.parse('+x-')

    def test_dot_and_lower(self):
        metric = Metric()
        assert metric.dot([2, 1, 1], [1, 1, 1]) == 0.0
        numpy.testing.assert_array_equal(metric.lower([1, 2, 3]),
                                         [1, -2, -3])
        with pytest.raises(MetricError):
            metric.lower([1, 2])

    def test_levi_civita(self):
        symbol = levi_civita(3)
        assert symbol[0, 1, 2] == 1
        assert symbol[1, 0, 2] == -1
        assert symbol[0, 0, 2] == 0
        assert levi_civita(3, -1)[2, 0, 1] == -1

    def test_epsilon_contraction_follows_determinant(self):
        assert Metric().epsilon_contraction() == pytest.approx(6.0)
        assert (Metric((-1, -1, -1)).epsilon_contraction() ==
                pytest.approx(-6.0))

    def test_cross_product(self):
        metric = Metric((1, 1, 1))
        numpy.testing.assert_allclose(metric.cross([1, 0, 0], [0, 1, 0]),
                                      [0, 0, 1])
        numpy.testing.assert_allclose(
            metric.cross([1, 0, 0], [0, 1, 0], sign=-1), [0, 0, -1])
        with pytest.raises(MetricError):
            Metric((1, -1)).cross([1, 0], [0, 1])

    def test_spatial_and_permuted(self):
        metric = Metric((1, -1, 1))
        assert metric.spatial().signature == (-1, 1)
        assert metric.permuted(1).signature == (-1, 1, 1)
        assert metric.permuted(4).signature == (-1, 1, 1)
