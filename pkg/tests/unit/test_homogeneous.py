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
from varjet.errors import ChartError, OrderError, ProjectionError
from varjet.expr import Evaluator, coordinate, substitute
from varjet.homogeneous import (lift_equation, lift_form, lift_lagrangian,
                                permute_point, project_jet,
                                projection_bindings)
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             JetPoint, admissible_ranges, prolong_curve,
                             sample_points)
from varjet.variational import (LagrangianDef, euler_poisson,
                                random_polynomial_lagrangian,
                                zermelo_residuals)


def homogeneous_points(n, order, seed=3, count=5):
    chart = JetChart(HOMOGENEOUS, n, order)
    return sample_points(chart, admissible_ranges(chart), seed, count)


class TestProjection:
    def test_projection_of_a_reparametrized_parabola(self):
        # X0 = zeta^2 and X1 = zeta^4 trace x1 = t^2.
        point = prolong_curve({0: [0, 0, 1], 1: [0, 0, 0, 0, 1]}, 1.0, 3)
        projected = project_jet(point)
        assert projected.chart == JetChart(PARAMETRIC, 1, 3)
        assert projected.t_value == pytest.approx(1.0)
        numpy.testing.assert_allclose(
            [vector[0] for vector in projected.vectors()],
            [1.0, 2.0, 2.0, 0.0], atol=1e-12)

    def test_projection_of_a_cubic(self):
        # X0 = zeta^2 and X1 = zeta^6 trace x1 = t^3.
        changed = prolong_curve({0: [0, 0, 1], 1: [0, 0, 0, 0, 0, 0, 1]},
                                0.75, 3)
        second = project_jet(changed)
        assert second.t_value == pytest.approx(0.5625)
        numpy.testing.assert_allclose(second.vector(0), [3 * 0.5625 ** 2])
        numpy.testing.assert_allclose(second.vector(1), [6 * 0.5625])
        numpy.testing.assert_allclose(second.vector(2), [6.0])

    def test_singular_projection(self):
        point = JetPoint.from_vectors(JetChart(HOMOGENEOUS, 1, 1), 0.0,
                                      [[0.0, 1.0], [0.0, 1.0]])
        with pytest.raises(ProjectionError):
            project_jet(point)

    def test_projection_orders(self):
        point = homogeneous_points(2, 2)[0]
        assert project_jet(point).order == 2
        assert project_jet(point, 1).order == 1
        with pytest.raises(OrderError):
            project_jet(point, 3)
        with pytest.raises(OrderError):
            project_jet(homogeneous_points(1, 4)[0], 4)

    def test_parametric_points_are_rejected(self):
        chart = JetChart(PARAMETRIC, 1, 1)
        point = sample_points(chart, admissible_ranges(chart), 0, 1)[0]
        with pytest.raises(ChartError):
            project_jet(point)

    def test_bindings_agree_with_numeric_projection(self):
        bindings = projection_bindings(2, 3)
        target = JetChart(HOMOGENEOUS, 2, 3)
        names = [Coord(PARAMETRIC, index, rank) for rank in (0, 1, 2)
                 for index in (1, 2)]
        for point in homogeneous_points(2, 3):
            projected = project_jet(point)
            evaluator = Evaluator(point)
            for coord in names:
                composed = substitute(coordinate(coord), bindings, target)
                assert evaluator(composed) == pytest.approx(projected[coord])


class TestLifts:
    @pytest.mark.parametrize('order', [1, 2])
    def test_lifted_lagrangians_are_parameter_invariant(self, order):
        lagrangian = random_polynomial_lagrangian(2, order, 17 + order)
        lifted = lift_lagrangian(lagrangian)
        assert lifted.chart.kind == HOMOGENEOUS
        for point in homogeneous_points(2, 2):
            for value in zermelo_residuals(lifted, point):
                assert value == pytest.approx(0.0, abs=1e-9)

    def test_lifted_lagrangian_varies_to_lifted_form(self):
        lagrangian = random_polynomial_lagrangian(2, 1, 5)
        varied = euler_poisson(lift_lagrangian(lagrangian))
        form = euler_poisson(lagrangian)
        for point in homogeneous_points(2, 2):
            numpy.testing.assert_allclose(varied.evaluate(point),
                                          lift_equation(form, point),
                                          rtol=1e-9, atol=1e-10)

    def test_lift_equation_is_orthogonal_to_velocity(self):
        form = euler_poisson(random_polynomial_lagrangian(2, 1, 8))
        for point in homogeneous_points(2, 2):
            lifted = lift_equation(form, point)
            assert len(lifted) == 3
            assert numpy.dot(point.vector(0), lifted) == pytest.approx(
                0.0, abs=1e-12)

    def test_lift_form_matches_numeric_lift(self):
        form = euler_poisson(random_polynomial_lagrangian(1, 1, 9))
        trees = lift_form(form)
        assert trees.chart.kind == HOMOGENEOUS
        for point in homogeneous_points(1, 2):
            numpy.testing.assert_allclose(trees.evaluate(point),
                                          lift_equation(form, point),
                                          rtol=1e-10, atol=1e-12)

    def test_lift_limits(self):
        chart = JetChart(PARAMETRIC, 1, 3)
        third = LagrangianDef(coordinate(Coord(PARAMETRIC, 1, 2)), chart)
        with pytest.raises(OrderError):
            lift_lagrangian(third)
        homogeneous = LagrangianDef.of(coordinate(Coord(HOMOGENEOUS, 0, 0)),
                                       HOMOGENEOUS, 1)
        with pytest.raises(ChartError):
            lift_lagrangian(homogeneous)


class TestPermutation:
    def test_cyclic_shift(self):
        point = JetPoint.from_vectors(JetChart(HOMOGENEOUS, 2, 1), 0.0,
                                      [[1, 2, 3], [4, 5, 6]])
        shifted = permute_point(point, 1)
        numpy.testing.assert_array_equal(shifted.vector(-1), [2, 3, 1])
        numpy.testing.assert_array_equal(shifted.vector(0), [5, 6, 4])
        numpy.testing.assert_array_equal(permute_point(point, 3).vector(0),
                                         [4, 5, 6])
