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
from varjet.errors import ChartError, OrderError
from varjet.expr import (ZERO, Evaluator, coordinate, partial, power,
                         total_derivative)
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             admissible_ranges, sample_points)
from varjet.parser_io import parse_expression
from varjet.variational import (DynamicalForm, LagrangianDef, euler_poisson,
                                generalized_momentum, helmholtz_residuals,
                                helmholtz_residuals_split,
                                random_polynomial_lagrangian,
                                zermelo_residuals)


def points_for(kind, n, order, seed=7, count=5):
    chart = JetChart(kind, n, order)
    return sample_points(chart, admissible_ranges(chart), seed, count)


def parametric_form(*texts):
    chart = JetChart(PARAMETRIC, len(texts), 4)
    return DynamicalForm.of([parse_expression(text, chart) for text in texts],
                            PARAMETRIC, len(texts))


class TestForms:
    def test_component_lookup_uses_chart_indices(self):
        form = parametric_form("v1'", 'x2')
        assert form[1] is coordinate(Coord(PARAMETRIC, 1, 1))
        assert form[2] is coordinate(Coord(PARAMETRIC, 2, -1))
        assert len(form) == 2

    def test_component_count_must_match(self):
        chart = JetChart(PARAMETRIC, 2, 1)
        with pytest.raises(ChartError):
            DynamicalForm((coordinate(Coord(PARAMETRIC, 1, -1)),), chart)

    def test_declared_order_must_match(self):
        chart = JetChart(PARAMETRIC, 1, 3)
        with pytest.raises(OrderError):
            DynamicalForm((coordinate(Coord(PARAMETRIC, 1, 0)),), chart)

    def test_lagrangian_outside_its_chart(self):
        with pytest.raises(ChartError):
            LagrangianDef(coordinate(Coord(PARAMETRIC, 1, 1)),
                          JetChart(PARAMETRIC, 1, 1))


class TestEulerPoisson:
    def test_harmonic_oscillator(self):
        chart = JetChart(PARAMETRIC, 1, 1)
        lagrangian = LagrangianDef.of(
            parse_expression('v1^2 / 2 - x1^2 / 2', chart), PARAMETRIC, 1)
        form = euler_poisson(lagrangian)
        assert form.order == 2
        for point in points_for(PARAMETRIC, 1, 2):
            x1 = point[Coord(PARAMETRIC, 1, -1)]
            w1 = point[Coord(PARAMETRIC, 1, 1)]
            assert form.evaluate(point)[0] == pytest.approx(-x1 - w1)

    def test_second_order_lagrangian(self):
        chart = JetChart(PARAMETRIC, 1, 2)
        lagrangian = LagrangianDef.of(parse_expression("v1'^2 / 2", chart),
                                      PARAMETRIC, 1)
        form = euler_poisson(lagrangian)
        assert form.order == 4
        for point in points_for(PARAMETRIC, 1, 4):
            expected = point[Coord(PARAMETRIC, 1, 3)]
            assert form.evaluate(point)[0] == pytest.approx(expected)

    def test_homogeneous_chart(self):
        chart = JetChart(HOMOGENEOUS, 1, 1)
        lagrangian = LagrangianDef.of(parse_expression('X1 * u0', chart),
                                      HOMOGENEOUS, 1)
        form = euler_poisson(lagrangian)
        for point in points_for(HOMOGENEOUS, 1, 2):
            u = point.vector(0)
            numpy.testing.assert_allclose(form.evaluate(point), [-u[1], u[0]])


class TestLinearity:
    @pytest.mark.parametrize('n,order', [(1, 1), (2, 1), (2, 2), (3, 2)])
    def test_euler_poisson_is_linear(self, n, order):
        rng = numpy.random.default_rng(10 * n + order)
        for seed in range(3):
            first = random_polynomial_lagrangian(n, order, 2 * seed)
            second = random_polynomial_lagrangian(n, order, 2 * seed + 1)
            a, b = (float(c) for c in rng.uniform(-2.0, 2.0, size=2))
            combined = LagrangianDef(a * first.expr + b * second.expr,
                                     JetChart(PARAMETRIC, n, order))
            forms = [euler_poisson(lagrangian)
                     for lagrangian in (combined, first, second)]
            for point in points_for(PARAMETRIC, n, 2 * order, seed, 10):
                whole, e1, e2 = [form.evaluate(point) for form in forms]
                numpy.testing.assert_allclose(whole, a * e1 + b * e2,
                                              rtol=1e-9, atol=1e-9)


class TestHelmholtz:
    def test_variational_form_passes(self):
        form = parametric_form("-v1' - x1")
        for point in points_for(PARAMETRIC, 1, 4):
            residuals = helmholtz_residuals(form, point)
            assert residuals.values.shape == (3, 1, 1)
            assert residuals.max_abs() == pytest.approx(0.0, abs=1e-12)

    def test_damped_oscillator_fails(self):
        form = parametric_form("v1' + v1")
        point = points_for(PARAMETRIC, 1, 4)[0]
        residuals = helmholtz_residuals(form, point)
        assert residuals.values[1, 0, 0] == pytest.approx(2.0)
        assert residuals.max_relative() == pytest.approx(2.0)
        first, rest = helmholtz_residuals_split(form, point)
        assert first.values.shape == (1, 1)
        assert rest.values.shape == (2, 1, 1)
        assert rest.max_abs() == pytest.approx(2.0)

    def test_point_order_must_be_twice_the_form_order(self):
        form = parametric_form("-v1' - x1")
        point = points_for(PARAMETRIC, 1, 3)[0]
        with pytest.raises(OrderError):
            helmholtz_residuals(form, point)

    def test_chart_kinds_must_agree(self):
        form = parametric_form("-v1' - x1")
        point = points_for(HOMOGENEOUS, 1, 4)[0]
        with pytest.raises(ChartError):
            helmholtz_residuals(form, point)

    @pytest.mark.parametrize('n,order', [(1, 1), (2, 1), (3, 1), (1, 2),
                                         (2, 2), (3, 2)])
    def test_generated_lagrangians_are_variational(self, n, order):
        lagrangian = random_polynomial_lagrangian(n, order, 100 * n + order)
        form = euler_poisson(lagrangian)
        for point in points_for(PARAMETRIC, n, 2 * form.order, count=100):
            assert helmholtz_residuals(form, point).max_relative() < 1e-9
            for part in helmholtz_residuals_split(form, point):
                assert part.max_relative() < 1e-9


class TestGeneratedLagrangians:
    def test_same_seed_same_lagrangian(self):
        first = random_polynomial_lagrangian(2, 2, 42)
        second = random_polynomial_lagrangian(2, 2, 42)
        assert first.expr is second.expr
        assert first.order == 2

    def test_affine_lagrangians(self):
        for seed in range(5):
            lagrangian = random_polynomial_lagrangian(2, 2, seed,
                                                      affine=True)
            for i in (1, 2):
                for j in (1, 2):
                    second = partial(
                        partial(lagrangian.expr, Coord(PARAMETRIC, i, 1)),
                        Coord(PARAMETRIC, j, 1))
                    assert second is ZERO

    def test_order_range(self):
        with pytest.raises(OrderError):
            random_polynomial_lagrangian(1, 3, 0)


class TestDivergenceKernel:
    @pytest.mark.parametrize('n,order', [(1, 1), (2, 1), (1, 2), (2, 2)])
    def test_total_derivatives_vary_to_zero(self, random_tree, n, order):
        # D_t raises the top rank by one, so f lives one order lower.
        chart = JetChart(PARAMETRIC, n, order - 1)
        for seed in range(4):
            divergence = total_derivative(random_tree(chart, seed, depth=2))
            form = euler_poisson(LagrangianDef.of(divergence, PARAMETRIC, n,
                                                  order))
            for point in points_for(PARAMETRIC, n, form.order, seed, 3):
                assert numpy.max(numpy.abs(form.evaluate(point))) < 1e-8


class TestZermelo:
    def test_homogeneous_of_degree_one_passes(self):
        chart = JetChart(HOMOGENEOUS, 2, 2)
        text = ("u1 * (u0' * u2 - u2' * u0) / "
                "(sqrt(u0^2 - u1^2 - u2^2) * (u0^2 - u2^2)) "
                "+ sqrt(u0^2 - u1^2 - u2^2)")
        lagrangian = LagrangianDef.of(parse_expression(text, chart),
                                      HOMOGENEOUS, 2)
        for point in points_for(HOMOGENEOUS, 2, 2):
            first, second = zermelo_residuals(lagrangian, point)
            assert first == pytest.approx(0.0, abs=1e-12)
            assert second == pytest.approx(0.0, abs=1e-12)

    def test_degree_two_lagrangian_reproduces_itself(self):
        u0 = coordinate(Coord(HOMOGENEOUS, 0, 0))
        lagrangian = LagrangianDef.of(power(u0, 2), HOMOGENEOUS, 1)
        point = points_for(HOMOGENEOUS, 1, 1)[0]
        first, second = zermelo_residuals(lagrangian, point)
        assert first == pytest.approx(point[Coord(HOMOGENEOUS, 0, 0)] ** 2)
        assert second == 0.0

    def test_parametric_lagrangians_are_rejected(self):
        lagrangian = random_polynomial_lagrangian(1, 1, 0)
        point = points_for(HOMOGENEOUS, 1, 2)[0]
        with pytest.raises(ChartError):
            zermelo_residuals(lagrangian, point)

    def test_order_above_two_is_rejected(self):
        chart = JetChart(HOMOGENEOUS, 1, 3)
        lagrangian = LagrangianDef.of(parse_expression("u1''", chart),
                                      HOMOGENEOUS, 1)
        point = points_for(HOMOGENEOUS, 1, 3)[0]
        with pytest.raises(OrderError):
            zermelo_residuals(lagrangian, point)


class TestMomentum:
    def test_first_order_momentum(self):
        chart = JetChart(PARAMETRIC, 2, 1)
        lagrangian = LagrangianDef.of(
            parse_expression('(v1^2 + v2^2) / 2', chart), PARAMETRIC, 2)
        momentum = generalized_momentum(lagrangian)
        point = points_for(PARAMETRIC, 2, 1)[0]
        numpy.testing.assert_allclose(Evaluator(point).many(momentum),
                                      point.vector(0))

    def test_second_order_momentum(self):
        chart = JetChart(PARAMETRIC, 1, 2)
        lagrangian = LagrangianDef.of(parse_expression("v1 * v1'", chart),
                                      PARAMETRIC, 1)
        momentum = generalized_momentum(lagrangian)
        point = points_for(PARAMETRIC, 1, 3)[0]
        expected = (point[Coord(PARAMETRIC, 1, 1)] -
                    point[Coord(PARAMETRIC, 1, 1)])
        assert Evaluator(point)(momentum[0]) == pytest.approx(expected)
