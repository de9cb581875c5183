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
import pickle
import pytest
from varjet.errors import BindingError, ChartError, EvaluationError
from varjet.expr import (ONE, ZERO, Combination, DiffOperator, Evaluator,
                         apply_operator, bind_constants, constant,
                         coordinate, evaluate, literal, max_order, partial,
                         power, sqrt, substitute, total_derivative)
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, Coord, JetChart,
                             JetPoint, admissible_ranges, sample_points)


T = Coord(PARAMETRIC, 0, -2)
X1 = Coord(PARAMETRIC, 1, -1)
X2 = Coord(PARAMETRIC, 2, -1)
V1 = Coord(PARAMETRIC, 1, 0)
V2 = Coord(PARAMETRIC, 2, 0)
W1 = Coord(PARAMETRIC, 1, 1)


class TestTrees:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.x1 = coordinate(X1)
        self.x2 = coordinate(X2)
        self.v1 = coordinate(V1)

    def test_nodes_are_interned(self):
        assert coordinate(X1) is self.x1
        assert (self.x1 + self.x2) is (self.x1 + self.x2)
        assert constant('mu') is constant('mu')

    def test_literal_folding(self):
        assert (literal(2) + literal(3)) is literal(5)
        assert (self.x1 * 0) is ZERO
        assert (self.x1 * 1) is self.x1
        assert (self.x1 - self.x1) is ZERO
        assert -(-self.x1) is self.x1
        assert power(self.x1, 0) is ONE

    def test_nested_integer_powers_combine(self):
        assert power(power(self.x1, 2), 3) is power(self.x1, 6)

    def test_invalid_exponents_and_literals(self):
        with pytest.raises(ValueError):
            power(self.x1, 0.3)
        with pytest.raises(ValueError):
            literal(float('inf'))

    def test_nodes_are_immutable(self):
        with pytest.raises(AttributeError):
            self.x1.op = 'add'

    def test_pickling_keeps_identity(self):
        e = sqrt(self.x1 * self.v1 + 2) / self.x2
        assert pickle.loads(pickle.dumps(e)) is e

    def test_orders_and_kinds(self):
        assert max_order(self.x1 * self.x2) == 0
        assert max_order(self.x1 + coordinate(W1)) == 2
        assert (self.x1 + self.v1).kinds == {PARAMETRIC}


class TestDerivatives:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.chart = JetChart(PARAMETRIC, 2, 3)
        self.point = JetPoint.from_vectors(
            self.chart, 0.25, [[0.5, -1.0], [0.3, 0.2], [1.5, -0.5],
                               [2.0, 4.0]])

    def value(self, e):
        return evaluate(e, self.point)

    def test_partial_derivative(self):
        v1 = coordinate(V1)
        assert self.value(partial(power(v1, 3), V1)) == pytest.approx(
            3 * 0.3 ** 2)
        assert partial(coordinate(X2), V1) is ZERO

    def test_partial_outside_chart(self):
        with pytest.raises(ChartError):
            partial(coordinate(X1), Coord(PARAMETRIC, 1, 3), self.chart)

    def test_total_derivative_of_coordinates(self):
        assert total_derivative(coordinate(X1)) is coordinate(V1)
        assert total_derivative(coordinate(T)) is ONE
        assert total_derivative(literal(4.0)) is ZERO

    def test_total_derivative_product_rule(self):
        e = coordinate(T) * coordinate(X1) + power(coordinate(V1), 2)
        expected = 0.5 + 0.25 * 0.3 + 2 * 0.3 * 1.5
        assert self.value(total_derivative(e)) == pytest.approx(expected)

    def test_total_derivative_of_mixed_charts(self):
        mixed = coordinate(X1) + coordinate(Coord(HOMOGENEOUS, 1, -1))
        with pytest.raises(ChartError):
            total_derivative(mixed)

    def test_truncated_operator(self):
        operator = DiffOperator.truncated(PARAMETRIC, 2, -1)
        e = coordinate(X1) * coordinate(X2)
        assert self.value(operator(e)) == pytest.approx(0.3 * -1.0 +
                                                        0.5 * 0.2)
        assert self.value(operator(coordinate(V1))) == 0.0

    def test_full_operator_is_the_total_derivative(self):
        e = coordinate(T) * coordinate(X1) + power(coordinate(V1), 2)
        total = DiffOperator.total(self.chart)
        assert self.value(apply_operator(total, e)) == pytest.approx(
            self.value(total_derivative(e)))

    def test_operator_sum_and_scaling(self):
        d_x1 = DiffOperator({X1: 1.0})
        d_x2 = DiffOperator({X2: 2.0})
        e = coordinate(X1) * coordinate(X2)
        combined = (d_x1 + d_x2).scaled(3.0)
        assert self.value(combined(e)) == pytest.approx(3 * (-1.0 + 2 * 0.5))
        assert DiffOperator({X1: 0.0}) == DiffOperator.zero()

    def test_operator_mixing_charts(self):
        with pytest.raises(ChartError):
            DiffOperator({X1: 1.0, Coord(HOMOGENEOUS, 1, -1): 1.0})
        operator = DiffOperator({X1: 1.0})
        with pytest.raises(ChartError):
            operator(coordinate(Coord(HOMOGENEOUS, 1, -1)))


class TestSubstitution:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.chart = JetChart(PARAMETRIC, 1, 1)
        self.point = JetPoint.from_vectors(self.chart, 2.0, [[3.0], [0.5]])

    def test_substitute_coordinate(self):
        e = coordinate(X1) * coordinate(V1)
        replaced = substitute(e, {X1: power(coordinate(T), 2)})
        assert evaluate(replaced, self.point) == pytest.approx(4.0 * 0.5)

    def test_substitution_is_simultaneous(self):
        e = coordinate(X1) - coordinate(V1)
        swapped = substitute(e, {X1: coordinate(V1), V1: coordinate(X1)})
        assert evaluate(swapped, self.point) == pytest.approx(0.5 - 3.0)

    def test_targets_must_share_a_chart(self):
        with pytest.raises(BindingError):
            substitute(coordinate(X1),
                       {X1: coordinate(Coord(HOMOGENEOUS, 1, -1)),
                        V1: coordinate(T)})

    def test_unbound_foreign_coordinates(self):
        e = coordinate(Coord(HOMOGENEOUS, 1, -1)) + coordinate(
            Coord(HOMOGENEOUS, 0, 0))
        bindings = {Coord(HOMOGENEOUS, 1, -1): coordinate(X1)}
        with pytest.raises(BindingError):
            substitute(e, bindings, self.chart)

    def test_bind_constants(self):
        e = constant('mu') * coordinate(X1)
        bound = bind_constants(e, {'mu': 2.0})
        assert not bound.constants
        assert evaluate(bound, self.point) == pytest.approx(6.0)


class TestEvaluation:
    @pytest.fixture(autouse=True)
    def setup(self):
        self.chart = JetChart(PARAMETRIC, 1, 1)
        self.point = JetPoint.from_vectors(self.chart, 0.0, [[1.0], [1.0]])

    def test_division_by_zero_names_the_subtree(self):
        e = coordinate(X1) + ONE / (coordinate(V1) - coordinate(X1))
        with pytest.raises(EvaluationError) as error:
            evaluate(e, self.point)
        assert error.value.path == [1]
        assert str(error.value) == 'Division by zero (at subtree path 1)'

    def test_root_of_negative_value(self):
        with pytest.raises(EvaluationError):
            evaluate(sqrt(-coordinate(X1)), self.point)
        with pytest.raises(EvaluationError):
            evaluate(power(-coordinate(X1), 0.5), self.point)

    def test_missing_coordinate(self):
        with pytest.raises(EvaluationError):
            evaluate(coordinate(W1), self.point)

    def test_unbound_constant(self):
        with pytest.raises(BindingError):
            evaluate(constant('mu') * coordinate(X1), self.point)
        assert evaluate(constant('mu'), self.point, {'mu': 1.5}) == 1.5

    def test_half_integer_powers(self):
        e = power(coordinate(X1) + 3, -1.5)
        assert evaluate(e, self.point) == pytest.approx(4.0 ** -1.5)

    def test_evaluator_shares_memo(self):
        evaluator = Evaluator(self.point)
        values = evaluator.many([coordinate(X1), coordinate(V1) * 2])
        assert list(values) == [1.0, 2.0]

    def test_combination_reports_term_scale(self):
        x1 = coordinate(X1)
        combination = Combination.of(x1 * 5) - Combination.of(x1 * 5)
        value, scale = combination.evaluate(Evaluator(self.point))
        assert value == 0.0
        assert scale == 5.0
        assert Combination.of(x1, 0.0).terms == ()


class TestRandomTrees:
    @pytest.fixture(autouse=True)
    def setup(self, random_tree):
        self.chart = JetChart(PARAMETRIC, 2, 2)
        point_chart = self.chart.with_order(4)
        self.points = sample_points(point_chart,
                                    admissible_ranges(point_chart), 5, 20)
        self.trees = [random_tree(self.chart, seed) for seed in range(100)]

    def test_leibniz_rule(self):
        operators = [
            lambda e: partial(e, V2),
            total_derivative,
            DiffOperator.truncated(PARAMETRIC, 2, 0),
            DiffOperator({X1: coordinate(X2), V2: 3.0}),
        ]
        for k, point in enumerate(self.points):
            a, b = self.trees[2 * k], self.trees[2 * k + 1]
            for derive in operators:
                left = evaluate(derive(a * b), point)
                right = evaluate(derive(a) * b + a * derive(b), point)
                assert left == pytest.approx(right, rel=1e-10, abs=1e-10)

    def test_partial_matches_central_differences(self):
        h = 1e-6
        coords = self.chart.coordinates()
        for k, tree in enumerate(self.trees):
            point = self.points[k % len(self.points)]
            coord = coords[k % len(coords)]
            value = point[coord]
            forward = evaluate(tree, point.with_values({coord: value + h}))
            backward = evaluate(tree, point.with_values({coord: value - h}))
            estimate = (forward - backward) / (2 * h)
            exact = evaluate(partial(tree, coord), point)
            assert exact == pytest.approx(estimate, rel=1e-6, abs=1e-5)

    def test_partial_and_total_derivative_commutator(self):
        # [d/dv_(r), D_t] = d/dv_(r-1), and d/dx commutes with D_t.
        for k, point in enumerate(self.points):
            tree = self.trees[k]
            for coord in (X1, V1, V2):
                commutator = (partial(total_derivative(tree), coord) -
                              total_derivative(partial(tree, coord)))
                if coord.rank == -1:
                    expected = 0.0
                else:
                    previous = Coord(PARAMETRIC, coord.index, coord.rank - 1)
                    expected = evaluate(partial(tree, previous), point)
                assert evaluate(commutator, point) == pytest.approx(
                    expected, rel=1e-10, abs=1e-10)
