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
import os
import numpy
import pytest
from varjet.errors import AdmissibilityError, ChartError, SingularityError
from varjet.expr import Evaluator, total_derivative
from varjet.jet_core import (HOMOGENEOUS, PARAMETRIC, JetChart, JetPoint,
                             Metric, admissible_ranges, sample_points)
from varjet.top_model import (CROSS_SIGN, TopConfig, build_top_model,
                              calibrate_orientation, compare_trajectories,
                              conserved_momentum, e10_components,
                              effective_sign, family_ranges, hom_components,
                              homogeneous_lagrangian, integrate_batch,
                              integrate_homogeneous, integrate_parametric,
                              momentum_components, mp_planar_form,
                              richardson_ratio,
                              solve_acceleration_homogeneous,
                              solve_acceleration_parametric,
                              write_trajectory_csv)
from varjet.variational import euler_poisson, zermelo_residuals


def family_points(order=3, seed=31, count=4):
    chart = JetChart(HOMOGENEOUS, 2, order)
    return sample_points(chart, family_ranges(chart), seed, count)


def gauge_points(order=3, seed=32, count=4):
    chart = JetChart(PARAMETRIC, 2, order)
    return sample_points(chart, admissible_ranges(chart), seed, count)


@pytest.fixture(scope='module')
def model():
    return build_top_model(mu=0.8)


class TestModel:
    def test_contents(self, model):
        assert sorted(model.forms) == ['E10', 'HOM', 'MPPLANAR']
        assert sorted(model.lagrangians) == ['L1', 'L2', 'LH0', 'LH1', 'LH2']
        assert model.chart == JetChart(PARAMETRIC, 2, 3)
        assert model.constant_values() == {'mu': 0.8, 'sigma3': 1.0,
                                           'eta3': -1.0}
        assert build_top_model(mu=None).constants['mu'] is None

    def test_orientation(self, model):
        assert effective_sign(Metric()) == CROSS_SIGN
        assert effective_sign(Metric(orientation=-1)) == -CROSS_SIGN
        assert calibrate_orientation(model) == effective_sign(model.metric)

    def test_planar_metrics_only(self):
        with pytest.raises(ChartError):
            hom_components(metric=Metric.parse('+-'))

    def test_parametric_equation_in_closed_form(self):
        components = e10_components(0.8)
        for point in gauge_points():
            v1, v2 = point.vector(0)
            w1, w2 = point.vector(1)
            z1, z2 = point.vector(2)
            s = 1 - v1 ** 2 - v2 ** 2
            p = v1 * w1 + v2 * w2
            expected = [
                z2 / s ** 1.5 + 3 * w2 * p / s ** 2.5 +
                0.8 * (s * w1 + v1 * p) / s ** 1.5,
                -z1 / s ** 1.5 - 3 * w1 * p / s ** 2.5 +
                0.8 * (s * w2 + v2 * p) / s ** 1.5]
            numpy.testing.assert_allclose(Evaluator(point).many(components),
                                          expected, rtol=1e-12)

    def test_family_varies_to_the_homogeneous_equation(self, model):
        values = model.constant_values()
        hom = model.form('HOM')
        for name in ('LH0', 'LH1', 'LH2'):
            varied = euler_poisson(model.lagrangian(name))
            for point in family_points():
                numpy.testing.assert_allclose(
                    varied.evaluate(point, values),
                    hom.evaluate(point, values), rtol=1e-9, atol=1e-10)

    def test_family_is_parameter_invariant(self):
        for k in range(3):
            lagrangian = homogeneous_lagrangian(k, mu=0.5)
            for point in family_points(order=2):
                for value in zermelo_residuals(lagrangian, point):
                    assert value == pytest.approx(0.0, abs=1e-10)

    def test_gauge_lagrangian_varies_to_the_parametric_equation(self, model):
        values = model.constant_values()
        varied = euler_poisson(model.lagrangian('L1'))
        e10 = model.form('E10')
        for point in gauge_points():
            numpy.testing.assert_allclose(varied.evaluate(point, values),
                                          e10.evaluate(point, values),
                                          rtol=1e-9, atol=1e-10)

    def test_momentum_rate_is_minus_the_equation(self, model):
        values = model.constant_values()
        rates = [total_derivative(component, HOMOGENEOUS)
                 for component in model.covectors['P']]
        for point in family_points():
            numpy.testing.assert_allclose(
                model.form('HOM').evaluate(point, values),
                -Evaluator(point, values).many(rates), rtol=1e-10,
                atol=1e-12)

    def test_spinning_particle_reduction(self):
        mp = mp_planar_form(0.7, 2.0, -1.0)
        hom = hom_components(0.7 / -2.0)
        for point in family_points():
            numpy.testing.assert_allclose(mp.evaluate(point),
                                          2.0 * Evaluator(point).many(hom),
                                          rtol=1e-10, atol=1e-12)
        with pytest.raises(SingularityError):
            mp_planar_form(1.0, 0.0)


class TestConfig:
    def test_defaults(self):
        cfg = TopConfig()
        X, u, ud = cfg.homogeneous_state()
        numpy.testing.assert_array_equal(X, [0, 0, 0])
        numpy.testing.assert_array_equal(u, [1.0, 0.1, 0.0])
        numpy.testing.assert_array_equal(ud, [0.0, 0.0, 0.2])
        assert cfg.with_step(0.5, 3).steps == 3

    @pytest.mark.parametrize('settings', [
        {'h': 0.0}, {'h': float('nan')}, {'steps': -1},
        {'mu': float('inf')}, {'v0': (0.98, 0.0)},
        {'u0': (-1.0, 0.0, 0.0)},
    ])
    def test_inadmissible_settings(self, settings):
        with pytest.raises(AdmissibilityError):
            TopConfig(**settings)

    def test_state_lengths(self):
        with pytest.raises(ChartError):
            TopConfig(x0=(0.0, 0.0, 0.0))
        with pytest.raises(ChartError):
            TopConfig(u0=(1.0, 0.0))
        with pytest.raises(ChartError):
            TopConfig(metric=Metric.parse('+-'))


class TestAccelerations:
    def test_parametric_solution_solves_the_equation(self):
        components = e10_components(0.8)
        for point in gauge_points(order=2):
            v, w = point.vector(0), point.vector(1)
            z = solve_acceleration_parametric(v, w, 0.8)
            full = JetPoint.from_vectors(JetChart(PARAMETRIC, 2, 3),
                                         point.t_value,
                                         [point.vector(-1), v, w, z])
            numpy.testing.assert_allclose(Evaluator(full).many(components),
                                          [0.0, 0.0], atol=1e-10)

    def test_homogeneous_solution_solves_the_equation(self):
        components = hom_components(0.8)
        for point in family_points(order=2):
            u, ud = point.vector(0), point.vector(1)
            udd = solve_acceleration_homogeneous(u, ud, 0.8)
            full = JetPoint.from_vectors(JetChart(HOMOGENEOUS, 2, 3),
                                         point.t_value,
                                         [point.vector(-1), u, ud, udd])
            numpy.testing.assert_allclose(Evaluator(full).many(components),
                                          [0.0, 0.0, 0.0], atol=1e-9)
            metric = Metric()
            assert metric.dot(udd, u) == pytest.approx(-metric.dot(ud, ud))

    def test_inadmissible_states(self):
        with pytest.raises(AdmissibilityError):
            solve_acceleration_parametric([0.99, 0.0], [0.0, 0.0])
        with pytest.raises(AdmissibilityError):
            solve_acceleration_homogeneous(numpy.array([-1.0, 0.0, 0.0]),
                                           numpy.zeros(3))

    def test_momentum_matches_the_covector(self):
        covector = momentum_components(0.8)
        for point in family_points(order=2):
            numpy.testing.assert_allclose(
                conserved_momentum(point.vector(0), point.vector(1), 0.8),
                Evaluator(point).many(covector), rtol=1e-12)
        with pytest.raises(AdmissibilityError):
            conserved_momentum([0.0, 1.0, 0.0], [0.0, 0.0, 0.0])


class TestIntegration:
    @pytest.fixture(autouse=True)
    def setup(self, tmpdir):
        self.tmpdir = tmpdir
        self.cfg = TopConfig(mu=0.8, h=1e-3, steps=300)

    def test_parametric_run_conserves_momentum(self):
        trajectory = integrate_parametric(self.cfg)
        assert not trajectory.halted
        assert len(trajectory) == 301
        assert trajectory.params[-1] == pytest.approx(0.3)
        assert trajectory.max_momentum_drift() < 1e-10
        assert trajectory.max_norm_drift() > 0.0

    def test_homogeneous_run_keeps_its_norm(self):
        trajectory = integrate_homogeneous(self.cfg)
        assert not trajectory.halted
        assert trajectory.positions.shape == (301, 3)
        assert trajectory.max_momentum_drift() < 1e-10
        assert trajectory.max_norm_drift() < 1e-10

    def test_initial_acceleration_along_u_is_removed(self):
        u0 = (1.0, 0.1, 0.0)
        plain = TopConfig(mu=0.8, h=1e-3, steps=100, u0=u0,
                          ud0=(0.0, 0.0, 0.2))
        skewed = TopConfig(mu=0.8, h=1e-3, steps=100, u0=u0,
                           ud0=(0.3, 0.03, 0.2))
        first, second = (integrate_homogeneous(cfg) for cfg in (plain,
                                                                skewed))
        numpy.testing.assert_allclose(second.positions, first.positions,
                                      rtol=1e-12, atol=1e-12)
        numpy.testing.assert_allclose(second.momenta, first.momenta,
                                      rtol=1e-12, atol=1e-12)
        u, ud = second.velocities[0], second.accelerations[0]
        assert plain.metric.dot(u, ud) == pytest.approx(0.0, abs=1e-12)

    def test_charts_trace_the_same_path(self):
        parametric, homogeneous = integrate_batch(
            [self.cfg], PARAMETRIC, 1) + integrate_batch([self.cfg],
                                                         HOMOGENEOUS, 1)
        assert compare_trajectories(parametric, homogeneous) < 1e-6
        with pytest.raises(ChartError):
            compare_trajectories(homogeneous, parametric)

    def test_batches_match_single_runs(self):
        configs = [self.cfg, TopConfig(mu=0.5, h=1e-3, steps=100)]
        batch = integrate_batch(configs, PARAMETRIC, processes=1)
        single = integrate_parametric(configs[1])
        numpy.testing.assert_array_equal(batch[1].momenta, single.momenta)
        with pytest.raises(ChartError):
            integrate_batch(configs, 'affine')

    def test_fourth_order_convergence(self):
        cfg = TopConfig(mu=1.0, h=0.05, steps=200)
        assert 12.0 < richardson_ratio(cfg, processes=1) < 20.0

    def test_leaving_the_admissible_region_halts(self):
        cfg = TopConfig(v0=(0.95, 0.0), vp0=(5.0, 0.0), h=1e-2, steps=1000)
        trajectory = integrate_parametric(cfg)
        assert trajectory.halted
        assert trajectory.message.startswith('Halted at step')
        assert len(trajectory) < 1001

    def test_csv_output(self):
        trajectory = integrate_parametric(self.cfg.with_step(1e-3, 5))
        path = os.path.join(str(self.tmpdir), 'run.csv')
        write_trajectory_csv(trajectory, path)
        with open(path) as csv_file:
            lines = csv_file.read().splitlines()
        assert lines[0].split(',') == trajectory.columns()
        assert len(lines) == 7
        assert len(lines[1].split(',')) == len(trajectory.columns())
