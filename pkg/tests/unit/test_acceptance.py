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
import pytest
from varjet.acceptance import (APPENDIX, CHECKS, CRITERIA, DETERMINISM,
                               HOMOGENEOUS_COHERENCE, MP_EQUIVALENCE, NOGO,
                               NORMAL_FORM, REPEATED, SYMMETRY,
                               TWO_LAGRANGIANS, VARIATIONALITY, ZERMELO,
                               Battery, check_generated_lagrangian,
                               relative_difference, run_acceptance)
from varjet.top_model import build_top_model
from varjet.variational import random_polynomial_lagrangian


@pytest.fixture(scope='module')
def battery():
    model = build_top_model()
    return Battery(model, model.constant_values(), seed=11, samples=3,
                   timing=False)


class TestHelpers:
    def test_relative_difference(self):
        assert relative_difference([1.0, 4.0], [1.0, 2.0]) == 1.0
        assert relative_difference([0.5], [0.0]) == 0.5
        assert relative_difference([], []) == 0.0

    def test_criteria_are_complete(self):
        assert len(CRITERIA) == 12
        assert set(CHECKS) == set(CRITERIA)
        assert set(REPEATED) <= set(CRITERIA)

    def test_child_seeds_differ_per_criterion(self, battery):
        seeds = {battery.seed_for(name) for name in CRITERIA}
        assert len(seeds) == len(CRITERIA)
        assert battery.seed_for(ZERMELO) == battery.seed_for(ZERMELO)

    def test_sample_override(self, battery):
        assert battery.count(100) == 3
        model = battery.model
        assert Battery(model, battery.values, 11).count(100) == 100


class TestCriteria:
    @pytest.mark.parametrize('criterion', [
        VARIATIONALITY, TWO_LAGRANGIANS, ZERMELO, HOMOGENEOUS_COHERENCE,
        MP_EQUIVALENCE, NORMAL_FORM, SYMMETRY, APPENDIX, NOGO, DETERMINISM,
    ])
    def test_criterion_passes(self, battery, criterion):
        report, = run_acceptance(battery, [criterion])
        assert report.check == criterion
        assert report.passed, report.detail
        assert report.timing == 0.0

    def test_reports_are_reproducible(self, battery):
        first = [r.to_json() for r in run_acceptance(battery, REPEATED)]
        second = [r.to_json() for r in run_acceptance(battery, REPEATED)]
        assert first == second

    def test_unknown_criterion(self, battery):
        with pytest.raises(KeyError):
            run_acceptance(battery, ['elegance'])

    def test_normal_form_recovers_unit_coefficient(self, battery):
        report, = run_acceptance(battery, [NORMAL_FORM])
        assert report.detail['fitted_constant'] == pytest.approx(
            battery.values['mu'], rel=1e-8)


class TestGeneratedLagrangian:
    @pytest.mark.parametrize('n,order,affine', [
        (1, 1, False), (2, 1, False), (2, 2, True), (1, 2, False),
    ])
    def test_generated_lagrangian_passes(self, n, order, affine):
        lagrangian = random_polynomial_lagrangian(n, order, 5 * n + order,
                                                  affine=affine)
        result = check_generated_lagrangian(lagrangian, 3, count=2)
        assert result.pop('order') in (2, 3, 4)
        for name, value in result.items():
            assert value < 1e-8, name
