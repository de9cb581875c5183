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
import io
import json
import os
import numpy
from varjet.acceptance import CRITERIA
from varjet.cli import run_command
from varjet.jet_core import HOMOGENEOUS, PARAMETRIC
from varjet.top_model import TopConfig, compare_trajectories, integrate_batch


class TestTopVerification:
    def test_acceptance_battery_passes(self):
        stream = io.StringIO()
        status = run_command(['top-verify', '--samples', '3', '--no-timing',
                              '--seed', '7'], stream)
        records = [json.loads(line) for line in stream.getvalue().splitlines()]
        failed = [r['check'] for r in records if not r['pass']]
        assert status == 0, failed
        assert [r['check'] for r in records] == list(CRITERIA)
        assert all(r['timing'] == 0.0 for r in records)

    def test_same_seed_same_output(self):
        outputs = []
        for _ in range(2):
            stream = io.StringIO()
            run_command(['symmetry', '--name', 'E10', '--samples', '4',
                         '--no-timing', '--seed', '99'], stream)
            outputs.append(stream.getvalue())
        assert outputs[0] == outputs[1]


class TestTrajectories:
    def test_charts_agree_over_a_long_run(self):
        cfg = TopConfig(mu=1.0, h=2e-3, steps=2500, v0=(0.3, -0.1),
                        vp0=(0.1, 0.4))
        parametric, = integrate_batch([cfg], PARAMETRIC, processes=1)
        homogeneous, = integrate_batch([cfg], HOMOGENEOUS, processes=1)
        assert not parametric.halted and not homogeneous.halted
        assert compare_trajectories(parametric, homogeneous) < 1e-6
        assert parametric.max_momentum_drift() < 1e-6
        assert homogeneous.max_momentum_drift() < 1e-6

    def test_simulation_csv(self, tmpdir):
        out = os.path.join(str(tmpdir), 'top.csv')
        stream = io.StringIO()
        status = run_command(['top-simulate', '--steps', '400', '--h',
                              '5e-3', '--out', out], stream)
        assert status == 0
        table = numpy.loadtxt(out, delimiter=',', skiprows=1)
        assert table.shape == (401, 12)
        numpy.testing.assert_allclose(table[:, 0],
                                      numpy.arange(401) * 5e-3)
        assert numpy.max(table[:, -1]) < 1e-6
