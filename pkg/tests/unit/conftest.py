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
from numpy.random import default_rng
from varjet.expr import coordinate, literal, power, sqrt
from varjet.jet_core import JetChart


def make_random_tree(chart: JetChart, seed: int, depth: int = 3):
    """
    Draw a tree over the coordinates of ``chart``.

    Denominators and radicands are shifted squares, so every tree evaluates
    without domain errors at any finite point.
    """
    rng = default_rng(seed)
    leaves = [coordinate(chart.independent)] + [
        coordinate(coord) for coord in chart.coordinates()]

    def leaf():
        if rng.random() < 0.25:
            return literal(round(float(rng.uniform(-2.0, 2.0)), 3))
        return leaves[rng.integers(len(leaves))]

    def grow(level):
        if level == 0:
            return leaf()
        a = grow(level - 1)
        choice = rng.integers(7)
        if choice == 0:
            return a + grow(level - 1)
        if choice == 1:
            return a - grow(level - 1)
        if choice == 2:
            return a * grow(level - 1)
        if choice == 3:
            return a / (1.5 + power(grow(level - 1), 2))
        if choice == 4:
            return sqrt(2 + power(a, 2))
        if choice == 5:
            return power(a, 2)
        return -a

    return grow(depth)


@pytest.fixture
def random_tree():
    return make_random_tree
