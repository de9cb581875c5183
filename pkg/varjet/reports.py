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
Machine-readable check results.

Every command emits ``Report`` records, one JSON object per line with sorted
keys. Non-finite residuals serialize as ``null`` and never pass.
"""
import json
import math
from dataclasses import dataclass, field
from numbers import Real
from time import perf_counter
from typing import Any, Dict, List, Optional

import numpy


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, numpy.ndarray)):
        return [_jsonable(item) for item in value]
    if isinstance(value, (bool, numpy.bool_)):
        return bool(value)
    if isinstance(value, (int, numpy.integer)):
        return int(value)
    if isinstance(value, Real):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class Report:
    """
    The outcome of one check.

    Parameters
    ----------
    check : string
        The name of the check.
    seed : int
        The seed the check was drawn with.
    samples : int
        The number of sampled points or cases.
    max_abs_residual : float
        The largest residual found.
    tolerance : float
        The largest residual that still passes.
    timing : float (optional)
        Wall time in seconds.
    detail : dict (optional)
        Extra values worth recording.
    """
    check: str
    seed: int
    samples: int
    max_abs_residual: float
    tolerance: float
    timing: float = 0.0
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        residual = float(self.max_abs_residual)
        return math.isfinite(residual) and residual <= self.tolerance

    def as_dict(self) -> Dict[str, Any]:
        return _jsonable({
            'check': self.check,
            'seed': self.seed,
            'samples': self.samples,
            'max_abs_residual': self.max_abs_residual,
            'tolerance': self.tolerance,
            'pass': self.passed,
            'timing': self.timing,
            'detail': self.detail,
        })

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


class Stopwatch:
    """Time a check with ``time.perf_counter``; disabled watches read 0."""
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.started = perf_counter()

    def elapsed(self) -> float:
        if not self.enabled:
            return 0.0
        return perf_counter() - self.started


class Bounds:
    """
    Collect named values with their limits as ratios.

    Upper bounds contribute ``value / limit`` and lower bounds
    ``limit / value``; exact checks contribute 0 when the value is 0 and
    infinity otherwise. A criterion holds when the largest ratio is at most
    1.
    """
    def __init__(self):
        self.ratios: List[float] = []
        self.detail: Dict[str, Any] = {}

    def upper(self, name: str, value: float, limit: float) -> None:
        value = float(value)
        self.detail[name] = value
        self.ratios.append(abs(value) / limit if math.isfinite(value)
                           else math.inf)

    def lower(self, name: str, value: float, limit: float) -> None:
        value = float(value)
        self.detail[name] = value
        self.ratios.append(limit / value if value > 0 and math.isfinite(value)
                           else math.inf)

    def exact(self, name: str, value: float) -> None:
        value = float(value)
        self.detail[name] = value
        self.ratios.append(0.0 if value == 0 else math.inf)

    def note(self, name: str, value: Any) -> None:
        self.detail[name] = value

    def worst(self) -> float:
        return max(self.ratios, default=0.0)

    def report(self, check: str, seed: int, samples: int,
               watch: Optional[Stopwatch] = None) -> Report:
        timing = watch.elapsed() if watch is not None else 0.0
        return Report(check, seed, samples, self.worst(), 1.0, timing,
                      dict(self.detail))
