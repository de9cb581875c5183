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
Exceptions raised by varjet.

Every error derives from ``VarjetError`` which is itself a ``RuntimeError``,
so callers that only care about failure can keep catching ``RuntimeError``.
"""
from typing import List, Optional


class VarjetError(RuntimeError):
    """Base class of every error raised by the package."""


class ChartError(VarjetError):
    """A coordinate or operator does not belong to the chart in use."""


class MetricError(VarjetError):
    """A metric signature or orientation is malformed."""


class RangeError(VarjetError):
    """A sampling interval is missing, empty, inverted or not finite."""


class BindingError(VarjetError):
    """A named constant or a substituted coordinate has no binding."""


class EvaluationError(VarjetError):
    """
    Numeric evaluation of an expression failed.

    Parameters
    ----------
    message : string
        A ``string`` describing the failure.
    path : list (optional)
        The child indices leading from the evaluated root to the node which
        failed. Filled in while the error unwinds through the tree.
    """
    def __init__(self, message: str, path: Optional[List[int]] = None):
        super().__init__(message)
        self.message = message
        self.path = list(path or [])

    def __str__(self) -> str:
        if not self.path:
            return self.message
        return '{} (at subtree path {})'.format(
            self.message, '/'.join(str(index) for index in self.path))


class ExpressionSyntaxError(VarjetError):
    """
    Expression text could not be parsed.

    Parameters
    ----------
    message : string
        A ``string`` describing the failure.
    line : int
        The 1-based line of the offending token.
    column : int
        The 1-based column of the offending token.
    """
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__('line {}, column {}: {}'.format(line, column,
                                                         message))
        self.line = line
        self.column = column


class ModelFormatError(VarjetError):
    """
    A model file is malformed.

    Parameters
    ----------
    message : string
        A ``string`` describing the failure.
    path : string (optional)
        The file being read, if any.
    line : int (optional)
        The 1-based line of the offending entry, if known.
    """
    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None):
        location = path or '<model>'
        if line is not None:
            location = '{}:{}'.format(location, line)
        super().__init__('{}: {}'.format(location, message))
        self.path = path
        self.line = line


class OrderError(VarjetError):
    """A jet point is too short or an unsupported order was requested."""


class ProjectionError(VarjetError):
    """The homogeneous to parametric projection is singular (u0 = 0)."""


class NormalFormError(VarjetError):
    """A dynamical form does not have the requested normal-form structure."""


class SingularityError(VarjetError):
    """A coefficient required to be invertible or nonzero vanishes."""


class AdmissibilityError(VarjetError):
    """A state lies outside the admissible (timelike) region."""


class GeneratorError(VarjetError):
    """Lorentz generator data is malformed."""
