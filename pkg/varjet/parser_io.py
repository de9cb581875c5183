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
Expression text, model files and their rendering.

Expression grammar::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ('^' exponent)?
    atom     := number | ident | '(' expr ')' | 'sqrt' '(' expr ')'
    exponent := ['-'] integer | number | '(' ['-'] integer ['/' integer] ')'

so ``-x^2`` reads as ``-(x^2)``. Identifiers are coordinates of the chart
(``t, x1, v1, v1'`` or ``zeta, X0, u0, u0'``) or named constants.
"""
import logging
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Set, Tuple

from varjet.errors import (BindingError, ChartError, ExpressionSyntaxError,
                           MetricError, ModelFormatError, OrderError)
from varjet.expr import (ADD, COORDINATE, CONSTANT, DIV, Expr, LITERAL, MUL,
                         NEGATE, POW, SQRT, SUB, bind_constants, constant,
                         coordinate, literal, power, sqrt)
from varjet.jet_core import (HOMOGENEOUS, KINDS, PARAMETRIC, Coord, JetChart,
                             Metric)
from varjet.variational import DynamicalForm, LagrangianDef


logger = logging.getLogger(__name__)

FREE = 'free'

_TOKEN = re.compile(r"""
    (?P<space>[ \t\r\n]+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*'*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)

_COORDINATE_PATTERNS = {
    PARAMETRIC: (re.compile(r'^t$'), re.compile(r'^x(\d+)$'),
                 re.compile(r"^v(\d+)('*)$")),
    HOMOGENEOUS: (re.compile(r'^zeta$'), re.compile(r'^X(\d+)$'),
                  re.compile(r"^u(\d+)('*)$")),
}

_MODEL_KEYS = {'chart', 'dim', 'order', 'signature', 'orientation'}


class _Token:
    __slots__ = ('kind', 'text', 'line', 'column')

    def __init__(self, kind: str, text: str, line: int, column: int):
        self.kind = kind
        self.text = text
        self.line = line
        self.column = column


def _tokenize(text: str, line: int = 1) -> List[_Token]:
    tokens = []
    position = 0
    column = 1
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            raise ExpressionSyntaxError('Unexpected character {!r}'
                                        .format(text[position]), line, column)
        kind = match.lastgroup
        chunk = match.group()
        if kind != 'space':
            tokens.append(_Token(kind, chunk, line, column))
        newlines = chunk.count('\n')
        if newlines:
            line += newlines
            column = len(chunk) - chunk.rfind('\n')
        else:
            column += len(chunk)
        position = match.end()
    tokens.append(_Token('end', '', line, column))
    return tokens


def coordinate_from_name(name: str, kind: str) -> Optional[Coord]:
    """Read a coordinate spelled for a chart kind, or ``None``."""
    independent, position, derivative = _COORDINATE_PATTERNS[kind]
    if independent.match(name):
        return Coord(kind, 0, -2)
    match = position.match(name)
    if match:
        return Coord(kind, int(match.group(1)), -1)
    match = derivative.match(name)
    if match:
        return Coord(kind, int(match.group(1)), len(match.group(2)))
    return None


def identifier_kind(name: str) -> Optional[str]:
    """The chart kind whose spelling ``name`` uses, if any."""
    for kind in KINDS:
        if coordinate_from_name(name, kind) is not None:
            return kind
    return None


class _Parser:
    def __init__(self, tokens: List[_Token], chart: JetChart,
                 constants: Optional[Set[str]]):
        self.tokens = tokens
        self.position = 0
        self.chart = chart
        self.constants = constants

    @property
    def current(self) -> _Token:
        return self.tokens[self.position]

    def _error(self, message: str, token: Optional[_Token] = None):
        token = token or self.current
        return ExpressionSyntaxError(message, token.line, token.column)

    def _advance(self) -> _Token:
        token = self.current
        self.position += 1
        return token

    def _expect(self, text: str) -> _Token:
        if self.current.text != text:
            raise self._error('Expected {!r} but found {!r}'.format(
                text, self.current.text or 'end of input'))
        return self._advance()

    def parse(self) -> Expr:
        result = self._expression()
        if self.current.kind != 'end':
            raise self._error('Unexpected {!r} after expression'
                              .format(self.current.text))
        return result

    def _expression(self) -> Expr:
        result = self._term()
        while self.current.text in ('+', '-'):
            operator = self._advance().text
            right = self._term()
            result = result + right if operator == '+' else result - right
        return result

    def _term(self) -> Expr:
        result = self._unary()
        while self.current.text in ('*', '/'):
            operator = self._advance().text
            right = self._unary()
            result = result * right if operator == '*' else result / right
        return result

    def _unary(self) -> Expr:
        if self.current.text == '-':
            self._advance()
            return -self._unary()
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.current.text == '^':
            self._advance()
            token = self.current
            exponent = self._exponent()
            try:
                return power(base, exponent)
            except ValueError as error:
                raise self._error(str(error), token)
        return base

    def _integer(self) -> int:
        token = self.current
        if token.kind != 'number' or not token.text.isdigit():
            raise self._error('Expected an integer exponent, found {!r}'
                              .format(token.text or 'end of input'))
        self._advance()
        return int(token.text)

    def _exponent(self) -> Fraction:
        if self.current.text == '(':
            self._advance()
            sign = 1
            if self.current.text == '-':
                self._advance()
                sign = -1
            numerator = self._integer()
            denominator = 1
            if self.current.text == '/':
                self._advance()
                denominator = self._integer()
                if denominator == 0:
                    raise self._error('Zero denominator in exponent')
            self._expect(')')
            return Fraction(sign * numerator, denominator)
        sign = 1
        if self.current.text == '-':
            self._advance()
            sign = -1
        token = self.current
        if token.kind != 'number':
            raise self._error('Expected an exponent, found {!r}'
                              .format(token.text or 'end of input'))
        self._advance()
        value = Fraction(token.text)
        if value.denominator not in (1, 2):
            raise self._error('Exponent {} is neither an integer nor a half '
                              'integer'.format(token.text), token)
        return sign * value

    def _atom(self) -> Expr:
        token = self.current
        if token.kind == 'number':
            self._advance()
            return literal(float(token.text))
        if token.text == '(':
            self._advance()
            result = self._expression()
            self._expect(')')
            return result
        if token.kind == 'ident':
            self._advance()
            if token.text == 'sqrt':
                self._expect('(')
                result = self._expression()
                self._expect(')')
                return sqrt(result)
            return self._identifier(token)
        raise self._error('Unexpected {!r}'.format(token.text or
                                                   'end of input'))

    def _identifier(self, token: _Token) -> Expr:
        name = token.text
        kind = identifier_kind(name)
        if kind is not None:
            coord = coordinate_from_name(name, kind)
            if not self.chart.contains(coord):
                raise self._error('Unknown identifier {!r} for the {} chart '
                                  'with n = {} and order {}'.format(
                                      name, self.chart.kind, self.chart.n,
                                      self.chart.order), token)
            return coordinate(coord)
        if "'" in name:
            raise self._error('Unknown identifier {!r}'.format(name), token)
        if self.constants is not None and name not in self.constants:
            raise self._error('Unknown identifier {!r}: not a coordinate or a '
                              'declared constant'.format(name), token)
        return constant(name)


def parse_expression(text: str, chart: JetChart,
                     constants: Optional[Set[str]] = None,
                     line: int = 1) -> Expr:
    """
    Parse expression text for a chart.

    Parameters
    ----------
    text : string
        The expression text.
    chart : JetChart
        The chart whose coordinates may appear.
    constants : set (optional)
        When given, the only names allowed as constants. Otherwise any
        identifier that is not a coordinate spelling is a named constant.
    line : int (optional)
        The line number of the text's first line, used in error locations.

    Returns
    -------
    Expr
        The parsed tree.

    Raises
    ------
    ExpressionSyntaxError
        Raises an ``ExpressionSyntaxError`` with line and column on malformed
        text or an identifier unknown to the chart.
    """
    return _Parser(_tokenize(text, line), chart, constants).parse()


def _render_number(value: float) -> str:
    text = format(value, '.17g')
    if value < 0:
        return '({})'.format(text)
    return text


def _render_exponent(exponent: Fraction) -> str:
    if exponent.denominator == 1:
        return str(exponent.numerator)
    return '({}/{})'.format(exponent.numerator, exponent.denominator)


_SYMBOLS = {ADD: '+', SUB: '-', MUL: '*', DIV: '/'}


def render_expression(e: Expr) -> str:
    """
    Render a tree as fully parenthesized text.

    Literals use 17 significant digits so the text parses back to a tree
    with identical values.
    """
    memo = {}

    def render(node: Expr) -> str:
        cached = memo.get(node)
        if cached is not None:
            return cached
        op = node.op
        if op == LITERAL:
            text = _render_number(node.value)
        elif op == CONSTANT:
            text = node.value
        elif op == COORDINATE:
            text = node.value.name
        elif op == NEGATE:
            text = '(-{})'.format(render(node.args[0]))
        elif op == SQRT:
            text = 'sqrt({})'.format(render(node.args[0]))
        elif op == POW:
            text = '({}^{})'.format(render(node.args[0]),
                                    _render_exponent(node.value))
        else:
            text = '({} {} {})'.format(render(node.args[0]), _SYMBOLS[op],
                                       render(node.args[1]))
        memo[node] = text
        return text

    return render(e)


@dataclass(frozen=True)
class Model:
    """
    A validated model file.

    Parameters
    ----------
    chart : JetChart
        The primary chart declared in ``[model]``. Expressions may also use
        its companion chart of the other kind.
    metric : Metric
        The metric used by vector operations.
    constants : dict
        Constant values; ``None`` marks a free constant.
    lagrangians : dict
        Named Lagrangians.
    forms : dict
        Named dynamical forms.
    covectors : dict
        Named covector expressions, such as momenta.
    """
    chart: JetChart
    metric: Metric
    constants: Dict[str, Optional[float]] = field(default_factory=dict)
    lagrangians: Dict[str, LagrangianDef] = field(default_factory=dict)
    forms: Dict[str, DynamicalForm] = field(default_factory=dict)
    covectors: Dict[str, Tuple[Expr, ...]] = field(default_factory=dict)

    def chart_for(self, kind: str) -> JetChart:
        if kind == self.chart.kind:
            return self.chart
        return self.chart.companion()

    def lagrangian(self, name: str) -> LagrangianDef:
        if name not in self.lagrangians:
            available = ', '.join(sorted(self.lagrangians))
            raise ModelFormatError('No lagrangian named {!r}; available: {}'
                                   .format(name, available))
        return self.lagrangians[name]

    def form(self, name: str) -> DynamicalForm:
        if name not in self.forms:
            raise ModelFormatError('No form named {!r}; available: {}'
                                   .format(name,
                                           ', '.join(sorted(self.forms))))
        return self.forms[name]

    def constant_values(self, overrides: Optional[Mapping[str, float]] = None
                        ) -> Dict[str, float]:
        """
        Numeric values of every constant.

        Raises
        ------
        BindingError
            Raises a ``BindingError`` when a free constant has no override.
        """
        overrides = dict(overrides or {})
        unknown = set(overrides).difference(self.constants)
        if unknown:
            raise BindingError('Unknown constants {}'.format(sorted(unknown)))
        values = {}
        for name, value in self.constants.items():
            value = overrides.get(name, value)
            if value is None:
                raise BindingError('Constant {!r} is free and needs a value'
                                   .format(name))
            values[name] = float(value)
        return values

    def bound(self, overrides: Optional[Mapping[str, float]] = None
              ) -> 'Model':
        """Return a copy with every constant replaced by its value."""
        values = self.constant_values(overrides)
        return Model(
            self.chart, self.metric, dict(values),
            {name: LagrangianDef(bind_constants(lag.expr, values), lag.chart)
             for name, lag in self.lagrangians.items()},
            {name: DynamicalForm(tuple(bind_constants(c, values)
                                       for c in form.components), form.chart)
             for name, form in self.forms.items()},
            {name: tuple(bind_constants(c, values) for c in components)
             for name, components in self.covectors.items()})


class _Section:
    def __init__(self, kind: str, name: Optional[str], line: int):
        self.kind = kind
        self.name = name
        self.line = line
        self.entries = []  # type: List[Tuple[str, str, int]]


_SECTION = re.compile(r'^\[\s*(model|constants|lagrangian|form|covector)'
                      r'(?:\s+([A-Za-z_][A-Za-z0-9_]*))?\s*\]$')


def _read_sections(text: str, path: Optional[str]) -> List[_Section]:
    sections = []
    pending = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split('#', 1)[0].rstrip()
        if pending is not None:
            key, value, start = pending
            value = value + ' ' + stripped.strip()
            if value.endswith('\\'):
                pending = (key, value[:-1], start)
            else:
                sections[-1].entries.append((key, value.strip(), start))
                pending = None
            continue
        if not stripped.strip():
            continue
        stripped = stripped.strip()
        if stripped.startswith('['):
            match = _SECTION.match(stripped)
            if match is None:
                raise ModelFormatError('Malformed section header {!r}'
                                       .format(stripped), path, number)
            kind, name = match.groups()
            if kind in ('lagrangian', 'form', 'covector') and not name:
                raise ModelFormatError('Section [{}] needs a name'
                                       .format(kind), path, number)
            if kind in ('model', 'constants') and name:
                raise ModelFormatError('Section [{}] takes no name'
                                       .format(kind), path, number)
            sections.append(_Section(kind, name, number))
            continue
        if not sections:
            raise ModelFormatError('Entry outside of any section', path,
                                   number)
        if '=' not in stripped:
            raise ModelFormatError('Expected "key = value", got {!r}'
                                   .format(stripped), path, number)
        key, value = (part.strip() for part in stripped.split('=', 1))
        if value.endswith('\\'):
            pending = (key, value[:-1], number)
        else:
            sections[-1].entries.append((key, value, number))
    if pending is not None:
        raise ModelFormatError('Line continuation at end of file', path,
                               pending[2])
    return sections


def _expression_kind(text: str, default: str, path: Optional[str],
                     line: int) -> str:
    kinds = set()
    for token in _tokenize(text, line):
        if token.kind == 'ident':
            kind = identifier_kind(token.text)
            if kind is not None:
                kinds.add(kind)
    if len(kinds) > 1:
        raise ModelFormatError('Expression mixes parametric and homogeneous '
                               'coordinates', path, line)
    return kinds.pop() if kinds else default


def _model_header(section: _Section, path: Optional[str]
                  ) -> Tuple[JetChart, Metric]:
    settings = {}
    for key, value, line in section.entries:
        if key not in _MODEL_KEYS:
            raise ModelFormatError('Unknown key {!r} in [model]'.format(key),
                                   path, line)
        if key in settings:
            raise ModelFormatError('Duplicate key {!r} in [model]'
                                   .format(key), path, line)
        settings[key] = (value, line)
    for required in ('chart', 'dim', 'order'):
        if required not in settings:
            raise ModelFormatError('[model] needs a {!r} key'.format(required),
                                   path, section.line)
    try:
        chart = JetChart(settings['chart'][0], int(settings['dim'][0]),
                         int(settings['order'][0]))
    except (ValueError, ChartError) as error:
        raise ModelFormatError('Invalid chart declaration: {}'.format(error),
                               path, section.line)
    try:
        orientation = int(settings.get('orientation', ('1', 0))[0])
        if 'signature' in settings:
            metric = Metric.parse(settings['signature'][0], orientation)
        else:
            metric = Metric(orientation=orientation)
    except (ValueError, MetricError) as error:
        raise ModelFormatError('Invalid metric: {}'.format(error), path,
                               section.line)
    return chart, metric


def parse_model(text: str, path: Optional[str] = None) -> Model:
    """
    Parse and validate model text.

    Raises
    ------
    ModelFormatError
        Raises a ``ModelFormatError`` naming the file and line for duplicate
        sections, unknown keys, arity mismatches or chart violations.
    """
    sections = _read_sections(text, path)
    headers = [section for section in sections if section.kind == 'model']
    if len(headers) != 1:
        raise ModelFormatError('Expected exactly one [model] section, found '
                               '{}'.format(len(headers)), path)
    chart, metric = _model_header(headers[0], path)
    seen = set()
    constants = {}
    for section in sections:
        label = (section.kind, section.name)
        if label in seen:
            raise ModelFormatError('Duplicate section [{}{}]'.format(
                section.kind, ' ' + section.name if section.name else ''),
                path, section.line)
        seen.add(label)
        if section.kind == 'constants':
            for key, value, line in section.entries:
                if key in constants:
                    raise ModelFormatError('Duplicate constant {!r}'
                                           .format(key), path, line)
                if identifier_kind(key) is not None or key == 'sqrt':
                    raise ModelFormatError('Constant name {!r} is reserved'
                                           .format(key), path, line)
                if value == FREE:
                    constants[key] = None
                    continue
                try:
                    constants[key] = float(value)
                except ValueError:
                    raise ModelFormatError('Constant {!r} must be a number or '
                                           '"free", got {!r}'.format(key,
                                                                     value),
                                           path, line)
    names = set(constants)
    lagrangians = {}
    forms = {}
    covectors = {}
    model = Model(chart, metric)
    for section in sections:
        if section.kind == 'lagrangian':
            lagrangians[section.name] = _read_lagrangian(
                section, model, names, path)
        elif section.kind == 'form':
            forms[section.name] = _read_form(section, model, names, path)
        elif section.kind == 'covector':
            covectors[section.name] = _read_covector(section, model, names,
                                                     path)
    logger.debug('Parsed model with {} lagrangians and {} forms'
                 .format(len(lagrangians), len(forms)))
    return Model(chart, metric, constants, lagrangians, forms, covectors)


def _parse_entry(text: str, chart: JetChart, names: Set[str],
                 path: Optional[str], line: int) -> Expr:
    try:
        return parse_expression(text, chart, names, line)
    except ExpressionSyntaxError as error:
        raise ModelFormatError(str(error), path, line)


def _read_lagrangian(section: _Section, model: Model, names: Set[str],
                     path: Optional[str]) -> LagrangianDef:
    if len(section.entries) != 1 or section.entries[0][0] != 'L':
        raise ModelFormatError('[lagrangian {}] needs exactly one "L = ..." '
                               'entry'.format(section.name), path,
                               section.line)
    _, text, line = section.entries[0]
    kind = _expression_kind(text, model.chart.kind, path, line)
    chart = model.chart_for(kind)
    expr = _parse_entry(text, chart, names, path, line)
    return LagrangianDef.of(expr, kind, chart.n)


def _indexed_entries(section: _Section, prefix: str, model: Model,
                     names: Set[str], path: Optional[str]
                     ) -> Tuple[JetChart, List[Expr]]:
    keys = {}
    for key, text, line in section.entries:
        match = re.match(r'^{}(\d+)$'.format(prefix), key)
        if match is None:
            raise ModelFormatError('Unknown key {!r} in [{} {}]'.format(
                key, section.kind, section.name), path, line)
        index = int(match.group(1))
        if index in keys:
            raise ModelFormatError('Duplicate key {!r}'.format(key), path,
                                   line)
        keys[index] = (text, line)
    kind = HOMOGENEOUS if 0 in keys else PARAMETRIC
    chart = model.chart_for(kind)
    if sorted(keys) != list(chart.indices):
        raise ModelFormatError(
            'Arity mismatch in [{} {}]: a {} chart with n = {} needs keys {}, '
            'got {}'.format(section.kind, section.name, kind, chart.n,
                            ', '.join('{}{}'.format(prefix, i)
                                      for i in chart.indices),
                            ', '.join('{}{}'.format(prefix, i)
                                      for i in sorted(keys))),
            path, section.line)
    components = []
    for index in chart.indices:
        text, line = keys[index]
        if _expression_kind(text, kind, path, line) != kind:
            raise ModelFormatError('Component {}{} uses coordinates of the '
                                   'other chart'.format(prefix, index),
                                   path, line)
        components.append(_parse_entry(text, chart, names, path, line))
    return chart, components


def _read_form(section: _Section, model: Model, names: Set[str],
               path: Optional[str]) -> DynamicalForm:
    chart, components = _indexed_entries(section, 'E', model, names, path)
    try:
        return DynamicalForm.of(components, chart.kind, chart.n)
    except (ChartError, OrderError) as error:
        raise ModelFormatError(str(error), path, section.line)


def _read_covector(section: _Section, model: Model, names: Set[str],
                   path: Optional[str]) -> Tuple[Expr, ...]:
    _, components = _indexed_entries(section, 'P', model, names, path)
    return tuple(components)


def load_model(path: str) -> Model:
    """
    Load and validate a model file.

    Parameters
    ----------
    path : string
        A ``string`` of the path to a UTF-8 model file.

    Returns
    -------
    Model
        The validated model.

    Raises
    ------
    ModelFormatError
        Raises a ``ModelFormatError`` when the file is missing or malformed.
    """
    if not os.path.exists(path):
        raise ModelFormatError('Model file does not exist', path)
    with open(path, 'r', encoding='utf-8') as model_file:
        return parse_model(model_file.read(), path)


def render_model(model: Model) -> str:
    """Render a model in the model-file format."""
    lines = ['[model]',
             'chart = {}'.format(model.chart.kind),
             'dim = {}'.format(model.chart.n),
             'order = {}'.format(model.chart.order),
             'signature = {}'.format(model.metric),
             'orientation = {}'.format(model.metric.orientation)]
    if model.constants:
        lines.extend(['', '[constants]'])
        for name, value in model.constants.items():
            lines.append('{} = {}'.format(
                name, FREE if value is None else format(value, '.17g')))
    for name, lagrangian in model.lagrangians.items():
        lines.extend(['', '[lagrangian {}]'.format(name),
                      'L = {}'.format(render_expression(lagrangian.expr))])
    for name, form in model.forms.items():
        lines.extend(['', '[form {}]'.format(name)])
        for index, component in zip(form.chart.indices, form.components):
            lines.append('E{} = {}'.format(index,
                                           render_expression(component)))
    for name, components in model.covectors.items():
        lines.extend(['', '[covector {}]'.format(name)])
        start = 0 if len(components) == model.chart.n + 1 else 1
        for index, component in enumerate(components, start=start):
            lines.append('P{} = {}'.format(index,
                                           render_expression(component)))
    return '\n'.join(lines) + '\n'


def save_model(model: Model, path: str) -> None:
    """Write a model file that loads back to an equal-valued model."""
    with open(path, 'w', encoding='utf-8') as model_file:
        model_file.write(render_model(model))
