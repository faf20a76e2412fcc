# -*- coding: utf-8 -*-
"""Geometric program models: variables, monomials, posynomials and problems.
"""

import dataclasses
import math
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

__all__ = ['GPError', 'Variable', 'Monomial', 'Posynomial', 'Constraint', 'GPProblem',
           'var', 'evaluate', 'condense', 'dumps']

Number = Union[int, float]


class GPError(ValueError):
  """Malformed geometric program or invalid evaluation point."""


@dataclasses.dataclass(frozen=True)
class Variable:
  name: str
  lower: Optional[float] = None
  upper: Optional[float] = None

  def __post_init__(self):
    if self.lower is not None and self.lower <= 0:
      raise GPError(f'Variable {self.name}: lower bound must be positive, got {self.lower}.')
    if self.upper is not None and self.upper <= 0:
      raise GPError(f'Variable {self.name}: upper bound must be positive, got {self.upper}.')
    if self.lower is not None and self.upper is not None and self.lower > self.upper:
      raise GPError(f'Variable {self.name}: empty domain [{self.lower}, {self.upper}].')


@dataclasses.dataclass(frozen=True, eq=False)
class Monomial:
  """c * prod_j x_j^a_j with c > 0."""
  coefficient: float
  exponents: Mapping[str, float] = dataclasses.field(default_factory=dict)

  def __post_init__(self):
    if not (self.coefficient > 0) or not math.isfinite(self.coefficient):
      raise GPError(f'Monomial coefficient must be positive and finite, got {self.coefficient}.')
    object.__setattr__(self, 'coefficient', float(self.coefficient))
    object.__setattr__(self, 'exponents',
                       {k: float(a) for k, a in sorted(self.exponents.items()) if a != 0})

  @property
  def variables(self):
    return set(self.exponents)

  def evaluate(self, point: Mapping[str, float]) -> float:
    value = self.coefficient
    for name, a in self.exponents.items():
      value *= _checked(point, name) ** a
    return value

  def __mul__(self, other):
    if isinstance(other, Posynomial):
      return other * self
    if isinstance(other, Monomial):
      exponents = dict(self.exponents)
      for name, a in other.exponents.items():
        exponents[name] = exponents.get(name, 0.) + a
      return Monomial(self.coefficient * other.coefficient, exponents)
    return Monomial(self.coefficient * other, self.exponents)

  __rmul__ = __mul__

  def __truediv__(self, other):
    if isinstance(other, Monomial):
      return self * other ** -1
    return Monomial(self.coefficient / other, self.exponents)

  def __rtruediv__(self, other):
    return Monomial(other, {}) * self ** -1

  def __pow__(self, power: Number):
    return Monomial(self.coefficient ** power, {k: a * power for k, a in self.exponents.items()})

  def __add__(self, other):
    return Posynomial((self,)) + other

  __radd__ = __add__

  def __eq__(self, other):
    return (isinstance(other, Monomial) and self.coefficient == other.coefficient
            and self.exponents == other.exponents)

  def __repr__(self):
    return _format_monomial(self)


@dataclasses.dataclass(frozen=True, eq=False)
class Posynomial:
  """A nonempty sum of monomials."""
  terms: Tuple[Monomial, ...]

  def __post_init__(self):
    if not self.terms:
      raise GPError('Posynomial needs at least one term.')
    object.__setattr__(self, 'terms', tuple(self.terms))

  @property
  def variables(self):
    names = set()
    for term in self.terms:
      names |= term.variables
    return names

  def evaluate(self, point: Mapping[str, float]) -> float:
    return sum(term.evaluate(point) for term in self.terms)

  def __len__(self):
    return len(self.terms)

  def __add__(self, other):
    if isinstance(other, Posynomial):
      return Posynomial(self.terms + other.terms)
    if isinstance(other, Monomial):
      return Posynomial(self.terms + (other,))
    return Posynomial(self.terms + (Monomial(other, {}),))

  __radd__ = __add__

  def __mul__(self, other):
    if isinstance(other, Posynomial):
      return Posynomial(tuple(a * b for a in self.terms for b in other.terms))
    return Posynomial(tuple(term * other for term in self.terms))

  __rmul__ = __mul__

  def __truediv__(self, other):
    if isinstance(other, Posynomial):
      raise GPError('Division by a posynomial does not yield a posynomial; condense the divisor first.')
    return Posynomial(tuple(term / other for term in self.terms))

  def __repr__(self):
    return ' + '.join(_format_monomial(t) for t in self.terms)


@dataclasses.dataclass(frozen=True)
class Constraint:
  """Either `expr <= 1` (kind 'leq') or `expr == 1` (kind 'eq', single term)."""
  expr: Posynomial
  kind: str = 'leq'
  name: str = ''

  def __post_init__(self):
    if isinstance(self.expr, Monomial):
      object.__setattr__(self, 'expr', Posynomial((self.expr,)))
    if self.kind not in ('leq', 'eq'):
      raise GPError(f'Constraint kind {self.kind} unknown.')
    if self.kind == 'eq' and len(self.expr) != 1:
      raise GPError(f'Equality constraint {self.name} must be a monomial.')

  def value(self, point: Mapping[str, float]) -> float:
    return self.expr.evaluate(point)


class GPProblem:
  """Maximize a monomial subject to posynomial <= 1 and monomial == 1 constraints."""

  def __init__(self, objective: Optional[Monomial] = None):
    self.objective = objective
    self.variables: Dict[str, Variable] = {}
    self.constraints: List[Constraint] = []

  def add_variable(self, name, lower=None, upper=None) -> Monomial:
    if name in self.variables:
      raise GPError(f'Variable {name} declared twice.')
    self.variables[name] = Variable(name, lower, upper)
    return var(name)

  def add_leq(self, expr, name=''):
    if isinstance(expr, Monomial):
      expr = Posynomial((expr,))
    self.constraints.append(Constraint(expr, 'leq', name or f'c{len(self.constraints)}'))

  def add_eq(self, expr: Monomial, name=''):
    self.constraints.append(Constraint(Posynomial((expr,)), 'eq', name or f'c{len(self.constraints)}'))

  def bound_constraints(self) -> List[Constraint]:
    """Variable bounds as monomial constraints x/ub <= 1 and lb/x <= 1."""
    bounds = []
    for v in self.variables.values():
      if v.upper is not None:
        bounds.append(Constraint(Posynomial((var(v.name) / v.upper,)), 'leq', f'{v.name}<=ub'))
      if v.lower is not None:
        bounds.append(Constraint(Posynomial((v.lower / var(v.name),)), 'leq', f'{v.name}>=lb'))
    return bounds

  def all_constraints(self) -> List[Constraint]:
    return self.constraints + self.bound_constraints()

  def validate(self):
    if self.objective is None:
      raise GPError('GP has no objective.')
    if not self.variables:
      raise GPError('GP has no variables.')
    if not self.all_constraints():
      raise GPError('GP has no constraints.')
    undeclared = set(self.objective.variables)
    for c in self.constraints:
      undeclared |= c.expr.variables
    undeclared -= set(self.variables)
    if undeclared:
      raise GPError(f'Undeclared variables: {sorted(undeclared)}.')

  def max_violation(self, point: Mapping[str, float]) -> float:
    """Largest relative violation over all constraints at `point`, 0 if feasible."""
    worst = 0.
    for c in self.all_constraints():
      value = c.value(point)
      excess = abs(value - 1.) if c.kind == 'eq' else value - 1.
      worst = max(worst, excess)
    return worst


def var(name: str) -> Monomial:
  return Monomial(1., {name: 1.})


def _checked(point, name):
  try:
    value = point[name]
  except KeyError:
    raise GPError(f'Point assigns no value to variable {name}.') from None
  if not value > 0:
    raise GPError(f'Variable {name} must be positive, got {value}.')
  return float(value)


def evaluate(p: Union[Monomial, Posynomial], point: Mapping[str, float]) -> float:
  """Evaluate a monomial or posynomial at a strictly positive point."""
  return p.evaluate(point)


def condense(p: Union[Monomial, Posynomial], point: Optional[Mapping[str, float]] = None) -> Monomial:
  """Monomial lower bound of a posynomial by the weighted AM-GM inequality.

  sum_m a_m >= prod_m (a_m / w_m)^w_m for positive weights summing to one. Without a
  point the weights are equal, otherwise w_m = a_m(point) / p(point), which makes the
  bound exact at `point`.
  """
  if isinstance(p, Monomial):
    return p
  if len(p) == 1:
    return p.terms[0]
  if point is None:
    weights = np.full(len(p), 1. / len(p))
  else:
    values = np.array([t.evaluate(point) for t in p.terms])
    weights = values / values.sum()
  coefficient = 1.
  exponents: Dict[str, float] = {}
  for w, term in zip(weights, p.terms):
    if w <= 0:
      continue
    coefficient *= (term.coefficient / w) ** w
    for name, a in term.exponents.items():
      exponents[name] = exponents.get(name, 0.) + w * a
  return Monomial(coefficient, exponents)


def _format_number(x):
  return format(x, '.17g')


def _format_monomial(m: Monomial) -> str:
  parts = [_format_number(m.coefficient)]
  parts += [f'{name}^{_format_number(a)}' for name, a in m.exponents.items()]
  return ' * '.join(parts)


def dumps(problem: GPProblem) -> str:
  """Textual dump, one constraint per line: `coef * var^exp ... [+ ...] <= 1  # name`."""
  lines = [f'maximize {_format_monomial(problem.objective)}']
  for v in problem.variables.values():
    lines.append(f'var {v.name} {v.lower} {v.upper}')
  for c in problem.constraints:
    op = '<=' if c.kind == 'leq' else '=='
    lines.append(f'{c.expr!r} {op} 1  # {c.name}')
  return '\n'.join(lines) + '\n'
