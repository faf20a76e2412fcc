# -*- coding: utf-8 -*-
"""Log-domain barrier solver for geometric programs.

The GP is mapped to y = log x. A posynomial constraint sum_m c_m prod x^a_m <= 1 becomes
log-sum-exp(A y + b) <= 0 over its rows, monomial equalities become affine rows E y = d,
and the maximized monomial becomes a linear objective to minimize.
"""

import dataclasses
from typing import Dict, List, Optional

from absl import logging
import numpy as np
import scipy.linalg

from gp.model import GPError, GPProblem

__all__ = ['GPDomainError', 'ConvexProgram', 'GPSolution', 'log_transform', 'solve',
           'OPTIMAL', 'INFEASIBLE', 'MAX_ITER']

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
MAX_ITER = 'max_iter'

# Every log-variable is kept in [-LOG_CLAMP, LOG_CLAMP].
LOG_CLAMP = 30.


class GPDomainError(GPError):
  """A variable reached the upper log-domain clamp, the GP is unbounded in practice."""


@dataclasses.dataclass
class ConvexProgram:
  """minimize c.y + c0 s.t. lse(A[seg] y + b[seg]) <= 0 per segment and E y = d."""
  names: List[str]
  c: np.ndarray
  c0: float
  A: np.ndarray
  b: np.ndarray
  starts: np.ndarray
  E: np.ndarray
  d: np.ndarray
  constraint_names: List[str]
  equality_names: List[str]

  @property
  def n(self):
    return len(self.names)

  @property
  def m(self):
    return len(self.starts)

  @property
  def owner(self):
    sizes = np.diff(np.append(self.starts, len(self.b)))
    return np.repeat(np.arange(self.m), sizes)

  def values(self, y):
    """Constraint values f_i(y) = log of the posynomial at exp(y)."""
    return _lse(self.A @ y + self.b, self.starts, self.owner)[0]

  def objective(self, y):
    return float(self.c @ y + self.c0)

  def with_box(self, clamp=LOG_CLAMP):
    """Append rows y_j <= clamp and -y_j <= clamp as one-row segments."""
    eye = np.eye(self.n)
    A = np.vstack([self.A, eye, -eye])
    b = np.concatenate([self.b, np.full(2 * self.n, -clamp)])
    starts = np.concatenate([self.starts, len(self.b) + np.arange(2 * self.n)])
    names = self.constraint_names + [f'log {v} <= {clamp}' for v in self.names] + \
            [f'log {v} >= -{clamp}' for v in self.names]
    return dataclasses.replace(self, A=A, b=b, starts=starts, constraint_names=names)


@dataclasses.dataclass
class GPSolution:
  values: Dict[str, float]
  objective_value: float
  status: str
  kkt_residual: float
  duality_gap: float
  iterations: int = 0
  certificate: Optional[str] = None
  max_violation: float = 0.

  @property
  def optimal(self):
    return self.status == OPTIMAL


def log_transform(problem: GPProblem) -> ConvexProgram:
  problem.validate()
  names = list(problem.variables)
  index = {name: j for j, name in enumerate(names)}

  def row(monomial):
    r = np.zeros(len(names))
    for name, a in monomial.exponents.items():
      r[index[name]] = a
    return r, np.log(monomial.coefficient)

  rows, offsets, starts, cnames = [], [], [], []
  erows, eoffsets, enames = [], [], []
  for constraint in problem.all_constraints():
    if constraint.kind == 'eq':
      r, off = row(constraint.expr.terms[0])
      erows.append(r)
      eoffsets.append(off)
      enames.append(constraint.name)
      continue
    starts.append(len(rows))
    cnames.append(constraint.name)
    for term in constraint.expr.terms:
      r, off = row(term)
      rows.append(r)
      offsets.append(off)

  # Maximizing c prod x^a is minimizing -log c - a.y.
  c, c0 = row(problem.objective)
  n = len(names)
  return ConvexProgram(
    names=names, c=-c, c0=-c0,
    A=np.array(rows).reshape(-1, n), b=np.array(offsets), starts=np.array(starts, dtype=int),
    E=np.array(erows).reshape(-1, n), d=-np.array(eoffsets),
    constraint_names=cnames, equality_names=enames)


def _lse(z, starts, owner):
  """Segmented log-sum-exp; returns values and the softmax weights per row."""
  if len(z) == 0:
    return np.zeros(0), np.zeros(0)
  mx = np.maximum.reduceat(z, starts)
  ez = np.exp(z - mx[owner])
  f = mx + np.log(np.add.reduceat(ez, starts))
  return f, np.exp(z - f[owner])


class _Barrier:
  """Barrier t c.y - sum log(-f_i(y)) with analytic gradient and Hessian."""

  def __init__(self, prog: ConvexProgram, c: np.ndarray):
    self.prog = prog
    self.c = c
    self.owner = prog.owner

  def constraints(self, y):
    return _lse(self.prog.A @ y + self.prog.b, self.prog.starts, self.owner)

  def value(self, y, t):
    f, _ = self.constraints(y)
    if np.any(f >= 0):
      return np.inf
    return t * float(self.c @ y) - float(np.sum(np.log(-f)))

  def derivatives(self, y, t):
    A = self.prog.A
    f, w = self.constraints(y)
    G = np.add.reduceat(w[:, None] * A, self.prog.starts, axis=0)
    grad = t * self.c + G.T @ (1. / -f)
    hess = (A.T * (w / -f[self.owner])) @ A + (G.T * (1. / f ** 2 + 1. / f)) @ G
    return f, G, grad, hess


def _newton_step(hess, grad, E):
  n = len(grad)
  if E.shape[0] == 0:
    try:
      factor = scipy.linalg.cho_factor(hess)
      return scipy.linalg.cho_solve(factor, -grad), None
    except np.linalg.LinAlgError:
      return np.linalg.lstsq(hess, -grad, rcond=None)[0], None
  p = E.shape[0]
  kkt = np.block([[hess, E.T], [E, np.zeros((p, p))]])
  rhs = np.concatenate([-grad, np.zeros(p)])
  try:
    sol = np.linalg.solve(kkt, rhs)
  except np.linalg.LinAlgError:
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
  return sol[:n], sol[n:]


class _Result:

  def __init__(self, y, t, nu, iterations, exhausted):
    self.y, self.t, self.nu = y, t, nu
    self.iterations, self.exhausted = iterations, exhausted


def _barrier_method(barrier: _Barrier, E, y, budget, tol, t0=1., mu=20., alpha=0.01, beta=0.5,
                    newton_tol=1e-10, stop=None):
  """Sequence of Newton-centering steps for increasing t, starting strictly feasible.

  Once m/t is below `tol` the last center is polished with a few extra Newton steps so
  that the stationarity residual reaches machine precision.
  """
  m = barrier.prog.m
  t = t0
  nu = np.zeros(E.shape[0])
  iterations = 0
  polishing = False
  while True:
    stage_steps = 0
    while True:
      if iterations >= budget:
        return _Result(y, t, nu, iterations, True)
      _, _, grad, hess = barrier.derivatives(y, t)
      dy, w = _newton_step(hess, grad, E)
      if w is not None:
        nu = w / t
      decrement = float(-grad @ dy)
      if decrement / 2. <= (1e-24 if polishing else newton_tol):
        break
      if polishing and stage_steps >= 20:
        break
      stage_steps += 1
      phi = barrier.value(y, t)
      step = 1.
      while barrier.value(y + step * dy, t) > phi + alpha * step * float(grad @ dy):
        step *= beta
        if step < 1e-20:
          break
      y = y + step * dy
      iterations += 1
      if stop is not None and stop(y):
        return _Result(y, t, nu, iterations, False)
      if step < 1e-20:
        break
    logging.debug("Centered at t = %.3g after %d Newton steps.", t, iterations)
    if polishing:
      return _Result(y, t, nu, iterations, False)
    if m / t <= tol:
      polishing = True
      continue
    t *= mu


def _kkt_residual(barrier: _Barrier, prog: ConvexProgram, y, t, nu):
  f, G, _, _ = barrier.derivatives(y, t)
  lam = 1. / (-t * f)
  r = prog.c + G.T @ lam
  if prog.E.shape[0]:
    r = r + prog.E.T @ nu
  return float(np.max(np.abs(r)) / (1. + np.max(np.abs(prog.c), initial=0.)))


def solve(problem: GPProblem, tol: float = 1e-6, max_iter: int = 500,
          feasibility_tol: float = 1e-7) -> GPSolution:
  """Solve a GP: phase I finds a strictly feasible point, phase II runs the barrier method.

  Returns status 'optimal' only if the duality gap m/t and the scaled KKT residual are both
  below `tol`. Infeasible problems come back with the most violated constraint at the
  phase I analytic center as certificate.

  Args:
    problem: A `GPProblem`; its monomial objective is maximized.
    tol: Target duality gap and scaled KKT residual of phase II.
    max_iter: Newton step budget shared by both phases.
    feasibility_tol: Slack below which phase I declares the problem infeasible.

  Returns:
    A `GPSolution` with the status, the variable values in the original domain, the
      objective value and the iteration statistics of both phases.

  Raises:
    GPDomainError: a variable ran into the log-domain clamp, i.e. the problem is unbounded.
  """
  prog = log_transform(problem)
  boxed = prog.with_box()
  n = prog.n
  E, d = boxed.E, boxed.d

  if E.shape[0]:
    y0 = np.linalg.lstsq(E, d, rcond=None)[0]
    residual = np.abs(E @ y0 - d)
    if np.max(residual) > 1e-9:
      bad = boxed.equality_names[int(np.argmax(residual))]
      return _infeasible(problem, prog, y0, bad, 0)
  else:
    y0 = np.zeros(n)

  # Phase I: minimize s subject to f_i(y) <= s and s >= -1.
  f0 = boxed.values(y0)
  iterations = 0
  if np.max(f0) >= -feasibility_tol:
    aug = dataclasses.replace(
      boxed,
      A=np.vstack([np.hstack([boxed.A, -np.ones((len(boxed.b), 1))]),
                   np.append(np.zeros(n), -1.)[None, :]]),
      b=np.append(boxed.b, -1.),
      starts=np.append(boxed.starts, len(boxed.b)),
      E=np.hstack([E, np.zeros((E.shape[0], 1))]))
    c = np.append(np.zeros(n), 1.)
    s0 = float(np.max(f0)) + 1.
    result = _barrier_method(_Barrier(aug, c), aug.E, np.append(y0, s0), max_iter, tol,
                             stop=lambda z: z[-1] < -feasibility_tol)
    iterations = result.iterations
    y0 = result.y[:n]
    if result.y[-1] >= -feasibility_tol:
      if result.exhausted:
        logging.warning('GP phase I stopped at the iteration cap (s = %.3g).', result.y[-1])
        return _solution(problem, prog, y0, MAX_ITER, np.inf, np.inf, iterations)
      f = boxed.values(y0)
      bad = boxed.constraint_names[int(np.argmax(f))]
      return _infeasible(problem, prog, y0, bad, iterations)

  barrier = _Barrier(boxed, boxed.c)
  result = _barrier_method(barrier, E, y0, max_iter - iterations, tol)
  iterations += result.iterations
  y = result.y
  if np.any(y >= LOG_CLAMP - 1e-3):
    hit = [prog.names[j] for j in np.flatnonzero(y >= LOG_CLAMP - 1e-3)]
    raise GPDomainError(f'Variables {hit} reached the log-domain clamp {LOG_CLAMP}; '
                        f'the problem is unbounded within the representable range.')
  low = np.flatnonzero(y <= -LOG_CLAMP + 1e-3)
  if low.size:
    logging.debug('Variables %s pinned at the lower log clamp.', [prog.names[j] for j in low])

  gap = boxed.m / result.t
  kkt = _kkt_residual(barrier, boxed, y, result.t, result.nu)
  status = OPTIMAL if (not result.exhausted and gap <= tol and kkt <= tol) else MAX_ITER
  if status != OPTIMAL:
    logging.warning('GP solve ended with status %s (gap %.3g, kkt %.3g, %d iterations).',
                    status, gap, kkt, iterations)
  return _solution(problem, prog, y, status, kkt, gap, iterations)


def _solution(problem, prog, y, status, kkt, gap, iterations, certificate=None):
  values = {name: float(np.exp(v)) for name, v in zip(prog.names, y)}
  return GPSolution(
    values=values,
    objective_value=float(np.exp(-prog.objective(y))),
    status=status, kkt_residual=kkt, duality_gap=gap, iterations=iterations,
    certificate=certificate, max_violation=problem.max_violation(values))


def _infeasible(problem, prog, y, constraint_name, iterations):
  logging.info('GP infeasible, most violated constraint: %s', constraint_name)
  return _solution(problem, prog, y, INFEASIBLE, np.inf, np.inf, iterations, certificate=constraint_name)
