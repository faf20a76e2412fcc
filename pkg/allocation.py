# -*- coding: utf-8 -*-
"""Power allocation strategies: uniform benchmark, max-min fairness GP and max-sum SE GP.

Both GPs work on the stage matrices of the gain table. The SINR of receiver slot r is
g[r, r] x_r / (sum_{s != r} g[r, s] x_s + noise_r), where x is the power vector of the
stage. The fairness groups are the gNB uplink (gNB-receive stage, slots K), the gNB
downlink (gNB-transmit stage, slots K), the IAB uplink (gNB-transmit stage, slots I) and
the IAB downlink (gNB-receive stage, slots I).
"""

import dataclasses
import enum
import math
from typing import Dict, List, Mapping, Optional, Sequence

from absl import logging
import numpy as np

import gp
import link_metrics
from beamforming import GainTable
from gp import GPProblem, Monomial, Posynomial, var
from link_metrics import GROUPS, PowerAllocation
from scenario import SystemConfig

__all__ = ['AllocationError', 'StrategyKind', 'AllocationResult', 'VerificationReport',
           'ConstraintCheck', 'register_strategy', 'get_strategy', 'parse_strategy',
           'uniform_allocation', 'build_maxmin_gp', 'build_maxsum_gp', 'solve_allocation',
           'verify_constraints', 'induced_objective', 'expand_product', 'surrogate_se',
           'epsilon_gap', 'MAX_IAB_UES']

LN2 = math.log(2.)
# Exact expansion of prod(1 + rho_i) has 2^K~ terms.
MAX_IAB_UES = 12
# Status of the closed-form benchmark, which solves no program.
CLOSED_FORM = 'closed_form'
SOLVER_ERROR = 'solver_error'

# group -> (stage, slot set)
_GROUP_SLOTS = {
  'u_gnb': ('ul', 'K'),
  'd_gnb': ('dl', 'K'),
  'u_iab': ('dl', 'I'),
  'd_iab': ('ul', 'I'),
}


class AllocationError(ValueError):
  """Strategy unknown or allocation problem outside the supported size."""


class StrategyKind(str, enum.Enum):
  UNIFORM = 'uniform'
  MAX_MIN = 'max_min'
  MAX_SUM_SE = 'max_sum_se'


_ALIASES = {
  'maxmin': StrategyKind.MAX_MIN,
  'maxsum': StrategyKind.MAX_SUM_SE,
  'max_sum': StrategyKind.MAX_SUM_SE,
}

_STRATEGIES = {}


def register_strategy(func=None, *, name=None):
  """A decorator for registering allocation strategies."""

  def _register(func):
    if name is None:
      local_name = func.__name__
    else:
      local_name = name
    if local_name in _STRATEGIES:
      raise ValueError(f'Already registered strategy with name: {local_name}')
    _STRATEGIES[local_name] = func
    return func

  if func is None:
    return _register
  else:
    return _register(func)


def parse_strategy(name) -> StrategyKind:
  if isinstance(name, StrategyKind):
    return name
  key = str(name).strip().lower().replace('-', '_')
  if key in _ALIASES:
    return _ALIASES[key]
  try:
    return StrategyKind(key)
  except ValueError:
    choices = sorted([s.value for s in StrategyKind] + list(_ALIASES))
    raise AllocationError(f'Strategy {name!r} unknown, choose from {choices}.') from None


def get_strategy(name):
  return _STRATEGIES[parse_strategy(name).value]


@dataclasses.dataclass(frozen=True)
class ConstraintCheck:
  value: float
  limit: float
  satisfied: bool

  @property
  def slack(self):
    return self.limit - self.value


@dataclasses.dataclass
class VerificationReport:
  """Budgets and the unrelaxed backhaul-SE constraints at an allocation.

  `backhaul_cap_binding[direction]` is True when the IAB access SE exceeds the backhaul SE,
  in which case delivered IAB SEs are capped at the backhaul SE when reporting.
  """
  checks: Dict[str, ConstraintCheck]
  backhaul_cap_binding: Dict[str, bool]

  @property
  def passed(self):
    return all(c.satisfied for c in self.checks.values())

  @property
  def failed(self) -> List[str]:
    return [name for name, c in self.checks.items() if not c.satisfied]


@dataclasses.dataclass
class AllocationResult:
  strategy: str
  allocation: PowerAllocation
  status: str
  objective: float
  verification: VerificationReport
  relaxation_gap: Dict[str, float] = dataclasses.field(default_factory=dict)
  problem: Optional[GPProblem] = None
  solution: Optional[gp.GPSolution] = None

  @property
  def optimal(self):
    return self.status in (gp.OPTIMAL, CLOSED_FORM)


def uniform_allocation(cfg: SystemConfig, k_gnb: Optional[int] = None,
                       k_iab: Optional[int] = None) -> PowerAllocation:
  """gNB budget split over K+1 streams, IAB budget over K~+1 streams, UEs at full power."""
  k_gnb = cfg.k_gnb if k_gnb is None else k_gnb
  k_iab = cfg.k_iab if k_iab is None else k_iab
  return PowerAllocation(
    eta_gnb=np.full(k_gnb + 1, cfg.p_max_gnb_w / (k_gnb + 1)),
    eta_iab=np.full(k_iab + 1, cfg.p_max_iab_w / (k_iab + 1)),
    eta_ue=np.full(k_gnb + k_iab, cfg.p_max_ue_w))


def surrogate_se(eps, sinr):
  """Largest s with (1 + ln2 s / eps)^eps <= 1 + sinr."""
  return eps * (np.power(1. + np.asarray(sinr, dtype=float), 1. / eps) - 1.) / LN2


def epsilon_gap(eps, sinr):
  """Relative overestimate of log2(1 + sinr) by the surrogate SE."""
  se = np.log2(1. + np.asarray(sinr, dtype=float))
  return (surrogate_se(eps, sinr) - se) / se


def expand_product(factors: Sequence[Monomial]) -> Posynomial:
  """prod_i (1 + f_i) as a posynomial of 2^n terms."""
  if len(factors) > MAX_IAB_UES:
    raise AllocationError(f'Expanding the backhaul product over {len(factors)} IAB UEs exceeds '
                          f'the supported {MAX_IAB_UES}.')
  out = Posynomial((Monomial(1.),))
  for f in factors:
    out = out * (1. + f)
  return out


class _Stages:
  """Power variable names of the slots of both stages for one gain table."""

  def __init__(self, gains: GainTable):
    self.gains = gains
    self.gnb_ues = gains.gnb_ues
    self.iab_ues = gains.iab_ues
    # Without IAB UEs the backhaul carries nothing and both backhaul streams stay off.
    self.with_backhaul = gains.k_iab > 0
    dl = {k: f'eta_gnb_{k}' for k in self.gnb_ues}
    dl.update({i: f'eta_ue_{i}' for i in self.iab_ues})
    ul = {k: f'eta_ue_{k}' for k in self.gnb_ues}
    ul.update({i: f'eta_iab_{i}' for i in self.iab_ues})
    if self.with_backhaul:
      dl[0] = 'eta_gnb_0'
      ul[0] = 'eta_iab_0'
    self.names = {'dl': dict(sorted(dl.items())), 'ul': dict(sorted(ul.items()))}

  @property
  def gnb_streams(self):
    return ([0] if self.with_backhaul else []) + self.gnb_ues

  @property
  def iab_streams(self):
    return ([0] if self.with_backhaul else []) + self.iab_ues

  def groups(self) -> Dict[str, List[int]]:
    slots = {'K': self.gnb_ues, 'I': self.iab_ues}
    return {g: slots[s] for g, (_, s) in _GROUP_SLOTS.items() if slots[s]}

  def sinr(self, stage: str, r: int):
    """(numerator monomial, denominator posynomial) of the SINR of slot r."""
    table = getattr(self.gains, stage)
    noise = self.gains.noise(stage, r)
    names = self.names[stage]
    if not table[r, r] > 0:
      raise AllocationError(f'Desired gain of {stage} slot {r} is zero.')
    num = Monomial(float(table[r, r]), {names[r]: 1.})
    terms = [Monomial(float(table[r, s]), {name: 1.}) for s, name in names.items()
             if s != r and table[r, s] > 0]
    if noise > 0:
      terms.append(Monomial(noise))
    if not terms:
      raise AllocationError(f'SINR of {stage} slot {r} is unbounded: no interference and no noise.')
    return num, Posynomial(tuple(terms))


def _declare_powers(problem: GPProblem, stages: _Stages, cfg: SystemConfig):
  for r in stages.gnb_streams:
    problem.add_variable(f'eta_gnb_{r}')
  for r in stages.iab_streams:
    problem.add_variable(f'eta_iab_{r}')
  for u in stages.gnb_ues + stages.iab_ues:
    problem.add_variable(f'eta_ue_{u}')
  gnb = Posynomial(tuple(var(f'eta_gnb_{r}') for r in stages.gnb_streams))
  problem.add_leq(gnb / cfg.p_max_gnb_w, 'budget_gnb')
  if stages.iab_streams:
    iab = Posynomial(tuple(var(f'eta_iab_{r}') for r in stages.iab_streams))
    problem.add_leq(iab / cfg.p_max_iab_w, 'budget_iab')
  for u in stages.gnb_ues + stages.iab_ues:
    problem.add_leq(var(f'eta_ue_{u}') / cfg.p_max_ue_w, f'budget_ue_{u}')


def _drop_constant(p: Posynomial) -> Posynomial:
  return Posynomial(tuple(t for t in p.terms if t.exponents))


def _add_backhaul(problem: GPProblem, stages: _Stages, point):
  """Backhaul-rate constraints prod(1 + rho) <= 1 + z0 in both directions.

  z0_u lower-bounds the backhaul SINR into the IAB node and z0_d the one into the gNB.
  rho_d_i upper-bounds the IAB downlink SINR of UE i and rho_u_i its uplink SINR; both use
  a monomial lower bound of the interference-plus-noise.
  """
  if not stages.with_backhaul:
    return
  for direction, stage in (('u', 'dl'), ('d', 'ul')):
    z0 = problem.add_variable(f'z0_{direction}')
    num, den = stages.sinr(stage, 0)
    problem.add_leq(z0 * den / num, f'z0_{direction}<=sinr_{stage}0')
  rhos = {'d': [], 'u': []}
  for direction, stage in (('d', 'ul'), ('u', 'dl')):
    for i in stages.iab_ues:
      rho = problem.add_variable(f'rho_{direction}_{i}')
      num, den = stages.sinr(stage, i)
      problem.add_leq(num / (rho * gp.condense(den, point)), f'rho_{direction}_{i}>=sinr_{stage}{i}')
      rhos[direction].append(rho)
  problem.add_leq(_drop_constant(expand_product(rhos['d'])) / var('z0_u'), 'backhaul_dl_rate')
  problem.add_leq(_drop_constant(expand_product(rhos['u'])) / var('z0_d'), 'backhaul_ul_rate')


def _geometric_mean(names: Sequence[str]) -> Monomial:
  return Monomial(1., {name: 1. / len(names) for name in names})


def _uniform_point(stages: _Stages, cfg: SystemConfig) -> Dict[str, float]:
  p = uniform_allocation(cfg, stages.gains.k_gnb, stages.gains.k_iab)
  point = {f'eta_gnb_{r}': p.gnb(r) for r in stages.gnb_streams}
  point.update({f'eta_iab_{r}': p.iab(r) for r in stages.iab_streams})
  point.update({f'eta_ue_{u}': p.ue(u) for u in stages.gnb_ues + stages.iab_ues})
  return point


def _condense_point(stages: _Stages, cfg: SystemConfig, point):
  if point is not None:
    return dict(point)
  if cfg.condense_point == 'uniform':
    return _uniform_point(stages, cfg)
  return None


def build_maxmin_gp(gains: GainTable, cfg: SystemConfig,
                    point: Optional[Mapping[str, float]] = None) -> GPProblem:
  """Maximize the geometric mean of the per-group minimum SINRs.

  `point` sets the AM-GM weights of the condensed denominators; by default they follow
  `cfg.condense_point`.
  """
  stages = _Stages(gains)
  point = _condense_point(stages, cfg, point)
  problem = GPProblem()
  _declare_powers(problem, stages, cfg)
  z_names = []
  for group, slots in stages.groups().items():
    stage = _GROUP_SLOTS[group][0]
    z = problem.add_variable(f'z_{group}')
    z_names.append(f'z_{group}')
    for r in slots:
      num, den = stages.sinr(stage, r)
      problem.add_leq(z * den / num, f'z_{group}<=sinr_{stage}{r}')
  _add_backhaul(problem, stages, point)
  problem.objective = _geometric_mean(z_names)
  return problem


def build_maxsum_gp(gains: GainTable, cfg: SystemConfig,
                    point: Optional[Mapping[str, float]] = None) -> GPProblem:
  """Maximize the geometric mean of the per-group sum SE proxies.

  Link SE proxies s satisfy (1 + ln2 s / eps) <= u and u^eps <= 1 + SINR, the second
  condensed as u^eps den / (num + den) <= 1.
  """
  eps = cfg.epsilon_se
  stages = _Stages(gains)
  point = _condense_point(stages, cfg, point)
  problem = GPProblem()
  _declare_powers(problem, stages, cfg)
  z_names = []
  worst_gap = 0.
  for group, slots in stages.groups().items():
    stage = _GROUP_SLOTS[group][0]
    s_terms = []
    for r in slots:
      s_name, u_name = f's_{group}_{r}', f'u_{group}_{r}'
      s = problem.add_variable(s_name)
      u = problem.add_variable(u_name)
      num, den = stages.sinr(stage, r)
      if point is not None and s_name not in point:
        sinr = num.evaluate(point) / den.evaluate(point)
        point[s_name] = float(surrogate_se(eps, sinr))
        point[u_name] = (1. + sinr) ** (1. / eps)
        worst_gap = max(worst_gap, float(epsilon_gap(eps, sinr)))
      problem.add_leq((1. + (LN2 / eps) * s) / u, f'{s_name}<={u_name}')
      problem.add_leq(u ** eps * den / gp.condense(num + den, point), f'{u_name}<=sinr_{stage}{r}')
      s_terms.append(s)
    z = problem.add_variable(f'z_{group}')
    z_names.append(f'z_{group}')
    problem.add_leq(z / gp.condense(Posynomial(tuple(s_terms)), point), f'z_{group}<=sum_s')
  if worst_gap > 0.01:
    logging.log_first_n(logging.WARNING, 'Surrogate SE overestimates log2(1 + SINR) by up to '
                        '%.1f%% at eps=%d.', 1, 100. * worst_gap, eps)
  _add_backhaul(problem, stages, point)
  problem.objective = _geometric_mean(z_names)
  return problem


def _allocation_from(values: Mapping[str, float], gains: GainTable) -> PowerAllocation:
  return PowerAllocation(
    eta_gnb=[values.get('eta_gnb_0', 0.)] + [values[f'eta_gnb_{k}'] for k in gains.gnb_ues],
    eta_iab=[values.get('eta_iab_0', 0.)] + [values[f'eta_iab_{i}'] for i in gains.iab_ues],
    eta_ue=[values[f'eta_ue_{u}'] for u in gains.gnb_ues + gains.iab_ues])


def verify_constraints(alloc: PowerAllocation, gains: GainTable, cfg: SystemConfig,
                       tol: float = 1e-6) -> VerificationReport:
  """Check budgets and the unrelaxed backhaul-SE constraints at `alloc`."""
  checks = {}

  def budget(name, value, limit):
    checks[name] = ConstraintCheck(float(value), float(limit), bool(value <= limit * (1. + tol)))

  budget('budget_gnb', np.sum(alloc.eta_gnb), cfg.p_max_gnb_w)
  budget('budget_iab', np.sum(alloc.eta_iab), cfg.p_max_iab_w)
  for u in gains.gnb_ues + gains.iab_ues:
    budget(f'budget_ue_{u}', alloc.ue(u), cfg.p_max_ue_w)
  lowest = min(np.min(alloc.eta_gnb), np.min(alloc.eta_iab), np.min(alloc.eta_ue))
  checks['powers_nonnegative'] = ConstraintCheck(-float(lowest), 0., bool(lowest >= 0.))

  se = link_metrics.se_report(gains, alloc)
  access_dl = float(np.sum(se.se_d_iab))
  access_ul = float(np.sum(se.se_u_iab))
  checks['backhaul_dl'] = ConstraintCheck(access_dl, se.se_u_iab_0, access_dl <= se.se_u_iab_0 + tol)
  checks['backhaul_ul'] = ConstraintCheck(access_ul, se.se_u_gnb_0, access_ul <= se.se_u_gnb_0 + tol)
  binding = {'dl': access_dl > se.se_u_iab_0, 'ul': access_ul > se.se_u_gnb_0}
  return VerificationReport(checks=checks, backhaul_cap_binding=binding)


def induced_objective(kind, alloc: PowerAllocation, gains: GainTable, cfg: SystemConfig) -> float:
  """Objective value the allocation induces for the max-min or max-sum program."""
  kind = parse_strategy(kind)
  report = link_metrics.sinr_report(gains, alloc)
  groups = [g for g in GROUPS if len(report.group(g))]
  if kind is StrategyKind.MAX_MIN:
    values = [float(np.min(report.group(g))) for g in groups]
  elif kind is StrategyKind.MAX_SUM_SE:
    values = [float(np.sum(surrogate_se(cfg.epsilon_se, report.group(g)))) for g in groups]
  else:
    raise AllocationError(f'Strategy {kind.value} has no objective.')
  return float(np.prod(np.power(values, 1. / len(values))))


def _relaxation_gap(values: Mapping[str, float], gains: GainTable, alloc: PowerAllocation):
  """rho / SINR - 1 and SINR / z0 - 1, both nonnegative for a conservative relaxation."""
  if not gains.k_iab:
    return {}
  report = link_metrics.sinr_report(gains, alloc)
  gaps = {}
  for n, i in enumerate(gains.iab_ues):
    gaps[f'rho_d_{i}'] = values[f'rho_d_{i}'] / report.sinr_d_iab[n] - 1.
    gaps[f'rho_u_{i}'] = values[f'rho_u_{i}'] / report.sinr_u_iab[n] - 1.
  gaps['z0_u'] = report.sinr_u_iab_0 / values['z0_u'] - 1.
  gaps['z0_d'] = report.sinr_u_gnb_0 / values['z0_d'] - 1.
  return {k: float(v) for k, v in gaps.items()}


def _solve_gp(kind: StrategyKind, builder, gains: GainTable, cfg: SystemConfig) -> AllocationResult:
  problem = builder(gains, cfg)
  try:
    solution = gp.solve(problem, tol=cfg.solver_tolerance, max_iter=cfg.solver_max_iter)
    for it in range(cfg.condense_iters):
      if not solution.optimal:
        break
      candidate_problem = builder(gains, cfg, solution.values)
      candidate = gp.solve(candidate_problem, tol=cfg.solver_tolerance, max_iter=cfg.solver_max_iter)
      if not candidate.optimal or candidate.objective_value < solution.objective_value:
        logging.debug('Condensation stopped at iteration %d (status %s).', it, candidate.status)
        break
      problem, solution = candidate_problem, candidate
  except gp.GPDomainError as e:
    logging.warning('%s solve failed: %s', kind.value, e)
    alloc = PowerAllocation.zeros(gains.k_gnb, gains.k_iab)
    return AllocationResult(kind.value, alloc, SOLVER_ERROR, float('nan'),
                            verify_constraints(alloc, gains, cfg), problem=problem)

  alloc = _allocation_from(solution.values, gains)
  verification = verify_constraints(alloc, gains, cfg)
  gaps = _relaxation_gap(solution.values, gains, alloc) if solution.status != gp.INFEASIBLE else {}
  if solution.optimal and not verification.passed:
    logging.warning('%s allocation fails %s at the GP optimum.', kind.value, verification.failed)
  return AllocationResult(kind.value, alloc, solution.status, solution.objective_value, verification,
                          relaxation_gap=gaps, problem=problem, solution=solution)


@register_strategy(name=StrategyKind.UNIFORM.value)
def _uniform(gains: GainTable, cfg: SystemConfig) -> AllocationResult:
  alloc = uniform_allocation(cfg, gains.k_gnb, gains.k_iab)
  return AllocationResult(StrategyKind.UNIFORM.value, alloc, CLOSED_FORM, float('nan'),
                          verify_constraints(alloc, gains, cfg))


@register_strategy(name=StrategyKind.MAX_MIN.value)
def _max_min(gains: GainTable, cfg: SystemConfig) -> AllocationResult:
  return _solve_gp(StrategyKind.MAX_MIN, build_maxmin_gp, gains, cfg)


@register_strategy(name=StrategyKind.MAX_SUM_SE.value)
def _max_sum_se(gains: GainTable, cfg: SystemConfig) -> AllocationResult:
  return _solve_gp(StrategyKind.MAX_SUM_SE, build_maxsum_gp, gains, cfg)


def solve_allocation(strategy, gains: GainTable, cfg: SystemConfig) -> AllocationResult:
  """Allocate powers with `strategy`; a failed solve is reported in the status, never replaced.

  Args:
    strategy: A registered strategy name or alias, or a `StrategyKind`.
    gains: The `GainTable` of one realization.
    cfg: The `SystemConfig` with the power budgets and the GP settings.

  Returns:
    An `AllocationResult`. `status` is 'closed_form' for the uniform benchmark and the GP
      solver status otherwise.

  Raises:
    AllocationError: the strategy is unknown or the gain table cannot be formulated.
  """
  return get_strategy(strategy)(gains, cfg)
