# -*- coding: utf-8 -*-
"""System configuration, topology generation and seed discipline for IAB trials."""

import dataclasses
import json
import math
from typing import Any, Dict, List, Mapping, Optional, Tuple

import jax
import numpy as np

import utils

jax.config.update('jax_enable_x64', True)

__all__ = ['ConfigError', 'SystemConfig', 'ValidationReport', 'Topology', 'validate_config',
           'generate_topology', 'trial_key', 'load_json_overrides', 'env_overrides']

# Purpose tags folded into a trial key.
TOPOLOGY = 0
CHANNELS = 1
# Sub-streams of the topology key.
GNB_AREA = 0
IAB_AREA = 1

GNB = 'gnb'
IAB = 'iab'


class ConfigError(ValueError):
  """Unknown or unparsable configuration entry."""


@dataclasses.dataclass(frozen=True)
class SystemConfig:
  carrier_frequency: float = 30e9
  noise_density: float = -173.
  bandwidth: float = 100e6
  noise_figure_gnb: float = 0.
  noise_figure_iab: float = 0.
  noise_figure_ue: float = 0.
  n_gnb: Tuple[int, int] = (16, 4)
  n_iab: Tuple[int, int] = (8, 4)
  n_ue: Tuple[int, int] = (4, 2)
  element_spacing: float = 0.5
  p_max_gnb: float = 43.
  p_max_iab: float = 43.
  p_max_ue: float = 23.
  k_gnb: int = 12
  k_iab: int = 1
  radius_gnb: float = 100.
  radius_iab: float = 50.
  min_distance: float = 10.
  # Distance gNB to IAB node, None places the IAB node on the gNB coverage edge.
  iab_distance: Optional[float] = None
  height_gnb: float = 25.
  height_iab: float = 10.
  height_ue: float = 1.5
  sector_width: float = 120.
  n_clusters: int = 4
  n_paths: int = 3
  cluster_decay_db: float = 3.
  angular_spread_az: float = 15.
  angular_spread_el: float = 5.
  ray_spread: float = 2.
  shadowing: bool = True
  shadowing_los_db: float = 4.
  shadowing_nlos_db: float = 7.82
  sector_max_gain_db: float = 8.
  sector_beamwidth: float = 120.
  sector_attenuation_db: float = 30.
  epsilon_se: int = 100
  solver_tolerance: float = 1e-6
  solver_max_iter: int = 1000
  condense_iters: int = 0
  condense_point: str = 'uniform'
  cap_backhaul: bool = True
  seed: int = 42

  @classmethod
  def from_dict(cls, values: Mapping[str, Any]) -> 'SystemConfig':
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
      raise ConfigError(f'Unknown system config keys: {unknown}.')
    return cls(**{k: _coerce(fields[k], v) for k, v in values.items()})

  @classmethod
  def from_config(cls, config) -> 'SystemConfig':
    """Build from an ml_collections config with a `system` section and a top-level seed."""
    values = config.system.to_dict()
    if 'seed' in config:
      values.setdefault('seed', config.seed)
    return cls.from_dict(values)

  def with_overrides(self, **changes) -> 'SystemConfig':
    return dataclasses.replace(self, **changes)

  def to_dict(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)

  @property
  def n_gnb_total(self):
    return self.n_gnb[0] * self.n_gnb[1]

  @property
  def n_iab_total(self):
    return self.n_iab[0] * self.n_iab[1]

  @property
  def n_ue_total(self):
    return self.n_ue[0] * self.n_ue[1]

  @property
  def p_max_gnb_w(self):
    return float(utils.dbm_to_watts(self.p_max_gnb))

  @property
  def p_max_iab_w(self):
    return float(utils.dbm_to_watts(self.p_max_iab))

  @property
  def p_max_ue_w(self):
    return float(utils.dbm_to_watts(self.p_max_ue))

  @property
  def iab_offset(self):
    return self.radius_gnb if self.iab_distance is None else self.iab_distance

  def noise_power(self, node: str) -> float:
    """sigma^2 in watts: noise density + 10 log10(bandwidth) + noise figure of the node type."""
    figure = {GNB: self.noise_figure_gnb, IAB: self.noise_figure_iab, 'ue': self.noise_figure_ue}[node]
    return float(utils.dbm_to_watts(self.noise_density + 10. * math.log10(self.bandwidth) + figure))


def _coerce(field, value):
  """Parse JSON and environment values into the type of a SystemConfig field."""
  default = field.default
  if isinstance(default, tuple):
    if isinstance(value, str):
      parts = value.lower().replace('x', ',').split(',')
      value = [p for p in parts if p.strip()]
    try:
      return tuple(int(v) for v in value)
    except (TypeError, ValueError):
      raise ConfigError(f'{field.name}: expected an array shape like 16x4, got {value!r}.') from None
  if isinstance(default, bool):
    if isinstance(value, str):
      if value.lower() in ('1', 'true', 'yes'):
        return True
      if value.lower() in ('0', 'false', 'no'):
        return False
      raise ConfigError(f'{field.name}: expected a boolean, got {value!r}.')
    return bool(value)
  try:
    if isinstance(default, int):
      if isinstance(value, float) and not value.is_integer():
        raise ValueError
      return int(value)
    if isinstance(default, float) or default is None:
      return None if value is None or value == 'None' else float(value)
  except (TypeError, ValueError):
    raise ConfigError(f'{field.name}: cannot parse {value!r}.') from None
  return value


@dataclasses.dataclass(frozen=True)
class ValidationReport:
  violations: Tuple[str, ...] = ()

  @property
  def valid(self):
    return not self.violations

  def __bool__(self):
    return self.valid

  def __str__(self):
    return 'valid' if self.valid else '; '.join(self.violations)


def validate_config(cfg: SystemConfig) -> ValidationReport:
  """List every violated invariant of `cfg`; an empty report means valid."""
  v: List[str] = []
  if cfg.n_gnb_total < cfg.k_gnb + 1:
    v.append(f'N^gNB ≥ K+1 fails: {cfg.n_gnb_total} < {cfg.k_gnb + 1}')
  if cfg.n_iab_total < cfg.k_iab + 1:
    v.append(f'N^IAB ≥ K̃+1 fails: {cfg.n_iab_total} < {cfg.k_iab + 1}')
  for name in ('n_gnb', 'n_iab', 'n_ue'):
    shape = getattr(cfg, name)
    if len(shape) != 2 or min(shape) < 1:
      v.append(f'{name} must be two positive array dimensions, got {shape}')
  if cfg.k_gnb < 1:
    v.append(f'k_gnb must be at least 1, got {cfg.k_gnb}')
  if cfg.k_iab < 0:
    v.append(f'k_iab must be nonnegative, got {cfg.k_iab}')
  for name in ('carrier_frequency', 'bandwidth', 'radius_gnb', 'radius_iab', 'element_spacing',
               'solver_tolerance'):
    if not getattr(cfg, name) > 0:
      v.append(f'{name} must be strictly positive, got {getattr(cfg, name)}')
  for name in ('p_max_gnb', 'p_max_iab', 'p_max_ue'):
    if not math.isfinite(getattr(cfg, name)):
      v.append(f'{name} must be finite, got {getattr(cfg, name)}')
  if cfg.epsilon_se % 2 != 0:
    v.append(f'epsilon_se must be even, got {cfg.epsilon_se}')
  if cfg.epsilon_se < 2:
    v.append(f'epsilon_se must be at least 2, got {cfg.epsilon_se}')
  if not 0 <= cfg.min_distance < min(cfg.radius_gnb, cfg.radius_iab):
    v.append(f'min_distance must lie in [0, coverage radius), got {cfg.min_distance}')
  if cfg.iab_distance is not None and not cfg.iab_distance > 0:
    v.append(f'iab_distance must be strictly positive, got {cfg.iab_distance}')
  if not (cfg.height_gnb > cfg.height_ue and cfg.height_iab > cfg.height_ue):
    v.append('gNB and IAB heights must exceed the UE height')
  if cfg.height_ue <= 0:
    v.append(f'height_ue must be strictly positive, got {cfg.height_ue}')
  if not 0 < cfg.sector_width <= 360:
    v.append(f'sector_width must lie in (0, 360], got {cfg.sector_width}')
  if cfg.n_clusters < 1 or cfg.n_paths < 1:
    v.append('n_clusters and n_paths must be at least 1')
  if cfg.condense_iters < 0:
    v.append(f'condense_iters must be nonnegative, got {cfg.condense_iters}')
  if cfg.condense_point not in ('uniform', 'equal'):
    v.append(f'condense_point must be uniform or equal, got {cfg.condense_point}')
  if cfg.solver_max_iter < 1:
    v.append(f'solver_max_iter must be at least 1, got {cfg.solver_max_iter}')
  return ValidationReport(tuple(v))


@dataclasses.dataclass(frozen=True)
class Topology:
  """Node positions in meters. UEs 1..K are served by the gNB, K+1..K+K̃ by the IAB node."""
  gnb_position: np.ndarray
  iab_position: np.ndarray
  ue_positions: np.ndarray
  serving: Tuple[str, ...]
  gnb_orientation: float = 0.
  iab_orientation: float = 0.

  @property
  def k_gnb(self):
    return self.serving.count(GNB)

  @property
  def k_iab(self):
    return self.serving.count(IAB)

  @property
  def gnb_ues(self):
    """Global indices of the gNB UEs, 1..K."""
    return list(range(1, self.k_gnb + 1))

  @property
  def iab_ues(self):
    """Global indices of the IAB UEs, K+1..K+K~."""
    return list(range(self.k_gnb + 1, self.k_gnb + self.k_iab + 1))

  def ue(self, index: int) -> np.ndarray:
    return self.ue_positions[index - 1]

  def server_position(self, index: int) -> np.ndarray:
    return self.gnb_position if self.serving[index - 1] == GNB else self.iab_position


def trial_key(seed: int, trial_index: int):
  """Child key of trial `trial_index`; trials are independent of execution order."""
  return jax.random.fold_in(jax.random.PRNGKey(seed), trial_index)


def _sector_draw(key, center, orientation, cfg, radius):
  u = np.asarray(jax.random.uniform(key, (2,)))
  r0 = cfg.min_distance
  r = math.sqrt(u[0] * (radius ** 2 - r0 ** 2) + r0 ** 2)
  phi = orientation + (2. * u[1] - 1.) * math.radians(cfg.sector_width) / 2.
  return np.array([center[0] + r * math.cos(phi), center[1] + r * math.sin(phi), cfg.height_ue])


def generate_topology(cfg: SystemConfig, rng) -> Topology:
  """Drop K UEs in the gNB sector and K̃ UEs in the IAB sector, area-uniformly.

  Each UE has its own key, so adding IAB UEs leaves the earlier UEs where they were.
  """
  gnb = np.array([0., 0., cfg.height_gnb])
  iab = np.array([cfg.iab_offset, 0., cfg.height_iab])
  gnb_key = jax.random.fold_in(rng, GNB_AREA)
  iab_key = jax.random.fold_in(rng, IAB_AREA)
  positions = [_sector_draw(jax.random.fold_in(gnb_key, k), gnb, 0., cfg, cfg.radius_gnb)
               for k in range(cfg.k_gnb)]
  positions += [_sector_draw(jax.random.fold_in(iab_key, i), iab, 0., cfg, cfg.radius_iab)
                for i in range(cfg.k_iab)]
  return Topology(
    gnb_position=gnb, iab_position=iab,
    ue_positions=np.array(positions).reshape(-1, 3),
    serving=(GNB,) * cfg.k_gnb + (IAB,) * cfg.k_iab)


def load_json_overrides(path: str) -> Dict[str, Any]:
  """Flat key-value JSON document; keys are SystemConfig field names."""
  with open(path) as f:
    values = json.load(f)
  if not isinstance(values, dict):
    raise ConfigError(f'{path}: expected a flat JSON object.')
  names = {f.name for f in dataclasses.fields(SystemConfig)}
  unknown = sorted(set(values) - names)
  if unknown:
    raise ConfigError(f'{path}: unknown keys {unknown}.')
  return values


def env_overrides(environ: Mapping[str, str], prefix: str = 'IAB_') -> Dict[str, str]:
  """Values of `<prefix><FIELD>` environment variables, keyed by field name."""
  out = {}
  for f in dataclasses.fields(SystemConfig):
    key = prefix + f.name.upper()
    if key in environ:
      out[f.name] = environ[key]
  return out
