# -*- coding: utf-8 -*-
"""Cluster-based mmWave MIMO channels for the gNB, the IAB node and their UEs.

H = sqrt(Nt Nr / (Nc Nl)) sum_c sum_l alpha_cl a_r(theta_cl) a_t(phi_cl)^T with a_r and a_t the
unit-norm array responses and alpha_cl ~ CN(0, Omega_cl). The path powers Omega of a link sum
to its large-scale gain (pathloss, sector element gain, shadowing), so E||H||_F^2 = Nt Nr
times the mean path power.
"""

import dataclasses
import functools
import json
import math
from typing import Dict, Iterator, Optional, Sequence, Tuple

from absl import logging
import jax
import numpy as np

import scenario
import utils
from scenario import SystemConfig, Topology

__all__ = ['ChannelError', 'ArrayGeometry', 'PathComponent', 'ChannelMatrix', 'ChannelSet',
           'LinkDescriptor', 'array_response', 'pathloss_db', 'los_probability', 'sector_gain_db',
           'synthesize_channel', 'draw_channel', 'build_channel_set', 'save_channel_set',
           'load_channel_set']

BACKHAUL = 'backhaul'
GNB_ACCESS = 'gnb-access'
IAB_ACCESS = 'iab-access'
CROSS = 'ue-ue-cross'
LINK_KINDS = (BACKHAUL, GNB_ACCESS, IAB_ACCESS, CROSS)

SPEED_OF_LIGHT = 299792458.


class ChannelError(ValueError):
  """Channel model evaluated outside its validity range."""


@dataclasses.dataclass(frozen=True)
class ArrayGeometry:
  """Uniform planar array, `rows` horizontal by `cols` vertical elements."""
  rows: int
  cols: int
  element_spacing: float = 0.5
  orientation: float = 0.

  def __post_init__(self):
    if self.rows * self.cols < 1 or self.rows < 1 or self.cols < 1:
      raise ChannelError(f'Array needs at least one element, got {self.rows}x{self.cols}.')
    if not self.element_spacing > 0:
      raise ChannelError(f'Element spacing must be positive, got {self.element_spacing}.')

  @property
  def n_elements(self):
    return self.rows * self.cols


@dataclasses.dataclass(frozen=True)
class PathComponent:
  alpha: complex
  power: float
  aod: Tuple[float, float]
  aoa: Tuple[float, float]


@dataclasses.dataclass(frozen=True)
class ChannelMatrix:
  """`entries` is receiver antennas by transmitter antennas."""
  entries: np.ndarray
  link_kind: str
  endpoints: Tuple[str, str]

  @property
  def rx(self):
    return self.endpoints[0]

  @property
  def tx(self):
    return self.endpoints[1]

  @property
  def shape(self):
    return self.entries.shape


@dataclasses.dataclass(frozen=True)
class LinkDescriptor:
  kind: str
  endpoints: Tuple[str, str]
  rx_array: ArrayGeometry
  tx_array: ArrayGeometry
  rx_position: np.ndarray
  tx_position: np.ndarray
  gain: float
  n_clusters: int = 1
  n_paths: int = 1
  cluster_decay_db: float = 3.
  angular_spread: Tuple[float, float] = (0., 0.)
  ray_spread: float = 0.
  los: bool = True


def ue_id(index: int) -> str:
  return f'ue{index}'


@dataclasses.dataclass
class ChannelSet:
  """All matrices of one realization, keyed by the global UE indices.

  gnb_access[k]: H_k, gNB x UE k.  backhaul: H_0, gNB x IAB.
  iab_access[i]: H_i, IAB x UE i.  cross[(i, k)]: H_{i,k}, UE k x UE i.
  The reverse direction of any link is the conjugate transpose.
  """
  gnb_access: Dict[int, ChannelMatrix]
  backhaul: ChannelMatrix
  iab_access: Dict[int, ChannelMatrix]
  cross: Dict[Tuple[int, int], ChannelMatrix]
  noise: Dict[str, float]

  @property
  def k_gnb(self):
    return len(self.gnb_access)

  @property
  def k_iab(self):
    return len(self.iab_access)

  def matrices(self) -> Iterator[ChannelMatrix]:
    yield from self.gnb_access.values()
    yield self.backhaul
    yield from self.iab_access.values()
    yield from self.cross.values()

  def __len__(self):
    return sum(1 for _ in self.matrices())

  @functools.cached_property
  def _by_endpoints(self) -> Dict[Tuple[str, str], np.ndarray]:
    return {h.endpoints: h.entries for h in self.matrices()}

  def between(self, tx: str, rx: str) -> np.ndarray:
    """Matrix from node `tx` to node `rx`, using reciprocity for reversed links."""
    if (rx, tx) in self._by_endpoints:
      return self._by_endpoints[(rx, tx)]
    if (tx, rx) in self._by_endpoints:
      return self._by_endpoints[(tx, rx)].conj().T
    raise ChannelError(f'No channel between {tx} and {rx}.')


def array_response(geom: ArrayGeometry, angles: Sequence[float]) -> np.ndarray:
  """Unit-modulus planar-array response, element (m, n) at index m * cols + n.

  Azimuth is global and measured against the array boresight `geom.orientation`.
  """
  az, el = angles
  rel = az - geom.orientation
  m = np.arange(geom.rows)
  n = np.arange(geom.cols)
  horizontal = np.exp(2j * np.pi * geom.element_spacing * m * math.sin(rel) * math.cos(el))
  vertical = np.exp(2j * np.pi * geom.element_spacing * n * math.sin(el))
  return np.kron(horizontal, vertical)


def _heights(link_kind, cfg: SystemConfig):
  return {
    BACKHAUL: (cfg.height_gnb, cfg.height_iab),
    GNB_ACCESS: (cfg.height_gnb, cfg.height_ue),
    IAB_ACCESS: (cfg.height_iab, cfg.height_ue),
    CROSS: (cfg.height_ue, cfg.height_ue),
  }[link_kind]


def pathloss_db(link_kind: str, distance_m: float, cfg: SystemConfig, los: bool = True) -> float:
  """UMi street-canyon pathloss at `cfg.carrier_frequency` for a 3-D distance.

  The backhaul is always LoS and UE-UE cross links always NLoS; access links follow `los`.
  """
  if link_kind not in LINK_KINDS:
    raise NotImplementedError(f'Link kind {link_kind} unknown.')
  if not distance_m >= 1.:
    raise ChannelError(f'Distance {distance_m} m is below the pathloss model validity of 1 m.')
  fc = cfg.carrier_frequency / 1e9
  h_bs, h_ut = _heights(link_kind, cfg)
  breakpoint_m = 4. * max(h_bs - 1., 0.) * max(h_ut - 1., 0.) * cfg.carrier_frequency / SPEED_OF_LIGHT
  if distance_m <= breakpoint_m or breakpoint_m <= 0.:
    pl_los = 32.4 + 21. * math.log10(distance_m) + 20. * math.log10(fc)
  else:
    pl_los = (32.4 + 40. * math.log10(distance_m) + 20. * math.log10(fc)
              - 9.5 * math.log10(breakpoint_m ** 2 + (h_bs - h_ut) ** 2))
  if link_kind == BACKHAUL or (link_kind != CROSS and los):
    return pl_los
  pl_nlos = 35.3 * math.log10(distance_m) + 22.4 + 21.3 * math.log10(fc) - 0.3 * (h_ut - 1.5)
  return max(pl_los, pl_nlos)


def los_probability(distance_2d: float) -> float:
  """UMi street-canyon LoS probability."""
  if distance_2d <= 18.:
    return 1.
  return 18. / distance_2d + math.exp(-distance_2d / 36.) * (1. - 18. / distance_2d)


def sector_gain_db(phi: float, cfg: SystemConfig) -> float:
  """Parabolic sector element gain for azimuth `phi` off boresight, radians."""
  phi = math.degrees((phi + math.pi) % (2. * math.pi) - math.pi)
  return cfg.sector_max_gain_db - min(12. * (phi / cfg.sector_beamwidth) ** 2, cfg.sector_attenuation_db)


def _direction(src, dst):
  d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
  return math.atan2(d[1], d[0]), math.atan2(d[2], math.hypot(d[0], d[1]))


def path_powers(link: LinkDescriptor) -> np.ndarray:
  """Per-path power Omega, decaying per cluster, split equally within a cluster.

  Sum Omega over all paths equals the large-scale gain of the link.
  """
  weights = 10. ** (-link.cluster_decay_db * np.arange(link.n_clusters) / 10.)
  per_cluster = link.gain * weights / weights.sum()
  return np.repeat(per_cluster / link.n_paths, link.n_paths)


def synthesize_channel(rx_array: ArrayGeometry, tx_array: ArrayGeometry,
                       paths: Sequence[PathComponent]) -> np.ndarray:
  """Deterministic sum over `paths`; a single path with alpha = 1 gives sqrt(Nt Nr) a_r a_t^T."""
  nr, nt = rx_array.n_elements, tx_array.n_elements
  h = np.zeros((nr, nt), dtype=complex)
  for p in paths:
    a_r = array_response(rx_array, p.aoa) / math.sqrt(nr)
    a_t = array_response(tx_array, p.aod) / math.sqrt(nt)
    h += p.alpha * np.outer(a_r, a_t)
  return math.sqrt(nt * nr / len(paths)) * h


def draw_channel(link: LinkDescriptor, rng) -> ChannelMatrix:
  """One realization of `link`; path (0, 0) is the geometric line-of-sight path."""
  n_paths = link.n_clusters * link.n_paths
  omega = path_powers(link)
  k_alpha, k_cluster, k_ray = jax.random.split(rng, 3)
  z = np.asarray(jax.random.normal(k_alpha, (n_paths, 2)))
  alpha = np.sqrt(omega / 2.) * (z[:, 0] + 1j * z[:, 1])

  aod0 = np.array(_direction(link.tx_position, link.rx_position))
  aoa0 = np.array(_direction(link.rx_position, link.tx_position))
  spread = np.radians(np.asarray(link.angular_spread)) / math.sqrt(2.)
  cluster_offsets = np.asarray(jax.random.laplace(k_cluster, (link.n_clusters, 2, 2))) * spread
  cluster_offsets[0] = 0.
  ray_offsets = np.asarray(jax.random.laplace(k_ray, (n_paths, 2, 2))) * math.radians(link.ray_spread) / math.sqrt(2.)
  ray_offsets[0] = 0.

  paths = []
  for p in range(n_paths):
    c = p // link.n_paths
    offset = cluster_offsets[c] + ray_offsets[p]
    paths.append(PathComponent(alpha=complex(alpha[p]), power=float(omega[p]),
                               aod=tuple(aod0 + offset[0]), aoa=tuple(aoa0 + offset[1])))
  entries = synthesize_channel(link.rx_array, link.tx_array, paths)
  return ChannelMatrix(entries=entries, link_kind=link.kind, endpoints=link.endpoints)


def _array(shape, cfg: SystemConfig, orientation):
  return ArrayGeometry(shape[0], shape[1], cfg.element_spacing, orientation)


# Link codes folded into the channel key; every link draws from its own stream.
def _link_code(kind, a, b=0):
  return LINK_KINDS.index(kind) * 1_000_000 + a * 1000 + b


def _describe(kind, endpoints, rx_array, tx_array, rx_pos, tx_pos, cfg: SystemConfig, key,
              bs_end=None) -> LinkDescriptor:
  """Resolve LoS state, shadowing and sector gain of one link into its large-scale gain."""
  k_los, k_shadow = jax.random.split(key)
  d3 = max(float(np.linalg.norm(rx_pos - tx_pos)), 1.)
  d2 = float(np.linalg.norm((rx_pos - tx_pos)[:2]))
  if kind == BACKHAUL:
    los = True
  elif kind == CROSS:
    los = False
  else:
    los = bool(jax.random.uniform(k_los) < los_probability(d2))
  loss = pathloss_db(kind, d3, cfg, los=los)
  if cfg.shadowing:
    sigma = cfg.shadowing_los_db if los else cfg.shadowing_nlos_db
    loss += sigma * float(jax.random.normal(k_shadow))
  if kind == BACKHAUL:
    element_db = 2. * cfg.sector_max_gain_db
  elif bs_end is not None:
    bs_array, bs_pos, ue_pos = bs_end
    element_db = sector_gain_db(_direction(bs_pos, ue_pos)[0] - bs_array.orientation, cfg)
  else:
    element_db = 0.
  single = kind == BACKHAUL
  return LinkDescriptor(
    kind=kind, endpoints=endpoints, rx_array=rx_array, tx_array=tx_array,
    rx_position=rx_pos, tx_position=tx_pos,
    gain=float(utils.db_to_linear(element_db - loss)),
    n_clusters=1 if single else cfg.n_clusters,
    n_paths=1 if single else cfg.n_paths,
    cluster_decay_db=cfg.cluster_decay_db,
    angular_spread=(cfg.angular_spread_az, cfg.angular_spread_el),
    ray_spread=cfg.ray_spread, los=los)


def _draw(descriptor, key):
  return draw_channel(descriptor, jax.random.fold_in(key, 1))


def build_channel_set(topology: Topology, cfg: SystemConfig, rng) -> ChannelSet:
  """Materialize H_k, H_0, H_i and every cross link H_{i,k} of one realization."""
  gnb_array = _array(cfg.n_gnb, cfg, topology.gnb_orientation)
  iab_access_array = _array(cfg.n_iab, cfg, topology.iab_orientation)
  backhaul_dir = _direction(topology.iab_position, topology.gnb_position)[0]
  iab_backhaul_array = _array(cfg.n_iab, cfg, backhaul_dir)
  gnb_backhaul_array = _array(cfg.n_gnb, cfg, _direction(topology.gnb_position, topology.iab_position)[0])

  def ue_array(u):
    return _array(cfg.n_ue, cfg, _direction(topology.ue(u), topology.server_position(u))[0])

  def key(kind, a, b=0):
    return jax.random.fold_in(rng, _link_code(kind, a, b))

  gnb, iab = scenario.GNB, scenario.IAB
  gnb_access = {}
  for k in topology.gnb_ues:
    d = _describe(GNB_ACCESS, (gnb, ue_id(k)), gnb_array, ue_array(k), topology.gnb_position,
                  topology.ue(k), cfg, key(GNB_ACCESS, k),
                  bs_end=(gnb_array, topology.gnb_position, topology.ue(k)))
    gnb_access[k] = _draw(d, key(GNB_ACCESS, k))

  d = _describe(BACKHAUL, (gnb, iab), gnb_backhaul_array, iab_backhaul_array, topology.gnb_position,
                topology.iab_position, cfg, key(BACKHAUL, 0))
  backhaul = _draw(d, key(BACKHAUL, 0))

  iab_access = {}
  for i in topology.iab_ues:
    d = _describe(IAB_ACCESS, (iab, ue_id(i)), iab_access_array, ue_array(i), topology.iab_position,
                  topology.ue(i), cfg, key(IAB_ACCESS, i),
                  bs_end=(iab_access_array, topology.iab_position, topology.ue(i)))
    iab_access[i] = _draw(d, key(IAB_ACCESS, i))

  cross = {}
  for i in topology.iab_ues:
    for k in topology.gnb_ues:
      d = _describe(CROSS, (ue_id(k), ue_id(i)), ue_array(k), ue_array(i), topology.ue(k),
                    topology.ue(i), cfg, key(CROSS, i, k))
      cross[(i, k)] = _draw(d, key(CROSS, i, k))

  channels = ChannelSet(
    gnb_access=gnb_access, backhaul=backhaul, iab_access=iab_access, cross=cross,
    noise={node: cfg.noise_power(node) for node in (gnb, iab, 'ue')})
  logging.debug('Built %d channel matrices (K=%d, K~=%d).', len(channels), topology.k_gnb,
                topology.k_iab)
  return channels


def _record(h: ChannelMatrix):
  return {'kind': h.link_kind, 'rx': h.rx, 'tx': h.tx, 'shape': list(h.shape),
          'real': h.entries.real.ravel().tolist(), 'imag': h.entries.imag.ravel().tolist()}


def save_channel_set(channels: ChannelSet, path: str):
  """JSON lines: a noise header, then one record per link with row-major entries."""
  with open(path, 'w') as f:
    f.write(json.dumps({'noise': channels.noise}) + '\n')
    for k, h in channels.gnb_access.items():
      f.write(json.dumps(dict(_record(h), index=[k])) + '\n')
    f.write(json.dumps(dict(_record(channels.backhaul), index=[0])) + '\n')
    for i, h in channels.iab_access.items():
      f.write(json.dumps(dict(_record(h), index=[i])) + '\n')
    for (i, k), h in channels.cross.items():
      f.write(json.dumps(dict(_record(h), index=[i, k])) + '\n')


def load_channel_set(path: str) -> ChannelSet:
  with open(path) as f:
    lines = [json.loads(line) for line in f if line.strip()]
  noise = lines[0]['noise']
  gnb_access, iab_access, cross = {}, {}, {}
  backhaul: Optional[ChannelMatrix] = None
  for rec in lines[1:]:
    entries = (np.array(rec['real']) + 1j * np.array(rec['imag'])).reshape(rec['shape'])
    h = ChannelMatrix(entries=entries, link_kind=rec['kind'], endpoints=(rec['rx'], rec['tx']))
    if rec['kind'] == GNB_ACCESS:
      gnb_access[rec['index'][0]] = h
    elif rec['kind'] == BACKHAUL:
      backhaul = h
    elif rec['kind'] == IAB_ACCESS:
      iab_access[rec['index'][0]] = h
    elif rec['kind'] == CROSS:
      cross[tuple(rec['index'])] = h
    else:
      raise NotImplementedError(f'Link kind {rec["kind"]} unknown.')
  if backhaul is None:
    raise ChannelError(f'{path}: no backhaul record.')
  return ChannelSet(gnb_access=gnb_access, backhaul=backhaul, iab_access=iab_access, cross=cross,
                    noise=noise)
