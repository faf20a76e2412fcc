# -*- coding: utf-8 -*-
"""SINR, interference and spectral-efficiency evaluation for a gain table and powers."""

import dataclasses
from typing import Dict, List

from absl import logging
import numpy as np

from beamforming import GainTable

__all__ = ['PowerAllocation', 'SinrReport', 'SeReport', 'ConsistencyReport', 'stage_sinrs',
           'sinr_uplink_gnb_access', 'sinr_uplink_gnb_backhaul', 'sinr_downlink_gnb',
           'sinr_downlink_iab', 'sinr_uplink_iab_backhaul', 'sinr_uplink_iab_access',
           'sinr_report', 'se_report', 'backhaul_consistency_check', 'GROUPS']

# Fairness groups: gNB uplink, gNB downlink, IAB uplink, IAB downlink.
GROUPS = ('u_gnb', 'd_gnb', 'u_iab', 'd_iab')


@dataclasses.dataclass
class PowerAllocation:
  """Transmit powers in watts.

  eta_gnb[0] is the backhaul stream and eta_gnb[k] the stream of UE k in K.
  eta_iab[0] is the backhaul stream and eta_iab[i - K] the stream of UE i in I.
  eta_ue[u - 1] is the transmit power of UE u in K and I.
  """
  eta_gnb: np.ndarray
  eta_iab: np.ndarray
  eta_ue: np.ndarray

  def __post_init__(self):
    self.eta_gnb = np.asarray(self.eta_gnb, dtype=float)
    self.eta_iab = np.asarray(self.eta_iab, dtype=float)
    self.eta_ue = np.asarray(self.eta_ue, dtype=float)

  @property
  def k_gnb(self):
    return len(self.eta_gnb) - 1

  @property
  def k_iab(self):
    return len(self.eta_iab) - 1

  @classmethod
  def zeros(cls, k_gnb, k_iab):
    return cls(np.zeros(k_gnb + 1), np.zeros(k_iab + 1), np.zeros(k_gnb + k_iab))

  def gnb(self, k: int) -> float:
    return float(self.eta_gnb[k])

  def iab(self, r: int) -> float:
    return float(self.eta_iab[0 if r == 0 else r - self.k_gnb])

  def ue(self, u: int) -> float:
    return float(self.eta_ue[u - 1])

  def dl_powers(self) -> np.ndarray:
    """Stream powers of the gNB-transmit stage in slot order."""
    return np.concatenate([self.eta_gnb, self.eta_ue[self.k_gnb:]])

  def ul_powers(self) -> np.ndarray:
    """Stream powers of the gNB-receive stage in slot order."""
    return np.concatenate([self.eta_iab[:1], self.eta_ue[:self.k_gnb], self.eta_iab[1:]])

  def to_dict(self) -> Dict[str, List[float]]:
    return {'eta_gnb': self.eta_gnb.tolist(), 'eta_iab': self.eta_iab.tolist(),
            'eta_ue': self.eta_ue.tolist()}


def stage_sinrs(gains: np.ndarray, noise: np.ndarray, p: np.ndarray):
  """Vectorized SINR of every slot of one stage; returns (sinr, interference)."""
  desired = p * np.diag(gains)
  interference = gains @ p - desired
  return desired / (interference + noise), interference


def _sinr(desired, interference, noise):
  return desired / (interference + noise)


def _uplink_gnb_terms(gains: GainTable, p: PowerAllocation, k):
  """Desired and interference of the gNB combiner k in {0} and K."""
  interference = sum(p.iab(i) * gains.coefficient('g^gNB-IAB', k, i) for i in gains.iab_ues)
  interference += sum(p.ue(j) * gains.coefficient('g^gNB-UE', k, j) for j in gains.gnb_ues if j != k)
  if k == 0:
    desired = p.iab(0) * gains.coefficient('g^gNB-IAB', 0, 0)
  else:
    desired = p.ue(k) * gains.coefficient('g^gNB-UE', k, k)
    interference += p.iab(0) * gains.coefficient('g^gNB-IAB', k, 0)
  return desired, interference, gains.noise('ul', k)


def sinr_uplink_gnb_access(gains: GainTable, p: PowerAllocation, k: int) -> float:
  """UE k in K received by the gNB, interfered by the IAB streams and the other UEs of K."""
  return _sinr(*_uplink_gnb_terms(gains, p, k))


def sinr_uplink_gnb_backhaul(gains: GainTable, p: PowerAllocation) -> float:
  """Backhaul stream of the IAB node received by the gNB."""
  return _sinr(*_uplink_gnb_terms(gains, p, 0))


def _downlink_gnb_terms(gains: GainTable, p: PowerAllocation, k):
  """Desired and interference at UE k in K, or at the IAB backhaul combiner for k = 0."""
  if k == 0:
    desired = p.gnb(0) * gains.coefficient('g^IAB-gNB', 0, 0)
    interference = sum(p.gnb(j) * gains.coefficient('g^IAB-gNB', 0, j) for j in gains.gnb_ues)
    interference += sum(p.ue(i) * gains.coefficient('g^IAB-UE', 0, i) for i in gains.iab_ues)
    return desired, interference, gains.noise('dl', 0)
  desired = p.gnb(k) * gains.coefficient('g^UE-gNB', k, k)
  interference = sum(p.gnb(j) * gains.coefficient('g^UE-gNB', k, j)
                     for j in [0] + gains.gnb_ues if j != k)
  interference += sum(p.ue(i) * gains.coefficient('g~', k, i) for i in gains.iab_ues)
  return desired, interference, gains.noise('dl', k)


def sinr_downlink_gnb(gains: GainTable, p: PowerAllocation, k: int) -> float:
  """gNB stream k at UE k in K with cross-link interference from the IAB UEs.

  k = 0 evaluates the backhaul stream as if the IAB node were a gNB UE.
  """
  return _sinr(*_downlink_gnb_terms(gains, p, k))


def _downlink_iab_terms(gains: GainTable, p: PowerAllocation, i):
  """Desired and interference at UE i in I, or at the gNB backhaul combiner for i = 0."""
  if i == 0:
    desired = p.iab(0) * gains.coefficient('g^gNB-IAB', 0, 0)
    interference = sum(p.iab(l) * gains.coefficient('g^gNB-IAB', 0, l) for l in gains.iab_ues)
    interference += sum(p.ue(k) * gains.coefficient('g^gNB-UE', 0, k) for k in gains.gnb_ues)
    return desired, interference, gains.noise('ul', 0)
  desired = p.iab(i) * gains.coefficient('g^UE-IAB', i, i)
  interference = p.iab(0) * gains.coefficient('g^UE-IAB', i, 0)
  interference += sum(p.iab(l) * gains.coefficient('g^UE-IAB', i, l) for l in gains.iab_ues if l != i)
  interference += sum(p.ue(k) * gains.coefficient('g~', i, k) for k in gains.gnb_ues)
  return desired, interference, gains.noise('ul', i)


def sinr_downlink_iab(gains: GainTable, p: PowerAllocation, i: int) -> float:
  """IAB stream i at UE i in I, penalized by the backhaul stream of the IAB node.

  i = 0 evaluates the backhaul stream as if the gNB were an IAB UE.
  """
  return _sinr(*_downlink_iab_terms(gains, p, i))


def _uplink_iab_terms(gains: GainTable, p: PowerAllocation, i):
  """Desired and interference of the IAB combiner i in {0} and I."""
  interference = sum(p.gnb(k) * gains.coefficient('g^IAB-gNB', i, k) for k in gains.gnb_ues)
  interference += sum(p.ue(l) * gains.coefficient('g^IAB-UE', i, l) for l in gains.iab_ues if l != i)
  if i == 0:
    desired = p.gnb(0) * gains.coefficient('g^IAB-gNB', 0, 0)
  else:
    desired = p.ue(i) * gains.coefficient('g^IAB-UE', i, i)
    interference += p.gnb(0) * gains.coefficient('g^IAB-gNB', i, 0)
  return desired, interference, gains.noise('dl', i)


def sinr_uplink_iab_backhaul(gains: GainTable, p: PowerAllocation) -> float:
  """Backhaul stream of the gNB received by the IAB node, interfered by the gNB UE streams."""
  return _sinr(*_uplink_iab_terms(gains, p, 0))


def sinr_uplink_iab_access(gains: GainTable, p: PowerAllocation, i: int) -> float:
  """UE i in I received by the IAB node, interfered by I minus i and every gNB stream."""
  return _sinr(*_uplink_iab_terms(gains, p, i))


@dataclasses.dataclass
class SinrReport:
  sinr_u_gnb: np.ndarray
  sinr_u_gnb_0: float
  sinr_d_gnb: np.ndarray
  sinr_d_iab: np.ndarray
  sinr_u_iab_0: float
  sinr_u_iab: np.ndarray
  interference: Dict[str, np.ndarray]

  def group(self, name: str) -> np.ndarray:
    return getattr(self, f'sinr_{name}')


def sinr_report(gains: GainTable, p: PowerAllocation) -> SinrReport:
  """SINR of every link from the two stage tables at once."""
  dl, dl_interference = stage_sinrs(gains.dl, gains.dl_noise, p.dl_powers())
  ul, ul_interference = stage_sinrs(gains.ul, gains.ul_noise, p.ul_powers())
  gnb = slice(1, gains.k_gnb + 1)
  iab = slice(gains.k_gnb + 1, gains.size)
  interference = {
    'u_gnb': ul_interference[gnb], 'd_gnb': dl_interference[gnb],
    'u_iab': dl_interference[iab], 'd_iab': ul_interference[iab],
    'u_gnb_0': ul_interference[:1], 'u_iab_0': dl_interference[:1],
  }
  return SinrReport(
    sinr_u_gnb=ul[gnb], sinr_u_gnb_0=float(ul[0]),
    sinr_d_gnb=dl[gnb], sinr_d_iab=ul[iab],
    sinr_u_iab_0=float(dl[0]), sinr_u_iab=dl[iab],
    interference=interference)


@dataclasses.dataclass
class SeReport:
  """Instantaneous spectral efficiencies in bit/s/Hz."""
  se_u_gnb: np.ndarray
  se_d_gnb: np.ndarray
  se_u_iab: np.ndarray
  se_d_iab: np.ndarray
  se_u_gnb_0: float
  se_u_iab_0: float
  min_sinr: Dict[str, float]

  @property
  def group_sums(self) -> Dict[str, float]:
    return {name: float(np.sum(getattr(self, f'se_{name}'))) for name in GROUPS}

  @property
  def gnb_area(self) -> float:
    return float(np.sum(self.se_u_gnb) + np.sum(self.se_d_gnb))

  @property
  def iab_area(self) -> float:
    return float(np.sum(self.se_u_iab) + np.sum(self.se_d_iab))

  @property
  def total(self) -> float:
    return self.gnb_area + self.iab_area

  @property
  def per_ue_gnb(self) -> np.ndarray:
    """UL + DL SE of every UE in K."""
    return self.se_u_gnb + self.se_d_gnb

  @property
  def per_ue_iab(self) -> np.ndarray:
    return self.se_u_iab + self.se_d_iab


def se_report(gains: GainTable, p: PowerAllocation) -> SeReport:
  sinrs = sinr_report(gains, p)

  def min_or_nan(x):
    return float(np.min(x)) if len(x) else float('nan')

  return SeReport(
    se_u_gnb=np.log2(1. + sinrs.sinr_u_gnb), se_d_gnb=np.log2(1. + sinrs.sinr_d_gnb),
    se_u_iab=np.log2(1. + sinrs.sinr_u_iab), se_d_iab=np.log2(1. + sinrs.sinr_d_iab),
    se_u_gnb_0=float(np.log2(1. + sinrs.sinr_u_gnb_0)),
    se_u_iab_0=float(np.log2(1. + sinrs.sinr_u_iab_0)),
    min_sinr={name: min_or_nan(sinrs.group(name)) for name in GROUPS})


@dataclasses.dataclass
class ConsistencyReport:
  se_d_iab_0: float
  se_u_gnb_0: float
  se_d_gnb_0: float
  se_u_iab_0: float
  max_rel_error: float
  consistent: bool


def _rel(a, b):
  scale = max(abs(a), abs(b))
  return 0. if scale == 0. else abs(a - b) / scale


def backhaul_consistency_check(gains: GainTable, p: PowerAllocation, rtol: float = 1e-9) -> ConsistencyReport:
  """Backhaul SEs through the UE-view formulas against the node-view formulas."""
  se_d_iab_0 = float(np.log2(1. + sinr_downlink_iab(gains, p, 0)))
  se_u_gnb_0 = float(np.log2(1. + sinr_uplink_gnb_backhaul(gains, p)))
  se_d_gnb_0 = float(np.log2(1. + sinr_downlink_gnb(gains, p, 0)))
  se_u_iab_0 = float(np.log2(1. + sinr_uplink_iab_backhaul(gains, p)))
  err = max(_rel(se_d_iab_0, se_u_gnb_0), _rel(se_d_gnb_0, se_u_iab_0))
  consistent = err <= rtol
  if not consistent:
    logging.error('Backhaul SE mismatch between code paths: relative error %.3g.', err)
  return ConsistencyReport(se_d_iab_0, se_u_gnb_0, se_d_gnb_0, se_u_iab_0, err, consistent)
