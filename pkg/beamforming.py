# -*- coding: utf-8 -*-
"""SVD precoders, MRC combiners and the effective gain table.

Slot index r of a stage is the global index: 0 is the backhaul stream, 1..K the gNB UEs and
K+1..K+K̃ the IAB UEs. In the gNB-transmit stage (`dl`) the gNB serves the IAB node and its
UEs while the IAB UEs transmit to the IAB node; in the gNB-receive stage (`ul`) the gNB
receives from the IAB node and its UEs while the IAB node serves its UEs. `dl[r, s]` is
|v_r^H H(s -> r) f_s|^2 for receiver slot r and transmitter slot s.
"""

import dataclasses
from typing import Dict, Tuple

import numpy as np

from channel import ChannelSet, ue_id

__all__ = ['DegenerateLinkError', 'MissingCoefficientError', 'PrecoderSet', 'CombinerSet',
           'GainTable', 'dominant_singular_vectors', 'compute_precoders', 'compute_combiners',
           'build_gain_table']


class DegenerateLinkError(ValueError):
  """Precoder requested for an all-zero channel matrix."""


class MissingCoefficientError(KeyError):
  """A gain coefficient outside the table was requested."""


def _canonical_phase(x: np.ndarray) -> np.ndarray:
  """Rotate so that the largest-magnitude entry (first on ties) is real positive."""
  j = int(np.argmax(np.abs(x)))
  return x * (np.conj(x[j]) / np.abs(x[j]))


def dominant_singular_vectors(h: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
  """(u1, w1, s1) of H = U S W^H with the phase convention applied to both vectors."""
  if not np.any(h):
    raise DegenerateLinkError('Zero channel matrix, the link has no dominant direction.')
  u, s, vh = np.linalg.svd(h)
  return _canonical_phase(u[:, 0]), _canonical_phase(vh[0].conj()), float(s[0])


@dataclasses.dataclass
class PrecoderSet:
  """Unit-norm transmit vectors keyed by global index.

  f_gnb: {0} and K.  f_iab: {0} and I.  f_ue: K and I.
  """
  f_gnb: Dict[int, np.ndarray]
  f_iab: Dict[int, np.ndarray]
  f_ue: Dict[int, np.ndarray]


@dataclasses.dataclass
class CombinerSet:
  """Unnormalized MRC receive vectors keyed by global index."""
  v_iab: Dict[int, np.ndarray]
  v_gnb: Dict[int, np.ndarray]
  v_ue: Dict[int, np.ndarray]


def compute_precoders(channels: ChannelSet) -> PrecoderSet:
  f_gnb, f_iab, f_ue = {}, {}, {}
  f_gnb[0], f_iab[0], _ = dominant_singular_vectors(channels.backhaul.entries)
  for k, h in channels.gnb_access.items():
    f_gnb[k], f_ue[k], _ = dominant_singular_vectors(h.entries)
  for i, h in channels.iab_access.items():
    f_iab[i], f_ue[i], _ = dominant_singular_vectors(h.entries)
  return PrecoderSet(f_gnb=f_gnb, f_iab=f_iab, f_ue=f_ue)


def compute_combiners(channels: ChannelSet, precoders: PrecoderSet) -> CombinerSet:
  h0 = channels.backhaul.entries
  v_iab = {0: h0.conj().T @ precoders.f_gnb[0]}
  v_gnb = {0: h0 @ precoders.f_iab[0]}
  v_ue = {}
  for k, h in channels.gnb_access.items():
    v_gnb[k] = h.entries @ precoders.f_ue[k]
    v_ue[k] = h.entries.conj().T @ precoders.f_gnb[k]
  for i, h in channels.iab_access.items():
    v_iab[i] = h.entries @ precoders.f_ue[i]
    v_ue[i] = h.entries.conj().T @ precoders.f_iab[i]
  return CombinerSet(v_iab=v_iab, v_gnb=v_gnb, v_ue=v_ue)


# name -> (stage, receiver slots, transmitter slots); slot sets are 'backhaul', 'K' and 'I'.
_COEFFICIENTS = {
  'g^UE-gNB': ('dl', ('K',), ('backhaul', 'K')),
  'g~': (None, ('K', 'I'), ('K', 'I')),
  'g^UE-IAB': ('ul', ('I',), ('backhaul', 'I')),
  'g^IAB-gNB': ('dl', ('backhaul', 'I'), ('backhaul', 'K')),
  'g^IAB-UE': ('dl', ('backhaul', 'I'), ('I',)),
  'g^gNB-UE': ('ul', ('backhaul', 'K'), ('K',)),
  'g^gNB-IAB': ('ul', ('backhaul', 'K'), ('backhaul', 'I')),
}


@dataclasses.dataclass
class GainTable:
  """Effective squared gains and combiner-weighted noise powers of both stages."""
  k_gnb: int
  k_iab: int
  dl: np.ndarray
  ul: np.ndarray
  dl_noise: np.ndarray
  ul_noise: np.ndarray

  def __post_init__(self):
    m = self.size
    for name in ('dl', 'ul'):
      table = np.asarray(getattr(self, name), dtype=float)
      if table.shape != (m, m):
        raise ValueError(f'{name} gains must be {m}x{m}, got {table.shape}.')
      if np.any(table < 0):
        raise ValueError(f'{name} gains must be nonnegative.')
      setattr(self, name, table)
    self.dl_noise = np.asarray(self.dl_noise, dtype=float).reshape(m)
    self.ul_noise = np.asarray(self.ul_noise, dtype=float).reshape(m)

  @property
  def size(self):
    return self.k_gnb + self.k_iab + 1

  @property
  def gnb_ues(self):
    return list(range(1, self.k_gnb + 1))

  @property
  def iab_ues(self):
    return list(range(self.k_gnb + 1, self.k_gnb + self.k_iab + 1))

  @property
  def n_entries(self):
    return self.dl.size + self.ul.size

  def _slots(self, sets):
    out = set()
    for name in sets:
      out |= {'backhaul': {0}, 'K': set(self.gnb_ues), 'I': set(self.iab_ues)}[name]
    return out

  def coefficient(self, name: str, rx: int, tx: int) -> float:
    """Named coefficient |g|^2; `rx` is the combiner index and `tx` the stream index.

    'g~' is the UE-UE cross gain: g~(k, i) for k in K lives in the gNB-transmit stage and
    g~(i, k) for i in I in the gNB-receive stage.
    """
    try:
      stage, rx_sets, tx_sets = _COEFFICIENTS[name]
    except KeyError:
      raise MissingCoefficientError(f'Coefficient {name} unknown.') from None
    gnb, iab = set(self.gnb_ues), set(self.iab_ues)
    if name == 'g~':
      ok = (rx in gnb and tx in iab) or (rx in iab and tx in gnb)
      stage = 'dl' if rx in gnb else 'ul'
    else:
      ok = rx in self._slots(rx_sets) and tx in self._slots(tx_sets)
    if not ok:
      raise MissingCoefficientError(f'Coefficient {name}_{{{rx},{tx}}} absent from the gain table '
                                    f'(K={self.k_gnb}, K~={self.k_iab}).')
    return float(getattr(self, stage)[rx, tx])

  def noise(self, stage: str, rx: int) -> float:
    """sigma^2 ||v||^2 of receiver slot `rx` in `stage`."""
    if not 0 <= rx < self.size:
      raise MissingCoefficientError(f'Noise term of slot {rx} absent from the gain table.')
    return float({'dl': self.dl_noise, 'ul': self.ul_noise}[stage][rx])


def _node(slot):
  return slot if isinstance(slot, str) else ue_id(slot)


def _gain(v, h, f):
  return float(np.abs(np.vdot(v, h @ f)) ** 2)


def build_gain_table(channels: ChannelSet, precoders: PrecoderSet, combiners: CombinerSet) -> GainTable:
  """Reduce the channel set to the squared effective gains of every SINR term."""
  k_gnb, k_iab = channels.k_gnb, channels.k_iab
  gnb_ues = sorted(channels.gnb_access)
  iab_ues = sorted(channels.iab_access)
  if gnb_ues != list(range(1, k_gnb + 1)) or iab_ues != list(range(k_gnb + 1, k_gnb + k_iab + 1)):
    raise MissingCoefficientError('Channel set indices do not follow 1..K, K+1..K+K~.')
  m = k_gnb + k_iab + 1
  sigma = channels.noise

  # gNB-transmit stage: receivers IAB (0), UE k, IAB (i); streams gNB 0, gNB k, UE i.
  dl_rx = {0: ('iab', combiners.v_iab[0])}
  dl_rx.update({k: (k, combiners.v_ue[k]) for k in gnb_ues})
  dl_rx.update({i: ('iab', combiners.v_iab[i]) for i in iab_ues})
  dl_tx = {0: ('gnb', precoders.f_gnb[0])}
  dl_tx.update({k: ('gnb', precoders.f_gnb[k]) for k in gnb_ues})
  dl_tx.update({i: (i, precoders.f_ue[i]) for i in iab_ues})

  # gNB-receive stage: receivers gNB (0), gNB (k), UE i; streams IAB 0, UE k, IAB i.
  ul_rx = {0: ('gnb', combiners.v_gnb[0])}
  ul_rx.update({k: ('gnb', combiners.v_gnb[k]) for k in gnb_ues})
  ul_rx.update({i: (i, combiners.v_ue[i]) for i in iab_ues})
  ul_tx = {0: ('iab', precoders.f_iab[0])}
  ul_tx.update({k: (k, precoders.f_ue[k]) for k in gnb_ues})
  ul_tx.update({i: ('iab', precoders.f_iab[i]) for i in iab_ues})

  dl = np.zeros((m, m))
  ul = np.zeros((m, m))
  for r, (rx, v) in dl_rx.items():
    for s, (tx, f) in dl_tx.items():
      dl[r, s] = _gain(v, channels.between(_node(tx), _node(rx)), f)
  for r, (rx, v) in ul_rx.items():
    for s, (tx, f) in ul_tx.items():
      ul[r, s] = _gain(v, channels.between(_node(tx), _node(rx)), f)

  dl_noise = np.zeros(m)
  ul_noise = np.zeros(m)
  for r, (rx, v) in dl_rx.items():
    dl_noise[r] = (sigma['iab'] if rx == 'iab' else sigma['ue']) * np.vdot(v, v).real
  for r, (rx, v) in ul_rx.items():
    ul_noise[r] = (sigma['gnb'] if rx == 'gnb' else sigma['ue']) * np.vdot(v, v).real
  return GainTable(k_gnb=k_gnb, k_iab=k_iab, dl=dl, ul=ul, dl_noise=dl_noise, ul_noise=ul_noise)
