# -*- coding: utf-8 -*-
"""Monte-Carlo campaigns: paired trials, ECDFs over realizations and K̃ sweeps.

Every strategy of a trial is evaluated on the same channel realization. A trial draws
from `scenario.trial_key(seed, index)` only, so campaigns give the same records whether
trials run serially or in a process pool.
"""

import collections
import concurrent.futures
import dataclasses
import json
import multiprocessing
import os
import time
from typing import Any, Dict, List, Optional, Sequence

from absl import logging
import jax
import numpy as np
import pandas as pd

import allocation
import beamforming
import channel
import gp
import link_metrics
import scenario
import utils
from scenario import SystemConfig

__all__ = ['OutputError', 'Realization', 'TrialRecord', 'EcdfSeries', 'SweepPoint', 'SweepResult',
           'CampaignResult', 'build_realization', 'run_trial', 'run_campaign', 'ecdf',
           'write_outputs', 'ECDF_COLUMNS', 'SWEEP_COLUMNS']

ECDF_COLUMNS = ['metric', 'strategy', 'group', 'value', 'prob']
SWEEP_COLUMNS = ['ktilde', 'strategy', 'mean', 'ci_low', 'ci_high']
AREAS = ('gnb_area', 'iab_area', 'total')
# Two-sided 95% normal quantile.
Z_95 = 1.959963984540054

# ECDF metric -> area -> record field.
_METRIC_FIELDS = {
  'sum_se': {'gnb_area': 'gnb_area', 'iab_area': 'iab_area', 'total': 'total'},
  'min_ue_se': {'gnb_area': 'min_ue_se_gnb', 'iab_area': 'min_ue_se_iab', 'total': 'min_ue_se'},
}


class OutputError(RuntimeError):
  """Nothing to write, or the output location cannot be written."""


@dataclasses.dataclass
class Realization:
  cfg: SystemConfig
  trial: int
  topology: scenario.Topology
  channels: channel.ChannelSet
  precoders: beamforming.PrecoderSet
  combiners: beamforming.CombinerSet
  gains: beamforming.GainTable


def build_realization(cfg: SystemConfig, trial_index: int) -> Realization:
  """Topology, channels, beams and gain table of trial `trial_index`."""
  key = scenario.trial_key(cfg.seed, trial_index)
  topology = scenario.generate_topology(cfg, jax.random.fold_in(key, scenario.TOPOLOGY))
  channels = channel.build_channel_set(topology, cfg, jax.random.fold_in(key, scenario.CHANNELS))
  precoders = beamforming.compute_precoders(channels)
  combiners = beamforming.compute_combiners(channels, precoders)
  gains = beamforming.build_gain_table(channels, precoders, combiners)
  return Realization(cfg, trial_index, topology, channels, precoders, combiners, gains)


@dataclasses.dataclass
class TrialRecord:
  """Per-trial, per-strategy outcome. SEs in bit/s/Hz, SINRs linear."""
  trial: int
  ktilde: int
  strategy: str
  status: str
  gnb_area: float
  iab_area: float
  total: float
  min_ue_se_gnb: float
  min_ue_se_iab: float
  min_ue_se: float
  min_sinr_u_gnb: float
  min_sinr_d_gnb: float
  min_sinr_u_iab: float
  min_sinr_d_iab: float
  se_backhaul_dl: float
  se_backhaul_ul: float
  backhaul_capped: bool
  objective: float
  induced_max_min: float
  induced_max_sum: float
  wall_time: float = 0.

  def to_dict(self, include_time: bool = True) -> Dict[str, Any]:
    out = dataclasses.asdict(self)
    if not include_time:
      del out['wall_time']
    return out


def _min_or_nan(x):
  return float(np.min(x)) if len(x) else float('nan')


def _capped(se: np.ndarray, cap: float) -> np.ndarray:
  """Scale the access SEs down so that they sum to at most the backhaul SE."""
  total = float(np.sum(se))
  if total <= cap:
    return se
  return se * (cap / total)


def _record(real: Realization, result: allocation.AllocationResult, wall_time: float) -> TrialRecord:
  cfg, gains = real.cfg, real.gains
  se = link_metrics.se_report(gains, result.allocation)
  binding = result.verification.backhaul_cap_binding
  se_d_iab, se_u_iab = se.se_d_iab, se.se_u_iab
  capped = cfg.cap_backhaul and (binding['dl'] or binding['ul'])
  if cfg.cap_backhaul:
    se_d_iab = _capped(se_d_iab, se.se_u_iab_0)
    se_u_iab = _capped(se_u_iab, se.se_u_gnb_0)
  per_ue_gnb = se.per_ue_gnb
  per_ue_iab = se_u_iab + se_d_iab
  gnb_area = float(np.sum(se.se_u_gnb) + np.sum(se.se_d_gnb))
  iab_area = float(np.sum(se_u_iab) + np.sum(se_d_iab))
  induced = {}
  for kind in (allocation.StrategyKind.MAX_MIN, allocation.StrategyKind.MAX_SUM_SE):
    induced[kind] = allocation.induced_objective(kind, result.allocation, gains, cfg)
  return TrialRecord(
    trial=real.trial, ktilde=gains.k_iab, strategy=result.strategy, status=result.status,
    gnb_area=gnb_area, iab_area=iab_area, total=gnb_area + iab_area,
    min_ue_se_gnb=_min_or_nan(per_ue_gnb), min_ue_se_iab=_min_or_nan(per_ue_iab),
    min_ue_se=_min_or_nan(np.concatenate([per_ue_gnb, per_ue_iab])),
    min_sinr_u_gnb=se.min_sinr['u_gnb'], min_sinr_d_gnb=se.min_sinr['d_gnb'],
    min_sinr_u_iab=se.min_sinr['u_iab'], min_sinr_d_iab=se.min_sinr['d_iab'],
    se_backhaul_dl=se.se_u_iab_0, se_backhaul_ul=se.se_u_gnb_0, backhaul_capped=bool(capped),
    objective=float(result.objective),
    induced_max_min=induced[allocation.StrategyKind.MAX_MIN],
    induced_max_sum=induced[allocation.StrategyKind.MAX_SUM_SE],
    wall_time=wall_time)


def _dump_problem(dump_dir, real: Realization, result: allocation.AllocationResult):
  name = f'trial{real.trial:05d}_ktilde{real.gains.k_iab}_{result.strategy}.gp'
  with open(os.path.join(dump_dir, name), 'w') as f:
    f.write(gp.dumps(result.problem))


def _dump_channels(dump_dir, real: Realization):
  name = f'trial{real.trial:05d}_ktilde{real.gains.k_iab}.channels.jsonl'
  channel.save_channel_set(real.channels, os.path.join(dump_dir, name))


def run_trial(cfg: SystemConfig, trial_index: int, strategies: Sequence[str],
              dump_dir: Optional[str] = None) -> List[TrialRecord]:
  """One record per strategy, all on the realization of (cfg.seed, trial_index)."""
  real = build_realization(cfg, trial_index)
  if dump_dir:
    _dump_channels(dump_dir, real)
  records = []
  for name in strategies:
    start = time.perf_counter()
    result = allocation.solve_allocation(name, real.gains, cfg)
    elapsed = time.perf_counter() - start
    if not result.optimal:
      logging.warning('Trial %d, K~=%d: %s ended with status %s.', trial_index, cfg.k_iab,
                      result.strategy, result.status)
    if dump_dir and result.problem is not None:
      _dump_problem(dump_dir, real, result)
    records.append(_record(real, result, elapsed))
  return records


def _run_trial_task(args):
  return run_trial(*args)


@dataclasses.dataclass(frozen=True)
class EcdfSeries:
  metric: str
  strategy: str
  group: str
  values: np.ndarray
  probs: np.ndarray

  def __len__(self):
    return len(self.values)

  def __call__(self, x):
    """Right-continuous step function: fraction of samples <= x."""
    return np.searchsorted(self.values, x, side='right') / len(self.values)


def ecdf(metric: str, strategy: str, group: str, samples) -> Optional[EcdfSeries]:
  """ECDF of the finite samples, or None when there are none."""
  x = np.asarray(samples, dtype=float)
  x = np.sort(x[np.isfinite(x)])
  if not len(x):
    return None
  return EcdfSeries(metric, strategy, group, x, np.arange(1, len(x) + 1) / len(x))


@dataclasses.dataclass(frozen=True)
class SweepPoint:
  ktilde: int
  strategy: str
  group: str
  mean: float
  ci_low: float
  ci_high: float
  n: int


def _sweep_point(ktilde, strategy, group, samples) -> SweepPoint:
  x = np.asarray(samples, dtype=float)
  mean = float(np.mean(x))
  half = Z_95 * float(np.std(x, ddof=1)) / np.sqrt(len(x)) if len(x) > 1 else 0.
  return SweepPoint(ktilde, strategy, group, mean, mean - half, mean + half, len(x))


@dataclasses.dataclass
class SweepResult:
  """Mean sum SE per (K̃, strategy, area) with normal 95% confidence intervals."""
  points: List[SweepPoint]

  def mean(self, ktilde: int, strategy: str, group: str = 'total') -> float:
    for p in self.points:
      if (p.ktilde, p.strategy, p.group) == (ktilde, strategy, group):
        return p.mean
    raise KeyError((ktilde, strategy, group))

  def table(self, group: Optional[str] = 'total') -> pd.DataFrame:
    rows = [dataclasses.asdict(p) for p in self.points if group is None or p.group == group]
    columns = SWEEP_COLUMNS if group is not None else SWEEP_COLUMNS[:2] + ['group'] + SWEEP_COLUMNS[2:]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS) + ['group', 'n'])[columns]


@dataclasses.dataclass
class CampaignResult:
  records: List[TrialRecord]
  ecdfs: List[EcdfSeries]
  sweep: SweepResult
  metadata: Dict[str, Any]

  def frame(self, include_time: bool = True) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict(include_time) for r in self.records])

  def series(self, metric: str, strategy: str, group: str) -> EcdfSeries:
    for s in self.ecdfs:
      if (s.metric, s.strategy, s.group) == (metric, strategy, group):
        return s
    raise KeyError((metric, strategy, group))


def _aggregate(records: Sequence[TrialRecord], strategies, ktilde_values):
  by_cell = collections.defaultdict(list)
  for r in records:
    by_cell[(r.ktilde, r.strategy)].append(r)
  ecdfs, points = [], []
  for ktilde in ktilde_values:
    for strategy in strategies:
      cell = by_cell[(ktilde, strategy)]
      if not cell:
        continue
      for metric, fields in _METRIC_FIELDS.items():
        for group in AREAS:
          series = ecdf(f'{metric}@ktilde={ktilde}', strategy, group,
                        [getattr(r, fields[group]) for r in cell])
          if series is not None:
            ecdfs.append(series)
      for group in AREAS:
        points.append(_sweep_point(ktilde, strategy, group, [getattr(r, group) for r in cell]))
  return ecdfs, SweepResult(points)


def run_campaign(cfg: SystemConfig, n_trials: int, strategies: Sequence[str],
                 ktilde_values: Optional[Sequence[int]] = None, n_workers: int = 1,
                 dump_dir: Optional[str] = None, log_freq: int = 10,
                 extra_metadata: Optional[Dict[str, Any]] = None) -> CampaignResult:
  """Paired trials for every K̃ in `ktilde_values`, then ECDFs and the K̃ sweep.

  Trial t uses the same key for every K̃, so gNB-area UEs and their links are shared
  across the sweep.

  Args:
    cfg: The `SystemConfig`; `cfg.seed` fixes every draw.
    n_trials: Number of realizations per K̃, at least 1.
    strategies: Strategy names, each evaluated on every realization.
    ktilde_values: IAB UE counts to sweep; defaults to `cfg.k_iab`.
    n_workers: Size of the process pool; 1 runs the trials in this process.
    dump_dir: If given, every solved GP and every channel set is written there.
    log_freq: Log progress every `log_freq` trials; 0 disables it.
    extra_metadata: Merged into the run metadata.

  Returns:
    A `CampaignResult` with the records in (K̃, trial, strategy) order, the ECDFs, the
      sweep and the metadata.

  Raises:
    ValueError: `n_trials` is below 1.
    AllocationError: a strategy name is unknown.
  """
  if n_trials < 1:
    raise ValueError(f'n_trials must be >= 1, got {n_trials}.')
  strategies = [allocation.parse_strategy(s).value for s in strategies]
  ktilde_values = [cfg.k_iab] if ktilde_values is None else [int(k) for k in ktilde_values]
  if dump_dir:
    os.makedirs(dump_dir, exist_ok=True)

  tasks = [(cfg.with_overrides(k_iab=k), t, strategies, dump_dir)
           for k in ktilde_values for t in range(n_trials)]
  logging.info('Campaign: %d trials x K~ in %s x strategies %s, %d worker(s).', n_trials,
               ktilde_values, strategies, n_workers)
  start = time.perf_counter()
  records = []
  if n_workers > 1:
    context = multiprocessing.get_context('spawn')
    with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers, mp_context=context) as pool:
      for done, trial_records in enumerate(pool.map(_run_trial_task, tasks), 1):
        records.extend(trial_records)
        if log_freq and done % log_freq == 0:
          logging.info('%d/%d trials done.', done, len(tasks))
  else:
    for done, task in enumerate(tasks, 1):
      records.extend(run_trial(*task))
      if log_freq and done % log_freq == 0:
        logging.info('%d/%d trials done.', done, len(tasks))

  statuses = collections.Counter(r.status for r in records)
  logging.info('Campaign finished in %.1fs, statuses %s.', time.perf_counter() - start, dict(statuses))
  ecdfs, sweep = _aggregate(records, strategies, ktilde_values)
  metadata = {
    'seed': cfg.seed,
    'n_trials': n_trials,
    'strategies': strategies,
    'ktilde_values': ktilde_values,
    'config': utils.flatten_dict(cfg.to_dict()),
    'git_describe': utils.git_describe(),
  }
  metadata.update(extra_metadata or {})
  return CampaignResult(records, ecdfs, sweep, metadata)


def _ecdf_frame(ecdfs: Sequence[EcdfSeries]) -> pd.DataFrame:
  frames = [pd.DataFrame({'metric': s.metric, 'strategy': s.strategy, 'group': s.group,
                          'value': s.values, 'prob': s.probs}) for s in ecdfs]
  if not frames:
    return pd.DataFrame(columns=ECDF_COLUMNS)
  return pd.concat(frames, ignore_index=True)[ECDF_COLUMNS]


def _json_safe(obj):
  """Plain JSON values; NaN and infinities become null."""
  if isinstance(obj, dict):
    return {str(k): _json_safe(v) for k, v in obj.items()}
  if isinstance(obj, (list, tuple, np.ndarray)):
    return [_json_safe(v) for v in obj]
  if isinstance(obj, (bool, np.bool_)):
    return bool(obj)
  if isinstance(obj, np.integer):
    return int(obj)
  if isinstance(obj, (float, np.floating)):
    return float(obj) if np.isfinite(obj) else None
  return obj


def write_outputs(result: CampaignResult, path: str, output_format: str = 'csv') -> List[str]:
  """Write ECDFs, sweeps, records and run metadata under `path`; returns the written files.

  csv: ecdf.csv, sweep.csv, sweep_by_group.csv, records.csv and metadata.json.
  json: a single results.json with the same content. Missing values (the objective of
  the uniform benchmark, empty groups) are written as null.

  Args:
    result: The `CampaignResult` to write.
    path: Output directory, created if needed.
    output_format: 'csv' or 'json'.

  Returns:
    The paths of the written files.

  Raises:
    OutputError: the result is empty, or the format or `path` is unusable.
  """
  if not result.records:
    raise OutputError('nothing to write')
  if output_format not in ('csv', 'json'):
    raise OutputError(f'Unknown output format {output_format!r}.')
  try:
    os.makedirs(path, exist_ok=True)
    if output_format == 'csv':
      files = {
        'ecdf.csv': _ecdf_frame(result.ecdfs),
        'sweep.csv': result.sweep.table('total'),
        'sweep_by_group.csv': result.sweep.table(None),
        'records.csv': result.frame(include_time=False),
      }
      written = []
      for name, frame in files.items():
        written.append(os.path.join(path, name))
        frame.to_csv(written[-1], index=False)
      written.append(os.path.join(path, 'metadata.json'))
      with open(written[-1], 'w') as f:
        json.dump(_json_safe(result.metadata), f, indent=2, sort_keys=True, allow_nan=False)
      return written

    doc = {
      'metadata': result.metadata,
      'ecdf': _ecdf_frame(result.ecdfs).to_dict(orient='records'),
      'sweep': result.sweep.table(None).to_dict(orient='records'),
      'records': result.frame(include_time=False).to_dict(orient='records'),
    }
    target = os.path.join(path, 'results.json')
    with open(target, 'w') as f:
      json.dump(_json_safe(doc), f, indent=2, sort_keys=True, allow_nan=False)
    return [target]
  except OSError as e:
    raise OutputError(f'Cannot write outputs to {path}: {e}') from e
