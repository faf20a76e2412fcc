# pylint: skip-file
"""Campaign driver: configuration assembly, simulation and validation runs."""

import dataclasses
import json
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from absl import logging
import numpy as np

import allocation
import link_metrics
import montecarlo
import scenario
from scenario import ConfigError, SystemConfig


@dataclasses.dataclass(frozen=True)
class Campaign:
  system: SystemConfig
  n_trials: int
  strategies: Tuple[str, ...]
  ktilde_values: Tuple[int, ...]
  n_workers: int = 1
  output_format: str = 'csv'
  dump_gp: bool = False
  log_freq: int = 10


_CAMPAIGN_FIELDS = {f.name for f in dataclasses.fields(Campaign)} - {'system'}


def _split(value):
  if isinstance(value, str):
    return tuple(v.strip() for v in value.split(',') if v.strip())
  return tuple(value)


def _campaign_value(name, value):
  try:
    if name == 'strategies':
      return tuple(allocation.parse_strategy(s).value for s in _split(value))
    if name == 'ktilde_values':
      return tuple(int(k) for k in _split(value))
    if name == 'dump_gp':
      return value if isinstance(value, bool) else str(value).lower() in ('1', 'true', 'yes')
    if name in ('n_trials', 'n_workers', 'log_freq'):
      return int(value)
  except ValueError as e:
    raise ConfigError(f'campaign.{name}: cannot parse {value!r} ({e}).') from None
  return str(value)


def assemble(config, config_json: Optional[str] = None, environ: Optional[Mapping[str, str]] = None,
             overrides: Optional[Mapping[str, Any]] = None) -> Campaign:
  """Merge defaults < config file < JSON document < IAB_* environment < CLI overrides.

  `config` is the ml_collections config (defaults and config file already merged);
  `overrides` holds the explicitly given CLI values, keyed by SystemConfig or Campaign
  field names.
  """
  environ = os.environ if environ is None else environ
  system = config.system.to_dict()
  system['seed'] = config.seed
  campaign = dict(config.campaign.to_dict())
  if config_json:
    system.update(scenario.load_json_overrides(config_json))
  system.update(scenario.env_overrides(environ))
  for name in _CAMPAIGN_FIELDS:
    key = 'IAB_' + name.upper()
    if key in environ:
      campaign[name] = environ[key]
  for name, value in (overrides or {}).items():
    if name in _CAMPAIGN_FIELDS:
      campaign[name] = value
    else:
      system[name] = value

  unknown = sorted(set(campaign) - _CAMPAIGN_FIELDS)
  if unknown:
    raise ConfigError(f'Unknown campaign config keys: {unknown}.')
  cfg = SystemConfig.from_dict(system)
  report = scenario.validate_config(cfg)
  if not report:
    raise ConfigError(f'Invalid system configuration: {report}')
  values = {name: _campaign_value(name, value) for name, value in campaign.items()}
  run = Campaign(system=cfg, **values)
  if run.n_trials < 1:
    raise ConfigError(f'campaign.n_trials must be >= 1, got {run.n_trials}.')
  if run.output_format not in ('csv', 'json'):
    raise ConfigError(f'campaign.output_format must be csv or json, got {run.output_format}.')
  for k in run.ktilde_values:
    if not scenario.validate_config(cfg.with_overrides(k_iab=k)):
      raise ConfigError(f'K~={k}: {scenario.validate_config(cfg.with_overrides(k_iab=k))}')
  return run


def _metadata(run: Campaign) -> Dict[str, Any]:
  return {'campaign': {f: getattr(run, f) for f in sorted(_CAMPAIGN_FIELDS) if f != 'n_workers'}}


def simulate(run: Campaign, workdir: str) -> montecarlo.CampaignResult:
  """Run the paired campaign and write its outputs under `workdir`.

  Args:
    run: The assembled `Campaign`.
    workdir: Output directory; GP and channel dumps go to `workdir/gp`.

  Returns:
    The `montecarlo.CampaignResult` that was written.
  """
  logging.info('Simulating with seed %d: %s', run.system.seed, run)
  dump_dir = os.path.join(workdir, 'gp') if run.dump_gp else None
  result = montecarlo.run_campaign(run.system, run.n_trials, run.strategies,
                                   ktilde_values=run.ktilde_values, n_workers=run.n_workers,
                                   dump_dir=dump_dir, log_freq=run.log_freq,
                                   extra_metadata=_metadata(run))
  for path in montecarlo.write_outputs(result, workdir, run.output_format):
    logging.info('Wrote %s', path)
  for ktilde in run.ktilde_values:
    for strategy in run.strategies:
      logging.info('K~=%d %s: mean sum SE %.4f bit/s/Hz', ktilde, strategy,
                   result.sweep.mean(ktilde, strategy))
  return result


def _rank_ratio(h: np.ndarray) -> float:
  s = np.linalg.svd(h, compute_uv=False)
  return float(s[1] / s[0]) if len(s) > 1 else 0.


def validate(run: Campaign, workdir: str) -> Dict[str, Any]:
  """Check realizations and allocations of the campaign; writes validation.json.

  Per trial: rank-1 backhaul, backhaul SE coincidence across stages and the true
  constraints at every solved allocation. Per campaign: the fairness comparison of
  max-min against max-sum and the max-min/max-sum gap across K~.

  Args:
    run: The assembled `Campaign`.
    workdir: Directory that receives validation.json.

  Returns:
    A dict with the passed `checks` counts, the `failures` messages, the fraction of trials
      where max-min gives the larger minimum IAB-UE SE, overall (None without both GP
      strategies) and per K~, the relative IAB-area gap per K~ and the overall `valid` flag.
  """
  checks = {'rank_one_backhaul': 0, 'backhaul_consistency': 0, 'feasible_allocations': 0}
  failures = []
  iab_gap = {}
  fairer = {}
  for ktilde in run.ktilde_values:
    cfg = run.system.with_overrides(k_iab=ktilde)
    iab_sums = {s: [] for s in run.strategies}
    fairness = []
    for t in range(run.n_trials):
      real = montecarlo.build_realization(cfg, t)
      ratio = _rank_ratio(real.channels.backhaul.entries)
      if ratio <= 1e-12:
        checks['rank_one_backhaul'] += 1
      else:
        failures.append(f'K~={ktilde} trial {t}: backhaul s2/s1 = {ratio:.3e}')
      uniform = allocation.uniform_allocation(cfg)
      if link_metrics.backhaul_consistency_check(real.gains, uniform).consistent:
        checks['backhaul_consistency'] += 1
      else:
        failures.append(f'K~={ktilde} trial {t}: backhaul SEs differ across stages')
      min_iab = {}
      for strategy in run.strategies:
        result = allocation.solve_allocation(strategy, real.gains, cfg)
        if result.status == allocation.CLOSED_FORM:
          continue
        if result.optimal and result.verification.passed:
          checks['feasible_allocations'] += 1
        elif result.optimal:
          failures.append(f'K~={ktilde} trial {t} {strategy}: fails {result.verification.failed}')
        se = link_metrics.se_report(real.gains, result.allocation)
        iab_sums[strategy].append(se.iab_area)
        if len(se.per_ue_iab):
          min_iab[strategy] = float(np.min(se.per_ue_iab))
      if {'max_min', 'max_sum_se'} <= set(min_iab):
        fairness.append(min_iab['max_min'] > min_iab['max_sum_se'])
      if run.log_freq and (t + 1) % run.log_freq == 0:
        logging.info('Validated %d/%d trials at K~=%d.', t + 1, run.n_trials, ktilde)
    if iab_sums.get('max_min') and iab_sums.get('max_sum_se'):
      a, b = np.mean(iab_sums['max_min']), np.mean(iab_sums['max_sum_se'])
      iab_gap[ktilde] = float(abs(a - b) / max(a, b)) if max(a, b) > 0 else 0.
    if fairness:
      fairer[ktilde] = fairness

  summary = {
    'checks': checks,
    'failures': failures,
    'max_min_fairer_fraction': float(np.mean(np.concatenate(list(fairer.values())))) if fairer else None,
    'max_min_fairer_fraction_by_ktilde': {str(k): float(np.mean(v)) for k, v in fairer.items()},
    'iab_area_gap_by_ktilde': {str(k): v for k, v in iab_gap.items()},
    'valid': not failures,
  }
  for message in failures:
    logging.error(message)
  logging.info('Validation: %s', json.dumps({k: v for k, v in summary.items() if k != 'failures'}))
  os.makedirs(workdir, exist_ok=True)
  with open(os.path.join(workdir, 'validation.json'), 'w') as f:
    json.dump(summary, f, indent=2, sort_keys=True)
  return summary
