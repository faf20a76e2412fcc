"""Tests for paired trials, ECDFs, sweeps and campaign outputs."""

import json
import math
import os
import unittest

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
import pandas as pd

import allocation
import beamforming
import channel
import gp
import link_metrics
import montecarlo
import scenario
import test_util

SLOW = os.environ.get('IAB_SLOW_TESTS') == '1'


def _read(path):
  with open(path, 'rb') as f:
    return f.read()


def _reject_constant(name):
  raise ValueError(f'non-standard JSON constant {name}')


class TrialTest(parameterized.TestCase):

  def test_single_uniform_record(self):
    cfg = test_util.small_config(1, 0)
    records = montecarlo.run_trial(cfg, 0, ['uniform'])
    self.assertLen(records, 1)
    r = records[0]
    real = montecarlo.build_realization(cfg, 0)
    se = link_metrics.se_report(real.gains, allocation.uniform_allocation(cfg))
    self.assertAlmostEqual(r.total, float(se.se_u_gnb[0] + se.se_d_gnb[0]), places=12)
    self.assertEqual(r.iab_area, 0.)
    self.assertTrue(math.isnan(r.min_ue_se_iab))
    self.assertEqual(r.status, allocation.CLOSED_FORM)

  def test_deterministic(self):
    cfg = test_util.small_config(2, 1)
    a = montecarlo.run_trial(cfg, 3, ['uniform', 'max_min'])
    b = montecarlo.run_trial(cfg, 3, ['uniform', 'max_min'])
    self.assertEqual([r.to_dict(False) for r in a], [r.to_dict(False) for r in b])

  def test_strategies_share_the_realization(self):
    cfg = test_util.small_config(2, 1)
    records = montecarlo.run_trial(cfg, 1, ['uniform', 'maxsum', 'maxmin'])
    self.assertEqual([r.strategy for r in records], ['uniform', 'max_sum_se', 'max_min'])
    self.assertLen({r.trial for r in records}, 1)

  def test_wall_time_per_solve(self):
    cfg = test_util.small_config(2, 1)
    records = montecarlo.run_trial(cfg, 1, ['uniform', 'max_sum_se', 'max_min'])
    for r in records:
      self.assertGreaterEqual(r.wall_time, 0.)
      self.assertLess(r.wall_time, 10., r.strategy)
    self.assertNotIn('wall_time', records[0].to_dict(include_time=False))

  @parameterized.parameters(0, 1)
  def test_max_sum_dominates_uniform_without_iab_ues(self, trial):
    cfg = test_util.small_config(3, 0)
    uniform, max_sum = montecarlo.run_trial(cfg, trial, ['uniform', 'max_sum_se'])
    self.assertEqual(max_sum.status, gp.OPTIMAL)
    self.assertGreaterEqual(max_sum.objective, uniform.induced_max_sum * (1. - 1e-6))

  def test_records_respect_backhaul_cap(self):
    cfg = test_util.small_config(2, 2)
    for t in range(3):
      for r in montecarlo.run_trial(cfg, t, ['uniform', 'max_min']):
        self.assertLessEqual(r.iab_area, r.se_backhaul_dl + r.se_backhaul_ul + 1e-9)

  def test_uncapped_reporting(self):
    cfg = test_util.small_config(2, 2, cap_backhaul=False)
    real = montecarlo.build_realization(cfg, 0)
    se = link_metrics.se_report(real.gains, allocation.uniform_allocation(cfg))
    r = montecarlo.run_trial(cfg, 0, ['uniform'])[0]
    self.assertAlmostEqual(r.iab_area, se.iab_area, places=12)
    self.assertFalse(r.backhaul_capped)

  def test_capped_scaling(self):
    np.testing.assert_allclose(montecarlo._capped(np.array([2., 2.]), 2.), [1., 1.])
    np.testing.assert_array_equal(montecarlo._capped(np.array([0.5, 1.]), 2.), [0.5, 1.])

  def test_dump_problems(self):
    cfg = test_util.small_config(1, 1)
    dump_dir = self.create_tempdir().full_path
    montecarlo.run_trial(cfg, 0, ['uniform', 'max_min'], dump_dir=dump_dir)
    self.assertEqual(sorted(os.listdir(dump_dir)),
                     ['trial00000_ktilde1.channels.jsonl', 'trial00000_ktilde1_max_min.gp'])

  def test_dumped_channels_rebuild_gains(self):
    cfg = test_util.small_config(2, 1)
    dump_dir = self.create_tempdir().full_path
    montecarlo.run_trial(cfg, 3, ['uniform'], dump_dir=dump_dir)
    channels = channel.load_channel_set(os.path.join(dump_dir, 'trial00003_ktilde1.channels.jsonl'))
    real = montecarlo.build_realization(cfg, 3)
    precoders = beamforming.compute_precoders(channels)
    combiners = beamforming.compute_combiners(channels, precoders)
    gains = beamforming.build_gain_table(channels, precoders, combiners)
    np.testing.assert_allclose(gains.dl, real.gains.dl, rtol=1e-9, atol=1e-30)
    np.testing.assert_allclose(gains.ul, real.gains.ul, rtol=1e-9, atol=1e-30)


class EcdfTest(parameterized.TestCase):

  def test_sorted_and_monotone(self):
    s = montecarlo.ecdf('sum_se', 'uniform', 'total', [3., 1., 2., 2.])
    np.testing.assert_array_equal(s.values, [1., 2., 2., 3.])
    np.testing.assert_allclose(s.probs, [0.25, 0.5, 0.75, 1.])

  def test_step_function(self):
    s = montecarlo.ecdf('sum_se', 'uniform', 'total', [1., 2., 3.])
    self.assertEqual(s(0.5), 0.)
    self.assertAlmostEqual(s(2.), 2. / 3.)
    self.assertEqual(s(np.inf), 1.)

  def test_single_sample(self):
    s = montecarlo.ecdf('sum_se', 'uniform', 'total', [4.2])
    self.assertLen(s, 1)
    self.assertEqual(s(4.1), 0.)
    self.assertEqual(s(4.2), 1.)

  def test_drops_nan(self):
    self.assertLen(montecarlo.ecdf('m', 's', 'g', [1., float('nan')]), 1)
    self.assertIsNone(montecarlo.ecdf('m', 's', 'g', [float('nan')]))

  def test_confidence_interval(self):
    p = montecarlo._sweep_point(1, 'uniform', 'total', [1., 2., 3.])
    half = montecarlo.Z_95 / math.sqrt(3.)
    self.assertAlmostEqual(p.mean, 2.)
    self.assertAlmostEqual(p.ci_low, 2. - half)
    self.assertAlmostEqual(p.ci_high, 2. + half)
    single = montecarlo._sweep_point(1, 'uniform', 'total', [5.])
    self.assertEqual((single.ci_low, single.ci_high), (5., 5.))


class CampaignTest(parameterized.TestCase):

  def test_one_trial(self):
    result = montecarlo.run_campaign(test_util.small_config(2, 1), 1, ['uniform'])
    s = result.series('sum_se@ktilde=1', 'uniform', 'total')
    np.testing.assert_array_equal(s.probs, [1.])
    self.assertEqual(s.values[0], result.records[0].total)
    self.assertEqual(s(np.inf), 1.)

  def test_sweep_covers_ktilde_values(self):
    result = montecarlo.run_campaign(test_util.small_config(2, 1), 2, ['uniform', 'maxmin'],
                                     ktilde_values=[0, 2])
    self.assertLen(result.records, 2 * 2 * 2)
    table = result.sweep.table()
    self.assertEqual(list(table.columns), montecarlo.SWEEP_COLUMNS)
    self.assertEqual(sorted(set(zip(table.ktilde, table.strategy))),
                     [(0, 'max_min'), (0, 'uniform'), (2, 'max_min'), (2, 'uniform')])
    self.assertAlmostEqual(result.sweep.mean(2, 'uniform'),
                           np.mean([r.total for r in result.records
                                    if r.ktilde == 2 and r.strategy == 'uniform']))
    # No IAB-area fairness samples without IAB UEs.
    with self.assertRaises(KeyError):
      result.series('min_ue_se@ktilde=0', 'uniform', 'iab_area')

  def test_gnb_area_links_shared_across_sweep(self):
    cfg = test_util.small_config(2, 1)
    a = montecarlo.build_realization(cfg, 4)
    b = montecarlo.build_realization(cfg.with_overrides(k_iab=3), 4)
    np.testing.assert_array_equal(a.channels.gnb_access[2].entries, b.channels.gnb_access[2].entries)

  def test_rejects_zero_trials(self):
    with self.assertRaises(ValueError):
      montecarlo.run_campaign(test_util.small_config(), 0, ['uniform'])

  def test_unknown_strategy(self):
    with self.assertRaises(allocation.AllocationError):
      montecarlo.run_campaign(test_util.small_config(), 1, ['greedy'])

  def test_parallel_matches_serial(self):
    cfg = test_util.small_config(2, 1)
    serial = montecarlo.run_campaign(cfg, 2, ['uniform', 'max_min'])
    parallel = montecarlo.run_campaign(cfg, 2, ['uniform', 'max_min'], n_workers=2)
    pd.testing.assert_frame_equal(serial.frame(False), parallel.frame(False))
    a, b = self.create_tempdir().full_path, self.create_tempdir().full_path
    for x, y in zip(montecarlo.write_outputs(serial, a), montecarlo.write_outputs(parallel, b)):
      self.assertEqual(_read(x), _read(y))


class OutputTest(parameterized.TestCase):

  @classmethod
  def setUpClass(cls):
    super().setUpClass()
    cls.result = montecarlo.run_campaign(test_util.small_config(2, 1, seed=7), 3, ['uniform'])

  def test_csv_headers(self):
    out = self.create_tempdir().full_path
    montecarlo.write_outputs(self.result, out)
    with open(os.path.join(out, 'ecdf.csv')) as f:
      self.assertEqual(f.readline().strip(), 'metric,strategy,group,value,prob')
    with open(os.path.join(out, 'sweep.csv')) as f:
      self.assertEqual(f.readline().strip(), 'ktilde,strategy,mean,ci_low,ci_high')

  def test_csv_round_trip(self):
    out = self.create_tempdir().full_path
    montecarlo.write_outputs(self.result, out)
    frame = pd.read_csv(os.path.join(out, 'ecdf.csv'), float_precision='round_trip')
    s = self.result.series('sum_se@ktilde=1', 'uniform', 'gnb_area')
    rows = frame[(frame.metric == s.metric) & (frame.strategy == s.strategy) & (frame['group'] == s.group)]
    np.testing.assert_array_equal(rows.value.to_numpy(), s.values)
    np.testing.assert_array_equal(rows.prob.to_numpy(), s.probs)

  def test_metadata_echoes_seed(self):
    out = self.create_tempdir().full_path
    montecarlo.write_outputs(self.result, out)
    with open(os.path.join(out, 'metadata.json')) as f:
      metadata = json.load(f)
    self.assertEqual(metadata['seed'], 7)
    self.assertEqual(metadata['config']['seed'], 7)
    self.assertIn('git_describe', metadata)

  def test_json_format(self):
    out = self.create_tempdir().full_path
    files = montecarlo.write_outputs(self.result, out, 'json')
    self.assertEqual([os.path.basename(f) for f in files], ['results.json'])
    with open(files[0]) as f:
      doc = json.load(f)
    self.assertEqual(doc['metadata']['seed'], 7)
    self.assertLen(doc['records'], 3)

  def test_json_writes_null_for_missing_values(self):
    out = self.create_tempdir().full_path
    target, = montecarlo.write_outputs(self.result, out, 'json')
    text = _read(target).decode('utf-8')
    self.assertNotIn('NaN', text)
    self.assertNotIn('Infinity', text)
    doc = json.loads(text, parse_constant=_reject_constant)
    self.assertTrue(all(r['objective'] is None for r in doc['records']))
    self.assertTrue(all(r['strategy'] == 'uniform' for r in doc['records']))

  def test_metadata_is_strict_json(self):
    out = self.create_tempdir().full_path
    montecarlo.write_outputs(self.result, out)
    metadata = json.loads(_read(os.path.join(out, 'metadata.json')), parse_constant=_reject_constant)
    self.assertEqual(metadata['n_trials'], 3)

  def test_byte_identical_reruns(self):
    again = montecarlo.run_campaign(test_util.small_config(2, 1, seed=7), 3, ['uniform'])
    a, b = self.create_tempdir().full_path, self.create_tempdir().full_path
    for x, y in zip(montecarlo.write_outputs(self.result, a), montecarlo.write_outputs(again, b)):
      self.assertEqual(_read(x), _read(y))

  def test_nothing_to_write(self):
    empty = montecarlo.run_campaign(test_util.small_config(), 1, [])
    with self.assertRaisesRegex(montecarlo.OutputError, 'nothing to write'):
      montecarlo.write_outputs(empty, self.create_tempdir().full_path)

  def test_unwritable_path(self):
    blocker = self.create_tempfile().full_path
    with self.assertRaises(montecarlo.OutputError):
      montecarlo.write_outputs(self.result, os.path.join(blocker, 'out'))

  def test_unknown_format(self):
    with self.assertRaises(montecarlo.OutputError):
      montecarlo.write_outputs(self.result, self.create_tempdir().full_path, 'xml')


@unittest.skipUnless(SLOW, 'campaign-scale check, set IAB_SLOW_TESTS=1')
class DeskCampaignTest(absltest.TestCase):
  """200 paired trials at K = 4, K~ = 2 with the default arrays."""

  @classmethod
  def setUpClass(cls):
    super().setUpClass()
    cfg = scenario.SystemConfig(k_gnb=4, k_iab=2)
    cls.result = montecarlo.run_campaign(cfg, 200, ['uniform', 'max_min', 'max_sum_se'],
                                         n_workers=os.cpu_count() or 1)
    cls.frame = cls.result.frame()

  def test_solved_allocations_are_feasible(self):
    for strategy in ('max_min', 'max_sum_se'):
      for t in range(20):
        real = montecarlo.build_realization(scenario.SystemConfig(k_gnb=4, k_iab=2), t)
        result = allocation.solve_allocation(strategy, real.gains, real.cfg)
        if result.optimal:
          self.assertTrue(result.verification.passed, msg=f'{strategy} trial {t}: '
                          f'{result.verification.failed}')

  def test_max_sum_beats_uniform(self):
    pivot = self.frame.pivot(index='trial', columns='strategy', values='total')
    wins = np.mean(pivot['max_sum_se'] >= pivot['uniform'])
    self.assertGreaterEqual(wins, 0.95)
    self.assertGreater(pivot['max_sum_se'].mean(), pivot['uniform'].mean())


if __name__ == '__main__':
  absltest.main()
