"""Tests for the SINR and spectral-efficiency expressions."""

import dataclasses

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np

import beamforming
import link_metrics
import test_util
from link_metrics import PowerAllocation


def _random_powers(rng, k_gnb, k_iab):
  return PowerAllocation(rng.uniform(0.1, 5., k_gnb + 1), rng.uniform(0.1, 5., k_iab + 1),
                         rng.uniform(0.01, 0.2, k_gnb + k_iab))


def _matrix_sinrs(inst, p):
  """Every SINR straight from channel matrices and beam vectors."""
  ch, f, v = inst.channels, inst.precoders, inst.combiners
  sigma = ch.noise
  h0 = ch.backhaul.entries
  h = {k: m.entries for k, m in ch.gnb_access.items()}
  h.update({i: m.entries for i, m in ch.iab_access.items()})
  gnb_ues, iab_ues = inst.topology.gnb_ues, inst.topology.iab_ues

  def g(vec, mat, beam):
    return abs(np.conj(vec) @ mat @ beam) ** 2

  def norm2(vec):
    return np.linalg.norm(vec) ** 2

  def cross(tx, rx):
    if tx in iab_ues:
      return ch.cross[(tx, rx)].entries
    return ch.cross[(rx, tx)].entries.conj().T

  out = {}
  for k in [0] + gnb_ues:
    # gNB receiving the IAB backhaul stream (k = 0) or UE k.
    vec = v.v_gnb[k]
    streams = [(p.eta_iab[0], h0, f.f_iab[0])]
    streams += [(p.eta_ue[j - 1], h[j], f.f_ue[j]) for j in gnb_ues]
    streams += [(p.eta_iab[i - inst.cfg.k_gnb], h0, f.f_iab[i]) for i in iab_ues]
    powers = [eta * g(vec, mat, beam) for eta, mat, beam in streams]
    own = powers[k]
    out[('u_gnb', k)] = own / (sum(powers) - own + sigma['gnb'] * norm2(vec))
  for k in gnb_ues:
    vec = v.v_ue[k]
    powers = [p.eta_gnb[j] * g(vec, h[k].conj().T, f.f_gnb[j]) for j in [0] + gnb_ues]
    powers += [p.eta_ue[i - 1] * g(vec, cross(i, k), f.f_ue[i]) for i in iab_ues]
    out[('d_gnb', k)] = powers[k] / (sum(powers) - powers[k] + sigma['ue'] * norm2(vec))
  for i in [0] + iab_ues:
    # IAB node receiving the gNB backhaul stream (i = 0) or UE i.
    vec = v.v_iab[i]
    powers = [p.eta_gnb[j] * g(vec, h0.conj().T, f.f_gnb[j]) for j in [0] + gnb_ues]
    own = powers[0] if i == 0 else p.eta_ue[i - 1] * g(vec, h[i], f.f_ue[i])
    others = sum(p.eta_ue[l - 1] * g(vec, h[l], f.f_ue[l]) for l in iab_ues if l != i)
    interference = sum(powers) + others - (own if i == 0 else 0.)
    out[('u_iab', i)] = own / (interference + sigma['iab'] * norm2(vec))
  for i in iab_ues:
    vec = v.v_ue[i]
    powers = [p.eta_iab[0] * g(vec, h[i].conj().T, f.f_iab[0])]
    powers += [p.eta_iab[l - inst.cfg.k_gnb] * g(vec, h[i].conj().T, f.f_iab[l]) for l in iab_ues]
    powers += [p.eta_ue[k - 1] * g(vec, cross(k, i), f.f_ue[k]) for k in gnb_ues]
    own = p.eta_iab[i - inst.cfg.k_gnb] * g(vec, h[i].conj().T, f.f_iab[i])
    out[('d_iab', i)] = own / (sum(powers) - own + sigma['ue'] * norm2(vec))
  return out


def _two_slot_table(ul=1., dl=1., noise=1.):
  """K = 1, K~ = 0 table with constant gains."""
  return beamforming.GainTable(1, 0, dl=dl * np.ones((2, 2)), ul=ul * np.ones((2, 2)),
                               dl_noise=noise * np.ones(2), ul_noise=noise * np.ones(2))


class SinrTest(parameterized.TestCase):

  def test_noise_only(self):
    gains = _two_slot_table()
    p = PowerAllocation([0., 0.], [0.], [2.])
    self.assertAlmostEqual(link_metrics.sinr_uplink_gnb_access(gains, p, 1), 2.)
    p = PowerAllocation([0., 0.], [2.], [0.])
    self.assertAlmostEqual(link_metrics.sinr_uplink_gnb_backhaul(gains, p), 2.)
    p = PowerAllocation([0., 2.], [0.], [0.])
    self.assertAlmostEqual(link_metrics.sinr_downlink_gnb(gains, p, 1), 2.)

  def test_scale_invariance_without_noise(self):
    inst = test_util.random_instance(seed=1, k_gnb=2, k_iab=2)
    gains = dataclasses.replace(inst.gains, dl_noise=np.zeros(5), ul_noise=np.zeros(5))
    p = _random_powers(np.random.default_rng(0), 2, 2)
    q = PowerAllocation(2. * p.eta_gnb, 2. * p.eta_iab, 2. * p.eta_ue)
    a, b = link_metrics.sinr_report(gains, p), link_metrics.sinr_report(gains, q)
    for name in link_metrics.GROUPS:
      np.testing.assert_allclose(a.group(name), b.group(name), rtol=1e-12)
    self.assertAlmostEqual(a.sinr_u_gnb_0 / b.sinr_u_gnb_0, 1., places=12)

  def test_matches_matrix_products(self):
    rng = np.random.default_rng(0)
    for seed in range(100):
      k_gnb, k_iab = (2, 1) if seed % 2 else (3, 2)
      inst = test_util.random_instance(seed=seed, k_gnb=k_gnb, k_iab=k_iab)
      p = _random_powers(rng, k_gnb, k_iab)
      oracle = _matrix_sinrs(inst, p)
      gains = inst.gains
      values = {('u_gnb', 0): link_metrics.sinr_uplink_gnb_backhaul(gains, p),
                ('u_iab', 0): link_metrics.sinr_uplink_iab_backhaul(gains, p)}
      for k in gains.gnb_ues:
        values[('u_gnb', k)] = link_metrics.sinr_uplink_gnb_access(gains, p, k)
        values[('d_gnb', k)] = link_metrics.sinr_downlink_gnb(gains, p, k)
      for i in gains.iab_ues:
        values[('u_iab', i)] = link_metrics.sinr_uplink_iab_access(gains, p, i)
        values[('d_iab', i)] = link_metrics.sinr_downlink_iab(gains, p, i)
      self.assertEqual(set(values), set(oracle))
      for key, expected in oracle.items():
        self.assertAlmostEqual(values[key], expected, delta=1e-10 * expected, msg=f'{key} seed {seed}')

  def test_report_matches_expressions(self):
    inst = test_util.random_instance(seed=4, k_gnb=3, k_iab=2)
    gains = inst.gains
    p = _random_powers(np.random.default_rng(4), 3, 2)
    report = link_metrics.sinr_report(gains, p)
    np.testing.assert_allclose(
      report.sinr_d_gnb, [link_metrics.sinr_downlink_gnb(gains, p, k) for k in gains.gnb_ues], rtol=1e-12)
    np.testing.assert_allclose(
      report.sinr_u_gnb, [link_metrics.sinr_uplink_gnb_access(gains, p, k) for k in gains.gnb_ues],
      rtol=1e-12)
    np.testing.assert_allclose(
      report.sinr_u_iab, [link_metrics.sinr_uplink_iab_access(gains, p, i) for i in gains.iab_ues],
      rtol=1e-12)
    np.testing.assert_allclose(
      report.sinr_d_iab, [link_metrics.sinr_downlink_iab(gains, p, i) for i in gains.iab_ues], rtol=1e-12)
    self.assertAlmostEqual(report.sinr_u_iab_0 / link_metrics.sinr_uplink_iab_backhaul(gains, p), 1., places=12)
    self.assertAlmostEqual(report.sinr_u_gnb_0 / link_metrics.sinr_uplink_gnb_backhaul(gains, p), 1., places=12)

  def test_stage_interference(self):
    gains = np.array([[2., 1.], [3., 4.]])
    sinr, interference = link_metrics.stage_sinrs(gains, np.array([1., 2.]), np.array([1., 2.]))
    np.testing.assert_allclose(interference, [2., 3.])
    np.testing.assert_allclose(sinr, [2. / 3., 8. / 5.])

  def test_monotonicity(self):
    inst = test_util.random_instance(seed=2)
    gains = inst.gains
    p = _random_powers(np.random.default_rng(2), 2, 1)
    base = link_metrics.sinr_downlink_iab(gains, p, 3)
    more_desired = dataclasses.replace(p, eta_iab=p.eta_iab * np.array([1., 2.]))
    more_backhaul = dataclasses.replace(p, eta_iab=p.eta_iab * np.array([2., 1.]))
    more_cross = dataclasses.replace(p, eta_ue=p.eta_ue * np.array([3., 3., 1.]))
    self.assertGreaterEqual(link_metrics.sinr_downlink_iab(gains, more_desired, 3), base)
    self.assertLessEqual(link_metrics.sinr_downlink_iab(gains, more_backhaul, 3), base)
    self.assertLessEqual(link_metrics.sinr_downlink_iab(gains, more_cross, 3), base)

  def test_nonnegative_and_finite(self):
    inst = test_util.random_instance(seed=6, k_gnb=3, k_iab=2)
    report = link_metrics.sinr_report(inst.gains, _random_powers(np.random.default_rng(6), 3, 2))
    for name in link_metrics.GROUPS:
      self.assertTrue(np.all(np.isfinite(report.group(name))))
      self.assertTrue(np.all(report.group(name) >= 0.))
      self.assertTrue(np.all(report.interference[name] >= 0.))


class SeReportTest(parameterized.TestCase):

  @parameterized.parameters((1., 1.), (0., 0.), (3., 2.))
  def test_log2(self, sinr, se):
    gains = _two_slot_table()
    p = PowerAllocation([0., 0.], [0.], [sinr])
    report = link_metrics.se_report(gains, p)
    self.assertAlmostEqual(float(report.se_u_gnb[0]), se)

  def test_aggregation(self):
    inst = test_util.random_instance(seed=8, k_gnb=3, k_iab=2)
    sinrs = link_metrics.sinr_report(inst.gains, _random_powers(np.random.default_rng(8), 3, 2))
    report = link_metrics.se_report(inst.gains, _random_powers(np.random.default_rng(8), 3, 2))
    per_link = 0.
    for name in link_metrics.GROUPS:
      for x in sinrs.group(name):
        per_link += np.log2(1. + x)
    self.assertAlmostEqual(report.total, per_link, places=10)
    self.assertAlmostEqual(sum(report.group_sums.values()), report.total, places=10)
    self.assertAlmostEqual(report.gnb_area, report.group_sums['u_gnb'] + report.group_sums['d_gnb'],
                           places=10)
    np.testing.assert_allclose(report.per_ue_iab, report.se_u_iab + report.se_d_iab)
    self.assertAlmostEqual(report.min_sinr['d_iab'], float(np.min(sinrs.sinr_d_iab)))

  def test_no_iab_ues(self):
    inst = test_util.random_instance(k_gnb=2, k_iab=0)
    p = _random_powers(np.random.default_rng(0), 2, 0)
    report = link_metrics.se_report(inst.gains, p)
    self.assertEqual(report.iab_area, 0.)
    self.assertTrue(np.isnan(report.min_sinr['u_iab']))
    self.assertGreater(report.gnb_area, 0.)


class BackhaulConsistencyTest(parameterized.TestCase):

  def test_random_instances(self):
    rng = np.random.default_rng(1)
    for seed in range(100):
      inst = test_util.random_instance(seed=seed, k_gnb=2, k_iab=1 + seed % 3)
      p = _random_powers(rng, 2, 1 + seed % 3)
      report = link_metrics.backhaul_consistency_check(inst.gains, p)
      self.assertTrue(report.consistent, msg=f'seed {seed}: {report.max_rel_error}')
      self.assertLessEqual(report.max_rel_error, 1e-9)

  def test_zero_power(self):
    inst = test_util.random_instance()
    report = link_metrics.backhaul_consistency_check(inst.gains, PowerAllocation.zeros(2, 1))
    self.assertEqual(report.se_d_iab_0, 0.)
    self.assertEqual(report.se_u_gnb_0, 0.)
    self.assertEqual(report.se_d_gnb_0, 0.)
    self.assertEqual(report.se_u_iab_0, 0.)
    self.assertTrue(report.consistent)

  def test_single_stream_by_hand(self):
    # Backhaul UL against one gNB UE, noise free.
    g, a, eta, q = 3., 0.5, 2., 4.
    ul = np.array([[g, a], [1., 1.]])
    gains = beamforming.GainTable(1, 0, dl=np.ones((2, 2)), ul=ul, dl_noise=np.zeros(2),
                                  ul_noise=np.zeros(2))
    p = PowerAllocation([1., 1.], [eta], [q])
    report = link_metrics.backhaul_consistency_check(gains, p)
    expected = np.log2(1. + eta * g / (q * a))
    self.assertAlmostEqual(report.se_u_gnb_0, expected)
    self.assertAlmostEqual(report.se_d_iab_0, expected)


class PowerAllocationTest(absltest.TestCase):

  def test_stage_vectors(self):
    p = PowerAllocation([1., 2., 3.], [4., 5.], [6., 7., 8.])
    self.assertEqual(p.k_gnb, 2)
    self.assertEqual(p.k_iab, 1)
    np.testing.assert_array_equal(p.dl_powers(), [1., 2., 3., 8.])
    np.testing.assert_array_equal(p.ul_powers(), [4., 6., 7., 5.])
    self.assertEqual(p.iab(3), 5.)
    self.assertEqual(p.ue(3), 8.)


if __name__ == '__main__':
  absltest.main()
