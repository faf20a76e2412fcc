"""Small random instances shared by the unit tests."""

import collections

import jax

import beamforming
import channel
import scenario

Instance = collections.namedtuple(
  'Instance', ['cfg', 'topology', 'channels', 'precoders', 'combiners', 'gains'])


def small_config(k_gnb=2, k_iab=1, **overrides):
  """Cheap arrays so that a realization builds in milliseconds."""
  values = dict(k_gnb=k_gnb, k_iab=k_iab, n_gnb=(4, 2), n_iab=(4, 2), n_ue=(2, 1),
                n_clusters=2, n_paths=2)
  values.update(overrides)
  return scenario.SystemConfig(**values)


def random_instance(seed=0, k_gnb=2, k_iab=1, **overrides):
  cfg = small_config(k_gnb, k_iab, **overrides)
  key = scenario.trial_key(cfg.seed + seed, 0)
  topology = scenario.generate_topology(cfg, jax.random.fold_in(key, scenario.TOPOLOGY))
  channels = channel.build_channel_set(topology, cfg, jax.random.fold_in(key, scenario.CHANNELS))
  precoders = beamforming.compute_precoders(channels)
  combiners = beamforming.compute_combiners(channels, precoders)
  gains = beamforming.build_gain_table(channels, precoders, combiners)
  return Instance(cfg, topology, channels, precoders, combiners, gains)
