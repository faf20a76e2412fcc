"""Desk-scale paired campaign: K = 4 gNB UEs, K~ = 2 IAB UEs."""

from configs.default_iab_configs import get_default_configs


def get_config():
  config = get_default_configs()
  system = config.system
  system.k_gnb = 4
  system.k_iab = 2
  campaign = config.campaign
  campaign.n_trials = 200
  campaign.ktilde_values = (2,)

  return config
