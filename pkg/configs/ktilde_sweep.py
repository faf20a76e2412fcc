"""Average sum SE versus K~ at K = 12."""

from configs.default_iab_configs import get_default_configs


def get_config():
  config = get_default_configs()
  config.system.k_gnb = 12
  campaign = config.campaign
  campaign.ktilde_values = tuple(range(1, 11))
  campaign.n_trials = 100
  campaign.n_workers = 4

  return config
