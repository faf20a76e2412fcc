"""Full-scale deployment, K = 12, with ECDFs at K~ = 1 and K~ = 10."""

from configs.default_iab_configs import get_default_configs


def get_config():
  config = get_default_configs()
  system = config.system
  system.k_gnb = 12
  system.k_iab = 1
  system.n_gnb = (16, 4)
  system.n_iab = (8, 4)
  system.n_ue = (4, 2)
  system.p_max_gnb = 43.
  system.p_max_iab = 43.
  system.p_max_ue = 23.
  config.campaign.ktilde_values = (1, 10)

  return config
