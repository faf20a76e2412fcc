import ml_collections


def get_default_configs():
  config = ml_collections.ConfigDict()
  # system: keys are scenario.SystemConfig fields
  config.system = system = ml_collections.ConfigDict()
  ## radio
  system.carrier_frequency = 30e9
  system.noise_density = -173.
  system.bandwidth = 100e6
  system.noise_figure_gnb = 0.
  system.noise_figure_iab = 0.
  system.noise_figure_ue = 0.
  ## arrays, rows x columns
  system.n_gnb = (16, 4)
  system.n_iab = (8, 4)
  system.n_ue = (4, 2)
  system.element_spacing = 0.5
  ## power budgets in dBm
  system.p_max_gnb = 43.
  system.p_max_iab = 43.
  system.p_max_ue = 23.
  ## deployment
  system.k_gnb = 12
  system.k_iab = 1
  system.radius_gnb = 100.
  system.radius_iab = 50.
  system.min_distance = 10.
  system.iab_distance = ml_collections.FieldReference(None, field_type=float)
  system.height_gnb = 25.
  system.height_iab = 10.
  system.height_ue = 1.5
  system.sector_width = 120.
  ## cluster channel model
  system.n_clusters = 4
  system.n_paths = 3
  system.cluster_decay_db = 3.
  system.angular_spread_az = 15.
  system.angular_spread_el = 5.
  system.ray_spread = 2.
  system.shadowing = True
  system.shadowing_los_db = 4.
  system.shadowing_nlos_db = 7.82
  system.sector_max_gain_db = 8.
  system.sector_beamwidth = 120.
  system.sector_attenuation_db = 30.
  ## allocation
  system.epsilon_se = 100
  system.solver_tolerance = 1e-6
  system.solver_max_iter = 1000
  system.condense_iters = 0
  system.condense_point = 'uniform'
  system.cap_backhaul = True

  # campaign
  config.campaign = campaign = ml_collections.ConfigDict()
  campaign.n_trials = 200
  campaign.strategies = ('uniform', 'max_min', 'max_sum_se')
  campaign.ktilde_values = (1,)
  campaign.n_workers = 1
  campaign.output_format = 'csv'
  campaign.dump_gp = False
  campaign.log_freq = 10

  config.seed = 42

  return config
