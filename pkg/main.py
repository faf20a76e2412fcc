"""Monte-Carlo power-allocation campaigns for a full-duplex IAB deployment."""

import logging
import os

from absl import app
from absl import flags
from ml_collections.config_flags import config_flags

import allocation
import montecarlo
import run_lib
import scenario

FLAGS = flags.FLAGS

config_flags.DEFINE_config_file(
  "config", None, "Campaign configuration.", lock_config=True)
flags.DEFINE_string("out", None, "Output directory.")
flags.DEFINE_enum("mode", "simulate", ["simulate", "validate"], "Running mode: simulate or validate")
flags.DEFINE_string("config_json", None, "Flat JSON document overriding system keys.")
flags.DEFINE_integer("trials", None, "Trials per K~ value.")
flags.DEFINE_list("strategies", None, "Comma-separated strategies, e.g. uniform,maxmin,maxsum.")
flags.DEFINE_list("ktilde", None, "Comma-separated K~ values to sweep.")
flags.DEFINE_integer("seed", None, "Root seed of the campaign.")
flags.DEFINE_enum("format", None, ["csv", "json"], "Output format.")
flags.DEFINE_integer("condense_iters", None, "AM-GM condensation iterations after the first solve.")
flags.DEFINE_bool("dump_gp", None, "Write every solved GP in text form and every channel set as JSON lines under <out>/gp.")
flags.DEFINE_integer("workers", None, "Worker processes; trials run serially with 1.")
flags.mark_flags_as_required(["config", "out"])

# flag -> Campaign or SystemConfig field
_OVERRIDES = {
  "trials": "n_trials",
  "strategies": "strategies",
  "ktilde": "ktilde_values",
  "seed": "seed",
  "format": "output_format",
  "condense_iters": "condense_iters",
  "dump_gp": "dump_gp",
  "workers": "n_workers",
}


def main(argv):
  if len(argv) > 1:
    raise app.UsageError(f"Unexpected arguments: {argv[1:]}")
  overrides = {field: FLAGS[name].value for name, field in _OVERRIDES.items()
               if FLAGS[name].value is not None}
  try:
    run = run_lib.assemble(FLAGS.config, FLAGS.config_json, overrides=overrides)
  except (scenario.ConfigError, allocation.AllocationError, OSError) as e:
    raise app.UsageError(str(e))

  os.makedirs(FLAGS.out, exist_ok=True)
  # Set logger so that it outputs to both console and file
  handler = logging.FileHandler(os.path.join(FLAGS.out, 'stdout.txt'), 'w')
  formatter = logging.Formatter('%(levelname)s - %(filename)s - %(asctime)s - %(message)s')
  handler.setFormatter(formatter)
  logger = logging.getLogger()
  logger.addHandler(handler)
  logger.setLevel('INFO')

  if FLAGS.mode == "simulate":
    try:
      run_lib.simulate(run, FLAGS.out)
    except montecarlo.OutputError as e:
      raise app.UsageError(str(e))
  elif FLAGS.mode == "validate":
    summary = run_lib.validate(run, FLAGS.out)
    if not summary['valid']:
      return 1
  else:
    raise ValueError(f"Mode {FLAGS.mode} not recognized.")


if __name__ == "__main__":
  app.run(main)
