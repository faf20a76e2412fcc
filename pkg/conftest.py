"""Pytest wiring: absltest normally parses absl flags in absltest.main()."""

from absl import flags


def pytest_configure(config):
  del config
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()
