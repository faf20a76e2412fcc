# pylint: skip-file
"""Utility code for unit conversions and run metadata."""

import os
import subprocess

import numpy as np


def db_to_linear(db):
  return 10. ** (np.asarray(db, dtype=float) / 10.)


def linear_to_db(x):
  return 10. * np.log10(np.asarray(x, dtype=float))


def dbm_to_watts(dbm):
  """43 dBm is 19.95 W, 23 dBm is 0.1995 W."""
  return 10. ** ((np.asarray(dbm, dtype=float) - 30.) / 10.)


def flatten_dict(config):
  """Flatten a hierarchical dict to a simple dict."""
  new_dict = {}
  for key, value in config.items():
    if isinstance(value, dict):
      sub_dict = flatten_dict(value)
      for subkey, subvalue in sub_dict.items():
        new_dict[key + "/" + subkey] = subvalue
    elif isinstance(value, tuple):
      new_dict[key] = list(value)
    else:
      new_dict[key] = value
  return new_dict


def git_describe(path=None):
  """`git describe --always --dirty` of the source tree, or 'unknown' outside a checkout."""
  cwd = path or os.path.dirname(os.path.abspath(__file__))
  try:
    out = subprocess.run(['git', 'describe', '--always', '--dirty'], cwd=cwd,
                         capture_output=True, text=True, timeout=10, check=True)
  except (OSError, subprocess.SubprocessError):
    return 'unknown'
  return out.stdout.strip() or 'unknown'
