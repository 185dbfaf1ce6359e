"""Experiment plumbing: configs, persistence, sweeps and the CLI."""

from __future__ import annotations

from .config import ExperimentConfig, config_from_dict, load_config
from .experiment import ExperimentManifest, agreement, run_experiment
from .io import read_csv, read_snapshot, write_csv, write_pgm, write_snapshot
from .sweeps import Outcome, SweepTable, parallel_map, sweep_critical_mass, sweep_decay_exponent
