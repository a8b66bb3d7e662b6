"""Experiment configs, orchestration and command line interface."""
from .config import ConfigError, ExperimentConfig, from_text, load_config, validate
from .experiments import EXPERIMENTS
from .run import RunRecord, run
