"""Scenario configs, built-in experiments, output and the convergence study."""

from .builtins import TAN_10_DEG, builtin_config, builtin_dict, builtin_scenarios
from .config import ConfigError, ScenarioConfig, load_scenario, parse_scenario, pin_motion
from .io import LOG_COLUMNS, LogWriter, frame_filename, read_log, write_frame, write_log
