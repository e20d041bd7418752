"""Discrete-event V2X beacon simulator with a density-aware, game-theoretic adaptive MAC."""

from v2xsim.scenario import ScenarioConfig, ConfigError, load_config, validate

__all__ = ["ScenarioConfig", "ConfigError", "load_config", "validate"]
__version__ = "0.1.0"
