from .config import ConfigError, ScenarioConfig, build_config, load_config
from .scenario import Scenario, choose_mu_patterns, generate_scenario
from .scheduler import InfeasibleSchedule, PrimaryResult, schedule_primary
from .studies import run_5g_study, run_schedulability_study

__all__ = ["ConfigError", "InfeasibleSchedule", "PrimaryResult", "Scenario", "ScenarioConfig",
           "build_config", "choose_mu_patterns", "generate_scenario", "load_config",
           "run_5g_study", "run_schedulability_study", "schedule_primary"]
