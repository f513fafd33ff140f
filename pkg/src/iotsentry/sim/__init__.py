"""Seeded smart-home simulator with anomaly injection and ground truth."""

from .engine import LedgerEvent, SimResult, run_scenario
from .scenario import (AnomalyKind, InjectedAnomaly, ScenarioConfig, config_from_dict, load_scenario,
                       scenario_family, scenario_s0, scenario_s1)

__all__ = ["LedgerEvent", "SimResult", "run_scenario", "AnomalyKind", "InjectedAnomaly", "ScenarioConfig",
           "config_from_dict", "load_scenario", "scenario_family", "scenario_s0", "scenario_s1"]
