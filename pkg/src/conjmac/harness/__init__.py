"""Scenario files, CLI commands and run artifacts."""
from .cli import RunArtifact, cmd_equilibrium, cmd_learn, cmd_simulate, cmd_stability, main, write_artifact
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = [
    "RunArtifact",
    "Scenario",
    "cmd_equilibrium",
    "cmd_learn",
    "cmd_simulate",
    "cmd_stability",
    "load_scenario",
    "main",
    "parse_scenario",
    "write_artifact",
]
