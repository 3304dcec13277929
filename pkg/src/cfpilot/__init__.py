"""Decentralised pilot assignment for O-RAN cell-free massive MIMO.

Multi-agent DQN pilot assignment with inter-DU message passing and codebook
rotation search, plus centralised baselines and an experiment harness.
"""
from .config import ScenarioConfig, load_config, loads_config
from .errors import (InfeasibleError, InsufficientSamplesError, InvalidConfig, InvalidInput,
                     InvalidState, RankDeficientError, SingularMatrixError)
from .harness import moving_average, report, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig", "load_config", "loads_config", "run_scenario", "moving_average", "report",
    "InvalidConfig", "InvalidInput", "InvalidState", "SingularMatrixError", "RankDeficientError",
    "InsufficientSamplesError", "InfeasibleError",
]
