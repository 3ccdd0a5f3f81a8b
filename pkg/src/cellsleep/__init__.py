"""Multi-cell massive MIMO network simulator with BS sleep/antenna control.

The network is a shared-reward multi-agent environment (one agent per BS);
training uses a from-scratch PPO with a shared actor and a centralized
critic, either over the full network state or each BS's 6 closest
neighbors.
"""

from cellsleep.config import ConfigError, ExperimentConfig, PpoConfig
from cellsleep.env import InvariantError, JointAction, NetworkEnv, RewardRecord
from cellsleep.radio import LinkGain, RadioParams, SleepModeTable
from cellsleep.topology import Topology, hex_topology
from cellsleep.traffic import (CATEGORIES, ServiceCategory, TrafficProfile,
                               UeOutcome, UeState, synth_profile)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "PpoConfig",
    "InvariantError", "JointAction", "NetworkEnv", "RewardRecord",
    "LinkGain", "RadioParams", "SleepModeTable",
    "Topology", "hex_topology",
    "CATEGORIES", "ServiceCategory", "TrafficProfile", "UeOutcome",
    "UeState", "synth_profile",
    "__version__",
]
