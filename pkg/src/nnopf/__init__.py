"""ReLU voltage surrogates embedded exactly in multi-period distribution OPF."""

__version__ = "0.1.0"

from .devices import DeviceFleet, synthesize_fleet
from .encoder import compute_activation_bounds, encode_time_step
from .grid import Network, build_network, run_power_flow, synthesize_feeder
from .milp import MilpInstance, enumerate_patterns, solve_lp, solve_milp
from .opf import OpfConfig, build_lindistflow_opf, build_nn_opf, solve_opf, validate_solution
from .scenarios import ScenarioConfig, compute_norm_stats, generate_dataset
from .surrogate import TrainConfig, forward, train

__all__ = [
    "DeviceFleet", "MilpInstance", "Network", "OpfConfig", "ScenarioConfig", "TrainConfig",
    "build_lindistflow_opf", "build_network", "build_nn_opf", "compute_activation_bounds",
    "compute_norm_stats", "encode_time_step", "enumerate_patterns", "forward", "generate_dataset",
    "run_power_flow", "solve_lp", "solve_milp", "solve_opf", "synthesize_feeder", "synthesize_fleet",
    "train", "validate_solution",
]
