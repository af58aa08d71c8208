"""Qubit routing with a learned state-value network and annealed swap-layer search."""

from .circuit import Circuit, full_single_layer, greedy_layering, make_family, random_circuit, read_circuit
from .env import RoutingEnv, RoutingState, StepOutcome
from .estimators import RandomRouter, RLRouter, SortingNetworkRouter
from .graph import InteractionGraph, SwapLayer, count_matchings, enumerate_matchings, grid, read_graph
from .policy import AnnealSchedule, RandomPolicy, RLPolicy, SortingNetworkPolicy, select_action_rl
from .qnet import QNetwork
from .trainer import EvalReport, TrainerConfig, evaluate, train

__all__ = [
    "AnnealSchedule",
    "Circuit",
    "EvalReport",
    "InteractionGraph",
    "QNetwork",
    "RLPolicy",
    "RLRouter",
    "RandomPolicy",
    "RandomRouter",
    "RoutingEnv",
    "RoutingState",
    "SortingNetworkPolicy",
    "SortingNetworkRouter",
    "StepOutcome",
    "SwapLayer",
    "TrainerConfig",
    "count_matchings",
    "enumerate_matchings",
    "evaluate",
    "full_single_layer",
    "greedy_layering",
    "grid",
    "make_family",
    "random_circuit",
    "read_circuit",
    "read_graph",
    "select_action_rl",
    "train",
]
