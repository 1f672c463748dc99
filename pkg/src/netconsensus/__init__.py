"""Agent-based simulation of consensus games with visible and adversarial players on networks."""

from .behavior import Color, DecisionKind, LogisticModel, ModelBank, paper_model_bank
from .engine import Baseline, GameConfig, GameTrace, Scenario, run_batch, run_game
from .graphs import Graph, Placement, Role, TopologySpec

__all__ = [
    "Baseline",
    "Color",
    "DecisionKind",
    "GameConfig",
    "GameTrace",
    "Graph",
    "LogisticModel",
    "ModelBank",
    "Placement",
    "Role",
    "Scenario",
    "TopologySpec",
    "paper_model_bank",
    "run_batch",
    "run_game",
]
