"""Evaluation domains: the corner Gridworld and onion sorting."""
from .baselines import consistency_audit, ml_observations, ml_trajectories, purity_recall
from .gridworld import GridworldSpec, build_gridworld, simulate_controlled_gridworld, simulate_gridworld_demo
from .onion import OnionSpec, build_onion_mdp, expert_policy, simulate_onion_demo

__all__ = [
    "consistency_audit", "ml_observations", "ml_trajectories", "purity_recall",
    "GridworldSpec", "build_gridworld", "simulate_controlled_gridworld", "simulate_gridworld_demo",
    "OnionSpec", "build_onion_mdp", "expert_policy", "simulate_onion_demo",
]
