"""Numerical self-checks shared by the ``oracle`` command and the test suite."""
import numpy as np

from ..domains.gridworld import GridworldSpec, simulate_gridworld_demo
from ..maxent import dual_objective, empirical_feature_expectations, expected_feature_counts
from ..mdp import soft_value_iteration
from ..oracle import expected_features_enumeration, tiny_instance


def finite_difference_gradient(fn, theta, h=1e-5):
    grad = np.zeros_like(theta)
    for k in range(len(theta)):
        e = np.zeros_like(theta)
        e[k] = h
        grad[k] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return grad


def gradient_check(seed=0, n_points=20, h=1e-5, regularization=0.0):
    """Analytic dual gradient against central differences at random theta on the Gridworld.

    The relative error at each point is |g - g_fd|_2 / |g_fd|_2.
    """
    rng = np.random.default_rng(seed)
    model, trajs, _ = simulate_gridworld_demo(GridworldSpec(num_trajectories=5, obs_per_timestep=0), seed)
    target = empirical_feature_expectations(trajs, model.reward).values

    def value(th):
        return dual_objective(model.mdp, model.reward, th, target, regularization)[0]

    errors = []
    for _ in range(n_points):
        theta = rng.uniform(-2.0, 2.0, size=model.reward.num_features)
        grad = dual_objective(model.mdp, model.reward, theta, target, regularization)[1]
        fd = finite_difference_gradient(value, theta, h)
        errors.append(float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)))
    return {"points": n_points, "max_relative_error": max(errors), "mean_relative_error": float(np.mean(errors))}


def enumeration_check(seed=0):
    """Forward-visitation feature counts against listing every trajectory of the tiny MDP."""
    mdp, reward, _, _ = tiny_instance(seed)
    policy = soft_value_iteration(mdp, reward)
    dp = expected_feature_counts(mdp, policy, reward).values
    brute = expected_features_enumeration(mdp, policy, reward)
    return {"max_abs_error": float(np.max(np.abs(dp - brute)))}
