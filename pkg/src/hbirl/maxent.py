"""Maximum causal entropy IRL: feature expectations, dual and weight fitting."""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidInputError
from .mdp import RewardModel, _soft_backward, soft_values


@dataclass(frozen=True, eq=False)
class FeatureExpectations:
    """Average summed feature counts per trajectory."""

    values: np.ndarray
    normalizer: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass
class FitOptions:
    tolerance: float = 1e-4
    max_iters: int = 5000
    step: float = 0.5
    regularization: float = 1e-3


@dataclass
class FitResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    history: list = field(default_factory=list, repr=False)


def empirical_feature_expectations(demos, reward):
    demos = list(demos)
    if not demos:
        raise InvalidInputError("empty demonstration set")
    phi = reward.features
    total = np.zeros(reward.num_features)
    for traj in demos:
        total += phi[traj.states, traj.actions].sum(axis=0)
    return FeatureExpectations(total / len(demos), len(demos))


@njit(cache=True)
def _forward_counts(P, start, pi, phi):
    T, S, A = pi.shape
    K = phi.shape[2]
    D = start.copy()
    visits = np.zeros((T, S))
    counts = np.zeros(K)
    for t in range(T):
        visits[t] = D
        nxt = np.zeros(S)
        for s in range(S):
            ds = D[s]
            if ds == 0.0:
                continue
            for a in range(A):
                w = ds * pi[t, s, a]
                if w == 0.0:
                    continue
                for k in range(K):
                    counts[k] += w * phi[s, a, k]
                for s2 in range(S):
                    p = P[s, a, s2]
                    if p != 0.0:
                        nxt[s2] += w * p
        D = nxt
    return counts, visits


def state_visitation(mdp, policy):
    """Per-timestep state distributions D_t(s) under ``policy``."""
    pi = np.ascontiguousarray(policy.table(mdp.horizon))
    dummy = np.zeros((mdp.n_states, mdp.n_actions, 1))
    return _forward_counts(mdp.transition, mdp.start, pi, dummy)[1]


def expected_feature_counts(mdp, policy, reward):
    """E[sum_t phi(s_t, a_t)] by forward propagation of the state distribution.

    A deterministic policy is treated as a point-mass stochastic one.
    """
    pi = np.ascontiguousarray(policy.table(mdp.horizon))
    counts, _ = _forward_counts(mdp.transition, mdp.start, pi, reward.features)
    return FeatureExpectations(counts, 1)


def causal_entropy(mdp, policy):
    """sum_t sum_s D_t(s) H(pi_t(.|s)) under the policy's own visitation."""
    pi = policy.table(mdp.horizon)
    D = state_visitation(mdp, policy)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(pi > 0, pi * np.log(pi), 0.0)
    return float(-np.sum(D[:, :, None] * plogp))


def _dual(mdp, phi, theta, target, regularization):
    r = phi @ theta
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("rewards must be finite")
    if mdp.infinite:
        V, logpi = soft_values(mdp, RewardModel(phi, theta))
        v0 = V
        pi = np.broadcast_to(np.exp(logpi), (mdp.horizon,) + logpi.shape)
    else:
        V, logpi = _soft_backward(mdp.transition, r, int(mdp.horizon), mdp.sink_index)
        v0 = V[0]
        pi = np.exp(logpi)
    counts, _ = _forward_counts(mdp.transition, mdp.start, np.ascontiguousarray(pi), phi)
    value = float(mdp.start @ v0 - theta @ target + 0.5 * regularization * theta @ theta)
    return value, counts - target + regularization * theta, pi


def dual_objective(mdp, reward_features, theta, target, regularization=0.0):
    """Dual of the max-causal-entropy program and its gradient.

    value = E_start[V_soft_0] - theta . target + reg/2 |theta|^2
    grad  = E[phi] - target + reg * theta

    Returns ``(value, grad)``.
    """
    theta = np.asarray(theta, dtype=float)
    target = np.asarray(getattr(target, "values", target), dtype=float)
    value, grad, _ = _dual(mdp, reward_features.features, theta, target, regularization)
    return value, grad


def fit_weights(mdp, reward_features, target, opts=None, theta0=None, rng=None):
    """Fit reward weights by adaptive (AdaGrad) descent on the dual.

    Stops when the regularised gradient's max-norm drops below
    ``opts.tolerance``; otherwise returns the iterate with the smallest
    gradient seen, flagged unconverged.
    """
    opts = opts or FitOptions()
    target = np.asarray(getattr(target, "values", target), dtype=float)
    K = reward_features.num_features
    if target.shape != (K,):
        raise InvalidInputError("target has the wrong number of features")
    if np.any(target < -1e-12) or np.any(target > mdp.horizon + 1e-12):
        raise InvalidInputError("target feature counts must lie in [0, horizon]")
    if theta0 is None:
        rng = rng if rng is not None else np.random.default_rng()
        theta0 = rng.uniform(-1.0, 1.0, size=K)
    theta = np.array(theta0, dtype=float)
    phi = reward_features.features
    accum = np.zeros(K)
    best_theta, best_norm = theta.copy(), np.inf
    for it in range(1, opts.max_iters + 1):
        _, grad, _ = _dual(mdp, phi, theta, target, opts.regularization)
        norm = float(np.max(np.abs(grad)))
        if norm < best_norm:
            best_theta, best_norm = theta.copy(), norm
        if norm <= opts.tolerance:
            return FitResult(theta, True, it, norm)
        accum += grad * grad
        theta = theta - opts.step * grad / (np.sqrt(accum) + 1e-12)
    return FitResult(best_theta, False, opts.max_iters, best_norm)
