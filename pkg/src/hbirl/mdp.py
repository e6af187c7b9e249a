"""Finite MDPs, exact planning and the inverse learning error."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .errors import ConfigurationError, InvalidInputError

ROW_TOL = 1e-9
TIE_TOL = 1e-10
VI_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Discrete MDP without its reward.

    ``transition[s, a, s']`` is Pr(s'|s,a).  Trajectories always have
    ``horizon`` steps; when ``infinite`` is set, values are computed for the
    discounted infinite-horizon problem instead.  ``terminal`` marks (s,a)
    pairs that send the agent to the absorbing ``sink`` state, where only the
    no-op action 0 is ever taken.
    """

    transition: np.ndarray
    start: np.ndarray
    horizon: int
    discount: float = 1.0
    infinite: bool = False
    terminal: np.ndarray | None = None
    sink: int | None = None
    state_names: tuple = ()
    action_names: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        mu = np.asarray(self.start, dtype=float)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "start", mu)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidInputError(f"transition must be (S, A, S), got {P.shape}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=2), 1.0, atol=ROW_TOL, rtol=0):
            raise InvalidInputError("transition rows must be distributions")
        if mu.shape != (P.shape[0],) or np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise InvalidInputError("start distribution must sum to 1 over states")
        if int(self.horizon) < 1:
            raise InvalidInputError("horizon must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise InvalidInputError("discount must lie in (0, 1]")
        if self.terminal is not None:
            term = np.asarray(self.terminal, dtype=bool)
            if term.shape != P.shape[:2]:
                raise InvalidInputError("terminal mask must be (S, A)")
            if self.sink is None:
                raise InvalidInputError("terminal pairs need a sink state")
            if term.any() and not np.allclose(P[term][:, self.sink], 1.0):
                raise InvalidInputError("terminal pairs must move to the sink")
            object.__setattr__(self, "terminal", term)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def sink_index(self):
        return -1 if self.sink is None else int(self.sink)

    @cached_property
    def is_deterministic(self):
        return bool(np.all(self.transition.max(axis=2) > 1 - ROW_TOL))

    @cached_property
    def log_transition(self):
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    @cached_property
    def log_start(self):
        with np.errstate(divide="ignore"):
            return np.log(self.start)


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Linear reward over K binary (s,a) features: R = features @ weights."""

    features: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.features, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if phi.ndim != 3:
            raise InvalidInputError("features must be (S, A, K)")
        if not np.all((phi == 0) | (phi == 1)):
            raise InvalidInputError("features must be binary")
        if w.shape != (phi.shape[2],):
            raise InvalidInputError(f"expected {phi.shape[2]} weights, got {w.shape}")
        object.__setattr__(self, "features", phi)
        object.__setattr__(self, "weights", w)

    @property
    def num_features(self):
        return self.features.shape[2]

    def feature_fn(self, s, a):
        return self.features[s, a]

    def reward(self):
        return self.features @ self.weights

    def with_weights(self, weights):
        return RewardModel(self.features, weights)


@dataclass(frozen=True, eq=False)
class Policy:
    """Action distributions, either stationary (S, A) or per timestep (T, S, A)."""

    probs: np.ndarray
    deterministic: bool = False

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim not in (2, 3):
            raise InvalidInputError("policy table must be (S, A) or (T, S, A)")
        if np.any(p < 0) or not np.allclose(p.sum(axis=-1), 1.0, atol=ROW_TOL, rtol=0):
            raise InvalidInputError("policy rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_actions(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs, deterministic=True)

    @property
    def time_varying(self):
        return self.probs.ndim == 3

    def at(self, t):
        return self.probs[t] if self.time_varying else self.probs

    def table(self, horizon):
        """(T, S, A) view, broadcasting a stationary policy."""
        if self.time_varying:
            if self.probs.shape[0] < horizon:
                raise InvalidInputError("policy shorter than horizon")
            return self.probs[:horizon]
        return np.broadcast_to(self.probs, (horizon,) + self.probs.shape)

    def greedy_actions(self):
        return np.argmax(self.probs, axis=-1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        if s.shape != a.shape or s.ndim != 1:
            raise InvalidInputError("states and actions must be equal-length vectors")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self):
        return len(self.states)

    @property
    def steps(self):
        return list(zip(self.states.tolist(), self.actions.tolist()))

    def is_consistent(self, mdp):
        s, a = self.states, self.actions
        if mdp.start[s[0]] <= 0:
            return False
        return bool(np.all(mdp.transition[s[:-1], a[:-1], s[1:]] > 0))


def _check_reward(reward):
    r = reward.reward()
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("rewards must be finite")
    return r


def _greedy(q):
    # lowest action index among near-ties, so symmetric MDPs give stable policies
    best = q.max(axis=-1, keepdims=True)
    return np.argmax(q >= best - TIE_TOL * np.maximum(1.0, np.abs(best)), axis=-1)


def solve_optimal(mdp, reward):
    """Optimal values and a deterministic greedy policy.

    Finite horizon uses backward induction and returns the t=0 values with a
    (T, S) policy; infinite horizon runs discounted value iteration to 1e-8.
    """
    return plan(mdp, _check_reward(reward))


def plan(mdp, r):
    """``solve_optimal`` for an explicit (S, A) reward table."""
    P = mdp.transition
    if not mdp.infinite:
        T = mdp.horizon
        V = np.zeros(mdp.n_states)
        acts = np.zeros((T, mdp.n_states), dtype=int)
        for t in range(T - 1, -1, -1):
            q = r + P @ V
            acts[t] = _greedy(q)
            V = q[np.arange(mdp.n_states), acts[t]]
        return V, Policy.from_actions(acts, mdp.n_actions)
    if mdp.discount >= 1.0:
        raise ConfigurationError("infinite-horizon values need discount < 1")
    V = np.zeros(mdp.n_states)
    while True:
        q = r + mdp.discount * (P @ V)
        V_new = q.max(axis=1)
        if np.max(np.abs(V_new - V)) < VI_TOL * (1 - mdp.discount):
            V = V_new
            break
        V = V_new
    q = r + mdp.discount * (P @ V)
    return V, Policy.from_actions(_greedy(q), mdp.n_actions)


def evaluate_policy(mdp, reward, policy):
    """Exact value of ``policy`` (t=0 values for finite horizon)."""
    r = _check_reward(reward)
    P = mdp.transition
    if not mdp.infinite:
        pi = policy.table(mdp.horizon)
        V = np.zeros(mdp.n_states)
        for t in range(mdp.horizon - 1, -1, -1):
            V = np.sum(pi[t] * (r + P @ V), axis=1)
        return V
    if mdp.discount >= 1.0:
        raise ConfigurationError("infinite-horizon values need discount < 1")
    if policy.time_varying:
        raise InvalidInputError("infinite-horizon evaluation needs a stationary policy")
    pi = policy.probs
    r_pi = np.sum(pi * r, axis=1)
    P_pi = np.einsum("sa,sat->st", pi, P)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * P_pi, r_pi)


def ile(mdp, true_reward, expert_policy, learned_policy):
    """Inverse learning error ||V^E - V^L||_1 under the true reward."""
    v_e = evaluate_policy(mdp, true_reward, expert_policy)
    v_l = evaluate_policy(mdp, true_reward, learned_policy)
    return float(np.sum(np.abs(v_e - v_l)))


@njit(cache=True)
def _soft_backward(P, r, horizon, sink):
    S, A = r.shape
    V = np.zeros((horizon + 1, S))
    logpi = np.empty((horizon, S, A))
    q = np.empty(A)
    for t in range(horizon - 1, -1, -1):
        for s in range(S):
            if s == sink:
                V[t, s] = 0.0
                logpi[t, s, :] = -np.inf
                logpi[t, s, 0] = 0.0
                continue
            m = -np.inf
            for a in range(A):
                acc = r[s, a]
                for s2 in range(S):
                    p = P[s, a, s2]
                    if p != 0.0:
                        acc += p * V[t + 1, s2]
                q[a] = acc
                if acc > m:
                    m = acc
            tot = 0.0
            for a in range(A):
                tot += np.exp(q[a] - m)
            v = m + np.log(tot)
            V[t, s] = v
            for a in range(A):
                logpi[t, s, a] = q[a] - v
    return V, logpi


def _soft_stationary(mdp, r, tol=VI_TOL, max_iters=100000):
    if mdp.discount >= 1.0:
        raise ConfigurationError("soft value iteration diverges without discounting")
    P = mdp.transition
    V = np.zeros(mdp.n_states)
    for _ in range(max_iters):
        q = r + mdp.discount * (P @ V)
        m = q.max(axis=1)
        V_new = m + np.log(np.exp(q - m[:, None]).sum(axis=1))
        if mdp.sink is not None:
            V_new[mdp.sink] = 0.0
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    else:
        raise ConfigurationError("soft value iteration did not converge")
    q = r + mdp.discount * (P @ V)
    m = q.max(axis=1)
    logpi = q - (m + np.log(np.exp(q - m[:, None]).sum(axis=1)))[:, None]
    if mdp.sink is not None:
        logpi[mdp.sink] = -np.inf
        logpi[mdp.sink, 0] = 0.0
    return V, logpi


def soft_values(mdp, reward):
    """Soft state values and log-policy.

    Returns ``(V, logpi)``; finite horizon gives V of shape (T+1, S) and
    logpi of shape (T, S, A), infinite horizon gives (S,) and (S, A).
    """
    r = _check_reward(reward)
    if mdp.infinite:
        return _soft_stationary(mdp, r)
    return _soft_backward(mdp.transition, r, int(mdp.horizon), mdp.sink_index)


def soft_value_iteration(mdp, reward):
    """Maximum-causal-entropy policy Pr(a|s) = exp(Q_soft(s,a) - V_soft(s)).

    Entries are strictly positive everywhere except in the sink state, whose
    only action is the no-op.
    """
    _, logpi = soft_values(mdp, reward)
    return Policy(np.exp(logpi))
