"""Brute-force enumeration oracles for tiny instances.

Everything here is exponential in the horizon and meant for tests and the
``oracle`` CLI command only.
"""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mdp import FiniteMdp, RewardModel, Trajectory
from .obsmodel import DirichletObsModel, ObservationLog, ObservationVocabulary, TrajectoryObservations


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def enumerate_trajectories(mdp, logpi):
    """All (states, actions, log Pr(X)) with positive probability under ``logpi`` (T, S, A).

    Depth-first over the lattice, pruning zero-probability branches, so
    sparse kernels stay cheap.
    """
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    logP = mdp.log_transition
    out = []
    stack = [((s,), (), mdp.log_start[s]) for s in range(S - 1, -1, -1) if mdp.log_start[s] > -np.inf]
    while stack:
        states, actions, lp = stack.pop()
        t = len(actions)
        s = states[-1]
        for a in range(A - 1, -1, -1):
            la = lp + logpi[t, s, a]
            if la == -np.inf:
                continue
            if t == T - 1:
                out.append((np.array(states), np.array(actions + (a,)), la))
                continue
            for s2 in range(S - 1, -1, -1):
                if logP[s, a, s2] > -np.inf:
                    stack.append((states + (s2,), actions + (a,), la + logP[s, a, s2]))
    return out


def expected_features_enumeration(mdp, policy, reward):
    """sum_X Pr(X) sum_t phi(s_t, a_t) by listing every trajectory."""
    logpi = _log(policy.table(mdp.horizon))
    total = np.zeros(reward.num_features)
    for states, actions, lp in enumerate_trajectories(mdp, logpi):
        total += np.exp(lp) * reward.features[states, actions].sum(axis=0)
    return total


@dataclass(eq=False)
class ExactPosterior:
    marginals: np.ndarray
    labels: np.ndarray
    paths: dict
    log_evidence: float


def exact_posterior(mdp, logpi, obs_model, observations):
    """Exact Pr(X | omega, eta) and Pr(Z_n | omega, eta).

    Sums over every joint (X, Z) assignment; for a fixed X the labels are
    independent across observations, so their sum is taken per observation.
    """
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    O_s = obs_model.subject_mean
    O_c = obs_model.confounder_mean
    eta = observations.eta
    omega = observations.omega
    steps = observations.step
    trajs = enumerate_trajectories(mdp, logpi)
    logw = np.empty(len(trajs))
    label_given_x = []
    for i, (states, actions, lp) in enumerate(trajs):
        n = len(omega)
        # unnormalised Pr(Z_n = z, omega_n | X)
        joint = np.empty((n, eta.shape[1]))
        joint[:, 0] = eta[:, 0] * O_s[states[steps], actions[steps], omega]
        if eta.shape[1] > 1:
            joint[:, 1:] = eta[:, 1:] * O_c[:, omega].T
        tot = joint.sum(axis=1)
        logw[i] = lp + np.sum(np.log(tot))
        label_given_x.append(joint / tot[:, None])
    ev = logsumexp(logw)
    w = np.exp(logw - ev)
    marg = np.zeros((T, S, A))
    labels = np.zeros(eta.shape)
    paths = {}
    for wi, (states, actions, _), lab in zip(w, trajs, label_given_x):
        marg[np.arange(T), states, actions] += wi
        labels += wi * lab
        paths[tuple(zip(states.tolist(), actions.tolist()))] = wi
    return ExactPosterior(marg, labels, paths, float(ev))


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def path_total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def best_return_enumeration(mdp, reward, state):
    """Max expected return from ``state`` over every open-loop action sequence.

    Equals the optimal value when the kernel is deterministic.
    """
    r = reward.reward()
    best = -np.inf
    for actions in itertools.product(range(mdp.n_actions), repeat=mdp.horizon):
        d = np.zeros(mdp.n_states)
        d[state] = 1.0
        ret = 0.0
        for a in actions:
            ret += d @ r[:, a]
            d = d @ mdp.transition[:, a, :]
        best = max(best, ret)
    return best


# ------------------------------------------------------------- tiny instances


def tiny_instance(seed=0, n_obs=(2, 3, 1), n_elements=1, n_symbols=3, horizon=3):
    """2-state, 2-action MDP with a strictly positive kernel and a short log."""
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(2) * 2.0, size=(2, 2))
    mdp = FiniteMdp(P, np.array([0.6, 0.4]), horizon)
    phi = np.zeros((2, 2, 2))
    phi[1, :, 0] = 1.0
    phi[:, 1, 1] = 1.0
    reward = RewardModel(phi, rng.normal(size=2))
    subj = rng.dirichlet(np.ones(n_symbols), size=(2, 2)) * 5.0
    conf = rng.dirichlet(np.ones(n_symbols), size=n_elements) * 5.0
    model = DirichletObsModel(subj, conf)
    traj = _tiny_log(rng, n_obs, n_elements, n_symbols, horizon)
    vocab = ObservationVocabulary(tuple(f"w{i}" for i in range(n_symbols)))
    log = ObservationLog([traj], vocab, tuple(f"e{i}" for i in range(n_elements)))
    return mdp, reward, model, log


def _tiny_log(rng, n_obs, n_elements, n_symbols, horizon):
    n_obs = list(n_obs)[:horizon] + [0] * max(0, horizon - len(n_obs))
    step = np.repeat(np.arange(horizon), n_obs)
    omega = rng.integers(n_symbols, size=len(step))
    eta = rng.dirichlet(np.ones(1 + n_elements), size=len(step))
    return TrajectoryObservations(horizon, omega, eta, step)


def deterministic_instance(seed=0, n_obs=(2, 2, 2), n_elements=1, n_symbols=3, horizon=3):
    """3-state ring with deterministic moves (stay, forward) and a short log."""
    rng = np.random.default_rng(seed)
    P = np.zeros((3, 2, 3))
    for s in range(3):
        P[s, 0, s] = 1.0
        P[s, 1, (s + 1) % 3] = 1.0
    mdp = FiniteMdp(P, np.array([0.5, 0.3, 0.2]), horizon)
    phi = np.zeros((3, 2, 3))
    for s in range(3):
        phi[s, :, s] = 1.0
    reward = RewardModel(phi, rng.normal(size=3))
    subj = rng.dirichlet(np.ones(n_symbols) * 0.7, size=(3, 2)) * 5.0
    conf = rng.dirichlet(np.ones(n_symbols), size=n_elements) * 5.0
    model = DirichletObsModel(subj, conf)
    traj = _tiny_log(rng, n_obs, n_elements, n_symbols, horizon)
    vocab = ObservationVocabulary(tuple(f"w{i}" for i in range(n_symbols)))
    log = ObservationLog([traj], vocab, tuple(f"e{i}" for i in range(n_elements)))
    return mdp, reward, model, log


def sampler_oracle_check(kind="stochastic", seed=0, samples=20000, burn_in=2000, sample_seed=1):
    """Compare MCMC marginals with exact enumeration on a tiny instance.

    Returns a dict with the worst per-timestep (s, a) total variation, the
    worst per-observation label total variation and the path-level TV.
    """
    from .sampler import build_problem, initialize_chain, run_chain, soft_log_policy

    if kind == "stochastic":
        mdp, reward, model, log = tiny_instance(seed)
        sweep = "gibbs"
    else:
        mdp, reward, model, log = deterministic_instance(seed)
        sweep = "whole"
    logpi = soft_log_policy(mdp, reward, reward.weights)
    obs = log.trajectories[0]
    exact = exact_posterior(mdp, logpi, model, obs)
    prob = build_problem(mdp, logpi, model, obs)
    chain = initialize_chain(prob, np.random.default_rng(sample_seed))
    post, acc, hist = run_chain(prob, chain, samples, burn_in, 1, sample_seed, sweep, record=True)
    from .sampler import estimate_posteriors

    full = estimate_posteriors(hist, burn_in)
    tv_steps = max(total_variation(post.marginals[t], exact.marginals[t]) for t in range(mdp.horizon))
    tv_labels = max(total_variation(post.labels[n], exact.labels[n]) for n in range(len(obs)))
    return {
        "kind": kind,
        "tv_marginals": tv_steps,
        "tv_labels": tv_labels,
        "tv_paths": path_total_variation(full.paths, exact.paths),
        "acceptance": acc,
    }


def trajectory_from_key(key):
    states, actions = zip(*key)
    return Trajectory(np.array(states), np.array(actions))
