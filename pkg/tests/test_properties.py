"""Property-based checks of the cross-module invariants."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_features, random_mdp
from hbirl.domains.gridworld import apportion
from hbirl.maxent import FitOptions, empirical_feature_expectations, expected_feature_counts, fit_weights
from hbirl.mdp import Policy, Trajectory, ile, soft_value_iteration, solve_optimal
from hbirl.obsmodel import (
    DirichletObsModel,
    ObservationLog,
    ObservationVocabulary,
    TrajectoryObservations,
    blend_alpha,
    fit_alpha,
)
from hbirl.oracle import enumerate_trajectories, exact_posterior, total_variation
from hbirl.sampler import (
    TrajectoryPosterior,
    accumulate_alpha_dot,
    build_problem,
    initialize_chain,
    run_chain,
    soft_log_policy,
)

seeds = st.integers(0, 2**31 - 1)


@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 5))
def test_soft_policy_rows_normalised_and_positive(seed, S, A, T):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, S, A, T)
    reward = random_features(rng, S, A, 2)
    table = soft_value_iteration(mdp, reward).table(T)
    assert np.all(np.abs(table.sum(axis=-1) - 1.0) <= 1e-9)
    assert np.all(table > 0)


@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 5))
def test_ile_nonnegative_and_zero_on_self(seed, S, A, T):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, S, A, T, positive=bool(seed % 2))
    reward = random_features(rng, S, A, 2)
    _, expert = solve_optimal(mdp, reward)
    other = Policy(rng.dirichlet(np.ones(A), size=S))
    assert ile(mdp, reward, expert, other) >= 0.0
    assert ile(mdp, reward, expert, expert) == 0.0


def _sample_trajs(rng, mdp, policy, n):
    out = []
    for _ in range(n):
        s = rng.choice(mdp.n_states, p=mdp.start)
        states, actions = [], []
        for t in range(mdp.horizon):
            a = rng.choice(mdp.n_actions, p=policy.at(t)[s])
            states.append(s)
            actions.append(a)
            s = rng.choice(mdp.n_states, p=mdp.transition[s, a])
        out.append(Trajectory(states, actions))
    return out


@settings(max_examples=10)
@given(seeds)
def test_fit_is_invariant_to_trajectory_order(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 3, 2, 3)
    reward = random_features(rng, 3, 2, 2)
    trajs = _sample_trajs(rng, mdp, soft_value_iteration(mdp, reward), 8)
    perm = [trajs[i] for i in rng.permutation(len(trajs))]
    opts = FitOptions(max_iters=3000)
    a = fit_weights(mdp, reward, empirical_feature_expectations(trajs, reward), opts, theta0=np.zeros(2))
    b = fit_weights(mdp, reward, empirical_feature_expectations(perm, reward), opts, theta0=np.zeros(2))
    pa = soft_value_iteration(mdp, reward.with_weights(a.theta)).table(3)
    pb = soft_value_iteration(mdp, reward.with_weights(b.theta)).table(3)
    assert 0.5 * np.abs(pa - pb).sum(axis=-1).max() <= 1e-6


@settings(max_examples=10)
@given(seeds)
def test_feature_matching_at_convergence(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 3, 2, 4)
    reward = random_features(rng, 3, 2, 2)
    target = expected_feature_counts(mdp, soft_value_iteration(mdp, reward), reward).values
    opts = FitOptions(regularization=0.0, tolerance=1e-6, max_iters=20000)
    fit = fit_weights(mdp, reward, target, opts, theta0=np.zeros(2))
    got = expected_feature_counts(mdp, soft_value_iteration(mdp, reward.with_weights(fit.theta)), reward).values
    assert fit.converged
    assert np.max(np.abs(got - target)) <= opts.tolerance


alphas = st.integers(1, 4).flatmap(lambda w: st.lists(
    st.lists(st.floats(0.0, 50.0), min_size=w, max_size=w), min_size=1, max_size=4))


@given(alphas, alphas.map(lambda x: x), st.floats(0.01, 0.99))
def test_means_normalised_and_blend_nonnegative(a, b, c):
    a = np.array(a)
    model = DirichletObsModel(a[None, :, :], a)
    assert np.allclose(model.subject_mean.sum(axis=-1), 1.0, atol=1e-12)
    assert np.allclose(model.confounder_mean.sum(axis=-1), 1.0, atol=1e-12)
    b = np.array(b)
    if b.shape == a.shape:
        assert np.all(blend_alpha(a, b, c) >= 0)


@given(seeds, st.integers(1, 3))
def test_emission_multiplexer_structure(seed, E):
    rng = np.random.default_rng(seed)
    model = DirichletObsModel(rng.gamma(1.0, size=(3, 2, 4)), rng.gamma(1.0, size=(E, 4)))
    for z in range(1, E + 1):
        rows = {model.emission(z, s, a).tobytes() for s in range(3) for a in range(2)}
        assert len(rows) == 1
    for s in range(3):
        for a in range(2):
            assert np.array_equal(model.emission(0, s, a), model.subject_mean[s, a])


def _random_log(rng, n, T, W, k=1):
    trajs, bags = [], []
    for _ in range(n):
        trajs.append(Trajectory(rng.integers(2, size=T), rng.integers(2, size=T)))
        step = np.sort(rng.integers(T, size=rng.integers(0, 8)))
        bags.append(TrajectoryObservations(T, rng.integers(W, size=len(step)),
                                           rng.dirichlet(np.ones(k), size=len(step)), step))
    vocab = ObservationVocabulary(tuple(f"w{i}" for i in range(W)))
    return trajs, ObservationLog(bags, vocab, tuple(f"e{i}" for i in range(k - 1)))


@given(seeds)
def test_fit_alpha_order_invariant(seed):
    rng = np.random.default_rng(seed)
    trajs, log = _random_log(rng, 5, 3, 3)
    perm = rng.permutation(5)
    log2 = log.with_trajectories([log.trajectories[i] for i in perm])
    a = fit_alpha(trajs, log, 2, 2)
    b = fit_alpha([trajs[i] for i in perm], log2, 2, 2)
    assert np.allclose(a, b, rtol=0, atol=1e-12)


@given(st.integers(0, 200), st.integers(1, 15))
def test_apportionment_fair(total, n):
    c = apportion(total, n)
    assert c.sum() == total and c.max() - c.min() <= 1


@given(seeds, st.integers(1, 3))
def test_alpha_dot_conserves_label_mass(seed, k):
    rng = np.random.default_rng(seed)
    _, log = _random_log(rng, 3, 3, 3, k)
    posts = []
    for obs in log.trajectories:
        marg = rng.dirichlet(np.ones(4), size=3).reshape(3, 2, 2)
        labels = rng.dirichlet(np.ones(k), size=len(obs))
        posts.append(TrajectoryPosterior(marg, np.zeros((2, 2, 2, 2)), labels, 1))
    subj, conf = accumulate_alpha_dot(posts, log, 2, 2)
    assert abs(subj.sum() + conf.sum() - log.total_observations) <= 1e-6


@settings(max_examples=6)
@given(seeds, st.sampled_from([(2, 2), (3, 2), (2, 3), (6, 1)]), st.integers(1, 3))
def test_sampler_matches_enumeration_on_small_instances(seed, shape, T):
    S, A = shape
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, S, A, T)
    reward = random_features(rng, S, A, 2)
    model = DirichletObsModel(rng.dirichlet(np.ones(3), size=(S, A)) * 4.0, rng.dirichlet(np.ones(3), size=1) * 4.0)
    step = np.repeat(np.arange(T), rng.integers(0, 4, size=T))
    obs = TrajectoryObservations(T, rng.integers(3, size=len(step)), rng.dirichlet(np.ones(2), size=len(step)),
                                 step)
    logpi = soft_log_policy(mdp, reward, reward.weights)
    exact = exact_posterior(mdp, logpi, model, obs)
    prob = build_problem(mdp, logpi, model, obs)
    chain = initialize_chain(prob, np.random.default_rng(seed))
    post, _, _ = run_chain(prob, chain, 20000, 2000, 1, seed, "gibbs")
    for t in range(T):
        assert total_variation(post.marginals[t], exact.marginals[t]) <= 0.05
    if len(obs):
        assert 0.5 * np.abs(post.labels - exact.labels).sum(axis=1).max() <= 0.05


@settings(max_examples=10)
@given(seeds)
def test_enumeration_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 3, 2, 3, positive=bool(seed % 2))
    reward = random_features(rng, 3, 2, 1)
    paths = enumerate_trajectories(mdp, soft_log_policy(mdp, reward, reward.weights))
    assert abs(np.exp([lp for _, _, lp in paths]).sum() - 1.0) <= 1e-9
