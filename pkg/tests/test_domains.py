import numpy as np
import pytest

from hbirl.domains.baselines import consistency_audit, ml_observations, ml_trajectories, purity_recall
from hbirl.domains.gridworld import (
    GridworldSpec,
    apportion,
    build_gridworld,
    make_eta,
    simulate_gridworld_demo,
    subject_emission,
)
from hbirl.domains.onion import (
    ACTIONS,
    FEATURES,
    GRIP,
    INSPECT,
    RELEASE,
    SINK,
    TO_BIN,
    TO_CONVEYOR,
    TO_INSPECTION,
    OnionSpec,
    build_onion_mdp,
    decode,
    encode,
    expert_policy,
    rollout_expert,
    simulate_onion_demo,
)
from hbirl.errors import InvalidInputError
from hbirl.mdp import evaluate_policy, solve_optimal
from hbirl.obsmodel import DirichletObsModel, ObservationLog, TrajectoryObservations, fit_alpha

# ----------------------------------------------------------------- gridworld


def test_emission_closed_form():
    spec = GridworldSpec()
    law = subject_emission(spec)
    n = spec.size
    for s in range(n * n):
        r, c = divmod(s, n)
        d = np.array([abs(r - cr) + abs(c - cc) for cr, cc in spec.corners], dtype=float)
        expect = np.exp(-d) / np.exp(-d).sum()
        assert np.allclose(law[s], expect, atol=1e-15)


def test_emission_corner_and_center():
    spec = GridworldSpec()
    law = subject_emission(spec)
    for k, (r, c) in enumerate(spec.corners):
        row = law[r * 5 + c]
        assert np.argmax(row) == k and np.sum(row == row.max()) == 1
    assert np.allclose(law[12], 0.25)


def test_emission_simulation_frequencies():
    spec = GridworldSpec()
    law = subject_emission(spec)
    # fixed seed: each row exceeds 3 standard errors somewhere about 0.8% of the time
    rng = np.random.default_rng(1)
    n = 10000
    for s in (0, 7, 12, 24):
        freq = np.bincount(rng.choice(4, size=n, p=law[s]), minlength=4) / n
        se = np.sqrt(law[s] * (1 - law[s]) / n)
        assert np.all(np.abs(freq - law[s]) <= 3 * se + 1e-12)


def test_gridworld_structure():
    spec = GridworldSpec(goal_corner=1, slip_probability=0.1, num_elements=2)
    model = build_gridworld(spec, np.random.default_rng(0))
    mdp, reward, subj, elem = model
    assert mdp.n_states == 25 and mdp.n_actions == 4
    assert np.allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.array_equal(reward.weights, [0, 1, 0, 0])
    # corner features are action independent
    assert np.all(reward.features[4, :, 1] == 1) and reward.features.sum() == 16
    assert subj.shape == (25, 4, 4) and np.allclose(subj[:, 0], subj[:, 3])
    assert elem.shape == (2, 4) and np.allclose(elem.sum(axis=1), 1.0)
    # start at the corner opposite the goal
    assert mdp.start[20] == 1.0


def test_slip_mass_goes_to_perpendicular_moves():
    model = build_gridworld(GridworldSpec(slip_probability=0.2, slip="perpendicular"), 0)
    P = model.mdp.transition
    s = 12
    assert P[s, 0, 7] == pytest.approx(0.8)
    assert P[s, 0, 13] == pytest.approx(0.1) and P[s, 0, 11] == pytest.approx(0.1)


@pytest.mark.parametrize("total,n", [(40, 1), (40, 4), (40, 7), (3, 5), (0, 3)])
def test_apportionment(total, n):
    counts = apportion(total, n)
    assert counts.sum() == total
    assert counts.max() - counts.min() <= 1
    assert np.all(np.diff(counts) <= 0)


def test_apportion_examples():
    assert apportion(40, 1).tolist() == [40]
    assert apportion(40, 4).tolist() == [10, 10, 10, 10]


def test_log_counts_per_source():
    spec = GridworldSpec(num_elements=3, num_trajectories=2)
    _, _, log = simulate_gridworld_demo(spec, 0)
    for obs in log.trajectories:
        for t in range(obs.n_steps):
            src = obs.source[obs.step == t]
            assert np.bincount(src, minlength=4).tolist() == [10, 10, 10, 10]


def test_no_elements_all_subject():
    _, _, log = simulate_gridworld_demo(GridworldSpec(num_trajectories=2), 0)
    for obs in log.trajectories:
        assert len(obs) == 400 and np.all(obs.source == 0) and obs.eta.shape[1] == 1


def test_plausible_eta_hit_rate():
    rng = np.random.default_rng(0)
    src = rng.integers(4, size=20000)
    eta = make_eta(src, 4, "plausible", rng)
    assert np.allclose(eta.sum(axis=1), 1.0)
    hit = np.mean(eta[np.arange(len(src)), src] == 0.6)
    assert abs(hit - 0.8) <= 0.03


def test_eta_variants():
    rng = np.random.default_rng(1)
    src = np.array([0, 2, 1])
    assert np.allclose(make_eta(src, 3, "uniform", rng), 1 / 3)
    assert np.array_equal(make_eta(src, 3, "oracle", rng).argmax(axis=1), src)
    assert np.all(make_eta(src, 1, "plausible", rng) == 1.0)


def test_gridworld_spec_validation():
    with pytest.raises(InvalidInputError):
        GridworldSpec(goal_corner=4)
    with pytest.raises(InvalidInputError):
        GridworldSpec(eta="sometimes")


def test_gridworld_seed_determinism():
    a = simulate_gridworld_demo(GridworldSpec(num_elements=2, num_trajectories=3), 5)
    b = simulate_gridworld_demo(GridworldSpec(num_elements=2, num_trajectories=3), 5)
    for x, y in zip(a[2].trajectories, b[2].trajectories):
        assert np.array_equal(x.omega, y.omega) and x.eta.tobytes() == y.eta.tobytes()
    assert all(np.array_equal(x.states, y.states) for x, y in zip(a[1], b[1]))


def test_expert_reaches_goal():
    spec = GridworldSpec(goal_corner=0)
    model, trajs, _ = simulate_gridworld_demo(spec, 0)
    for tr in trajs:
        assert tr.states[0] == 24
        assert tr.states[-1] == 0


# --------------------------------------------------------------------- onion


def _step(P, s, a):
    row = P[s, a]
    assert row.max() == 1.0
    return int(np.argmax(row))


def test_onion_shapes_and_determinism():
    mdp, reward = build_onion_mdp()
    assert mdp.n_states == 28 and mdp.n_actions == 6 and len(FEATURES) == 4
    assert len(ACTIONS) == 6
    P = mdp.transition
    assert np.allclose(P.sum(axis=2), 1.0)
    stochastic = [(s, a) for s in range(28) for a in range(6) if P[s, a].max() < 1.0]
    # the only branching transition is inspecting an unknown, gripped onion
    assert stochastic == [(encode(0, 1, 2), INSPECT)]


def test_onion_action_table():
    mdp, _ = build_onion_mdp()
    P = mdp.transition
    # grip picks an onion off the conveyor when the gripper is there
    assert _step(P, encode(0, 0, 0), GRIP) == encode(0, 1, 0)
    # grip elsewhere or on a held onion has no effect
    assert _step(P, encode(0, 0, 1), GRIP) == encode(0, 0, 1)
    assert _step(P, encode(1, 1, 0), GRIP) == encode(1, 1, 0)
    # inspect only works at the inspection position
    assert _step(P, encode(0, 1, 0), INSPECT) == encode(0, 1, 0)
    s = encode(0, 1, 2)
    assert P[s, INSPECT, encode(1, 1, 2)] == 0.5 and P[s, INSPECT, encode(2, 1, 2)] == 0.5
    # moves change the gripper position, carrying a held onion along
    assert _step(P, encode(2, 1, 0), TO_INSPECTION) == encode(2, 1, 2)
    assert _step(P, encode(2, 1, 2), TO_BIN) == encode(2, 1, 1)
    assert _step(P, encode(1, 1, 2), TO_CONVEYOR) == encode(1, 1, 0)
    # release ends the episode over the bin or conveyor, not at inspection
    assert _step(P, encode(2, 1, 1), RELEASE) == SINK
    assert _step(P, encode(1, 1, 0), RELEASE) == SINK
    assert _step(P, encode(1, 1, 2), RELEASE) == encode(1, 1, 2)
    assert _step(P, encode(0, 0, 0), RELEASE) == encode(0, 0, 0)
    assert np.all(P[SINK, :, SINK] == 1.0)


def test_onion_release_features():
    mdp, reward = build_onion_mdp()
    phi = reward.features
    assert phi[encode(1, 1, 1), RELEASE, FEATURES.index("good_in_bin")] == 1
    assert phi[encode(1, 1, 0), RELEASE, FEATURES.index("good_on_conveyor")] == 1
    assert phi[encode(2, 1, 1), RELEASE, FEATURES.index("blemished_in_bin")] == 1
    assert phi[encode(2, 1, 0), RELEASE, FEATURES.index("blemished_on_conveyor")] == 1
    assert phi.sum() == 4
    assert reward.weights.tolist() == [-1.0, 1.0, 1.0, -1.0]


@pytest.mark.parametrize("quality,expected", [
    (2, [GRIP, TO_INSPECTION, INSPECT, TO_BIN, RELEASE]),
    (1, [GRIP, TO_INSPECTION, INSPECT, TO_CONVEYOR, RELEASE]),
])
def test_expert_sorts(quality, expected):
    mdp, reward = build_onion_mdp()
    pol = expert_policy(mdp, reward)
    tr = rollout_expert(mdp, pol, quality, np.random.default_rng(0))
    assert decode(tr.states[0]) == (0, 0, 0)
    assert tr.actions[:5].tolist() == expected
    assert tr.states[5] == SINK


def test_expert_policy_is_optimal():
    mdp, reward = build_onion_mdp()
    V, _ = solve_optimal(mdp, reward)
    pol = expert_policy(mdp, reward)
    assert np.allclose(evaluate_policy(mdp, reward, pol), V, atol=1e-9)


def test_onion_vocabulary_and_eta():
    trajs, quals, log, clog = simulate_onion_demo(OnionSpec(), 0, 6)
    assert len(log.vocabulary) == 22
    assert log.element_names == ("blue_shirt", "foreground_person", "other_onions")
    for obs in log.trajectories:
        assert obs.eta.shape[1] == 4
        assert np.allclose(obs.eta.sum(axis=1), 1.0)
        assert np.all(obs.eta >= 0)
    assert sorted(set(quals)) == [1, 2]
    for obs in clog.trajectories:
        assert obs.eta.shape[1] == 1 and np.all(obs.source == 0)


def test_mirror_presence_during_occlusion():
    spec = OnionSpec(occlusion_probability=1.0, mirror_probability=0.5)
    hits = total = 0
    for seed in range(40):
        trajs, _, log, _ = simulate_onion_demo(spec, seed, 2)
        for tr, obs in zip(trajs, log.trajectories):
            for t in range(obs.n_steps):
                at = obs.step == t
                if tr.states[t] == SINK:
                    continue
                subj = obs.source[at] == 0
                if subj.any() and not (obs.omega[at][subj] < 20).any():
                    # occluded: only mirror symbols can come from the subject
                    total += 1
                    hits += 1
                elif not (obs.omega[at][subj] < 20).any():
                    total += 1
    occluded_steps = 0
    with_mirror = 0
    for seed in range(40):
        trajs, _, log, _ = simulate_onion_demo(spec, seed, 2)
        for tr, obs in zip(trajs, log.trajectories):
            for t in range(obs.n_steps):
                at = obs.step == t
                fg = (obs.source[at] == 2).any()
                if fg and tr.states[t] != SINK:
                    occluded_steps += 1
                    with_mirror += int((obs.source[at] == 0).any())
    assert occluded_steps > 50
    assert abs(with_mirror / occluded_steps - 0.5) < 0.12


def test_mirror_disabled_has_no_subject_symbols_when_occluded():
    spec = OnionSpec(occlusion_probability=1.0, mirror_enabled=False)
    for seed in range(5):
        _, _, log, _ = simulate_onion_demo(spec, seed, 2)
        for obs in log.trajectories:
            for t in range(obs.n_steps):
                at = obs.step == t
                if (obs.source[at] == 2).any():
                    assert not (obs.source[at] == 0).any()


def _true_onion_model(spec, n=60):
    mdp, _ = build_onion_mdp(spec)
    trajs, _, _, clog = simulate_onion_demo(spec, 123, n)
    return DirichletObsModel(fit_alpha(trajs, clog, 28, 6), np.zeros((0, 22)))


def test_controlled_decode_recovers_truth():
    # six noisy region symbols per step can, rarely, favour a neighbouring action
    spec = OnionSpec()
    model = _true_onion_model(spec)
    wrong_steps = steps = exact = total = 0
    for seed in range(40):
        trajs, _, _, clog = simulate_onion_demo(spec, seed, 4)
        for tr, dec in zip(trajs, ml_trajectories(model, clog)):
            live = tr.states != SINK
            err = (dec.states[live] != tr.states[live]) | (dec.actions[live] != tr.actions[live])
            wrong_steps += int(err.sum())
            steps += int(live.sum())
            exact += int(not err.any())
            total += 1
    assert wrong_steps / steps < 0.01
    assert exact / total >= 0.95


def test_partial_log_decodes_inconsistently():
    spec = OnionSpec()
    mdp, _ = build_onion_mdp(spec)
    model = _true_onion_model(spec)
    bad = total = 0
    for seed in range(10):
        _, _, log, _ = simulate_onion_demo(spec, seed, 4)
        counts = consistency_audit(ml_trajectories(model, log), mdp)
        bad += sum(c > 0 for c in counts)
        total += len(counts)
    assert bad > total / 2


def test_ml_trajectories_single_sharp_observation():
    subj = np.full((2, 2, 3), 1.0)
    subj[1, 0, 2] = 50.0
    model = DirichletObsModel(subj, np.zeros((0, 3)))
    obs = TrajectoryObservations(2, [2], np.ones((1, 1)), [0])
    log = ObservationLog([obs], _vocab(3))
    tr = ml_trajectories(model, log)[0]
    assert (tr.states[0], tr.actions[0]) == (1, 0)
    # the empty second step falls back to the lowest index
    assert (tr.states[1], tr.actions[1]) == (0, 0)


def _vocab(n):
    from hbirl.obsmodel import ObservationVocabulary

    return ObservationVocabulary(tuple(f"w{i}" for i in range(n)))


def test_ml_observations_identity_and_empty():
    obs = TrajectoryObservations(2, [0, 1, 2], np.tile([1.0, 0.0], (3, 1)), [0, 0, 1])
    log = ObservationLog([obs], _vocab(3), ("e",))
    kept = ml_observations(log).trajectories[0]
    assert np.array_equal(kept.omega, obs.omega) and np.array_equal(kept.step, obs.step)
    assert kept.eta.shape == (3, 1)
    conf = TrajectoryObservations(2, [0, 1, 2], np.tile([0.0, 1.0], (3, 1)), [0, 0, 1])
    out = ml_observations(ObservationLog([conf], _vocab(3), ("e",)))
    assert len(out.trajectories[0]) == 0 and out.element_names == ()


def test_ml_observations_purity_and_recall():
    for seed in range(3):
        _, _, log = simulate_gridworld_demo(GridworldSpec(num_elements=3, num_trajectories=4), seed)
        keep = [np.argmax(o.eta, axis=1) == 0 for o in log.trajectories]
        purity, recall = purity_recall(log, keep)
        assert 0.0 < purity < 1.0 and 0.0 < recall < 1.0


def test_onion_seed_determinism():
    a = simulate_onion_demo(OnionSpec(), 9, 3)
    b = simulate_onion_demo(OnionSpec(), 9, 3)
    for x, y in zip(a[2].trajectories, b[2].trajectories):
        assert np.array_equal(x.omega, y.omega) and x.eta.tobytes() == y.eta.tobytes()


def test_onion_spec_validation():
    with pytest.raises(InvalidInputError):
        OnionSpec(horizon=4)
    with pytest.raises(InvalidInputError):
        simulate_onion_demo(OnionSpec(), 0, 0)
