"""Onion pick-inspect-place domain with a symbolic camera.

States factor as quality x position x gripper (27) plus an absorbing sink
entered by a releasing action.  Observations are 20 gripper-blob regions
plus bright/dark onion blobs.
"""
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from ..mdp import FiniteMdp, RewardModel, Trajectory, plan
from ..obsmodel import ObservationLog, ObservationVocabulary, TrajectoryObservations

QUALITIES = ("unknown", "good", "blemished")
POSITIONS = ("on_conveyor", "gripped", "in_bin")
GRIPPER = ("conveyor", "bin", "inspection")
ACTIONS = ("grip", "release", "inspect", "move_conveyor", "move_inspection", "move_bin")
GRIP, RELEASE, INSPECT, TO_CONVEYOR, TO_INSPECTION, TO_BIN = range(6)
FEATURES = ("good_in_bin", "good_on_conveyor", "blemished_in_bin", "blemished_on_conveyor")
TRUE_WEIGHTS = (-1.0, 1.0, 1.0, -1.0)
ELEMENTS = ("blue_shirt", "foreground_person", "other_onions")
N_REGIONS = 20
BRIGHT, DARK = N_REGIONS, N_REGIONS + 1
SINK = 27
N_STATES = 28


def encode(q, p, g):
    return q * 9 + p * 3 + g


def decode(s):
    if s == SINK:
        return None
    q, rest = divmod(int(s), 9)
    p, g = divmod(rest, 3)
    return q, p, g


def state_name(s):
    d = decode(s)
    if d is None:
        return "sorted"
    return f"{QUALITIES[d[0]]}/{POSITIONS[d[1]]}/{GRIPPER[d[2]]}"


@dataclass
class OnionSpec:
    horizon: int = 6
    inspect_good_probability: float = 0.5
    obs_gripper: int = 6
    obs_onion: int = 4
    region_hit: float = 0.8
    bright_good: float = 0.9
    bright_blemished: float = 0.55
    bright_blemished_inspected: float = 0.3
    shirt_obs: int = 3
    other_onion_obs: int = 2
    other_onion_bright: float = 0.6
    occlusion_probability: float = 0.5
    foreground_obs: int = 4
    mirror_enabled: bool = True
    mirror_probability: float = 0.5
    eta: str = "plausible"
    subject_blob: tuple = (6.0, 2.0)
    shirt_blob: tuple = (2.0, 4.0)
    blob_size_accuracy: float = 0.8
    start_quality: str = "random"
    start_gripper: str = "conveyor"

    def __post_init__(self):
        if self.eta not in ("plausible", "uniform"):
            raise InvalidInputError("onion eta must be 'plausible' or 'uniform'")
        if self.horizon < 5:
            raise InvalidInputError("a full sort needs at least 5 steps")
        if self.start_quality not in ("random", "good", "blemished"):
            raise InvalidInputError("start_quality must be random, good or blemished")
        if self.start_gripper not in GRIPPER + ("random",):
            raise InvalidInputError(f"start_gripper must be one of {GRIPPER + ('random',)}")


def _next_state(s, a):
    """Deterministic successor for every action except inspecting an unknown onion."""
    q, p, g = decode(s)
    if a == GRIP and p == 0 and g == 0:
        return encode(q, 1, g)
    if a == RELEASE and p == 1 and g in (0, 1):
        return SINK
    if a == TO_CONVEYOR:
        return encode(q, p, 0)
    if a == TO_BIN:
        return encode(q, p, 1)
    if a == TO_INSPECTION:
        return encode(q, p, 2)
    return s


def release_outcome(s):
    """(quality, position, gripper) an onion ends up in when released from ``s``."""
    q, p, g = decode(s)
    if p == 1 and g in (0, 1):
        return q, 2 if g == 1 else 0, g
    return q, p, g


def inspects(s, a):
    d = decode(s)
    return d is not None and a == INSPECT and d[0] == 0 and d[1] == 1 and d[2] == 2


def build_onion_mdp(spec=None):
    """Onion MDP and the true reward (blemished to the bin, good back on the conveyor)."""
    spec = spec or OnionSpec()
    S, A = N_STATES, len(ACTIONS)
    P = np.zeros((S, A, S))
    terminal = np.zeros((S, A), dtype=bool)
    phi = np.zeros((S, A, len(FEATURES)))
    for s in range(27):
        q, p, g = decode(s)
        for a in range(A):
            if inspects(s, a):
                P[s, a, encode(1, p, g)] = spec.inspect_good_probability
                P[s, a, encode(2, p, g)] = 1.0 - spec.inspect_good_probability
                continue
            nxt = _next_state(s, a)
            P[s, a, nxt] = 1.0
            if nxt == SINK:
                terminal[s, a] = True
                if q > 0:
                    k = (0 if q == 1 else 2) + (1 if g == 0 else 0)
                    phi[s, a, k] = 1.0
    P[SINK, :, SINK] = 1.0
    start = np.zeros(S)
    # an unknown onion on the conveyor; with the gripper starting at inspection a
    # good onion's first move would emit exactly like a gripped good onion's
    grippers = range(3) if spec.start_gripper == "random" else [GRIPPER.index(spec.start_gripper)]
    for g in grippers:
        start[encode(0, 0, g)] = 1.0 / len(grippers)
    mdp = FiniteMdp(P, start, spec.horizon, terminal=terminal, sink=SINK,
                    state_names=tuple(state_name(s) for s in range(S)), action_names=ACTIONS)
    return mdp, RewardModel(phi, np.array(TRUE_WEIGHTS))


def expert_policy(mdp, reward):
    """Optimal policy that finishes a sort as early as possible.

    A tiny per-step cost only breaks ties among optimal action sequences;
    values under the true reward are those of ``solve_optimal``.
    """
    r = reward.reward() - 1e-4
    r[SINK] = 0.0
    return plan(mdp, r)[1]


def vocabulary():
    return ObservationVocabulary(tuple(f"region_{i:02d}" for i in range(N_REGIONS)) + ("bright_onion", "dark_onion"))


def gripper_region(s, a):
    if s == SINK:
        return 18
    return decode(s)[2] * 6 + a


def region_law(center, hit):
    law = np.zeros(N_REGIONS + 2)
    law[center % N_REGIONS] += hit
    law[(center - 1) % N_REGIONS] += (1 - hit) / 2
    law[(center + 1) % N_REGIONS] += (1 - hit) / 2
    return law


def onion_bright(spec, quality, s):
    """Probability that a subject onion blob reads bright, given the true quality."""
    if quality == 1:
        return spec.bright_good
    d = decode(s)
    if d is not None and d[1] == 1 and d[2] == 2:
        return spec.bright_blemished_inspected
    return spec.bright_blemished


def _eta_rows(kind, rng, spec, size):
    if spec.eta == "uniform":
        return np.full((size, 4), 0.25)
    eta = np.zeros((size, 4))
    if kind in ("subject_region", "shirt_region", "foreground_region"):
        a, b = spec.subject_blob if kind == "subject_region" else spec.shirt_blob
        u = rng.beta(a, b, size=size)
        eta[:, 0], eta[:, 1] = u, 1 - u
        return eta
    if kind == "proximal":
        eta[:] = (0.8, 0.0, 0.1, 0.1)
        return eta
    # blob away from any gripper: small blobs point at other onions, large at the person
    large = rng.random(size) < (spec.blob_size_accuracy if kind == "foreground_onion" else 1 - spec.blob_size_accuracy)
    eta[~large] = np.array([0.1, 0.0, 0.25, 0.6]) / 0.95
    eta[large] = np.array([0.1, 0.0, 0.6, 0.25]) / 0.95
    return eta


def _quality_sequence(spec, n, rng):
    first = {"good": 1, "blemished": 2}.get(spec.start_quality)
    if first is None:
        first = 1 + int(rng.integers(2))
    return [first if i % 2 == 0 else 3 - first for i in range(n)]


def rollout_expert(mdp, policy, quality, rng):
    """One sort; the hidden quality decides what inspection reveals."""
    T = mdp.horizon
    states = np.empty(T, dtype=int)
    actions = np.empty(T, dtype=int)
    s = int(rng.choice(mdp.n_states, p=mdp.start))
    for t in range(T):
        a = int(policy.greedy_actions()[t, s])
        states[t], actions[t] = s, a
        if inspects(s, a):
            q, p, g = decode(s)
            s = encode(quality, p, g)
        else:
            s = int(np.argmax(mdp.transition[s, a]))
    return Trajectory(states, actions)


def _subject_symbols(spec, rng, s, a, quality, with_onion=True):
    regions = rng.choice(N_REGIONS + 2, size=spec.obs_gripper, p=region_law(gripper_region(s, a), spec.region_hit))
    onion = np.zeros(0, dtype=int)
    if with_onion and s != SINK:
        pb = onion_bright(spec, quality, s)
        onion = np.where(rng.random(spec.obs_onion) < pb, BRIGHT, DARK)
    return regions, onion


def _direct_and_mirror(spec, rng, s, a, quality):
    regions, onion = _subject_symbols(spec, rng, s, a, quality)
    mirror = np.zeros(0, dtype=int)
    if spec.mirror_enabled and s != SINK and rng.random() < spec.mirror_probability:
        mirror = _subject_symbols(spec, rng, s, a, quality)[1][:1]
    return regions, onion, mirror


def simulate_onion_demo(spec, seed, n_trajectories):
    """Expert sorts with a partially controlled log and a fully controlled log.

    Returns ``(trajectories, qualities, log, controlled_log)``.  The
    controlled log has no confounders and no occlusion; it carries mirror
    symbols only when ``spec.mirror_enabled``.
    """
    if n_trajectories < 1:
        raise InvalidInputError("need at least one trajectory")
    rng = np.random.default_rng(seed)
    mdp, reward = build_onion_mdp(spec)
    expert = expert_policy(mdp, reward)
    qualities = _quality_sequence(spec, n_trajectories, rng)
    trajs = [rollout_expert(mdp, expert, q, rng) for q in qualities]
    vocab = vocabulary()
    partial, controlled = [], []
    for traj, quality in zip(trajs, qualities):
        T = len(traj)
        occluded = np.zeros(T, dtype=bool)
        if rng.random() < spec.occlusion_probability:
            width = int(rng.integers(1, 3))
            first = int(rng.integers(0, T - width + 1))
            occluded[first:first + width] = True
        region = int(rng.integers(N_REGIONS))
        c_rows, p_rows = [], []
        for t, (s, a) in enumerate(traj.steps):
            c_rows.append((t, np.concatenate(_direct_and_mirror(spec, rng, s, a, quality)), None, None))
            regions, onion, mirror = _direct_and_mirror(spec, rng, s, a, quality)
            items = []
            if not occluded[t]:
                items.append((regions, 0, "subject_region"))
                items.append((onion, 0, "proximal"))
            items.append((mirror, 0, "proximal"))
            region = (region + int(rng.integers(-1, 2))) % N_REGIONS
            shirt = rng.choice(N_REGIONS + 2, size=spec.shirt_obs, p=region_law(region, spec.region_hit))
            items.append((shirt, 1, "shirt_region"))
            if occluded[t]:
                kinds = rng.random(spec.foreground_obs) < 0.5
                fg = np.where(kinds, rng.integers(N_REGIONS, size=spec.foreground_obs),
                              np.where(rng.random(spec.foreground_obs) < 0.3, BRIGHT, DARK))
                items.append((fg[kinds], 2, "foreground_region"))
                items.append((fg[~kinds], 2, "foreground_onion"))
            others = np.where(rng.random(spec.other_onion_obs) < spec.other_onion_bright, BRIGHT, DARK)
            items.append((others, 3, "other_onion"))
            omega = np.concatenate([it[0] for it in items]).astype(int)
            src = np.concatenate([np.full(len(it[0]), it[1]) for it in items]).astype(int)
            eta = np.concatenate([_eta_rows(it[2], rng, spec, len(it[0])) for it in items])
            p_rows.append((t, omega, eta, src))
        partial.append(_assemble(T, p_rows, 4))
        controlled.append(_assemble(T, c_rows, 1))
    meta = {"domain": "onion", **asdict(spec)}
    meta["subject_blob"] = list(spec.subject_blob)
    meta["shirt_blob"] = list(spec.shirt_blob)
    log = ObservationLog(partial, vocab, ELEMENTS, meta)
    clog = ObservationLog(controlled, vocab, (), dict(meta, controlled=True))
    return trajs, qualities, log, clog


def _assemble(T, rows, k):
    omega = np.concatenate([r[1] for r in rows]).astype(int)
    step = np.concatenate([np.full(len(r[1]), r[0]) for r in rows]).astype(int)
    if k == 1:
        eta = np.ones((len(omega), 1))
        src = np.zeros(len(omega), dtype=int)
    else:
        eta = np.concatenate([r[2] for r in rows])
        src = np.concatenate([r[3] for r in rows])
    return TrajectoryObservations(T, omega, eta, step, src)
