"""5x5 Gridworld with corner features and corner-distance observations."""
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from ..mdp import FiniteMdp, Policy, RewardModel, Trajectory, solve_optimal
from ..obsmodel import ObservationLog, ObservationVocabulary, TrajectoryObservations

ACTIONS = ("N", "S", "E", "W")
MOVES = ((-1, 0), (1, 0), (0, 1), (0, -1))
PERPENDICULAR = ((2, 3), (2, 3), (0, 1), (0, 1))
ETA_VARIANTS = ("uniform", "plausible", "oracle")


@dataclass
class GridworldSpec:
    size: int = 5
    goal_corner: int = 3
    slip_probability: float = 0.0
    num_elements: int = 0
    obs_per_timestep: int = 40
    num_trajectories: int = 20
    horizon: int = 10
    eta: str = "plausible"
    plausible_mass: float = 0.6
    plausible_hit_rate: float = 0.8
    start: str = "opposite"
    slip: str = "stay"

    def __post_init__(self):
        if self.goal_corner not in range(4):
            raise InvalidInputError("goal corner must be in 0..3")
        if self.eta not in ETA_VARIANTS:
            raise InvalidInputError(f"eta variant must be one of {ETA_VARIANTS}")
        if self.num_elements < 0 or self.obs_per_timestep < 0 or self.horizon < 1:
            raise InvalidInputError("invalid gridworld sizes")

    @property
    def corners(self):
        n = self.size - 1
        return ((0, 0), (0, n), (n, 0), (n, n))

    @property
    def start_corner(self):
        return 3 - self.goal_corner


@dataclass(eq=False)
class GridworldModel:
    mdp: FiniteMdp
    reward: RewardModel
    subject_obs: np.ndarray
    element_obs: np.ndarray
    vocabulary: ObservationVocabulary
    spec: GridworldSpec

    def __iter__(self):
        return iter((self.mdp, self.reward, self.subject_obs, self.element_obs))


def cell(spec, s):
    return divmod(s, spec.size)


def subject_emission(spec):
    """Pr(omega_c | s) proportional to exp(-manhattan(s, corner_c)), (S, 4)."""
    S = spec.size * spec.size
    law = np.empty((S, 4))
    for s in range(S):
        r, c = cell(spec, s)
        d = np.array([abs(r - cr) + abs(c - cc) for cr, cc in spec.corners], dtype=float)
        law[s] = np.exp(-d)
    return law / law.sum(axis=1, keepdims=True)


def _transitions(spec):
    n = spec.size
    S = n * n
    P = np.zeros((S, 4, S))
    for s in range(S):
        r, c = divmod(s, n)
        for a in range(4):
            outcomes = [(a, 1.0 - spec.slip_probability)]
            if spec.slip == "stay":
                outcomes.append((None, spec.slip_probability))
            else:
                outcomes += [(p, spec.slip_probability / 2) for p in PERPENDICULAR[a]]
            for move, prob in outcomes:
                dr, dc = (0, 0) if move is None else MOVES[move]
                rr, cc = r + dr, c + dc
                if not (0 <= rr < n and 0 <= cc < n):
                    rr, cc = r, c
                P[s, a, rr * n + cc] += prob
    return P


def build_gridworld(spec, rng=None):
    """MDP, true reward, subject emission (S, A, 4) and confounder laws (E, 4).

    Confounder laws come from a symmetric Dirichlet(1) drawn with ``rng``.
    """
    rng = np.random.default_rng(rng)
    n = spec.size
    S = n * n
    if spec.start == "uniform":
        start = np.full(S, 1.0 / S)
    else:
        start = np.zeros(S)
        sr, sc = spec.corners[spec.start_corner]
        start[sr * n + sc] = 1.0
    mdp = FiniteMdp(
        _transitions(spec), start, spec.horizon,
        state_names=tuple(f"({r},{c})" for r in range(n) for c in range(n)),
        action_names=ACTIONS,
    )
    phi = np.zeros((S, 4, 4))
    for k, (r, c) in enumerate(spec.corners):
        phi[r * n + c, :, k] = 1.0
    weights = np.zeros(4)
    weights[spec.goal_corner] = 1.0
    law = subject_emission(spec)
    subject_obs = np.repeat(law[:, None, :], 4, axis=1)
    element_obs = rng.dirichlet(np.ones(4), size=spec.num_elements).reshape(spec.num_elements, 4)
    vocab = ObservationVocabulary(("corner_TL", "corner_TR", "corner_BL", "corner_BR"))
    return GridworldModel(mdp, RewardModel(phi, weights), subject_obs, element_obs, vocab, spec)


def apportion(total, n_sources):
    """Per-source observation counts, differing by at most one; extras go to the lowest indices."""
    base, extra = divmod(total, n_sources)
    return np.array([base + (1 if i < extra else 0) for i in range(n_sources)], dtype=int)


def make_eta(true_source, n_sources, variant, rng, mass=0.6, hit_rate=0.8):
    """eta vectors for observations whose true sources are ``true_source``."""
    true_source = np.asarray(true_source, dtype=int)
    m = len(true_source)
    if n_sources == 1:
        return np.ones((m, 1))
    if variant == "uniform":
        return np.full((m, n_sources), 1.0 / n_sources)
    if variant == "oracle":
        eta = np.zeros((m, n_sources))
        eta[np.arange(m), true_source] = 1.0
        return eta
    chosen = true_source.copy()
    miss = rng.random(m) >= hit_rate
    # a miss gives the mass to one of the other sources
    offset = rng.integers(1, n_sources, size=m)
    chosen[miss] = (true_source[miss] + offset[miss]) % n_sources
    eta = np.full((m, n_sources), (1.0 - mass) / (n_sources - 1))
    eta[np.arange(m), chosen] = mass
    return eta


def rollout(mdp, policy, rng, start_state=None):
    T = mdp.horizon
    states = np.empty(T, dtype=int)
    actions = np.empty(T, dtype=int)
    s = rng.choice(mdp.n_states, p=mdp.start) if start_state is None else start_state
    for t in range(T):
        a = rng.choice(mdp.n_actions, p=policy.at(t)[s])
        states[t], actions[t] = s, a
        s = rng.choice(mdp.n_states, p=mdp.transition[s, a])
    return Trajectory(states, actions)


def emit(model, trajectories, rng, num_elements=None):
    """Sample an observation log for ``trajectories`` from the model's laws."""
    spec = model.spec
    E = model.element_obs.shape[0] if num_elements is None else num_elements
    counts = apportion(spec.obs_per_timestep, 1 + E)
    logs = []
    for traj in trajectories:
        omega, src, step = [], [], []
        for t, (s, a) in enumerate(traj.steps):
            for z in range(1 + E):
                law = model.subject_obs[s, a] if z == 0 else model.element_obs[z - 1]
                omega.append(rng.choice(4, size=counts[z], p=law))
                src.append(np.full(counts[z], z))
                step.append(np.full(counts[z], t))
        omega = np.concatenate(omega) if omega else np.zeros(0, int)
        src = np.concatenate(src) if src else np.zeros(0, int)
        step = np.concatenate(step) if step else np.zeros(0, int)
        eta = make_eta(src, 1 + E, spec.eta, rng, spec.plausible_mass, spec.plausible_hit_rate)
        logs.append(TrajectoryObservations(len(traj), omega, eta, step, src))
    names = tuple(f"element_{i}" for i in range(E))
    return ObservationLog(logs, model.vocabulary, names, {"domain": "gridworld", **asdict(spec)})


def simulate_gridworld_demo(spec, seed, model=None):
    """Expert trajectories from the corner opposite the goal plus their observation log.

    Returns ``(model, trajectories, log)``; pass ``model`` to reuse confounder laws.
    """
    rng = np.random.default_rng(seed)
    if model is None:
        model = build_gridworld(spec, rng)
    _, expert = solve_optimal(model.mdp, model.reward)
    trajs = [rollout(model.mdp, expert, rng) for _ in range(spec.num_trajectories)]
    return model, trajs, emit(model, trajs, rng)


def simulate_controlled_gridworld(model, seed, n_trajectories=20, mode="expert"):
    """Calibration run with no confounders; returns ``(trajectories, log)``.

    ``mode="expert"`` repeats the expert's task, so the fitted subject alpha is
    sharp along the states the expert actually uses.  ``mode="walker"`` drives a
    uniform-random walker from uniform starts instead; it spreads counts over
    the grid but can leave the goal cell unvisited.
    """
    rng = np.random.default_rng(seed)
    mdp = model.mdp
    S, A = mdp.n_states, mdp.n_actions
    if mode == "expert":
        _, expert = solve_optimal(mdp, model.reward)
        trajs = [rollout(mdp, expert, rng) for _ in range(n_trajectories)]
    elif mode == "walker":
        walker = Policy(np.full((S, A), 1.0 / A))
        trajs = [rollout(mdp, walker, rng, start_state=int(rng.integers(S))) for _ in range(n_trajectories)]
    else:
        raise InvalidInputError(f"unknown calibration mode {mode!r}")
    return trajs, emit(model, trajs, rng, num_elements=0)
