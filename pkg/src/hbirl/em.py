"""Hidden-data EM: expected feature counts under latent completions, then MaxEnt fitting."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentDemoError, InvalidInputError
from .maxent import FeatureExpectations, FitOptions, causal_entropy, fit_weights
from .mdp import Policy, Trajectory
from .obsmodel import DirichletObsModel, ObservationLog
from .sampler import (
    InferenceOptions,
    build_problem,
    initialize_chain,
    observation_feature_expectations,
    resolve_sweep,
    run_chain,
    run_inference,
    soft_log_policy,
)

NEG_INF = -np.inf


@dataclass(eq=False)
class OccludedDemo:
    """A demonstration with some timesteps hidden.

    ``steps[t]`` is an ``(s, a)`` pair or None when the expert was occluded.
    ``occluded_states`` lists the states the expert may occupy while hidden
    (None means any state).
    """

    steps: list
    occluded_states: frozenset | None = None

    def __post_init__(self):
        self.steps = [None if st is None else (int(st[0]), int(st[1])) for st in self.steps]
        if not any(st is not None for st in self.steps):
            raise InvalidInputError("an occluded demonstration needs at least one visible step")
        if self.occluded_states is not None:
            self.occluded_states = frozenset(int(s) for s in self.occluded_states)

    @classmethod
    def from_trajectory(cls, traj, occluded_states=()):
        hidden = frozenset(int(s) for s in occluded_states)
        steps = [None if s in hidden else (s, a) for s, a in traj.steps]
        return cls(steps, hidden if hidden else None)

    def __len__(self):
        return len(self.steps)

    @property
    def observed(self):
        return np.array([st is not None for st in self.steps])

    @property
    def fully_observed(self):
        return bool(self.observed.all())

    def as_trajectory(self):
        if not self.fully_observed:
            raise InvalidInputError("demonstration has hidden steps")
        s, a = zip(*self.steps)
        return Trajectory(np.array(s), np.array(a))

    def segments(self):
        """Maximal runs [i, j) of hidden timesteps."""
        out, i, T = [], 0, len(self.steps)
        while i < T:
            if self.steps[i] is None:
                j = i
                while j < T and self.steps[j] is None:
                    j += 1
                out.append((i, j))
                i = j
            else:
                i += 1
        return out


@dataclass
class EmOptions:
    restarts: int = 5
    em_tolerance: float = 1e-3
    max_em_iters: int = 50
    enumeration_cap: int = 6
    fit: FitOptions = field(default_factory=FitOptions)
    inference: InferenceOptions = field(default_factory=InferenceOptions)
    carry_obs_model: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.max_em_iters < 1:
            raise InvalidInputError("max_em_iters must be >= 1")


@dataclass(eq=False)
class EmResult:
    weights: np.ndarray
    policy: Policy
    converged: bool
    iterations: int
    entropy: float
    history: list
    restart: int = 0
    entropies: list = field(default_factory=list)
    obs_model: DirichletObsModel | None = None
    posteriors: list | None = None
    thetas: list = field(default_factory=list, repr=False)


def restart_rng(seed, restart):
    """Generator for restart ``restart`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(restart)]))


def _segment_completions(demo, i, j, mdp, logpi, phi):
    """Total weight and weighted feature sum over completions of hidden steps [i, j)."""
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    P = mdp.transition
    allowed = range(S) if demo.occluded_states is None else sorted(demo.occluded_states)
    prev = demo.steps[i - 1] if i > 0 else None
    nxt = demo.steps[j][0] if j < T else None
    pi = np.exp(logpi)
    total = 0.0
    feats = np.zeros(phi.shape[2])

    def entry(s):
        return mdp.start[s] if prev is None else P[prev[0], prev[1], s]

    # depth-first over (s_t, a_t), pruning zero-probability branches
    stack = [(i, s, entry(s), np.zeros(phi.shape[2])) for s in allowed]
    while stack:
        t, s, w, f = stack.pop()
        if w <= 0.0:
            continue
        for a in range(A):
            wa = w * pi[t, s, a]
            if wa <= 0.0:
                continue
            fa = f + phi[s, a]
            if t == j - 1:
                wend = wa if nxt is None else wa * P[s, a, nxt]
                if wend > 0.0:
                    total += wend
                    feats += wend * fa
            else:
                for s2 in allowed:
                    p = P[s, a, s2]
                    if p > 0.0:
                        stack.append((t + 1, s2, wa * p, fa))
    return total, feats


def _masks(demo, mdp):
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    smask = np.zeros((T, S))
    amask = np.zeros((T, A))
    for t, st in enumerate(demo.steps):
        if st is None:
            if demo.occluded_states is not None:
                keep = np.zeros(S, dtype=bool)
                keep[list(demo.occluded_states)] = True
                smask[t, ~keep] = NEG_INF
        else:
            smask[t] = NEG_INF
            smask[t, st[0]] = 0.0
            amask[t] = NEG_INF
            amask[t, st[1]] = 0.0
    return smask, amask


def latent_feature_expectations(demos, mdp, reward, cap=6, sampler_opts=None, seed=0):
    """Feature expectations with hidden steps completed under the soft policy of ``reward``.

    Hidden runs of at most ``cap`` steps are enumerated exactly; longer runs
    are sampled with the trajectory sampler (no observations, visible steps
    pinned).
    """
    demos = list(demos)
    if not demos:
        raise InvalidInputError("empty demonstration set")
    phi = reward.features
    logpi = soft_log_policy(mdp, reward, reward.weights)
    total = np.zeros(reward.num_features)
    for idx, demo in enumerate(demos):
        if len(demo) != mdp.horizon:
            raise InvalidInputError(f"demonstration {idx} has {len(demo)} steps, horizon is {mdp.horizon}")
        for st in demo.steps:
            if st is not None:
                total += phi[st[0], st[1]]
        segs = demo.segments()
        if not segs:
            continue
        if max(j - i for i, j in segs) > cap:
            total += _sampled_hidden_features(demo, idx, mdp, logpi, phi, sampler_opts, seed)
            continue
        for i, j in segs:
            w, f = _segment_completions(demo, i, j, mdp, logpi, phi)
            if w <= 0.0:
                raise InconsistentDemoError(f"demonstration {idx}: no consistent completion of steps {i}..{j - 1}")
            total += f / w
    return FeatureExpectations(total / len(demos), len(demos))


def _sampled_hidden_features(demo, idx, mdp, logpi, phi, opts, seed):
    from .errors import InconsistentLatticeError

    opts = opts or InferenceOptions()
    smask, amask = _masks(demo, mdp)
    model = DirichletObsModel.symmetric(mdp.n_states, mdp.n_actions, 1, 0)
    prob = build_problem(mdp, logpi, model, None, smask, amask)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), idx, 7]))
    try:
        chain = initialize_chain(prob, rng, opts.init_retries)
    except InconsistentLatticeError as exc:
        raise InconsistentDemoError(f"demonstration {idx}: {exc}") from exc
    post, _, _ = run_chain(prob, chain, opts.samples, opts.burn_in, opts.thinning,
                           int(rng.integers(2**32)), resolve_sweep(mdp, opts.sweep))
    hidden = ~demo.observed
    return np.einsum("tsa,sak->k", post.marginals[hidden], phi)


def _soft_policy(mdp, reward_features, theta):
    return Policy(np.exp(soft_log_policy(mdp, reward_features, theta)))


def run_em(data, mdp, reward_features, opts=None, seed=0, obs_model=None, diagnostics=None):
    """Hidden-data EM with random restarts; the highest causal-entropy restart wins.

    ``data`` is a list of OccludedDemo or Trajectory objects, or an
    ObservationLog (which then needs the prior ``obs_model``).  Each restart
    draws theta uniformly from [-1, 1]^K and alternates E and M steps until
    the max-norm change of theta drops below ``opts.em_tolerance``.
    """
    opts = opts or EmOptions()
    is_log = isinstance(data, ObservationLog)
    if is_log:
        if obs_model is None:
            raise InvalidInputError("observation logs need an initial observation model")
    else:
        data = [OccludedDemo([tuple(x) for x in d.steps]) if isinstance(d, Trajectory) else d for d in data]
        if not data:
            raise InvalidInputError("empty demonstration set")
    K = reward_features.num_features
    results = []
    for r in range(opts.restarts):
        rng = restart_rng(seed, r)
        theta = rng.uniform(-1.0, 1.0, size=K)
        history = []
        thetas = [theta.copy()]
        model, chains, posteriors = obs_model, None, None
        fixed_target = (not is_log) and all(d.fully_observed for d in data)
        converged = False
        it = 0
        for it in range(1, opts.max_em_iters + 1):
            rf = reward_features.with_weights(theta)
            if is_log:
                inf = run_inference(data, model, mdp, soft_log_policy(mdp, rf, theta), opts.inference,
                                    seed=int(np.random.SeedSequence([int(seed), r, it]).generate_state(1)[0]),
                                    chains=chains, diagnostics=diagnostics)
                if opts.carry_obs_model:
                    model, chains = inf.obs_model, inf.chains
                posteriors = inf.posteriors
                target = observation_feature_expectations(posteriors, rf)
            else:
                target = latent_feature_expectations(data, mdp, rf, opts.enumeration_cap,
                                                     opts.inference, seed=seed + 1000 * r + it)
            target = np.clip(target.values, 0.0, mdp.horizon)
            fit = fit_weights(mdp, reward_features, target, opts.fit, theta0=theta)
            step = float(np.max(np.abs(fit.theta - theta)))
            history.append(step)
            theta = fit.theta
            thetas.append(theta.copy())
            if fixed_target:
                converged = fit.converged
                break
            if step < opts.em_tolerance:
                converged = True
                break
        policy = _soft_policy(mdp, reward_features, theta)
        ent = causal_entropy(mdp, policy)
        results.append(EmResult(theta, policy, converged, it, ent, history, r,
                                obs_model=model if is_log else None, posteriors=posteriors, thetas=thetas))
    return select_max_entropy(results)


def select_max_entropy(results):
    """Pure argmax over entropies; ties go to the lowest restart index."""
    best = max(results, key=lambda res: (res.entropy, -res.restart))
    best.entropies = [res.entropy for res in sorted(results, key=lambda res: res.restart)]
    return best
