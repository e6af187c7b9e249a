"""Metropolis-within-Gibbs inference over latent trajectories and source labels.

Each observed trajectory gets its own chain over (s_t, a_t) and one source
label Z per observation (0 = subject, 1.. = confounders).  Two sweep kinds
are available:

* ``gibbs``: node-at-a-time Metropolis with uniform proposals.  Needs a
  kernel where single states can move without breaking their neighbours.
* ``whole``: Z nodes node-at-a-time, then for every cut point k a block
  proposal that keeps the trajectory up to s_k and re-rolls the rest with
  the soft policy and the transition kernel (k = -1 also redraws s_0 from
  the start distribution).  Because the proposal is the prior, the
  acceptance ratio reduces to the likelihood ratio of subject-labelled
  observations.  Works for any kernel, required for deterministic ones.

All densities are handled in log space.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, InconsistentLatticeError, InvalidInputError
from .mdp import _soft_backward
from .obsmodel import DirichletObsModel, blend_alpha

SWEEPS = ("auto", "gibbs", "whole")
MIN_RETAINED = 100
NEG_INF = -np.inf


@dataclass
class InferenceOptions:
    samples: int = 2000
    burn_in: int = 500
    thinning: int = 1
    blend: float = 0.1
    o_tolerance: float = 1e-3
    max_outer_iters: int = 30
    sweep: str = "auto"
    warm_start: bool = True
    learn_obs: bool = True
    init_retries: int = 100

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigurationError(f"sweep must be one of {SWEEPS}")
        if self.samples - self.burn_in < MIN_RETAINED * self.thinning:
            raise ConfigurationError(f"need at least {MIN_RETAINED} retained samples")
        if self.thinning < 1 or self.max_outer_iters < 1:
            raise ConfigurationError("thinning and max_outer_iters must be >= 1")

    @property
    def retained(self):
        return len(range(self.burn_in, self.samples, self.thinning))


@dataclass(eq=False)
class LatentState:
    """Current values of one trajectory's chain."""

    states: np.ndarray
    actions: np.ndarray
    labels: np.ndarray

    def copy(self):
        return LatentState(self.states.copy(), self.actions.copy(), self.labels.copy())


@dataclass(eq=False)
class ChainHistory:
    """Every sweep's node values, kept only when recording is requested."""

    states: np.ndarray
    actions: np.ndarray
    labels: np.ndarray
    n_states: int
    n_actions: int
    n_sources: int


@dataclass(eq=False)
class TrajectoryPosterior:
    """Sample-frequency estimate of Pr(X | omega, eta) and Pr(Z | omega, eta).

    ``marginals[t, s, a]`` = Pr(s_t = s, a_t = a), ``pairwise[t, s, a, s2]`` =
    Pr(s_t = s, a_t = a, s_{t+1} = s2) and ``labels[n, z]`` = Pr(Z_n = z).
    """

    marginals: np.ndarray
    pairwise: np.ndarray
    labels: np.ndarray
    n_samples: int
    acceptance: dict = field(default_factory=dict)
    paths: dict | None = None

    @property
    def n_steps(self):
        return self.marginals.shape[0]

    @property
    def state_marginals(self):
        return self.marginals.sum(axis=2)

    def mode_steps(self):
        """Per-timestep most probable (s, a), lowest index on ties."""
        T, S, A = self.marginals.shape
        flat = self.marginals.reshape(T, S * A).argmax(axis=1)
        return flat // A, flat % A


@dataclass(eq=False)
class InferenceResult:
    posteriors: list
    obs_model: DirichletObsModel
    converged: bool
    iterations: int
    deltas: list
    chains: list
    diagnostics: list = field(default_factory=list)


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _cat(p, u):
    acc = 0.0
    for i in range(p.shape[0]):
        acc += p[i]
        if u < acc:
            return i
    for i in range(p.shape[0] - 1, -1, -1):
        if p[i] > 0.0:
            return i
    return p.shape[0] - 1


@njit(cache=True)
def _accept(lp_new, lp_old, u):
    if lp_new == NEG_INF:
        return False
    if lp_old == NEG_INF:
        return True
    d = lp_new - lp_old
    if d >= 0.0:
        return True
    return np.log(u) < d


@njit(cache=True)
def _z_logp(zv, j, w, s, a, logeta, logO, logOc):
    le = logeta[j, zv]
    if zv == 0:
        return le + logO[s, a, w]
    return le + logOc[zv - 1, w]


@njit(cache=True)
def _s_logp(t, s, st, at, z, omega, offs, logpi, logP, logstart, logO, smask):
    T = st.shape[0]
    a = at[t]
    lp = logpi[t, s, a] + smask[t, s]
    if t == 0:
        lp += logstart[s]
    else:
        lp += logP[st[t - 1], at[t - 1], s]
    if t < T - 1:
        lp += logP[s, a, st[t + 1]]
    if lp == NEG_INF:
        return lp
    for j in range(offs[t], offs[t + 1]):
        if z[j] == 0:
            lp += logO[s, a, omega[j]]
    return lp


@njit(cache=True)
def _a_logp(t, a, st, z, omega, offs, logpi, logP, logO, amask):
    T = st.shape[0]
    s = st[t]
    lp = logpi[t, s, a] + amask[t, a]
    if t < T - 1:
        lp += logP[s, a, st[t + 1]]
    if lp == NEG_INF:
        return lp
    for j in range(offs[t], offs[t + 1]):
        if z[j] == 0:
            lp += logO[s, a, omega[j]]
    return lp


@njit(cache=True)
def _sweep_labels(t, st, at, z, omega, offs, logeta, logO, logOc, stats):
    K = logeta.shape[1]
    s = st[t]
    a = at[t]
    for j in range(offs[t], offs[t + 1]):
        zn = int(np.random.random() * K)
        zo = z[j]
        stats[0] += 1
        if zn == zo:
            continue
        w = omega[j]
        if _accept(_z_logp(zn, j, w, s, a, logeta, logO, logOc),
                   _z_logp(zo, j, w, s, a, logeta, logO, logOc), np.random.random()):
            stats[1] += 1
            z[j] = zn


@njit(cache=True)
def _gibbs_sweep(st, at, z, omega, offs, logeta, logpi, logP, logstart, logO, logOc,
                 smask, amask, stats):
    T = st.shape[0]
    S = logP.shape[0]
    A = logP.shape[1]
    for t in range(T):
        _sweep_labels(t, st, at, z, omega, offs, logeta, logO, logOc, stats)
        sn = int(np.random.random() * S)
        stats[2] += 1
        if _accept(_s_logp(t, sn, st, at, z, omega, offs, logpi, logP, logstart, logO, smask),
                   _s_logp(t, st[t], st, at, z, omega, offs, logpi, logP, logstart, logO, smask),
                   np.random.random()):
            if sn != st[t]:
                stats[3] += 1
            st[t] = sn
        an = int(np.random.random() * A)
        stats[2] += 1
        if _accept(_a_logp(t, an, st, z, omega, offs, logpi, logP, logO, amask),
                   _a_logp(t, at[t], st, z, omega, offs, logpi, logP, logO, amask),
                   np.random.random()):
            if an != at[t]:
                stats[3] += 1
            at[t] = an


@njit(cache=True)
def _step_loglik(cnt, t, s, a, logO, smask, amask):
    v = smask[t, s] + amask[t, a]
    if v == NEG_INF:
        return v
    for w in range(cnt.shape[1]):
        c = cnt[t, w]
        if c != 0.0:
            v += c * logO[s, a, w]
    return v


@njit(cache=True)
def _whole_sweep(st, at, z, omega, offs, logeta, pi, P, start, logO, logOc,
                 smask, amask, stats, ns, na):
    T = st.shape[0]
    W = logO.shape[2]
    for t in range(T):
        _sweep_labels(t, st, at, z, omega, offs, logeta, logO, logOc, stats)
    cnt = np.zeros((T, W))
    for t in range(T):
        for j in range(offs[t], offs[t + 1]):
            if z[j] == 0:
                cnt[t, omega[j]] += 1.0
    for k in range(-1, T):
        j0 = 0 if k < 0 else k
        for i in range(j0 + 1):
            ns[i] = st[i]
        for i in range(j0):
            na[i] = at[i]
        if k < 0:
            ns[0] = _cat(start, np.random.random())
        lp_new = 0.0
        lp_old = 0.0
        for t in range(j0, T):
            s = ns[t]
            a = _cat(pi[t, s], np.random.random())
            na[t] = a
            if t < T - 1:
                ns[t + 1] = _cat(P[s, a], np.random.random())
            lp_new += _step_loglik(cnt, t, s, a, logO, smask, amask)
            lp_old += _step_loglik(cnt, t, st[t], at[t], logO, smask, amask)
        stats[2] += 1
        if _accept(lp_new, lp_old, np.random.random()):
            changed = False
            for t in range(j0, T):
                if ns[t] != st[t] or na[t] != at[t]:
                    changed = True
                st[t] = ns[t]
                at[t] = na[t]
            if changed:
                stats[3] += 1


@njit(cache=True)
def _log_joint(st, at, z, omega, offs, logeta, logpi, logP, logstart, logO, logOc, smask, amask):
    T = st.shape[0]
    lp = logstart[st[0]]
    for t in range(T):
        s = st[t]
        a = at[t]
        lp += logpi[t, s, a] + smask[t, s] + amask[t, a]
        if t < T - 1:
            lp += logP[s, a, st[t + 1]]
        for j in range(offs[t], offs[t + 1]):
            lp += _z_logp(z[j], j, omega[j], s, a, logeta, logO, logOc)
    return lp


@njit(cache=True)
def _run_chain(whole, n_sweeps, burn_in, thin, seed, st, at, z, omega, offs, logeta,
               pi, logpi, P, logP, start, logstart, logO, logOc, smask, amask,
               visits, pairs, zc, trace, rec_s, rec_a, rec_z):
    np.random.seed(seed)
    T = st.shape[0]
    stats = np.zeros(4, dtype=np.int64)
    ns = np.empty(T, dtype=np.int64)
    na = np.empty(T, dtype=np.int64)
    record = rec_s.shape[0] > 0
    kept = 0
    for it in range(n_sweeps):
        if whole:
            _whole_sweep(st, at, z, omega, offs, logeta, pi, P, start, logO, logOc,
                         smask, amask, stats, ns, na)
        else:
            _gibbs_sweep(st, at, z, omega, offs, logeta, logpi, logP, logstart, logO, logOc,
                         smask, amask, stats)
        if record:
            rec_s[it] = st
            rec_a[it] = at
            rec_z[it] = z
        if it >= burn_in and (it - burn_in) % thin == 0:
            for t in range(T):
                visits[t, st[t], at[t]] += 1.0
                if t < T - 1:
                    pairs[t, st[t], at[t], st[t + 1]] += 1.0
            for j in range(z.shape[0]):
                zc[j, z[j]] += 1.0
            trace[kept] = _log_joint(st, at, z, omega, offs, logeta, logpi, logP, logstart,
                                     logO, logOc, smask, amask)
            kept += 1
    return stats


# ------------------------------------------------------------ problem setup


@dataclass(eq=False)
class _Problem:
    """Arrays describing one trajectory's posterior, ready for the kernels."""

    omega: np.ndarray
    offs: np.ndarray
    logeta: np.ndarray
    pi: np.ndarray
    logpi: np.ndarray
    P: np.ndarray
    logP: np.ndarray
    start: np.ndarray
    logstart: np.ndarray
    logO: np.ndarray
    logOc: np.ndarray
    smask: np.ndarray
    amask: np.ndarray

    @property
    def horizon(self):
        return self.smask.shape[0]

    @property
    def n_sources(self):
        return self.logeta.shape[1]

    def args(self):
        return (self.omega, self.offs, self.logeta, self.pi, self.logpi, self.P, self.logP,
                self.start, self.logstart, self.logO, self.logOc, self.smask, self.amask)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def soft_log_policy(mdp, reward_features, theta):
    """(T, S, A) log soft policy for weights ``theta``."""
    r = reward_features.features @ np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("rewards must be finite")
    _, logpi = _soft_backward(mdp.transition, r, int(mdp.horizon), mdp.sink_index)
    return logpi


def _policy_arrays(mdp, policy):
    if isinstance(policy, np.ndarray):
        logpi = np.asarray(policy, dtype=float)
    else:
        logpi = _log(policy.table(mdp.horizon))
    if logpi.ndim == 2:
        logpi = np.broadcast_to(logpi, (mdp.horizon,) + logpi.shape)
    logpi = np.ascontiguousarray(logpi)
    return np.exp(logpi), logpi


def build_problem(mdp, logpi, obs_model, observations, smask=None, amask=None):
    """Bundle one trajectory's arrays.  ``logpi`` is a (T, S, A) log policy."""
    T, S, A = mdp.horizon, mdp.n_states, mdp.n_actions
    if observations is not None and observations.n_steps != T:
        raise InvalidInputError(f"observed trajectory has {observations.n_steps} steps, horizon is {T}")
    pi, logpi = _policy_arrays(mdp, logpi)
    if observations is None or len(observations) == 0:
        omega = np.zeros(0, dtype=np.int64)
        offs = np.zeros(T + 1, dtype=np.int64)
        k = 1 + obs_model.n_elements
        logeta = np.zeros((0, k))
    else:
        omega = observations.omega
        offs = observations.offsets.astype(np.int64)
        logeta = _log(observations.eta)
        if logeta.shape[1] != 1 + obs_model.n_elements:
            raise InvalidInputError("eta length does not match the number of sources")
    return _Problem(
        omega, offs, np.ascontiguousarray(logeta), pi, logpi,
        mdp.transition, np.ascontiguousarray(mdp.log_transition),
        mdp.start, mdp.log_start,
        np.ascontiguousarray(np.log(obs_model.subject_mean)),
        np.ascontiguousarray(np.log(obs_model.confounder_mean).reshape(obs_model.n_elements, obs_model.n_symbols)),
        np.zeros((T, S)) if smask is None else np.ascontiguousarray(smask, dtype=float),
        np.zeros((T, A)) if amask is None else np.ascontiguousarray(amask, dtype=float),
    )


def _chain_logp(prob, chain):
    return _log_joint(chain.states, chain.actions, chain.labels, prob.omega, prob.offs,
                      prob.logeta, prob.logpi, prob.logP, prob.logstart, prob.logO,
                      prob.logOc, prob.smask, prob.amask)


def _subject_loglik(prob, labels):
    """(T, S, A) log-likelihood of subject-labelled observations."""
    T = prob.horizon
    S, A, W = prob.logO.shape
    cnt = np.zeros((T, W))
    sel = labels == 0
    steps = np.repeat(np.arange(T), np.diff(prob.offs))
    np.add.at(cnt, (steps[sel], prob.omega[sel]), 1.0)
    return np.einsum("tw,saw->tsa", cnt, prob.logO)


def _viterbi(prob, labels):
    """Highest-density (s, a) sequence with labels held fixed, or None."""
    T = prob.horizon
    ll = _subject_loglik(prob, labels) + prob.smask[:, :, None] + prob.amask[:, None, :]
    S, A = ll.shape[1:]
    delta = prob.logstart[:, None] + prob.logpi[0] + ll[0]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        # best predecessor (s, a) for each successor state
        cand = delta.reshape(S * A, 1) + prob.logP.reshape(S * A, S)
        back[t] = cand.argmax(axis=0)
        delta = cand.max(axis=0)[:, None] + prob.logpi[t] + ll[t]
    if not np.isfinite(delta.max()):
        return None
    flat = int(delta.argmax())
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    states[-1], actions[-1] = divmod(flat, A)
    for t in range(T - 1, 0, -1):
        states[t - 1], actions[t - 1] = divmod(int(back[t, states[t]]), A)
    return states, actions


def initialize_chain(prob, rng, retries=100):
    """Transition-consistent starting values for one chain.

    Labels start at argmax eta.  States and actions come from forward
    rollouts of the soft policy, retried until the joint density is
    positive; after ``retries`` failures a max-density lattice search is
    used instead.
    """
    T = prob.horizon
    S, A = prob.logpi.shape[1:]
    if len(prob.omega):
        labels = np.argmax(prob.logeta, axis=1).astype(np.int64)
    else:
        labels = np.zeros(0, dtype=np.int64)
    for _ in range(retries):
        states = np.empty(T, dtype=np.int64)
        actions = np.empty(T, dtype=np.int64)
        s = rng.choice(S, p=prob.start)
        for t in range(T):
            a = rng.choice(A, p=prob.pi[t, s] / prob.pi[t, s].sum())
            states[t], actions[t] = s, a
            if t < T - 1:
                s = rng.choice(S, p=prob.P[s, a])
        chain = LatentState(states, actions, labels.copy())
        if np.isfinite(_chain_logp(prob, chain)):
            return chain
    found = _viterbi(prob, labels)
    if found is None:
        raise InconsistentLatticeError(f"no positive-probability trajectory of length {T}")
    return LatentState(found[0], found[1], labels)


def resolve_sweep(mdp, sweep="auto"):
    """``auto`` picks node-wise Gibbs only for strictly positive kernels."""
    if sweep == "auto":
        return "gibbs" if np.all(mdp.transition > 0) else "whole"
    return sweep


def run_chain(prob, chain, n_sweeps, burn_in=0, thinning=1, seed=0, sweep="whole", record=False):
    """Advance ``chain`` in place for ``n_sweeps`` sweeps.

    Returns ``(posterior, stats, history)``; the posterior uses retained
    sweeps only, ``history`` is None unless ``record`` is set.
    """
    T = prob.horizon
    S, A = prob.logpi.shape[1:]
    n, K = len(prob.omega), prob.n_sources
    kept = len(range(burn_in, n_sweeps, thinning))
    visits = np.zeros((T, S, A))
    pairs = np.zeros((max(T - 1, 0), S, A, S))
    zc = np.zeros((n, K))
    trace = np.zeros(kept)
    m = n_sweeps if record else 0
    rec_s = np.zeros((m, T), dtype=np.int64)
    rec_a = np.zeros((m, T), dtype=np.int64)
    rec_z = np.zeros((m, n), dtype=np.int64)
    if np.asarray(chain.labels).shape != (n,):
        raise InvalidInputError("chain labels do not match the observations")
    stats = _run_chain(
        sweep == "whole", int(n_sweeps), int(burn_in), int(thinning), int(seed) % (2**32),
        chain.states, chain.actions, chain.labels, *prob.args(),
        visits, pairs, zc, trace, rec_s, rec_a, rec_z,
    )
    acc = {
        "label_rate": stats[1] / stats[0] if stats[0] else 0.0,
        "state_rate": stats[3] / stats[2] if stats[2] else 0.0,
        "ess": effective_sample_size(trace),
    }
    post = None
    if kept:
        post = TrajectoryPosterior(visits / kept, pairs / kept, zc / kept, kept, acc)
    history = ChainHistory(rec_s, rec_a, rec_z, S, A, K) if record else None
    return post, acc, history


def gibbs_sweep(chain, prob, seed=0):
    """One node-at-a-time sweep (labels, then s_t, then a_t for each t)."""
    run_chain(prob, chain, 1, seed=seed, sweep="gibbs")
    return chain


def whole_trajectory_sweep(chain, prob, seed=0):
    """One sweep of label updates followed by block trajectory proposals."""
    run_chain(prob, chain, 1, seed=seed, sweep="whole")
    return chain


def metropolis_step(current, log_density, n_values, rng):
    """Single Metropolis update with a uniform proposal over ``range(n_values)``.

    ``log_density(y)`` may return -inf.  A current value of zero density
    accepts any positive-density proposal.
    """
    proposal = int(rng.integers(n_values))
    return proposal if _accept(log_density(proposal), log_density(current), rng.random()) else current


def estimate_posteriors(history, burn_in=0, thinning=1):
    """Sample frequencies of a recorded chain after burn-in and thinning."""
    sel = np.arange(burn_in, history.states.shape[0], thinning)
    if len(sel) < MIN_RETAINED:
        raise ConfigurationError(f"only {len(sel)} retained samples, need {MIN_RETAINED}")
    st, at, z = history.states[sel], history.actions[sel], history.labels[sel]
    m, T = st.shape
    S, A, K = history.n_states, history.n_actions, history.n_sources
    marg = np.zeros((T, S, A))
    pairs = np.zeros((max(T - 1, 0), S, A, S))
    t_idx = np.broadcast_to(np.arange(T), st.shape)
    np.add.at(marg, (t_idx, st, at), 1.0)
    if T > 1:
        np.add.at(pairs, (t_idx[:, :-1], st[:, :-1], at[:, :-1], st[:, 1:]), 1.0)
    n = z.shape[1]
    labels = np.zeros((n, K))
    if n:
        np.add.at(labels, (np.broadcast_to(np.arange(n), z.shape), z), 1.0)
    paths = {}
    for row_s, row_a in zip(st, at):
        key = tuple(zip(row_s.tolist(), row_a.tolist()))
        paths[key] = paths.get(key, 0) + 1
    paths = {k: v / m for k, v in paths.items()}
    return TrajectoryPosterior(marg / m, pairs / m, labels / m, m, paths=paths)


def effective_sample_size(trace):
    """ESS from the autocorrelation of a scalar trace (initial positive sequence)."""
    x = np.asarray(trace, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x @ x / n
    if var <= 1e-300:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / tau))


# ------------------------------------------------------- outer inference loop


def accumulate_alpha_dot(posteriors, log, n_states, n_actions):
    """Expected observation counts per subject (s, a) and per confounder.

    Subject counts use Pr(Z=0) times the marginal Pr(s_t, a_t); confounder
    counts use Pr(Z=z).  Their grand total equals the number of observations.
    """
    W = len(log.vocabulary)
    E = len(log.element_names)
    subj = np.zeros((n_states, n_actions, W))
    conf = np.zeros((E, W))
    if len(posteriors) != len(log):
        raise InvalidInputError("one posterior per observed trajectory is required")
    for post, obs in zip(posteriors, log.trajectories):
        if len(obs) == 0:
            continue
        # sum_n Pr(Z_n=0) e_{omega_n} per timestep, then spread over (s, a)
        per_step = np.zeros((obs.n_steps, W))
        np.add.at(per_step, (obs.step, obs.omega), post.labels[:, 0])
        subj += np.einsum("tsa,tw->saw", post.marginals, per_step)
        if E:
            np.add.at(conf, (slice(None), obs.omega), post.labels[:, 1:].T)
    return subj, conf


def observation_feature_expectations(posteriors, reward):
    """Average over trajectories of sum_t E[phi(s_t, a_t)] under the marginals."""
    from .maxent import FeatureExpectations

    if not posteriors:
        raise InvalidInputError("no posteriors")
    total = np.zeros(reward.num_features)
    for post in posteriors:
        total += np.einsum("tsa,sak->k", post.marginals, reward.features)
    return FeatureExpectations(total / len(posteriors), len(posteriors))


def _seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def run_inference(log, obs_model, mdp, policy, opts=None, seed=0, chains=None,
                  diagnostics=None, masks=None):
    """Alternate per-trajectory sampling with Dirichlet hyperparameter updates.

    ``policy`` is a Policy or a (T, S, A) log-policy array.  ``masks`` is an
    optional list of per-trajectory ``(smask, amask)`` log constraints.
    Stops when the largest row change of O falls below ``opts.o_tolerance``
    or after ``opts.max_outer_iters`` passes (or one pass when O is fixed).
    ``diagnostics``, if given, is a list that receives one dict per pass.
    """
    opts = opts or InferenceOptions()
    if len(log) == 0:
        raise InvalidInputError("empty observation log")
    if obs_model.n_elements != len(log.element_names):
        raise InvalidInputError("observation model and log disagree on the confounder set")
    if obs_model.n_symbols != len(log.vocabulary):
        raise InvalidInputError("observation model and log disagree on the vocabulary")
    sweep = resolve_sweep(mdp, opts.sweep)
    _, logpi = _policy_arrays(mdp, policy)
    chains = list(chains) if chains is not None else [None] * len(log)
    model = obs_model
    deltas = []
    converged = False
    posteriors = []
    it = 0
    for it in range(1, opts.max_outer_iters + 1):
        posteriors = []
        stats = []
        for j, obs in enumerate(log.trajectories):
            sm, am = (None, None) if masks is None else masks[j]
            prob = build_problem(mdp, logpi, model, obs, sm, am)
            if chains[j] is None or not opts.warm_start:
                chains[j] = initialize_chain(prob, np.random.default_rng(_seed(seed, it, j, 1)),
                                             opts.init_retries)
            post, acc, _ = run_chain(prob, chains[j], opts.samples, opts.burn_in, opts.thinning,
                                     _seed(seed, it, j), sweep)
            posteriors.append(post)
            stats.append(acc)
        subj_dot, conf_dot = accumulate_alpha_dot(posteriors, log, mdp.n_states, mdp.n_actions)
        mass = float(subj_dot.sum() + conf_dot.sum())
        if not opts.learn_obs:
            deltas.append(0.0)
            converged = True
        else:
            new = DirichletObsModel(
                blend_alpha(model.subject_alpha, subj_dot, opts.blend),
                blend_alpha(model.confounder_alpha, conf_dot, opts.blend),
            )
            delta = model.max_row_change(new)
            deltas.append(delta)
            model = new
            converged = delta < opts.o_tolerance
        if diagnostics is not None:
            diagnostics.append({
                "iteration": it,
                "o_delta": deltas[-1],
                "label_accept": float(np.mean([s["label_rate"] for s in stats])),
                "state_accept": float(np.mean([s["state_rate"] for s in stats])),
                "min_ess": float(np.min([s["ess"] for s in stats])),
                "mean_ess": float(np.mean([s["ess"] for s in stats])),
                "alpha_dot_mass": mass,
                "n_observations": int(log.total_observations),
            })
        if converged:
            break
    return InferenceResult(posteriors, model, converged, it, deltas, chains,
                           diagnostics if diagnostics is not None else [])


def write_diagnostics(rows, path):
    """Tab-separated diagnostics, one line per outer iteration."""
    cols = ("iteration", "o_delta", "label_accept", "state_accept", "min_ess", "mean_ess",
            "alpha_dot_mass", "n_observations")
    with open(path, "w") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
