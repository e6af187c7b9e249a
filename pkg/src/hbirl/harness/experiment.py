"""Experiment orchestration: simulate, build the variant's data set, learn, score."""
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, astuple, dataclass, fields, replace

import numpy as np

from ..domains.baselines import ml_observations, ml_trajectories
from ..domains.gridworld import (
    GridworldSpec,
    build_gridworld,
    simulate_controlled_gridworld,
    simulate_gridworld_demo,
)
from ..domains.onion import OnionSpec, build_onion_mdp, expert_policy, simulate_onion_demo
from ..em import run_em
from ..errors import ConfigurationError
from ..mdp import Trajectory, ile, solve_optimal
from ..obsmodel import DirichletObsModel, ObservationLog, fit_alpha, scale_alpha

# pseudo-count mass for a "known" observation function
FIXED_ALPHA_MASS = 1e6


@dataclass(frozen=True)
class ResultRow:
    domain: str
    variant: str
    sweep_value: int
    seed: int
    ile: float
    em_iterations: int
    wall_time: float


RESULT_FIELDS = tuple(f.name for f in fields(ResultRow))


@dataclass(eq=False)
class Scenario:
    """One simulated data set plus everything needed to learn from and score it."""

    domain: str
    spec: object
    seed: int
    mdp: object
    reward: object
    expert: object
    trajectories: list
    log: ObservationLog
    calibration: list
    calibration_log: ObservationLog
    prior: DirichletObsModel
    true_obs: DirichletObsModel | None = None


def run_seed(master, value, run):
    """Seed for one (sweep value, run) cell; shared by every variant."""
    return int(np.random.SeedSequence([int(master), int(value), int(run)]).generate_state(1)[0])


def _prior(calibration, calibration_log, mdp, n_elements, cfg):
    alpha = fit_alpha(calibration, calibration_log, mdp.n_states, mdp.n_actions)
    W = len(calibration_log.vocabulary)
    return DirichletObsModel(scale_alpha(alpha, cfg.alpha_scale), np.full((n_elements, W), cfg.confounder_alpha))


def gridworld_scenario(cfg, num_elements, seed):
    goal = cfg.goal_corner
    if goal == "random":
        goal = int(np.random.default_rng([seed, 2]).integers(4))
    opts = {**cfg.domain_options, "num_elements": int(num_elements), "goal_corner": int(goal), "eta": "plausible"}
    spec = GridworldSpec(**opts)
    model, trajs, log = simulate_gridworld_demo(spec, seed)
    calib, clog = simulate_controlled_gridworld(model, np.random.SeedSequence([seed, 1]),
                                                cfg.controlled_trajectories, cfg.calibration)
    _, expert = solve_optimal(model.mdp, model.reward)
    true_obs = DirichletObsModel(model.subject_obs * FIXED_ALPHA_MASS, model.element_obs * FIXED_ALPHA_MASS)
    return Scenario("gridworld", spec, seed, model.mdp, model.reward, expert, trajs, log, calib, clog,
                    _prior(calib, clog, model.mdp, spec.num_elements, cfg), true_obs)


def onion_scenario(cfg, num_trajectories, seed):
    spec = OnionSpec(**cfg.domain_options)
    mdp, reward = build_onion_mdp(spec)
    trajs, _, log, clog = simulate_onion_demo(spec, seed, int(num_trajectories))
    # the controlled run repeats the same sorts without confounders
    prior = _prior(trajs, clog, mdp, 0 if cfg.controlled else len(log.element_names), cfg)
    data = clog if cfg.controlled else log
    return Scenario("onion", spec, seed, mdp, reward, expert_policy(mdp, reward), trajs, data, trajs, clog, prior)


def build_scenario(cfg, value, seed):
    if cfg.domain == "gridworld":
        return gridworld_scenario(cfg, value, seed)
    return onion_scenario(cfg, value, seed)


def _uniform_eta(log):
    k = log.n_sources
    return log.with_trajectories([o.select(np.ones(len(o), dtype=bool), np.full((len(o), k), 1.0 / k))
                                  for o in log.trajectories])


def _subject_only(log):
    trajs = [o.select(np.ones(len(o), dtype=bool), np.ones((len(o), 1))) for o in log.trajectories]
    return log.with_trajectories(trajs, element_names=())


def _no_confounders(model):
    return DirichletObsModel(model.subject_alpha, np.zeros((0, model.n_symbols)))


def learn(scn, variant, em_opts, seed):
    """Learn reward weights for ``variant`` on scenario ``scn``; returns an EmResult."""
    mdp, feats = scn.mdp, scn.reward
    if variant == "true_trajectories":
        return run_em(scn.trajectories, mdp, feats, em_opts, seed=seed)
    if variant == "ml_trajectories":
        return run_em(ml_trajectories(scn.prior, scn.log), mdp, feats, em_opts, seed=seed)
    if variant == "ml_observations":
        return run_em(ml_observations(scn.log), mdp, feats, em_opts, seed=seed, obs_model=_no_confounders(scn.prior))
    if variant == "ignore_ce":
        return run_em(_subject_only(scn.log), mdp, feats, em_opts, seed=seed, obs_model=_no_confounders(scn.prior))
    if variant == "plausible_eta":
        return run_em(scn.log, mdp, feats, em_opts, seed=seed, obs_model=scn.prior)
    if variant == "uniform_eta":
        return run_em(_uniform_eta(scn.log), mdp, feats, em_opts, seed=seed, obs_model=scn.prior)
    if variant == "true_obs_fn":
        if scn.true_obs is None:
            raise ConfigurationError("true_obs_fn needs the simulator's observation function")
        fixed = replace(em_opts, inference=replace(em_opts.inference, learn_obs=False))
        return run_em(_uniform_eta(scn.log), mdp, feats, fixed, seed=seed, obs_model=scn.true_obs)
    raise ConfigurationError(f"unknown variant {variant!r}")


def score(scn, weights):
    _, learned = solve_optimal(scn.mdp, scn.reward.with_weights(weights))
    return ile(scn.mdp, scn.reward, scn.expert, learned)


def run_one(cfg, variant, value, run):
    """One ResultRow, reproducible from (config, sweep value, run index) alone."""
    seed = run_seed(cfg.seed, value, run)
    start = time.perf_counter()
    try:
        scn = build_scenario(cfg, value, seed)
        res = learn(scn, variant, cfg.em, seed)
        err = score(scn, res.weights)
    except Exception as exc:
        raise _with_context(exc, f"{cfg.domain}/{variant} {cfg.sweep_variable}={value} run={run}") from exc
    elapsed = time.perf_counter() - start if cfg.record_wall_time else 0.0
    return ResultRow(cfg.domain, variant, int(value), seed, float(err), int(res.iterations), float(elapsed))


def _with_context(exc, where):
    try:
        return type(exc)(f"{where}: {exc}")
    except Exception:
        return RuntimeError(f"{where}: {exc!r}")


def _task(args):
    return run_one(*args)


def run_experiment(cfg, jobs=1, progress=None):
    """Rows for every (variant, sweep value, run) in a fixed order."""
    tasks = [(cfg, v, x, r) for v in cfg.variants for x in cfg.sweep for r in range(cfg.runs)]
    if jobs <= 1:
        rows = []
        for t in tasks:
            rows.append(run_one(*t))
            if progress:
                progress(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        rows = []
        for row in pool.map(_task, tasks):
            rows.append(row)
            if progress:
                progress(row)
    return rows


def write_results(rows, path):
    with open(path, "w") as fh:
        fh.write(",".join(RESULT_FIELDS) + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in astuple(row)) + "\n")


def read_results(path):
    casts = {f.name: f.type for f in fields(ResultRow)}
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != RESULT_FIELDS:
            raise ConfigurationError(f"{path}: unexpected header {header}")
        for line in fh:
            if line.strip():
                vals = line.rstrip("\n").split(",")
                rows.append(ResultRow(**{k: casts[k](v) for k, v in zip(header, vals)}))
    return rows


# ------------------------------------------------------------ scenario files


def save_scenario(scn, out_dir):
    """Write the observation logs and the ground truth of a simulated scenario."""
    os.makedirs(out_dir, exist_ok=True)
    scn.log.save(os.path.join(out_dir, "log.jsonl"))
    scn.calibration_log.save(os.path.join(out_dir, "calibration_log.jsonl"))
    truth = {
        "domain": scn.domain,
        "seed": scn.seed,
        "spec": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(scn.spec).items()},
        "trajectories": [[t.states.tolist(), t.actions.tolist()] for t in scn.trajectories],
        "calibration": [[t.states.tolist(), t.actions.tolist()] for t in scn.calibration],
        "true_weights": scn.reward.weights.tolist(),
    }
    if scn.true_obs is not None:
        truth["element_obs"] = scn.true_obs.confounder_mean.tolist()
    with open(os.path.join(out_dir, "truth.json"), "w") as fh:
        json.dump(truth, fh, indent=1)


def load_scenario(cfg, out_dir):
    """Rebuild a Scenario from files written by ``save_scenario``."""
    with open(os.path.join(out_dir, "truth.json")) as fh:
        truth = json.load(fh)
    log = ObservationLog.load(os.path.join(out_dir, "log.jsonl"))
    clog = ObservationLog.load(os.path.join(out_dir, "calibration_log.jsonl"))
    trajs = [Trajectory(np.array(s), np.array(a)) for s, a in truth["trajectories"]]
    calib = [Trajectory(np.array(s), np.array(a)) for s, a in truth["calibration"]]
    spec_raw = {k: tuple(v) if isinstance(v, list) else v for k, v in truth["spec"].items()}
    if truth["domain"] == "gridworld":
        spec = GridworldSpec(**spec_raw)
        model = build_gridworld(spec, 0)
        elem = np.array(truth.get("element_obs", np.zeros((0, 4))), dtype=float).reshape(-1, 4)
        _, expert = solve_optimal(model.mdp, model.reward)
        true_obs = DirichletObsModel(model.subject_obs * FIXED_ALPHA_MASS, elem * FIXED_ALPHA_MASS)
        prior = _prior(calib, clog, model.mdp, len(log.element_names), cfg)
        return Scenario("gridworld", spec, truth["seed"], model.mdp, model.reward, expert, trajs, log,
                        calib, clog, prior, true_obs)
    spec = OnionSpec(**spec_raw)
    mdp, reward = build_onion_mdp(spec)
    prior = _prior(calib, clog, mdp, len(log.element_names), cfg)
    return Scenario("onion", spec, truth["seed"], mdp, reward, expert_policy(mdp, reward), trajs, log,
                    calib, clog, prior)
