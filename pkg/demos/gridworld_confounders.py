"""Learn the Gridworld goal from observations polluted by confounding elements.

Compares three learners on one simulated data set: the true trajectories,
the full hierarchical model with plausible eta, and a learner that treats
every observation as coming from the subject.

    python demos/gridworld_confounders.py --elements 4 --seed 3
"""
import argparse

import numpy as np

from hbirl.harness.config import config_from_dict
from hbirl.harness.experiment import build_scenario, learn, run_seed, score

p = argparse.ArgumentParser()
p.add_argument("--elements", type=int, default=4)
p.add_argument("--seed", type=int, default=0)
args = p.parse_args()

cfg = config_from_dict({
    "domain": "gridworld",
    "variants": ["true_trajectories", "plausible_eta", "ignore_ce"],
    "em": {"restarts": 1, "max_em_iters": 5},
    "inference": {"samples": 500, "burn_in": 100, "max_outer_iters": 4},
})
seed = run_seed(args.seed, args.elements, 0)
scn = build_scenario(cfg, args.elements, seed)
log = scn.log
subject = np.mean(np.concatenate([o.source for o in log.trajectories]) == 0)
print(f"goal corner {scn.spec.goal_corner}, {len(log)} trajectories, {log.total_observations} observations, "
      f"{100 * subject:.0f}% from the subject")

for variant in cfg.variants:
    res = learn(scn, variant, cfg.em, seed)
    print(f"{variant:18s} weights {np.round(res.weights, 2)}  ILE {score(scn, res.weights):.3g}")
