"""Baseline data-set builders that skip joint trajectory inference."""
import numpy as np

from ..mdp import Trajectory


def ml_trajectories(obs_model, log):
    """Per-timestep argmax over (s, a) of sum_n eta_n(subject) log O_{s,a}(omega_n).

    Timesteps are decoded independently, so the result need not be
    transition-consistent.  Ties (including empty timesteps) go to the lowest
    flat (s, a) index.
    """
    logO = np.log(obs_model.subject_mean)
    S, A, W = logO.shape
    flat = logO.reshape(S * A, W)
    out = []
    for obs in log.trajectories:
        weights = np.zeros((obs.n_steps, W))
        np.add.at(weights, (obs.step, obs.omega), obs.eta[:, 0])
        best = np.argmax(weights @ flat.T, axis=1)
        out.append(Trajectory(best // A, best % A))
    return out


def ml_observations(log):
    """Keep observations whose most likely source is the subject, with eta = (1,)."""
    trajs = []
    for obs in log.trajectories:
        keep = np.argmax(obs.eta, axis=1) == 0 if len(obs) else np.zeros(0, dtype=bool)
        trajs.append(obs.select(keep, np.ones((int(keep.sum()), 1))))
    return log.with_trajectories(trajs, element_names=())


def consistency_audit(trajectories, mdp):
    """Number of transition-inconsistent steps in each trajectory."""
    counts = []
    for traj in trajectories:
        s, a = traj.states, traj.actions
        bad = int(mdp.start[s[0]] <= 0)
        bad += int(np.sum(mdp.transition[s[:-1], a[:-1], s[1:]] <= 0))
        counts.append(bad)
    return counts


def purity_recall(original, filtered_keep):
    """Share of retained observations that truly came from the subject, and share of subject observations retained."""
    kept_true = kept = true_total = 0
    for obs, keep in zip(original.trajectories, filtered_keep):
        if obs.source is None:
            raise ValueError("purity needs simulator source labels")
        subj = obs.source == 0
        kept += int(keep.sum())
        kept_true += int((keep & subj).sum())
        true_total += int(subj.sum())
    purity = kept_true / kept if kept else 0.0
    recall = kept_true / true_total if true_total else 0.0
    return purity, recall
