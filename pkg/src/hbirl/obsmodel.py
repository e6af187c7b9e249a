"""Dirichlet-multinomial observation models and observation logs.

Sources are indexed with 0 = subject and 1..|E| = confounding elements in the
order of ``ObservationLog.element_names``.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

EPS = 0.01
ALPHA_FORMAT = "hbirl-alpha"
LOG_FORMAT = "hbirl-observation-log"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ObservationVocabulary:
    symbols: tuple

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise InvalidInputError("vocabulary must be non-empty")
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise InvalidInputError("duplicate observation symbols")

    def __len__(self):
        return len(self.symbols)

    def index(self, name):
        return self.symbols.index(name)


def dirichlet_mean(alpha, eps=EPS):
    """Mean of a Dirichlet, row-wise over the last axis.

    Rows are floored at ``eps`` first, so an all-zero row maps to uniform.
    """
    alpha = np.maximum(np.asarray(alpha, dtype=float), eps)
    return alpha / alpha.sum(axis=-1, keepdims=True)


def scale_alpha(alpha, factor):
    if factor <= 0:
        raise InvalidInputError("scale factor must be positive")
    return np.asarray(alpha, dtype=float) * factor


def blend_alpha(alpha_prev, alpha_dot, c):
    """Convex update c * alpha_dot + (1 - c) * alpha_prev."""
    if not 0.0 < c < 1.0:
        raise InvalidInputError("blend constant must lie in (0, 1)")
    alpha_prev = np.asarray(alpha_prev, dtype=float)
    alpha_dot = np.asarray(alpha_dot, dtype=float)
    if alpha_prev.shape != alpha_dot.shape:
        raise InvalidInputError("alpha shapes differ")
    return c * alpha_dot + (1.0 - c) * alpha_prev


@dataclass(frozen=True, eq=False)
class DirichletObsModel:
    """Subject alpha indexed (s, a, omega) and confounder alpha indexed (element, omega).

    Every entry is floored at ``EPS`` on construction.
    """

    subject_alpha: np.ndarray
    confounder_alpha: np.ndarray

    def __post_init__(self):
        subj = np.asarray(self.subject_alpha, dtype=float)
        conf = np.asarray(self.confounder_alpha, dtype=float)
        if subj.ndim != 3:
            raise InvalidInputError("subject alpha must be (S, A, W)")
        if conf.ndim != 2 or conf.shape[1] != subj.shape[2]:
            conf = conf.reshape(-1, subj.shape[2])
        if np.any(subj < 0) or np.any(conf < 0):
            raise InvalidInputError("alpha must be nonnegative")
        object.__setattr__(self, "subject_alpha", np.maximum(subj, EPS))
        object.__setattr__(self, "confounder_alpha", np.maximum(conf, EPS))

    @classmethod
    def symmetric(cls, n_states, n_actions, n_symbols, n_elements, subject=1.0, confounder=1.0):
        return cls(
            np.full((n_states, n_actions, n_symbols), subject),
            np.full((n_elements, n_symbols), confounder),
        )

    @property
    def n_elements(self):
        return self.confounder_alpha.shape[0]

    @property
    def n_symbols(self):
        return self.subject_alpha.shape[2]

    @property
    def subject_mean(self):
        return dirichlet_mean(self.subject_alpha)

    @property
    def confounder_mean(self):
        return dirichlet_mean(self.confounder_alpha)

    def emission(self, z, s=None, a=None):
        """O_Z for a confounder, O_{s,a} for the subject (z == 0)."""
        if z == 0:
            return self.subject_mean[s, a]
        return self.confounder_mean[z - 1]

    def max_row_change(self, other):
        d_subj = np.abs(self.subject_mean - other.subject_mean).sum(axis=-1).max()
        d_conf = 0.0
        if self.n_elements:
            d_conf = np.abs(self.confounder_mean - other.confounder_mean).sum(axis=-1).max()
        return float(max(d_subj, d_conf))

    def save(self, path, element_names=()):
        doc = {
            "format": ALPHA_FORMAT,
            "version": FORMAT_VERSION,
            "element_names": list(element_names),
            "subject_shape": list(self.subject_alpha.shape),
            "subject": [float(x) for x in self.subject_alpha.ravel()],
            "confounder_shape": list(self.confounder_alpha.shape),
            "confounder": [float(x) for x in self.confounder_alpha.ravel()],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != ALPHA_FORMAT or doc.get("version") != FORMAT_VERSION:
            raise InvalidInputError(f"{path}: not a version {FORMAT_VERSION} alpha file")
        subj = np.array(doc["subject"], dtype=float).reshape(doc["subject_shape"])
        conf = np.array(doc["confounder"], dtype=float).reshape(doc["confounder_shape"])
        return cls(subj, conf)


@dataclass(eq=False)
class TrajectoryObservations:
    """Bags of (omega, eta) for one trajectory, flattened in timestep order.

    ``source`` holds the simulator's true label for each observation when
    known (audits only; learners never read it).
    """

    n_steps: int
    omega: np.ndarray
    eta: np.ndarray
    step: np.ndarray
    source: np.ndarray | None = None

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.int64).reshape(-1)
        self.step = np.asarray(self.step, dtype=np.int64).reshape(-1)
        n = len(self.omega)
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 2:
            eta = eta.reshape(n, -1) if n else np.zeros((0, 1))
        self.eta = eta
        if self.source is not None:
            self.source = np.asarray(self.source, dtype=np.int64).reshape(-1)
        if len(self.step) != n or len(self.eta) != n:
            raise InvalidInputError("observation arrays disagree in length")
        if n and (np.any(np.diff(self.step) < 0) or self.step[0] < 0 or self.step[-1] >= self.n_steps):
            raise InvalidInputError("observation steps must be sorted and within the trajectory")
        if n and not np.allclose(self.eta.sum(axis=1), 1.0, atol=1e-9):
            raise InvalidInputError("every eta must sum to 1")

    def __len__(self):
        return len(self.omega)

    @property
    def offsets(self):
        return np.searchsorted(self.step, np.arange(self.n_steps + 1), side="left")

    def at(self, t):
        lo, hi = self.offsets[t], self.offsets[t + 1]
        return self.omega[lo:hi], self.eta[lo:hi]

    def counts_per_step(self):
        return np.bincount(self.step, minlength=self.n_steps)

    def select(self, mask, eta=None):
        mask = np.asarray(mask, dtype=bool)
        return TrajectoryObservations(
            self.n_steps,
            self.omega[mask],
            self.eta[mask] if eta is None else eta,
            self.step[mask],
            None if self.source is None else self.source[mask],
        )


@dataclass(eq=False)
class ObservationLog:
    trajectories: list
    vocabulary: ObservationVocabulary
    element_names: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.element_names = tuple(self.element_names)
        k = 1 + len(self.element_names)
        for i, tr in enumerate(self.trajectories):
            if len(tr) and tr.eta.shape[1] != k:
                raise InvalidInputError(f"trajectory {i}: eta length {tr.eta.shape[1]} != {k}")
            if len(tr) and (tr.omega.min() < 0 or tr.omega.max() >= len(self.vocabulary)):
                raise InvalidInputError(f"trajectory {i}: observation id out of range")

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_sources(self):
        return 1 + len(self.element_names)

    @property
    def total_observations(self):
        return sum(len(tr) for tr in self.trajectories)

    def with_trajectories(self, trajectories, element_names=None):
        names = self.element_names if element_names is None else element_names
        return ObservationLog(list(trajectories), self.vocabulary, names, dict(self.metadata))

    def save(self, path):
        with open(path, "w") as fh:
            header = {
                "header": True,
                "format": LOG_FORMAT,
                "version": FORMAT_VERSION,
                "vocabulary": list(self.vocabulary.symbols),
                "elements": list(self.element_names),
                "config": self.metadata,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            syms = self.vocabulary.symbols
            for i, tr in enumerate(self.trajectories):
                offs = tr.offsets
                for t in range(tr.n_steps):
                    items = []
                    for j in range(offs[t], offs[t + 1]):
                        eta = ", ".join(format(float(v), ".17g") for v in tr.eta[j])
                        extra = "" if tr.source is None else f', "source": {int(tr.source[j])}'
                        items.append(f'{{"omega": {json.dumps(syms[tr.omega[j]])}, "eta": [{eta}]{extra}}}')
                    fh.write(f'{{"trajectory_index": {i}, "t": {t}, "observations": [{", ".join(items)}]}}\n')

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or not lines[0].get("header") or lines[0].get("format") != LOG_FORMAT:
            raise InvalidInputError(f"{path}: missing observation-log header")
        head = lines[0]
        vocab = ObservationVocabulary(tuple(head["vocabulary"]))
        k = 1 + len(head["elements"])
        per_traj = {}
        for rec in lines[1:]:
            per_traj.setdefault(rec["trajectory_index"], []).append(rec)
        trajs = []
        for i in sorted(per_traj):
            recs = sorted(per_traj[i], key=lambda r: r["t"])
            omega, eta, step, source = [], [], [], []
            for rec in recs:
                for ob in rec["observations"]:
                    omega.append(vocab.index(ob["omega"]))
                    eta.append(ob["eta"])
                    step.append(rec["t"])
                    source.append(ob.get("source", -1))
            has_src = bool(source) and all(s >= 0 for s in source)
            trajs.append(TrajectoryObservations(
                len(recs), omega, np.array(eta, dtype=float).reshape(-1, k), step,
                np.array(source) if has_src else None,
            ))
        return cls(trajs, vocab, tuple(head["elements"]), head.get("config", {}))


def fit_alpha(true_demo, log, n_states, n_actions, eps=EPS):
    """Count each symbol seen while the subject was at (s, a), plus ``eps``.

    ``log`` must come from a fully controlled environment (no confounders).
    """
    true_demo = list(true_demo)
    if log.element_names:
        raise InvalidInputError("fit_alpha needs a log without confounding elements")
    if len(true_demo) != len(log):
        raise InvalidInputError("trajectory and log counts differ")
    alpha = np.full((n_states, n_actions, len(log.vocabulary)), eps)
    for i, (traj, obs) in enumerate(zip(true_demo, log.trajectories)):
        if obs.n_steps != len(traj):
            raise InvalidInputError(f"trajectory {i}: {len(traj)} steps but log has {obs.n_steps}")
        np.add.at(alpha, (traj.states[obs.step], traj.actions[obs.step], obs.omega), 1.0)
    return alpha
