"""Experiment configuration loaded from YAML."""
from dataclasses import asdict, dataclass, field, fields

import yaml

from ..em import EmOptions
from ..errors import ConfigurationError
from ..maxent import FitOptions
from ..sampler import InferenceOptions

VARIANTS = {
    "gridworld": ("true_trajectories", "true_obs_fn", "plausible_eta", "uniform_eta", "ignore_ce",
                  "ml_trajectories", "ml_observations"),
    "onion": ("true_trajectories", "plausible_eta", "uniform_eta", "ml_trajectories", "ml_observations"),
}
SWEEP_VARIABLE = {"gridworld": "num_elements", "onion": "num_trajectories"}
FULL_SWEEP = {"gridworld": list(range(14)), "onion": list(range(1, 11))}
DESK_SWEEP = {"gridworld": [0, 2, 4, 6], "onion": list(range(1, 11))}


@dataclass
class ExperimentConfig:
    domain: str = "gridworld"
    variants: list = field(default_factory=lambda: ["true_trajectories"])
    sweep: list | None = None
    full_sweep: bool = False
    runs: int = 10
    seed: int = 0
    controlled: bool = False
    alpha_scale: float = 0.1
    confounder_alpha: float = 1.0
    controlled_trajectories: int = 20
    calibration: str = "expert"
    goal_corner: str | int = "random"
    record_wall_time: bool = False
    domain_options: dict = field(default_factory=dict)
    em: EmOptions = field(default_factory=EmOptions)

    def __post_init__(self):
        if self.domain not in VARIANTS:
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if isinstance(self.variants, str):
            self.variants = [self.variants]
        bad = [v for v in self.variants if v not in VARIANTS[self.domain]]
        if bad:
            raise ConfigurationError(f"variants {bad} are not valid for {self.domain}")
        if self.controlled and self.domain != "onion":
            raise ConfigurationError("controlled logs exist only for the onion domain")
        if self.calibration not in ("expert", "walker"):
            raise ConfigurationError("calibration must be 'expert' or 'walker'")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.sweep is None:
            self.sweep = list((FULL_SWEEP if self.full_sweep else DESK_SWEEP)[self.domain])
        self.sweep = [int(v) for v in self.sweep]
        if self.domain == "onion" and min(self.sweep) < 1:
            raise ConfigurationError("onion sweeps need at least one trajectory")

    @property
    def sweep_variable(self):
        return SWEEP_VARIABLE[self.domain]

    def to_dict(self):
        out = asdict(self)
        return out


def _build(cls, raw, where):
    raw = dict(raw or {})
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    return raw


def config_from_dict(raw):
    raw = dict(raw or {})
    em_raw = _build(EmOptions, raw.pop("em", {}), "em")
    fit = FitOptions(**_build(FitOptions, raw.pop("fit", em_raw.pop("fit", {})), "fit"))
    inference = InferenceOptions(**_build(InferenceOptions, raw.pop("inference", em_raw.pop("inference", {})),
                                          "inference"))
    em = EmOptions(fit=fit, inference=inference, **em_raw)
    _build(ExperimentConfig, raw, "experiment")
    try:
        return ExperimentConfig(em=em, **raw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: expected a mapping at the top level")
    return config_from_dict(raw)


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
