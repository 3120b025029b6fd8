# bench/config.py
"""
Experiment configuration.

A config is a nested JSON document. `load_experiment_config` starts from a
preset under config/presets/, deep-merges the user's file over it and then
applies CLI overrides (seeds, output dir, workers, diagnostics).
"""
import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from federated.baselines import BASELINE_KINDS
from federated.errors import InvalidConfigError
from federated.estimators import ESTIMATOR_KINDS
from utils.resource_path import resource_path

logger = logging.getLogger(__name__)

ALGO_KINDS = ("icgm",) + BASELINE_KINDS
PARAM_MODES = ("experiment", "theorem", "participation", "explicit")
PROBLEM_KINDS = ("quadratic", "logistic")
COST_SWEEP_KEYS = ("cost.c_a", "cost.c_r", "cost.m")
PROBLEM_SWEEP_KEYS = ("problem.n",)


@dataclass
class ProblemSpec:
    kind: str = "quadratic"
    seed: int = 0
    # QuadLogSumParams fields for the quadratic generator
    params: Dict[str, Any] = field(default_factory=dict)
    # logistic settings
    dataset: Optional[str] = None
    n: int = 10
    alpha: float = 0.1
    split: str = "contiguous"
    dirichlet_alpha: float = 0.5
    binarize_labels: bool = False
    n_features: Optional[int] = None
    sample_pairs: int = 32
    sample_radius: float = 1.0

    def validate(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise InvalidConfigError(f"problem kind must be one of {PROBLEM_KINDS}, got '{self.kind}'")
        if self.kind == "logistic" and not self.dataset:
            raise InvalidConfigError("logistic problems need a dataset path")

    @property
    def n_clients(self) -> int:
        if self.kind == "quadratic":
            return int(self.params.get("n", 100))
        return self.n


@dataclass
class AlgorithmSpec:
    name: str
    algo: str = "icgm"
    estimator: str = "rg-saga"
    params: str = "experiment"
    overrides: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.algo not in ALGO_KINDS:
            raise InvalidConfigError(f"algorithm '{self.name}': algo must be one of {ALGO_KINDS}, got '{self.algo}'")
        if self.algo == "icgm" and self.estimator not in ESTIMATOR_KINDS:
            raise InvalidConfigError(f"algorithm '{self.name}': unknown estimator '{self.estimator}'")
        if self.params not in PARAM_MODES:
            raise InvalidConfigError(f"algorithm '{self.name}': params must be one of {PARAM_MODES}")
        if "/" in self.name or "__" in self.name:
            raise InvalidConfigError(f"algorithm name '{self.name}' may not contain '/' or '__'")


@dataclass
class SweepSpec:
    param: str
    values: List[Any]

    def validate(self) -> None:
        if not self.values:
            raise InvalidConfigError(f"sweep over '{self.param}' has no values")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    cost: Dict[str, Any] = field(default_factory=lambda: {"m": 10, "c_a": 1, "c_r": 1})
    algorithms: List[AlgorithmSpec] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    T: int = 200
    epsilon: Optional[float] = None
    output_dir: str = "runs"
    diagnostics: bool = True
    workers: int = 1
    sweep: Optional[SweepSpec] = None
    thresholds: List[float] = field(default_factory=lambda: [1e-2, 1e-4])

    def validate(self) -> "ExperimentConfig":
        self.problem.validate()
        if not self.algorithms:
            raise InvalidConfigError("an experiment needs at least one algorithm")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise InvalidConfigError(f"algorithm names must be unique, got {names}")
        for algorithm in self.algorithms:
            algorithm.validate()
        if not self.seeds:
            raise InvalidConfigError("an experiment needs at least one seed")
        if any(int(s) < 0 for s in self.seeds):
            raise InvalidConfigError("seeds must be nonnegative")
        if self.T < 1:
            raise InvalidConfigError(f"T must be at least 1, got {self.T}")
        if self.workers < 1:
            raise InvalidConfigError(f"workers must be at least 1, got {self.workers}")
        if "m" not in self.cost:
            raise InvalidConfigError("cost config needs m")
        if self.sweep is not None:
            self.sweep.validate()
        return self

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExperimentConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfigError(f"unknown experiment keys: {sorted(unknown)}")
        try:
            if "problem" in raw:
                raw["problem"] = ProblemSpec(**raw["problem"])
            if "algorithms" in raw:
                raw["algorithms"] = [AlgorithmSpec(**a) for a in raw["algorithms"]]
            raw["sweep"] = SweepSpec(**raw["sweep"]) if raw.get("sweep") else None
            return cls(**raw).validate()
        except TypeError as e:
            raise InvalidConfigError(f"malformed experiment config: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; lists and scalars in ``override`` replace those in ``base``."""
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def preset_path(name: str) -> Path:
    return resource_path("config", "presets", f"{name}.json")


def preset_names() -> List[str]:
    directory = resource_path("config", "presets")
    if not directory.exists():
        return []
    return sorted(p.stem for p in directory.glob("*.json"))


def load_json(path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"{path}: invalid JSON ({e})") from e


def load_experiment_config(preset: Optional[str] = None, config_path: Optional[str] = None,
                           overrides: Optional[Mapping[str, Any]] = None,
                           defaults: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Layers, lowest first: ``defaults``, the preset, the config file, ``overrides`` (None values skipped)."""
    raw: Dict[str, Any] = dict(defaults or {})
    if preset:
        path = preset_path(preset)
        if not path.exists():
            raise InvalidConfigError(f"unknown preset '{preset}', available: {preset_names()}")
        raw = deep_merge(raw, load_json(path))
        logger.info("Loaded preset '%s' from %s", preset, path)
    if config_path:
        raw = deep_merge(raw, load_json(config_path))
        logger.info("Merged experiment config from %s", config_path)
    if overrides:
        raw = deep_merge(raw, {k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(raw)
