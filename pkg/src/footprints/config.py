"""Run configuration: strict YAML parsing plus non-raising validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import de, ela, models
from .errors import ConfigurationError
from .suite import N_PROBLEMS

T_MODES = ("train-median", "explicit")
SCALES = ("log", "raw")

_DEFAULT_PROBLEMS = list(range(1, N_PROBLEMS + 1))
_DEFAULT_INSTANCES = [1, 2, 3, 4, 5]


@dataclass
class RunConfig:
    master_seed: int = 0
    # suite
    problems: list[int] = field(default_factory=lambda: list(_DEFAULT_PROBLEMS))
    instances: list[int] = field(default_factory=lambda: list(_DEFAULT_INSTANCES))
    dimension: int = 10
    # de
    budget_multiplier: int = 500
    n_runs: int = 30
    de_configs: list[dict] = field(default_factory=list)  # empty: default portfolio
    # ela
    sample_multiplier: int = 100
    # model
    model_kinds: list[str] = field(default_factory=lambda: ["random_forest"])
    portfolio_sizes: list[int] = field(default_factory=lambda: [30])
    k_folds: int = 5
    forest_trees: int = 100
    knn_neighbors: int = 5
    kernel_penalty: float = 1e-3
    selection_permutations: int = 64
    # footprint
    footprint_config_id: str = "DE1"
    footprint_model: str = "random_forest"
    footprint_portfolio_size: int = 30
    p: float = 0.15
    t_mode: str = "train-median"
    t_value: float | None = None
    scale: str = "log"
    sensitivity_p: list[float] = field(default_factory=list)
    # report
    report_top_k: int = 10
    distribution_features: list[str] | str = "auto"

    # ------------------------------------------------------------------
    def resolved_de_configs(self) -> list[de.DeConfig]:
        if not self.de_configs:
            return de.default_portfolio(self.dimension)
        out = []
        for raw in self.de_configs:
            pop = raw.get("population_size") or de.default_population_size(self.dimension)
            out.append(
                de.DeConfig(
                    config_id=str(raw["config_id"]),
                    strategy=str(raw["strategy"]),
                    F=float(raw["F"]),
                    Cr=float(raw["Cr"]),
                    population_size=int(pop),
                )
            )
        return out

    @property
    def budget(self) -> int:
        return self.budget_multiplier * self.dimension

    @property
    def sample_size(self) -> int:
        return self.sample_multiplier * self.dimension

    def canonical(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "suite": {
                "problems": list(self.problems),
                "instances": list(self.instances),
                "dimension": self.dimension,
            },
            "de": {
                "budget_multiplier": self.budget_multiplier,
                "n_runs": self.n_runs,
                "configs": self.de_configs,
            },
            "ela": {"sample_multiplier": self.sample_multiplier},
            "model": {
                "kinds": list(self.model_kinds),
                "portfolio_sizes": list(self.portfolio_sizes),
                "k_folds": self.k_folds,
                "forest_trees": self.forest_trees,
                "knn_neighbors": self.knn_neighbors,
                "kernel_penalty": self.kernel_penalty,
                "selection_permutations": self.selection_permutations,
            },
            "footprint": {
                "config_id": self.footprint_config_id,
                "model": self.footprint_model,
                "portfolio_size": self.footprint_portfolio_size,
                "p": self.p,
                "t_mode": self.t_mode,
                "t_value": self.t_value,
                "scale": self.scale,
                "sensitivity_p": list(self.sensitivity_p),
            },
            "report": {
                "top_k": self.report_top_k,
                "distribution_features": self.distribution_features,
            },
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_SCHEMA = {
    "master_seed": None,
    "suite": {"problems", "instances", "dimension"},
    "de": {"budget_multiplier", "n_runs", "configs"},
    "ela": {"sample_multiplier"},
    "model": {
        "kinds", "portfolio_sizes", "k_folds", "forest_trees", "knn_neighbors",
        "kernel_penalty", "selection_permutations",
    },
    "footprint": {
        "config_id", "model", "portfolio_size", "p", "t_mode", "t_value",
        "scale", "sensitivity_p",
    },
    "report": {"top_k", "distribution_features"},
}

_DE_CONFIG_KEYS = {"config_id", "strategy", "F", "Cr", "population_size"}


def _expand_ids(raw) -> list[int]:
    """Accept [1,2,3], "1-24", or a single int."""
    if isinstance(raw, int):
        return [raw]
    if isinstance(raw, str):
        lo, _, hi = raw.partition("-")
        if not hi:
            raise ConfigurationError(f"cannot parse id range {raw!r}")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in raw]


def parse_config(data: dict) -> RunConfig:
    """Strict parse; unknown keys are errors naming the key."""
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    for key in data:
        if key not in _SCHEMA:
            raise ConfigurationError(f"unknown config key: {key!r}")
        allowed = _SCHEMA[key]
        if allowed is not None:
            section = data[key] or {}
            if not isinstance(section, dict):
                raise ConfigurationError(f"config section {key!r} must be a mapping")
            for sub in section:
                if sub not in allowed:
                    raise ConfigurationError(f"unknown config key: {key}.{sub}")

    cfg = RunConfig()
    if "master_seed" in data:
        cfg.master_seed = int(data["master_seed"])
    suite = data.get("suite") or {}
    if "problems" in suite:
        cfg.problems = _expand_ids(suite["problems"])
    if "instances" in suite:
        cfg.instances = _expand_ids(suite["instances"])
    if "dimension" in suite:
        cfg.dimension = int(suite["dimension"])
    de_section = data.get("de") or {}
    if "budget_multiplier" in de_section:
        cfg.budget_multiplier = int(de_section["budget_multiplier"])
    if "n_runs" in de_section:
        cfg.n_runs = int(de_section["n_runs"])
    if "configs" in de_section and de_section["configs"]:
        for i, raw in enumerate(de_section["configs"]):
            if not isinstance(raw, dict):
                raise ConfigurationError(f"de.configs[{i}] must be a mapping")
            for sub in raw:
                if sub not in _DE_CONFIG_KEYS:
                    raise ConfigurationError(f"unknown config key: de.configs[{i}].{sub}")
        cfg.de_configs = [dict(raw) for raw in de_section["configs"]]
    ela_section = data.get("ela") or {}
    if "sample_multiplier" in ela_section:
        cfg.sample_multiplier = int(ela_section["sample_multiplier"])
    model = data.get("model") or {}
    if "kinds" in model:
        cfg.model_kinds = [str(k) for k in model["kinds"]]
    if "portfolio_sizes" in model:
        cfg.portfolio_sizes = [int(s) for s in model["portfolio_sizes"]]
    if "k_folds" in model:
        cfg.k_folds = int(model["k_folds"])
    if "forest_trees" in model:
        cfg.forest_trees = int(model["forest_trees"])
    if "knn_neighbors" in model:
        cfg.knn_neighbors = int(model["knn_neighbors"])
    if "kernel_penalty" in model:
        cfg.kernel_penalty = float(model["kernel_penalty"])
    if "selection_permutations" in model:
        cfg.selection_permutations = int(model["selection_permutations"])
    fp = data.get("footprint") or {}
    if "config_id" in fp:
        cfg.footprint_config_id = str(fp["config_id"])
    if "model" in fp:
        cfg.footprint_model = str(fp["model"])
    if "portfolio_size" in fp:
        cfg.footprint_portfolio_size = int(fp["portfolio_size"])
    if "p" in fp:
        cfg.p = float(fp["p"])
    if "t_mode" in fp:
        cfg.t_mode = str(fp["t_mode"])
    if "t_value" in fp and fp["t_value"] is not None:
        cfg.t_value = float(fp["t_value"])
    if "scale" in fp:
        cfg.scale = str(fp["scale"])
    if "sensitivity_p" in fp and fp["sensitivity_p"]:
        cfg.sensitivity_p = [float(v) for v in fp["sensitivity_p"]]
    report = data.get("report") or {}
    if "top_k" in report:
        cfg.report_top_k = int(report["top_k"])
    if "distribution_features" in report:
        raw = report["distribution_features"]
        cfg.distribution_features = raw if isinstance(raw, str) else [str(v) for v in raw]
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config file: {exc}") from exc
    return parse_config(data or {})


def validate(cfg: RunConfig) -> list[str]:
    """All invariant violations, without running anything."""
    issues: list[str] = []
    if cfg.master_seed < 0:
        issues.append("master_seed must be >= 0")
    if not cfg.problems:
        issues.append("suite.problems must be non-empty")
    bad = [p for p in cfg.problems if not 1 <= p <= N_PROBLEMS]
    if bad:
        issues.append(f"suite.problems contains unknown ids {bad}")
    if not cfg.instances:
        issues.append("suite.instances must be non-empty")
    if any(i < 1 for i in cfg.instances):
        issues.append("suite.instances must all be >= 1")
    if cfg.dimension < 2:
        issues.append("suite.dimension must be >= 2")
    if cfg.n_runs < 1:
        issues.append("de.n_runs must be >= 1")
    try:
        configs = cfg.resolved_de_configs()
        ids = [c.config_id for c in configs]
        if len(set(ids)) != len(ids):
            issues.append(f"de.configs ids must be unique; got {ids}")
        for c in configs:
            if cfg.budget < c.population_size:
                issues.append(
                    f"budget {cfg.budget} below population {c.population_size} of {c.config_id}"
                )
        if cfg.footprint_config_id not in ids:
            issues.append(
                f"footprint.config_id {cfg.footprint_config_id!r} not among de configs {ids}"
            )
    except (ConfigurationError, KeyError, TypeError, ValueError) as exc:
        issues.append(f"de.configs invalid: {exc}")
    min_n = ela.minimum_sample_size(cfg.dimension) if cfg.dimension >= 2 else 0
    if cfg.dimension >= 2 and cfg.sample_size < min_n:
        issues.append(
            f"ela sample size {cfg.sample_size} below required {min_n} for D={cfg.dimension}"
        )
    for kind in cfg.model_kinds:
        if kind not in models.MODEL_KINDS:
            issues.append(f"model.kinds contains unknown kind {kind!r}")
    if any(s < 1 for s in cfg.portfolio_sizes):
        issues.append("model.portfolio_sizes must all be >= 1")
    if cfg.k_folds != len(set(cfg.instances)):
        issues.append(
            f"model.k_folds ({cfg.k_folds}) must equal the instance count per problem "
            f"({len(set(cfg.instances))}) so each test fold holds one instance per problem"
        )
    if cfg.k_folds < 2:
        issues.append("model.k_folds must be >= 2")
    if cfg.forest_trees < 1:
        issues.append("model.forest_trees must be >= 1")
    if cfg.knn_neighbors < 1:
        issues.append("model.knn_neighbors must be >= 1")
    if cfg.kernel_penalty <= 0:
        issues.append("model.kernel_penalty must be positive")
    if cfg.footprint_model not in cfg.model_kinds:
        issues.append(
            f"footprint.model {cfg.footprint_model!r} not among model.kinds {cfg.model_kinds}"
        )
    if cfg.footprint_portfolio_size not in cfg.portfolio_sizes:
        issues.append(
            f"footprint.portfolio_size {cfg.footprint_portfolio_size} not among "
            f"model.portfolio_sizes {cfg.portfolio_sizes}"
        )
    if not 0.0 < cfg.p <= 1.0:
        issues.append(f"footprint.p must be in (0, 1]; got {cfg.p}")
    if cfg.t_mode not in T_MODES:
        issues.append(f"footprint.t_mode must be one of {T_MODES}")
    if cfg.t_mode == "explicit" and cfg.t_value is None:
        issues.append("footprint.t_value required when t_mode is 'explicit'")
    if cfg.scale not in SCALES:
        issues.append(f"footprint.scale must be one of {SCALES}")
    for v in cfg.sensitivity_p:
        if not 0.0 < v <= 1.0:
            issues.append(f"footprint.sensitivity_p values must be in (0, 1]; got {v}")
    if cfg.report_top_k < 1:
        issues.append("report.top_k must be >= 1")
    return issues
