"""
Experiment configuration for the split federated learning simulator.

Supports three learning-rate modes:
- preset: eta_g, eta_s and eta_c used as configured (defaults below)
- theory-coupled: eta_c = tau * eta_s
- theory: theory-coupled, plus eta_g = sqrt(tau * M)

Config files are YAML with sections model, training, learning_rates, delays,
dataset, run and sweep. Every field has a default, so an empty file is a valid
(small) experiment.
"""

import math
import os
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from model.split_model import recommend_cut

# Default hyperparameters
DEFAULT_LEARNING_RATES = {
    "eta_g": 0.3,
    "eta_s": 0.01,
    "eta_c": 0.005,
}
DEFAULT_LAMBDA = 0.005
DEFAULT_BATCH_SIZE = 32

LR_MODES = ("preset", "theory-coupled", "theory")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    widths: list[int] = Field(default_factory=lambda: [16, 8, 8, 3], min_length=3)
    activation: Literal["relu", "tanh", "identity"] = "relu"
    cut_layer: int | Literal["auto"] = 1

    @model_validator(mode="after")
    def _check(self):
        if any(w < 1 for w in self.widths):
            raise ValueError("all layer widths must be positive")
        if self.cut_layer != "auto" and not 1 <= self.cut_layer <= len(self.widths) - 2:
            raise ValueError(
                f"cut_layer must be in [1, {len(self.widths) - 2}] or 'auto', got {self.cut_layer}"
            )
        return self


class TrainingSection(_Section):
    rounds: int = Field(default=100, ge=0)
    tau: int = Field(default=1, ge=1)
    num_clients: int = Field(default=10, ge=1)
    participation: float = Field(default=0.5, gt=0, le=1)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, ge=1)
    lam: float = Field(default=DEFAULT_LAMBDA, gt=0)
    num_perturbations: int = Field(default=1, ge=1)
    weighting: Literal["equal", "data-size"] = "equal"
    eval_interval: int = Field(default=10, ge=1)


class LearningRateSection(_Section):
    mode: Literal["preset", "theory-coupled", "theory"] = "preset"
    eta_g: float = Field(default=DEFAULT_LEARNING_RATES["eta_g"], gt=0)
    eta_s: float = Field(default=DEFAULT_LEARNING_RATES["eta_s"], gt=0)
    eta_c: float = Field(default=DEFAULT_LEARNING_RATES["eta_c"], gt=0)


class DelaySection(_Section):
    distribution: Literal["exponential", "fixed"] = "exponential"
    t_server: float = Field(default=1.0, gt=0)
    client_means: list[float] | None = None
    base_mean: float | None = Field(default=None, gt=0)
    straggler: int | None = Field(default=None, ge=0)
    straggler_factor: float = Field(default=4.0, gt=0)
    overhead: float = Field(default=0.0, ge=0)


class DatasetSection(_Section):
    kind: Literal["blobs", "csv"] = "blobs"
    num_classes: int = Field(default=3, ge=2)
    dim: int = Field(default=16, ge=1)
    samples_per_class: int = Field(default=200, ge=1)
    spread: float = Field(default=1.0, ge=0)
    separation: float = Field(default=1.0, gt=0)
    path: str | None = None
    label_column: str | int = "label"
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    alpha: float | Literal["iid"] = "iid"
    standardize: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "csv" and not self.path:
            raise ValueError("a csv dataset needs a path")
        if self.alpha != "iid" and not self.alpha > 0:
            raise ValueError("alpha must be positive or 'iid'")
        return self


class RunSection(_Section):
    out: str = "runs"
    run_id: str | None = None
    trace: bool = False
    workers: int = Field(default=1, ge=1)


class SweepSection(_Section):
    taus: list[int] = Field(default_factory=lambda: [1, 2, 4], min_length=1)
    cuts: list[int] | None = None
    target: float = Field(default=0.85, ge=0, le=1)

    @model_validator(mode="after")
    def _check(self):
        for name, values in (("taus", self.taus), ("cuts", self.cuts or [])):
            if any(v < 1 for v in values):
                raise ValueError(f"sweep.{name} values must be >= 1")
            if len(set(values)) != len(values):
                raise ValueError(f"sweep.{name} contains duplicates")
        return self


class ExperimentConfig(_Section):
    seed: int = 0
    model: ModelSection = Field(default_factory=ModelSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    learning_rates: LearningRateSection = Field(default_factory=LearningRateSection)
    delays: DelaySection = Field(default_factory=DelaySection)
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    run: RunSection = Field(default_factory=RunSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    @model_validator(mode="after")
    def _check_cross_fields(self):
        M = self.training.num_clients
        if self.delays.client_means is not None and len(self.delays.client_means) != M:
            raise ValueError(
                f"delays.client_means has {len(self.delays.client_means)} entries for {M} clients"
            )
        if self.delays.straggler is not None and self.delays.straggler >= M:
            raise ValueError(f"delays.straggler must be < training.num_clients ({M})")
        if self.dataset.kind == "blobs" and self.dataset.dim != self.model.widths[0]:
            raise ValueError(
                f"model.widths[0] ({self.model.widths[0]}) must equal dataset.dim ({self.dataset.dim})"
            )
        if self.dataset.kind == "blobs" and self.dataset.num_classes != self.model.widths[-1]:
            raise ValueError(
                f"model.widths[-1] ({self.model.widths[-1]}) must equal dataset.num_classes "
                f"({self.dataset.num_classes})"
            )
        return self

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """
        Copy with some fields replaced, re-validated.

        Keys are dotted paths, e.g. with_overrides(**{"training.tau": 4}).
        """
        data = self.model_dump()
        for path, value in sections.items():
            node = data
            *parents, leaf = path.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        return parse_config(data)


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  - {path}: {item['msg']}")
    return "Invalid experiment config:\n" + "\n".join(lines)


def parse_config(data: dict | None) -> ExperimentConfig:
    """Validate a config mapping, reporting problems with their field paths."""
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from None


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    Args:
        path: YAML config file
        seed: Optional override of the seed in the file

    Returns:
        Validated ExperimentConfig with all defaults filled in
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Could not parse {path}: {e}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping of config sections")
    config = parse_config(data)
    if seed is not None:
        config = config.with_overrides(seed=seed)
    return config


def dump_config(config: ExperimentConfig) -> str:
    """YAML text of the effective config; loading it back gives an equal config."""
    return yaml.safe_dump(config.model_dump(), sort_keys=False, default_flow_style=None)


def resolve_cut_layer(config: ExperimentConfig) -> int:
    """Configured cut, or the recommended one for tau when set to 'auto'."""
    if config.model.cut_layer == "auto":
        return recommend_cut(config.model.widths, config.training.tau)
    return config.model.cut_layer


def effective_learning_rates(config: ExperimentConfig) -> tuple[float, float, float]:
    """
    Return (eta_g, eta_s, eta_c) after applying the learning-rate mode.

    Priority: theory > theory-coupled > preset
    """
    lr = config.learning_rates
    tau = config.training.tau
    if lr.mode == "preset":
        return lr.eta_g, lr.eta_s, lr.eta_c
    eta_c = tau * lr.eta_s
    if lr.mode == "theory-coupled":
        return lr.eta_g, lr.eta_s, eta_c
    return math.sqrt(tau * config.training.num_clients), lr.eta_s, eta_c
