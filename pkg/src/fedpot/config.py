"""Experiment configuration: YAML in, validated and fully defaulted models out."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

PRESET_DIR = Path(__file__).parent / "presets"


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SyntheticSection(_Section):
    dim: int = Field(20, ge=1)
    num_classes: int = Field(9, ge=2)
    per_class: int = Field(200, ge=1)
    spread: float = Field(0.08, ge=0.0)
    seed: Optional[int] = None


class DatasetSection(_Section):
    csv: Optional[str] = None
    devices: Optional[list[str]] = None
    holdout_device: int = -1
    label_column: str = "label"
    benign_label: Optional[str] = None
    max_rows_per_file: Optional[int] = Field(None, ge=1)
    # seeded random subsample of each loaded file (after max_rows_per_file)
    sample_per_file: Optional[int] = Field(None, ge=1)
    synthetic: Optional[SyntheticSection] = None
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    # share of SPSs whose logs are repeated ``redundancy_factor`` times
    redundant_fraction: float = Field(0.0, ge=0.0, le=1.0)
    redundancy_factor: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _one_source(self) -> "DatasetSection":
        given = [self.csv is not None, self.devices is not None, self.synthetic is not None]
        if sum(given) != 1:
            raise ValueError("exactly one of csv, devices or synthetic must be set")
        if self.devices is not None and len(self.devices) < 2:
            raise ValueError("devices needs at least two files (one is held out)")
        return self


class PartitionSection(_Section):
    mode: Literal["iid", "noniid"] = "noniid"
    max_classes_per_client: int = Field(2, ge=1)


class AdversarySection(_Section):
    malicious_fraction: float = Field(0.0, ge=0.0, le=1.0)
    attack: Literal["random", "gaussian"] = "random"
    sigma: float = Field(1.0, ge=0.0)


class QualitySection(_Section):
    grid_points: int = Field(64, ge=2)
    reference_mode: Literal["pooled", "uniform"] = "pooled"
    reference_size: int = Field(0, ge=0)


class LearnerSection(_Section):
    hidden_sizes: Optional[list[int]] = None
    epochs: int = Field(10, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(0.01, gt=0.0)
    lr_decay_every: int = Field(0, ge=0)
    lr_decay_factor: float = Field(0.5, gt=0.0)


class SpsOverride(_Section):
    id: int = Field(ge=0)
    bandwidth_share: Optional[float] = Field(None, gt=0)
    transmit_power: Optional[float] = Field(None, gt=0)
    channel_gain_sq: Optional[float] = Field(None, gt=0)
    noise_power: Optional[float] = Field(None, gt=0)
    upload_power: Optional[float] = Field(None, gt=0)
    cycles_per_sample: Optional[float] = Field(None, gt=0)
    cpu_frequency: Optional[float] = Field(None, gt=0)
    chip_coefficient: Optional[float] = Field(None, gt=0)
    deploy_cost: Optional[float] = Field(None, ge=0)


Range = tuple[float, float]


class RadioSection(_Section):
    bandwidth_share: Range = (1e5, 1e6)
    transmit_power: Range = (0.1, 0.5)
    channel_gain_sq: Range = (1e-8, 1e-7)
    noise_power: Range = (1e-10, 1e-10)
    upload_power: Range = (0.1, 0.5)
    cycles_per_sample: Range = (1e4, 3e4)
    cpu_frequency: Range = (1e9, 2e9)
    chip_coefficient: Range = (1e-28, 1e-28)
    deploy_cost: Range = (0.2, 0.5)
    overrides: list[SpsOverride] = Field(default_factory=list)

    @model_validator(mode="after")
    def _ranges(self) -> "RadioSection":
        for name in type(self).model_fields:
            if name == "overrides":
                continue
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0 or (name != "deploy_cost" and lo <= 0):
                raise ValueError(f"{name}: need 0 < low <= high, got [{lo}, {hi}]")
        return self


class BudgetSection(_Section):
    total: float = Field(300.0, ge=0.0)
    policy: Literal["equal", "schedule"] = "equal"
    schedule: Optional[list[float]] = None
    deadline: float = Field(10.0, gt=0.0)
    reward_floor: float = Field(0.0, ge=0.0)
    reward_multiplier: float = Field(1.0, gt=0.0)
    theta_scale: float = Field(1.0, gt=0.0)
    num_types: Optional[int] = Field(None, ge=1)


class VerificationSection(_Section):
    method: Literal["test_set", "euclidean"] = "test_set"
    screen_multiplier: float = Field(3.0, gt=0.0)
    accuracy_floor: float = Field(0.0, ge=0.0, le=1.0)
    strict_rewards: bool = False


class ExperimentConfig(_Section):
    seed: int = 0
    num_sps: int = Field(ge=1)
    rounds: int = Field(30, ge=0)
    scheme: Literal["conventional", "trust", "untrust"] = "untrust"
    dataset: DatasetSection
    partition: PartitionSection = Field(default_factory=PartitionSection)
    adversary: AdversarySection = Field(default_factory=AdversarySection)
    quality: QualitySection = Field(default_factory=QualitySection)
    learner: LearnerSection = Field(default_factory=LearnerSection)
    radio: RadioSection = Field(default_factory=RadioSection)
    budget: BudgetSection = Field(default_factory=BudgetSection)
    verification: VerificationSection = Field(default_factory=VerificationSection)
    deviation: bool = False
    threads: Optional[int] = Field(None, ge=1)
    output_dir: str = "fedpot-out"

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        b = self.budget
        if b.policy == "schedule":
            if b.schedule is None or len(b.schedule) != self.rounds:
                raise ValueError("budget.schedule must list one budget per round")
            if any(x < 0 for x in b.schedule) or sum(b.schedule) > b.total * (1 + 1e-12):
                raise ValueError("budget.schedule entries must be >= 0 and sum to <= budget.total")
        if self.dataset.devices is not None and self.num_sps != len(self.dataset.devices) - 1:
            raise ValueError("num_sps must equal the number of devices minus the held-out one")
        for o in self.radio.overrides:
            if o.id >= self.num_sps:
                raise ValueError(f"radio override for id {o.id} but only {self.num_sps} SPSs")
        return self

    def round_budgets(self) -> list[float]:
        if self.budget.policy == "schedule":
            return list(self.budget.schedule or [])
        if self.rounds == 0:
            return []
        return [self.budget.total / self.rounds] * self.rounds

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            lines.append(f"{where}: unknown key")
        else:
            lines.append(f"{where}: {e['msg']}")
    return "; ".join(lines)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def parse_config(path: str | Path) -> ExperimentConfig:
    """Load a YAML (or JSON) experiment file, or a preset name such as ``baiot-8``."""
    p = Path(path)
    if not p.is_file():
        preset = PRESET_DIR / f"{path}.yaml"
        if preset.is_file():
            p = preset
        else:
            raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigError(f"{p}: not valid YAML: {err}") from None
    cfg = config_from_dict(data or {})
    return _resolve_paths(cfg, p.parent)


def _resolve(path: str, base: Path) -> str:
    path = os.path.expandvars(path)
    return path if Path(path).is_absolute() else str((base / path).resolve())


def _resolve_paths(cfg: ExperimentConfig, base: Path) -> ExperimentConfig:
    """Expand ``$VARS`` in data paths and anchor relative ones at the config's folder."""
    ds = cfg.dataset
    if ds.csv is not None:
        ds.csv = _resolve(ds.csv, base)
    if ds.devices is not None:
        ds.devices = [_resolve(d, base) for d in ds.devices]
    return cfg


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))
