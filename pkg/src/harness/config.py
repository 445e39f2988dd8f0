"""
Experiment configuration: validation and layering.

Precedence, lowest first: config/*.yaml defaults < preset < config file < overrides.
Presets, config files and overrides are all flat key-value mappings using the
same names as the CLI flags (underscored).
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.config_loader import get, load_file, load_preset
from src.errors import ConfigError
from src.normalize.registry import resolve_kind
from src.streams.stream import StreamConfig


class NormalizerParams(BaseModel):
    """Normalizer hyperparameters; None means the config/normalizers.yaml default."""

    model_config = ConfigDict(extra="forbid")

    k: Optional[int] = Field(default=None, ge=1)
    alpha: Optional[float] = Field(default=None, ge=0, lt=1)
    tau: Optional[float] = Field(default=None, gt=0)
    alpha_bn: Optional[float] = Field(default=None, ge=0, le=1)
    ema_momentum: Optional[float] = Field(default=None, ge=0, le=1)
    eps: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _single_component_has_no_spread(self):
        if self.k == 1 and self.alpha:
            raise ValueError(f"k=1 requires alpha=0, got alpha={self.alpha}")
        return self

    def resolved(self, scenario: str) -> dict:
        """
        Keyword arguments for create_normalizer.

        The mixed scenario defaults K to unmix.k_mixed; K=1 defaults alpha to 0.
        """
        params = self.model_dump()
        if params["k"] is None and scenario == "mixed":
            params["k"] = get("normalizers", "unmix.k_mixed", 64)
        if params["k"] == 1 and params["alpha"] is None:
            params["alpha"] = 0.0
        return params


PARAM_KEYS = set(NormalizerParams.model_fields)


class ExperimentConfig(BaseModel):
    """Everything run_experiment needs besides the model and data."""

    model_config = ConfigDict(extra="forbid")

    norm: str = "unmix_tns"
    scenario: Literal["single", "continual", "mixed"] = Field(
        default_factory=lambda: get("streams", "stream.scenario", "continual")
    )
    delta: float = Field(default_factory=lambda: get("streams", "stream.delta", 0.1), gt=0)
    batch_size: int = Field(default_factory=lambda: get("streams", "stream.batch_size", 64), ge=1)
    slot_size: Optional[int] = Field(default_factory=lambda: get("streams", "stream.slot_size"), ge=1)
    order: Literal["dirichlet", "iid"] = Field(default_factory=lambda: get("streams", "stream.order", "dirichlet"))
    domains: list[str] = Field(
        default_factory=lambda: list(get("streams", "default_domains", ["shifted"])), min_length=1
    )
    params: NormalizerParams = Field(default_factory=NormalizerParams)
    norm_slots: Optional[list[int]] = None
    n_per_class: int = Field(default_factory=lambda: get("streams", "dataset.n_per_class_test", 1000), ge=1)
    model: Optional[str] = None
    seed: int = 0
    timing: bool = False

    @field_validator("norm")
    @classmethod
    def _known_norm(cls, value: str) -> str:
        return resolve_kind(value)

    @field_validator("domains")
    @classmethod
    def _known_domains(cls, value: list[str]) -> list[str]:
        defined = {e["id"] for e in get("streams", "domains", [])}
        missing = [d for d in value if d not in defined]
        if missing:
            raise ValueError(f"unknown domain(s) {missing}, defined: {sorted(defined)}")
        return value

    def stream_config(self) -> StreamConfig:
        return StreamConfig(
            delta=self.delta,
            batch_size=self.batch_size,
            slot_size=self.slot_size,
            scenario=self.scenario,
            order=self.order,
            domains=self.domains,
            seed=self.seed,
        )

    def normalizer_kwargs(self) -> dict:
        return self.params.resolved(self.scenario)

    def to_flat(self) -> dict:
        """Flat key-value form (the layout of config files and presets)."""
        flat = self.model_dump(exclude={"params"})
        flat.update(self.params.model_dump())
        return flat

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with flat overrides applied and revalidated."""
        return build_config({**self.to_flat(), **overrides})


def format_validation_error(err: ValidationError) -> str:
    """One "field: message" line per failed field."""
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"] if p != "params") or "config"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def build_config(flat: dict) -> ExperimentConfig:
    """
    Validate a flat mapping into an ExperimentConfig.

    Raises:
        ConfigError: with one message per invalid field
    """
    flat = {str(k).replace("-", "_"): v for k, v in flat.items() if v is not None}
    params = {k: flat.pop(k) for k in list(flat) if k in PARAM_KEYS}
    try:
        return ExperimentConfig(**flat, params=params)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def load_experiment_config(file: str = None, preset: str = None, overrides: dict = None) -> ExperimentConfig:
    """
    Layer preset, config file and overrides over the defaults and validate.

    Args:
        file: Flat key-value YAML file
        preset: Preset name in config/presets/
        overrides: Flat mapping, typically from CLI flags; None values are skipped

    Raises:
        ConfigError: on a missing preset/file or invalid values
    """
    flat = {}
    try:
        if preset:
            flat.update(load_preset(preset))
        if file:
            flat.update(load_file(file))
    except (FileNotFoundError, ValueError) as e:
        raise ConfigError(str(e)) from e

    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(flat)
