import configparser
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.prf_agent.envs import ENVIRONMENTS
from app.prf_agent.motion_template_utils import (
    MotionTemplateParams,
    constant_delta,
    linear_delta,
)
from app.prf_agent.prf_utils import PrfParams

NESTED_SECTIONS = ("descriptor", "prf", "motion_template", "learner")


class MotionTemplateSpec(BaseModel):
    """tau schedule and decay; ``delta`` (constant, may be inf) wins over ``delta_divisor``."""
    tau0: float = Field(0.1, gt=0)
    tau_increment: float = Field(0.3, gt=0)
    delta_divisor: Optional[float] = Field(4.0, gt=0)
    delta: Optional[float] = Field(None, ge=0)
    silhouette_threshold: float = Field(0.1, gt=0, lt=1)

    @model_validator(mode="after")
    def check_delta(self):
        if self.delta is None and self.delta_divisor is None:
            raise ValueError("Set either delta or delta_divisor")
        return self

    def to_params(self) -> MotionTemplateParams:
        schedule = constant_delta(self.delta) if self.delta is not None else linear_delta(self.delta_divisor)
        return MotionTemplateParams(
            tau0=self.tau0,
            tau_increment=self.tau_increment,
            delta_schedule=schedule,
            silhouette_threshold=self.silhouette_threshold,
        )


class DescriptorSpec(BaseModel):
    """
    Goal specification. ``goal_source`` is ``env`` (rendered by the
    environment), ``sketch`` (a second renderer, motion variant only) or
    ``files`` (``goal`` image for direct/window, ``goal_frames`` directory for
    motion).
    """
    variant: Literal["direct", "window", "motion"] = "direct"
    goal_source: Literal["env", "sketch", "files"] = "env"
    goal: Optional[Path] = None
    goal_frames: Optional[Path] = None

    @model_validator(mode="after")
    def check_goal_files(self):
        if self.goal_source == "sketch" and self.variant != "motion":
            raise ValueError("goal_source 'sketch' is only available for the motion variant")
        if self.goal_source != "files":
            return self
        if self.variant == "motion":
            if self.goal_frames is None:
                raise ValueError("goal_frames directory is required for a motion descriptor read from files")
            if not self.goal_frames.is_dir():
                raise ValueError(f"Goal frame directory not found: {self.goal_frames}")
        else:
            if self.goal is None:
                raise ValueError(f"goal image path is required for a {self.variant} descriptor read from files")
            if not self.goal.is_file():
                raise ValueError(f"Goal image not found: {self.goal}")
        return self


class PrfSpec(BaseModel):
    cell_fraction: float = Field(0.1, gt=0, le=1)
    num_bins: int = Field(9, ge=2)
    norm_eps: float = Field(0.0, ge=0)

    def to_params(self) -> PrfParams:
        return PrfParams(cell_fraction=self.cell_fraction, num_bins=self.num_bins, norm_eps=self.norm_eps)


class LearnerConfig(BaseModel):
    gamma: float = Field(0.99, ge=0, lt=1)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_floor: float = Field(0.05, ge=0, le=1)
    epsilon_decay_steps: int = Field(10000, ge=1)
    learning_rate: float = Field(1e-3, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    replay_capacity: int = Field(10000, ge=1)
    batch_size: int = Field(32, ge=1)
    train_start: int = Field(200, ge=1)
    train_every: int = Field(1, ge=1)
    target_sync: int = Field(500, ge=1)
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    input_size: int = Field(28, ge=2)

    @field_validator("hidden_sizes", mode="before")
    @classmethod
    def split_sizes(cls, value):
        if isinstance(value, str):
            return [int(part) for part in value.replace(" ", "").split(",") if part]
        if isinstance(value, int):
            return [value]
        return value

    @field_validator("hidden_sizes")
    @classmethod
    def positive_sizes(cls, value):
        if any(size < 1 for size in value):
            raise ValueError(f"hidden layer sizes must be >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def check_epsilon(self):
        if self.epsilon_floor > self.epsilon_start:
            raise ValueError(
                f"epsilon_floor ({self.epsilon_floor}) exceeds epsilon_start ({self.epsilon_start})"
            )
        return self


class ExperimentConfig(BaseSettings):
    """
    One experiment. File values are overridden by ``PRF_``-prefixed
    environment variables (``PRF_EPISODES``, ``PRF_LEARNER__GAMMA``).
    """
    model_config = SettingsConfigDict(env_prefix="PRF_", env_nested_delimiter="__", extra="forbid")

    env: str = "gridnav"
    env_options: Dict[str, Any] = Field(default_factory=dict)
    reward_mode: Literal["vrf", "prf"] = "prf"
    episodes: int = Field(100, ge=1)
    step_cap: Optional[int] = Field(None, ge=1)
    eval_period: int = Field(100, ge=1)
    eval_episodes: int = Field(10, ge=1)
    eval_epsilon: float = Field(0.0, ge=0, le=1)
    seed: int = 0
    ema_lambda: float = Field(0.7, ge=0, lt=1)
    frames_every: int = Field(0, ge=0)
    log_every: int = Field(50, ge=1)
    save_templates: bool = True
    output_dir: Path = Path("runs/default")
    descriptor: Optional[DescriptorSpec] = None
    prf: PrfSpec = Field(default_factory=PrfSpec)
    motion_template: MotionTemplateSpec = Field(default_factory=MotionTemplateSpec)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # environment variables take precedence over the config file
        return env_settings, init_settings

    @field_validator("env")
    @classmethod
    def known_env(cls, value: str) -> str:
        if value not in ENVIRONMENTS:
            raise ValueError(f"Unknown environment '{value}'. Available: {sorted(ENVIRONMENTS)}")
        return value

    @model_validator(mode="after")
    def check_reward_mode(self):
        if self.reward_mode == "prf" and self.descriptor is None:
            raise ValueError("reward_mode 'prf' needs a [descriptor] section")
        return self


def _parse_value(raw: str) -> Any:
    """INI scalar to Python: booleans, JSON literals, inf, else the raw string."""
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if lowered in ("inf", "+inf", "infinity"):
        return math.inf
    return text


def read_config_sections(path: Union[str, Path]) -> Dict[str, Any]:
    """Read an INI experiment file into the nested dict ExperimentConfig expects."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path, encoding="utf-8")

    base_dir = path.resolve().parent
    data: Dict[str, Any] = {}
    for section in parser.sections():
        values = {key: _parse_value(value) for key, value in parser.items(section)}
        if section == "experiment":
            data.update(values)
        elif section == "env":
            data["env_options"] = values
        elif section in NESTED_SECTIONS:
            data[section] = values
        else:
            raise ValueError(f"Unknown config section [{section}] in {path}")

    descriptor = data.get("descriptor")
    if descriptor:
        for key in ("goal", "goal_frames"):
            if key in descriptor:
                descriptor[key] = str(base_dir / str(descriptor[key]))
    return data


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig(**read_config_sections(path))


def format_validation_errors(error) -> List[str]:
    """One 'field.path: message' line per pydantic error."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"{location}: {item['msg']}")
    return lines
