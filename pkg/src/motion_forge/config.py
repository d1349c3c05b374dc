"""Configuration file handling: one JSON document, one section per module.

Unknown keys are rejected everywhere so typos fail loudly.  Every section is
optional; omitted sections fall back to the library defaults (see each
config dataclass for the values and their meaning).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .curriculum import SamplerConfig, SimConfig
from .errors import ConfigError
from .generation import GUIDANCE_SCALE
from .metrics import GroundModel, SuccessConfig
from .prefix_loop import PrefixLoopConfig
from .rewards import ObservationNoiseConfig, RewardConfig, RewardTerm
from .router import RouterConfig

_SECTIONS = {
    "ground", "success", "rewards", "obs_noise", "curriculum", "sim",
    "router", "diffusion", "asfo", "prefix_loop", "tracker", "generator",
}


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _build(cls, data: dict, where: str, converters: dict | None = None):
    import dataclasses

    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(data, names, where)
    kwargs = dict(data)
    for key, conv in (converters or {}).items():
        if key in kwargs:
            kwargs[key] = conv(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class DiffusionConfig:
    num_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    guidance_scale: float = GUIDANCE_SCALE


@dataclass(frozen=True)
class AsfoConfig:
    rho_max: int = 8
    mirror_alpha: float = 0.3


@dataclass(frozen=True)
class TrackerConfig:
    kind: str = "identity"          # identity | perturbation | failure
    seed: int = 0
    noise_scale: float = 0.0
    offset: float = 0.0
    fail_after_frame: int = 0
    fail_offset: float = 10.0

    def __post_init__(self):
        if self.kind not in ("identity", "perturbation", "failure"):
            raise ConfigError(f"unknown tracker kind '{self.kind}'")


@dataclass(frozen=True)
class GeneratorConfig:
    noise_scale: float = 0.005


@dataclass
class AppConfig:
    ground: GroundModel = field(default_factory=GroundModel)
    success: SuccessConfig = field(default_factory=SuccessConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    obs_noise: ObservationNoiseConfig = field(default_factory=ObservationNoiseConfig)
    curriculum: SamplerConfig = field(default_factory=SamplerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    asfo: AsfoConfig = field(default_factory=AsfoConfig)
    prefix_loop: PrefixLoopConfig = field(default_factory=PrefixLoopConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)


def _reward_term(value) -> RewardTerm:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return RewardTerm(float(value[0]), float(value[1]))
    raise ConfigError("reward terms must be [weight, sigma] pairs")


def config_from_dict(data: dict) -> AppConfig:
    _check_keys(data, _SECTIONS, "config")
    cfg = AppConfig()
    if "ground" in data:
        cfg.ground = _build(GroundModel, data["ground"], "ground")
    if "success" in data:
        cfg.success = _build(
            SuccessConfig, data["success"], "success",
            {"ee_bodies": lambda v: tuple(v) if v is not None else None},
        )
    if "rewards" in data:
        term_fields = ("anchor_pos", "anchor_ori", "rel_body_pos",
                       "rel_body_ori", "body_lin_vel", "body_ang_vel")
        conv = {name: _reward_term for name in term_fields}
        conv["excluded_contact_bodies"] = tuple
        conv["tracked_bodies"] = lambda v: tuple(v) if v is not None else None
        cfg.rewards = _build(RewardConfig, data["rewards"], "rewards", conv)
    if "obs_noise" in data:
        cfg.obs_noise = _build(ObservationNoiseConfig, data["obs_noise"], "obs_noise")
    if "curriculum" in data:
        cfg.curriculum = _build(SamplerConfig, data["curriculum"], "curriculum")
    if "sim" in data:
        cfg.sim = _build(SimConfig, data["sim"], "sim")
    if "router" in data:
        cfg.router = _build(RouterConfig, data["router"], "router")
    if "diffusion" in data:
        cfg.diffusion = _build(DiffusionConfig, data["diffusion"], "diffusion")
    if "asfo" in data:
        cfg.asfo = _build(AsfoConfig, data["asfo"], "asfo")
    if "prefix_loop" in data:
        cfg.prefix_loop = _build(
            PrefixLoopConfig, data["prefix_loop"], "prefix_loop",
            {"tracked_bodies": lambda v: tuple(v) if v is not None else None},
        )
    if "tracker" in data:
        cfg.tracker = _build(TrackerConfig, data["tracker"], "tracker")
    if "generator" in data:
        cfg.generator = _build(GeneratorConfig, data["generator"], "generator")
    return cfg


def load_config(path) -> AppConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return config_from_dict(data)
