"""Domain types, configuration schema and built-in reference data."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

# 1 GB = 10^6 KB, cloud billing convention.
KB_PER_GB = 1_000_000.0


class ConfigError(ValueError):
    """Raised for invalid user-supplied configuration."""


class ContractError(RuntimeError):
    """Raised when an internal pre/post-condition is violated."""


class NodeKind(str, enum.Enum):
    NONE = "None"
    CPU = "CPU"
    GPU = "GPU"


class RevenueKind(str, enum.Enum):
    CONSTANT = "Constant"
    LINEAR = "Linear"
    LOGISTIC = "Logistic"


class OptimizerKind(str, enum.Enum):
    SMART = "smart"
    NAIVE = "naive"


DEVICE_CLASS_NAMES = ("MobileWifi", "Mobile4G", "PcDsl", "PcVdsl", "PcFiber")


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ProfileSpec(_Frozen):
    """One transcoding profile: an output variant of a player's stream."""

    name: str
    node_kind: NodeKind
    frame_size: float = Field(gt=0, description="KB per frame")
    texture_psnr: float = Field(gt=0, description="dB")
    resolution: tuple[int, int]
    geometry_bits: int
    blend_bits: int
    skippable: bool

    @model_validator(mode="after")
    def _check_kind(self):
        if not self.skippable and self.node_kind is not NodeKind.GPU:
            raise ValueError(f"profile {self.name!r}: non-skippable profiles must run on GPU nodes")
        return self

    @property
    def is_free(self) -> bool:
        return self.node_kind is NodeKind.NONE

    def nominal_bandwidth(self, production_fps: float) -> float:
        """KB/s needed to receive this profile at the full production rate."""
        return self.frame_size * production_fps


class DeviceClass(_Frozen):
    name: str
    base_bandwidth: float = Field(gt=0, description="KB/s")
    decode_cap: dict[str, float]


class PricingConfig(_Frozen):
    cpu_rate: float = Field(default=0.000017, gt=0, description="$ per GB-second")
    gpu_factor: float = Field(default=10.0, gt=0)
    memory_gb: float = Field(default=2.0, gt=0)
    traffic_rate: float = Field(default=0.05, gt=0, description="$ per GB")

    def node_rate(self, kind: NodeKind) -> float:
        """$ per second for one transcoder of the given node kind."""
        if kind is NodeKind.NONE:
            return 0.0
        rate = self.memory_gb * self.cpu_rate
        return rate * self.gpu_factor if kind is NodeKind.GPU else rate


def build_default_profiles() -> list[ProfileSpec]:
    rows = [
        ("Production", NodeKind.NONE, 200, 32.02, (960, 540), 10, 6, True),
        ("Images Mid", NodeKind.CPU, 170, 28.78, (864, 486), 9, 5, True),
        ("Images Low", NodeKind.CPU, 135, 28.02, (768, 432), 8, 4, True),
        ("Video Low", NodeKind.GPU, 55, 28.66, (960, 540), 8, 4, False),
        ("Video Mid", NodeKind.GPU, 70, 30.00, (960, 540), 9, 5, False),
        ("Video High", NodeKind.GPU, 85, 31.59, (960, 540), 10, 6, False),
    ]
    return [
        ProfileSpec(
            name=name, node_kind=kind, frame_size=size, texture_psnr=psnr,
            resolution=res, geometry_bits=geo, blend_bits=blend, skippable=skip,
        )
        for name, kind, size, psnr, res, geo, blend, skip in rows
    ]


def build_default_device_classes(profiles: list[ProfileSpec] | None = None) -> list[DeviceClass]:
    """Default spectator device classes.

    Mobile devices decode production frames at up to 15 fps; everything else
    has headroom above the production rate so random processing dips only
    occasionally bind.
    """
    profiles = profiles if profiles is not None else build_default_profiles()
    bandwidths = {
        "MobileWifi": 5000.0,
        "Mobile4G": 3000.0,
        "PcDsl": 4000.0,
        "PcVdsl": 8000.0,
        "PcFiber": 12000.0,
    }
    classes = []
    for name, bw in bandwidths.items():
        if name.startswith("Mobile"):
            caps = {p.name: (15.0 if p.is_free else 30.0) for p in profiles}
        else:
            caps = {p.name: 50.0 for p in profiles}
        classes.append(DeviceClass(name=name, base_bandwidth=bw, decode_cap=caps))
    return classes


class SessionConfig(_Frozen):
    steps: int = Field(default=60, ge=0)
    step_seconds: float = Field(default=10.0, gt=0)
    production_fps: float = Field(default=25.0, gt=0)
    players: int = Field(default=2, ge=1)
    profiles: list[ProfileSpec] = Field(default_factory=build_default_profiles)
    device_classes: list[DeviceClass] = Field(default_factory=build_default_device_classes)
    gpu_limit: int = Field(default=6, ge=0)
    initial_spectators: int = Field(default=10, ge=0)
    arrival_rate: float = Field(default=0.5, ge=0)
    quit_base: float = Field(default=0.0037, ge=0, lt=1)
    quit_qoe_factor: float = Field(default=0.20, ge=0)
    revenue_model: RevenueKind = RevenueKind.CONSTANT
    revenue_rate: float = Field(default=0.01, gt=0)
    population_weights: dict[str, float] = Field(
        default_factory=lambda: {name: 1.0 for name in DEVICE_CLASS_NAMES}
    )
    screen_fraction: float = Field(default=0.03, gt=0, le=1)
    fluctuation_sd: float = Field(default=0.10, ge=0)
    rng_seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        names = [p.name for p in self.profiles]
        if not names:
            raise ValueError("at least one profile is required")
        if len(set(names)) != len(names):
            raise ValueError("profile names must be unique")
        class_names = {c.name for c in self.device_classes}
        for cls in self.device_classes:
            missing = set(names) - set(cls.decode_cap)
            if missing:
                raise ValueError(f"device class {cls.name!r} lacks decode caps for {sorted(missing)}")
            for v in cls.decode_cap.values():
                if not 0 < v <= 2 * self.production_fps:
                    raise ValueError(f"decode cap {v} outside (0, {2 * self.production_fps}]")
        unknown = set(self.population_weights) - class_names
        if unknown:
            raise ValueError(f"population weights for unknown classes {sorted(unknown)}")
        weights = list(self.population_weights.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("population weights must be nonnegative with a positive sum")
        return self

    def profile(self, name: str) -> ProfileSpec:
        for p in self.profiles:
            if p.name == name:
                return p
        raise KeyError(name)

    def device_class(self, name: str) -> DeviceClass:
        for c in self.device_classes:
            if c.name == name:
                return c
        raise KeyError(name)


class ClassSampler:
    """Draws device classes with probability proportional to weight."""

    def __init__(self, classes: list[DeviceClass], weights: Mapping[str, float]):
        self.classes = [c for c in classes if weights.get(c.name, 0.0) > 0]
        if not self.classes:
            raise ConfigError("population weights are all zero")
        w = np.array([weights[c.name] for c in self.classes], dtype=float)
        self._cdf = np.cumsum(w / w.sum())
        self._cdf[-1] = 1.0

    def __call__(self, rng: np.random.Generator) -> DeviceClass:
        u = rng.random()
        return self.classes[int(np.searchsorted(self._cdf, u, side="right"))]


def build_population(weights: Mapping[str, float], classes: list[DeviceClass] | None = None) -> ClassSampler:
    classes = classes if classes is not None else build_default_device_classes()
    if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
        raise ConfigError("population weights must be nonnegative with a positive sum")
    return ClassSampler(classes, weights)


@dataclass(frozen=True)
class Spectator:
    id: int
    device: DeviceClass
    bandwidth_now: float
    decode_now: Mapping[str, float]
    join_step: int
    allocation: tuple[str, ...] | None = None
    qoe_now: float = 0.0
    dqoe_now: float = 0.0

    def __post_init__(self):
        if self.bandwidth_now <= 0:
            raise ContractError(f"spectator {self.id}: bandwidth must be positive")
        if self.dqoe_now < 0:
            raise ContractError(f"spectator {self.id}: negative dQoE")


# ---------------------------------------------------------------------------
# Config files

_TOP_KEYS = {"session", "pricing"}


def config_to_dict(session: SessionConfig, pricing: PricingConfig) -> dict:
    return {
        "session": session.model_dump(mode="json"),
        "pricing": pricing.model_dump(mode="json"),
    }


def dump_config(session: SessionConfig, pricing: PricingConfig) -> str:
    return yaml.safe_dump(config_to_dict(session, pricing), sort_keys=False)


def parse_config(doc) -> tuple[SessionConfig, PricingConfig]:
    """Build configs from a parsed document with optional ``session``/``pricing`` sections."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        session = SessionConfig.model_validate(doc.get("session") or {})
        pricing = PricingConfig.model_validate(doc.get("pricing") or {})
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return session, pricing


def load_config(path: str | Path) -> tuple[SessionConfig, PricingConfig]:
    try:
        text = Path(path).read_text()
        doc = yaml.safe_load(text)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from exc
    return parse_config(doc)
