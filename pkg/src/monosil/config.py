"""Run configuration: one JSON document, unknown keys rejected."""

import dataclasses
import json
from dataclasses import dataclass, field

from .control import MpcConfig, PidGains
from .errors import ConfigError
from .imaging import CameraModel, PreprocessConfig
from .lane import SlidingWindowConfig
from .track import PRESETS
from .vehicle import VehicleParams


@dataclass(frozen=True)
class TrackConfig:
    seed: int = 1
    preset: str = "default"
    file: str = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")


@dataclass(frozen=True)
class SimConfig:
    track: TrackConfig = field(default_factory=TrackConfig)
    controller: str = "mpc"
    duration: float = 20.0
    plant_dt: float = 0.01
    control_period: float = 0.05
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    camera: CameraModel = field(default_factory=CameraModel)
    detector: SlidingWindowConfig = field(default_factory=SlidingWindowConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pid: PidGains = field(default_factory=PidGains)
    noise_seed: int = 0
    noise_sigma: float = 2.0
    line_width: float = 0.05
    initial_lateral: float = 0.25
    initial_heading: float = 0.0
    initial_speed: float = None
    lane_reuse_cap: int = 10
    through_homography: bool = False
    blank_frames: bool = False

    def __post_init__(self):
        if self.controller not in ("pid", "mpc"):
            raise ValueError("controller must be 'pid' or 'mpc'")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.plant_dt <= 0 or self.control_period <= 0:
            raise ValueError("time steps must be positive")
        ratio = self.control_period / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_period must be an integer multiple of plant_dt")
        if abs(self.mpc.T_s - self.control_period) > 1e-12:
            raise ValueError("mpc.T_s must equal control_period")

    @property
    def substeps(self):
        return int(round(self.control_period / self.plant_dt))

    @property
    def v_target(self):
        return self.pid.v_target if self.controller == "pid" else self.mpc.v_target

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


_TUPLE_FIELDS = {"origin_px"}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        elif name in _TUPLE_FIELDS:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (SimConfig, "track"): TrackConfig,
    (SimConfig, "vehicle"): VehicleParams,
    (SimConfig, "camera"): CameraModel,
    (SimConfig, "detector"): SlidingWindowConfig,
    (SimConfig, "preprocess"): PreprocessConfig,
    (SimConfig, "mpc"): MpcConfig,
    (SimConfig, "pid"): PidGains,
}


def config_from_dict(data):
    return _build(SimConfig, data, "config")


def load_config(path):
    if path is None:
        return SimConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
