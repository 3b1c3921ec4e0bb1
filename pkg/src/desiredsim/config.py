"""Experiment configuration: defaults, presets, YAML round-trip, validation.

An arm is one simulated run: an AQM mode (fixed target or agent-tuned), a
load pattern and a duration.  The `desk` preset shrinks the hour-long run
to ten minutes and rescales the schedule knobs that are denominated in
agent steps: the exploration decay window shrinks proportionally and the
replay warm-up drops to one batch so training still happens in-run.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

FIXED_TARGETS_MS = (5.0, 20.0, 50.0, 100.0)
LOADS = ("low", "high", "sinusoid")
MODES = ("fixed", "dynamic")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "run"
    mode: str = "fixed"
    target_ms: float = 20.0           # fixed-mode AQM target
    initial_target_ms: float = 20.0   # dynamic-mode starting target
    load: str = "sinusoid"
    duration_s: int = 3600
    seed: int = 1
    outdir: str = "results"

    bottleneck_mbps: float = 25.0
    access_mbps: float = 100.0
    prop_ms: float = 5.0
    queue_cap_bytes: int = 2_000_000
    max_load_clients: int = 40

    probe_period_ms: int = 10
    window_s: int = 4

    gamma: float = 0.99
    lr: float = 1e-3
    momentum: float = 0.9
    tau: int = 100
    min_fill: int = 100
    batch_size: int = 32
    decay_steps: int = 250
    eps_floor: float = 0.01
    replay_capacity: int = 1_000_000
    ensemble_alpha: float = 0.5

    ecn_dash: bool = False
    telemetry_dump: bool = False
    aqm_trace: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.load not in LOADS:
            raise ConfigError(f"load must be one of {LOADS}, got {self.load!r}")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.mode == "fixed" and self.target_ms <= 0:
            raise ConfigError("fixed target_ms must be positive")
        if self.mode == "dynamic" and not 20.0 <= self.initial_target_ms <= 70.0:
            raise ConfigError("initial_target_ms must lie in [20, 70] ms")
        if self.window_s <= 0 or self.duration_s % self.window_s != 0:
            raise ConfigError("duration_s must be a whole number of windows")
        if self.probe_period_ms <= 0 \
                or (self.window_s * 1000) % self.probe_period_ms != 0:
            raise ConfigError("window must be a whole number of probe periods")
        if self.batch_size < 1 or self.min_fill < self.batch_size:
            raise ConfigError("min_fill must be at least batch_size")
        if self.tau < 1:
            raise ConfigError("tau must be at least 1")
        if not 0.0 <= self.ensemble_alpha <= 1.0:
            raise ConfigError("ensemble_alpha must lie in [0, 1]")
        if self.max_load_clients < 1:
            raise ConfigError("max_load_clients must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "full": {},
    "desk": {"duration_s": 600, "decay_steps": 42, "min_fill": 32},
}


def make_config(preset: str = "full", **overrides) -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; have {tuple(PRESETS)}")
    merged = dict(PRESETS[preset])
    merged.update(overrides)
    return from_dict(merged)


def from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data).validate()


def load_yaml(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping")
    preset = data.pop("preset", "full")
    return make_config(preset, **data)


def save_yaml(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
