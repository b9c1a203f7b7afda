"""Experiment configuration: YAML ingestion with reference defaults."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from aftmc.estimator import DdSearchConfig, MusicConfig
from aftmc.geometry import ArrayParams, Scene, Target, polar_target
from aftmc.waveform import WaveformParams

SCHEMA_VERSION = 1
OPTIMAL_C2 = "opt"
SWEEP_PARAMETERS = ("c1", "c2", "snr")


class ConfigError(ValueError):
    """Malformed or unreadable configuration."""


@dataclass(frozen=True)
class TargetSpec:
    """A target in the config file; ``beta=None`` means unit magnitude with a
    per-trial uniform random phase."""

    q: tuple[float, float]
    v: tuple[float, float]
    beta: complex | None = None


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {self.parameter!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        for v in self.values:
            if v == OPTIMAL_C2 and self.parameter == "c2":
                continue
            if not isinstance(v, (int, float)):
                raise ConfigError(f"bad sweep value {v!r}")


def _reference_targets() -> tuple[TargetSpec, ...]:
    out = []
    for rng, ang, spd in ((50.0, 30.0, 50.0), (100.0, 50.0, 100.0)):
        t = polar_target(rng, ang, spd)
        out.append(TargetSpec(tuple(t.q), tuple(t.v)))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    waveform: WaveformParams = WaveformParams()
    c2_mode: str | None = None
    array: ArrayParams = ArrayParams()
    targets: tuple[TargetSpec, ...] = field(default_factory=_reference_targets)
    q_bs: tuple[float, float] = (0.0, 0.0)
    beam_direction: float | None = None
    music: MusicConfig = MusicConfig()
    ddsearch: DdSearchConfig = DdSearchConfig()
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 300
    master_seed: int = 0
    sweep: SweepSpec | None = None
    output_dir: str = "results"
    crlb_doppler: str = "geometric"
    c2_budget: int | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.c2_mode not in (None, OPTIMAL_C2):
            raise ConfigError(f"c2 must be a number or {OPTIMAL_C2!r}")
        if not self.targets:
            raise ConfigError("at least one target is required")

    @property
    def P(self) -> int:
        return len(self.targets)

    def scene(self, betas=None) -> Scene:
        if betas is None:
            betas = [1.0 if t.beta is None else t.beta for t in self.targets]
        targets = [Target(q=np.array(t.q), v=np.array(t.v), beta=complex(b)) for t, b in zip(self.targets, betas)]
        return Scene(targets, q_bs=np.array(self.q_bs), beam_direction=self.beam_direction)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _pick(section: dict, allowed: set, where: str) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return dict(section)


def _complex(value, where):
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"{where}: complex values are written as [re, im]")


def _target(spec: dict, q_bs, i: int) -> TargetSpec:
    where = f"scene.targets[{i}]"
    spec = _pick(spec, {"range_m", "angle_deg", "radial_speed", "q", "v", "beta"}, where)
    beta = _complex(spec.get("beta"), where)
    if "q" in spec:
        q = tuple(float(c) for c in spec["q"])
        v = tuple(float(c) for c in spec.get("v", (0.0, 0.0)))
        return TargetSpec(q, v, beta)
    try:
        t = polar_target(float(spec["range_m"]), float(spec["angle_deg"]), float(spec.get("radial_speed", 0.0)),
                         q_bs=q_bs)
    except KeyError as exc:
        raise ConfigError(f"{where}: need either q or range_m/angle_deg") from exc
    return TargetSpec(tuple(t.q), tuple(t.v), beta)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = _pick(raw, {"version", "waveform", "array", "scene", "music", "ddsearch", "experiment", "sweep"}, "root")
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    kwargs = {}
    try:
        wf = _pick(raw.get("waveform") or {}, {"M", "c1", "c2", "T", "delta_f", "L", "qam_order"}, "waveform")
        if "delta_f" in wf:
            if "T" in wf:
                raise ConfigError("give either waveform.T or waveform.delta_f")
            wf["T"] = 1.0 / float(wf.pop("delta_f"))
        if wf.get("c2") == OPTIMAL_C2:
            kwargs["c2_mode"] = OPTIMAL_C2
            wf["c2"] = 0.0
        kwargs["waveform"] = WaveformParams(**wf)
        kwargs["array"] = ArrayParams(**_pick(raw.get("array") or {}, {"N_t", "N_r", "f_c", "d", "p"}, "array"))

        scene = _pick(raw.get("scene") or {}, {"q_bs", "beam_direction_deg", "targets"}, "scene")
        q_bs = tuple(float(c) for c in scene.get("q_bs", (0.0, 0.0)))
        kwargs["q_bs"] = q_bs
        if scene.get("beam_direction_deg") is not None:
            kwargs["beam_direction"] = float(np.deg2rad(scene["beam_direction_deg"]))
        if "targets" in scene:
            kwargs["targets"] = tuple(_target(t, q_bs, i) for i, t in enumerate(scene["targets"]))

        kwargs["music"] = MusicConfig(**_pick(raw.get("music") or {}, {"K", "grid_deg", "fb_averaging"}, "music"))
        dd_keys = {f.name for f in dataclasses.fields(DdSearchConfig)}
        kwargs["ddsearch"] = DdSearchConfig(**_pick(raw.get("ddsearch") or {}, dd_keys, "ddsearch"))

        exp = _pick(raw.get("experiment") or {}, {"snr_grid_db", "trials", "master_seed", "output_dir",
                                                  "crlb_doppler", "c2_budget"}, "experiment")
        if "snr_grid_db" in exp:
            exp["snr_grid_db"] = tuple(float(s) for s in exp["snr_grid_db"])
        kwargs.update(exp)

        if raw.get("sweep"):
            sw = _pick(raw["sweep"], {"parameter", "values"}, "sweep")
            kwargs["sweep"] = SweepSpec(sw["parameter"], tuple(sw["values"]))
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw or {})


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain-data echo of a config (for metadata files)."""
    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, complex):
            return [obj.real, obj.imag]
        if isinstance(obj, (tuple, list)):
            return [plain(o) for o in obj]
        if isinstance(obj, np.generic):
            return obj.item()
        return obj
    return plain(config)
