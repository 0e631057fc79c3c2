"""Scenario and signal-chain configuration: defaults, validation, JSON I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

SPEED_OF_LIGHT = 299_792_458.0

POLICIES = ("ISACM", "NEAREST", "FCFS")


class ConfigError(ValueError):
    """Invalid configuration document or field value."""


@dataclass
class IsacConfig:
    sample_rate: float = 100e6
    chirp_bandwidth: float = 50e6
    pulse_duration: float = 10e-6
    snr_db: float = 10.0
    wave_speed: float = SPEED_OF_LIGHT
    elfes_r_uncertain: float = 5.0
    elfes_lambda: float = 0.2
    elfes_beta: float = 1.0

    @property
    def n_samples(self) -> int:
        return int(round(self.pulse_duration * self.sample_rate))

    @property
    def range_bin(self) -> float:
        """Distance quantization step of integer-lag delay estimation."""
        return self.wave_speed / (2.0 * self.sample_rate)


@dataclass
class ScenarioConfig:
    area_side: float = 1000.0
    n_devices: int = 100
    n_mcvs: int = 3
    comm_range: float = 50.0
    sensing_range: float = 25.0
    device_capacity: float = 0.5
    request_threshold_frac: float = 0.3
    mcv_capacity: float = 10_000.0
    charge_rate: float = 0.05
    mcv_speed: float = 5.0
    travel_cost: float = 5.0
    wpt_efficiency: float = 0.9
    consumption_base_range: tuple[float, float] = (1e-4, 1e-3)
    consumption_degree_gain: float = 0.1
    contact_epsilon: float = 0.5
    return_reserve: float = 200.0
    timestep: float = 0.1
    sim_duration: float = 3600.0
    seed: int = 1
    attribute_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    factor_floor: float = 0.1
    isac: IsacConfig = field(default_factory=IsacConfig)
    scheduler_policy: str = "ISACM"

    @property
    def request_threshold(self) -> float:
        """Absolute energy level below which a device requests charging."""
        return self.request_threshold_frac * self.device_capacity


def _positive(value, name, violations, strict=True):
    ok = value > 0 if strict else value >= 0
    if not (isinstance(value, (int, float)) and math.isfinite(value) and ok):
        violations.append(f"{name}: must be {'>' if strict else '>='} 0, got {value!r}")


def validate_config(config: ScenarioConfig) -> list[str]:
    """Return every violated invariant as a 'field: reason' string (empty list = ok)."""
    v: list[str] = []
    _positive(config.area_side, "area_side", v)
    if config.n_devices < 1:
        v.append(f"n_devices: must be >= 1, got {config.n_devices}")
    if config.n_mcvs < 1:
        v.append(f"n_mcvs: must be >= 1, got {config.n_mcvs}")
    _positive(config.comm_range, "comm_range", v)
    _positive(config.sensing_range, "sensing_range", v)
    _positive(config.device_capacity, "device_capacity", v)
    if not 0.0 < config.request_threshold_frac < 1.0:
        v.append(
            "request_threshold_frac: must be in (0,1), "
            f"got {config.request_threshold_frac!r}"
        )
    _positive(config.mcv_capacity, "mcv_capacity", v)
    _positive(config.charge_rate, "charge_rate", v)
    _positive(config.mcv_speed, "mcv_speed", v)
    _positive(config.travel_cost, "travel_cost", v)
    if not 0.0 < config.wpt_efficiency <= 1.0:
        v.append(f"wpt_efficiency: must be in (0,1], got {config.wpt_efficiency!r}")
    lo, hi = config.consumption_base_range
    if not (0.0 < lo <= hi):
        v.append(f"consumption_base_range: need 0 < min <= max, got {(lo, hi)!r}")
    if config.consumption_degree_gain < 0.0:
        v.append(
            "consumption_degree_gain: must be >= 0, "
            f"got {config.consumption_degree_gain!r}"
        )
    _positive(config.contact_epsilon, "contact_epsilon", v)
    _positive(config.return_reserve, "return_reserve", v)
    _positive(config.timestep, "timestep", v)
    _positive(config.sim_duration, "sim_duration", v, strict=False)
    if not isinstance(config.seed, int):
        v.append(f"seed: must be an integer, got {type(config.seed).__name__}")
    weights = config.attribute_weights
    if len(weights) != 4 or any(w < 0 for w in weights):
        v.append(f"attribute_weights: need 4 nonnegative reals, got {weights!r}")
    elif sum(weights) <= 0:
        v.append("attribute_weights: sum must be > 0")
    if not 0.0 <= config.factor_floor <= 1.0:
        v.append(f"factor_floor: must be in [0,1], got {config.factor_floor!r}")
    if config.scheduler_policy not in POLICIES:
        v.append(
            f"scheduler_policy: must be one of {POLICIES}, "
            f"got {config.scheduler_policy!r}"
        )

    isac = config.isac
    _positive(isac.sample_rate, "isac.sample_rate", v)
    _positive(isac.chirp_bandwidth, "isac.chirp_bandwidth", v)
    if isac.chirp_bandwidth > isac.sample_rate:
        v.append("isac.chirp_bandwidth: must be <= sample_rate")
    _positive(isac.pulse_duration, "isac.pulse_duration", v)
    if isac.pulse_duration * isac.sample_rate < 64:
        v.append("isac.pulse_duration: pulse must span at least 64 samples")
    _positive(isac.wave_speed, "isac.wave_speed", v)
    if not isac.elfes_r_uncertain >= 0:
        v.append(f"isac.elfes_r_uncertain: must be >= 0, got {isac.elfes_r_uncertain!r}")
    elif isac.elfes_r_uncertain >= config.sensing_range:
        v.append("isac.elfes_r_uncertain: must be < sensing_range")
    if isac.elfes_lambda < 0:
        v.append(f"isac.elfes_lambda: must be >= 0, got {isac.elfes_lambda!r}")
    if isac.elfes_beta <= 0:
        v.append(f"isac.elfes_beta: must be > 0, got {isac.elfes_beta!r}")
    return v


_ISAC_FIELDS = {f.name for f in fields(IsacConfig)}
_SCENARIO_FIELDS = {f.name for f in fields(ScenarioConfig)}


def config_to_dict(config: ScenarioConfig) -> dict:
    out = {}
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if f.name == "isac":
            value = {g.name: getattr(value, g.name) for g in fields(IsacConfig)}
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a JSON document; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config document must be an object, got {type(doc).__name__}")
    unknown = set(doc) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    if "isac" in kwargs:
        isac_doc = kwargs["isac"]
        if not isinstance(isac_doc, dict):
            raise ConfigError("isac: must be an object")
        bad = set(isac_doc) - _ISAC_FIELDS
        if bad:
            raise ConfigError(f"unknown isac keys: {sorted(bad)}")
        kwargs["isac"] = IsacConfig(**isac_doc)
    for key in ("consumption_base_range", "attribute_weights"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_json(config: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2)


def config_from_json(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())
