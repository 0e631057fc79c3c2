"""Domain actors and reproducible random scenario generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import ConfigError, ScenarioConfig, validate_config
from . import graphs


class DeviceState(Enum):
    ACTIVE = "Active"
    REQUESTING = "Requesting"
    BEING_CHARGED = "BeingCharged"
    DEAD = "Dead"


class McvState(Enum):
    IDLE = "Idle"
    TRAVELING = "Traveling"
    CHARGING = "Charging"
    RETURNING = "Returning"
    RECHARGING = "Recharging"


@dataclass
class SensorDevice:
    id: int
    position: tuple[float, float]
    energy: float
    state: DeviceState = DeviceState.ACTIVE
    consumption_rate: float = 0.0
    degree: int = 0
    betweenness: float = 0.0


@dataclass
class Mcv:
    id: int
    position: tuple[float, float]
    energy: float
    state: McvState = McvState.IDLE
    queue: list = field(default_factory=list)
    current_target: int | None = None
    tour_distance: float = 0.0
    dispensed_total: float = 0.0


@dataclass
class ChargingRequest:
    device_id: int
    issue_time: float
    assigned_mcv: int | None = None
    fulfill_time: float | None = None
    delivered: float = 0.0


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Three independent seed-derived streams: scenario, noise, detection."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


def grid_centroids(area_side: float, k: int) -> list[tuple[float, float]]:
    """Centroids of the first k cells of a near-square grid partition of the area.

    Cells are ordered x-fastest from the bottom-left, so k=4 on a 1000 m side
    yields (250,250), (750,250), (250,750), (750,750).
    """
    cols = math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    cw = area_side / cols
    ch = area_side / rows
    out = []
    for idx in range(k):
        r, c = divmod(idx, cols)
        out.append(((c + 0.5) * cw, (r + 0.5) * ch))
    return out


def generate_scenario(
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
) -> tuple[list[SensorDevice], list[Mcv], tuple[float, float]]:
    """Create devices, MCVs and the base-station position from the seeded RNG.

    Device positions are i.i.d. uniform over the square; the base station sits
    at the area center; MCV i starts at the centroid of grid cell i. Per-device
    consumption is base * (1 + degree_gain * degree) with base drawn uniformly
    from the configured range. Identical (config, seed) gives an identical
    scenario.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    if rng is None:
        rng, _, _ = rng_streams(config.seed)

    n = config.n_devices
    side = config.area_side
    positions = rng.uniform(0.0, side, size=(n, 2))
    base_rates = rng.uniform(*config.consumption_base_range, size=n)
    # deployed devices carry desynchronized charge states
    energies = rng.uniform(0.0, config.device_capacity, size=n)

    devices = [
        SensorDevice(
            id=i,
            position=(positions[i, 0], positions[i, 1]),
            energy=energies[i],
        )
        for i in range(n)
    ]
    graph = graphs.build_graph(devices, config.comm_range)
    bc = graphs.betweenness_all(graph)
    for dev in devices:
        dev.degree = graphs.degree_of(graph, dev.id)
        dev.betweenness = bc[dev.id]
        dev.consumption_rate = base_rates[dev.id] * (
            1.0 + config.consumption_degree_gain * dev.degree
        )

    mcvs = [
        Mcv(id=i, position=pos, energy=config.mcv_capacity)
        for i, pos in enumerate(grid_centroids(side, config.n_mcvs))
    ]
    base_position = (side / 2.0, side / 2.0)
    return devices, mcvs, base_position
