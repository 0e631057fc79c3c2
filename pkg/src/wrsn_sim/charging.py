"""Partial-charging factor pipeline and WPT energy accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .scheduler import PreconditionError


@dataclass
class ChargePlan:
    device_id: int
    criticality: float
    weighted_factor: float
    control_factor: float
    charge_factor: float
    delivered: float
    duration: float
    mcv_expenditure: float


def criticality(e: float, e_thr: float) -> float:
    """Normalized energy deficit below the request threshold."""
    if e > e_thr:
        raise PreconditionError(f"criticality of a non-requester: energy {e} > threshold {e_thr}")
    if e < 0:
        raise PreconditionError(f"negative energy {e}")
    return (e_thr - e) / e_thr


def weighted_factors(criticalities) -> np.ndarray:
    """Min-max of criticalities over one MCV queue; all equal maps to all 1.0."""
    c = np.asarray(criticalities, dtype=np.float64)
    if c.size == 0:
        raise PreconditionError("weighted_factors over an empty queue")
    lo, hi = c.min(), c.max()
    if hi == lo:
        return np.ones_like(c)
    return (c - lo) / (hi - lo)


def charge_factor(w: float, p_energy: float, factor_floor: float) -> float:
    """Weighted factor plus a control term of 10% of the residual-energy priority,
    clamped to [factor_floor, 1]."""
    kappa = 0.1 * p_energy
    return min(1.0, max(factor_floor, w + kappa))


def make_charge_plan(
    device,
    phi: float,
    config: ScenarioConfig,
    *,
    criticality_value: float = 0.0,
    weighted_factor: float = 1.0,
    control_factor: float = 0.0,
) -> ChargePlan:
    """Partial-charge plan: deliver phi * (capacity - e) at the receive-side rate.

    The MCV expends delivered / wpt_efficiency. Baselines use the same path
    with phi = 1.
    """
    delivered = phi * (config.device_capacity - device.energy)
    return ChargePlan(
        device_id=device.id,
        criticality=criticality_value,
        weighted_factor=weighted_factor,
        control_factor=control_factor,
        charge_factor=phi,
        delivered=delivered,
        duration=delivered / config.charge_rate,
        mcv_expenditure=delivered / config.wpt_efficiency,
    )


def travel_energy(distance: float, config: ScenarioConfig) -> float:
    if distance < 0:
        raise ValueError(f"negative distance {distance}")
    return config.travel_cost * distance
