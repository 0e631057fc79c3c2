"""Charging-load strategy: attribute scoring, per-MCV priority queues, locks,
and the two baseline orderings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ScenarioConfig


class SchedulerError(RuntimeError):
    pass


class PreconditionError(SchedulerError):
    """Operation invoked on a device that does not satisfy its preconditions."""


class ConflictError(SchedulerError):
    """A device ended up assigned to two MCVs; must be unreachable in correct runs."""


@dataclass
class AttributeVector:
    p_energy: float
    p_distance: float
    p_degree: float
    p_betweenness: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_energy, self.p_distance, self.p_degree, self.p_betweenness)


@dataclass
class QueueEntry:
    device_id: int
    metric: float
    attributes: AttributeVector


@dataclass
class BaseState:
    """Base-station bookkeeping: open requests, fulfilled history, per-MCV queues."""

    open_requests: dict = field(default_factory=dict)   # device_id -> ChargingRequest
    queues: dict = field(default_factory=dict)          # mcv_id -> ordered queue
    fulfilled: list = field(default_factory=list)
    dead_unfulfilled: list = field(default_factory=list)

    def locked_mcv(self, device_id: int):
        req = self.open_requests.get(device_id)
        return None if req is None else req.assigned_mcv


def minmax_normalize(raw: np.ndarray) -> np.ndarray:
    """Min-max to [0,1]; a degenerate spread maps every entry to 1.0."""
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return np.ones_like(raw)
    return (raw - lo) / (hi - lo)


def attribute_matrix(energies, distances, degrees, betweennesses, threshold) -> np.ndarray:
    """Column-stacked normalized attributes (energy, distance, degree, betweenness).

    Raw scores are oriented so that higher means higher charging priority:
    energy deficit below the threshold, negated distance, degree, betweenness.
    """
    cols = (
        minmax_normalize(threshold - np.asarray(energies, dtype=np.float64)),
        minmax_normalize(-np.asarray(distances, dtype=np.float64)),
        minmax_normalize(np.asarray(degrees, dtype=np.float64)),
        minmax_normalize(np.asarray(betweennesses, dtype=np.float64)),
    )
    return np.column_stack(cols)


def compute_attributes(requesters, mcv, stats, config: ScenarioConfig) -> dict[int, AttributeVector]:
    """Normalized attribute vectors for a requester set as seen by one MCV.

    `stats` may supply (degree, betweenness) overrides keyed by device id;
    otherwise the fields carried on the devices are used.
    """
    if not requesters:
        return {}
    requesters = sorted(requesters, key=lambda d: d.id)
    xy = np.array([d.position for d in requesters], dtype=np.float64)
    if np.isnan(xy).any():
        raise ValueError("requester positions contain NaN")
    mx, my = mcv.position
    dists = np.hypot(xy[:, 0] - mx, xy[:, 1] - my)
    energies = np.array([d.energy for d in requesters])
    if stats is not None:
        degrees = np.array([stats[d.id][0] for d in requesters], dtype=np.float64)
        bcs = np.array([stats[d.id][1] for d in requesters], dtype=np.float64)
    else:
        degrees = np.array([d.degree for d in requesters], dtype=np.float64)
        bcs = np.array([d.betweenness for d in requesters], dtype=np.float64)
    mat = attribute_matrix(energies, dists, degrees, bcs, config.request_threshold)
    return {
        d.id: AttributeVector(*(float(x) for x in row))
        for d, row in zip(requesters, mat)
    }


def queue_metric(attrs: AttributeVector, weights) -> float:
    """Weighted mean of the four attributes; equal weights give the plain average."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != 4 or (w < 0).any() or w.sum() <= 0:
        raise ConfigError(f"attribute_weights: need 4 nonnegative reals with sum > 0, got {weights!r}")
    return float(np.dot(attrs.as_tuple(), w) / w.sum())


def rank_by_metric(ids: np.ndarray, metrics: np.ndarray) -> np.ndarray:
    """Order: metric descending, device id ascending on ties."""
    return np.lexsort((ids, -metrics))


def build_queue(mcv, requesters, stats, config: ScenarioConfig, locks=None) -> list[QueueEntry]:
    """Ordered queue for one MCV, excluding devices locked to another MCV."""
    pool = [
        d for d in requesters
        if locks is None or locks.get(d.id) in (None, mcv.id)
    ]
    attrs = compute_attributes(pool, mcv, stats, config)
    if not attrs:
        return []
    ids = np.array(sorted(attrs), dtype=np.int64)
    w = np.asarray(config.attribute_weights, dtype=np.float64)
    if w.sum() <= 0 or (w < 0).any():
        raise ConfigError("attribute_weights: need nonnegative weights with sum > 0")
    metrics = np.array(
        [np.dot(attrs[i].as_tuple(), w) / w.sum() for i in ids]
    )
    order = rank_by_metric(ids, metrics)
    return [
        QueueEntry(device_id=int(ids[j]), metric=float(metrics[j]), attributes=attrs[int(ids[j])])
        for j in order
    ]


def lock_assignment(base_state: BaseState, device_id: int, mcv_id: int) -> BaseState:
    """Pin an open request to one MCV and purge the device from all other queues."""
    req = base_state.open_requests.get(device_id)
    if req is None:
        raise PreconditionError(f"device {device_id} has no open charging request")
    if req.assigned_mcv is not None and req.assigned_mcv != mcv_id:
        raise ConflictError(
            f"device {device_id} already locked to MCV {req.assigned_mcv}, "
            f"cannot lock to MCV {mcv_id}"
        )
    req.assigned_mcv = mcv_id
    for other_id, queue in base_state.queues.items():
        if other_id == mcv_id:
            continue
        base_state.queues[other_id] = [
            entry for entry in queue if _entry_device(entry) != device_id
        ]
    return base_state


def _entry_device(entry) -> int:
    return entry.device_id if isinstance(entry, QueueEntry) else int(entry)


def baseline_nearest(mcv, requesters) -> list[int]:
    """Nearest-first ordering (full-charge baseline); distance then id ascending."""
    mx, my = mcv.position
    return [
        d.id
        for d in sorted(
            requesters,
            key=lambda d: (math.hypot(d.position[0] - mx, d.position[1] - my), d.id),
        )
    ]


def baseline_fcfs(requests) -> list[int]:
    """First-come-first-served ordering (full-charge baseline); time then id."""
    return [
        r.device_id
        for r in sorted(requests, key=lambda r: (r.issue_time, r.device_id))
    ]
