"""Fixed-timestep simulation loop.

Sub-phase order within one step is fixed: (1) device drain and deaths,
(2) request emission, (3) graph/queue rebuilds, (4) MCV motion, (5) ranging
events and locks, (6) contact and charging progress, (7) depot returns.
All iteration is in ascending id order and all randomness comes from three
seed-derived streams (scenario, noise, detection), so a (config, seed) pair
reproduces a run bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import charging, graphs, isac, kernels, model, scheduler
from .config import ConfigError, ScenarioConfig, validate_config
from .model import DeviceState, McvState
from .scheduler import BaseState

EVENT_REQUEST = "request"
EVENT_LOCK = "lock"
EVENT_CONTACT = "contact"
EVENT_CHARGE_COMPLETE = "charge_complete"
EVENT_DEPOT_RETURN = "depot_return"
EVENT_DEATH = "death"
EVENT_END = "end"

EVENT_COLUMNS = ("time_s", "event_type", "device_id", "mcv_id", "value")

# Queue entries whose metric sits within this band of the current best are
# treated as equal priority; the dispatcher serves the nearest of them first
# (route-aware serving of the priority queue).
DISPATCH_METRIC_BAND = 0.15

_ST_ACTIVE = kernels.ACTIVE
_ST_REQUESTING = kernels.REQUESTING
_ST_CHARGING = kernels.BEING_CHARGED
_ST_DEAD = kernels.DEAD

_DEVICE_STATES = {
    _ST_ACTIVE: DeviceState.ACTIVE,
    _ST_REQUESTING: DeviceState.REQUESTING,
    _ST_CHARGING: DeviceState.BEING_CHARGED,
    _ST_DEAD: DeviceState.DEAD,
}


class SimulationError(RuntimeError):
    """An engine invariant was violated; carries a diagnostic dump."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass
class McvRuntime:
    id: int
    x: float
    y: float
    energy: float
    state: McvState = McvState.IDLE
    target: int | None = None
    lock: int | None = None
    plan: charging.ChargePlan | None = None
    plan_remaining: float = 0.0
    chain_delivered: float = 0.0
    diverted: bool = False
    odometer: float = 0.0
    odometer_mark: float = 0.0
    tour_distance: float = 0.0
    # per-tour WPT expenditure accounted at charge completion; drives refills
    tour_expend: float = 0.0
    completed_tours: list = field(default_factory=list)
    dispensed_total: float = 0.0
    delivered_total: float = 0.0
    services: int = 0

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(self.x - x, self.y - y)


class SimState:
    """Mutable world state for one run; owned by a single thread."""

    def __init__(self, config: ScenarioConfig):
        violations = validate_config(config)
        if violations:
            raise ConfigError("; ".join(violations))
        self.config = config
        self.policy = config.scheduler_policy
        self.rng_scenario, self.rng_noise, self.rng_detection = model.rng_streams(config.seed)

        devices, mcvs, base_position = model.generate_scenario(config, self.rng_scenario)
        self.base_xy = base_position
        n = len(devices)
        self.n = n
        self.xy = np.array([d.position for d in devices], dtype=np.float64)
        self.energy = np.array([d.energy for d in devices], dtype=np.float64)
        self.rate = np.array([d.consumption_rate for d in devices], dtype=np.float64)
        self.state = np.zeros(n, dtype=np.int8)
        self.degree = np.array([d.degree for d in devices], dtype=np.float64)
        self.betweenness = np.array([d.betweenness for d in devices], dtype=np.float64)
        # static full-population adjacency; alive views derived from it
        self.full_indptr, self.full_indices = graphs.adjacency_from_xy(
            self.xy, config.comm_range
        )
        self.full_entry_row = np.repeat(
            np.arange(n, dtype=np.int64), np.diff(self.full_indptr)
        )

        self.mcvs = [
            McvRuntime(id=m.id, x=m.position[0], y=m.position[1], energy=m.energy)
            for m in mcvs
        ]
        self.base = BaseState(queues={m.id: [] for m in self.mcvs})
        self.queue_metric_maps: dict[int, dict[int, float]] = {m.id: {} for m in self.mcvs}
        self.queue_band_floor: dict[int, float] = {m.id: -math.inf for m in self.mcvs}
        self.queue_crit_span: dict[int, tuple[float, float]] = {m.id: (0.0, 0.0) for m in self.mcvs}
        self.clock = 0.0
        self.step_index = 0
        self.events: list[tuple] = []
        self.graph_dirty = False
        self.queues_dirty = False
        self.unlocked_requesters: set[int] = set()
        # physical accumulators for the global energy-ledger check
        self.travel_energy_true = 0.0
        self.expend_true = 0.0
        self.ledger_max_rel_err = 0.0
        self.diag = {"phi": [], "leg_m": [], "strategic": [], "delivered": []}

        self.threshold = config.request_threshold
        self.dt = config.timestep
        # devices start with desynchronized charge states; those already below
        # the threshold open requests immediately
        for dev in range(n):
            if self.energy[dev] < self.threshold:
                _open_request(self, dev)
        self.ping_range = config.sensing_range + config.isac.elfes_r_uncertain
        if self.policy == "ISACM":
            self.chirp = isac.generate_chirp(config.isac)
            max_lag = int(math.ceil(
                2.0 * self.ping_range / config.isac.wave_speed * config.isac.sample_rate
            )) + 4
            self.echo_window = len(self.chirp.samples) + max_lag
            self.filter = isac.MatchedFilter(self.chirp)
        else:
            self.chirp = None
            self.filter = None

    # -- views -------------------------------------------------------------

    def device_view(self, device_id: int) -> model.SensorDevice:
        return model.SensorDevice(
            id=device_id,
            position=(self.xy[device_id, 0], self.xy[device_id, 1]),
            energy=float(self.energy[device_id]),
            state=_DEVICE_STATES[int(self.state[device_id])],
            consumption_rate=float(self.rate[device_id]),
            degree=int(self.degree[device_id]),
            betweenness=float(self.betweenness[device_id]),
        )

    def mcv_view(self, mcv_id: int) -> model.Mcv:
        m = self.mcvs[mcv_id]
        return model.Mcv(
            id=m.id,
            position=(m.x, m.y),
            energy=m.energy,
            state=m.state,
            queue=list(self.base.queues.get(m.id, [])),
            current_target=m.target,
            tour_distance=m.tour_distance,
            dispensed_total=m.dispensed_total,
        )

    @property
    def devices(self) -> list[model.SensorDevice]:
        return [self.device_view(i) for i in range(self.n)]

    def log(self, event_type: str, device_id, mcv_id, value: float):
        self.events.append((self.clock, event_type, device_id, mcv_id, value))


# -- event helpers ----------------------------------------------------------


def _kill_device(state: SimState, dev: int):
    state.state[dev] = _ST_DEAD
    state.energy[dev] = 0.0
    req = state.base.open_requests.pop(dev, None)
    if req is not None:
        state.base.dead_unfulfilled.append(req)
        if req.assigned_mcv is not None:
            mcv = state.mcvs[req.assigned_mcv]
            if mcv.lock == dev:
                mcv.lock = None
            if mcv.target == dev:
                mcv.target = None
    for mcv in state.mcvs:
        if mcv.target == dev:
            mcv.target = None
    state.unlocked_requesters.discard(dev)
    for mcv_id, queue in state.base.queues.items():
        if dev in queue:
            state.base.queues[mcv_id] = [d for d in queue if d != dev]
    # alive-neighbor degrees drop by one
    for j in state.full_indices[state.full_indptr[dev]:state.full_indptr[dev + 1]]:
        state.degree[j] -= 1.0
    state.graph_dirty = True
    state.queues_dirty = True
    state.log(EVENT_DEATH, dev, None, 0.0)


def _open_request(state: SimState, dev: int):
    state.state[dev] = _ST_REQUESTING
    req = model.ChargingRequest(device_id=dev, issue_time=state.clock)
    state.base.open_requests[dev] = req
    state.unlocked_requesters.add(dev)
    state.queues_dirty = True
    state.log(EVENT_REQUEST, dev, None, float(state.energy[dev]))


def _rebuild_graph_stats(state: SimState):
    alive = state.state != _ST_DEAD
    alive_idx = np.flatnonzero(alive)
    n_alive = len(alive_idx)
    state.betweenness[:] = 0.0
    if n_alive >= 3 and len(state.full_indices):
        keep = alive[state.full_entry_row] & alive[state.full_indices]
        counts = np.bincount(state.full_entry_row[keep], minlength=state.n)
        compact = np.cumsum(alive) - 1
        indptr = np.zeros(n_alive + 1, dtype=np.int64)
        np.cumsum(counts[alive_idx], out=indptr[1:])
        indices = compact[state.full_indices[keep]].astype(np.int64)
        values = graphs.betweenness_normalized(indptr, indices)
        state.betweenness[alive_idx] = values
    state.graph_dirty = False


def _rebuild_queues(state: SimState):
    base = state.base
    requesters = sorted(
        dev for dev, req in base.open_requests.items()
        if state.state[dev] == _ST_REQUESTING
    )
    if state.policy == "FCFS":
        order = scheduler.baseline_fcfs(
            [base.open_requests[dev] for dev in requesters]
        )
        for mcv in state.mcvs:
            base.queues[mcv.id] = list(order)
        state.queues_dirty = False
        return
    ids = np.array(requesters, dtype=np.int64)
    if len(ids) == 0:
        for mcv in state.mcvs:
            base.queues[mcv.id] = []
        state.queues_dirty = False
        return
    xy = state.xy[ids]
    if state.policy == "NEAREST":
        for mcv in state.mcvs:
            dists = np.hypot(xy[:, 0] - mcv.x, xy[:, 1] - mcv.y)
            order = np.lexsort((ids, dists))
            base.queues[mcv.id] = [int(ids[j]) for j in order]
        state.queues_dirty = False
        return

    energies = state.energy[ids]
    degrees = state.degree[ids]
    bcs = state.betweenness[ids]
    assigned = [base.open_requests[int(d)].assigned_mcv for d in ids]
    weights = np.asarray(state.config.attribute_weights, dtype=np.float64)
    wsum = weights.sum()
    for mcv in state.mcvs:
        keep = np.array([a is None or a == mcv.id for a in assigned], dtype=bool)
        sub_ids = ids[keep]
        if len(sub_ids) == 0:
            base.queues[mcv.id] = []
            continue
        dists = np.hypot(xy[keep, 0] - mcv.x, xy[keep, 1] - mcv.y)
        mat = scheduler.attribute_matrix(
            energies[keep], dists, degrees[keep], bcs[keep], state.threshold
        )
        metrics = mat @ weights / wsum
        order = scheduler.rank_by_metric(sub_ids, metrics)
        base.queues[mcv.id] = [int(sub_ids[j]) for j in order]
        state.queue_metric_maps[mcv.id] = {
            int(sub_ids[j]): float(metrics[j]) for j in order
        }
        state.queue_band_floor[mcv.id] = (
            float(metrics[order[0]]) - DISPATCH_METRIC_BAND if len(order) else -math.inf
        )
        crits = (state.threshold - np.minimum(energies[keep], state.threshold)) / state.threshold
        state.queue_crit_span[mcv.id] = (
            (float(crits.min()), float(crits.max())) if len(crits) else (0.0, 0.0)
        )
    state.queues_dirty = False


def _release_assignment(state: SimState, mcv: McvRuntime):
    if mcv.lock is not None:
        req = state.base.open_requests.get(mcv.lock)
        if req is not None and req.assigned_mcv == mcv.id:
            req.assigned_mcv = None
            state.unlocked_requesters.add(mcv.lock)
        mcv.lock = None
        state.queues_dirty = True
    mcv.target = None


def _phi_for(state: SimState, mcv: McvRuntime, dev: int) -> tuple[float, float, float, float]:
    """Charge factor for the target within this MCV's live queue.

    Returns (phi, criticality, weighted_factor, control_factor).
    """
    if state.policy != "ISACM":
        return 1.0, 0.0, 1.0, 0.0
    queue = state.base.queues.get(mcv.id) or [dev]
    if dev not in queue:
        queue = list(queue) + [dev]
    energies = state.energy[np.array(queue, dtype=np.int64)]
    thr = state.threshold
    crits = (thr - np.minimum(energies, thr)) / thr
    w_all = charging.weighted_factors(crits)
    pos = queue.index(dev)
    w = float(w_all[pos])
    # queue-local residual-energy priority shares the weighted factor's
    # normalization set
    p_energy = w
    kappa = 0.1 * p_energy
    phi = charging.charge_factor(w, p_energy, state.config.factor_floor)
    return phi, float(crits[pos]), w, kappa


# -- sub-phases ---------------------------------------------------------------


def _phase_drain_and_requests(state: SimState):
    crossed, died = kernels.drain_step(
        state.energy, state.rate, state.state, state.dt, state.threshold
    )
    for dev in died:
        _kill_device(state, int(dev))
    for dev in crossed:
        dev = int(dev)
        if state.state[dev] == _ST_ACTIVE and dev not in state.base.open_requests:
            _open_request(state, dev)


def _reachable_alive(state: SimState, mcv: McvRuntime, dev: int) -> bool:
    """Triage filter: can this MCV reach the device before it drains out?"""
    rate = state.rate[dev]
    if rate <= 0.0:
        return True
    travel_time = mcv.distance_to(state.xy[dev, 0], state.xy[dev, 1]) / state.config.mcv_speed
    return state.energy[dev] / rate > travel_time


def _select_target_isacm(state: SimState, mcv: McvRuntime, targeted: set):
    if mcv.lock is not None:
        mcv.target = mcv.lock
        return
    if mcv.target is not None:
        req = state.base.open_requests.get(mcv.target)
        if (
            req is not None
            and state.state[mcv.target] == _ST_REQUESTING
            and req.assigned_mcv in (None, mcv.id)
        ):
            return
        mcv.target = None
    metric_of = state.queue_metric_maps.get(mcv.id, {})
    c_lo, c_hi = state.queue_crit_span.get(mcv.id, (0.0, 0.0))
    c_span = c_hi - c_lo
    cfg = state.config
    band_floor = None
    best = None
    best_score = -math.inf
    for dev in state.base.queues.get(mcv.id, ()):
        metric = metric_of.get(dev, 0.0)
        if band_floor is not None and metric < band_floor:
            break  # queue is ordered; everything further is below the band
        if dev in targeted:
            continue
        req = state.base.open_requests.get(dev)
        if req is None or state.state[dev] != _ST_REQUESTING:
            continue
        if req.assigned_mcv not in (None, mcv.id):
            continue
        if not _reachable_alive(state, mcv, dev):
            continue  # skip targets that would die before arrival
        if band_floor is None:
            band_floor = metric - DISPATCH_METRIC_BAND
        # estimated delivered energy per meter of approach
        e = state.energy[dev]
        crit = (state.threshold - min(e, state.threshold)) / state.threshold
        w = (crit - c_lo) / c_span if c_span > 0.0 else 1.0
        phi = charging.charge_factor(w, w, cfg.factor_floor)
        d = mcv.distance_to(state.xy[dev, 0], state.xy[dev, 1])
        score = phi * (cfg.device_capacity - e) / max(d, 10.0)
        if score > best_score:
            best, best_score = dev, score
    mcv.target = best


def _select_target_baseline(state: SimState, mcv: McvRuntime):
    if mcv.target is not None:
        req = state.base.open_requests.get(mcv.target)
        if req is not None and req.assigned_mcv == mcv.id and state.state[mcv.target] == _ST_REQUESTING:
            return
        _release_assignment(state, mcv)
    for dev in state.base.queues.get(mcv.id, ()):
        req = state.base.open_requests.get(dev)
        if req is None or req.assigned_mcv is not None:
            continue
        if state.state[dev] != _ST_REQUESTING:
            continue
        # lock at departure
        req.assigned_mcv = mcv.id
        mcv.lock = dev
        mcv.target = dev
        state.unlocked_requesters.discard(dev)
        state.queues_dirty = True
        state.log(
            EVENT_LOCK, dev, mcv.id,
            mcv.distance_to(state.xy[dev, 0], state.xy[dev, 1]),
        )
        return


def _move_toward(state: SimState, mcv: McvRuntime, tx: float, ty: float):
    d = mcv.distance_to(tx, ty)
    step = state.config.mcv_speed * state.dt
    if d <= step:
        moved = d
        mcv.x = tx
        mcv.y = ty
    else:
        moved = step
        mcv.x += (tx - mcv.x) / d * step
        mcv.y += (ty - mcv.y) / d * step
    if moved > 0.0:
        cost = state.config.travel_cost * moved
        mcv.energy -= cost
        mcv.tour_distance += moved
        mcv.odometer += moved
        state.travel_energy_true += cost


def _phase_move(state: SimState):
    targeted = {m.target for m in state.mcvs if m.target is not None}
    for mcv in state.mcvs:
        if mcv.state in (McvState.IDLE, McvState.TRAVELING):
            before = mcv.target
            if state.policy == "ISACM":
                _select_target_isacm(state, mcv, targeted)
            else:
                _select_target_baseline(state, mcv)
            if before is not None and before != mcv.target:
                targeted.discard(before)
            if mcv.target is not None:
                targeted.add(mcv.target)
                mcv.state = McvState.TRAVELING
                _move_toward(state, mcv, state.xy[mcv.target, 0], state.xy[mcv.target, 1])
            else:
                mcv.state = McvState.IDLE
        elif mcv.state is McvState.RETURNING:
            _move_toward(state, mcv, state.base_xy[0], state.base_xy[1])


def _phase_isac(state: SimState):
    if state.policy != "ISACM" or not state.unlocked_requesters:
        return
    eligible = np.array(
        [
            m.state in (McvState.IDLE, McvState.TRAVELING) and m.lock is None
            for m in state.mcvs
        ],
        dtype=np.uint8,
    )
    if not eligible.any():
        return
    req_ids = sorted(state.unlocked_requesters)
    req_xy = np.ascontiguousarray(state.xy[np.array(req_ids, dtype=np.int64)])
    mcv_xy = np.array([[m.x, m.y] for m in state.mcvs], dtype=np.float64)
    near_idx, near_d = kernels.nearest_eligible(req_xy, mcv_xy, eligible)
    for pos, dev in enumerate(req_ids):
        m_idx = int(near_idx[pos])
        if m_idx < 0 or near_d[pos] > state.ping_range:
            continue
        mcv = state.mcvs[m_idx]
        if mcv.lock is not None or mcv.state not in (McvState.IDLE, McvState.TRAVELING):
            continue  # consumed by an earlier lock this step
        if dev not in state.base.queues.get(mcv.id, ()):
            continue
        if state.queue_metric_maps[mcv.id].get(dev, -math.inf) < state.queue_band_floor[mcv.id]:
            continue  # only currently-prioritized devices divert a passing MCV
        result = isac.run_detection_chain(
            state.filter,
            float(near_d[pos]),
            state.config.sensing_range,
            state.config.isac,
            state.rng_noise,
            state.rng_detection,
            window_samples=state.echo_window,
        )
        if not result.detected:
            continue
        scheduler.lock_assignment(state.base, dev, mcv.id)
        for other in state.mcvs:
            if other.id != mcv.id and other.target == dev:
                other.target = None  # strategic target stolen by a closer MCV
        mcv.diverted = mcv.target != dev
        mcv.lock = dev
        mcv.target = dev
        mcv.state = McvState.TRAVELING
        state.unlocked_requesters.discard(dev)
        state.queues_dirty = True
        state.log(EVENT_LOCK, dev, mcv.id, result.estimated_distance)


def _complete_plan(state: SimState, mcv: McvRuntime):
    """One charge plan finished; chain another partial plan while the device
    still sits below its energy requirement, else close out the request."""
    cfg = state.config
    dev = mcv.plan.device_id
    mcv.chain_delivered += mcv.plan.delivered
    state.energy[dev] = min(float(state.energy[dev]), cfg.device_capacity)
    if state.energy[dev] < state.threshold:
        phi, crit, w, kappa = _phi_for(state, mcv, dev)
        plan = charging.make_charge_plan(
            state.device_view(dev), phi, cfg,
            criticality_value=crit, weighted_factor=w, control_factor=kappa,
        )
        return_cost = cfg.travel_cost * mcv.distance_to(*state.base_xy) + cfg.return_reserve
        if mcv.energy >= plan.mcv_expenditure + return_cost and plan.delivered > 0.0:
            mcv.plan = plan
            mcv.plan_remaining = plan.delivered
            return
    _finish_service(state, mcv, dev)


def _finish_service(state: SimState, mcv: McvRuntime, dev: int):
    req = state.base.open_requests.pop(dev)
    req.fulfill_time = state.clock
    req.delivered = mcv.chain_delivered
    state.base.fulfilled.append(req)
    mcv.delivered_total += mcv.chain_delivered
    mcv.tour_expend += mcv.chain_delivered / state.config.wpt_efficiency
    mcv.services += 1
    state.diag["phi"].append(mcv.plan.charge_factor)
    state.diag["delivered"].append(mcv.chain_delivered)
    state.diag["leg_m"].append(mcv.odometer - mcv.odometer_mark)
    state.diag["strategic"].append(not mcv.diverted)
    mcv.odometer_mark = mcv.odometer
    mcv.diverted = False
    state.log(EVENT_CHARGE_COMPLETE, dev, mcv.id, mcv.chain_delivered)
    mcv.plan = None
    mcv.plan_remaining = 0.0
    mcv.chain_delivered = 0.0
    mcv.lock = None
    mcv.target = None
    mcv.state = McvState.IDLE
    state.queues_dirty = True
    if state.energy[dev] < state.threshold:
        # MCV had to break off early; the device asks again right away
        _open_request(state, dev)
    else:
        state.state[dev] = _ST_ACTIVE


def _phase_contact_and_charge(state: SimState):
    cfg = state.config
    for mcv in state.mcvs:
        if mcv.state is McvState.CHARGING:
            chunk = min(cfg.charge_rate * state.dt, mcv.plan_remaining)
            dev = mcv.plan.device_id
            state.energy[dev] += chunk
            expend = chunk / cfg.wpt_efficiency
            mcv.energy -= expend
            state.expend_true += expend
            mcv.plan_remaining -= chunk
            if mcv.plan_remaining <= 0.0:
                _complete_plan(state, mcv)
            continue
        if mcv.state is not McvState.TRAVELING or mcv.target is None:
            continue
        dev = mcv.target
        d = mcv.distance_to(state.xy[dev, 0], state.xy[dev, 1])
        if d > cfg.contact_epsilon:
            continue
        req = state.base.open_requests.get(dev)
        if req is None:
            mcv.target = None
            continue
        phi, crit, w, kappa = _phi_for(state, mcv, dev)
        plan = charging.make_charge_plan(
            state.device_view(dev), phi, cfg,
            criticality_value=crit, weighted_factor=w, control_factor=kappa,
        )
        return_cost = cfg.travel_cost * mcv.distance_to(*state.base_xy) + cfg.return_reserve
        if mcv.energy < plan.mcv_expenditure + return_cost:
            _release_assignment(state, mcv)
            mcv.state = McvState.RETURNING
            continue
        if req.assigned_mcv is None:
            scheduler.lock_assignment(state.base, dev, mcv.id)
            state.unlocked_requesters.discard(dev)
        elif req.assigned_mcv != mcv.id:
            raise SimulationError(
                f"contact with device {dev} locked to MCV {req.assigned_mcv}",
                _dump(state),
            )
        mcv.lock = dev
        mcv.plan = plan
        mcv.plan_remaining = plan.delivered
        mcv.state = McvState.CHARGING
        state.state[dev] = _ST_CHARGING
        state.queues_dirty = True
        state.log(EVENT_CONTACT, dev, mcv.id, d)


def _phase_returns(state: SimState):
    cfg = state.config
    for mcv in state.mcvs:
        if mcv.state in (McvState.IDLE, McvState.TRAVELING):
            need = cfg.travel_cost * mcv.distance_to(*state.base_xy) + cfg.return_reserve
            if mcv.energy < need:
                _release_assignment(state, mcv)
                mcv.state = McvState.RETURNING
        if mcv.state is McvState.RETURNING and mcv.x == state.base_xy[0] and mcv.y == state.base_xy[1]:
            mcv.state = McvState.RECHARGING
            refill = cfg.travel_cost * mcv.tour_distance + mcv.tour_expend
            # tour started from a full battery, so the completion-accounted
            # refill must match the physically drained energy
            drained = cfg.mcv_capacity - mcv.energy
            rel = abs(refill - drained) / max(refill, 1.0)
            state.ledger_max_rel_err = max(state.ledger_max_rel_err, rel)
            mcv.dispensed_total += refill
            mcv.energy = cfg.mcv_capacity
            mcv.completed_tours.append(mcv.tour_distance)
            state.log(EVENT_DEPOT_RETURN, None, mcv.id, mcv.tour_distance)
            mcv.tour_distance = 0.0
            mcv.tour_expend = 0.0
            mcv.state = McvState.IDLE
            state.queues_dirty = True


def _dump(state: SimState) -> dict:
    return {
        "clock": state.clock,
        "policy": state.policy,
        "seed": state.config.seed,
        "targets": {m.id: m.target for m in state.mcvs},
        "locks": {m.id: m.lock for m in state.mcvs},
        "open_requests": sorted(state.base.open_requests),
        "mcv_states": {m.id: m.state.value for m in state.mcvs},
    }


def _assert_invariants(state: SimState):
    targets = [m.target for m in state.mcvs if m.target is not None]
    if len(targets) != len(set(targets)):
        raise SimulationError(f"conflicting MCV targets {targets}", _dump(state))
    for m in state.mcvs:
        if m.lock is not None:
            req = state.base.open_requests.get(m.lock)
            if req is None or req.assigned_mcv != m.id:
                raise SimulationError(
                    f"MCV {m.id} lock on {m.lock} inconsistent with base state",
                    _dump(state),
                )
        if not -1e-9 <= m.energy <= state.config.mcv_capacity + 1e-9:
            raise SimulationError(f"MCV {m.id} energy {m.energy} out of bounds", _dump(state))
    if (state.energy < 0.0).any() or (state.energy > state.config.device_capacity + 1e-12).any():
        bad = int(np.argmax(state.energy))
        raise SimulationError(
            f"device energy out of bounds (device {bad}: {state.energy[bad]})",
            _dump(state),
        )
    dead = np.flatnonzero(state.state == _ST_DEAD)
    for dev in dead:
        if int(dev) in state.base.open_requests:
            raise SimulationError(f"dead device {dev} holds an open request", _dump(state))


def step(state: SimState, config: ScenarioConfig | None = None) -> SimState:
    """Advance the world by exactly one timestep."""
    cfg = config or state.config
    state.clock = (state.step_index + 1) * cfg.timestep
    _phase_drain_and_requests(state)
    if state.graph_dirty and state.policy == "ISACM":
        _rebuild_graph_stats(state)
    if state.queues_dirty:
        _rebuild_queues(state)
    _phase_move(state)
    _phase_isac(state)
    _phase_contact_and_charge(state)
    _phase_returns(state)
    _assert_invariants(state)
    state.step_index += 1
    return state


def policy_dispatch(config: ScenarioConfig) -> dict:
    """Scheduling facts for the configured policy (path selection helper)."""
    isacm = config.scheduler_policy == "ISACM"
    return {
        "policy": config.scheduler_policy,
        "uses_isac": isacm,
        "partial_charging": isacm,
        "lock_at_departure": not isacm,
    }


def run(config: ScenarioConfig):
    """Run a full scenario; returns (MetricsReport, event rows)."""
    from . import metrics

    state = SimState(config)
    n_steps = int(math.ceil(config.sim_duration / config.timestep - 1e-9))
    for _ in range(n_steps):
        step(state)
    for mcv in state.mcvs:
        state.log(EVENT_END, None, mcv.id, mcv.tour_distance)
    # global ledger identity: dispensed = travel + expenditure + residual delta
    dispensed = sum(m.dispensed_total for m in state.mcvs)
    delta = sum(m.energy for m in state.mcvs) - config.mcv_capacity * len(state.mcvs)
    expected = state.travel_energy_true + state.expend_true + delta
    rel = abs(dispensed - expected) / max(abs(dispensed), 1.0)
    state.ledger_max_rel_err = max(state.ledger_max_rel_err, rel)
    report = metrics.build_report(state)
    return report, state.events
