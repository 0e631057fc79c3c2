"""Evaluation metrics, per-seed reports, cross-seed aggregation, serialization.

Undefined metrics (zero dispensed energy, zero fulfilled requests, zero tours)
are carried as None and serialized as JSON null / empty CSV cells, never as 0.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

from . import kernels
from .config import ScenarioConfig, config_to_dict

SUMMARY_COLUMNS = (
    "policy",
    "n_devices",
    "seed_count",
    "eue_mean",
    "eue_sd",
    "delay_mean_s",
    "delay_sd_s",
    "tour_mean_m",
    "tour_sd_m",
    "total_travel_mean_m",
    "dead_mean",
)


class AggregationError(ValueError):
    """Reports with mismatched configurations cannot be aggregated."""


@dataclass
class EnergyLedger:
    delivered: float
    dispensed: float


@dataclass
class Tour:
    distance: float
    completed: bool = True


@dataclass
class MetricsReport:
    energy_usage_efficiency: float | None
    avg_charging_delay: float | None
    avg_tour_distance: float | None
    total_travel_distance: float
    fulfilled_requests: int
    open_requests_at_end: int
    dead_devices: int
    dead_unfulfilled_requests: int
    tours_completed: int
    unfinished_tours: int
    delivered_total_j: float
    dispensed_total_j: float
    ledger_max_rel_err: float
    per_mcv: list[dict]
    config: dict
    seed: int

    def to_dict(self) -> dict:
        return {
            "energy_usage_efficiency": self.energy_usage_efficiency,
            "avg_charging_delay": self.avg_charging_delay,
            "avg_tour_distance": self.avg_tour_distance,
            "total_travel_distance": self.total_travel_distance,
            "fulfilled_requests": self.fulfilled_requests,
            "open_requests_at_end": self.open_requests_at_end,
            "dead_devices": self.dead_devices,
            "dead_unfulfilled_requests": self.dead_unfulfilled_requests,
            "tours_completed": self.tours_completed,
            "unfinished_tours": self.unfinished_tours,
            "delivered_total_j": self.delivered_total_j,
            "dispensed_total_j": self.dispensed_total_j,
            "ledger_max_rel_err": self.ledger_max_rel_err,
            "per_mcv": self.per_mcv,
            "config": self.config,
            "seed": self.seed,
        }


def energy_usage_efficiency(ledger: EnergyLedger) -> float | None:
    """Delivered-to-devices over dispensed-from-base; None when nothing was
    dispensed (undefined, not zero)."""
    if ledger.dispensed == 0:
        return None
    return ledger.delivered / ledger.dispensed


def avg_charging_delay(requests) -> float | None:
    delays = [
        r.fulfill_time - r.issue_time for r in requests if r.fulfill_time is not None
    ]
    if not delays:
        return None
    return sum(delays) / len(delays)


def avg_tour_distance(tours) -> float | None:
    distances = [t.distance if isinstance(t, Tour) else float(t) for t in tours]
    if not distances:
        return None
    return sum(distances) / len(distances)


def _per_mcv_rows(mcv_stats: list[dict]) -> list[dict]:
    return [
        {
            "mcv_id": s["mcv_id"],
            "tours_completed": len(s["tours"]),
            "unfinished_tour_m": s["unfinished"],
            "travel_distance_m": sum(s["tours"]) + s["unfinished"],
            "dispensed_j": s["dispensed"],
            "delivered_j": s["delivered"],
            "services": s["services"],
        }
        for s in mcv_stats
    ]


def _assemble_report(
    config: ScenarioConfig,
    seed: int,
    mcv_stats: list[dict],
    delays: list[float],
    fulfilled: int,
    open_at_end: int,
    deaths: int,
    dead_unfulfilled: int,
    ledger_err: float,
) -> MetricsReport:
    # canonical tour list: per MCV in id order, completed tours then the
    # unfinished remainder (flagged via unfinished_tours)
    all_tours: list[float] = []
    for s in mcv_stats:
        all_tours.extend(s["tours"])
        all_tours.append(s["unfinished"])
    delivered = sum(s["delivered"] for s in mcv_stats)
    dispensed = sum(s["dispensed"] for s in mcv_stats)
    return MetricsReport(
        energy_usage_efficiency=energy_usage_efficiency(EnergyLedger(delivered, dispensed)),
        avg_charging_delay=(sum(delays) / len(delays)) if delays else None,
        avg_tour_distance=(sum(all_tours) / len(all_tours)) if all_tours else None,
        total_travel_distance=sum(all_tours),
        fulfilled_requests=fulfilled,
        open_requests_at_end=open_at_end,
        dead_devices=deaths,
        dead_unfulfilled_requests=dead_unfulfilled,
        tours_completed=sum(len(s["tours"]) for s in mcv_stats),
        unfinished_tours=len(mcv_stats),
        delivered_total_j=delivered,
        dispensed_total_j=dispensed,
        ledger_max_rel_err=ledger_err,
        per_mcv=_per_mcv_rows(mcv_stats),
        config=config_to_dict(config),
        seed=seed,
    )


def build_report(state) -> MetricsReport:
    """Live report from an engine state at end of run."""
    mcv_stats = [
        {
            "mcv_id": m.id,
            "tours": list(m.completed_tours),
            "unfinished": m.tour_distance,
            "dispensed": m.dispensed_total,
            "delivered": m.delivered_total,
            "services": m.services,
        }
        for m in state.mcvs
    ]
    delays = [r.fulfill_time - r.issue_time for r in state.base.fulfilled]
    return _assemble_report(
        state.config,
        state.config.seed,
        mcv_stats,
        delays,
        fulfilled=len(state.base.fulfilled),
        open_at_end=len(state.base.open_requests),
        deaths=int((state.state == kernels.DEAD).sum()),
        dead_unfulfilled=len(state.base.dead_unfulfilled),
        ledger_err=state.ledger_max_rel_err,
    )


def replay_report(events, config: ScenarioConfig, seed: int) -> MetricsReport:
    """Recompute the full report from the event log alone (completeness check).

    Uses the same accounting as the engine: refills are travel_cost * tour
    distance plus the per-completion WPT expenditure of the tour.
    """
    mcv_stats = {
        m: {
            "mcv_id": m,
            "tours": [],
            "unfinished": 0.0,
            "dispensed": 0.0,
            "delivered": 0.0,
            "services": 0,
            "_expend": 0.0,
        }
        for m in range(config.n_mcvs)
    }
    open_reqs: dict[int, float] = {}
    delays: list[float] = []
    deaths = 0
    dead_unfulfilled = 0
    for time_s, event_type, device_id, mcv_id, value in events:
        if event_type == "request":
            open_reqs[device_id] = time_s
        elif event_type == "charge_complete":
            delays.append(time_s - open_reqs.pop(device_id))
            s = mcv_stats[mcv_id]
            s["delivered"] += value
            s["_expend"] += value / config.wpt_efficiency
            s["services"] += 1
        elif event_type == "death":
            deaths += 1
            if device_id in open_reqs:
                open_reqs.pop(device_id)
                dead_unfulfilled += 1
        elif event_type == "depot_return":
            s = mcv_stats[mcv_id]
            refill = config.travel_cost * value + s["_expend"]
            s["dispensed"] += refill
            s["tours"].append(value)
            s["_expend"] = 0.0
        elif event_type == "end":
            mcv_stats[mcv_id]["unfinished"] = value
    return _assemble_report(
        config,
        seed,
        [mcv_stats[m] for m in sorted(mcv_stats)],
        delays,
        fulfilled=len(delays),
        open_at_end=len(open_reqs),
        deaths=deaths,
        dead_unfulfilled=dead_unfulfilled,
        ledger_err=0.0,
    )


# -- aggregation --------------------------------------------------------------

_AGG_FIELDS = (
    ("energy_usage_efficiency", "eue"),
    ("avg_charging_delay", "delay"),
    ("avg_tour_distance", "tour"),
    ("total_travel_distance", "total_travel"),
    ("dead_devices", "dead"),
    ("fulfilled_requests", "fulfilled"),
)


def _mean_sd(values: list[float]) -> tuple[float | None, float | None]:
    """Mean and sample sd over a canonically sorted copy (permutation-invariant)."""
    if not values:
        return None, None
    vals = sorted(values)
    n = len(vals)
    mean = sum(vals) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var)


def aggregate(reports: list[MetricsReport]) -> dict:
    """Per-metric mean and sample sd across seeds; None values are excluded
    with exclusion counts reported. Reports must share config except seed."""
    if not reports:
        raise AggregationError("no reports to aggregate")
    reference = dict(reports[0].config)
    reference.pop("seed", None)
    for r in reports[1:]:
        other = dict(r.config)
        other.pop("seed", None)
        if other != reference:
            raise AggregationError("reports mix different configurations")
    out: dict = {"seed_count": len(reports), "metrics": {}}
    for attr, _short in _AGG_FIELDS:
        values = [getattr(r, attr) for r in reports]
        kept = [float(v) for v in values if v is not None]
        mean, sd = _mean_sd(kept)
        out["metrics"][attr] = {
            "mean": mean,
            "sd": sd,
            "excluded": len(values) - len(kept),
        }
    return out


def summary_row(policy: str, n_devices: int, reports: list[MetricsReport]) -> dict:
    agg = aggregate(reports)
    m = agg["metrics"]
    return {
        "policy": policy,
        "n_devices": n_devices,
        "seed_count": agg["seed_count"],
        "eue_mean": m["energy_usage_efficiency"]["mean"],
        "eue_sd": m["energy_usage_efficiency"]["sd"],
        "delay_mean_s": m["avg_charging_delay"]["mean"],
        "delay_sd_s": m["avg_charging_delay"]["sd"],
        "tour_mean_m": m["avg_tour_distance"]["mean"],
        "tour_sd_m": m["avg_tour_distance"]["sd"],
        "total_travel_mean_m": m["total_travel_distance"]["mean"],
        "dead_mean": m["dead_devices"]["mean"],
    }


# -- serialization -------------------------------------------------------------


def atomic_write_text(path, text: str):
    """Write via a temp file + rename so interruptions never truncate output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def write_summary_csv(rows: list[dict], path):
    atomic_write_text(path, render_summary_csv(rows))


def render_events_csv(events) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("time_s", "event_type", "device_id", "mcv_id", "value"))
    for time_s, event_type, device_id, mcv_id, value in events:
        writer.writerow(
            (
                repr(float(time_s)),
                event_type,
                "" if device_id is None else device_id,
                "" if mcv_id is None else mcv_id,
                repr(float(value)),
            )
        )
    return buf.getvalue()


def write_events_csv(events, path):
    atomic_write_text(path, render_events_csv(events))


def parse_events_csv(text: str) -> list[tuple]:
    rows = list(csv.reader(io.StringIO(text)))
    out = []
    for time_s, event_type, device_id, mcv_id, value in rows[1:]:
        out.append(
            (
                float(time_s),
                event_type,
                int(device_id) if device_id else None,
                int(mcv_id) if mcv_id else None,
                float(value),
            )
        )
    return out


def write_report_json(report: MetricsReport, path):
    atomic_write_text(path, json.dumps(report.to_dict(), indent=2) + "\n")
