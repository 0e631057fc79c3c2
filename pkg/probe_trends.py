# scratch harness: trend probe across policies/counts/seeds (not part of the package)
import dataclasses
import math
import sys
import time

import numpy as np

from wrsn_sim.config import ScenarioConfig
from wrsn_sim import engine


def run_cell(n, policy, seeds, **overrides):
    effs, delays, travels, deads, fulf = [], [], [], [], []
    for seed in seeds:
        cfg = ScenarioConfig(
            n_devices=n, scheduler_policy=policy, seed=seed, **overrides
        )
        report, _ = engine.run(cfg)
        effs.append(report.energy_usage_efficiency or 0.0)
        delays.append(report.avg_charging_delay or 0.0)
        travels.append(report.total_travel_distance)
        deads.append(report.dead_devices)
        fulf.append(report.fulfilled_requests)
    return {
        "eff": (np.mean(effs), np.std(effs, ddof=1) if len(effs) > 1 else 0.0),
        "delay": (np.mean(delays), np.std(delays, ddof=1) if len(delays) > 1 else 0.0),
        "travel": (np.mean(travels), np.std(travels, ddof=1) if len(travels) > 1 else 0.0),
        "dead": (np.mean(deads), 0),
        "fulfilled": (np.mean(fulf), 0),
    }


def main():
    overrides = {}
    for arg in sys.argv[1:]:
        key, _, value = arg.partition("=")
        overrides[key] = eval(value)  # scratch tool
    seeds = list(range(1, 1 + overrides.pop("nseeds", 3)))
    counts = overrides.pop("counts", (100, 300, 500))
    t0 = time.perf_counter()
    for n in counts:
        rows = {}
        for policy in ("ISACM", "NEAREST", "FCFS"):
            rows[policy] = run_cell(n, policy, seeds, **overrides)
        i, nn = rows["ISACM"], rows["NEAREST"]
        def fmt(r):
            return (f"eff={r['eff'][0]:.6f}±{r['eff'][1]:.6f} delay={r['delay'][0]:7.1f} "
                    f"travel={r['travel'][0]:9.0f} dead={r['dead'][0]:6.1f} served={r['fulfilled'][0]:6.0f}")
        print(f"n={n}")
        for policy in ("ISACM", "NEAREST", "FCFS"):
            print(f"  {policy:8s} {fmt(rows[policy])}")
        se_eff = math.sqrt(i['eff'][1]**2 + nn['eff'][1]**2) / math.sqrt(len(seeds))
        print(f"  -> eff diff (I-N): {i['eff'][0]-nn['eff'][0]:+.6f} (1 SE={se_eff:.6f}) "
              f"delay diff {i['delay'][0]-nn['delay'][0]:+.1f} travel diff {i['travel'][0]-nn['travel'][0]:+.0f}")
    print(f"wall: {time.perf_counter()-t0:.1f}s")


if __name__ == "__main__":
    main()
