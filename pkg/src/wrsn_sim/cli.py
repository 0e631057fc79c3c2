"""Command-line entry point: single runs, device-count/policy/seed sweeps, and
the standalone ranging benchmark.

Exit codes: 0 ok, 2 configuration error, 3 run failure, 4 partial sweep failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import engine, isac, metrics
from .config import (
    ConfigError,
    IsacConfig,
    POLICIES,
    ScenarioConfig,
    config_to_json,
    load_config,
    validate_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3
EXIT_PARTIAL_SWEEP = 4

DEFAULT_DEVICE_COUNTS = (100, 200, 300, 400, 500)
DEFAULT_SEEDS = 20

RUNS_COLUMNS = ("n_devices", "policy", "seed", "status", "errors")


@dataclass
class SweepSpec:
    device_counts: tuple[int, ...] = DEFAULT_DEVICE_COUNTS
    policies: tuple[str, ...] = POLICIES
    seeds: int = DEFAULT_SEEDS
    base_config: ScenarioConfig = dataclasses.field(default_factory=ScenarioConfig)
    output_dir: str = "out"

    def validate(self) -> list[str]:
        v = []
        if not self.device_counts:
            v.append("device_counts: must be nonempty")
        if not self.policies:
            v.append("policies: must be nonempty")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            v.append(f"policies: unknown {bad}")
        if self.seeds < 1:
            v.append("seeds: must be >= 1")
        return v

    def runs(self):
        """Run matrix in deterministic spec order: counts, then policies, then seeds.

        Seeds repeat per (count, policy) cell so policies are compared on
        identical scenario layouts.
        """
        base_seed = self.base_config.seed
        for n in self.device_counts:
            for policy in self.policies:
                for j in range(self.seeds):
                    yield n, policy, base_seed + j


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wrsn-sim",
        description="Deterministic WRSN charging simulator with an ISAC-assisted "
        "scheduling policy and two baselines.",
    )
    parser.add_argument("--config", metavar="PATH", help="scenario config JSON")
    parser.add_argument("--seed", type=int, metavar="N", help="seed override (sweep base seed)")
    parser.add_argument(
        "--policy", action="append", metavar="NAME",
        help="scheduling policy (repeatable for sweeps): ISACM, NEAREST, FCFS",
    )
    parser.add_argument(
        "--devices", action="append", type=int, metavar="N",
        help="device count (repeatable for sweeps)",
    )
    parser.add_argument("--out", metavar="DIR", default="out", help="output directory")
    parser.add_argument("--sweep", action="store_true", help="run the sweep matrix")
    parser.add_argument("--isac-bench", action="store_true", help="ranging RMSE-vs-SNR table")
    parser.add_argument(
        "--seeds", type=int, default=DEFAULT_SEEDS, metavar="N",
        help="seeds per sweep cell (default 20)",
    )
    parser.add_argument(
        "--jobs", type=int, default=None, metavar="N",
        help="parallel sweep workers (default: WRSN_SIM_JOBS or 1)",
    )
    parser.add_argument("--trials", type=int, default=1000, metavar="N", help="isac-bench trials per row")
    parser.add_argument(
        "--queue-log", action="store_true",
        help="also dump per-step queue snapshots (JSON lines) on single runs",
    )
    parser.add_argument(
        "--dump-correlation", action="store_true",
        help="isac-bench: dump one correlation magnitude profile per SNR row",
    )
    return parser


def _load_base_config(args) -> ScenarioConfig:
    if args.config:
        try:
            config = load_config(args.config)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
    else:
        config = ScenarioConfig()
    return config


def _apply_single_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.policy:
        if len(args.policy) > 1:
            raise ConfigError("--policy given more than once for a single run")
        updates["scheduler_policy"] = args.policy[0]
    if args.devices:
        if len(args.devices) > 1:
            raise ConfigError("--devices given more than once for a single run")
        updates["n_devices"] = args.devices[0]
    return dataclasses.replace(config, **updates) if updates else config


def cmd_run(config: ScenarioConfig, out_dir: str, queue_log: bool = False) -> int:
    violations = validate_config(config)
    if violations:
        print("invalid configuration:", file=sys.stderr)
        for item in violations:
            print(f"  {item}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(out_dir, exist_ok=True)
    try:
        if queue_log:
            report, events, queue_rows = _run_with_queue_log(config)
            metrics.atomic_write_text(
                os.path.join(out_dir, "queues.jsonl"),
                "".join(json.dumps(row) + "\n" for row in queue_rows),
            )
        else:
            report, events = engine.run(config)
    except engine.SimulationError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        print(f"diagnostic dump: {exc.dump}", file=sys.stderr)
        return EXIT_RUN
    metrics.write_report_json(report, os.path.join(out_dir, "report.json"))
    metrics.write_events_csv(events, os.path.join(out_dir, "events.csv"))
    print(os.path.join(out_dir, "report.json"))
    print(os.path.join(out_dir, "events.csv"))
    return EXIT_OK


def _run_with_queue_log(config: ScenarioConfig):
    state = engine.SimState(config)
    n_steps = int(math.ceil(config.sim_duration / config.timestep - 1e-9))
    queue_rows = []
    for _ in range(n_steps):
        engine.step(state)
        if state.queues_dirty:
            continue
        for mcv in state.mcvs:
            queue = state.base.queues.get(mcv.id, [])
            if queue:
                queue_rows.append(
                    {
                        "step": state.step_index,
                        "mcv_id": mcv.id,
                        "device_ids": [int(d) for d in queue],
                    }
                )
    for mcv in state.mcvs:
        state.log(engine.EVENT_END, None, mcv.id, mcv.tour_distance)
    return metrics.build_report(state), state.events, queue_rows


def _sweep_one(payload):
    # config travels as JSON so process pools can pickle the payload cheaply
    from .config import config_from_json

    n, policy, seed, config_json = payload
    config = dataclasses.replace(
        config_from_json(config_json), n_devices=n, scheduler_policy=policy, seed=seed
    )
    report, _events = engine.run(config)
    return report


def cmd_sweep(spec: SweepSpec, jobs: int = 1) -> int:
    bad = spec.validate()
    if bad:
        print("invalid sweep:", file=sys.stderr)
        for item in bad:
            print(f"  {item}", file=sys.stderr)
        return EXIT_CONFIG
    violations = validate_config(spec.base_config)
    if violations:
        print("invalid configuration:", file=sys.stderr)
        for item in violations:
            print(f"  {item}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(spec.output_dir, exist_ok=True)
    runs = list(spec.runs())
    config_json = config_to_json(spec.base_config)
    payloads = [(n, policy, seed, config_json) for n, policy, seed in runs]
    results: list = [None] * len(runs)
    errors: list = [None] * len(runs)

    def record(idx, outcome, err=None):
        results[idx] = outcome
        errors[idx] = err

    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_sweep_one, p): i for i, p in enumerate(payloads)}
            for fut in concurrent.futures.as_completed(futures):
                idx = futures[fut]
                try:
                    record(idx, fut.result())
                except Exception as exc:  # recorded, sweep continues
                    record(idx, None, f"{type(exc).__name__}: {exc}")
    else:
        for idx, payload in enumerate(payloads):
            try:
                record(idx, _sweep_one(payload))
            except Exception as exc:
                record(idx, None, f"{type(exc).__name__}: {exc}")
            done = idx + 1
            if done % 20 == 0 or done == len(payloads):
                print(f"  sweep {done}/{len(payloads)} runs", file=sys.stderr)

    rows = []
    for n in spec.device_counts:
        for policy in spec.policies:
            cell = [
                results[i]
                for i, (rn, rp, _s) in enumerate(runs)
                if rn == n and rp == policy and results[i] is not None
            ]
            if cell:
                rows.append(metrics.summary_row(policy, n, cell))
    metrics.write_summary_csv(rows, os.path.join(spec.output_dir, "summary.csv"))

    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(RUNS_COLUMNS)
    for i, (n, policy, seed) in enumerate(runs):
        status = "ok" if errors[i] is None else "failed"
        writer.writerow((n, policy, seed, status, errors[i] or ""))
    metrics.atomic_write_text(os.path.join(spec.output_dir, "sweep_runs.csv"), buf.getvalue())

    print(os.path.join(spec.output_dir, "summary.csv"))
    failed = sum(1 for e in errors if e is not None)
    if failed:
        print(f"{failed}/{len(runs)} runs failed", file=sys.stderr)
        return EXIT_PARTIAL_SWEEP
    return EXIT_OK


def isac_bench_rows(isac_cfg: IsacConfig, snr_grid, trials: int, rng_seed: int = 12345):
    """Monte-Carlo ranging error table over an SNR grid.

    The noiseless row uses 100 uniform distances in [1, 30] m; noisy rows use
    `trials` distances uniform in [5, 30] m, matching the chain's accuracy
    contract. Returns (rows, profiles) where profiles maps the row label to one
    (lag, |y|) correlation profile.
    """
    rows = []
    profiles = {}
    chirp = isac.generate_chirp(isac_cfg)
    filt = isac.MatchedFilter(chirp)
    max_lag = int(math.ceil(2.0 * 35.0 / isac_cfg.wave_speed * isac_cfg.sample_rate)) + 4
    window = len(chirp.samples) + max_lag
    for snr in snr_grid:
        noiseless = snr is None
        label = "inf" if noiseless else repr(float(snr))
        cfg = dataclasses.replace(
            isac_cfg, snr_db=math.inf if noiseless else float(snr)
        )
        n_trials = 100 if noiseless else trials
        rng = np.random.Generator(np.random.PCG64(rng_seed))
        distances = rng.uniform(1.0 if noiseless else 5.0, 30.0, size=n_trials)
        errors = np.empty(n_trials)
        correct = 0
        for i, d in enumerate(distances):
            echo = isac.simulate_echo(chirp, float(d), cfg, rng, window)
            lag, _mag = filt.delay(echo.samples)
            est = isac.estimate_distance(lag, cfg)
            errors[i] = est - d
            true_lag = int(round(isac.round_trip_delay(float(d), cfg) * cfg.sample_rate))
            correct += lag == true_lag
            if i == 0:
                nfft = 1 << (window - 1).bit_length()
                corr = np.fft.ifft(
                    np.fft.fft(echo.samples, nfft)
                    * np.conj(np.fft.fft(chirp.samples, nfft))
                )
                profiles[label] = np.abs(corr[: window - len(chirp.samples) + 1])
        rows.append(
            {
                "snr_db": label,
                "trials": n_trials,
                "rmse_m": float(np.sqrt(np.mean(errors**2))),
                "max_abs_err_m": float(np.max(np.abs(errors))),
                "lag_correct_frac": correct / n_trials,
                "range_bin_m": cfg.range_bin,
            }
        )
    return rows, profiles


def cmd_isac_bench(
    isac_cfg: IsacConfig,
    out_dir: str,
    trials: int = 1000,
    dump_correlation: bool = False,
) -> int:
    probe = ScenarioConfig(isac=isac_cfg)
    violations = [v for v in validate_config(probe) if v.startswith("isac.")]
    if violations:
        print("invalid configuration:", file=sys.stderr)
        for item in violations:
            print(f"  {item}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(out_dir, exist_ok=True)
    snr_grid = [None, 20.0, 10.0, 5.0, 0.0, -5.0, -10.0, -20.0, -30.0]
    rows, profiles = isac_bench_rows(isac_cfg, snr_grid, trials)
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    columns = ("snr_db", "trials", "rmse_m", "max_abs_err_m", "lag_correct_frac", "range_bin_m")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([metrics._cell(row[c]) for c in columns])
    path = os.path.join(out_dir, "isac_bench.csv")
    metrics.atomic_write_text(path, buf.getvalue())
    print(path)
    if dump_correlation:
        for label, profile in profiles.items():
            pbuf = _io.StringIO()
            pw = _csv.writer(pbuf, lineterminator="\n")
            pw.writerow(("lag", "magnitude"))
            for lag, mag in enumerate(profile):
                pw.writerow((lag, repr(float(mag))))
            ppath = os.path.join(out_dir, f"correlation_snr_{label}.csv")
            metrics.atomic_write_text(ppath, pbuf.getvalue())
            print(ppath)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.sweep and args.isac_bench:
        print("--sweep and --isac-bench are mutually exclusive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = _load_base_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.isac_bench:
        return cmd_isac_bench(
            config.isac, args.out, trials=args.trials,
            dump_correlation=args.dump_correlation,
        )

    if args.sweep:
        jobs = args.jobs
        if jobs is None:
            jobs = int(os.environ.get("WRSN_SIM_JOBS", "1"))
        base = config
        if args.seed is not None:
            base = dataclasses.replace(base, seed=args.seed)
        spec = SweepSpec(
            device_counts=tuple(args.devices) if args.devices else DEFAULT_DEVICE_COUNTS,
            policies=tuple(args.policy) if args.policy else POLICIES,
            seeds=args.seeds,
            base_config=base,
            output_dir=args.out,
        )
        return cmd_sweep(spec, jobs=max(1, jobs))

    try:
        config = _apply_single_overrides(config, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return cmd_run(config, args.out, queue_log=args.queue_log)


if __name__ == "__main__":
    sys.exit(main())
