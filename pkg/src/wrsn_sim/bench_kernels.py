"""Benchmark the compiled kernels against the pure-numpy fallback.

Run with `python -m wrsn_sim.bench_kernels`. Verifies that both backends
agree on every workload before timing them.
"""
from __future__ import annotations

import time

import numpy as np

from . import _kernels_py
from . import graphs


def _compiled():
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _kernels


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _drain_workload(n: int):
    rng = np.random.Generator(np.random.PCG64(7))
    energy = rng.uniform(0.0, 0.5, n)
    rate = rng.uniform(1e-4, 1e-3, n)
    state = rng.integers(0, 4, n).astype(np.int8)
    return energy, rate, state


def _graph_workload(n: int, comm_range: float):
    rng = np.random.Generator(np.random.PCG64(11))
    xy = rng.uniform(0.0, 1000.0, (n, 2))
    return graphs.adjacency_from_xy(xy, comm_range)


def _ping_workload(n_req: int, n_mcv: int):
    rng = np.random.Generator(np.random.PCG64(13))
    req = rng.uniform(0.0, 1000.0, (n_req, 2))
    mcv = rng.uniform(0.0, 1000.0, (n_mcv, 2))
    eligible = (rng.random(n_mcv) < 0.8).astype(np.uint8)
    return req, mcv, eligible


def main() -> int:
    compiled = _compiled()
    rows = []

    energy, rate, state = _drain_workload(500)
    args = lambda: (energy.copy(), rate, state, 0.1, 0.15)  # noqa: E731
    ref_c, ref_d = _kernels_py.drain_step(*args())
    if compiled is not None:
        got_e = energy.copy()
        got_c, got_d = compiled.drain_step(got_e, rate, state, 0.1, 0.15)
        exp_e = energy.copy()
        _kernels_py.drain_step(exp_e, rate, state, 0.1, 0.15)
        assert np.array_equal(got_e, exp_e), "drain_step energies diverge"
        assert np.array_equal(got_c, ref_c) and np.array_equal(got_d, ref_d)
    t_pure = _time(lambda: _kernels_py.drain_step(*args()), 200)
    t_comp = _time(lambda: compiled.drain_step(*args()), 200) if compiled else None
    rows.append(("drain_step (n=500)", t_pure, t_comp))

    indptr, indices = _graph_workload(400, 60.0)
    ref = _kernels_py.brandes_accumulate(indptr, indices)
    if compiled is not None:
        got = compiled.brandes_accumulate(indptr, indices)
        assert np.allclose(ref, got, rtol=0, atol=1e-9), "brandes backends diverge"
    t_pure = _time(lambda: _kernels_py.brandes_accumulate(indptr, indices), 3)
    t_comp = (
        _time(lambda: compiled.brandes_accumulate(indptr, indices), 3)
        if compiled
        else None
    )
    rows.append(("brandes (n=400)", t_pure, t_comp))

    req, mcv, eligible = _ping_workload(200, 3)
    ref_i, ref_dst = _kernels_py.nearest_eligible(req, mcv, eligible)
    if compiled is not None:
        got_i, got_dst = compiled.nearest_eligible(req, mcv, eligible)
        assert np.array_equal(ref_i, got_i) and np.allclose(ref_dst, got_dst)
    t_pure = _time(lambda: _kernels_py.nearest_eligible(req, mcv, eligible), 500)
    t_comp = (
        _time(lambda: compiled.nearest_eligible(req, mcv, eligible), 500)
        if compiled
        else None
    )
    rows.append(("nearest_eligible (200x3)", t_pure, t_comp))

    print(f"{'kernel':<28}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for name, pure, comp in rows:
        if comp is None:
            print(f"{name:<28}{pure * 1e6:>10.1f}us{'-':>12}{'-':>10}")
        else:
            print(
                f"{name:<28}{pure * 1e6:>10.1f}us{comp * 1e6:>10.1f}us"
                f"{pure / comp:>9.1f}x"
            )
    if compiled is None:
        print("compiled extension not available; showed pure backend only")
    else:
        print("backends agree on all workloads")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
