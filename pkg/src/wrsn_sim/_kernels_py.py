"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or when
WRSN_SIM_BACKEND=pure. `drain_step` is arithmetic-identical to the
compiled version; `brandes_accumulate` matches it to float rounding
(accumulation order differs).
"""
from __future__ import annotations

import numpy as np

BACKEND = "pure"

# device state codes shared with the engine and the compiled kernel
ACTIVE, REQUESTING, BEING_CHARGED, DEAD = 0, 1, 2, 3


def drain_step(energy, rate, state, dt, threshold):
    """Drain Active/Requesting devices by rate*dt in place.

    Returns (crossed, died): indices that crossed below the request threshold
    this step (excluding deaths) and indices that hit zero energy.
    """
    draining = np.flatnonzero((state == ACTIVE) | (state == REQUESTING))
    before = energy[draining]
    after = before - rate[draining] * dt
    died_local = after <= 0.0
    crossed_local = (before >= threshold) & (after < threshold) & ~died_local
    after[died_local] = 0.0
    energy[draining] = after
    return draining[crossed_local], draining[died_local]


def nearest_eligible(req_xy, mcv_xy, eligible):
    """Per requester: index of the nearest eligible MCV and its distance.

    Returns (idx, dist) with idx = -1 and dist = inf where no MCV is eligible.
    Ties go to the lower MCV index.
    """
    n_req = req_xy.shape[0]
    if n_req == 0 or not eligible.any():
        return (
            np.full(n_req, -1, dtype=np.int64),
            np.full(n_req, np.inf),
        )
    diff = req_xy[:, None, :] - mcv_xy[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    d[:, ~eligible.astype(bool)] = np.inf
    idx = d.argmin(axis=1)
    best = d[np.arange(n_req), idx]
    idx = idx.astype(np.int64)
    idx[~np.isfinite(best)] = -1
    return idx, best


def brandes_accumulate(indptr, indices):
    """Unnormalized Brandes betweenness (directed pair counting) over a CSR graph."""
    n = len(indptr) - 1
    cb = np.zeros(n)
    if n < 3:
        return cb
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    for s in range(n):
        dist.fill(-1)
        sigma.fill(0.0)
        dist[s] = 0
        sigma[s] = 1.0
        frontier = np.array([s], dtype=np.int64)
        levels = [frontier]
        edge_levels = []
        level = 0
        while frontier.size:
            counts = indptr[frontier + 1] - indptr[frontier]
            total = int(counts.sum())
            if total == 0:
                break
            # gather all neighbor edges leaving the frontier
            offsets = np.repeat(indptr[frontier], counts) + (
                np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            )
            nbr = indices[offsets]
            src = np.repeat(frontier, counts)
            fresh = dist[nbr] == -1
            if fresh.any():
                new_nodes = np.unique(nbr[fresh])
                dist[new_nodes] = level + 1
            else:
                new_nodes = np.empty(0, dtype=np.int64)
            onpath = dist[nbr] == level + 1
            np.add.at(sigma, nbr[onpath], sigma[src[onpath]])
            edge_levels.append((src[onpath], nbr[onpath]))
            levels.append(new_nodes)
            frontier = new_nodes
            level += 1
        delta.fill(0.0)
        for src, nbr in reversed(edge_levels):
            if src.size:
                np.add.at(delta, src, sigma[src] / sigma[nbr] * (1.0 + delta[nbr]))
        delta[s] = 0.0
        cb += delta
    return cb
