# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-step device drain, nearest-MCV scan, Brandes."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

ACTIVE, REQUESTING, BEING_CHARGED, DEAD = 0, 1, 2, 3

DEF STATE_ACTIVE = 0
DEF STATE_REQUESTING = 1


def drain_step(
    cnp.float64_t[::1] energy,
    cnp.float64_t[::1] rate,
    cnp.int8_t[::1] state,
    double dt,
    double threshold,
):
    """Drain Active/Requesting devices by rate*dt in place.

    Returns (crossed, died): indices that crossed below the request threshold
    this step (excluding deaths) and indices that hit zero energy.
    """
    cdef Py_ssize_t n = energy.shape[0]
    cdef Py_ssize_t i
    cdef double before, after
    cdef list crossed = []
    cdef list died = []
    for i in range(n):
        if state[i] != STATE_ACTIVE and state[i] != STATE_REQUESTING:
            continue
        before = energy[i]
        after = before - rate[i] * dt
        if after <= 0.0:
            after = 0.0
            died.append(i)
        elif before >= threshold and after < threshold:
            crossed.append(i)
        energy[i] = after
    return (
        np.asarray(crossed, dtype=np.int64),
        np.asarray(died, dtype=np.int64),
    )


def nearest_eligible(
    cnp.float64_t[:, ::1] req_xy,
    cnp.float64_t[:, ::1] mcv_xy,
    cnp.uint8_t[::1] eligible,
):
    """Per requester: index of the nearest eligible MCV and its distance."""
    cdef Py_ssize_t n_req = req_xy.shape[0]
    cdef Py_ssize_t n_mcv = mcv_xy.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.full(n_req, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.full(n_req, np.inf)
    cdef cnp.int64_t[::1] idx_v = idx
    cdef cnp.float64_t[::1] dist_v = dist
    cdef Py_ssize_t r, m
    cdef double dx, dy, d2, best
    cdef Py_ssize_t best_m
    for r in range(n_req):
        best = -1.0
        best_m = -1
        for m in range(n_mcv):
            if not eligible[m]:
                continue
            dx = req_xy[r, 0] - mcv_xy[m, 0]
            dy = req_xy[r, 1] - mcv_xy[m, 1]
            d2 = dx * dx + dy * dy
            if best_m < 0 or d2 < best:
                best = d2
                best_m = m
        if best_m >= 0:
            idx_v[r] = best_m
            dist_v[r] = np.sqrt(best)
    return idx, dist


def brandes_accumulate(
    cnp.int64_t[::1] indptr,
    cnp.int64_t[::1] indices,
):
    """Unnormalized Brandes betweenness (directed pair counting) over a CSR graph."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cb = np.zeros(n)
    if n < 3:
        return cb
    cdef cnp.float64_t[::1] cb_v = cb
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dist_a = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sigma_a = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] delta_a = np.empty(n)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue_a = np.empty(n, dtype=np.int64)
    # predecessor lists stored flat: CSR-like with per-node cursor
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pred_a = np.empty(indices.shape[0], dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pred_start_a = np.empty(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pred_len_a = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = dist_a
    cdef cnp.float64_t[::1] sigma = sigma_a
    cdef cnp.float64_t[::1] delta = delta_a
    cdef cnp.int64_t[::1] queue = queue_a
    cdef cnp.int64_t[::1] pred = pred_a
    cdef cnp.int64_t[::1] pred_start = pred_start_a
    cdef cnp.int64_t[::1] pred_len = pred_len_a
    cdef Py_ssize_t s, i, v, w, head, tail, j, p
    cdef double coeff

    # predecessor slots reuse the adjacency layout: node v can have at most
    # deg(v) predecessors
    for i in range(n + 1):
        pred_start[i] = indptr[i]

    for s in range(n):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            pred_len[i] = 0
        dist[s] = 0
        sigma[s] = 1.0
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        while head < tail:
            v = queue[head]
            head += 1
            for j in range(indptr[v], indptr[v + 1]):
                w = indices[j]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    pred[pred_start[w] + pred_len[w]] = v
                    pred_len[w] += 1
        for i in range(n):
            delta[i] = 0.0
        # queue holds the BFS order; traverse in reverse for dependency accumulation
        for i in range(tail - 1, -1, -1):
            w = queue[i]
            coeff = (1.0 + delta[w]) / sigma[w]
            for j in range(pred_len[w]):
                p = pred[pred_start[w] + j]
                delta[p] += sigma[p] * coeff
            if w != s:
                cb_v[w] += delta[w]
    return cb
