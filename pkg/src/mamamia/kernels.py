"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled by numba and a vectorized
numpy version. Both consume identical inputs (random draws are made by the
caller) and use integer arithmetic where results feed back into decisions, so
the two paths agree bit for bit. The active implementation is picked once at
import time from :mod:`mamamia._accel`; both stay reachable through
:data:`BACKENDS` for tests and benchmarks.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# contingency counts with a compressed second axis


def _joint_counts_loop(x, y, dx, dy):
    present = np.zeros(dy, np.int64)
    for i in range(y.shape[0]):
        present[y[i]] = 1
    label = np.empty(dy, np.int64)
    k = 0
    for v in range(dy):
        if present[v]:
            label[v] = k
            k += 1
    table = np.zeros((dx, k), np.int64)
    for i in range(x.shape[0]):
        table[x[i], label[y[i]]] += 1
    return table


def _joint_counts_numpy(x, y, dx, dy):
    uniq, inv = np.unique(y, return_inverse=True)
    k = uniq.shape[0]
    flat = np.bincount(x * k + inv.reshape(-1), minlength=dx * k)
    return flat.reshape(dx, k).astype(np.int64)


_joint_counts_loop_inner = njit(_joint_counts_loop) or _joint_counts_loop


# ---------------------------------------------------------------------------
# plug-in mutual information from integer codes
#
# MI = (1/n) * sum_ij c_ij * (ln c_ij - ln a_i - ln b_j) + ln n, with the logs
# looked up in a shared table and the sum accumulated in row-major order, so
# both backends perform the same float operations in the same sequence.


def _mi_codes_loop(x, y, dx, dy, logtab):
    table = _joint_counts_loop_inner(x, y, dx, dy)
    k = table.shape[1]
    a = np.zeros(dx, np.int64)
    b = np.zeros(k, np.int64)
    for i in range(dx):
        for j in range(k):
            a[i] += table[i, j]
            b[j] += table[i, j]
    s = 0.0
    for i in range(dx):
        for j in range(k):
            c = table[i, j]
            if c > 0:
                s += c * (logtab[c] - logtab[a[i]] - logtab[b[j]])
    n = x.shape[0]
    return s / n + logtab[n]


def _mi_codes_numpy(x, y, dx, dy, logtab):
    table = _joint_counts_numpy(x, y, dx, dy)
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    ii, jj = np.nonzero(table)
    c = table[ii, jj]
    terms = c * (logtab[c] - logtab[a[ii]] - logtab[b[jj]])
    s = np.cumsum(terms)[-1] if terms.size else 0.0
    n = x.shape[0]
    return s / n + logtab[n]


# ---------------------------------------------------------------------------
# inverse-CDF sampling from per-parent categorical rows


def _sample_rows_loop(cdf, codes, u):
    n = u.shape[0]
    d = cdf.shape[1]
    out = np.empty(n, np.int64)
    for i in range(n):
        row = codes[i]
        j = 0
        while j < d - 1 and u[i] >= cdf[row, j]:
            j += 1
        out[i] = j
    return out


def _sample_rows_numpy(cdf, codes, u):
    d = cdf.shape[1]
    hits = (u[:, None] >= cdf[codes, : d - 1]).sum(axis=1)
    return hits.astype(np.int64)


# ---------------------------------------------------------------------------
# evolutionary search: one chunk of generations
#
# State (E elites held in a pool of 2E slots, n rows, l features, q queries,
# C = 2 cells: conjunction unset, set):
#   pool (2E, n, l) int32, counts (2E, q, C) int64, fit (2E,) int64
#   rank (E,) int64: slot holding the elite of each rank, best first
#   targets (q, C) int64, already scaled by n * scale
# Draw arrays are (G, n_off) int64 and refer to elites by rank. Offspring
# o < n_mut mutate the best elite; the rest splice row r2 of elite pb into
# row r of elite pa from column cut. An offspring that enters the elite set
# is materialized in a slot no current elite occupies, so parents are never
# overwritten and surviving elites are never copied.


def _cell_pool(pool, slot, r, qf, qc, j):
    for i in range(qf.shape[1]):
        if pool[slot, r, qf[j, i]] != qc[j, i]:
            return 0
    return 1


def _cell_row(row, o, qf, qc, j):
    for i in range(qf.shape[1]):
        if row[o, qf[j, i]] != qc[j, i]:
            return 0
    return 1


def _make_evolve_loop(cell_pool, cell_row):
    def _evolve_chunk_loop(pool, counts, fit, rank, targets, qf, qc, scale, n_mut,
                           dr, df, dv, dpa, dpb, dr2, dcut,
                           stall0, best0, patience, history):
        E = rank.shape[0]
        l = pool.shape[2]
        q = qf.shape[0]
        G = dr.shape[0]
        n_off = dr.shape[1]
        off_fit = np.empty(n_off, np.int64)
        off_parent = np.empty(n_off, np.int64)
        off_row = np.empty((n_off, l), pool.dtype)
        all_fit = np.empty(E + n_off, np.int64)
        new_rank = np.empty(E, np.int64)
        in_use = np.zeros(pool.shape[0], np.bool_)
        stall = stall0
        best = best0
        for g in range(G):
            for o in range(n_off):
                rr = dr[g, o]
                if o < n_mut:
                    p = 0
                    sp = rank[0]
                    for j in range(l):
                        off_row[o, j] = pool[sp, rr, j]
                    off_row[o, df[g, o]] = dv[g, o]
                else:
                    p = dpa[g, o]
                    sp = rank[p]
                    sb = rank[dpb[g, o]]
                    r2 = dr2[g, o]
                    cut = dcut[g, o]
                    for j in range(l):
                        if j < cut:
                            off_row[o, j] = pool[sp, rr, j]
                        else:
                            off_row[o, j] = pool[sb, r2, j]
                off_parent[o] = p
                delta = 0
                for j in range(q):
                    c0 = cell_pool(pool, sp, rr, qf, qc, j)
                    c1 = cell_row(off_row, o, qf, qc, j)
                    if c0 != c1:
                        a = counts[sp, j, c0]
                        bb = counts[sp, j, c1]
                        t0 = targets[j, c0]
                        t1 = targets[j, c1]
                        delta += abs((a - 1) * scale - t0) - abs(a * scale - t0)
                        delta += abs((bb + 1) * scale - t1) - abs(bb * scale - t1)
                off_fit[o] = fit[sp] + delta
            for i in range(E):
                all_fit[i] = fit[rank[i]]
            for o in range(n_off):
                all_fit[E + o] = off_fit[o]
            order = np.argsort(all_fit, kind="mergesort")
            changed = False
            for s in range(E):
                if order[s] != s:
                    changed = True
            if changed:
                in_use[:] = False
                for i in range(E):
                    in_use[rank[i]] = True
                free = 0
                for s in range(E):
                    idx = order[s]
                    if idx < E:
                        new_rank[s] = rank[idx]
                        continue
                    o = idx - E
                    while in_use[free]:
                        free += 1
                    dst = free
                    free += 1
                    sp = rank[off_parent[o]]
                    rr = dr[g, o]
                    pool[dst] = pool[sp]
                    counts[dst] = counts[sp]
                    for j in range(q):
                        c0 = cell_pool(pool, sp, rr, qf, qc, j)
                        c1 = cell_row(off_row, o, qf, qc, j)
                        if c0 != c1:
                            counts[dst, j, c0] -= 1
                            counts[dst, j, c1] += 1
                    for j in range(l):
                        pool[dst, rr, j] = off_row[o, j]
                    fit[dst] = off_fit[o]
                    new_rank[s] = dst
                for s in range(E):
                    rank[s] = new_rank[s]
            if fit[rank[0]] < best:
                best = fit[rank[0]]
                stall = 0
            else:
                stall += 1
            history[g] = best
            if stall >= patience:
                return g + 1, stall, best, True
        return G, stall, best, False

    return _evolve_chunk_loop


def _cells_numpy(rows, qf, qc):
    return np.all(rows[:, qf] == qc[None, :, :], axis=2).astype(np.int64)


def _evolve_chunk_numpy(pool, counts, fit, rank, targets, qf, qc, scale, n_mut,
                        dr, df, dv, dpa, dpb, dr2, dcut,
                        stall0, best0, patience, history):
    E = rank.shape[0]
    l = pool.shape[2]
    q = qf.shape[0]
    G, n_off = dr.shape
    stall = stall0
    best = best0
    is_mut = np.arange(n_off) < n_mut
    mut_idx = np.flatnonzero(is_mut)
    cross_idx = np.flatnonzero(~is_mut)
    cols = np.arange(l)
    qidx = np.arange(q)
    for g in range(G):
        parents = np.where(is_mut, 0, dpa[g])
        slots = rank[parents]
        rr = dr[g]
        old_rows = pool[slots, rr]
        new_rows = old_rows.copy()
        new_rows[mut_idx, df[g, mut_idx]] = dv[g, mut_idx]
        if cross_idx.size:
            donor = pool[rank[dpb[g, cross_idx]], dr2[g, cross_idx]]
            take = cols[None, :] >= dcut[g, cross_idx][:, None]
            new_rows[cross_idx] = np.where(take, donor, new_rows[cross_idx])
        c0 = _cells_numpy(old_rows, qf, qc)
        c1 = _cells_numpy(new_rows, qf, qc)
        a = counts[slots[:, None], qidx[None, :], c0]
        b = counts[slots[:, None], qidx[None, :], c1]
        t0 = targets[qidx[None, :], c0]
        t1 = targets[qidx[None, :], c1]
        d = (np.abs((a - 1) * scale - t0) - np.abs(a * scale - t0)
             + np.abs((b + 1) * scale - t1) - np.abs(b * scale - t1))
        d = np.where(c0 != c1, d, 0)
        off_fit = fit[slots] + d.sum(axis=1)
        order = np.argsort(np.concatenate([fit[rank], off_fit]), kind="stable")[:E]
        if np.any(order != np.arange(E)):
            free = iter(np.setdiff1d(np.arange(pool.shape[0]), rank))
            new_rank = rank.copy()
            for s, idx in enumerate(order):
                if idx < E:
                    new_rank[s] = rank[idx]
                    continue
                o = idx - E
                dst = next(free)
                sp = slots[o]
                pool[dst] = pool[sp]
                pool[dst, rr[o]] = new_rows[o]
                counts[dst] = counts[sp]
                diff = c0[o] != c1[o]
                counts[dst, qidx[diff], c0[o, diff]] -= 1
                counts[dst, qidx[diff], c1[o, diff]] += 1
                fit[dst] = off_fit[o]
                new_rank[s] = dst
            rank[:] = new_rank
        if fit[rank[0]] < best:
            best = int(fit[rank[0]])
            stall = 0
        else:
            stall += 1
        history[g] = best
        if stall >= patience:
            return g + 1, stall, best, True
    return G, stall, best, False


# ---------------------------------------------------------------------------
# backend tables

_NUMPY = {
    "joint_counts": _joint_counts_numpy,
    "mi_codes": _mi_codes_numpy,
    "sample_rows": _sample_rows_numpy,
    "evolve_chunk": _evolve_chunk_numpy,
}

BACKENDS: dict[str, dict] = {"numpy": _NUMPY}

if HAVE_NUMBA:
    BACKENDS["numba"] = {
        "joint_counts": _joint_counts_loop_inner,
        "mi_codes": njit(_mi_codes_loop),
        "sample_rows": njit(_sample_rows_loop),
        "evolve_chunk": njit(_make_evolve_loop(njit(_cell_pool), njit(_cell_row))),
    }

ACTIVE = "numba" if USE_NUMBA and "numba" in BACKENDS else "numpy"
_impl = BACKENDS[ACTIVE]


def joint_counts(x: np.ndarray, y: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Contingency table of ``x`` against the observed values of ``y``.

    Columns follow the sorted observed values of ``y``; unobserved values of
    ``y`` get no column, which keeps the table small for wide joint codes.
    """
    x = np.ascontiguousarray(x, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    return _impl["joint_counts"](x, y, int(dx), int(dy))


def log_table(n: int) -> np.ndarray:
    """``ln(0..n)`` with ``ln 0`` stored as 0 (it is never looked up)."""
    with np.errstate(divide="ignore"):
        t = np.log(np.arange(n + 1, dtype=np.float64))
    t[0] = 0.0
    return t


def mi_codes(x: np.ndarray, y: np.ndarray, dx: int, dy: int,
             logtab: np.ndarray | None = None) -> float:
    """Plug-in mutual information (nats) between two non-empty code columns."""
    x = np.ascontiguousarray(x, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if logtab is None:
        logtab = log_table(x.shape[0])
    return float(_impl["mi_codes"](x, y, int(dx), int(dy), logtab))


def sample_rows(cdf: np.ndarray, codes: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw one category per row from ``cdf[codes[i]]`` using uniforms ``u``."""
    return _impl["sample_rows"](
        np.ascontiguousarray(cdf, dtype=np.float64),
        np.ascontiguousarray(codes, dtype=np.int64),
        np.ascontiguousarray(u, dtype=np.float64),
    )


def evolve_chunk(*args, backend: str | None = None):
    """Advance the elite pool by ``len(draws)`` generations or until stalled.

    Returns ``(generations_run, stall, best, stopped)`` and updates ``pool``,
    ``counts``, ``fit``, ``rank`` and ``history`` in place.
    """
    fn = BACKENDS[backend]["evolve_chunk"] if backend else _impl["evolve_chunk"]
    return fn(*args)
