"""Hot counting kernels: numba-compiled with a pure-numpy fallback.

The two-stream delay histogram, coincidence matching, and dead-time
filtering dominate runtime for long sessions. Each kernel has a numba
``@njit`` implementation and a numpy fallback; set ``COMBNET_NO_NUMBA=1``
to force the fallback (see benchmarks/bench_kernels.py for the comparison).

All kernels take sorted float64 time arrays in picoseconds.
"""

from __future__ import annotations

import os

import numpy as np

USING_NUMBA = False
if os.environ.get("COMBNET_NO_NUMBA", "").strip() not in ("1", "true", "yes"):
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        USING_NUMBA = False


def _delay_histogram_py(a, b, lo_ps, hi_ps, bin_width_ps, nbins):
    counts = np.zeros(nbins, dtype=np.int64)
    jlo = 0
    jhi = 0
    nb = b.size
    for i in range(a.size):
        tlo = a[i] + lo_ps
        thi = a[i] + hi_ps
        while jlo < nb and b[jlo] < tlo:
            jlo += 1
        if jhi < jlo:
            jhi = jlo
        while jhi < nb and b[jhi] < thi:
            jhi += 1
        for j in range(jlo, jhi):
            k = int((b[j] - a[i] - lo_ps) / bin_width_ps)
            if 0 <= k < nbins:
                counts[k] += 1
    return counts


def _match_pairs_py(a, b, lo_ps, hi_ps):
    idx_a = np.empty(min(a.size, b.size), dtype=np.int64)
    idx_b = np.empty(min(a.size, b.size), dtype=np.int64)
    n = 0
    ambiguous = 0
    j = 0
    nb = b.size
    for i in range(a.size):
        tlo = a[i] + lo_ps
        thi = a[i] + hi_ps
        while j < nb and b[j] < tlo:
            j += 1
        if j < nb and b[j] < thi:
            idx_a[n] = i
            idx_b[n] = j
            n += 1
            if j + 1 < nb and b[j + 1] < thi:
                ambiguous += 1
            j += 1
    return idx_a[:n], idx_b[:n], ambiguous


def _dead_time_filter_py(times, dead_ps):
    keep = np.ones(times.size, dtype=np.bool_)
    if times.size == 0 or dead_ps <= 0:
        return keep
    last = times[0]
    for i in range(1, times.size):
        if times[i] - last < dead_ps:
            keep[i] = False
        else:
            last = times[i]
    return keep


if USING_NUMBA:
    _delay_histogram_nb = njit(cache=True)(_delay_histogram_py)
    _match_pairs_nb = njit(cache=True)(_match_pairs_py)
    _dead_time_filter_nb = njit(cache=True)(_dead_time_filter_py)


def _delay_histogram_np(a, b, lo_ps, hi_ps, bin_width_ps, nbins):
    counts = np.zeros(nbins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return counts
    left = np.searchsorted(b, a + lo_ps, side="left")
    right = np.searchsorted(b, a + hi_ps, side="left")
    per = right - left
    cum = np.cumsum(per)
    total_pairs = int(cum[-1])
    if total_pairs == 0:
        return counts
    # Chunk over a so the materialized pair list stays bounded.
    pair_budget = 4_000_000
    cuts = np.searchsorted(cum, np.arange(pair_budget, total_pairs, pair_budget))
    bounds = np.concatenate(([0], cuts + 1, [a.size]))
    for s, e in zip(bounds[:-1], bounds[1:]):
        if s >= e:
            continue
        chunk_per = per[s:e]
        total = int(chunk_per.sum())
        if total == 0:
            continue
        a_idx = np.repeat(np.arange(s, e), chunk_per)
        offsets = np.repeat(np.cumsum(chunk_per) - chunk_per, chunk_per)
        b_idx = left[a_idx] + (np.arange(total) - offsets)
        d = b[b_idx] - a[a_idx]
        bins = ((d - lo_ps) / bin_width_ps).astype(np.int64)
        valid = (bins >= 0) & (bins < nbins)
        np.add.at(counts, bins[valid], 1)
    return counts


def _match_pairs_np(a, b, lo_ps, hi_ps):
    # First-candidate proposals are vectorized; the scan enforcing one use
    # per b-tag falls back to a python loop only across proposal conflicts.
    left = np.searchsorted(b, a + lo_ps, side="left")
    right = np.searchsorted(b, a + hi_ps, side="left")
    has = left < right
    cand = np.flatnonzero(has)
    idx_a = []
    idx_b = []
    ambiguous = 0
    last_b = -1
    for i in cand:
        j = left[i] if left[i] > last_b else last_b + 1
        if j < right[i]:
            idx_a.append(i)
            idx_b.append(j)
            if j + 1 < right[i]:
                ambiguous += 1
            last_b = j
    return (
        np.asarray(idx_a, dtype=np.int64),
        np.asarray(idx_b, dtype=np.int64),
        ambiguous,
    )


def _dead_time_filter_np(times, dead_ps):
    keep = np.ones(times.size, dtype=np.bool_)
    if times.size == 0 or dead_ps <= 0:
        return keep
    if times.size > 1 and np.min(np.diff(times)) >= dead_ps:
        return keep
    return _dead_time_filter_py(times, dead_ps)


def delay_histogram(a, b, lo_ps, hi_ps, bin_width_ps, nbins):
    """Counts of (t_b - t_a) in nbins bins of bin_width_ps from lo_ps.

    Both inputs must be sorted ascending. Pure counting sweep: cost is
    O(len(a) + len(b) + pairs inside the span).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if USING_NUMBA:
        return _delay_histogram_nb(a, b, lo_ps, hi_ps, bin_width_ps, nbins)
    return _delay_histogram_np(a, b, lo_ps, hi_ps, bin_width_ps, nbins)


def match_pairs(a, b, lo_ps, hi_ps):
    """First-match coincidence pairing with each tag used at most once.

    Returns (indices into a, indices into b, ambiguous_count) where
    ambiguous_count is the number of matches that had a second b-tag
    inside the same window.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if USING_NUMBA:
        return _match_pairs_nb(a, b, lo_ps, hi_ps)
    return _match_pairs_np(a, b, lo_ps, hi_ps)


def dead_time_filter(times, dead_ps):
    """Boolean keep-mask: drop tags closer than dead_ps to the last kept tag."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    if USING_NUMBA:
        return _dead_time_filter_nb(times, dead_ps)
    return _dead_time_filter_np(times, dead_ps)
