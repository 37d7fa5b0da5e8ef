"""Hot inner loops, in two interchangeable builds.

Every kernel exists as a numba ``@njit`` loop and a vectorized pure-numpy
twin; ``_accel`` picks the active build from ``EVLIGN_NUMBA``. Both builds
evaluate the same scalar expressions in the same order, so outputs are
bit-identical; ``benchmarks/benchmark_kernels.py`` compares their speed.

Accumulation order is stream order everywhere (the numpy builds use
``np.ufunc.at`` with interleaved index vectors to match the loops), which
is what makes repeated runs bit-identical.
"""

from __future__ import annotations

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# ---------------------------------------------------------------------------
# representation kernels


def _frame_counts_loop(x, y, p, height, width):
    out = np.zeros((2, height, width), np.int64)
    for i in range(x.shape[0]):
        ch = 0 if p[i] > 0 else 1
        out[ch, y[i], x[i]] += 1
    return out


def _frame_counts_vec(x, y, p, height, width):
    out = np.zeros((2, height, width), np.int64)
    ch = (p <= 0).astype(np.int64)
    np.add.at(out, (ch, y.astype(np.int64), x.astype(np.int64)), 1)
    return out


def _voxel_accumulate_loop(tstar, x, y, p, bins, height, width):
    out = np.zeros(bins * height * width, np.float64)
    plane = height * width
    for i in range(tstar.shape[0]):
        ti = int(np.floor(tstar[i]))
        frac = tstar[i] - ti
        pol = float(p[i])
        base = y[i] * width + x[i]
        out[ti * plane + base] += pol * (1.0 - frac)
        if frac > 0.0 and ti + 1 < bins:
            out[(ti + 1) * plane + base] += pol * frac
    return out.reshape(bins, height, width)


def _voxel_accumulate_vec(tstar, x, y, p, bins, height, width):
    out = np.zeros(bins * height * width, np.float64)
    plane = height * width
    ti = np.floor(tstar).astype(np.int64)
    frac = tstar - ti
    pol = p.astype(np.float64)
    base = y.astype(np.int64) * width + x.astype(np.int64)
    # interleave (left, right) per event so accumulation order matches the loop
    n = tstar.shape[0]
    idx = np.empty(2 * n, np.int64)
    val = np.empty(2 * n, np.float64)
    idx[0::2] = ti * plane + base
    val[0::2] = pol * (1.0 - frac)
    idx[1::2] = np.minimum(ti + 1, bins - 1) * plane + base
    val[1::2] = np.where((frac > 0.0) & (ti + 1 < bins), pol * frac, 0.0)
    np.add.at(out, idx, val)
    return out.reshape(bins, height, width)


def _last_timestamps_loop(t, x, y, p, height, width):
    last = np.full((2, height, width), -1, np.int64)
    for i in range(t.shape[0]):
        ch = 0 if p[i] > 0 else 1
        if t[i] > last[ch, y[i], x[i]]:
            last[ch, y[i], x[i]] = t[i]
    return last


def _last_timestamps_vec(t, x, y, p, height, width):
    last = np.full((2, height, width), -1, np.int64)
    ch = (p <= 0).astype(np.int64)
    np.maximum.at(last, (ch, y.astype(np.int64), x.astype(np.int64)), t)
    return last


# ---------------------------------------------------------------------------
# simulator kernel
#
# Per pixel the log-luminance reference is R = base + nref * C (nref is an
# integer step count, so R never drifts). Over one linear segment La -> Lb
# the pixel emits one event per threshold value V = base + (nref +/- j) * C
# reached, j = 1..m, at the linear crossing time; nref advances by +/- m.


def _segment_crossings_loop(la, lb, base, nref, ta, tb, contrast):
    n = la.shape[0]
    counts = np.zeros(n, np.int64)
    for i in range(n):
        d = lb[i] - la[i]
        r = base[i] + nref[i] * contrast
        if d > 0.0:
            m = int(np.floor((lb[i] - r) / contrast))
            if m < 0:
                m = 0
            while base[i] + (nref[i] + m + 1) * contrast <= lb[i]:
                m += 1
            while m > 0 and base[i] + (nref[i] + m) * contrast > lb[i]:
                m -= 1
            counts[i] = m
        elif d < 0.0:
            m = int(np.floor((r - lb[i]) / contrast))
            if m < 0:
                m = 0
            while base[i] + (nref[i] - m - 1) * contrast >= lb[i]:
                m += 1
            while m > 0 and base[i] + (nref[i] - m) * contrast < lb[i]:
                m -= 1
            counts[i] = m

    total = 0
    for i in range(n):
        total += counts[i]

    t_out = np.empty(total, np.int64)
    pix_out = np.empty(total, np.int64)
    pol_out = np.empty(total, np.int8)
    k = 0
    for i in range(n):
        m = counts[i]
        if m == 0:
            continue
        d = lb[i] - la[i]
        sign = 1 if d > 0.0 else -1
        for j in range(1, m + 1):
            v = base[i] + (nref[i] + sign * j) * contrast
            tc = ta + (v - la[i]) * (tb - ta) / (lb[i] - la[i])
            if tc < ta:
                tc = ta
            elif tc > tb:
                tc = tb
            t_out[k] = np.int64(np.floor(tc))
            pix_out[k] = i
            pol_out[k] = sign
            k += 1
        nref[i] += sign * m
    return t_out, pix_out, pol_out


def _segment_crossings_vec(la, lb, base, nref, ta, tb, contrast):
    d = lb - la
    r = base + nref * contrast
    rising = d > 0.0
    falling = d < 0.0

    m = np.zeros(la.shape[0], np.int64)
    m[rising] = np.floor((lb[rising] - r[rising]) / contrast).astype(np.int64)
    m[falling] = np.floor((r[falling] - lb[falling]) / contrast).astype(np.int64)
    np.clip(m, 0, None, out=m)
    # fix up float disagreements between the division and the canonical
    # threshold comparison (the comparison is authoritative)
    while True:
        up = rising & (base + (nref + m + 1) * contrast <= lb)
        down = falling & (base + (nref - m - 1) * contrast >= lb)
        if not (up.any() or down.any()):
            break
        m[up | down] += 1
    while True:
        over_up = rising & (m > 0) & (base + (nref + m) * contrast > lb)
        over_down = falling & (m > 0) & (base + (nref - m) * contrast < lb)
        if not (over_up.any() or over_down.any()):
            break
        m[over_up | over_down] -= 1

    sign = np.where(rising, 1, -1).astype(np.int64)
    total = int(m.sum())
    pix_out = np.repeat(np.arange(la.shape[0], dtype=np.int64), m)
    starts = np.cumsum(m) - m
    j = np.arange(total, dtype=np.int64) - np.repeat(starts, m) + 1
    sign_r = np.repeat(sign, m)
    v = base[pix_out] + (nref[pix_out] + sign_r * j) * contrast
    tc = ta + (v - la[pix_out]) * (tb - ta) / (lb[pix_out] - la[pix_out])
    np.clip(tc, ta, tb, out=tc)
    t_out = np.floor(tc).astype(np.int64)
    pol_out = sign_r.astype(np.int8)
    nref += sign * m
    return t_out, pix_out, pol_out


# ---------------------------------------------------------------------------
# dispatch

if NUMBA_ENABLED:
    frame_counts = njit(cache=True)(_frame_counts_loop)
    voxel_accumulate = njit(cache=True)(_voxel_accumulate_loop)
    last_timestamps = njit(cache=True)(_last_timestamps_loop)
    segment_crossings = njit(cache=True)(_segment_crossings_loop)
else:
    frame_counts = _frame_counts_vec
    voxel_accumulate = _voxel_accumulate_vec
    last_timestamps = _last_timestamps_vec
    segment_crossings = _segment_crossings_vec

BACKENDS = {
    "numpy": {
        "frame_counts": _frame_counts_vec,
        "voxel_accumulate": _voxel_accumulate_vec,
        "last_timestamps": _last_timestamps_vec,
        "segment_crossings": _segment_crossings_vec,
    }
}
if NUMBA_ENABLED:
    BACKENDS["numba"] = {
        "frame_counts": frame_counts,
        "voxel_accumulate": voxel_accumulate,
        "last_timestamps": last_timestamps,
        "segment_crossings": segment_crossings,
    }
