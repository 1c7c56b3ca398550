"""Hartigan & Hartigan dip statistic.

The dip of an empirical distribution is the smallest sup-distance between its
CDF and any unimodal CDF.  It is found by iteratively fitting the greatest
convex minorant (GCM) and least concave majorant (LCM) of the ECDF on a
shrinking modal interval; deviations are tracked in ECDF-count units and
scaled by 1/(2n) at the end.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def dip_sorted(x):
    """Dip statistic of a sorted 1-D float64 sample."""
    n = x.shape[0]
    if n < 2 or x[n - 1] == x[0]:
        return 0.0

    # predecessor pointers for the GCM over the points (x[i], i)
    mn = np.zeros(n, dtype=np.int64)
    for j in range(1, n):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 0 or (x[j] - x[mnj]) * (mnj - mnmnj) < (x[mnj] - x[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj

    # successor pointers for the LCM
    mj = np.zeros(n, dtype=np.int64)
    mj[n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n - 1 or (x[k] - x[mjk]) * (mjk - mjmjk) < (x[mjk] - x[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    gcm = np.zeros(n + 1, dtype=np.int64)
    lcm = np.zeros(n + 1, dtype=np.int64)
    low = 0
    high = n - 1
    dip = 1.0  # count units; min attainable deviation is one ecdf step

    while True:
        gcm[0] = high
        ic = 0
        while gcm[ic] > low:
            gcm[ic + 1] = mn[gcm[ic]]
            ic += 1
        lcm[0] = low
        ih = 0
        while lcm[ih] < high:
            lcm[ih + 1] = mj[lcm[ih]]
            ih += 1

        ig = ic
        ihx = ih
        if ic == 1 and ih == 1:
            d = 1.0
        else:
            # largest gap between minorant and majorant, scanning low -> high
            d = 0.0
            ix = ic - 1
            iv = 1
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    # next change point is an LCM touch point
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - (x[lcmiv] - x[gcmi1]) * (gcmix - gcmi1) / (x[gcmix] - x[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ihx = iv - 1
                else:
                    # next change point is a GCM touch point
                    lcmiv1 = lcm[iv - 1]
                    dx = (x[gcmix] - x[lcmiv1]) * (lcmiv - lcmiv1) / (x[lcmiv] - x[lcmiv1]) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx > d:
                        d = dx
                        ig = ix + 1
                        ihx = iv
                if ix < 0:
                    ix = 0
                if iv > ih:
                    iv = ih
                if gcm[ix] == lcm[iv]:
                    break

        if d < dip:
            break

        # deviation of the ecdf from the GCM left of the new modal interval
        dip_l = 0.0
        for j in range(ig, ic):
            max_t = 1.0
            jb = gcm[j + 1]
            je = gcm[j]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (x[jj] - x[jb]) * c
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        # deviation of the ecdf from the LCM right of the new modal interval
        dip_u = 0.0
        for j in range(ihx, ih):
            max_t = 1.0
            jb = lcm[j]
            je = lcm[j + 1]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (x[jj] - x[jb]) * c - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        if dip < dip_l:
            dip = dip_l
        if dip < dip_u:
            dip = dip_u

        if low == gcm[ig] and high == lcm[ihx]:
            break
        low = gcm[ig]
        high = lcm[ihx]

    return dip / (2.0 * n)


@njit(cache=True)
def dip_batch_sorted(samples):
    """Dip statistic per row of a 2-D array of row-sorted samples."""
    out = np.empty(samples.shape[0])
    for i in range(samples.shape[0]):
        out[i] = dip_sorted(samples[i])
    return out


def dip_statistic(x) -> float:
    """Dip statistic of an arbitrary 1-D sample (sorted internally)."""
    arr = np.sort(np.asarray(x, dtype=np.float64))
    return float(dip_sorted(arr))
