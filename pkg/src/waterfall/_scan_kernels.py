"""Compiled helpers for the subset scan.

All functions work on r = ln q. For one record set the score
Y r - sum log1p(p (e^r - 1)) is concave in r, so its peak and its
level-set endpoints are found by bisection on a sign change.
"""
import math

import numpy as np
from numba import njit

BISECT_ITERS = 80


@njit(cache=True, nogil=True)
def _contrib(r, total, p):
    e = math.expm1(r)
    s = 0.0
    for i in range(p.shape[0]):
        s += math.log1p(p[i] * e)
    return total * r - s


@njit(cache=True, nogil=True)
def _slope(r, total, p):
    e = math.exp(r)
    s = 0.0
    for i in range(p.shape[0]):
        s += p[i] * e / (1.0 - p[i] + p[i] * e)
    return total - s


@njit(cache=True, nogil=True)
def peak(total, p, lo, hi):
    """Maximizer of the score over r in [lo, hi]."""
    if _slope(lo, total, p) <= 0:
        return lo
    if _slope(hi, total, p) >= 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _slope(mid, total, p) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


@njit(cache=True, nogil=True)
def value_intervals(order, starts, Y, p, lo, hi, c):
    """Per value v: the peak contribution and the interval of r where the
    contribution exceeds c. Records of value v are p[order[starts[v]:starts[v+1]]]."""
    k = Y.shape[0]
    top = np.empty(k)
    left = np.empty(k)
    right = np.empty(k)
    for v in range(k):
        pv = p[order[starts[v]:starts[v + 1]]]
        t = Y[v]
        # same bracketing and iteration count for every value
        if _slope(lo, t, pv) <= 0:
            m = lo
        elif _slope(hi, t, pv) >= 0:
            m = hi
        else:
            a, b = lo, hi
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (a + b)
                if _slope(mid, t, pv) > 0:
                    a = mid
                else:
                    b = mid
            m = 0.5 * (a + b)
        top[v] = _contrib(m, t, pv)
        if _contrib(lo, t, pv) > c:
            left[v] = lo
        else:
            a, b = lo, m
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (a + b)
                if c - _contrib(mid, t, pv) > 0:
                    a = mid
                else:
                    b = mid
            left[v] = 0.5 * (a + b)
        if _contrib(hi, t, pv) > c:
            right[v] = hi
        else:
            a, b = m, hi
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (a + b)
                if _contrib(mid, t, pv) - c > 0:
                    a = mid
                else:
                    b = mid
            right[v] = 0.5 * (a + b)
    return top, left, right
