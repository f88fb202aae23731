# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fmod, sqrt, INFINITY, NAN

cnp.import_array()


def mc_wins(long long own_level, opp_levels, tie_u):
    cdef const long long[:, :] opp = np.ascontiguousarray(opp_levels, dtype=np.int64)
    cdef const double[:] u = np.ascontiguousarray(tie_u, dtype=np.float64)
    cdef Py_ssize_t trials = opp.shape[0], m = opp.shape[1], t, k
    out = np.empty(trials, dtype=np.uint8)
    cdef unsigned char[:] won = out
    cdef long long best, lv, ties, pick
    for t in range(trials):
        if m == 0:
            won[t] = 1
            continue
        best = opp[t, 0]
        ties = 0
        for k in range(m):
            lv = opp[t, k]
            if lv < best:
                best = lv
            if lv == own_level:
                ties += 1
        if own_level < best:
            won[t] = 1
        elif own_level == best:
            pick = <long long>floor(u[t] * <double>(ties + 1))
            won[t] = 1 if pick == 0 else 0
        else:
            won[t] = 0
    return out


cdef inline void _fold(double[:] pos, double[:] vel, double dt, double size):
    cdef Py_ssize_t i
    cdef double p, k, rem
    for i in range(pos.shape[0]):
        p = pos[i] + vel[i] * dt
        k = floor(p / size)
        rem = p - k * size
        if rem < 0.0:
            rem = 0.0
        elif rem > size:
            rem = size
        if fmod(k, 2.0) != 0.0:
            pos[i] = size - rem
            vel[i] = -vel[i]
        else:
            pos[i] = rem


def advance(double[:] x, double[:] y, double[:] vx, double[:] vy, double dt, double width, double height):
    _fold(x, vx, dt, width)
    _fold(y, vy, dt, height)


def link_durations(const double[:] x, const double[:] y, const double[:] vx, const double[:] vy, double r):
    cdef Py_ssize_t n = x.shape[0], i, j
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, :] o = out
    cdef double a, b, c, d, s2, disc, let
    for i in range(n):
        o[i, i] = INFINITY
        for j in range(n):
            if i == j:
                continue
            b = x[i] - x[j]
            d = y[i] - y[j]
            if b * b + d * d > r * r:
                o[i, j] = NAN
                continue
            a = vx[i] - vx[j]
            c = vy[i] - vy[j]
            s2 = a * a + c * c
            if s2 == 0.0:
                o[i, j] = INFINITY
                continue
            disc = s2 * r * r - (a * d - b * c) ** 2
            if disc < 0.0:
                disc = 0.0
            let = (-(a * b + c * d) + sqrt(disc)) / s2
            o[i, j] = let if let > 0.0 else 0.0
    return out
