# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simplex kernels; behaviour matches ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY, isfinite

cnp.import_array()

cdef enum:
    BASIC = 0
    AT_LB = 1
    AT_UB = 2
    FREE = 3


def eta_ftran(double[::1] z, const long[::1] eta_row, const double[::1] eta_piv,
              const long[::1] eta_ptr, const long[::1] eta_idx, const double[::1] eta_val,
              long k):
    cdef long e, p, r
    cdef double zr
    for e in range(k):
        r = eta_row[e]
        zr = z[r] / eta_piv[e]
        if zr != 0.0:
            for p in range(eta_ptr[e], eta_ptr[e + 1]):
                z[eta_idx[p]] -= eta_val[p] * zr
        z[r] = zr


def eta_btran(double[::1] y, const long[::1] eta_row, const double[::1] eta_piv,
              const long[::1] eta_ptr, const long[::1] eta_idx, const double[::1] eta_val,
              long k):
    cdef long e, p, r
    cdef double acc
    for e in range(k - 1, -1, -1):
        r = eta_row[e]
        acc = 0.0
        for p in range(eta_ptr[e], eta_ptr[e + 1]):
            acc += eta_val[p] * y[eta_idx[p]]
        y[r] = (y[r] - acc) / eta_piv[e]


def price(const double[::1] d, const signed char[::1] status, const double[::1] lb,
          const double[::1] ub, double tol, bint bland):
    cdef Py_ssize_t j, n = d.shape[0], best = -1
    cdef double dj, score, best_score = -1.0
    cdef signed char st
    for j in range(n):
        st = status[j]
        if st == BASIC or not lb[j] < ub[j]:
            continue
        dj = d[j]
        if (st == AT_LB and dj < -tol) or (st == AT_UB and dj > tol) or (st == FREE and fabs(dj) > tol):
            if bland:
                return j, dj
            score = fabs(dj)
            if score > best_score:
                best_score = score
                best = j
    if best < 0:
        return -1, 0.0
    return best, d[best]


def ratio_test(const double[::1] alpha, double direction, const double[::1] xb,
               const double[::1] lbb, const double[::1] ubb, const long[::1] head,
               double tol, double pivtol, bint bland):
    cdef Py_ssize_t i, m = alpha.shape[0], r = -1
    cdef double g, ag, num, relax, ratio, rr, tmax = INFINITY, tmin = INFINITY, best_ag = -1.0
    cdef bint above, below, up
    cdef double[::1] ratios = np.empty(m)
    cdef signed char[::1] ups = np.zeros(m, dtype=np.int8)
    cdef long best_head
    # pass 1: exact ratios and the Harris bound
    for i in range(m):
        ratios[i] = INFINITY
        g = -direction * alpha[i]
        ag = fabs(g)
        if not ag > pivtol:
            continue
        above = xb[i] > ubb[i] + tol
        below = xb[i] < lbb[i] - tol
        num = INFINITY
        relax = INFINITY
        up = False
        if g < 0:
            if above:
                num = xb[i] - ubb[i]
                relax = num
                up = True
            elif not below and isfinite(lbb[i]):
                num = xb[i] - lbb[i]
                relax = num + tol
        else:
            if below:
                num = lbb[i] - xb[i]
                relax = num
            elif not above and isfinite(ubb[i]):
                num = ubb[i] - xb[i]
                relax = num + tol
                up = True
        if num == INFINITY:
            continue
        ratio = (num if num > 0.0 else 0.0) / ag
        rr = (relax if relax > 0.0 else 0.0) / ag
        ratios[i] = ratio
        ups[i] = up
        if rr < tmax:
            tmax = rr
        if ratio < tmin:
            tmin = ratio
    if tmin == INFINITY:
        return -1, INFINITY, False
    if bland:
        for i in range(m):
            if ratios[i] <= tmin + 1e-12:
                if r < 0 or head[i] < best_head:
                    r = i
                    best_head = head[i]
        return r, ratios[r], bool(ups[r])
    # pass 2: largest pivot among rows within the Harris bound
    for i in range(m):
        if ratios[i] <= tmax:
            ag = fabs(alpha[i])
            if ag > best_ag:
                best_ag = ag
                r = i
    return r, ratios[r], bool(ups[r])
