# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: weighted pairwise power sums and the trade loop.

Mirrors divkit._kernels_py term for term: identical expressions,
identical (row-major, Neumaier-compensated) accumulation order, so the
two backends return bit-identical results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

BACKEND_NAME = "compiled"

SINGULAR_GUARD = 1e-12

ETA_TWO_POINT = 0
ETA_UNIFORM = 1

POLICY_REDRAW = 0
POLICY_TRUNCATE = 1
POLICY_ALLOW = 2

REDRAW_CAP = 64

cdef double _GUARD = 1e-12


class SingularPairError(ValueError):
    """A negative-order kernel hit a (nearly) coincident pair of points."""

    def __init__(self, i, j, dist):
        self.i = int(i)
        self.j = int(j)
        self.dist = float(dist)
        super().__init__(
            f"negative-order power sum is singular: points {self.i} and {self.j} "
            f"coincide (distance {self.dist:.3e} < 1e-12)"
        )


def pairwise_power_sum(x, w, y, v, alpha, use_l1, skip_equal_index):
    """Sum_ij w_i v_j ||x_i - y_j||^alpha in a fixed deterministic order."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t m = ya.shape[0]
    cdef Py_ssize_t dim = xa.shape[1]
    cdef double al = alpha
    cdef bint l1 = 1 if use_l1 else 0
    cdef bint skip = 1 if skip_equal_index else 0
    cdef bint negative = al < 0.0
    cdef bint linear = al == 1.0
    cdef bint half = al == 0.5

    cdef double total_s = 0.0, total_c = 0.0
    cdef double row_s, row_c, row_tot
    cdef double d, diff, t, term, s_new, wi
    cdef Py_ssize_t i, j, k

    for i in range(n):
        row_s = 0.0
        row_c = 0.0
        wi = wa[i]
        for j in range(m):
            if skip and i == j:
                continue
            d = 0.0
            if l1:
                for k in range(dim):
                    d += fabs(xa[i, k] - ya[j, k])
            else:
                for k in range(dim):
                    diff = xa[i, k] - ya[j, k]
                    d += diff * diff
                d = sqrt(d)
            if negative and d < _GUARD:
                raise SingularPairError(i, j, d)
            if linear:
                t = d
            elif half:
                t = sqrt(d)  # sqrt is correctly rounded; pow(x, .5) may not be
            else:
                t = pow(d, al)
            term = (wi * va[j]) * t
            s_new = row_s + term
            if fabs(row_s) >= fabs(term):
                row_c += (row_s - s_new) + term
            else:
                row_c += (term - s_new) + row_s
            row_s = s_new
        row_tot = row_s + row_c
        s_new = total_s + row_tot
        if fabs(total_s) >= fabs(row_tot):
            total_c += (total_s - s_new) + row_tot
        else:
            total_c += (row_tot - s_new) + total_s
        total_s = s_new
    return total_s + total_c


def wealth_trade_loop(wealths, idx, us, lam, eta_scale, eta_kind, policy, want):
    """Apply up to ``want`` binary trades, consuming pre-drawn randoms.

    Returns (interactions_done, idx_consumed, us_consumed, truncations);
    see the fallback backend for the stream contract.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wl = np.ascontiguousarray(wealths, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] il = np.ascontiguousarray(idx, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ul = np.ascontiguousarray(us, dtype=np.float64)
    cdef double lamd = lam
    cdef double scale = eta_scale
    cdef int kind = eta_kind
    cdef int pol = policy
    cdef long long wantn = want
    cdef Py_ssize_t n_idx = il.shape[0]
    cdef Py_ssize_t n_u = ul.shape[0]
    cdef Py_ssize_t ti = 0, tu = 0
    cdef long long done = 0, trunc = 0
    cdef int attempts = REDRAW_CAP if pol == 0 else 1
    cdef Py_ssize_t a, b
    cdef double v, w, vs, ws, u1, u2, e1, e2
    cdef bint accepted
    cdef int r

    while done < wantn:
        if ti + 2 > n_idx or tu + 2 * attempts > n_u:
            break
        a = il[ti]
        b = il[ti + 1]
        ti += 2
        if a == b:
            continue
        v = wl[a]
        w = wl[b]
        vs = 0.0
        ws = 0.0
        accepted = 0
        for r in range(attempts):
            u1 = ul[tu]
            u2 = ul[tu + 1]
            tu += 2
            if kind == 0:
                e1 = scale if u1 < 0.5 else -scale
                e2 = scale if u2 < 0.5 else -scale
            else:
                e1 = (2.0 * u1 - 1.0) * scale
                e2 = (2.0 * u2 - 1.0) * scale
            vs = (1.0 - lamd) * v + lamd * w + e1 * v
            ws = (1.0 - lamd) * w + lamd * v + e2 * w
            if vs >= 0.0 and ws >= 0.0:
                accepted = 1
                break
            if pol == 2:
                accepted = 1
                break
        if not accepted:
            if vs < 0.0:
                vs = 0.0
            if ws < 0.0:
                ws = 0.0
            trunc += 1
        wl[a] = vs
        wl[b] = ws
        done += 1
    wealths[:] = wl
    return done, ti, tu, trunc
