"""Pure NumPy/Python fallback for the hot kernels.

The compiled extension (``divkit._kernels``) implements the same two
entry points with identical floating-point semantics: terms are formed
with the same expressions and accumulated in the same order (row-major,
Neumaier-compensated), so both backends agree to the last bit on the
same inputs.
"""

import numpy as np

BACKEND_NAME = "python"

SINGULAR_GUARD = 1e-12

ETA_TWO_POINT = 0
ETA_UNIFORM = 1

POLICY_REDRAW = 0
POLICY_TRUNCATE = 1
POLICY_ALLOW = 2

REDRAW_CAP = 64


class SingularPairError(ValueError):
    """A negative-order kernel hit a (nearly) coincident pair of points."""

    def __init__(self, i, j, dist):
        self.i = int(i)
        self.j = int(j)
        self.dist = float(dist)
        super().__init__(
            f"negative-order power sum is singular: points {self.i} and {self.j} "
            f"coincide (distance {self.dist:.3e} < {SINGULAR_GUARD:.0e})"
        )


def pairwise_power_sum(x, w, y, v, alpha, use_l1, skip_equal_index):
    """Sum_ij w_i v_j ||x_i - y_j||^alpha in a fixed deterministic order.

    Rows (index i) are accumulated over j ascending with Neumaier
    compensation; row totals are then combined in ascending i, again
    compensated.  ``skip_equal_index`` drops the i == j terms (used for
    the self sums of negative orders, where the diagonal is singular).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    n, dim = x.shape
    m = y.shape[0]
    alpha = float(alpha)

    # Per-row Neumaier accumulators, advanced one column at a time so that
    # every row sums its terms in ascending j exactly like the compiled loop.
    row_s = np.zeros(n)
    row_c = np.zeros(n)
    singular = []
    row_idx = np.arange(n)
    for j in range(m):
        d = np.zeros(n)
        if use_l1:
            for k in range(dim):
                d += np.abs(x[:, k] - y[j, k])
        else:
            for k in range(dim):
                d += (x[:, k] - y[j, k]) ** 2
            d = np.sqrt(d)
        if alpha < 0.0:
            bad = d < SINGULAR_GUARD
            if skip_equal_index and j < n:
                bad[j] = False
                d[j] = max(d[j], 1.0)  # excluded below; avoid 0**negative
            if bad.any():
                i_bad = int(np.argmax(bad))
                singular.append((i_bad, j, d[i_bad]))
                d[bad] = 1.0  # keep sweeping; the error wins below
        if alpha == 1.0:
            t = d
        elif alpha == 0.5:
            t = np.sqrt(d)  # sqrt is correctly rounded; pow(x, .5) may not be
        else:
            t = d ** alpha
        term = (w * v[j]) * t
        if skip_equal_index and j < n:
            term[j] = 0.0
        s_new = row_s + term
        big = np.abs(row_s) >= np.abs(term)
        row_c += np.where(big, (row_s - s_new) + term, (term - s_new) + row_s)
        row_s = s_new
    if singular:
        i, j, dist = min(singular, key=lambda t: (t[0], t[1]))
        raise SingularPairError(i, j, dist)

    total_s = 0.0
    total_c = 0.0
    row_tot = row_s + row_c
    for i in range(n):
        t = row_tot[i]
        s_new = total_s + t
        if abs(total_s) >= abs(t):
            total_c += (total_s - s_new) + t
        else:
            total_c += (t - s_new) + total_s
        total_s = s_new
    return float(total_s + total_c)


def wealth_trade_loop(wealths, idx, us, lam, eta_scale, eta_kind, policy, want):
    """Apply up to ``want`` binary trades, consuming pre-drawn randoms.

    ``idx`` holds agent indices consumed in pairs; a pair with equal
    indices is discarded.  ``us`` holds uniforms consumed in pairs, one
    per risk draw; under the redraw policy an interaction retries (same
    agents, fresh draws) until both post-trade wealths are nonnegative,
    up to REDRAW_CAP attempts, after which it truncates at zero.  The
    loop stops early when either stream cannot serve the next need.

    Returns (interactions_done, idx_consumed, us_consumed, truncations).
    """
    wl = wealths.tolist()
    il = idx.tolist()
    ul = us.tolist()
    lam = float(lam)
    scale = float(eta_scale)
    n_idx = len(il)
    n_u = len(ul)
    ti = 0
    tu = 0
    done = 0
    trunc = 0
    attempts = REDRAW_CAP if policy == POLICY_REDRAW else 1
    while done < want:
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
        accepted = False
        for _ in range(attempts):
            u1 = ul[tu]
            u2 = ul[tu + 1]
            tu += 2
            if eta_kind == ETA_TWO_POINT:
                e1 = scale if u1 < 0.5 else -scale
                e2 = scale if u2 < 0.5 else -scale
            else:
                e1 = (2.0 * u1 - 1.0) * scale
                e2 = (2.0 * u2 - 1.0) * scale
            vs = (1.0 - lam) * v + lam * w + e1 * v
            ws = (1.0 - lam) * w + lam * v + e2 * w
            if vs >= 0.0 and ws >= 0.0:
                accepted = True
                break
            if policy == POLICY_ALLOW:
                accepted = True
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
