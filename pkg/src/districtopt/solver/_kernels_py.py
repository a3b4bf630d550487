"""Pure-Python/numpy simplex kernels. Same signatures as the compiled ``_kernels``."""
import numpy as np

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3


def eta_ftran(z, eta_row, eta_piv, eta_ptr, eta_idx, eta_val, k):
    """Apply the first ``k`` eta transforms to ``z`` in place (forward order)."""
    for e in range(k):
        r = eta_row[e]
        zr = z[r] / eta_piv[e]
        if zr != 0.0:
            a, b = eta_ptr[e], eta_ptr[e + 1]
            z[eta_idx[a:b]] -= eta_val[a:b] * zr
        z[r] = zr


def eta_btran(y, eta_row, eta_piv, eta_ptr, eta_idx, eta_val, k):
    """Apply the transposed eta transforms to ``y`` in place (reverse order)."""
    for e in range(k - 1, -1, -1):
        r = eta_row[e]
        a, b = eta_ptr[e], eta_ptr[e + 1]
        y[r] = (y[r] - np.dot(eta_val[a:b], y[eta_idx[a:b]])) / eta_piv[e]


def price(d, status, lb, ub, tol, bland):
    """Pick an entering column from reduced costs ``d``.

    Returns ``(j, d_j)``; ``j == -1`` when no column improves. Dantzig rule,
    or lowest index among improving columns when ``bland`` is set.
    """
    cand = (((status == AT_LB) & (d < -tol)) | ((status == AT_UB) & (d > tol))
            | ((status == FREE) & (np.abs(d) > tol)))
    cand &= lb < ub
    idx = np.flatnonzero(cand)
    if idx.size == 0:
        return -1, 0.0
    if bland:
        j = int(idx[0])
    else:
        j = int(idx[np.argmax(np.abs(d[idx]))])
    return j, float(d[j])


def ratio_test(alpha, direction, xb, lbb, ubb, head, tol, pivtol, bland):
    """Bounded ratio test with Harris relaxation.

    Basic ``i`` moves at rate ``g_i = -direction * alpha_i``. Infeasible
    basics stop at the bound they are violating (first breakpoint).
    Returns ``(r, theta, to_upper)`` with ``r == -1`` when no row blocks.
    """
    g = -direction * alpha
    big = np.abs(g) > pivtol
    dec = big & (g < 0)
    inc = big & (g > 0)
    inf = np.inf
    # exact target distance and Harris-relaxed distance per row
    above = xb > ubb + tol
    below = xb < lbb - tol
    num = np.full(g.shape, inf)
    relax = np.full(g.shape, inf)
    to_up = np.zeros(g.shape, dtype=bool)
    # decreasing rows
    m1 = dec & above
    num[m1] = xb[m1] - ubb[m1]
    relax[m1] = num[m1]
    to_up[m1] = True
    m2 = dec & ~above & ~below & np.isfinite(lbb)
    num[m2] = xb[m2] - lbb[m2]
    relax[m2] = num[m2] + tol
    # increasing rows
    m3 = inc & below
    num[m3] = lbb[m3] - xb[m3]
    relax[m3] = num[m3]
    m4 = inc & ~above & ~below & np.isfinite(ubb)
    num[m4] = ubb[m4] - xb[m4]
    relax[m4] = num[m4] + tol
    to_up[m4] = True
    ag = np.abs(g)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.maximum(num, 0.0) / ag
        rratio = np.maximum(relax, 0.0) / ag
    blocking = np.flatnonzero(np.isfinite(ratio))
    if blocking.size == 0:
        return -1, inf, False
    if bland:
        rb = ratio[blocking]
        tmin = rb.min()
        tied = blocking[rb <= tmin + 1e-12]
        r = int(tied[np.argmin(head[tied])])
        return r, float(ratio[r]), bool(to_up[r])
    tmax = rratio[blocking].min()
    ok = blocking[ratio[blocking] <= tmax]
    r = int(ok[np.argmax(ag[ok])])
    return r, float(ratio[r]), bool(to_up[r])
