"""Compiled inner loops for the Gibbs samplers and the mismatch evaluator.

Everything here is nopython-compiled and operates on plain float64/int64
arrays; the object-level API lives in the sibling modules.  The normal
CDF/quantile pair is reimplemented locally because scipy.special is not
callable from nopython code; both are tested against scipy.

Conventions:
- triangles are packed as (m, 3, 2) vertex arrays, CCW;
- per-site triangle ranges come as CSR offsets (csr[i]:csr[i+1]);
- interval unions are parallel (lo, hi) arrays with an explicit count;
- every truncated draw consumes exactly two uniforms (interval pick +
  position within), so uniform streams stay aligned across fallbacks.
"""

import math

import numpy as np
from numba import njit

SQRT1_2 = 0.7071067811865476
SQRT_2PI = 2.5066282746310002

# Acklam's rational approximation to the standard normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


@njit(cache=True)
def ndtr(x):
    """Standard normal CDF via erfc (accurate into the far tails)."""
    return 0.5 * math.erfc(-x * SQRT1_2)


@njit(cache=True)
def ndtri(p):
    """Standard normal quantile: Acklam's approximation + one Halley step."""
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p > 0.97575:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    # one Halley refinement; skip where exp(x^2/2) would overflow (|x| > ~37,
    # i.e. p below ~1e-300, where Acklam alone is already ample)
    if x * x < 1400.0:
        e = 0.5 * math.erfc(-x * SQRT1_2) - p
        u = e * SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


@njit(cache=True)
def norm_mass(a, b):
    """N(0,1) mass of [a, b], complementary form on the right tail."""
    if a > 0.0:
        m = ndtr(-a) - ndtr(-b)
    else:
        m = ndtr(b) - ndtr(a)
    return m if m > 0.0 else 0.0


@njit(cache=True)
def draw_in_bounds(lo, hi, n, mean, sd, u_pick, u_pos):
    """Draw from N(mean, sd^2) truncated to the union lo[i]..hi[i], i<n.

    Returns (value, ok).  ok=False when the total mass underflows
    (below 1e-300); the caller decides the fallback.  Inverse-CDF within
    the mass-selected interval, complementary forms per tail; the result
    is clamped to the closed interval and nudged one ulp interior.
    """
    total = 0.0
    masses = np.empty(n)
    for i in range(n):
        a = (lo[i] - mean) / sd
        b = (hi[i] - mean) / sd
        m = norm_mass(a, b)
        masses[i] = m
        total += m
    if not total > 1e-300:
        return 0.0, False
    t = u_pick * total
    idx = n - 1
    acc = 0.0
    for i in range(n):
        acc += masses[i]
        if t < acc:
            idx = i
            break
    a = (lo[idx] - mean) / sd
    b = (hi[idx] - mean) / sd
    if a >= 0.0:
        ta = ndtr(-a)
        tb = ndtr(-b)
        tgt = ta + u_pos * (tb - ta)
        if tgt < 5e-324:
            tgt = 5e-324
        z = -ndtri(tgt)
    elif b <= 0.0:
        ta = ndtr(a)
        tb = ndtr(b)
        tgt = ta + u_pos * (tb - ta)
        if tgt < 5e-324:
            tgt = 5e-324
        z = ndtri(tgt)
    else:
        fa = ndtr(a)
        fb = ndtr(b)
        z = ndtri(fa + u_pos * (fb - fa))
    x = mean + sd * z
    if x < lo[idx]:
        x = lo[idx]
    elif x > hi[idx]:
        x = hi[idx]
    if hi[idx] > lo[idx]:
        if x == lo[idx]:
            x = np.nextafter(lo[idx], hi[idx])
        elif x == hi[idx]:
            x = np.nextafter(hi[idx], lo[idx])
    return x, True


@njit(cache=True)
def slice_tris(tris, m0, m1, ax, level, shrink, out_lo, out_hi):
    """Per-triangle slice intervals along axis `ax` at fixed other = level.

    For ax=0 the intervals are in x at y=level; ax=1 swaps roles.  Writes
    compacted [lo, hi] pairs for the non-empty slices and returns their
    count.  `shrink` pulls both ends inward (sampling paths use 1e-12 so
    draws stay strictly interior; exact queries pass 0).
    """
    cnt = 0
    for t in range(m0, m1):
        lo = np.inf
        hi = -np.inf
        for e in range(3):
            e2 = e + 1 if e < 2 else 0
            ps = tris[t, e, ax]
            po = tris[t, e, 1 - ax]
            qs = tris[t, e2, ax]
            qo = tris[t, e2, 1 - ax]
            d1 = po - level
            d2 = qo - level
            if d1 * d2 <= 0.0:
                if po == qo:
                    # edge lies on the slicing line
                    if ps < lo:
                        lo = ps
                    if ps > hi:
                        hi = ps
                    if qs < lo:
                        lo = qs
                    if qs > hi:
                        hi = qs
                else:
                    w = (level - po) / (qo - po)
                    xc = ps + w * (qs - ps)
                    if xc < lo:
                        lo = xc
                    if xc > hi:
                        hi = xc
        if lo <= hi:
            if hi - lo > 2.0 * shrink:
                lo += shrink
                hi -= shrink
            out_lo[cnt] = lo
            out_hi[cnt] = hi
            cnt += 1
    return cnt


@njit(cache=True)
def sort_merge(lo, hi, n, tol):
    """Sort (lo, hi) pairs by lo and merge overlaps/gaps <= tol, in place."""
    for i in range(1, n):
        kl = lo[i]
        kh = hi[i]
        j = i - 1
        while j >= 0 and lo[j] > kl:
            lo[j + 1] = lo[j]
            hi[j + 1] = hi[j]
            j -= 1
        lo[j + 1] = kl
        hi[j + 1] = kh
    if n == 0:
        return 0
    w = 0
    for i in range(1, n):
        if lo[i] <= hi[w] + tol:
            if hi[i] > hi[w]:
                hi[w] = hi[i]
        else:
            w += 1
            lo[w] = lo[i]
            hi[w] = hi[i]
    return w + 1


@njit(cache=True)
def intersect_unions(al, ah, na, bl, bh, nb, ol, oh):
    """Intersect two sorted disjoint unions into (ol, oh); returns count."""
    i = 0
    j = 0
    cnt = 0
    while i < na and j < nb:
        lo = al[i] if al[i] > bl[j] else bl[j]
        hi = ah[i] if ah[i] < bh[j] else bh[j]
        if lo <= hi:
            ol[cnt] = lo
            oh[cnt] = hi
            cnt += 1
        if ah[i] < bh[j]:
            i += 1
        else:
            j += 1
    return cnt


@njit(cache=True)
def nearest_node(px, py, nodes, out):
    """First-minimum nearest-node index for each point."""
    n = px.shape[0]
    t = nodes.shape[0]
    for i in range(n):
        best = 0
        bd = np.inf
        for k in range(t):
            dx = px[i] - nodes[k, 0]
            dy = py[i] - nodes[k, 1]
            d = dx * dx + dy * dy
            if d < bd:
                bd = d
                best = k
        out[i] = best
    return 0


@njit(cache=True)
def _feasibility_violation(x, y, nodes, node_cat, site_cat):
    """Index of first site whose nearest node has the wrong color, else -1."""
    n = x.shape[0]
    t = nodes.shape[0]
    for i in range(n):
        best = 0
        bd = np.inf
        for k in range(t):
            dx = x[i] - nodes[k, 0]
            dy = y[i] - nodes[k, 1]
            d = dx * dx + dy * dy
            if d < bd:
                bd = d
                best = k
        if node_cat[best] != site_cat[i]:
            return i
    return -1


@njit(cache=True)
def _axis_union(tris, csr, x, y, cov_x, cov_y, beta, ax, u, v,
                ctol, slack, shrink, mtol, s_lo, s_hi, r_lo, r_hi, o_lo, o_hi):
    """Feasible set of the axis-`ax` innovation for pivot beta.

    The candidate update is x' = x + (u - x[beta])*cov_x[beta,:] and
    y' = y + (v - y[beta])*cov_y[beta,:]; holding the other innovation
    fixed, each site's category region slices to an interval union in the
    moving coordinate, which pulls back affinely to the innovation.  Sites
    with |coefficient| <= ctol impose no constraint but must already
    satisfy theirs within `slack`, else the move is infeasible.

    Result lands in r_lo/r_hi; returns (count, ok).
    """
    n = x.shape[0]
    r_lo[0] = -np.inf
    r_hi[0] = np.inf
    nr = 1
    for al in range(n):
        if ax == 0:
            c = cov_x[beta, al]
            anchor = x[al]
            level = y[al] + (v - y[beta]) * cov_y[beta, al]
            pivot = x[beta]
        else:
            c = cov_y[beta, al]
            anchor = y[al]
            level = x[al] + (u - x[beta]) * cov_x[beta, al]
            pivot = y[beta]
        cnt = slice_tris(tris, csr[al], csr[al + 1], ax, level, shrink, s_lo, s_hi)
        if abs(c) <= ctol:
            ok = False
            for i in range(cnt):
                if s_lo[i] - slack <= anchor <= s_hi[i] + slack:
                    ok = True
                    break
            if not ok:
                return 0, False
            continue
        if cnt == 0:
            return 0, False
        inv = 1.0 / c
        for i in range(cnt):
            t1 = pivot + (s_lo[i] - anchor) * inv
            t2 = pivot + (s_hi[i] - anchor) * inv
            if t1 <= t2:
                s_lo[i] = t1
                s_hi[i] = t2
            else:
                s_lo[i] = t2
                s_hi[i] = t1
        m = sort_merge(s_lo, s_hi, cnt, mtol)
        nr2 = intersect_unions(r_lo, r_hi, nr, s_lo, s_hi, m, o_lo, o_hi)
        if nr2 == 0:
            return 0, False
        for i in range(nr2):
            r_lo[i] = o_lo[i]
            r_hi[i] = o_hi[i]
        nr = nr2
    return nr, True


@njit(cache=True)
def pivot_innovations(tris, csr, x, y, cov_x, cov_y, beta, sweeps, uniforms, uoff,
                      ctol, slack, shrink, mtol, s_lo, s_hi, r_lo, r_hi, o_lo, o_hi):
    """Coordinate-Gibbs draw of the pivot innovation pair (u, v).

    Starts from the fixed point (x[beta], y[beta]) and alternates the two
    axes `sweeps` times; an infeasible/empty axis keeps that coordinate.
    """
    u = x[beta]
    v = y[beta]
    k = uoff
    for _ in range(sweeps):
        nr, ok = _axis_union(tris, csr, x, y, cov_x, cov_y, beta, 0, u, v,
                             ctol, slack, shrink, mtol, s_lo, s_hi, r_lo, r_hi, o_lo, o_hi)
        if ok and nr > 0:
            val, good = draw_in_bounds(r_lo, r_hi, nr, 0.0, 1.0,
                                       uniforms[k], uniforms[k + 1])
            if good:
                u = val
        k += 2
        nr, ok = _axis_union(tris, csr, x, y, cov_x, cov_y, beta, 1, u, v,
                             ctol, slack, shrink, mtol, s_lo, s_hi, r_lo, r_hi, o_lo, o_hi)
        if ok and nr > 0:
            val, good = draw_in_bounds(r_lo, r_hi, nr, 0.0, 1.0,
                                       uniforms[k], uniforms[k + 1])
            if good:
                v = val
        k += 2
    return u, v


@njit(cache=True)
def propagative_scan(tris, csr, x, y, cov_x, cov_y, order, sweeps, uniforms,
                     nodes, node_cat, site_cat, ctol, slack, shrink, mtol,
                     s_lo, s_hi, r_lo, r_hi, o_lo, o_hi):
    """One propagative sweep: every pivot in `order` gets an innovation
    draw and the whole vector pair moves along the covariance columns.

    Returns the first feasibility-violating site index (checked after
    every pivot), or -1.
    """
    n = x.shape[0]
    k = 0
    for oi in range(order.shape[0]):
        beta = order[oi]
        u, v = pivot_innovations(tris, csr, x, y, cov_x, cov_y, beta, sweeps,
                                 uniforms, k, ctol, slack, shrink, mtol,
                                 s_lo, s_hi, r_lo, r_hi, o_lo, o_hi)
        k += 4 * sweeps
        du = u - x[beta]
        dv = v - y[beta]
        if du != 0.0 or dv != 0.0:
            for al in range(n):
                x[al] += du * cov_x[beta, al]
                y[al] += dv * cov_y[beta, al]
            x[beta] = u
            y[beta] = v
        viol = _feasibility_violation(x, y, nodes, node_cat, site_cat)
        if viol >= 0:
            return viol
    return -1


@njit(cache=True)
def standard_scan(tris, csr, x, y, prec_x, prec_y, order, uniforms,
                  nodes, node_cat, site_cat, shrink, mtol, s_lo, s_hi):
    """One site-by-site Gibbs sweep with exact full conditionals.

    The conditional of x[i] given the rest has variance 1/prec[i,i] and
    mean x[i] - (prec@x)[i]/prec[i,i]; the draw is truncated to the
    region slice at the site's current other coordinate.  prec@x is
    rank-1-updated within the sweep.  Returns first violating site or -1.
    """
    n = x.shape[0]
    qx = np.dot(prec_x, x)
    qy = np.dot(prec_y, y)
    k = 0
    for oi in range(order.shape[0]):
        i = order[oi]
        m0 = csr[i]
        m1 = csr[i + 1]

        var = 1.0 / prec_x[i, i]
        mean = x[i] - qx[i] * var
        cnt = slice_tris(tris, m0, m1, 0, y[i], shrink, s_lo, s_hi)
        if cnt > 0:
            m = sort_merge(s_lo, s_hi, cnt, mtol)
            val, good = draw_in_bounds(s_lo, s_hi, m, mean, math.sqrt(var),
                                       uniforms[k], uniforms[k + 1])
            if good and val != x[i]:
                d = val - x[i]
                for j in range(n):
                    qx[j] += prec_x[i, j] * d
                x[i] = val
        k += 2

        var = 1.0 / prec_y[i, i]
        mean = y[i] - qy[i] * var
        cnt = slice_tris(tris, m0, m1, 1, x[i], shrink, s_lo, s_hi)
        if cnt > 0:
            m = sort_merge(s_lo, s_hi, cnt, mtol)
            val, good = draw_in_bounds(s_lo, s_hi, m, mean, math.sqrt(var),
                                       uniforms[k], uniforms[k + 1])
            if good and val != y[i]:
                d = val - y[i]
                for j in range(n):
                    qy[j] += prec_y[i, j] * d
                y[i] = val
        k += 2
    return _feasibility_violation(x, y, nodes, node_cat, site_cat)


@njit(cache=True)
def gibbs_pair(tris, m0, m1, mean_x, mean_y, sd_x, sd_y, x0, y0,
               sweeps, uniforms, shrink, mtol, s_lo, s_hi):
    """Alternating truncated draws of an independent (x, y) pair inside a
    triangle union; keeps a coordinate when its slice is empty."""
    xv = x0
    yv = y0
    k = 0
    for _ in range(sweeps):
        cnt = slice_tris(tris, m0, m1, 0, yv, shrink, s_lo, s_hi)
        if cnt > 0:
            m = sort_merge(s_lo, s_hi, cnt, mtol)
            val, good = draw_in_bounds(s_lo, s_hi, m, mean_x, sd_x,
                                       uniforms[k], uniforms[k + 1])
            if good:
                xv = val
        k += 2
        cnt = slice_tris(tris, m0, m1, 1, xv, shrink, s_lo, s_hi)
        if cnt > 0:
            m = sort_merge(s_lo, s_hi, cnt, mtol)
            val, good = draw_in_bounds(s_lo, s_hi, m, mean_y, sd_y,
                                       uniforms[k], uniforms[k + 1])
            if good:
                yv = val
        k += 2
    return xv, yv
