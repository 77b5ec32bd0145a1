"""Gaussian geometry in the latent plane.

Triangles, triangle unions, Gaussian mass of triangles (Owen's T wedge
decomposition with a quadrature fallback), axis-parallel slices, and
truncated-normal sampling on interval unions and triangle unions.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import ndtr as _sp_ndtr
from scipy.special import owens_t

from . import _kernels
from .intervals import MERGE_TOL, IntervalUnion

TWO_PI = 2.0 * math.pi
# wedges thinner than this carry < 1e-13 mass and are dropped
_WEDGE_CROSS_TOL = 1e-12
# vertex pairs closer than this route the triangle to quadrature
DEGENERATE_VERTEX_TOL = 1e-9
# interior shrink applied to sampling slices (keeps draws off region edges)
SLICE_SHRINK = 1e-12


class EmptyDomain(ValueError):
    """Raised when a truncation domain carries (numerically) no mass."""


class InfeasibleStart(ValueError):
    """Raised when a chain start point lies outside its feasible set."""


def std_normal_cdf(x):
    """Standard normal CDF, elementwise."""
    return _sp_ndtr(x)


def normal_interval_mass(lo, hi, mean=0.0, sd=1.0):
    """N(mean, sd^2) mass of [lo, hi]; complementary form on the right tail."""
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    if a > 0.0:  # both tails positive: difference of survival functions
        m = _sp_ndtr(-a) - _sp_ndtr(-b)
    else:
        m = _sp_ndtr(b) - _sp_ndtr(a)
    return float(max(m, 0.0))


def sample_truncated_normal(mean, sd, domain, rng):
    """Draw from N(mean, sd^2) restricted to an IntervalUnion.

    Inverse-CDF within a mass-proportionally selected interval; raises
    EmptyDomain when the union's total mass underflows (< 1e-300).
    """
    if sd <= 0.0:
        raise ValueError("sd must be positive")
    b = domain.bounds
    if b.shape[0] == 0:
        raise EmptyDomain("truncation domain is empty")
    lo = np.ascontiguousarray(b[:, 0])
    hi = np.ascontiguousarray(b[:, 1])
    val, ok = _kernels.draw_in_bounds(lo, hi, lo.shape[0], float(mean), float(sd),
                                      rng.random(), rng.random())
    if not ok:
        raise EmptyDomain("truncation domain carries no numerical mass")
    return float(val)


class Triangle:
    """A non-degenerate triangle, normalized to CCW vertex order."""

    __slots__ = ("verts",)

    def __init__(self, v0, v1, v2):
        verts = np.array([v0, v1, v2], dtype=float)
        if verts.shape != (3, 2) or not np.isfinite(verts).all():
            raise ValueError("triangle needs three finite 2-D vertices")
        area2 = _cross(verts[1] - verts[0], verts[2] - verts[0])
        if area2 == 0.0:
            raise ValueError("degenerate triangle (zero signed area)")
        if area2 < 0.0:
            verts = verts[[0, 2, 1]]
        verts.setflags(write=False)
        self.verts = verts

    @property
    def area(self):
        v = self.verts
        return 0.5 * _cross(v[1] - v[0], v[2] - v[0])

    @property
    def centroid(self):
        return self.verts.mean(axis=0)

    def contains(self, x, y, tol=0.0):
        """Closed-triangle membership with absolute slack `tol`."""
        v = self.verts
        p = np.array([x, y])
        for i in range(3):
            e = v[(i + 1) % 3] - v[i]
            if _cross(e, p - v[i]) < -tol * math.hypot(e[0], e[1]):
                return False
        return True

    def __repr__(self):
        return f"Triangle({self.verts.tolist()})"


def _cross(a, b):
    return float(a[0] * b[1] - a[1] * b[0])


class TriangleUnion:
    """A finite union of triangles with pairwise disjoint interiors.

    Disjointness is a construction contract (the tessellation builder
    guarantees it); masses and slices assume it.
    """

    __slots__ = ("triangles", "tri_array")

    def __init__(self, triangles=()):
        self.triangles = tuple(triangles)
        if self.triangles:
            arr = np.ascontiguousarray(
                np.stack([t.verts for t in self.triangles]))
        else:
            arr = np.zeros((0, 3, 2))
        arr.setflags(write=False)
        self.tri_array = arr

    def __len__(self):
        return len(self.triangles)

    def __iter__(self):
        return iter(self.triangles)

    @property
    def is_empty(self):
        return not self.triangles

    def area(self):
        return sum(t.area for t in self.triangles)

    def contains(self, x, y, tol=0.0):
        return any(t.contains(x, y, tol) for t in self.triangles)

    def mass(self):
        """Bivariate standard normal mass of the union."""
        return sum(triangle_mass(t) for t in self.triangles)


def _wedge_mass(p, q):
    """Signed N2(0, I) mass of the triangle (origin, p, q).

    Positive when (O, p, q) is CCW.  Split along the perpendicular from
    the origin to line pq: each half is an Owen's T difference."""
    cross = p[0] * q[1] - p[1] * q[0]
    if abs(cross) < _WEDGE_CROSS_TOL:
        # mass bounded by area/(2*pi) = |cross|/(4*pi) < 1e-13
        return 0.0
    d = q - p
    length = math.hypot(d[0], d[1])
    ux, uy = d[0] / length, d[1] / length
    h = abs(cross) / length          # origin-to-chord distance
    y1 = p[0] * ux + p[1] * uy       # signed chord coordinates of p, q
    y2 = q[0] * ux + q[1] * uy       # (y2 - y1 == length > 0)
    m = _half_wedge(h, y2) - _half_wedge(h, y1)
    return m if cross > 0.0 else -m


def _half_wedge(h, y):
    """Signed mass of the right triangle (0,0), (h,0), (h,y) for h > 0."""
    if y == 0.0:
        return 0.0
    a = abs(y) / h
    m = math.atan(a) / TWO_PI - owens_t(h, a)
    return math.copysign(m, y)


def triangle_mass(tri):
    """Bivariate standard normal mass of a triangle.

    Signed wedge decomposition about the origin, each wedge an Owen's T
    difference; triangles with a vertex pair closer than 1e-9 go to
    adaptive quadrature instead.  Absolute accuracy ~1e-9."""
    v = tri.verts
    dmin = min(math.hypot(*(v[i] - v[(i + 1) % 3])) for i in range(3))
    if dmin < DEGENERATE_VERTEX_TOL:
        return _triangle_mass_quad(v)
    s = 0.0
    for i in range(3):
        s += _wedge_mass(v[i], v[(i + 1) % 3])
    return float(min(max(s, 0.0), 1.0))


def _triangle_mass_quad(verts):
    """Quadrature fallback: integrate the x-slice mass over y."""
    tris = np.ascontiguousarray(verts[None, :, :])
    ys = np.sort(verts[:, 1])
    lo = np.empty(4)
    hi = np.empty(4)

    def f(yv):
        cnt = _kernels.slice_tris(tris, 0, 1, 0, yv, 0.0, lo, hi)
        acc = 0.0
        for i in range(cnt):
            acc += normal_interval_mass(lo[i], hi[i])
        return acc * math.exp(-0.5 * yv * yv) / math.sqrt(TWO_PI)

    total, _ = integrate.quad(f, ys[0], ys[2], points=[ys[1]],
                              epsabs=1e-12, limit=200)
    return float(min(max(total, 0.0), 1.0))


def _slice(tu, ax, level):
    arr = tu.tri_array
    m = arr.shape[0]
    if m == 0:
        return IntervalUnion.empty()
    lo = np.empty(m)
    hi = np.empty(m)
    cnt = _kernels.slice_tris(arr, 0, m, ax, float(level), 0.0, lo, hi)
    if cnt == 0:
        return IntervalUnion.empty()
    cnt = _kernels.sort_merge(lo, hi, cnt, MERGE_TOL)
    return IntervalUnion._from_sorted(np.column_stack([lo[:cnt], hi[:cnt]]))


def slice_u(tu, v):
    """Horizontal slice {u : (u, v) in the union} as an IntervalUnion."""
    return _slice(tu, 0, v)


def slice_v(tu, u):
    """Vertical slice {v : (u, v) in the union} as an IntervalUnion."""
    return _slice(tu, 1, u)


def sample_pair_in_union(tu, means, sds, start, sweeps, rng):
    """Gibbs draw of an independent Gaussian pair restricted to a triangle union.

    Alternates truncated draws along the two axes `sweeps` times starting
    from `start`, which must lie in the union (InfeasibleStart otherwise).
    Returns the final (x, y) as an array.
    """
    if tu.is_empty:
        raise EmptyDomain("triangle union is empty")
    x0, y0 = float(start[0]), float(start[1])
    if not tu.contains(x0, y0, tol=1e-9):
        raise InfeasibleStart(f"start point {start!r} outside the union")
    mx, my = float(means[0]), float(means[1])
    sx, sy = float(sds[0]), float(sds[1])
    if sx <= 0.0 or sy <= 0.0:
        raise ValueError("sds must be positive")
    arr = tu.tri_array
    m = arr.shape[0]
    wl = np.empty(m)
    wh = np.empty(m)
    uniforms = rng.random(4 * int(sweeps))
    xv, yv = _kernels.gibbs_pair(arr, 0, m, mx, my, sx, sy, x0, y0,
                                 int(sweeps), uniforms, SLICE_SHRINK,
                                 MERGE_TOL, wl, wh)
    return np.array([xv, yv])
