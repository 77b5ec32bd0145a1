"""Colored Voronoi truncation maps on the latent plane.

A truncation map is a finite set of nodes, each carrying a category
("color"); a latent pair maps to the color of its nearest node, ties
resolved toward the smallest node index.  Category regions are the
Voronoi cells merged per color, clipped to the practical latent box and
fan-triangulated for downstream mass/slice work.
"""

import json

import numpy as np
from scipy.spatial import Voronoi

from . import _kernels
from .gaussgeom import Triangle, TriangleUnion

# practical latent box half-width; N(0,1) mass beyond is < 1.4e-15
BOX_HALFWIDTH = 8.0
# nodes closer than this make the tessellation numerically degenerate
NODE_SEPARATION_TOL = 1e-10
_GHOST_RADIUS = 1e4
_GHOST_COUNT = 16
# fan triangles with |area| below this are dropped as clipping debris
_AREA_TOL = 1e-14


class DegenerateTessellation(ValueError):
    """Raised when nodes (nearly) coincide and cells collapse."""


class LengthMismatch(ValueError):
    """Raised when parallel per-node arrays disagree in length."""


class TruncationMap:
    """Immutable colored node set defining a categorical truncation map.

    Parameters
    ----------
    nodes : (T, 2) array of latent-plane node positions.
    colors : (T,) array of category values, one per node.
    categories : ordered collection of admissible category values; colors
        must be drawn from it (not every category needs a node).
    """

    __slots__ = ("nodes", "colors", "categories", "_color_idx")

    def __init__(self, nodes, colors, categories):
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        colors = np.array(colors, dtype=np.int64).reshape(-1)
        categories = tuple(int(c) for c in categories)
        if nodes.shape[0] == 0:
            raise ValueError("a truncation map needs at least one node")
        if nodes.shape[0] != colors.shape[0]:
            raise LengthMismatch(
                f"{nodes.shape[0]} nodes but {colors.shape[0]} colors")
        if not np.isfinite(nodes).all():
            raise ValueError("node coordinates must be finite")
        if len(set(categories)) != len(categories):
            raise ValueError("categories must be distinct")
        cat_pos = {c: i for i, c in enumerate(categories)}
        try:
            color_idx = np.array([cat_pos[int(c)] for c in colors],
                                 dtype=np.int64)
        except KeyError as err:
            raise ValueError(f"node color {err} not in categories") from None
        nodes.setflags(write=False)
        colors.setflags(write=False)
        color_idx.setflags(write=False)
        self.nodes = nodes
        self.colors = colors
        self.categories = categories
        self._color_idx = color_idx

    @property
    def node_count(self):
        return self.nodes.shape[0]

    @property
    def color_index(self):
        """Per-node index of its color within `categories`."""
        return self._color_idx

    def category_index(self, category):
        return self.categories.index(int(category))

    def replace(self, nodes=None, colors=None):
        return TruncationMap(self.nodes if nodes is None else nodes,
                             self.colors if colors is None else colors,
                             self.categories)

    def __eq__(self, other):
        if not isinstance(other, TruncationMap):
            return NotImplemented
        return (self.categories == other.categories
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.colors, other.colors))

    def __repr__(self):
        return (f"TruncationMap({self.node_count} nodes, "
                f"categories={self.categories})")


def map_point(tmap, x, y):
    """Category of the latent pair (x, y): color of the nearest node,
    ties toward the smallest node index."""
    d = (tmap.nodes[:, 0] - x) ** 2 + (tmap.nodes[:, 1] - y) ** 2
    return int(tmap.colors[int(np.argmin(d))])


def map_field(tmap, xs, ys):
    """Vectorized map_point over parallel coordinate arrays."""
    xs = np.ascontiguousarray(xs, dtype=float).reshape(-1)
    ys = np.ascontiguousarray(ys, dtype=float).reshape(-1)
    if xs.shape[0] != ys.shape[0]:
        raise LengthMismatch(f"{xs.shape[0]} x values but {ys.shape[0]} y values")
    idx = np.empty(xs.shape[0], dtype=np.int64)
    _kernels.nearest_node(xs, ys, tmap.nodes, idx)
    return tmap.colors[idx]


class CategoryRegions:
    """Per-category triangle unions covering the practical latent box."""

    __slots__ = ("tmap", "regions", "box_halfwidth")

    def __init__(self, tmap, regions, box_halfwidth):
        self.tmap = tmap
        self.regions = dict(regions)
        self.box_halfwidth = box_halfwidth

    def region(self, category):
        return self.regions[int(category)]

    def __iter__(self):
        return iter(self.regions.items())


def _clip_polygon(poly, half):
    """Sutherland-Hodgman clip of a convex polygon to the square [-half, half]^2."""
    for ax, sign in ((0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)):
        if not poly:
            return []
        out = []
        prev = poly[-1]
        prev_in = sign * prev[ax] <= half
        for cur in poly:
            cur_in = sign * cur[ax] <= half
            if cur_in != prev_in:
                t = (half * sign - prev[ax]) / (cur[ax] - prev[ax])
                out.append(prev + t * (cur - prev))
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
        poly = out
    return poly


def _dedupe(poly, tol=1e-12):
    out = []
    for p in poly:
        if not out or np.hypot(*(p - out[-1])) > tol:
            out.append(p)
    if len(out) > 1 and np.hypot(*(out[0] - out[-1])) <= tol:
        out.pop()
    return out


def _fan(poly):
    """Fan-triangulate a convex polygon about its centroid."""
    c = np.mean(poly, axis=0)
    tris = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if abs((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])) < _AREA_TOL:
            continue
        tris.append(Triangle(c, a, b))
    return tris


def triangulate(tmap, box_halfwidth=BOX_HALFWIDTH):
    """Build per-category triangle unions from the map's Voronoi cells.

    Cells are computed with a distant ghost-node ring so every real cell
    is bounded, clipped to the practical box, and fan-triangulated about
    the cell centroid.  Raises DegenerateTessellation when two nodes sit
    closer than 1e-10.
    """
    nodes = tmap.nodes
    t = nodes.shape[0]
    if t > 1:
        d2 = ((nodes[:, None, :] - nodes[None, :, :]) ** 2).sum(-1)
        d2[np.diag_indices(t)] = np.inf
        if d2.min() < NODE_SEPARATION_TOL ** 2:
            raise DegenerateTessellation(
                "two nodes closer than the separation tolerance")

    box = [np.array(p, dtype=float) for p in
           ((-box_halfwidth, -box_halfwidth), (box_halfwidth, -box_halfwidth),
            (box_halfwidth, box_halfwidth), (-box_halfwidth, box_halfwidth))]
    per_cat = {c: [] for c in tmap.categories}

    if t == 1:
        per_cat[int(tmap.colors[0])] = _fan(box)
    else:
        ang = np.linspace(0.0, 2.0 * np.pi, _GHOST_COUNT, endpoint=False)
        ghosts = _GHOST_RADIUS * np.column_stack([np.cos(ang), np.sin(ang)])
        vor = Voronoi(np.vstack([nodes, ghosts]))
        for i in range(t):
            region = vor.regions[vor.point_region[i]]
            if -1 in region or not region:
                raise DegenerateTessellation(
                    "unbounded cell survived the ghost ring")
            poly = [vor.vertices[j].copy() for j in region]
            # ensure CCW about the node before clipping
            arr = np.array(poly)
            angles = np.arctan2(arr[:, 1] - nodes[i, 1], arr[:, 0] - nodes[i, 0])
            poly = [poly[j] for j in np.argsort(angles)]
            poly = _dedupe(_clip_polygon(poly, box_halfwidth))
            if len(poly) >= 3:
                per_cat[int(tmap.colors[i])].extend(_fan(poly))

    return CategoryRegions(
        tmap, {c: TriangleUnion(tris) for c, tris in per_cat.items()},
        box_halfwidth)


def category_proportions(tmap, regions=None):
    """Bivariate-normal mass of each category's region (sums to ~1)."""
    if regions is None:
        regions = triangulate(tmap)
    return {c: tu.mass() for c, tu in regions}


def save_map(tmap, path):
    """Write a truncation map as JSON (lossless float round-trip)."""
    doc = {
        "categories": [int(c) for c in tmap.categories],
        "nodes": [[float(x), float(y)] for x, y in tmap.nodes],
        "colors": [int(c) for c in tmap.colors],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_map(path):
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("categories", "nodes", "colors"):
        if key not in doc:
            raise ValueError(f"map file missing '{key}'")
    return TruncationMap(doc["nodes"], doc["colors"], doc["categories"])
