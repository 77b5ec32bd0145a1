"""Disjoint unions of closed intervals on the real line.

The Gibbs samplers spend their time intersecting per-site feasibility
slices, so the representation is a plain (n, 2) float array of sorted
disjoint [lo, hi] bounds.  Endpoints may be infinite; zero-length
(point) intervals are allowed.
"""

import numpy as np

MERGE_TOL = 1e-12


class IntervalUnion:
    """Sorted union of disjoint closed intervals.

    Parameters
    ----------
    intervals : iterable of (lo, hi) pairs
        Need not be sorted or disjoint; overlapping or near-touching
        (within `tol`) intervals are merged on construction.
    tol : float
        Gap at or below which adjacent intervals are merged.
    """

    __slots__ = ("bounds",)

    def __init__(self, intervals=(), tol=MERGE_TOL):
        arr = np.asarray(list(intervals), dtype=float).reshape(-1, 2)
        if arr.size:
            if np.isnan(arr).any():
                raise ValueError("interval bounds must not be NaN")
            if (arr[:, 0] > arr[:, 1]).any():
                raise ValueError("interval lower bound exceeds upper bound")
            arr = arr[np.argsort(arr[:, 0], kind="stable")]
            merged = [arr[0].copy()]
            for lo, hi in arr[1:]:
                if lo <= merged[-1][1] + tol:
                    merged[-1][1] = max(merged[-1][1], hi)
                else:
                    merged.append(np.array([lo, hi]))
            arr = np.array(merged)
        else:
            arr = arr.reshape(0, 2)
        arr.setflags(write=False)
        self.bounds = arr

    @classmethod
    def _from_sorted(cls, bounds):
        # internal: bounds already sorted, disjoint, validated
        out = object.__new__(cls)
        arr = np.asarray(bounds, dtype=float).reshape(-1, 2).copy()
        arr.setflags(write=False)
        out.bounds = arr
        return out

    @classmethod
    def empty(cls):
        return cls(())

    @classmethod
    def full_line(cls):
        return cls(((-np.inf, np.inf),))

    @property
    def is_empty(self):
        return self.bounds.shape[0] == 0

    def __len__(self):
        return self.bounds.shape[0]

    def __iter__(self):
        for lo, hi in self.bounds:
            yield (lo, hi)

    def __eq__(self, other):
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        return self.bounds.shape == other.bounds.shape and bool(
            np.array_equal(self.bounds, other.bounds)
        )

    def __repr__(self):
        parts = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self.bounds)
        return f"IntervalUnion({parts})"

    def contains(self, x, tol=0.0):
        """True if x lies in some interval, inflated by `tol` on each side."""
        b = self.bounds
        if not b.size:
            return False
        return bool(((b[:, 0] - tol <= x) & (x <= b[:, 1] + tol)).any())

    def total_length(self):
        b = self.bounds
        return float(np.sum(b[:, 1] - b[:, 0])) if b.size else 0.0

    def intersect(self, other):
        """Intersection with another union (two-pointer sweep)."""
        a, b = self.bounds, other.bounds
        out = []
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i, 0], b[j, 0])
            hi = min(a[i, 1], b[j, 1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i, 1] < b[j, 1]:
                i += 1
            else:
                j += 1
        return IntervalUnion._from_sorted(np.array(out).reshape(-1, 2))

    def affine(self, scale, offset):
        """Image under x -> scale*x + offset (scale != 0)."""
        if scale == 0.0:
            raise ValueError("affine scale must be nonzero")
        b = self.bounds * scale + offset
        if scale < 0:
            b = b[::-1, ::-1]
        return IntervalUnion._from_sorted(b)

    def gaussian_mass(self, mean=0.0, sd=1.0):
        """N(mean, sd^2) probability mass of the union."""
        from . import gaussgeom

        total = 0.0
        for lo, hi in self.bounds:
            total += gaussgeom.normal_interval_mass(lo, hi, mean, sd)
        return total
