"""Chordal Loewner evolution, normalized so hcap grows at rate a.

The flow dg/dt = a/(g - U_t) is discretized by piecewise-constant driving:
one exact step per grid interval,

    w  ->  U_k + sqrt((w - U_k)^2 + 2 a d_k),

with the square-root branch of positive imaginary part.  Composition of
exact steps is exact for the discretized driving, so the only error is the
driving discretization itself.  Each interval uses the midpoint-interpolated
driving value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .params import Params


class SwallowedPointError(ValueError):
    """Evaluation hit the hull: the point is not in the domain of the map."""


@dataclass
class DrivingPath:
    """Driving values on an increasing grid starting at 0, with capacity rate a."""

    times: np.ndarray
    U: np.ndarray
    a: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        if self.times.shape != self.U.shape or self.times.ndim != 1:
            raise ValueError("times and U must be 1-d arrays of equal length")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase from 0")
        if not np.all(np.isfinite(self.U)):
            raise ValueError("driving values must be finite")

    @property
    def duration(self) -> float:
        return float(self.times[-1])


@dataclass
class MapAtlas:
    """Composition of exact constant-driving steps; immutable once built."""

    durations: np.ndarray
    drivings: np.ndarray
    a: float

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float)
        self.drivings = np.asarray(self.drivings, dtype=float)
        if self.durations.shape != self.drivings.shape:
            raise ValueError("durations and drivings must have equal length")
        if np.any(self.durations < 0):
            raise ValueError("step durations must be nonnegative")

    @property
    def total_capacity(self) -> float:
        return self.a * float(np.sum(self.durations))

    @property
    def n_steps(self) -> int:
        return len(self.durations)

    def compose(self, later: "MapAtlas") -> "MapAtlas":
        """Atlas of `later` applied after self (hull of self grown first)."""
        if later.a != self.a:
            raise ValueError("capacity rates differ")
        return MapAtlas(np.concatenate([self.durations, later.durations]),
                        np.concatenate([self.drivings, later.drivings]), self.a)


def identity_atlas(p: Params) -> MapAtlas:
    return MapAtlas(np.empty(0), np.empty(0), p.a)


def atlas_from_driving(d: DrivingPath) -> MapAtlas:
    """One exact step per grid interval with midpoint-interpolated driving."""
    dt = np.diff(d.times)
    mid = 0.5 * (d.U[:-1] + d.U[1:])
    return MapAtlas(dt, mid, d.a)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _as_points(z):
    pts = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(pts.imag <= 0):
        raise ValueError("interior evaluation needs Im z > 0")
    return pts


def evaluate_g(m: MapAtlas, z):
    """The hull-mapping-out function at interior points (scalar in, scalar out)."""
    pts = _as_points(z)
    vals, _, ok = _kernels.ev_interior_single(m.drivings, m.durations, m.a, pts, False)
    if not np.all(ok):
        bad = pts[~ok]
        raise SwallowedPointError(f"point(s) {bad} lie in the hull")
    return vals[0] if np.isscalar(z) or np.asarray(z).ndim == 0 else vals


def evaluate_g_prime(m: MapAtlas, z):
    """Complex derivative of evaluate_g (product of per-step factors (w-U)/s)."""
    pts = _as_points(z)
    _, ders, ok = _kernels.ev_interior_single(m.drivings, m.durations, m.a, pts, True)
    if not np.all(ok):
        raise SwallowedPointError(f"point(s) {pts[~ok]} lie in the hull")
    return ders[0] if np.isscalar(z) or np.asarray(z).ndim == 0 else ders


def evaluate_g_with_prime(m: MapAtlas, z):
    pts = _as_points(z)
    vals, ders, ok = _kernels.ev_interior_single(m.drivings, m.durations, m.a, pts, True)
    if not np.all(ok):
        raise SwallowedPointError(f"point(s) {pts[~ok]} lie in the hull")
    return vals, ders


def evaluate_boundary(m: MapAtlas, x, side: int):
    """Continuation of g to real points on one side of the hull footprint.

    side=+1 evaluates the branch that is positive to the right of the
    footprint, side=-1 the mirrored branch.  Raises if the point's side flips
    during the composition (the point was absorbed).
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    sides = np.full(xs.shape, float(side))
    vals, ders, ok = _kernels.ev_boundary_single(m.drivings, m.durations, m.a, xs, sides)
    if not np.all(ok):
        raise SwallowedPointError(f"real point(s) {xs[~ok]} absorbed by the hull")
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(vals[0]), float(ders[0])
    return vals, ders


def capacity_from_asymptotics(m: MapAtlas, radius: float = 1e3) -> float:
    """hcap extracted from (z - x_c)(g(z) - z) high above the hull.

    Recentering at the capacity-weighted mean driving value x_c removes the
    next-order term of the expansion, so the estimate is accurate to
    O(hcap * spread^2 / radius^2).
    """
    if m.n_steps == 0:
        return 0.0
    w = m.durations / np.sum(m.durations)
    xc = float(np.sum(w * m.drivings))
    z = complex(xc, radius)
    g = evaluate_g(m, z)
    return float(((z - xc) * (g - z)).real)


# ---------------------------------------------------------------------------
# swallowing
# ---------------------------------------------------------------------------

def swallow_time(d: DrivingPath, z, threshold: float = 1e-9):
    """First grid time at which z is absorbed; +inf if it survives the path.

    Interior points are absorbed when their image's distance to the driving
    value falls below `threshold` (or the imaginary part collapses); real
    points when their image crosses the driving value.
    """
    m = atlas_from_driving(d)
    z = complex(z)
    if z.imag < 0:
        raise ValueError("points must have Im z >= 0")
    if z.imag == 0.0:
        x = z.real
        side = 1.0 if x >= d.U[0] else -1.0
        xs = np.array([x])
        _, _, ok = _kernels.ev_boundary_single(m.drivings, m.durations, m.a, xs,
                                               np.array([side]))
        if ok[0]:
            return math.inf
        # rerun stepwise to locate the flip
        w = x
        for k in range(m.n_steps):
            u = m.drivings[k]
            dd = w - u
            if dd * side <= 0.0:
                return float(d.times[k])
            w = u + side * math.sqrt(dd * dd + 2.0 * m.a * m.durations[k])
        return float(d.times[-1])
    w = z
    for k in range(m.n_steps):
        u = m.drivings[k]
        if abs(w - u) <= threshold:
            return float(d.times[k])
        q = (w - u) ** 2 + 2.0 * m.a * m.durations[k]
        s = np.sqrt(q)
        if s.imag < 0 or (s.imag == 0 and (w - u).real < 0):
            s = -s
        w = u + s
        if w.imag < _kernels.SWALLOW_IM and abs(w - u) <= max(threshold, 10 * _kernels.SWALLOW_IM):
            return float(d.times[k + 1])
        if w.imag < _kernels.SWALLOW_IM:
            return float(d.times[k + 1])
    return math.inf


def hull_radius_estimate(d: DrivingPath, n_rays: int = 64, tol: float = 1e-3) -> float:
    """Upper bound on sup{|z| : z swallowed by the full path}.

    Bisects along rays from the origin using swallow_time with a
    discretization-scale threshold (points within about one step's diffusion
    scale of the hull count as absorbed, which keeps the estimate an upper
    bound for the curve itself).
    """
    m = atlas_from_driving(d)
    if m.n_steps == 0:
        return 0.0
    eta = 2.0 * math.sqrt(2.0 * m.a * float(np.max(m.durations)))
    u0 = d.U[0]
    reach = float(np.max(np.abs(d.U - u0)))
    hi0 = max(1e-6, 2.0 * (reach + math.sqrt(d.duration) + math.sqrt(2.0 * m.a * d.duration)))

    def absorbed(z: complex) -> bool:
        w = z
        for k in range(m.n_steps):
            u = m.drivings[k]
            if abs(w - u) <= eta:
                return True
            q = (w - u) ** 2 + 2.0 * m.a * m.durations[k]
            s = np.sqrt(q)
            if s.imag < 0 or (s.imag == 0 and (w - u).real < 0):
                s = -s
            w = u + s
            if w.imag < _kernels.SWALLOW_IM:
                return True
        return False

    def ray_extent(th: float) -> float:
        direction = complex(math.cos(th), math.sin(th))
        hi = hi0
        while absorbed(u0 + hi * direction):
            hi *= 2.0
        probe = None
        for r in np.linspace(hi, hi / 256.0, 24):
            if absorbed(u0 + r * direction):
                probe = r
                break
        if probe is None:
            return 0.0
        lo = probe
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if absorbed(u0 + mid * direction):
                lo = mid
            else:
                hi = mid
        return hi

    # coarse angular scan, then refine around the strongest directions so
    # thin (measure-zero) hulls like a single slit are not slipped between rays
    angles = [math.pi * j / (n_rays + 1) for j in range(1, n_rays + 1)]
    extents = {th: ray_extent(th) for th in angles}
    spacing = math.pi / (n_rays + 1)
    for _ in range(4):
        top = sorted(extents, key=extents.get)[-3:]
        spacing /= 4.0
        for th0 in top:
            for th in (th0 - 2 * spacing, th0 - spacing, th0 + spacing, th0 + 2 * spacing):
                if 0.0 < th < math.pi and th not in extents:
                    extents[th] = ray_extent(th)
    best = max(extents.values()) + abs(u0) if extents else 0.0
    # real footprint extent
    for side in (+1.0, -1.0):
        lo, hi = 0.0, hi0
        def real_absorbed(r):
            t = swallow_time(d, complex(u0 + side * r, 0.0))
            return t != math.inf
        if not real_absorbed(0.0):
            continue
        while real_absorbed(hi):
            hi *= 2.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if real_absorbed(mid):
                lo = mid
            else:
                hi = mid
        best = max(best, hi + abs(u0))
    return best
