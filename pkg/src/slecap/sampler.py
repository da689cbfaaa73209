"""Samplers for the measures under study.

- SLE toward infinity: driving U_t = -B_t.
- SLE from x1 to x2 of fixed total duration t0 ("mu-sharp"): driving built
  from the conditioned radial part X (a Bessel bridge),
      U_t = x2 + int_0^t a/X ds - X_t          (x1 < x2)
  with the x1 > x2 case obtained by the reflection z -> -z.
- The two-stage construction mu_r: grow the conditioned curve from 0 to x
  until capacity a*r, then an independent conditioned curve between the
  image points for the remaining capacity; output the composed map.
- A coupled pair of two-versus-three-stage constructions sharing their first
  two stages, used for the coupling-rate experiment.

Map samples are evaluations of the composed mapping-out function on a fixed
13-point test grid in {z : |z - (sqrt(8a)+1) i| <= 1}; hulls of capacity at
most a stay below height sqrt(2a), so the grid is never swallowed.

Batch samplers draw each sample from a named sub-stream of one SeedSequence,
so results do not depend on batch size or chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.random import Generator, SeedSequence

from . import _kernels
from .bessel import GUARD_LIMIT, bridge_chunk, sample_bridge
from .loewner import DrivingPath, MapAtlas, atlas_from_driving
from .noise import CHUNK, levels_for
from .params import Params
from .seeds import stream, subseq


# ---------------------------------------------------------------------------
# test set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestSet:
    """Fixed evaluation grid: disk center plus 12 boundary points scaled by 0.999."""

    __test__ = False  # not a pytest case despite the name

    center: complex
    radius: float
    points: np.ndarray

    @classmethod
    def for_params(cls, p: Params) -> "TestSet":
        center = complex(0.0, math.sqrt(8.0 * p.a) + 1.0)
        angles = 2.0 * math.pi * np.arange(12) / 12.0
        ring = center + 0.999 * np.exp(1j * angles)
        pts = np.concatenate([[center], ring])
        return cls(center=center, radius=1.0, points=pts)

    @property
    def min_imag(self) -> float:
        return float(np.min(self.points.imag))


def sup_distance(values_a: np.ndarray, values_b: np.ndarray) -> np.ndarray:
    """Sup norm over the test grid, batched over leading axes."""
    return np.max(np.abs(values_a - values_b), axis=-1)


@dataclass
class MapSample:
    values: np.ndarray
    meta: dict = field(default_factory=dict)


class CoupledPair(NamedTuple):
    mu_r: MapSample
    mu_s: MapSample


# ---------------------------------------------------------------------------
# drivings (single-sample API)
# ---------------------------------------------------------------------------

def _ss_from_rng(rng: Generator) -> SeedSequence:
    return SeedSequence(rng.integers(0, 2 ** 63 - 1, size=4).tolist())


def sle_to_infinity_driving(p: Params, t: float, dt: float, rng: Generator) -> DrivingPath:
    """Standard chordal driving U = -B on a dyadic grid of about the requested dt."""
    if t <= 0 or dt <= 0:
        raise ValueError("t and dt must be positive")
    levels = levels_for(t, dt)
    K = 2 ** levels
    h = t / K
    dw = rng.standard_normal(K) * math.sqrt(h)
    U = np.concatenate([[0.0], -np.cumsum(dw)])
    return DrivingPath(times=np.arange(K + 1) * h, U=U, a=p.a)


def fixed_duration_driving(p: Params, x1: float, x2: float, t0: float, dt: float,
                           rng: Generator, drift_factor: float = 1.0) -> DrivingPath:
    """Driving of the conditioned curve from x1 to x2 with hcap(total) = a*t0."""
    if x1 == x2:
        raise ValueError("x1 and x2 must be distinct")
    path = sample_bridge(p, abs(x2 - x1), t0, dt, rng, drift_factor=drift_factor)
    sign = 1.0 if x2 > x1 else -1.0
    U = x2 + sign * (path.drift_integral - path.values)
    d = DrivingPath(times=path.times, U=U, a=p.a)
    return d


def _evaluate_sample(p: Params, atlas: MapAtlas, pts: np.ndarray) -> np.ndarray:
    vals, _, ok = _kernels.ev_interior_single(atlas.drivings, atlas.durations, p.a, pts, False)
    if not np.all(ok):
        raise RuntimeError("test point swallowed; capacity bookkeeping is broken")
    return vals


def sample_musharp(p: Params, x1: float, x2: float, t0: float, dt: float,
                   rng: Generator) -> MapSample:
    """One map sample of the conditioned measure, evaluated on the test set."""
    d = fixed_duration_driving(p, x1, x2, t0, dt, rng)
    ts = TestSet.for_params(p)
    vals = _evaluate_sample(p, atlas_from_driving(d), ts.points)
    return MapSample(values=vals, meta={"x1": x1, "x2": x2, "t0": t0, "dt": dt})


# ---------------------------------------------------------------------------
# batched building blocks
# ---------------------------------------------------------------------------

def _bridge_arrays(p, x0, t0, levels, ss, rows, drift_factor=1.0):
    """X and a*int ds/X grids (rows, K+1) for one chunk of bridges."""
    out = bridge_chunk(p, x0, t0, levels, ss, rows, drift_factor=drift_factor,
                       record_grid=True)
    if np.any(out["viol"] > GUARD_LIMIT):
        bad = int(np.sum(out["viol"] > GUARD_LIMIT))
        raise RuntimeError(f"{bad} bridge paths exceeded the positivity-guard limit; "
                           f"refine dt")
    return out["X_grid"], p.a * out["I_grid"], out["h"], out["K"]


def _driving_grid(x1, x2, X, aI):
    """Driving values on the grid from bridge arrays; x1, x2 may be scalars or (rows,)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    sign = np.where(x2 > x1, 1.0, -1.0)[..., None]
    return x2[..., None] + sign * (aI - X)


def _steps_from_grid(U_grid, h):
    """Midpoint step drivings (rows, K) and the uniform duration h."""
    return 0.5 * (U_grid[:, :-1] + U_grid[:, 1:]), h


class _BatchPieces:
    """Accumulates per-chunk atlas segments and evaluates composed maps."""

    def __init__(self, p: Params, pts: np.ndarray, rows: int):
        self.p = p
        pts = np.asarray(pts, dtype=complex)
        if pts.ndim == 1:
            pts = np.broadcast_to(pts, (rows, pts.shape[0]))
        self.pts = np.ascontiguousarray(pts)
        self.U = []
        self.D = []
        self.rows = rows

    def add(self, U_steps: np.ndarray, h: float):
        self.U.append(U_steps)
        self.D.append(np.full(U_steps.shape, h))

    def add_ragged(self, U_steps: np.ndarray, durations: np.ndarray):
        self.U.append(U_steps)
        self.D.append(durations)

    def evaluate(self) -> np.ndarray:
        if not self.U:
            return self.pts.copy()
        U = np.ascontiguousarray(np.concatenate(self.U, axis=1))
        D = np.ascontiguousarray(np.concatenate(self.D, axis=1))
        n = np.full(self.rows, U.shape[1], dtype=np.int64)
        vals, _, ok = _kernels.ev_interior(U, D, n, self.p.a, self.pts, False)
        if not np.all(ok):
            raise RuntimeError("test point swallowed during batch evaluation")
        return vals

    def capacity(self) -> np.ndarray:
        if not self.U:
            return np.zeros(self.rows)
        return self.p.a * np.concatenate(self.D, axis=1).sum(axis=1)


def musharp_batch(p: Params, x1: float, x2: float, t0: float, dt: float,
                  ss: SeedSequence, n: int, *, drift_factor: float = 1.0,
                  driving_scale: float = 1.0) -> np.ndarray:
    """n map samples of mu-sharp(x1, x2; t0) on the test grid, shape (n, 13).

    driving_scale rescales the driving about x1 (a deliberate corruption used
    by power checks; 1.0 is the true sampler).
    """
    ts = TestSet.for_params(p)
    levels = levels_for(t0, dt)
    out = np.empty((n, len(ts.points)), dtype=np.complex128)
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        X, aI, h, K = _bridge_arrays(p, abs(x2 - x1), t0, levels,
                                     subseq(ss, "chunk", c), CHUNK,
                                     drift_factor=drift_factor)
        Ug = _driving_grid(x1, x2, X[:rows], aI[:rows])
        if driving_scale != 1.0:
            Ug = x1 + driving_scale * (Ug - x1)
        pieces = _BatchPieces(p, ts.points, rows)
        pieces.add(_steps_from_grid(Ug, h)[0], h)
        out[c * CHUNK:c * CHUNK + rows] = pieces.evaluate()
    return out


def mu_r_batch(p: Params, x: float, r: float, dt: float, ss: SeedSequence, n: int) -> dict:
    """n samples of the two-stage measure mu_r on the test grid.

    Stage 1 grows the conditioned curve 0 -> x (duration 1) to the grid time
    nearest r; stage 2 is an independent conditioned curve from the image of
    x to the image of the tip with the leftover duration.  Returns values
    (n, 13) and the snapped r actually used.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError("r must lie in [0, 1]")
    if x <= 0:
        raise ValueError("x must be positive (apply the reflection upstream)")
    ts = TestSet.for_params(p)
    levels = levels_for(1.0, dt)
    K = 2 ** levels
    k_r = int(round(r * K))
    r_eff = k_r / K
    t2 = 1.0 - r_eff
    out = np.empty((n, len(ts.points)), dtype=np.complex128)
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        croot = subseq(ss, "chunk", c)
        pieces = _BatchPieces(p, ts.points, CHUNK)
        if k_r > 0:
            X, aI, h1, _ = _bridge_arrays(p, x, 1.0, levels, subseq(croot, "s1"), CHUNK)
            Ug = _driving_grid(0.0, x, X, aI)
            w1 = x + aI[:, k_r]
            z1 = Ug[:, k_r]
            pieces.add(_steps_from_grid(Ug[:, :k_r + 1], h1)[0], h1)
        else:
            w1 = np.full(CHUNK, float(x))
            z1 = np.zeros(CHUNK)
        if t2 > 0.0:
            lev2 = levels_for(t2, dt)
            X2, aI2, h2, _ = _bridge_arrays(p, w1 - z1, t2, lev2, subseq(croot, "s2"), CHUNK)
            U2 = _driving_grid(w1, z1, X2, aI2)
            pieces.add(_steps_from_grid(U2, h2)[0], h2)
        out[c * CHUNK:c * CHUNK + rows] = pieces.evaluate()[:rows]
    return {"values": out, "r_eff": r_eff}


def sample_mu_r(p: Params, x: float, r: float, dt: float, rng: Generator) -> MapSample:
    res = mu_r_batch(p, x, r, dt, _ss_from_rng(rng), 1)
    return MapSample(values=res["values"][0],
                     meta={"x": x, "r": res["r_eff"], "t0": 1.0, "dt": dt})


def coupled_pair_batch(p: Params, x: float, r: float, s: float, dt: float,
                       ss: SeedSequence, n: int) -> dict:
    """n coupled samples (mu_r, mu_s) sharing their first two stages.

    Stage 1: conditioned 0 -> x (duration 1) stopped at time r.
    Stage 2: conditioned curve from the image of x to the image tip
             (duration 1-r) stopped at time 1-s, leaving capacity a(s-r).
    Stage 3a / 3b: independent conditioned fillings of the leftover capacity
             between the stage-2 endpoints, in the two opposite directions.

    Returns values_r, values_s (n, 13), sup distances (n,), and the snapped
    (r_eff, s_eff).
    """
    if not 0.0 <= r <= s <= 1.0:
        raise ValueError("need 0 <= r <= s <= 1")
    ts = TestSet.for_params(p)
    levels = levels_for(1.0, dt)
    K = 2 ** levels
    k_r = int(round(r * K))
    r_eff = k_r / K
    t2 = 1.0 - r_eff
    if t2 <= 0.0:
        raise ValueError("r must be < 1 for a coupled pair")
    lev2 = levels_for(t2, dt)
    K2 = 2 ** lev2
    h2 = t2 / K2
    k2 = int(round((1.0 - s) / h2))
    s_eff = 1.0 - k2 * h2
    eps = s_eff - r_eff
    P = len(ts.points)
    vals_r = np.empty((n, P), dtype=np.complex128)
    vals_s = np.empty((n, P), dtype=np.complex128)
    stage_gap = np.empty(n)
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        croot = subseq(ss, "chunk", c)
        base = _BatchPieces(p, ts.points, CHUNK)
        if k_r > 0:
            X, aI, h1, _ = _bridge_arrays(p, x, 1.0, levels, subseq(croot, "s1"), CHUNK)
            Ug = _driving_grid(0.0, x, X, aI)
            w1 = x + aI[:, k_r]
            z1 = Ug[:, k_r]
            base.add(_steps_from_grid(Ug[:, :k_r + 1], h1)[0], h1)
        else:
            w1 = np.full(CHUNK, float(x))
            z1 = np.zeros(CHUNK)
        X2, aI2, _, _ = _bridge_arrays(p, w1 - z1, t2, lev2, subseq(croot, "s2"), CHUNK)
        U2 = _driving_grid(w1, z1, X2, aI2)
        if k2 > 0:
            base.add(_steps_from_grid(U2[:, :k2 + 1], h2)[0], h2)
        # evolved target and tip image at the stage-2 stop (stage 2 runs from
        # w1 > z1, so the target image drifts left: y2 = z1 - a*int ds/X)
        sign2 = np.where(z1 > w1, 1.0, -1.0)
        y2 = z1 + sign2 * aI2[:, k2]
        xx2 = U2[:, k2]
        stage_gap[c * CHUNK:c * CHUNK + rows] = np.abs(xx2 - y2)[:rows]
        w_base = base.evaluate()
        if eps <= 0.0:
            vals_r[c * CHUNK:c * CHUNK + rows] = w_base[:rows]
            vals_s[c * CHUNK:c * CHUNK + rows] = w_base[:rows]
            continue
        lev3 = max(1, levels_for(eps, dt))
        # 3a: from y2 to xx2 (used for mu_s); 3b: from xx2 to y2 (used for mu_r)
        x0_3 = np.abs(xx2 - y2)
        X3a, aI3a, h3, _ = _bridge_arrays(p, x0_3, eps, lev3, subseq(croot, "s3a"), CHUNK)
        U3a = _driving_grid(y2, xx2, X3a, aI3a)
        X3b, aI3b, _, _ = _bridge_arrays(p, x0_3, eps, lev3, subseq(croot, "s3b"), CHUNK)
        U3b = _driving_grid(xx2, y2, X3b, aI3b)
        for tail_U, sink in ((U3b, vals_r), (U3a, vals_s)):
            tail = _BatchPieces(p, w_base, CHUNK)
            tail.add(_steps_from_grid(tail_U, h3)[0], h3)
            sink[c * CHUNK:c * CHUNK + rows] = tail.evaluate()[:rows]
    dist = sup_distance(vals_r, vals_s)
    return {"values_r": vals_r, "values_s": vals_s, "distance": dist,
            "stage_gap": stage_gap, "r_eff": r_eff, "s_eff": s_eff,
            "eps_eff": eps}


def coupled_pair(p: Params, x: float, r: float, s: float, dt: float,
                 rng: Generator) -> CoupledPair:
    res = coupled_pair_batch(p, x, r, s, dt, _ss_from_rng(rng), 1)
    meta = {"x": x, "r": res["r_eff"], "s": res["s_eff"], "dt": dt}
    return CoupledPair(mu_r=MapSample(res["values_r"][0], dict(meta, role="mu_r")),
                       mu_s=MapSample(res["values_s"][0], dict(meta, role="mu_s")))
