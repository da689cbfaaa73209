"""Bessel processes with drift (1-2a)/x killed at the origin.

Closed forms, all with the capacity rate a = 2/kappa > 1/4:

    phi(x, t)   = x^(4a-1) t^(-1/2-2a) exp(-x^2/(2t))
                  hitting-time shape; dividing by Z(a) = 2^(2a-1/2) Gamma(2a-1/2)
                  normalizes it to a probability density in t.
    q_t(x, y)   = (y/t) (y/x)^(1/2-2a) exp(-(x^2+y^2)/(2t)) I_{2a-1/2}(xy/t)
                  transition density of the process killed at 0 (modified
                  Bessel index 2a-1/2).
    psi_t(x,y;t0) = q_t(x,y) phi(y, t0-t) / phi(x, t0)
                  marginal of the bridge conditioned to hit 0 at t0.

The bridge itself solves dX = [2a/X - X/(t0-t)] dt + dW.  Samplers run
Euler-Maruyama on a dyadic grid with deterministic dyadic refinement of the
last few steps (the drift is stiff there), a reflection guard at the origin,
and the exact endpoint (t0, 0) appended; see sample_bridge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, SeedSequence
from scipy.special import gamma as _gamma
from scipy.special import ive as _ive

from . import _kernels
from .noise import CHUNK, dyadic_increments, levels_for, refine_column
from .params import Params
from .seeds import stream, subseq

#: total positivity-guard violations after which a path is declared invalid
GUARD_LIMIT = 32


class StepSizeError(RuntimeError):
    """The positivity guard tripped too often; the step size is too coarse."""


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def first_passage_norm(p: Params) -> float:
    """Normalization Z(a) = 2^(2a-1/2) Gamma(2a-1/2) of the hitting-time shape."""
    if p.a <= 0.25:
        raise ValueError("normalization diverges for a <= 1/4")
    return 2.0 ** (2.0 * p.a - 0.5) * _gamma(2.0 * p.a - 0.5)


def first_passage_density(p: Params, x, t, normalized: bool = False):
    """Density shape phi(x, t) of the origin-hitting time; exact density if normalized."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(x <= 0) or np.any(t <= 0):
        raise ValueError("x and t must be positive")
    out = x ** (4.0 * p.a - 1.0) * t ** (-0.5 - 2.0 * p.a) * np.exp(-x * x / (2.0 * t))
    if normalized:
        out = out / first_passage_norm(p)
    if out.ndim == 0:
        return float(out)
    return out


def transition_density_killed(p: Params, t, x, y):
    """Transition density q_t(x, y) of the drift-(1-2a)/x process killed at 0.

    Evaluated through the exponentially scaled Bessel function, so large
    xy/t does not overflow.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(t <= 0) or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("t, x, y must be positive")
    nu = 2.0 * p.a - 0.5
    z = x * y / t
    out = (y / t) * (y / x) ** (0.5 - 2.0 * p.a) * _ive(nu, z) * np.exp(-((x - y) ** 2) / (2.0 * t))
    if out.ndim == 0:
        return float(out)
    return out


def bridge_density(p: Params, t, x, y, t0):
    """Marginal density psi_t(x, y; t0) of the bridge conditioned to hit 0 at t0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t >= t0):
        raise ValueError("t must lie strictly inside (0, t0)")
    num = transition_density_killed(p, t, x, y) * first_passage_density(p, y, t0 - t)
    return num / first_passage_density(p, x, t0)


# ---------------------------------------------------------------------------
# path containers
# ---------------------------------------------------------------------------

@dataclass
class BesselPath:
    """One realization on a grid.

    For a bridge, times end exactly at t0 with value 0; drift_integral is the
    running value of int a/X ds (terminal step handled by the sqrt-tail
    correction 2*a*delta/X).  For an unconditioned path t0 is +inf and the
    grid ends at the absorption time.
    """

    x0: float
    t0: float
    times: np.ndarray
    values: np.ndarray
    drift_integral: np.ndarray
    guard_violations: int = 0

    @property
    def absorption_time(self):
        if self.values[-1] == 0.0:
            return float(self.times[-1])
        return None


@dataclass
class WeightTrace:
    times: np.ndarray
    M: np.ndarray
    N: np.ndarray
    M_tilde: np.ndarray


# ---------------------------------------------------------------------------
# grid layout helpers
# ---------------------------------------------------------------------------

def refine_depths(K: int) -> np.ndarray:
    """Dyadic refinement depth per base step.

    The step ending m grid units before t0 is split into 2^d sub-steps with
    d = ceil(log2(10/m)), so sub-steps stay below 0.1x the distance to the
    terminal singularity.  Only the last few steps are affected.
    """
    depths = np.zeros(K, dtype=np.int64)
    for k in range(K - 1):
        m = K - (k + 1)
        if m <= 9:
            depths[k] = max(0, math.ceil(math.log2(10.0 / m)))
    return depths


def _sub_offsets(depths: np.ndarray) -> np.ndarray:
    counts = np.where(depths > 0, 2 ** depths, 0)
    off = np.zeros(len(depths) + 1, dtype=np.int64)
    np.cumsum(counts, out=off[1:])
    return off


def _subdivide_rng(rng: Generator, col: np.ndarray, h: float, depth: int) -> np.ndarray:
    dw = col[:, None].copy()
    for lvl in range(depth):
        n = dw.shape[1]
        xi = rng.standard_normal((dw.shape[0], n)) * math.sqrt(h / n / 4.0)
        half = 0.5 * dw
        dw = np.stack((half + xi, half - xi), axis=2).reshape(dw.shape[0], 2 * n)
    return dw


def _build_sub(dW: np.ndarray, h: float, depths, off, draw):
    """Concatenated refinement sub-increments; draw(col, h, depth, k) supplies bridging noise."""
    rows = dW.shape[0]
    sub = np.zeros((rows, off[-1]))
    for k in np.nonzero(depths)[0]:
        sub[:, off[k]:off[k + 1]] = draw(dW[:, k], h, int(depths[k]), int(k))
    return sub


# ---------------------------------------------------------------------------
# chunked bridge simulation (the building block for every batch sampler)
# ---------------------------------------------------------------------------

def bridge_chunk(p: Params, x0, t0: float, levels: int, ss: SeedSequence, rows: int,
                 *, drift_factor: float = 1.0, record_grid: bool = False,
                 marginal_idx=(), track_u_from=None):
    """Simulate one chunk of bridge paths from a named noise stream.

    Returns a dict with X_end, Iinv_end (int ds/X up to t0-h), Iinv_total
    (tail-corrected), maxX, maxU, viol and, when record_grid, the full X and
    int-ds/X grids of shape (rows, K+1) including the appended (t0, 0) point.
    """
    K = 2 ** levels
    h = t0 / K
    x0v = np.broadcast_to(np.asarray(x0, dtype=float), (rows,)).copy()
    dW = dyadic_increments(ss, rows, levels, t0)
    depths = refine_depths(K)
    off = _sub_offsets(depths)
    sub = _build_sub(dW, h, depths, off,
                     lambda col, hh, d, k: refine_column(ss, k, col, hh, d))
    marg = np.asarray(sorted(marginal_idx), dtype=np.int64)
    if record_grid:
        X_grid = np.empty((rows, K + 1))
        I_grid = np.empty((rows, K + 1))
    else:
        X_grid = np.empty((1, 1))
        I_grid = np.empty((1, 1))
    track_u = track_u_from is not None
    ux2 = float(track_u_from) if track_u else 0.0
    X_end, I_end, maxX, maxU, viol, marg_x = _kernels.bridge_kernel(
        x0v, t0, p.a, drift_factor * 2.0 * p.a, h, dW, sub, off, marg,
        record_grid, X_grid, I_grid, track_u, ux2)
    I_total = I_end + 2.0 * h / X_end
    out = {"X_end": X_end, "Iinv_end": I_end, "Iinv_total": I_total,
           "maxX": maxX, "maxU": maxU, "viol": viol, "marginals": marg_x,
           "h": h, "K": K}
    if record_grid:
        X_grid[:, K] = 0.0
        I_grid[:, K] = I_total
        out["X_grid"] = X_grid
        out["I_grid"] = I_grid
    return out


def bridge_functionals(p: Params, x0, t0: float, dt: float, ss: SeedSequence, n: int,
                       *, drift_factor: float = 1.0, marginal_times=(),
                       track_u_from=None) -> dict:
    """Aggregate bridge path functionals over n paths (chunked, stream-stable)."""
    levels = levels_for(t0, dt)
    K = 2 ** levels
    h = t0 / K
    midx = [int(round(tm / h)) for tm in marginal_times]
    for j, tm in zip(midx, marginal_times):
        if not 0 < j < K:
            raise ValueError(f"marginal time {tm} outside the open grid")
    parts = []
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        parts.append(bridge_chunk(p, x0, t0, levels, subseq(ss, "chunk", c), CHUNK,
                                  drift_factor=drift_factor, marginal_idx=midx,
                                  track_u_from=track_u_from))
        for key in ("X_end", "Iinv_end", "Iinv_total", "maxX", "maxU", "viol", "marginals"):
            parts[-1][key] = parts[-1][key][:rows]
    out = {k: np.concatenate([pt[k] for pt in parts]) for k in
           ("X_end", "Iinv_end", "Iinv_total", "maxX", "maxU", "viol", "marginals")}
    out["marginal_times"] = np.asarray(midx, dtype=float) * h
    out["h"] = h
    out["K"] = K
    return out


# ---------------------------------------------------------------------------
# public single-path samplers
# ---------------------------------------------------------------------------

def sample_bridge(p: Params, x0: float, t0: float, dt: float, rng: Generator,
                  drift_factor: float = 1.0) -> BesselPath:
    """One path of dX = [2a/X - X/(t0-t)] dt + dW from x0 > 0 hitting 0 at t0."""
    if x0 <= 0 or t0 <= 0 or dt <= 0:
        raise ValueError("x0, t0, dt must be positive")
    levels = levels_for(t0, dt)
    K = 2 ** levels
    h = t0 / K
    dW = rng.standard_normal((1, K)) * math.sqrt(h)
    depths = refine_depths(K)
    off = _sub_offsets(depths)
    sub = _build_sub(dW, h, depths, off, lambda col, hh, d, k: _subdivide_rng(rng, col, hh, d))
    X_grid = np.empty((1, K + 1))
    I_grid = np.empty((1, K + 1))
    X_end, I_end, _, _, viol, _ = _kernels.bridge_kernel(
        np.array([float(x0)]), t0, p.a, drift_factor * 2.0 * p.a, h, dW, sub, off,
        np.empty(0, dtype=np.int64), True, X_grid, I_grid, False, 0.0)
    if viol[0] > GUARD_LIMIT:
        raise StepSizeError(
            f"positivity guard tripped {viol[0]} times (limit {GUARD_LIMIT}); "
            f"dt = {dt} is too coarse for x0 = {x0}, t0 = {t0}")
    X_grid[0, K] = 0.0
    I_grid[0, K] = I_end[0] + 2.0 * h / X_end[0]
    times = np.arange(K + 1) * h
    times[K] = t0
    return BesselPath(x0=float(x0), t0=float(t0), times=times, values=X_grid[0],
                      drift_integral=p.a * I_grid[0], guard_violations=int(viol[0]))


def sample_bessel(p: Params, x0: float, dt: float, rng: Generator,
                  max_time: float = 1024.0) -> BesselPath:
    """One path of dX = (1-2a)/X dt + dW from x0 > 0 run until absorption at 0.

    Absorption between grid points is detected by the per-step bridge
    crossing probability exp(-2 X X'/h); the hitting time always exists
    (a > 1/4) but its law is heavy-tailed, so a hard cap max_time guards the
    loop (exceeding it raises).
    """
    if x0 <= 0 or dt <= 0:
        raise ValueError("x0 and dt must be positive")
    h = dt
    block = 8192
    c1 = 1.0 - 2.0 * p.a
    x = float(x0)
    t = 0.0
    times = [0.0]
    values = [x]
    integ = [0.0]
    while t < max_time:
        dW = rng.standard_normal(block) * math.sqrt(h)
        un = rng.random(block)
        for k in range(block):
            xo = x
            xn = x + c1 / x * h + dW[k]
            if xn <= 0.0:
                T = t + h * xo / (xo - xn)
                times.append(T)
                values.append(0.0)
                integ.append(integ[-1] + p.a * (T - t) / xo)
                return BesselPath(x0=float(x0), t0=math.inf,
                                  times=np.array(times), values=np.array(values),
                                  drift_integral=np.array(integ))
            if un[k] < math.exp(-2.0 * x * xn / h):
                T = t + 0.5 * h
                times.append(T)
                values.append(0.0)
                integ.append(integ[-1] + p.a * (T - t) / xo)
                return BesselPath(x0=float(x0), t0=math.inf,
                                  times=np.array(times), values=np.array(values),
                                  drift_integral=np.array(integ))
            x = xn
            t += h
            times.append(t)
            values.append(x)
            integ.append(integ[-1] + p.a * h * 0.5 * (1.0 / xo + 1.0 / x))
    raise RuntimeError(f"no absorption before max_time = {max_time}")


# ---------------------------------------------------------------------------
# batch absorption / observation-process helpers
# ---------------------------------------------------------------------------

def absorption_times(p: Params, x0: float, dt: float, horizon: float,
                     ss: SeedSequence, n: int) -> np.ndarray:
    """Hitting times of 0 for n drift-(1-2a)/x paths; inf when censored at horizon."""
    K = int(round(horizon / dt))
    c1 = 1.0 - 2.0 * p.a
    out = []
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        g = stream(subseq(ss, "chunk", c), "w")
        dW = g.standard_normal((CHUNK, K)) * math.sqrt(dt)
        un = stream(subseq(ss, "chunk", c), "u").random((CHUNK, K))
        T = _kernels.absorb_kernel(np.full(CHUNK, float(x0)), c1, dt, dW, un)
        out.append(T[:rows])
    return np.concatenate(out)


def absorption_marginals(p: Params, x0: float, dt: float, times, ss: SeedSequence,
                         n: int) -> np.ndarray:
    """X at the requested times for surviving paths (NaN after absorption)."""
    tmax = max(times)
    K = int(round(tmax / dt))
    midx = np.asarray(sorted(int(round(tm / dt)) for tm in times), dtype=np.int64)
    c1 = 1.0 - 2.0 * p.a
    out = []
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        g = stream(subseq(ss, "chunk", c), "w")
        dW = g.standard_normal((CHUNK, K)) * math.sqrt(dt)
        un = stream(subseq(ss, "chunk", c), "u").random((CHUNK, K))
        _, marg = _kernels.absorb_marginal_kernel(np.full(CHUNK, float(x0)), c1, dt, dW, un, midx)
        out.append(marg[:rows])
    return np.concatenate(out)


def observation_checks(p: Params, x0: float, dt: float, check_times, lo: float, hi: float,
                       ss: SeedSequence, n: int) -> dict:
    """The drift +a/x process (image of the target point under the chordal flow),
    frozen at the first exit from [lo, hi].

    Returns X, int ds/X and int ds/X^2 at each t ∧ tau for t in check_times;
    these feed the martingale expectation checks (g' = exp(-a int ds/X^2)).
    """
    tmax = max(check_times)
    K = int(round(tmax / dt))
    cidx = np.asarray(sorted(int(round(tm / dt)) for tm in check_times), dtype=np.int64)
    Xs, I1s, I2s, Tts = [], [], [], []
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        g = stream(subseq(ss, "chunk", c), "w")
        dW = g.standard_normal((CHUNK, K)) * math.sqrt(dt)
        X, I1, I2, Tt = _kernels.target_kernel(float(x0), p.a, dt, dW, lo, hi, cidx)
        Xs.append(X[:rows]); I1s.append(I1[:rows]); I2s.append(I2[:rows]); Tts.append(Tt[:rows])
    return {"X": np.concatenate(Xs), "I1": np.concatenate(I1s), "I2": np.concatenate(I2s),
            "t_stop": np.concatenate(Tts), "times": cidx * dt}


# ---------------------------------------------------------------------------
# martingale weights
# ---------------------------------------------------------------------------

def weight_trace(p: Params, path: BesselPath, gprime: np.ndarray, t0: float) -> WeightTrace:
    """Martingale weights along a path.

        M[k]       = (X_k/X_0)^(1-3a) * gprime[k]^b
        N[k]       = phi(X_k, t0 - t_k)
        M_tilde[k] = M[k] N[k]

    gprime must share the grid with the path and start at 1.  Every X_k must
    be positive and every grid time must precede t0.
    """
    gprime = np.asarray(gprime, dtype=float)
    if gprime.shape != path.times.shape:
        raise ValueError("gprime must share the path grid")
    if gprime[0] != 1.0:
        raise ValueError("gprime[0] must be 1")
    X = path.values
    if np.any(X <= 0.0):
        raise ValueError("weight trace requires strictly positive X before the terminal cutoff")
    if np.any(path.times >= t0):
        raise ValueError("weight trace requires grid times strictly below t0")
    M = (X / X[0]) ** (1.0 - 3.0 * p.a) * gprime ** p.b
    N = first_passage_density(p, X, t0 - path.times)
    return WeightTrace(times=path.times.copy(), M=M, N=N, M_tilde=M * N)
