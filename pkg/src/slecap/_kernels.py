"""Compiled inner loops.

Everything here is plain numerics on preallocated arrays; all public API and
bookkeeping lives in the importing modules.  Conventions:

- An atlas is a sequence of exact constant-driving steps (duration d_k,
  driving U_k); the forward step is w -> U_k + sqrt((w-U_k)^2 + 2a d_k) with
  the branch of positive imaginary part, the inverse flips the sign of the
  2a d_k term.
- Interior points are declared swallowed when an iterate's imaginary part
  falls below SWALLOW_IM; boundary (real) points when their side relative to
  the driving value flips.
"""

from __future__ import annotations

import numpy as np
import numba
from numba import njit, prange

# the default TBB layer on this platform is too old and warns; prefer omp
try:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except Exception:  # pragma: no cover - older numba without the knob
    pass

SWALLOW_IM = 1e-12


# ---------------------------------------------------------------------------
# branch square root
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _bsqrt(qr, qi, refsign):
    """Root of qr + i*qi with nonnegative imaginary part.

    For real positive q the sign of the real part is ambiguous; refsign
    (the sign of Re(w - U) before the step) resolves it by continuity.
    """
    m = np.hypot(qr, qi)
    sr = np.sqrt(0.5 * (m + qr))
    t = 0.5 * (m - qr)
    si = np.sqrt(t) if t > 0.0 else 0.0
    if qi < 0.0:
        sr = -sr
    elif qi == 0.0 and qr > 0.0 and refsign < 0.0:
        sr = -sr
    return sr, si


@njit(cache=True, inline="always", fastmath=True)
def _bsqrt_f(qr, qi, refsign):
    """Fast-math _bsqrt for the batch kernels (magnitudes stay far from overflow)."""
    m = np.sqrt(qr * qr + qi * qi)
    sr = np.sqrt(0.5 * (m + qr))
    t = 0.5 * (m - qr)
    si = np.sqrt(t) if t > 0.0 else 0.0
    if qi < 0.0:
        sr = -sr
    elif qi == 0.0 and qr > 0.0 and refsign < 0.0:
        sr = -sr
    return sr, si


# ---------------------------------------------------------------------------
# atlas evaluation
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True, fastmath=True)
def ev_interior(U, dlt, nstep, a, pts, want_deriv):
    """Apply per-row atlases to interior points.

    U, dlt : (n, Kmax) step drivings and durations, row i uses nstep[i] steps
    pts    : (n, P) complex points with positive imaginary part
    returns vals (n, P), derivs (n, P), ok (n, P)
    """
    n, P = pts.shape
    vals = np.empty((n, P), dtype=np.complex128)
    ders = np.ones((n, P), dtype=np.complex128)
    ok = np.ones((n, P), dtype=np.bool_)
    for i in prange(n):
        K = nstep[i]
        for p in range(P):
            wr = pts[i, p].real
            wi = pts[i, p].imag
            gr = 1.0
            gi = 0.0
            alive = True
            for k in range(K):
                u = U[i, k]
                c = 2.0 * a * dlt[i, k]
                dr = wr - u
                qr = dr * dr - wi * wi + c
                qi = 2.0 * dr * wi
                sr, si = _bsqrt_f(qr, qi, dr)
                if want_deriv:
                    # step derivative (w-U)/s
                    den = sr * sr + si * si
                    if den <= 0.0:
                        alive = False
                        break
                    fr = (dr * sr + wi * si) / den
                    fi = (wi * sr - dr * si) / den
                    tr = gr * fr - gi * fi
                    gi = gr * fi + gi * fr
                    gr = tr
                wr = u + sr
                wi = si
                if wi < SWALLOW_IM:
                    alive = False
                    break
            vals[i, p] = complex(wr, wi)
            ders[i, p] = complex(gr, gi)
            ok[i, p] = alive
    return vals, ders, ok


@njit(cache=True)
def ev_interior_single(U, dlt, a, pts, want_deriv):
    """One atlas, many points; serial version for small workloads."""
    K = U.shape[0]
    P = pts.shape[0]
    vals = np.empty(P, dtype=np.complex128)
    ders = np.ones(P, dtype=np.complex128)
    ok = np.ones(P, dtype=np.bool_)
    for p in range(P):
        wr = pts[p].real
        wi = pts[p].imag
        gr = 1.0
        gi = 0.0
        alive = True
        for k in range(K):
            u = U[k]
            c = 2.0 * a * dlt[k]
            dr = wr - u
            qr = dr * dr - wi * wi + c
            qi = 2.0 * dr * wi
            sr, si = _bsqrt(qr, qi, dr)
            if want_deriv:
                den = sr * sr + si * si
                if den <= 0.0:
                    alive = False
                    break
                fr = (dr * sr + wi * si) / den
                fi = (wi * sr - dr * si) / den
                tr = gr * fr - gi * fi
                gi = gr * fi + gi * fr
                gr = tr
            wr = u + sr
            wi = si
            if wi < SWALLOW_IM:
                alive = False
                break
        vals[p] = complex(wr, wi)
        ders[p] = complex(gr, gi)
        ok[p] = alive
    return vals, ders, ok


@njit(cache=True)
def swallow_step_single(U, dlt, a, pts):
    """First step index (1-based) at which each interior point is swallowed; 0 if never."""
    K = U.shape[0]
    P = pts.shape[0]
    out = np.zeros(P, dtype=np.int64)
    for p in range(P):
        wr = pts[p].real
        wi = pts[p].imag
        for k in range(K):
            u = U[k]
            c = 2.0 * a * dlt[k]
            dr = wr - u
            qr = dr * dr - wi * wi + c
            qi = 2.0 * dr * wi
            sr, si = _bsqrt(qr, qi, dr)
            wr = u + sr
            wi = si
            if wi < SWALLOW_IM:
                out[p] = k + 1
                break
    return out


@njit(cache=True)
def ev_boundary_single(U, dlt, a, xs, sides):
    """Evaluate one atlas at real points approaching the hull from a fixed side.

    sides: +1 for points to the right of the footprint, -1 for the left.
    Returns vals, derivs, ok (ok False when the point's side flips, i.e. it
    was swallowed).
    """
    K = U.shape[0]
    P = xs.shape[0]
    vals = np.empty(P, dtype=np.float64)
    ders = np.ones(P, dtype=np.float64)
    ok = np.ones(P, dtype=np.bool_)
    for p in range(P):
        x = xs[p]
        s = sides[p]
        g = 1.0
        alive = True
        for k in range(K):
            u = U[k]
            d = x - u
            if d * s <= 0.0:
                alive = False
                break
            root = np.sqrt(d * d + 2.0 * a * dlt[k])
            g *= d / root
            x = u + s * root
        vals[p] = x
        ders[p] = g
        ok[p] = alive
    return vals, ders, ok


@njit(cache=True, parallel=True, fastmath=True)
def ev_boundary(U, dlt, nstep, a, xs, sides):
    """Per-row atlases applied to one real point per row."""
    n = xs.shape[0]
    vals = np.empty(n, dtype=np.float64)
    ders = np.ones(n, dtype=np.float64)
    ok = np.ones(n, dtype=np.bool_)
    for i in prange(n):
        x = xs[i]
        s = sides[i]
        g = 1.0
        alive = True
        for k in range(nstep[i]):
            u = U[i, k]
            d = x - u
            if d * s <= 0.0:
                alive = False
                break
            root = np.sqrt(d * d + 2.0 * a * dlt[i, k])
            g *= d / root
            x = u + s * root
        vals[i] = x
        ders[i] = g
        ok[i] = alive
    return vals, ders, ok


# ---------------------------------------------------------------------------
# Euler steppers
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _bridge_substep(x, t, hs, dw, c1, t0):
    """One step of dX = (c1/X - X/(t0-t)) dt + dW, implicit in the singular term.

    Solving X' = B + c1*h/X' with B the explicit part keeps X' > 0
    unconditionally and bounds the singular drift's step contribution
    (an explicit step explodes whenever X approaches 0).
    """
    b = x - x * hs / (t0 - t) + dw
    xn = 0.5 * (b + np.sqrt(b * b + 4.0 * c1 * hs))
    # deep sub-diffusion-scale dips signal a too-coarse grid; count them
    viol = 1 if xn < 0.01 * np.sqrt(hs) else 0
    return xn, viol


@njit(cache=True, parallel=True, fastmath=True)
def bridge_kernel(x0, t0, a, c1, h, dW, sub_dW, sub_off, marg_idx,
                  record, X_grid, I_grid, track_u, ux2):
    """Conditioned (bridge) paths on the base grid.

    dW       : (n, K) base increments; the last base step [t0-h, t0] is not
               simulated (terminal cutoff), the caller appends (t0, 0).
    sub_dW   : (n, M) concatenated refinement sub-increments for late steps
    sub_off  : (K+1,) int64, sub_off[k+1]-sub_off[k] = number of sub-steps of
               base step k (0 = take the base increment in one step)
    marg_idx : sorted base-boundary indices at which to record X
    record   : write full X and integral grids into X_grid, I_grid (n, K+1)
    track_u  : track max |ux2 + a*I(t) - X(t)| over base boundaries
    Returns X_end, Iinv_end (∫ds/X up to t0-h), maxX, maxU, viol, marg.
    """
    n, K = dW.shape
    m = marg_idx.shape[0]
    X_end = np.empty(n)
    I_end = np.empty(n)
    maxX = np.empty(n)
    maxU = np.zeros(n)
    viol = np.zeros(n, dtype=np.int64)
    marg = np.zeros((n, m))
    for i in prange(n):
        x = x0[i]
        iv = 0.0
        t = 0.0
        mx = x
        mu = 0.0
        nv = 0
        mp = 0
        if record:
            X_grid[i, 0] = x
            I_grid[i, 0] = 0.0
        for k in range(K - 1):
            nsub = sub_off[k + 1] - sub_off[k]
            if nsub <= 0:
                xo = x
                x, v = _bridge_substep(x, t, h, dW[i, k], c1, t0)
                nv += v
                iv += h * 0.5 * (1.0 / xo + 1.0 / x)
                t += h
                if x > mx:
                    mx = x
            else:
                hs = h / nsub
                for j in range(nsub):
                    xo = x
                    x, v = _bridge_substep(x, t, hs, sub_dW[i, sub_off[k] + j], c1, t0)
                    nv += v
                    iv += hs * 0.5 * (1.0 / xo + 1.0 / x)
                    t += hs
                    if x > mx:
                        mx = x
            if record:
                X_grid[i, k + 1] = x
                I_grid[i, k + 1] = iv
            if track_u:
                u = np.abs(ux2 + a * iv - x)
                if u > mu:
                    mu = u
            if mp < m and marg_idx[mp] == k + 1:
                marg[i, mp] = x
                mp += 1
        X_end[i] = x
        I_end[i] = iv
        maxX[i] = mx
        maxU[i] = mu
        viol[i] = nv
    return X_end, I_end, maxX, maxU, viol, marg


@njit(cache=True, parallel=True)
def absorb_kernel(x0, c1, h, dW, unif):
    """Paths of dX = c1/X dt + dW absorbed at the origin.

    Per-step absorption uses the Brownian-bridge crossing probability
    exp(-2 X X'/h).  Returns T (inf when censored at the horizon) and the
    full state matrix is not kept.
    """
    n, K = dW.shape
    T = np.full(n, np.inf)
    for i in prange(n):
        x = x0[i]
        t = 0.0
        for k in range(K):
            drift = c1 / x
            xn = x + drift * h + dW[i, k]
            if xn <= 0.0:
                T[i] = t + h * x / (x - xn)
                break
            # crossing probability is negligible once 2 x xn / h > ~28
            if x * xn < 14.0 * h and unif[i, k] < np.exp(-2.0 * x * xn / h):
                T[i] = t + 0.5 * h
                break
            x = xn
            t += h
    return T


@njit(cache=True, parallel=True)
def absorb_marginal_kernel(x0, c1, h, dW, unif, marg_idx):
    """Like absorb_kernel but records X at base boundaries (NaN once absorbed)."""
    n, K = dW.shape
    m = marg_idx.shape[0]
    T = np.full(n, np.inf)
    marg = np.full((n, m), np.nan)
    for i in prange(n):
        x = x0[i]
        t = 0.0
        alive = True
        mp = 0
        for k in range(K):
            if alive:
                drift = c1 / x
                xn = x + drift * h + dW[i, k]
                if xn <= 0.0:
                    T[i] = t + h * x / (x - xn)
                    alive = False
                elif x * xn < 14.0 * h and unif[i, k] < np.exp(-2.0 * x * xn / h):
                    T[i] = t + 0.5 * h
                    alive = False
                else:
                    x = xn
                    t += h
            if mp < m and marg_idx[mp] == k + 1:
                if alive:
                    marg[i, mp] = x
                mp += 1
            if not alive and mp >= m:
                break
    return T, marg


@njit(cache=True, parallel=True)
def target_kernel(x0, a, h, dW, lo, hi, check_idx):
    """Paths of dX = a/X dt + dW frozen at the first exit from [lo, hi].

    Records the stopped time t ∧ τ together with X, ∫ds/X and ∫ds/X² at the
    base boundaries listed in check_idx (all four frozen once the path exits,
    so they are the tau-stopped quantities).
    """
    n, K = dW.shape
    m = check_idx.shape[0]
    X_at = np.empty((n, m))
    I1_at = np.empty((n, m))
    I2_at = np.empty((n, m))
    T_at = np.empty((n, m))
    for i in prange(n):
        x = x0
        i1 = 0.0
        i2 = 0.0
        t = 0.0
        frozen = False
        mp = 0
        for k in range(K):
            if not frozen:
                xo = x
                xn = x + (a / x) * h + dW[i, k]
                if xn <= 0.0:
                    xn = 0.5 * xo
                i1 += h * 0.5 * (1.0 / xo + 1.0 / xn)
                i2 += h * 0.5 * (1.0 / (xo * xo) + 1.0 / (xn * xn))
                x = xn
                t += h
                if x <= lo or x >= hi:
                    frozen = True
            if mp < m and check_idx[mp] == k + 1:
                X_at[i, mp] = x
                I1_at[i, mp] = i1
                I2_at[i, mp] = i2
                T_at[i, mp] = t
                mp += 1
        while mp < m:
            X_at[i, mp] = x
            I1_at[i, mp] = i1
            I2_at[i, mp] = i2
            T_at[i, mp] = t
            mp += 1
    return X_at, I1_at, I2_at, T_at


# ---------------------------------------------------------------------------
# tip tracking and transplantation
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always", fastmath=True)
def _inv_step(zr, zi, u, c):
    """Inverse slit step: z -> u + sqrt((z-u)^2 - c), branch with Im >= 0."""
    dr = zr - u
    qr = dr * dr - zi * zi - c
    qi = 2.0 * dr * zi
    sr, si = _bsqrt_f(qr, qi, dr)
    return u + sr, si


@njit(cache=True, parallel=True, fastmath=True)
def tips_kernel(U, dlt, uraw, a):
    """Curve tips for per-row atlases.

    U, dlt : (n, K) the atlas steps, uraw : (n, K) raw driving at step ends.
    tips[i, m] = position of the curve at the end of step m (0-based), i.e.
    the preimage of uraw[i, m] under the first m+1 steps.
    """
    n, K = U.shape
    tips = np.empty((n, K), dtype=np.complex128)
    for i in prange(n):
        for m in range(K):
            zr = uraw[i, m]
            zi = 0.0
            for j in range(m, -1, -1):
                zr, zi = _inv_step(zr, zi, U[i, j], 2.0 * a * dlt[i, j])
            tips[i, m] = complex(zr, zi)
    return tips


@njit(cache=True, parallel=True, fastmath=True)
def reloewner_kernel(pts, a):
    """Vertical-slit atlas through the sample points of a curve.

    pts : (n, K) successive curve points in H (per row).  Step m absorbs
    pts[:, m]: driving = Re of the image of the point under the previous
    steps, duration = Im^2/(2a).  Returns (U, dlt) each (n, K).
    """
    n, K = pts.shape
    Uo = np.empty((n, K))
    Do = np.empty((n, K))
    for i in prange(n):
        for m in range(K):
            wr = pts[i, m].real
            wi = pts[i, m].imag
            for j in range(m):
                u = Uo[i, j]
                c = 2.0 * a * Do[i, j]
                dr = wr - u
                qr = dr * dr - wi * wi + c
                qi = 2.0 * dr * wi
                sr, si = _bsqrt_f(qr, qi, dr)
                wr = u + sr
                wi = si
            Uo[i, m] = wr
            if wi > 0.0:
                Do[i, m] = wi * wi / (2.0 * a)
            else:
                Do[i, m] = 0.0
    return Uo, Do


@njit(cache=True, parallel=True, fastmath=True)
def map_through_kernel(U, dlt, nstep, a, pts):
    """Apply per-row atlases to (n, P) interior points (values only)."""
    n, P = pts.shape
    vals = np.empty((n, P), dtype=np.complex128)
    for i in prange(n):
        for p in range(P):
            wr = pts[i, p].real
            wi = pts[i, p].imag
            for k in range(nstep[i]):
                u = U[i, k]
                c = 2.0 * a * dlt[i, k]
                dr = wr - u
                qr = dr * dr - wi * wi + c
                qi = 2.0 * dr * wi
                sr, si = _bsqrt_f(qr, qi, dr)
                wr = u + sr
                wi = si
            vals[i, p] = complex(wr, wi)
    return vals


@njit(cache=True, parallel=True, fastmath=True)
def own_capacity_stage(U1, K1, d1, Vraw, h2, a, cap_target):
    """Grow a stage-2 image chain until the preimage curve reaches a target capacity.

    U1, d1      : (n, K1max), (n, K1max) outer (stage-1) atlas; row i uses K1[i] steps
    Vraw        : (n, K2+1) stage-2 raw driving at step boundaries
    cap_target  : own half-plane capacity at which to stop (= a * r2)

    The preimage tip is tracked through the stage-2 chain (inverse steps) and
    the stage-1 inverse; a vertical-slit atlas of the preimage accumulates its
    own capacity.  The crossing step is prorated linearly in capacity.

    Returns stop_m (full steps taken, >= 1), frac in (0, 1], u2_own (own-chain
    driving at the stop), reached (False when the target was not hit).
    """
    n = Vraw.shape[0]
    K2 = Vraw.shape[1] - 1
    stop_m = np.zeros(n, dtype=np.int64)
    frac = np.zeros(n)
    u2_own = np.zeros(n)
    reached = np.zeros(n, dtype=np.bool_)
    for i in prange(n):
        mU = np.empty(K2)
        oU = np.empty(K2)
        oD = np.empty(K2)
        cap = 0.0
        done = False
        for m in range(1, K2 + 1):
            mU[m - 1] = 0.5 * (Vraw[i, m - 1] + Vraw[i, m])
            # image tip after m steps
            zr = Vraw[i, m]
            zi = 0.0
            for j in range(m - 1, -1, -1):
                zr, zi = _inv_step(zr, zi, mU[j], 2.0 * a * h2)
            # back through stage 1
            for j in range(K1[i] - 1, -1, -1):
                zr, zi = _inv_step(zr, zi, U1[i, j], 2.0 * a * d1[i, j])
            # forward through the own atlas built so far
            wr = zr
            wi = zi
            for j in range(m - 1):
                u = oU[j]
                c = 2.0 * a * oD[j]
                dr = wr - u
                qr = dr * dr - wi * wi + c
                qi = 2.0 * dr * wi
                sr, si = _bsqrt_f(qr, qi, dr)
                wr = u + sr
                wi = si
            inc = 0.5 * wi * wi
            if cap + inc >= cap_target:
                f = (cap_target - cap) / inc if inc > 0.0 else 1.0
                if f < 1e-9:
                    f = 1e-9
                # recompute the tip with a prorated final step
                vstar = Vraw[i, m - 1] + f * (Vraw[i, m] - Vraw[i, m - 1])
                ustar = 0.5 * (Vraw[i, m - 1] + vstar)
                zr = vstar
                zi = 0.0
                zr, zi = _inv_step(zr, zi, ustar, 2.0 * a * h2 * f)
                for j in range(m - 2, -1, -1):
                    zr, zi = _inv_step(zr, zi, mU[j], 2.0 * a * h2)
                for j in range(K1[i] - 1, -1, -1):
                    zr, zi = _inv_step(zr, zi, U1[i, j], 2.0 * a * d1[i, j])
                wr = zr
                wi = zi
                for j in range(m - 1):
                    u = oU[j]
                    c = 2.0 * a * oD[j]
                    dr = wr - u
                    qr = dr * dr - wi * wi + c
                    qi = 2.0 * dr * wi
                    sr, si = _bsqrt_f(qr, qi, dr)
                    wr = u + sr
                    wi = si
                stop_m[i] = m
                frac[i] = f
                u2_own[i] = wr
                reached[i] = True
                done = True
                break
            cap += inc
            oU[m - 1] = wr
            oD[m - 1] = inc / a
        if not done:
            stop_m[i] = K2
            frac[i] = 1.0
            u2_own[i] = oU[K2 - 1] if K2 > 0 else 0.0
    return stop_m, frac, u2_own, reached
