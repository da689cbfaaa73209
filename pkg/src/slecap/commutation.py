"""Two-sided growth orders and the commutation weight.

Two constructions of a pair of curve segments grown from opposite boundary
points under the duration-conditioned measure:

  order "first from x1": grow the conditioned curve from x1 toward x2
  (total duration t0 = 1) until its own capacity reaches a*r1; given it, grow
  the curve from x2 toward the first tip, conditioned so the union fills
  capacity a, until the second curve's own capacity reaches a*r2.

  order "first from x2": the same with the roles of (x1, r1) and (x2, r2)
  exchanged.

The second curve lives in the image domain, so its own capacity (as a hull
by itself in H) is monitored by tracking its preimage tip through the
stage-1 inverse and re-Loewnerizing the preimage with vertical-slit steps.
Both orders expose the same observables of the pair: the images of the two
tips under the composed map and the composed map on the test grid.  Their
distributions must agree; the energy test in the experiments layer checks
that.

Independent pairs (two unconditioned curves toward infinity from x1 and x2,
stopped at capacities a*r1, a*r2) support assembling the reweighting factor

    h1'(U2)^b * h2'(U1)^b * loop * (|g(z2)-g(z1)| / |x2-x1|)^(2b)
                       * phi(|U2-U1|, t0 - r1 - r2) / phi(|x2-x1|, t0)

whose loop factor is exactly 1 at zero central charge (kappa = 8/3).  Both
one-sided mapping-out atlases h1, h2 are built by transplanting each curve
through the other's map, which lets the shared geometry (the endpoint gap)
be computed through either ordering and compared.

A normalized variant is assembled alongside: chaining the three exact
martingale tilts (target change for curve 1, restriction for curve 2,
target change for its image) and the duration conditioning through the
tower property gives

    h1'(U2)^b * h2'(U1)^b * loop * (|x2-x1| / gap)^(2b)
                       * phi(gap, t0 - hcap(union)/a) / phi(|x2-x1|, t0)

with gap = |g(z2) - g(z1)|.  This version integrates to 1 over disjoint
pairs at zero central charge (checked by Monte Carlo), which pins down the
distance-ratio orientation and the phi arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import SeedSequence

from . import _kernels
from .bessel import first_passage_density
from .noise import CHUNK, dyadic_increments, levels_for
from .params import Params
from .sampler import TestSet, _bridge_arrays, _driving_grid
from .seeds import subseq


@dataclass
class CommutationWeight:
    h1_prime_at_U2: float
    h2_prime_at_U1: float
    endpoint_gap: float
    phi_ratio: float
    loop_term: float

    def assembled(self, b: float, x_gap: float) -> float:
        return (self.h1_prime_at_U2 ** b * self.h2_prime_at_U1 ** b * self.loop_term
                * (self.endpoint_gap / x_gap) ** (2.0 * b) * self.phi_ratio)


# ---------------------------------------------------------------------------
# conditioned pair, one growth order
# ---------------------------------------------------------------------------

def grow_order(p: Params, x_first: float, x_other: float, r_first: float,
               r_second: float, dt: float, ss: SeedSequence, n: int) -> dict:
    """Sample the conditioned pair in one growth order.

    Returns tip images under the composed map (g_tip_first for the curve
    grown from x_first, g_tip_second for the other), the composed map on the
    test grid, the own-chain driving values of both curves, and a validity
    mask (False when the own-capacity target was not reached before the
    image chain exhausted its duration).
    """
    if not (0.0 < r_first and 0.0 < r_second and r_first + r_second < 1.0):
        raise ValueError("need r_first, r_second > 0 with r_first + r_second < 1")
    ts = TestSet.for_params(p)
    P = len(ts.points)
    levels = levels_for(1.0, dt)
    K = 2 ** levels
    k1 = int(round(r_first * K))
    if k1 == 0:
        raise ValueError("r_first below grid resolution")
    r1_eff = k1 / K
    t2 = 1.0 - r1_eff
    lev2 = levels_for(t2, dt)
    K2 = 2 ** lev2
    h2 = t2 / K2
    cap_target = p.a * r_second

    out = {key: np.empty(n) for key in
           ("g_tip_first", "g_tip_second", "u_first", "u_second")}
    out["g_pts"] = np.empty((n, P), dtype=np.complex128)
    out["valid"] = np.empty(n, dtype=bool)

    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        croot = subseq(ss, "chunk", c)
        # stage 1: conditioned curve from x_first toward x_other, stopped at r1
        X, aI, h1, _ = _bridge_arrays(p, abs(x_other - x_first), 1.0, levels,
                                      subseq(croot, "s1"), CHUNK)
        Ug = _driving_grid(x_first, x_other, X, aI)
        sign1 = 1.0 if x_other > x_first else -1.0
        u1 = Ug[:, k1]
        w = x_other + sign1 * aI[:, k1]          # evolved image of x_other
        U1_steps = 0.5 * (Ug[:, :k1] + Ug[:, 1:k1 + 1])
        d1 = np.full((CHUNK, k1), h1)
        K1v = np.full(CHUNK, k1, dtype=np.int64)

        # stage 2 driving: conditioned curve from w toward u1, duration t2
        X2, aI2, _, _ = _bridge_arrays(p, np.abs(w - u1), t2, lev2,
                                       subseq(croot, "s2"), CHUNK)
        V = _driving_grid(w, u1, X2, aI2)
        stop_m, frac, u2_own, reached = _kernels.own_capacity_stage(
            U1_steps, K1v, d1, V, h2, p.a, cap_target)

        # composed atlas: stage-1 steps, full stage-2 steps, prorated last step
        max_m = int(stop_m.max())
        width = k1 + max_m
        U_comp = np.zeros((CHUNK, width))
        D_comp = np.zeros((CHUNK, width))
        U_comp[:, :k1] = U1_steps
        D_comp[:, :k1] = h1
        mid_full = 0.5 * (V[:, :-1] + V[:, 1:])
        U_comp[:, k1:] = mid_full[:, :max_m]
        D_comp[:, k1:] = h2
        ridx = np.arange(CHUNK)
        m = stop_m
        v_prev = V[ridx, m - 1]
        vstar = v_prev + frac * (V[ridx, m] - v_prev)
        U_comp[ridx, k1 + m - 1] = 0.5 * (v_prev + vstar)
        D_comp[ridx, k1 + m - 1] = frac * h2
        nstep = (k1 + m).astype(np.int64)

        pts = np.broadcast_to(ts.points, (CHUNK, P)).copy()
        vals, _, ok = _kernels.ev_interior(U_comp, D_comp, nstep, p.a, pts, False)
        if not np.all(ok[:rows][reached[:rows]]):
            raise RuntimeError("test point swallowed during commutation evaluation")

        sign2 = np.where(u1 > w, 1.0, -1.0)
        aI2_prev = aI2[ridx, m - 1]
        aI2_star = aI2_prev + frac * (aI2[ridx, m] - aI2_prev)
        g_first = u1 + sign2 * aI2_star          # evolved stage-2 target = g(tip of first curve)

        sl = slice(c * CHUNK, c * CHUNK + rows)
        out["g_tip_first"][sl] = g_first[:rows]
        out["g_tip_second"][sl] = vstar[:rows]
        out["u_first"][sl] = u1[:rows]
        out["u_second"][sl] = u2_own[:rows]
        out["g_pts"][sl] = vals[:rows]
        out["valid"][sl] = reached[:rows]
    out["r_first_eff"] = r1_eff
    return out


def order_features(p: Params, x1: float, x2: float, r1: float, r2: float,
                   dt: float, ss: SeedSequence, n: int, order: int) -> dict:
    """Feature matrix of one growth order, aligned so both orders are comparable.

    Columns: g(z1), g(z2) (tip images of the curves grown from x1 and x2
    under the composed map), then Re/Im of the composed map on the test grid.
    """
    if order == 1:
        res = grow_order(p, x1, x2, r1, r2, dt, ss, n)
        gz1, gz2 = res["g_tip_first"], res["g_tip_second"]
    elif order == 2:
        res = grow_order(p, x2, x1, r2, r1, dt, ss, n)
        gz2, gz1 = res["g_tip_first"], res["g_tip_second"]
    else:
        raise ValueError("order must be 1 or 2")
    feats = np.column_stack([gz1, gz2, res["g_pts"].real, res["g_pts"].imag])
    return {"features": feats[res["valid"]], "n_invalid": int((~res["valid"]).sum()),
            "g_pts": res["g_pts"][res["valid"]]}


# ---------------------------------------------------------------------------
# independent pair and the assembled weight
# ---------------------------------------------------------------------------

def _chordal_raw_driving(x0: float, t: float, levels: int, ss: SeedSequence,
                         rows: int) -> np.ndarray:
    K = 2 ** levels
    dw = dyadic_increments(ss, rows, levels, t)
    U = np.empty((rows, K + 1))
    U[:, 0] = x0
    np.cumsum(-dw, axis=1, out=U[:, 1:])
    U[:, 1:] += x0
    return U


def independent_pair_weights(p: Params, x1: float, x2: float, r1: float, r2: float,
                             dt: float, ss: SeedSequence, n: int,
                             t0: float = 1.0) -> dict:
    """Assemble the commutation weight on independent unconditioned pairs.

    Curve j grows from x_j toward infinity (driving x_j - B) and is stopped
    at own capacity a*r_j; the two one-sided maps h1, h2 are built by
    transplanting each curve through the other's atlas.  The endpoint gap
    |g(z2) - g(z1)| is computed through both routes; their agreement is the
    shared-geometry consistency check.

    Only rows whose transplants are geometrically clean (hulls well
    separated, boundary evaluations on the correct side) are marked valid.
    """
    if p.central_charge != 0.0 and abs(p.central_charge) > 1e-12:
        raise ValueError("weight assembly requires zero central charge (kappa = 8/3)")
    lev1 = levels_for(r1, dt)
    lev2 = levels_for(r2, dt)
    cols = ("h1p", "h2p", "gap1", "gap2", "u1", "u2", "weight", "weight_norm",
            "cap_union")
    out = {key: np.empty(n) for key in cols}
    out["valid"] = np.empty(n, dtype=bool)
    x_gap = abs(x2 - x1)
    for c in range((n + CHUNK - 1) // CHUNK):
        rows = min(CHUNK, n - c * CHUNK)
        croot = subseq(ss, "chunk", c)
        Uraw1 = _chordal_raw_driving(x1, r1, lev1, subseq(croot, "b1"), CHUNK)
        Uraw2 = _chordal_raw_driving(x2, r2, lev2, subseq(croot, "b2"), CHUNK)
        res = _pair_weights_from_drivings(p, Uraw1, r1, Uraw2, r2, x_gap, t0)
        sl = slice(c * CHUNK, c * CHUNK + rows)
        for key in cols:
            out[key][sl] = res[key][:rows]
        out["valid"][sl] = res["valid"][:rows]
    out["phi_ratio_args"] = (t0 - r1 - r2, t0)
    return out


def _pair_weights_from_drivings(p, Uraw1, r1, Uraw2, r2, x_gap, t0):
    rows = Uraw1.shape[0]
    K1 = Uraw1.shape[1] - 1
    K2 = Uraw2.shape[1] - 1
    h1 = r1 / K1
    h2 = r2 / K2
    steps1 = 0.5 * (Uraw1[:, :-1] + Uraw1[:, 1:])
    steps2 = 0.5 * (Uraw2[:, :-1] + Uraw2[:, 1:])
    d1 = np.full((rows, K1), h1)
    d2 = np.full((rows, K2), h2)
    a = p.a

    tips1 = _kernels.tips_kernel(steps1, d1, Uraw1[:, 1:], a)
    tips2 = _kernels.tips_kernel(steps2, d2, Uraw2[:, 1:], a)

    # geometric separation guard (hull footprints must not approach)
    hi1 = tips1.real.max(axis=1)
    lo2 = tips2.real.min(axis=1)
    lo1 = tips1.real.min(axis=1)
    hi2 = tips2.real.max(axis=1)
    if np.median(Uraw1[:, 0]) < np.median(Uraw2[:, 0]):
        sep = (hi1 + 0.1 * x_gap < lo2)
    else:
        sep = (hi2 + 0.1 * x_gap < lo1)

    n1 = np.full(rows, K1, dtype=np.int64)
    n2 = np.full(rows, K2, dtype=np.int64)
    img2 = _kernels.map_through_kernel(steps1, d1, n1, a, tips2)   # g1(curve 2)
    img1 = _kernels.map_through_kernel(steps2, d2, n2, a, tips1)   # g2(curve 1)
    H2_U, H2_D = _kernels.reloewner_kernel(img2, a)                # h2 = map of g1(curve2)
    H1_U, H1_D = _kernels.reloewner_kernel(img1, a)                # h1 = map of g2(curve1)

    u1 = Uraw1[:, -1]
    u2 = Uraw2[:, -1]
    side1 = np.where(u1 < H2_U[:, 0], -1.0, 1.0)
    side2 = np.where(u2 < H1_U[:, 0], -1.0, 1.0)
    gz1_r1, h2p, ok_a = _kernels.ev_boundary(H2_U, H2_D, n2, a, u1, side1)
    gz2_r2, h1p, ok_b = _kernels.ev_boundary(H1_U, H1_D, n1, a, u2, side2)
    gz2_r1 = H2_U[:, -1]       # image of curve-2 tip through route 1
    gz1_r2 = H1_U[:, -1]       # image of curve-1 tip through route 2

    gap1 = np.abs(gz2_r1 - gz1_r1)
    gap2 = np.abs(gz2_r2 - gz1_r2)
    cap_union = p.a * r1 + p.a * H2_D.sum(axis=1)
    valid = (sep & ok_a & ok_b & (h1p > 0) & (h2p > 0) & (gap1 > 0)
             & (cap_union < p.a * t0))
    h1p_s = np.where(valid, h1p, 1.0)
    h2p_s = np.where(valid, h2p, 1.0)
    gap_s = np.where(valid, gap1, x_gap)
    du = np.where(valid, np.abs(u2 - u1), x_gap)
    cap_s = np.where(valid, cap_union, 0.0)
    phi_den = first_passage_density(p, x_gap, t0)
    deriv = h1p_s ** p.b * h2p_s ** p.b
    weight = (deriv * (gap_s / x_gap) ** (2 * p.b)
              * first_passage_density(p, du, t0 - r1 - r2) / phi_den)
    weight_norm = (deriv * (x_gap / gap_s) ** (2 * p.b)
                   * first_passage_density(p, gap_s, t0 - cap_s / p.a) / phi_den)
    return {"h1p": h1p, "h2p": h2p, "gap1": gap1, "gap2": gap2,
            "u1": u1, "u2": u2, "weight": weight, "weight_norm": weight_norm,
            "cap_union": cap_union, "valid": valid}


def weight_from_row(res: dict, i: int, p: Params, x_gap: float) -> CommutationWeight:
    """One assembled CommutationWeight from independent_pair_weights output."""
    tau_rest, t0 = res["phi_ratio_args"]
    phi_ratio = (first_passage_density(p, abs(res["u2"][i] - res["u1"][i]), tau_rest)
                 / first_passage_density(p, x_gap, t0))
    return CommutationWeight(h1_prime_at_U2=float(res["h1p"][i]),
                             h2_prime_at_U1=float(res["h2p"][i]),
                             endpoint_gap=float(res["gap1"][i]),
                             phi_ratio=float(phi_ratio),
                             loop_term=1.0)
