"""Compiled scalar kernels: pair geometry, region projection, Gauss-Seidel sweeps.

The profile integral int u^4 (1-u^6)^(-1/2) du is summed as a hypergeometric
series on whichever side of w^6 = 1/2 converges fastest, so the constant C*
here comes from two series and not from quadrature.  The shooting solve mirrors
the vectorized version in model_space.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _lower_series(w6):
    # int_0^w u^4 (1-u^6)^(-1/2) du = (1/6) sum_k (1/2)_k/k! w6^(k+5/6)/(k+5/6)
    if w6 <= 0.0:
        return 0.0
    c = 1.0
    p = w6 ** (5.0 / 6.0)
    tot = 0.0
    k = 0
    while k < 400:
        term = c * p / (k + 5.0 / 6.0)
        tot += term
        if term < 1e-17 * tot:
            break
        c *= (k + 0.5) / (k + 1.0)
        p *= w6
        k += 1
    return tot / 6.0


@njit(cache=True)
def _upper_series(x):
    # int_w^1 u^4 (1-u^6)^(-1/2) du with x = 1 - w^6:
    # (1/6) sum_k (1/6)_k/k! x^(k+1/2)/(k+1/2)
    if x <= 0.0:
        return 0.0
    c = 1.0
    p = math.sqrt(x)
    tot = 0.0
    k = 0
    while k < 400:
        term = c * p / (k + 0.5)
        tot += term
        if term < 1e-17 * tot:
            break
        c *= (k + 1.0 / 6.0) / (k + 1.0)
        p *= x
        k += 1
    return tot / 6.0


@njit(cache=True)
def c_star_series():
    return _lower_series(0.5) + _upper_series(0.5)


CS = 0.0  # filled below after compilation


@njit(cache=True)
def G_up(om6, w6, cs):
    """int_w^1, given both om6 = 1 - w^6 and w6 = w^6."""
    if om6 <= 0.5:
        return _upper_series(om6)
    return cs - _lower_series(w6)


@njit(cache=True)
def G_low(w6, om6, cs):
    """int_0^w, given both w6 and om6."""
    if w6 <= 0.5:
        return _lower_series(w6)
    return cs - _upper_series(om6)


@njit(cache=True)
def _parts(s, r, r6, om_r6, cs):
    a_s = abs(s)
    s2 = s * s
    t = (1.0 - a_s) * (1.0 + a_s)
    q = 6.0 + s2 * (-15.0 + s2 * (20.0 + s2 * (-15.0 + s2 * (6.0 - s2))))
    om_t6 = s2 * q
    t6 = t ** 6
    om_rt6 = om_r6 + r6 * om_t6
    rt6 = r6 * t6
    if s > 0.0:
        N = G_up(om_rt6, rt6, cs) + G_up(om_t6, t6, cs)
    elif t6 < 0.5:
        N = G_low(t6, om_t6, cs) - G_low(rt6, om_rt6, cs)
    else:
        N = G_up(om_rt6, rt6, cs) - G_up(om_t6, t6, cs)
    return t, q, om_t6, om_rt6, N


@njit(cache=True)
def shoot(lo, hi, D, s0, cs):
    """Clairaut parameter s for the pair (lo, hi) with D = |dphi| lo^2."""
    r = lo / hi
    r6 = r ** 6
    om_r6 = -math.expm1(6.0 * math.log1p((lo - hi) / hi))
    Dstar = G_up(om_r6, r6, cs)
    one_m_r5 = -math.expm1(5.0 * math.log(r)) if r < 1.0 else 0.0
    if D < Dstar:
        t1 = (5.0 * D / max(one_m_r5, 1e-300)) ** (1.0 / 3.0)
        if t1 < 1e-3 and r < 1.0 - 1e-6:
            return -math.sqrt(1.0 - t1)
        s = -math.sqrt(1.0 - min(max(t1, 1e-12), 0.999))
    else:
        t2 = math.sqrt(2.0 * cs / max(D, 1e-300))
        if t2 < 1e-2:
            t2 = math.sqrt((2.0 * cs - t2 ** 5 * (1.0 + r ** 5) / 5.0) / max(D, 1e-300))
            if t2 < 1e-3:
                return math.sqrt(1.0 - t2)
        s = math.sqrt(1.0 - min(max(t2, 1e-12), 0.999))
    if math.isfinite(s0) and abs(s0) < 0.999:
        s = s0
    lo_s, hi_s = -1.0, 1.0
    logD = math.log(D)
    dx_old = 4.0
    for _ in range(200):
        t, q, om_t6, om_rt6, N = _parts(s, r, r6, om_r6, cs)
        if N > 0.0:
            F = math.log(N) - 2.0 * math.log(t) - logD
        else:
            F = -math.inf
        if F < 0.0:
            lo_s = s
        elif F > 0.0:
            hi_s = s
        if abs(F) <= 1e-13:
            return s
        dN = 2.0 * r ** 5 * t ** 4 * s / math.sqrt(max(om_rt6, 1e-300)) + 2.0 * t ** 4 / math.sqrt(q)
        if N > 0.0:
            dF = dN / N + 4.0 * s / t
            sn = s - F / dF
        else:
            dF = 0.0
            sn = math.nan
        # bisect when Newton leaves the bracket or fails to halve the last step
        if not (math.isfinite(sn) and lo_s < sn < hi_s and dF > 0.0 and abs(sn - s) < 0.5 * dx_old):
            sn = 0.5 * (lo_s + hi_s)
        if abs(sn - s) <= 1e-14 or hi_s - lo_s <= 4e-16:
            return sn
        dx_old = abs(sn - s)
        s = sn
    return s


@njit(cache=True)
def pair(r1, f1, r2, f2, s0, cs):
    """(dist, log_rho, log_phi, a, J, s) for p = (r1, f1), q = (r2, f2); rho == 0 is P0."""
    if r1 == 0.0 or r2 == 0.0:
        lr = -r1 if (r2 == 0.0 and r1 > 0.0) else 0.0
        return r1 + r2, lr, 0.0, 0.0, 0.0, math.nan
    dphi = f2 - f1
    if dphi == 0.0:
        return abs(r2 - r1), r2 - r1, 0.0, 0.0, 0.0, math.nan
    p_lo = r1 <= r2
    lo = min(r1, r2)
    hi = max(r1, r2)
    D = abs(dphi) * lo * lo
    s = shoot(lo, hi, D, s0, cs)
    r = lo / hi
    r6 = r ** 6
    om_r6 = -math.expm1(6.0 * math.log1p((lo - hi) / hi))
    t, q, om_t6, om_rt6, N = _parts(s, r, r6, om_r6, cs)
    a = t * lo
    sg = 1.0 if s > 0.0 else (-1.0 if s < 0.0 else 0.0)
    d = hi * math.sqrt(om_rt6) + sg * lo * abs(s) * math.sqrt(q) - 2.0 * a * N
    if p_lo:
        drho = -s * math.sqrt(q)
    else:
        drho = -math.sqrt(om_rt6)
    J = (1.0 if dphi > 0 else -1.0) * a ** 3
    return d, d * drho, d * J / r1 ** 6, a, J, s


@njit(cache=True)
def pair_arrays(r1, f1, r2, f2, s0, cs):
    n = r1.size
    out = np.empty((6, n))
    for i in range(n):
        d, lr, lp, a, J, s = pair(r1[i], f1[i], r2[i], f2[i], s0[i], cs)
        out[0, i] = d
        out[1, i] = lr
        out[2, i] = lp
        out[3, i] = a
        out[4, i] = J
        out[5, i] = s
    return out


# --------------------------------------------------------------------------
# convex region H[rho0]

@njit(cache=True)
def region_contains(r, f, r0, cs):
    if r < r0 * (1.0 - 1e-14):
        return False
    if abs(abs(f) * r0 * r0 - cs) <= 1e-12 * cs:
        return False
    w = min(r0 / r, 1.0)
    w6 = w ** 6
    om6 = -math.expm1(6.0 * math.log(w)) if w < 1.0 else 0.0
    return abs(f) <= G_up(om6, w6, cs) / (r0 * r0) * (1.0 + 1e-12) + 1e-300


@njit(cache=True)
def _boundary_point(u, r0, cs):
    au = abs(u)
    om6 = -math.expm1(6.0 * math.log1p(-au))
    w6 = (1.0 - au) ** 6
    sg = 1.0 if u > 0 else (-1.0 if u < 0 else 0.0)
    return r0 / (1.0 - au), sg * G_up(om6, w6, cs) / (r0 * r0)


@njit(cache=True)
def region_project(r, f, r0, cs):
    if r > 0.0 and region_contains(r, f, r0, cs):
        return r, f
    if r == 0.0:
        return r0, 0.0
    g = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = -1.0 + 1e-13, 1.0 - 1e-13
    c = hi - g * (hi - lo)
    d = lo + g * (hi - lo)
    br, bf = _boundary_point(c, r0, cs)
    fc = pair(r, f, br, bf, math.nan, cs)[0]
    br, bf = _boundary_point(d, r0, cs)
    fd = pair(r, f, br, bf, math.nan, cs)[0]
    for _ in range(90):
        if fc <= fd:
            hi = d
            d = c
            fd = fc
            c = hi - g * (hi - lo)
            br, bf = _boundary_point(c, r0, cs)
            fc = pair(r, f, br, bf, math.nan, cs)[0]
        else:
            lo = c
            c = d
            fc = fd
            d = lo + g * (hi - lo)
            br, bf = _boundary_point(d, r0, cs)
            fd = pair(r, f, br, bf, math.nan, cs)[0]
    return _boundary_point(0.5 * (lo + hi), r0, cs)


@njit(cache=True)
def region_project_arrays(r, f, r0, cs):
    n = r.size
    out_r = np.empty(n)
    out_f = np.empty(n)
    for i in range(n):
        out_r[i], out_f[i] = region_project(r[i], f[i], r0, cs)
    return out_r, out_f


# --------------------------------------------------------------------------
# Gauss-Seidel

@njit(cache=True)
def _local(xr, xf, v, indptr, indices, w, rho, phi, cache, cs):
    F = 0.0
    W = 0.0
    vr = 0.0
    vf = 0.0
    if xr <= 0.0:
        return math.inf, 0.0, 0.0
    for k in range(indptr[v], indptr[v + 1]):
        j = indices[k]
        d, lr, lp, a, J, s = pair(xr, xf, rho[j], phi[j], cache[k], cs)
        if math.isfinite(s):
            cache[k] = s
        F += w[k] * d * d
        W += w[k]
        vr += w[k] * lr
        vf += w[k] * lp
    return F, vr / W, vf / W


@njit(cache=True)
def vertex_update(v, indptr, indices, w, rho, phi, cache, damping, omega, inner_iters, r0, cs):
    """One visit of vertex v.  Returns (move, flagged)."""
    old_r, old_f = rho[v], phi[v]
    xr, xf = old_r, old_f
    if xr <= 0.0:
        # start from the weighted chart average of interior neighbors
        sw = 0.0
        xr = 0.0
        xf = 0.0
        for k in range(indptr[v], indptr[v + 1]):
            j = indices[k]
            if rho[j] > 0.0:
                sw += w[k]
                xr += w[k] * rho[j]
                xf += w[k] * phi[j]
        if sw > 0.0:
            xr /= sw
            xf /= sw
        else:
            xr, xf = 1e-3, 0.0
    F, vr, vf = _local(xr, xf, v, indptr, indices, w, rho, phi, cache, cs)
    flagged = False
    for it in range(inner_iters):
        vn = math.sqrt(vr * vr + xr ** 6 * vf * vf)
        if not (vn > 1e-14 * max(1.0, xr)):
            break
        tau = 2.0 * damping * (omega if it == 0 else 1.0)
        ok = False
        for _bt in range(40):
            tr = xr + tau * vr
            tf = xf + tau * vf
            Fn, gr, gf = _local(tr, tf, v, indptr, indices, w, rho, phi, cache, cs)
            if Fn <= F + 1e-14 * F:
                ok = True
                break
            tau *= 0.5
        if not ok:
            # a failed line search only matters when the predicted decrease
            # W |v|^2 is well above the rounding level of F
            W = 0.0
            for k in range(indptr[v], indptr[v + 1]):
                W += w[k]
            if W * vn * vn > 1e-9 * F:
                flagged = True
            break
        xr, xf, F, vr, vf = tr, tf, Fn, gr, gf
    F0 = 0.0
    for k in range(indptr[v], indptr[v + 1]):
        F0 += w[k] * rho[indices[k]] ** 2
    if F0 < F:
        xr, xf = 0.0, 0.0
    if r0 > 0.0:
        xr, xf = region_project(xr, xf, r0, cs)
    rho[v] = xr
    phi[v] = xf
    move = pair(old_r, old_f, xr, xf, math.nan, cs)[0]
    return move, flagged


@njit(cache=True)
def sweep(order, indptr, indices, w, rho, phi, cache, damping, omega, inner_iters, r0, cs):
    """Visit the vertices in ``order``; returns (max move, flagged count)."""
    mx = 0.0
    nflag = 0
    for v in order:
        m, fl = vertex_update(v, indptr, indices, w, rho, phi, cache, damping, omega, inner_iters, r0, cs)
        if m > mx:
            mx = m
        if fl:
            nflag += 1
    return mx, nflag


@njit(cache=True)
def edge_energy(e0, e1, w, rho, phi, cs):
    tot = 0.0
    for k in range(e0.size):
        d = pair(rho[e0[k]], phi[e0[k]], rho[e1[k]], phi[e1[k]], math.nan, cs)[0]
        tot += w[k] * d * d
    return tot


CS = c_star_series()
