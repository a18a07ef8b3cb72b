"""Compiled RK4 for ``x'' = -D x - kappa W sel(P x + d)``.

``sel`` is either the negative part (unilateral springs) or ``lam * g``
(linear estimator). In the unilateral case the right-hand side is linear on
each cell of constant contact pattern, so a step that changes the pattern
is split at the switching time and each piece is integrated with the
pattern frozen. This keeps the fourth-order accuracy that a plain fixed
step loses at every kink.

Optionally accumulates ``int w(theta) phi_1 dtheta`` for ``w = sin, cos``
and ``phi_1 = -qa x_1 + qc (W sel)_1`` with the RK4 stage values, which is
Simpson's rule on every (sub)step.
"""

from __future__ import annotations

import numba
import numpy as np

MAX_SPLITS = 16
ROOT_ITERS = 60


@numba.njit(cache=True)
def _pattern(x, v, P, d, tol, active):
    m = P.shape[0]
    n = x.size
    for s in range(m):
        g = d[s]
        gd = 0.0
        for j in range(n):
            g += P[s, j] * x[j]
            gd += P[s, j] * v[j]
        if g < -tol:
            active[s] = True
        elif g > tol:
            active[s] = False
        else:
            # on the switching surface: the side we are heading into decides
            active[s] = gd < 0.0 or (gd == 0.0 and g < 0.0)


@numba.njit(cache=True)
def _rhs(x, D, W, P, d, lam, use_h, kappa, active, out, nl):
    n = x.size
    m = P.shape[0]
    for j in range(n):
        nl[j] = 0.0
    for s in range(m):
        if use_h or active[s]:
            g = d[s]
            for j in range(n):
                g += P[s, j] * x[j]
            if use_h:
                g *= lam[s]
            for j in range(n):
                nl[j] += W[j, s] * g
    for j in range(n):
        acc = -kappa * nl[j]
        for q in range(n):
            acc -= D[j, q] * x[q]
        out[j] = acc


@numba.njit(cache=True)
def _frozen_step(x, v, tau, t0, D, W, P, d, lam, use_h, kappa, active,
                 qa, qc, xo, vo, qinc, ks, xt, nl):
    """One RK4 (Nystrom form) step of length ``tau`` with the pattern frozen."""
    n = x.size
    qinc[0] = 0.0
    qinc[1] = 0.0
    for stage in range(4):
        if stage == 0:
            for j in range(n):
                xt[j] = x[j]
            ts = t0
            wq = 1.0
        elif stage == 1:
            for j in range(n):
                xt[j] = x[j] + 0.5 * tau * v[j]
            ts = t0 + 0.5 * tau
            wq = 2.0
        elif stage == 2:
            for j in range(n):
                xt[j] = x[j] + 0.5 * tau * v[j] + 0.25 * tau * tau * ks[0, j]
            ts = t0 + 0.5 * tau
            wq = 2.0
        else:
            for j in range(n):
                xt[j] = x[j] + tau * v[j] + 0.5 * tau * tau * ks[1, j]
            ts = t0 + tau
            wq = 1.0
        _rhs(xt, D, W, P, d, lam, use_h, kappa, active, ks[stage], nl)
        phi1 = -qa * xt[0] + qc * nl[0]
        qinc[0] += wq * np.sin(ts) * phi1
        qinc[1] += wq * np.cos(ts) * phi1
    for j in range(n):
        xo[j] = x[j] + tau * v[j] + tau * tau / 6.0 * (ks[0, j] + ks[1, j] + ks[2, j])
        vo[j] = v[j] + tau / 6.0 * (ks[0, j] + 2.0 * ks[1, j] + 2.0 * ks[2, j] + ks[3, j])
    qinc[0] *= tau / 6.0
    qinc[1] *= tau / 6.0


@numba.njit(cache=True)
def _strain(x, P, d, s):
    g = d[s]
    for j in range(x.size):
        g += P[s, j] * x[j]
    return g


@numba.njit(cache=True)
def integrate_piecewise(D, W, P, d, lam, use_h, kappa, qa, qc, x0, v0, span, N, out, quad):
    """Integrate over ``[0, span]`` on ``N`` uniform steps; fills ``out`` and ``quad``."""
    n = x0.size
    m = P.shape[0]
    h = span / N
    x = x0.copy()
    v = v0.copy()
    xo = np.empty(n)
    vo = np.empty(n)
    xr = np.empty(n)
    vr = np.empty(n)
    ks = np.empty((4, n))
    xt = np.empty(n)
    nl = np.empty(n)
    qinc = np.zeros(2)
    active = np.zeros(m, dtype=np.bool_)
    qtr = np.zeros(2)
    scale = 1.0
    for j in range(n):
        scale = max(scale, abs(x0[j]))
    tol = 1e-13 * scale
    quad[0] = 0.0
    quad[1] = 0.0
    out[0, :n] = x
    out[0, n:] = v
    for i in range(N):
        t0 = i * h
        remaining = h
        for split in range(MAX_SPLITS + 1):
            _pattern(x, v, P, d, tol, active)
            _frozen_step(x, v, remaining, t0, D, W, P, d, lam, use_h, kappa, active,
                         qa, qc, xo, vo, qinc, ks, xt, nl)
            if use_h or split == MAX_SPLITS:
                break
            # earliest switching time among springs whose side changed
            tau_min = remaining
            hit = False
            for s in range(m):
                g1 = _strain(xo, P, d, s)
                if (g1 < -tol) == active[s] or abs(g1) <= tol:
                    continue
                lo = 0.0
                hi = remaining
                g_lo = _strain(x, P, d, s)
                tau = remaining * g_lo / (g_lo - g1) if g_lo != g1 else 0.5 * remaining
                for _ in range(ROOT_ITERS):
                    _frozen_step(x, v, tau, t0, D, W, P, d, lam, use_h, kappa, active,
                                 qa, qc, xr, vr, qtr, ks, xt, nl)
                    g = _strain(xr, P, d, s)
                    gd = 0.0
                    for j in range(n):
                        gd += P[s, j] * vr[j]
                    if (g < 0.0) == (g_lo < 0.0):
                        lo = tau
                    else:
                        hi = tau
                    step = -g / gd if gd != 0.0 else 0.5 * (hi - lo)
                    nxt = tau + step
                    if not (lo < nxt < hi):
                        nxt = 0.5 * (lo + hi)
                    if abs(nxt - tau) <= 1e-15 * h or hi - lo <= 1e-15 * h:
                        tau = nxt
                        break
                    tau = nxt
                if tau < tau_min:
                    tau_min = tau
                    hit = True
            if not hit:
                break
            _frozen_step(x, v, tau_min, t0, D, W, P, d, lam, use_h, kappa, active,
                         qa, qc, xo, vo, qinc, ks, xt, nl)
            quad[0] += qinc[0]
            quad[1] += qinc[1]
            for j in range(n):
                x[j] = xo[j]
                v[j] = vo[j]
            t0 += tau_min
            remaining -= tau_min
            if remaining <= 1e-15 * h:
                remaining = 0.0
                break
        if remaining > 0.0:
            quad[0] += qinc[0]
            quad[1] += qinc[1]
            for j in range(n):
                x[j] = xo[j]
                v[j] = vo[j]
        out[i + 1, :n] = x
        out[i + 1, n:] = v
