"""Compiled integration kernel (numba), mirroring the numpy reference path.

One call advances the composite state over a span of fixed steps during
which loads are constant; the Python driver handles events, sampling and
error policy.  The math here must stay in lockstep with
`simulator.closed_loop_rhs`: same stage order, same Newton iteration on
the load-bus voltages, same projection and clamping rules.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BARRIER_CAP = 50.0
BARRIER_EDGE = 1e-6
ALG_TOL = 1e-10
ALG_MAX_ITER = 50


@njit(cache=True)
def _injections(th, u, line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                p, q, phi, p_from, p_to):
    n = th.shape[0]
    for k in range(n):
        uu = u[k] * u[k]
        p[k] = shunt_g[k] * uu
        q[k] = -shunt_b[k] * uu
        phi[k] = shunt_g[k] * uu
    for m in range(line_i.shape[0]):
        a = line_i[m]
        b = line_j[m]
        g = line_g[m]
        bl = line_b[m]
        dth = th[a] - th[b]
        c = np.cos(dth)
        s = np.sin(dth)
        ua = u[a]
        ub = u[b]
        uab = ua * ub
        pf = g * ua * ua - uab * (g * c + bl * s)
        pt = g * ub * ub - uab * (g * c - bl * s)
        p[a] += pf
        p[b] += pt
        q[a] += -bl * ua * ua + uab * (bl * c - g * s)
        q[b] += -bl * ub * ub + uab * (bl * c + g * s)
        phi[a] += g * ua * ua - g * uab * c
        phi[b] += g * ub * ub - g * uab * c
        p_from[m] = pf
        p_to[m] = pt


@njit(cache=True)
def _build_jinv(th, u, q, l_idx, l_pos, bdiag,
                line_i, line_j, line_g, line_b, Jinv):
    n_l = l_idx.shape[0]
    J = np.zeros((n_l, n_l))
    for k in range(n_l):
        node = l_idx[k]
        J[k, k] = q[node] / u[node] - bdiag[node] * u[node]
    for m in range(line_i.shape[0]):
        a = line_i[m]
        b = line_j[m]
        pa = l_pos[a]
        pb = l_pos[b]
        if pa >= 0 and pb >= 0:
            g = line_g[m]
            bl = line_b[m]
            dth = th[a] - th[b]
            s = np.sin(dth)
            c = np.cos(dth)
            J[pa, pb] += u[a] * (-g * s + bl * c)
            J[pb, pa] += u[b] * (g * s + bl * c)
    Jinv[:, :] = np.linalg.inv(J)


@njit(cache=True)
def _solve_loads(th, u, q_load, l_idx, l_pos, bdiag,
                 line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                 p, q, phi, p_from, p_to, Jinv, rebuild):
    """Newton on the load-bus voltages with a factored, reusable Jacobian.

    The inverse Jacobian is rebuilt when `rebuild` is set or when the
    iteration has not met tolerance after a few sweeps (the state moves
    so little per stage that one factorization per step suffices).
    Returns the final residual norm (negative if the iteration stalled).
    """
    n_l = l_idx.shape[0]
    if n_l == 0:
        _injections(th, u, line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                    p, q, phi, p_from, p_to)
        return 0.0
    res = np.empty(n_l)
    best = 1e30
    fresh = False
    if rebuild == 1:
        _injections(th, u, line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                    p, q, phi, p_from, p_to)
        _build_jinv(th, u, q, l_idx, l_pos, bdiag,
                    line_i, line_j, line_g, line_b, Jinv)
        fresh = True
    for it in range(ALG_MAX_ITER):
        _injections(th, u, line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                    p, q, phi, p_from, p_to)
        best = 0.0
        for k in range(n_l):
            res[k] = -q_load[l_idx[k]] - q[l_idx[k]]
            a = abs(res[k])
            if a > best:
                best = a
        if best <= ALG_TOL:
            return best
        if it >= 3 and not fresh:
            _build_jinv(th, u, q, l_idx, l_pos, bdiag,
                        line_i, line_j, line_g, line_b, Jinv)
            fresh = True
        for k in range(n_l):
            d = 0.0
            for m2 in range(n_l):
                d += Jinv[k, m2] * res[m2]
            if d > 0.2:
                d = 0.2
            elif d < -0.2:
                d = -0.2
            u[l_idx[k]] += d
    return -best


@njit(cache=True)
def _rhs(x, dx, ul, p_load, q_load,
         starts, g_idx, i_idx, l_idx, gi_idx, l_pos,
         line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
         damping, inertia_gi, xd_diff_g, tau_u_g,
         w_gi, pg_lo, pg_hi, uf_lo, uf_hi, ui_lo, ui_hi,
         ci_a, ci_b, cb_a, cb_b, cb_ca, cb_cb,
         inter_idx, inter_limit, inter_cmin, inter_have,
         Dz, Bz, gains, kappa_fixed, kappa_controlled,
         u, p, q, phi, p_from, p_to, omega, Jinv, rebuild):
    n = u.shape[0]
    n_g = g_idx.shape[0]
    n_i = i_idx.shape[0]
    n_l = l_idx.shape[0]
    n_gi = gi_idx.shape[0]
    m_i = ci_a.shape[0]
    m_b = cb_a.shape[0]
    n_z = Bz.shape[0]
    tau_g = gains[0]
    tau_u = gains[1]
    tau_mu = gains[2]
    tau_lam = gains[3]
    tau_nu = gains[4]
    tau_phi = gains[5]

    th = x[starts[0]:starts[0] + n]
    for k in range(n_g):
        u[g_idx[k]] = x[starts[2] + k]
    for k in range(n_i):
        u[i_idx[k]] = x[starts[5] + k]
    for k in range(n_l):
        u[l_idx[k]] = ul[k]

    alg = _solve_loads(th, u, q_load, l_idx, l_pos, bdiag,
                       line_i, line_j, line_g, line_b, shunt_g, shunt_b,
                       p, q, phi, p_from, p_to, Jinv, rebuild)
    if alg < 0.0:
        return -1
    for k in range(n_l):
        ul[k] = u[l_idx[k]]

    for k in range(n_gi):
        omega[gi_idx[k]] = x[starts[1] + k] / inertia_gi[k]
    for k in range(n_l):
        node = l_idx[k]
        omega[node] = -(p_load[node] + p[node]) / damping[node]

    # physical derivatives
    for k in range(n):
        dx[starts[0] + k] = omega[k]
    for k in range(n_gi):
        node = gi_idx[k]
        dx[starts[1] + k] = (-damping[node] * omega[node] + x[starts[3] + k]
                             - p_load[node] - p[node])
    for k in range(n_g):
        node = g_idx[k]
        dx[starts[2] + k] = (x[starts[4] + k] - u[node]
                             - xd_diff_g[k] * q[node] / u[node]) / tau_u_g[k]

    # producer controllers
    for k in range(n_gi):
        node = gi_idx[k]
        pg = x[starts[3] + k]
        mlo = x[starts[6] + k]
        mhi = x[starts[7] + k]
        dx[starts[3] + k] = (-pg / w_gi[k] + x[starts[12] + node]
                             - omega[node] + mlo - mhi) / tau_g
        r = pg_lo[k] - pg
        dx[starts[6] + k] = (r if (mlo > 0.0 or r >= 0.0) else 0.0) / tau_mu
        r = pg - pg_hi[k]
        dx[starts[7] + k] = (r if (mhi > 0.0 or r >= 0.0) else 0.0) / tau_mu
    for k in range(n_g):
        uf = x[starts[4] + k]
        mlo = x[starts[8] + k]
        mhi = x[starts[9] + k]
        dx[starts[4] + k] = (mlo - mhi) / tau_u
        r = uf_lo[k] - uf
        dx[starts[8] + k] = (r if (mlo > 0.0 or r >= 0.0) else 0.0) / tau_mu
        r = uf - uf_hi[k]
        dx[starts[9] + k] = (r if (mhi > 0.0 or r >= 0.0) else 0.0) / tau_mu
    for k in range(n_i):
        ui = x[starts[5] + k]
        mlo = x[starts[10] + k]
        mhi = x[starts[11] + k]
        dx[starts[5] + k] = (-mlo + mhi) / tau_u
        r = ui_lo[k] - ui
        dx[starts[10] + k] = (r if (mlo > 0.0 or r >= 0.0) else 0.0) / tau_mu
        r = ui - ui_hi[k]
        dx[starts[11] + k] = (r if (mhi > 0.0 or r >= 0.0) else 0.0) / tau_mu

    # coordinator price/consensus dynamics
    for k in range(n):
        dx[starts[12] + k] = phi[k] + p_load[k]
    for k in range(n_gi):
        dx[starts[12] + gi_idx[k]] -= x[starts[3] + k]
    for e in range(m_i):
        nu = x[starts[13] + e]
        dx[starts[12] + ci_a[e]] -= nu
        dx[starts[12] + ci_b[e]] += nu
        dx[starts[13] + e] = (x[starts[12] + ci_a[e]]
                              - x[starts[12] + ci_b[e]]) / tau_nu
    if kappa_controlled == 1:
        for e in range(m_b):
            eta = np.exp(x[starts[14] + cb_ca[e]] - x[starts[14] + cb_cb[e]])
            nu = x[starts[13] + m_i + e]
            dx[starts[12] + cb_a[e]] -= nu
            dx[starts[12] + cb_b[e]] += eta * nu
            dx[starts[13] + m_i + e] = (x[starts[12] + cb_a[e]]
                                        - eta * x[starts[12] + cb_b[e]]) / tau_nu
    else:
        for e in range(m_b):
            eta = kappa_fixed[cb_ca[e]] / kappa_fixed[cb_cb[e]]
            nu = x[starts[13] + m_i + e]
            dx[starts[12] + cb_a[e]] -= nu
            dx[starts[12] + cb_b[e]] += eta * nu
            dx[starts[13] + m_i + e] = (x[starts[12] + cb_a[e]]
                                        - eta * x[starts[12] + cb_b[e]]) / tau_nu
    for k in range(n):
        dx[starts[12] + k] /= tau_lam

    # participation-factor controller
    violated = 0
    for c in range(n_z):
        dx[starts[14] + c] = 0.0
    if kappa_controlled == 1 and inter_idx.shape[0] > 0:
        for e in range(inter_idx.shape[0]):
            m = inter_idx[e]
            pf = p_from[m]
            pt = p_to[m]
            pm = pf if abs(pf) >= abs(pt) else -pt
            if inter_have[e] == 1:
                rate = pm / inter_limit[e]
                a = abs(rate)
                if a >= 1.0 - BARRIER_EDGE:
                    gam = BARRIER_CAP if rate > 0 else -BARRIER_CAP
                    violated = 1
                elif a < inter_cmin[e]:
                    gam = 0.0
                else:
                    gam = rate * (a - inter_cmin[e]) / ((1.0 - a) * (1.0 - inter_cmin[e]))
                    if gam > BARRIER_CAP:
                        gam = BARRIER_CAP
                    elif gam < -BARRIER_CAP:
                        gam = -BARRIER_CAP
                for c in range(n_z):
                    dx[starts[14] + c] -= Dz[c, e] * gam
        for c in range(n_z):
            acc = 0.0
            for c2 in range(n_z):
                acc += Bz[c, c2] * x[starts[14] + c2]
            dx[starts[14] + c] = (dx[starts[14] + c] - acc) / tau_phi
    return violated


@njit(cache=True)
def run_span(x, ul, dt, span, p_load, q_load,
             starts, g_idx, i_idx, l_idx, gi_idx, l_pos,
             line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
             damping, inertia_gi, xd_diff_g, tau_u_g,
             w_gi, pg_lo, pg_hi, uf_lo, uf_hi, ui_lo, ui_hi,
             ci_a, ci_b, cb_a, cb_b, cb_ca, cb_cb,
             inter_idx, inter_limit, inter_cmin, inter_have,
             Dz, Bz, gains, kappa_fixed, kappa_controlled):
    """Advance `span` fixed steps in place; returns 1 if any stage saturated."""
    nx = x.shape[0]
    n = damping.shape[0]
    u = np.empty(n)
    p = np.empty(n)
    q = np.empty(n)
    phi = np.empty(n)
    omega = np.empty(n)
    p_from = np.empty(line_i.shape[0])
    p_to = np.empty(line_i.shape[0])
    k1 = np.empty(nx)
    k2 = np.empty(nx)
    k3 = np.empty(nx)
    k4 = np.empty(nx)
    xs = np.empty(nx)
    n_l = l_idx.shape[0]
    Jinv = np.empty((n_l, n_l))
    mu_lo = starts[6]
    mu_hi = starts[12]
    violated = 0
    for _ in range(span):
        v = _rhs(x, k1, ul, p_load, q_load, starts, g_idx, i_idx, l_idx, gi_idx,
                 l_pos, line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
                 damping, inertia_gi, xd_diff_g, tau_u_g, w_gi, pg_lo, pg_hi,
                 uf_lo, uf_hi, ui_lo, ui_hi, ci_a, ci_b, cb_a, cb_b, cb_ca,
                 cb_cb, inter_idx, inter_limit, inter_cmin, inter_have,
                 Dz, Bz, gains, kappa_fixed, kappa_controlled,
                 u, p, q, phi, p_from, p_to, omega, Jinv, 1)
        if v < 0:
            return -1
        violated |= v
        for k in range(nx):
            xs[k] = x[k] + 0.5 * dt * k1[k]
        v = _rhs(xs, k2, ul, p_load, q_load, starts, g_idx, i_idx, l_idx, gi_idx,
                 l_pos, line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
                 damping, inertia_gi, xd_diff_g, tau_u_g, w_gi, pg_lo, pg_hi,
                 uf_lo, uf_hi, ui_lo, ui_hi, ci_a, ci_b, cb_a, cb_b, cb_ca,
                 cb_cb, inter_idx, inter_limit, inter_cmin, inter_have,
                 Dz, Bz, gains, kappa_fixed, kappa_controlled,
                 u, p, q, phi, p_from, p_to, omega, Jinv, 0)
        if v < 0:
            return -1
        violated |= v
        for k in range(nx):
            xs[k] = x[k] + 0.5 * dt * k2[k]
        v = _rhs(xs, k3, ul, p_load, q_load, starts, g_idx, i_idx, l_idx, gi_idx,
                 l_pos, line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
                 damping, inertia_gi, xd_diff_g, tau_u_g, w_gi, pg_lo, pg_hi,
                 uf_lo, uf_hi, ui_lo, ui_hi, ci_a, ci_b, cb_a, cb_b, cb_ca,
                 cb_cb, inter_idx, inter_limit, inter_cmin, inter_have,
                 Dz, Bz, gains, kappa_fixed, kappa_controlled,
                 u, p, q, phi, p_from, p_to, omega, Jinv, 0)
        if v < 0:
            return -1
        violated |= v
        for k in range(nx):
            xs[k] = x[k] + dt * k3[k]
        v = _rhs(xs, k4, ul, p_load, q_load, starts, g_idx, i_idx, l_idx, gi_idx,
                 l_pos, line_i, line_j, line_g, line_b, shunt_g, shunt_b, bdiag,
                 damping, inertia_gi, xd_diff_g, tau_u_g, w_gi, pg_lo, pg_hi,
                 uf_lo, uf_hi, ui_lo, ui_hi, ci_a, ci_b, cb_a, cb_b, cb_ca,
                 cb_cb, inter_idx, inter_limit, inter_cmin, inter_have,
                 Dz, Bz, gains, kappa_fixed, kappa_controlled,
                 u, p, q, phi, p_from, p_to, omega, Jinv, 0)
        if v < 0:
            return -1
        violated |= v
        sixth = dt / 6.0
        for k in range(nx):
            x[k] += sixth * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        for k in range(mu_lo, mu_hi):
            if x[k] < 0.0:
                x[k] = 0.0
    return violated
