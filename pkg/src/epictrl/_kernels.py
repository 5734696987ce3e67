"""Compiled inner loops.

Every triangular quantity is a flat buffer laid out by
:func:`epictrl.triangular.row_offset`; row ``i`` is date ``t = i + 1``.
State buffers have ``T + 1`` rows, controls and adjoints ``T`` rows.
Status codes: 0 ok, 1 capacity (tau >= 1), 2 empty eligible pool,
3 negative compartment, 4 mass balance, 5 compartment above one.
"""

import numpy as np
from numba import njit

NEG_TOL = 1e-12
MASS_TOL = 1e-10
EMPTY_BIN = 1e-14


@njit(cache=True, inline="always", error_model="numpy")
def _off(i, extra):
    return i * (i + 1) // 2 + i * extra


@njit(cache=True, error_model="numpy")
def _clean(x):
    # Returns (value, ok) with round-off negatives clamped to zero.
    if x < 0.0:
        if x > -NEG_TOL:
            return 0.0, True
        return x, False
    if x > 1.0 + NEG_TOL:
        return x, False
    return x, True


@njit(cache=True, error_model="numpy")
def forward(par, lam, xbar, alpha, T):
    bw, bs, gam = par[0], par[1], par[2]
    ti, th, mi, mh, e0 = par[6], par[7], par[8], par[9], par[14]
    ri = 1.0 - 1.0 / ti
    rh = 1.0 - 1.0 / th
    rho = (1.0 - mi) / ti
    mu = mi / ti
    theta = (1.0 - mh) / th
    dh = mh / th

    n = T + 1
    S = np.zeros(_off(n, 0))
    I = np.zeros(_off(n, 0))
    R = np.zeros(_off(n, 0))
    IT = np.zeros(n)
    RT = np.zeros(n)
    H = np.zeros(n)
    D = np.zeros(n)
    tau = np.zeros(T)
    Sagg = np.zeros(n)
    Iagg = np.zeros(n)
    Ragg = np.zeros(n)
    Shat = np.zeros(T)
    Ihat = np.zeros(T)
    S[0] = 1.0 - e0
    I[0] = e0
    Sagg[0] = 1.0 - e0
    Iagg[0] = e0

    for i in range(T):
        o = _off(i, 0)
        on = _off(i + 1, 0)
        s_tot = 0.0
        i_tot = 0.0
        r_tot = 0.0
        sh = 0.0
        ih = 0.0
        for k in range(i + 1):
            a = alpha[o + k]
            s_tot += S[o + k]
            i_tot += I[o + k]
            r_tot += R[o + k]
            sh += a * S[o + k]
            ih += a * I[o + k]
        Shat[i] = sh
        Ihat[i] = ih
        w = bw * lam[i] * lam[i]
        ni = w * s_tot * i_tot + bs * sh * ih
        elig = gam * (s_tot - ni) + gam * (r_tot + rho * i_tot) + ri * i_tot + ni
        if xbar[i] == 0.0:
            tt = 0.0
        elif elig <= 0.0:
            return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 2, i + 1
        else:
            tt = xbar[i] / elig
        if tt >= 1.0:
            tau[i] = tt
            return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 1, i + 1
        tau[i] = tt
        keep = 1.0 - tt * gam
        ns = 0.0
        new_tested = 0.0
        ss = 0.0
        ii = 0.0
        rr = 0.0
        for k in range(i + 1):
            h = w * i_tot + bs * alpha[o + k] * ih
            nik = S[o + k] * h
            left = S[o + k] - nik
            new_tested += left
            v, ok = _clean(keep * left)
            if not ok:
                return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 3, i + 2
            S[on + k] = v
            ss += v
            v, ok = _clean((1.0 - tt) * (ri * I[o + k] + nik))
            if not ok:
                return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 3, i + 2
            I[on + k] = v
            ii += v
            v, ok = _clean(keep * (R[o + k] + rho * I[o + k]))
            if not ok:
                return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 3, i + 2
            R[on + k] = v
            rr += v
        v, ok = _clean(tt * gam * new_tested)
        if not ok:
            return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 3, i + 2
        S[on + i + 1] = v
        ss += v
        I[on + i + 1] = 0.0
        R[on + i + 1] = 0.0
        vit, ok1 = _clean(ri * IT[i] + tt * (ri * i_tot + ni))
        vrt, ok2 = _clean(RT[i] + rho * IT[i] + theta * H[i] + tt * gam * (r_tot + rho * i_tot))
        vh, ok3 = _clean(rh * H[i] + mu * (i_tot + IT[i]))
        vd, ok4 = _clean(D[i] + dh * H[i])
        if not (ok1 and ok2 and ok3 and ok4):
            return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 3, i + 2
        IT[i + 1] = vit
        RT[i + 1] = vrt
        H[i + 1] = vh
        D[i + 1] = vd
        Sagg[i + 1] = ss
        Iagg[i + 1] = ii
        Ragg[i + 1] = rr
        drift = ss + ii + rr + vit + vrt + vh + vd - 1.0
        if abs(drift) >= MASS_TOL:
            return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 4, i + 2
    Ragg[0] = 0.0
    return S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, 0, 0


@njit(cache=True, error_model="numpy")
def agent_backward(par, p, q, lam, tau, alpha, S, Iagg, Sagg, Shat, Ihat, T):
    """Agent shadow values; returns (SS, II, ITa, RR, RTa, Ha)."""
    bw, bs, gam, c = par[0], par[1], par[2], par[3]
    phip, phim = par[4], par[5]
    ti, th, mi, mh, dA = par[6], par[7], par[8], par[9], par[10]
    ri = 1.0 - 1.0 / ti
    rh = 1.0 - 1.0 / th
    rho = (1.0 - mi) / ti
    mu = mi / ti
    theta = (1.0 - mh) / th

    SS = np.zeros(_off(T, 1))
    II = np.zeros(_off(T, 0))
    RR = np.zeros(_off(T, 0))
    ITa = np.zeros(T)
    RTa = np.zeros(T)
    Ha = np.zeros(T)

    iT = T - 1
    eT = dA ** T * (1.0 + 0.5 * c) * p[iT]
    o1 = _off(iT, 1)
    o0 = _off(iT, 0)
    for k in range(T + 1):
        SS[o1 + k] = eT
    for k in range(T):
        II[o0 + k] = eT
        RR[o0 + k] = eT
    ITa[iT] = eT
    RTa[iT] = eT
    Ha[iT] = eT

    for i in range(T - 2, -1, -1):
        t = i + 1
        u = i + 1  # row of date t+1
        e = dA ** t * (1.0 + 0.5 * c) * p[i]
        f = (1.0 - dA) * dA ** t * q[u]
        tt = tau[u]
        lu = lam[u]
        w = bw * lu * lu
        Iu = Iagg[u]
        Su = Sagg[u]
        ihu = Ihat[u]
        shu = Shat[u]
        ou1 = _off(u, 1)
        ou0 = _off(u, 0)
        oa = _off(u, 0)
        ot1 = _off(i, 1)
        ot0 = _off(i, 0)
        keep = 1.0 - tt * gam
        ss_new = SS[ou1 + u + 1]
        for k in range(u + 1):
            a = alpha[oa + k]
            h = w * Iu + bs * a * ihu
            cont_s = keep * SS[ou1 + k] + tt * gam * ss_new
            delta = cont_s - (1.0 - tt) * II[ou0 + k] - tt * ITa[u]
            flow = lu + 0.5 * c * (1.0 - (1.0 - a) * (1.0 - a))
            SS[ot1 + k] = cont_s - delta * h + e + f * (flow - phip * h)
        for k in range(u):
            a = alpha[oa + k]
            flow = lu + 0.5 * c * (1.0 - (1.0 - a) * (1.0 - a))
            II[ot0 + k] = (ri * ((1.0 - tt) * II[ou0 + k] + tt * ITa[u])
                           + rho * (keep * RR[ou0 + k] + tt * gam * RTa[u])
                           + mu * Ha[u] + e + f * (flow - phim * (w * Su + bs * a * shu)))
            RR[ot0 + k] = keep * RR[ou0 + k] + tt * gam * RTa[u] + e + f * flow
        ITa[i] = ri * ITa[u] + rho * RTa[u] + mu * Ha[u] + e
        RTa[i] = RTa[u] + f * (lu + 0.5 * c) + e
        Ha[i] = rh * Ha[u] + theta * RTa[u] + e
    return SS, II, ITa, RR, RTa, Ha


@njit(cache=True, error_model="numpy")
def omega_weights(par, q, T):
    """Inverse flow-utility weight 1/(c(1-dA)dA^(t-1)q_t); zero where it vanishes."""
    c, dA = par[3], par[10]
    out = np.zeros(T)
    for i in range(T):
        wt = c * (1.0 - dA) * dA ** i * q[i]
        if wt > 0.0:
            out[i] = 1.0 / wt
    return out


@njit(cache=True, error_model="numpy")
def foc_root(M, N, kappa):
    """Root in (0,1) of N(1-a) + kappa(1/a - 1/(1-a)) = M.

    Solved in the per-unit-mass form 1-a + k(1/a - 1/(1-a)) = r with
    k = kappa/N and r = M/N, which is strictly decreasing in a.
    Returns (alpha, residual, iterations).
    """
    if N <= 0.0:
        return 0.5, 0.0, 0
    k = kappa / N
    r = M / N
    lo = 0.0
    hi = 1.0
    # start from the root of whichever barrier term dominates
    a = 0.5 * ((1.0 - r) + np.sqrt((1.0 - r) * (1.0 - r) + 4.0 * k))
    if a > 0.5:
        a = 1.0 - 0.5 * (r + np.sqrt(r * r + 4.0 * k))
    if not (0.0 < a < 1.0):
        a = 0.5
    res = 0.0
    n_it = 400
    for it in range(400):
        b = 1.0 - a
        res = b + k * (1.0 / a - 1.0 / b) - r
        if res == 0.0:
            return a, res, it
        if res > 0.0:
            lo = a
        else:
            hi = a
        if abs(res) < 1e-14:
            n_it = it
            break
        der = -1.0 - k * (1.0 / (a * a) + 1.0 / (b * b))
        an = a - res / der
        if not (lo < an < hi):
            if lo > 0.0 and hi < 1.0:
                if hi / lo > 16.0:
                    an = np.sqrt(lo * hi)
                elif (1.0 - lo) / (1.0 - hi) > 16.0:
                    an = 1.0 - np.sqrt((1.0 - lo) * (1.0 - hi))
                else:
                    an = 0.5 * (lo + hi)
            elif lo == 0.0:
                an = hi * 1e-3 if hi < 0.5 else 0.5 * hi
            else:
                an = 1.0 - (1.0 - lo) * 1e-3 if lo > 0.5 else 0.5 * (1.0 + lo)
        if an == a or hi - lo <= 4e-16 * hi:
            n_it = it
            break
        a = an
    b = 1.0 - a
    res = b + k * (1.0 / a - 1.0 / b) - r
    # settle on the neighbouring double with the smallest residual
    for _ in range(64):
        an = np.nextafter(a, 1.0) if res > 0.0 else np.nextafter(a, 0.0)
        if not (0.0 < an < 1.0):
            break
        bn = 1.0 - an
        rn = bn + k * (1.0 / an - 1.0 / bn) - r
        if abs(rn) >= abs(res):
            break
        a = an
        res = rn
    return a, res, n_it


@njit(cache=True, error_model="numpy")
def best_response(par, q, tau, S, I, R, Shat, Ihat, SS, II, ITa, omega, T):
    """FOC solve for every (t, k); returns (alpha_new, max_residual)."""
    bs, gam, c = par[1], par[2], par[3]
    phip, phim, kappa = par[4], par[5], par[13]
    out = np.empty(_off(T, 0))
    worst = 0.0
    for i in range(T):
        o = _off(i, 0)
        o1 = _off(i, 1)
        tt = tau[i]
        keep = 1.0 - tt * gam
        ih = Ihat[i]
        sh = Shat[i]
        om = omega[i]
        ss_new = SS[o1 + i + 1]
        for k in range(i + 1):
            s = S[o + k]
            x = I[o + k]
            N = s + x + R[o + k]
            delta = keep * SS[o1 + k] + tt * gam * ss_new - (1.0 - tt) * II[o + k] - tt * ITa[i]
            M = bs / c * (phip * s * ih + phim * x * sh) + delta * om * bs * s * ih
            a, res, _ = foc_root(M, N, kappa)
            out[o + k] = a
            if abs(res) > worst:
                worst = abs(res)
    return out, worst


@njit(cache=True, error_model="numpy")
def dual_forward(par, tau, lam, alpha, S, Iagg, Ihat, eta, omega, T):
    """Government duals on the agent adjoint equations, from zero at t=1."""
    bw, bs, gam = par[0], par[1], par[2]
    ti, th, mi, mh = par[6], par[7], par[8], par[9]
    ri = 1.0 - 1.0 / ti
    rh = 1.0 - 1.0 / th
    rho = (1.0 - mi) / ti
    mu = mi / ti
    theta = (1.0 - mh) / th

    Sb = np.zeros(_off(T, 0))
    Ib = np.zeros(_off(T, 0))
    Rb = np.zeros(_off(T, 0))
    ITb = np.zeros(T)
    RTb = np.zeros(T)
    Hb = np.zeros(T)
    for i in range(T - 1):
        o = _off(i, 0)
        on = _off(i + 1, 0)
        tt = tau[i]
        keep = 1.0 - tt * gam
        w = bw * lam[i] * lam[i]
        ih = Ihat[i]
        it_ = Iagg[i]
        om = omega[i]
        moved = 0.0
        inf_tot = 0.0
        ib_tot = 0.0
        rb_tot = 0.0
        for k in range(i + 1):
            h = w * it_ + bs * alpha[o + k] * ih
            g = om * eta[o + k] * bs * S[o + k] * ih
            stay = Sb[o + k] * (1.0 - h) + g
            moved += stay
            inf_k = Sb[o + k] * h - g
            inf_tot += inf_k
            ib_tot += Ib[o + k]
            rb_tot += Rb[o + k]
            Sb[on + k] = keep * stay
            Ib[on + k] = (1.0 - tt) * (ri * Ib[o + k] + inf_k)
            Rb[on + k] = keep * (Rb[o + k] + rho * Ib[o + k])
        Sb[on + i + 1] = tt * gam * moved
        ITb[i + 1] = ri * ITb[i] + tt * (ri * ib_tot + inf_tot)
        RTb[i + 1] = RTb[i] + rho * ITb[i] + theta * Hb[i] + tt * gam * (rb_tot + rho * ib_tot)
        Hb[i + 1] = rh * Hb[i] + mu * (ib_tot + ITb[i])
    return Sb, Ib, ITb, Rb, RTb, Hb


@njit(cache=True, error_model="numpy")
def gov_backward(par, p, q, lam, tau, alpha, S, I, Sagg, Iagg, Shat, Ihat,
                 SS, II, ITa, Sb, Ib, Rb, eta, chi, omega, T):
    """Government shadow values of the aggregate state; returns (GS, GI, GIT, GR, GRT, GH)."""
    bw, bs, gam, c = par[0], par[1], par[2], par[3]
    phip, phim = par[4], par[5]
    ti, th, mi, mh = par[6], par[7], par[8], par[9]
    dA, dG, xi = par[10], par[11], par[12]
    ri = 1.0 - 1.0 / ti
    rh = 1.0 - 1.0 / th
    rho = (1.0 - mi) / ti
    mu = mi / ti
    theta = (1.0 - mh) / th

    GS = np.zeros(_off(T, 1))
    GI = np.zeros(_off(T, 0))
    GR = np.zeros(_off(T, 0))
    GIT = np.zeros(T)
    GRT = np.zeros(T)
    GH = np.zeros(T)

    iT = T - 1
    term = (dG ** T + xi) * p[iT]
    o1 = _off(iT, 1)
    o0 = _off(iT, 0)
    for k in range(T + 1):
        GS[o1 + k] = term
    for k in range(T):
        GI[o0 + k] = term
        GR[o0 + k] = term
    GIT[iT] = term
    GRT[iT] = term
    GH[iT] = term

    for i in range(T - 2, -1, -1):
        t = i + 1
        u = i + 1
        surv = (dG ** t + xi) * p[i]
        base = (1.0 - dG) * dG ** t * lam[u] * q[u] + surv
        f = (1.0 - dA) * dA ** t * q[u]
        tt = tau[u]
        keep = 1.0 - tt * gam
        w = bw * lam[u] * lam[u]
        Iu = Iagg[u]
        Su = Sagg[u]
        ihu = Ihat[u]
        shu = Shat[u]
        om = omega[u]
        ch = chi[u]
        ou1 = _off(u, 1)
        ou0 = _off(u, 0)
        ot1 = _off(i, 1)
        ot0 = _off(i, 0)
        gs_new = GS[ou1 + u + 1]
        as_new = SS[ou1 + u + 1]
        A1 = 0.0
        A2 = 0.0
        C1 = 0.0
        C2 = 0.0
        E1 = 0.0
        E2 = 0.0
        IB1 = 0.0
        IB2 = 0.0
        for m in range(u + 1):
            a = alpha[ou0 + m]
            s = S[ou0 + m]
            dgov = keep * GS[ou1 + m] + tt * gam * gs_new - (1.0 - tt) * GI[ou0 + m] - tt * GIT[u]
            dag = keep * SS[ou1 + m] + tt * gam * as_new - (1.0 - tt) * II[ou0 + m] - tt * ITa[u]
            A1 += dgov * s
            A2 += dgov * a * s
            sb = Sb[ou0 + m]
            C1 += sb * (dag + f * phip)
            C2 += sb * (dag + f * phip) * a
            et = eta[ou0 + m]
            E1 += et * I[ou0 + m]
            E2 += et * (dag * om + phip / c) * s
            IB1 += Ib[ou0 + m]
            IB2 += a * Ib[ou0 + m]
        for j in range(u + 1):
            a = alpha[ou0 + j]
            h = w * Iu + bs * a * ihu
            dgov = keep * GS[ou1 + j] + tt * gam * gs_new - (1.0 - tt) * GI[ou0 + j] - tt * GIT[u]
            dag = keep * SS[ou1 + j] + tt * gam * as_new - (1.0 - tt) * II[ou0 + j] - tt * ITa[u]
            et = eta[ou0 + j]
            GS[ot1 + j] = (base + keep * GS[ou1 + j] + tt * gam * gs_new - dgov * h
                           - f * phim * (w * IB1 + bs * a * IB2)
                           + et * ((dag * om + phip / c) * bs * ihu - (1.0 - a))
                           + bs * phim / c * a * E1
                           + ch * tt * (gam + (1.0 - gam) * h))
        for j in range(u):
            a = alpha[ou0 + j]
            et = eta[ou0 + j]
            GI[ot0 + j] = (base + ri * ((1.0 - tt) * GI[ou0 + j] + tt * GIT[u])
                           + rho * (keep * GR[ou0 + j] + tt * gam * GRT[u]) + mu * GH[u]
                           - (w * A1 + bs * a * A2)
                           - (w * C1 + bs * a * C2)
                           + bs * a * E2 + et * (bs / c * phim * shu - (1.0 - a))
                           + ch * tt * (gam * rho + ri + (1.0 - gam) * (w * Su + bs * a * shu)))
            GR[ot0 + j] = (base + keep * GR[ou0 + j] + tt * gam * GRT[u]
                           - et * (1.0 - a) + ch * tt * gam)
        GIT[i] = surv + ri * GIT[u] + rho * GRT[u] + mu * GH[u]
        GRT[i] = base + GRT[u]
        GH[i] = surv + rh * GH[u] + theta * GRT[u]
    return GS, GI, GIT, GR, GRT, GH


@njit(cache=True, error_model="numpy")
def _solve_rank2(d, Ivec, Svec, u, v, B):
    """Solve (diag(d) + Ivec u^T + Svec v^T) x = B by the Woodbury identity.

    Returns (x, capacitance condition number).
    """
    n = d.size
    z = B / d
    y1 = Ivec / d
    y2 = Svec / d
    c11 = 1.0 + np.dot(u, y1)
    c12 = np.dot(u, y2)
    c21 = np.dot(v, y1)
    c22 = 1.0 + np.dot(v, y2)
    det = c11 * c22 - c12 * c21
    r1 = np.dot(u, z)
    r2 = np.dot(v, z)
    nrm = max(abs(c11) + abs(c12), abs(c21) + abs(c22))
    inv_nrm = max(abs(c22) + abs(c12), abs(c21) + abs(c11)) / abs(det) if det != 0.0 else np.inf
    cond = nrm * inv_nrm
    w1 = (c22 * r1 - c12 * r2) / det
    w2 = (-c21 * r1 + c11 * r2) / det
    x = z - y1 * w1 - y2 * w2
    return x, cond


@njit(cache=True, error_model="numpy")
def lagrangian_pieces(par, q, lam, tau, alpha, S, I, R, Sagg, Iagg, Ragg, Shat, Ihat, RTs,
                      SS, II, ITa, RR, RTa, GS, GI, GIT, GR, GRT,
                      Sb, Ib, Rb, RTb, chi, omega, T):
    """Coefficients of the government Lagrangian in the date-t controls.

    Per bin (flat, T rows): diagonal ``d``, rank-two factors ``u``, ``v``,
    right sides ``B0``, ``B1`` and tau-sensitivity ``g`` of the
    alpha-stationarity system  d*eta + I (u.eta) + S (v.eta) = B0 + chi*B1.
    Per date: lockdown coefficients ``a``, ``b`` (Lagrangian = a*lam - b*lam^2
    + const) and the tau-stationarity terms ``C0``, ``E`` with
    dL/dtau = C0 + eta.g + chi*E.
    """
    bw, bs, gam, c = par[0], par[1], par[2], par[3]
    phip, phim = par[4], par[5]
    ti, mi = par[6], par[8]
    dA, dG, kappa = par[10], par[11], par[13]
    ri = 1.0 - 1.0 / ti
    rho = (1.0 - mi) / ti

    nb = _off(T, 0)
    dv = np.zeros(nb)
    uv = np.zeros(nb)
    vv = np.zeros(nb)
    B0 = np.zeros(nb)
    B1 = np.zeros(nb)
    gk = np.zeros(nb)
    acoef = np.zeros(T)
    bcoef = np.zeros(T)
    C0 = np.zeros(T)
    E = np.zeros(T)
    for i in range(T):
        n = i + 1
        o = _off(i, 0)
        o1 = _off(i, 1)
        tt = tau[i]
        keep = 1.0 - tt * gam
        l = lam[i]
        w = bw * l * l
        St = Sagg[i]
        It = Iagg[i]
        Rt = Ragg[i]
        ih = Ihat[i]
        sh = Shat[i]
        om = omega[i]
        fw = (1.0 - dA) * dA ** i * q[i]
        gs_new = GS[o1 + n]
        as_new = SS[o1 + n]

        sbh = 0.0
        ibh = 0.0
        sb_tot = 0.0
        ib_tot = 0.0
        rb_tot = 0.0
        sum_dgas = 0.0
        sum_dagsb = 0.0
        b_dyn = 0.0
        for k in range(n):
            a = alpha[o + k]
            dgov = keep * GS[o1 + k] + tt * gam * gs_new - (1.0 - tt) * GI[o + k] - tt * GIT[i]
            dag = keep * SS[o1 + k] + tt * gam * as_new - (1.0 - tt) * II[o + k] - tt * ITa[i]
            sbh += a * Sb[o + k]
            ibh += a * Ib[o + k]
            sb_tot += Sb[o + k]
            ib_tot += Ib[o + k]
            rb_tot += Rb[o + k]
            sum_dgas += dgov * a * S[o + k]
            sum_dagsb += dag * a * Sb[o + k]
            b_dyn += dgov * S[o + k] + dag * Sb[o + k]

        acoef[i] = (1.0 - dG) * dG ** i * q[i] * (St + It + Rt + RTs[i]) \
            + fw * (sb_tot + ib_tot + rb_tot + RTb[i])
        bcoef[i] = bw * It * b_dyn + bw * fw * (phip * sb_tot * It + phim * St * ib_tot) \
            - bw * chi[i] * tt * (1.0 - gam) * St * It

        ni = w * St * It + bs * sh * ih
        E[i] = gam * St + gam * Rt + (gam * rho + ri) * It + (1.0 - gam) * ni
        c0 = 0.0
        for k in range(n):
            a = alpha[o + k]
            s = S[o + k]
            x = I[o + k]
            r = R[o + k]
            h = w * It + bs * a * ih
            nik = s * h
            dgov = keep * GS[o1 + k] + tt * gam * gs_new - (1.0 - tt) * GI[o + k] - tt * GIT[i]
            dag = keep * SS[o1 + k] + tt * gam * as_new - (1.0 - tt) * II[o + k] - tt * ITa[i]
            dv[o + k] = s + x + r + kappa * (1.0 / (a * a) + 1.0 / ((1.0 - a) * (1.0 - a)))
            uv[o + k] = bs * (dag * om + phip / c) * s
            vv[o + k] = bs * phim / c * x
            ups = -bs * (dgov * s * ih + x * sum_dgas)
            pib = (fw * c * (1.0 - a) * (Sb[o + k] + Ib[o + k] + Rb[o + k])
                   - fw * bs * (phip * Sb[o + k] * ih + phim * Ib[o + k] * sh
                                + phip * x * sbh + phim * s * ibh)
                   - bs * (dag * Sb[o + k] * ih + x * sum_dagsb))
            B0[o + k] = -(ups + pib)
            B1[o + k] = -tt * (1.0 - gam) * bs * (s * ih + x * sh)
            gk[o + k] = om * bs * s * ih * (gam * (as_new - SS[o1 + k]) - (ITa[i] - II[o + k]))
            c0 += (gam * (gs_new - GS[o1 + k]) * (s - nik)
                   + (GIT[i] - GI[o + k]) * (ri * x + nik)
                   + gam * (GRT[i] - GR[o + k]) * (r + rho * x))
            c0 += (Sb[o + k] * (gam * (as_new - SS[o1 + k]) * (1.0 - h) + h * (ITa[i] - II[o + k]))
                   + Ib[o + k] * (ri * (ITa[i] - II[o + k]) + rho * gam * (RTa[i] - RR[o + k]))
                   + Rb[o + k] * gam * (RTa[i] - RR[o + k]))
        C0[i] = c0
    return dv, uv, vv, B0, B1, gk, acoef, bcoef, C0, E


@njit(cache=True, error_model="numpy")
def solve_rank2(d, Ivec, Svec, u, v, B):
    """Solve (diag(d) + Ivec u^T + Svec v^T) x = B by the Woodbury identity.

    Returns (x, condition number of the 2x2 capacitance matrix), which
    equals the nontrivial part of the condition of the Jacobi-scaled system.
    """
    z = B / d
    y1 = Ivec / d
    y2 = Svec / d
    c11 = 1.0 + np.dot(u, y1)
    c12 = np.dot(u, y2)
    c21 = np.dot(v, y1)
    c22 = 1.0 + np.dot(v, y2)
    det = c11 * c22 - c12 * c21
    nrm = max(abs(c11) + abs(c12), abs(c21) + abs(c22))
    if det == 0.0:
        return z * np.nan, np.inf
    inv_nrm = max(abs(c22) + abs(c12), abs(c21) + abs(c11)) / abs(det)
    r1 = np.dot(u, z)
    r2 = np.dot(v, z)
    w1 = (c22 * r1 - c12 * r2) / det
    w2 = (-c21 * r1 + c11 * r2) / det
    return z - y1 * w1 - y2 * w2, nrm * inv_nrm


@njit(cache=True, error_model="numpy")
def solve_multipliers(S, I, R, dv, uv, vv, B0, B1, gk, C0, E, tau, eta_in, chi_in, T, mode):
    """Multiplier updates from the stationarity conditions.

    mode 0: eta and chi solved jointly; mode 1: eta given ``chi_in``;
    mode 2: chi given ``eta_in``.  Bins with mass below 1e-14 get eta = 0.
    Returns (eta, chi, worst scaled residual, worst condition, status).
    """
    nb = _off(T, 0)
    eta = np.zeros(nb)
    chi = np.zeros(T)
    worst_res = 0.0
    worst_cond = 1.0
    status = 0
    for i in range(T):
        n = i + 1
        o = _off(i, 0)
        na = 0
        for k in range(n):
            if S[o + k] + I[o + k] + R[o + k] >= EMPTY_BIN:
                na += 1
        idx = np.empty(na, dtype=np.int64)
        j = 0
        for k in range(n):
            if S[o + k] + I[o + k] + R[o + k] >= EMPTY_BIN:
                idx[j] = o + k
                j += 1
        d = dv[idx]
        Iv = I[idx]
        Sv = S[idx]
        u = uv[idx]
        v = vv[idx]
        b0 = B0[idx]
        b1 = B1[idx]
        g = gk[idx]
        x0 = np.zeros(na)
        x1 = np.zeros(na)
        if mode != 2 and na > 0:
            x0, c0 = solve_rank2(d, Iv, Sv, u, v, b0)
            x1, c1 = solve_rank2(d, Iv, Sv, u, v, b1)
            if max(c0, c1) > worst_cond:
                worst_cond = max(c0, c1)
        if mode == 0:
            den = E[i] + np.dot(x1, g)
            num = C0[i] + np.dot(x0, g)
            if den > 0.0:
                ch = -num / den
            elif tau[i] == 0.0 and num == 0.0:
                ch = 0.0
            else:
                ch = 0.0
                status = 2
            x = x0 + ch * x1
        elif mode == 1:
            ch = chi_in[i]
            x = x0 + ch * x1
        else:
            x = eta_in[idx]
            if E[i] > 0.0:
                ch = -(C0[i] + np.dot(x, g)) / E[i]
            else:
                ch = 0.0
                if tau[i] > 0.0:
                    status = 2
        chi[i] = ch
        if mode != 2 and na > 0:
            rhs = b0 + ch * b1
            scale = max(1.0, np.max(np.abs(rhs)))
            ux = np.dot(u, x)
            vx = np.dot(v, x)
            res = np.max(np.abs(d * x + Iv * ux + Sv * vx - rhs)) / scale
            if res > worst_res:
                worst_res = res
        for jj in range(na):
            eta[idx[jj]] = x[jj]
    return eta, chi, worst_res, worst_cond, status
