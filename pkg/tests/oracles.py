"""Slow, direct re-implementations used as test oracles.

Everything here works on python lists of per-date bin arrays and follows
the model equations term by term, sharing no code with the compiled
kernels.  Perturbation hooks let finite differences recover shadow values.
"""

import numpy as np


def rates(prm):
    ti, th = prm.t_i, prm.t_h
    return dict(ri=1 - 1 / ti, rh=1 - 1 / th, rho=(1 - prm.m_i) / ti, mu=prm.m_i / ti,
                theta=(1 - prm.m_h) / th, dh=prm.m_h / th)


def alpha_rows(alpha_tri):
    return [alpha_tri.row(t).copy() for t in range(1, alpha_tri.rows + 1)]


def forward(prm, lam, xbar, alpha, T, tau_fixed=None, inject=None):
    """Aggregate behavioral system.

    ``alpha`` is a list of per-date arrays.  ``inject = (s, comp, k, eps)``
    adds ``eps`` to component ``comp`` (bin ``k`` for S/I/R, 1-based) of the
    state at date ``s`` right after it is produced.  With ``tau_fixed`` the
    testing rate is taken as given instead of solved from the test count.
    """
    bw, bs = prm.betas
    g = prm.gamma
    k_ = rates(prm)
    S = [np.array([1 - prm.e0])]
    I = [np.array([prm.e0])]
    R = [np.array([0.0])]
    IT, RT, H = [0.0], [0.0], [0.0]
    tau = np.zeros(T)
    for t in range(1, T + 1):
        s, i, r = S[-1], I[-1], R[-1]
        a = alpha[t - 1]
        w = bw * lam[t - 1] ** 2
        I_tot, S_tot, R_tot = i.sum(), s.sum(), r.sum()
        Ih, Sh = a @ i, a @ s
        haz = w * I_tot + bs * a * Ih
        ninf = s * haz
        NI = ninf.sum()
        if tau_fixed is None:
            elig = g * (S_tot - NI) + g * (R_tot + k_["rho"] * I_tot) + k_["ri"] * I_tot + NI
            tt = xbar[t - 1] / elig if xbar[t - 1] > 0 else 0.0
        else:
            tt = tau_fixed[t - 1]
        tau[t - 1] = tt
        sn = np.append((1 - tt * g) * (s - ninf), tt * g * (S_tot - NI))
        inn = np.append((1 - tt) * (k_["ri"] * i + ninf), 0.0)
        rn = np.append((1 - tt * g) * (r + k_["rho"] * i), 0.0)
        itn = k_["ri"] * IT[-1] + tt * (k_["ri"] * I_tot + NI)
        rtn = RT[-1] + k_["rho"] * IT[-1] + k_["theta"] * H[-1] + tt * g * (R_tot + k_["rho"] * I_tot)
        hn = k_["rh"] * H[-1] + k_["mu"] * (I_tot + IT[-1])
        if inject is not None and inject[0] == t + 1:
            _, comp, kk, eps = inject
            if comp == "S":
                sn[kk - 1] += eps
            elif comp == "I":
                inn[kk - 1] += eps
            elif comp == "R":
                rn[kk - 1] += eps
            elif comp == "IT":
                itn += eps
            elif comp == "RT":
                rtn += eps
            elif comp == "H":
                hn += eps
        S.append(sn)
        I.append(inn)
        R.append(rn)
        IT.append(itn)
        RT.append(rtn)
        H.append(hn)
    D = [1 - (S[t].sum() + I[t].sum() + R[t].sum() + IT[t] + RT[t] + H[t]) for t in range(T + 1)]
    return dict(S=S, I=I, R=R, IT=np.array(IT), RT=np.array(RT), H=np.array(H), D=np.array(D),
                tau=tau, lam=np.asarray(lam, float), alpha=alpha)


def agent_payoff(prm, p, q, agg, ind):
    """Agent payoff for an individual path ``ind`` facing aggregates ``agg``.

    ``ind`` carries its own states and alpha; death is one minus the
    individual's living mass.
    """
    bw, bs = prm.betas
    c, dA = prm.c, prm.delta_a
    T = len(agg["alpha"])
    total = 0.0
    for t in range(1, T + 1):
        lam = agg["lam"][t - 1]
        w = bw * lam * lam
        a = ind["alpha"][t - 1]
        s, i, r = ind["S"][t - 1], ind["I"][t - 1], ind["R"][t - 1]
        it, rt, h = ind["IT"][t - 1], ind["RT"][t - 1], ind["H"][t - 1]
        d = 1 - (s.sum() + i.sum() + r.sum() + it + rt + h)
        sn, inn, rn = ind["S"][t], ind["I"][t], ind["R"][t]
        d_next = 1 - (sn.sum() + inn.sum() + rn.sum() + ind["IT"][t] + ind["RT"][t] + ind["H"][t])
        A = agg["alpha"][t - 1]
        I_agg, S_agg = agg["I"][t - 1].sum(), agg["S"][t - 1].sum()
        Ih, Sh = A @ agg["I"][t - 1], A @ agg["S"][t - 1]
        y = lam * (s.sum() + i.sum() + r.sum() + rt)
        total += (1 - dA) * dA ** (t - 1) * y * q[t - 1] + dA ** t * (1 - d_next) * p[t - 1]
        cost = (1 - dA) * 0.5 * c * dA ** (t - 1) * ((it + h + d) + np.sum((1 - a) ** 2 * (s + i + r))) * q[t - 1]
        cost += 0.5 * c * dA ** t * d_next * p[t - 1]
        cost += (1 - dA) * dA ** (t - 1) * (prm.phi_plus * (w * s.sum() * I_agg + bs * (a @ s) * Ih)
                                           + prm.phi_minus * (w * S_agg * i.sum() + bs * Sh * (a @ i))) * q[t - 1]
        total -= cost
        total += (1 - dA) * c * prm.kappa * dA ** (t - 1) * np.sum(np.log(a) + np.log(1 - a)) * q[t - 1]
    return total


def individual_path(prm, agg, alpha_ind, inject=None):
    """Individual states under frozen aggregate infection pressure and testing."""
    bw, bs = prm.betas
    g = prm.gamma
    k_ = rates(prm)
    T = len(agg["alpha"])
    S = [agg["S"][0].copy()]
    I = [agg["I"][0].copy()]
    R = [agg["R"][0].copy()]
    IT, RT, H = [agg["IT"][0]], [agg["RT"][0]], [agg["H"][0]]
    for t in range(1, T + 1):
        tt = agg["tau"][t - 1]
        lam = agg["lam"][t - 1]
        A = agg["alpha"][t - 1]
        Ih = A @ agg["I"][t - 1]
        I_agg = agg["I"][t - 1].sum()
        a = alpha_ind[t - 1]
        s, i, r = S[-1], I[-1], R[-1]
        haz = bw * lam * lam * I_agg + bs * a * Ih
        ninf = s * haz
        sn = np.append((1 - tt * g) * (s - ninf), tt * g * (s.sum() - ninf.sum()))
        inn = np.append((1 - tt) * (k_["ri"] * i + ninf), 0.0)
        rn = np.append((1 - tt * g) * (r + k_["rho"] * i), 0.0)
        itn = k_["ri"] * IT[-1] + tt * (k_["ri"] * i.sum() + ninf.sum())
        rtn = RT[-1] + k_["rho"] * IT[-1] + k_["theta"] * H[-1] + tt * g * (r.sum() + k_["rho"] * i.sum())
        hn = k_["rh"] * H[-1] + k_["mu"] * (i.sum() + IT[-1])
        if inject is not None and inject[0] == t + 1:
            _, comp, kk, eps = inject
            if comp == "S":
                sn[kk - 1] += eps
            elif comp == "I":
                inn[kk - 1] += eps
            elif comp == "R":
                rn[kk - 1] += eps
            elif comp == "IT":
                itn += eps
            elif comp == "RT":
                rtn += eps
            elif comp == "H":
                hn += eps
        S.append(sn)
        I.append(inn)
        R.append(rn)
        IT.append(itn)
        RT.append(rtn)
        H.append(hn)
    return dict(S=S, I=I, R=R, IT=IT, RT=RT, H=H, alpha=alpha_ind)


def agent_adjoints(prm, p, q, agg, inject=None):
    """Agent shadow values by the backward recursion, written out per family.

    ``inject = (s, comp, k, eps)`` adds ``eps`` to the adjoint of date ``s``
    right after it is computed (used to probe the dual forward system).
    Returns per-date lists: SS (t+1 bins), II (t bins), RR (t bins) and
    scalars ITa, RTa, Ha.
    """
    bw, bs = prm.betas
    g, c, dA = prm.gamma, prm.c, prm.delta_a
    k_ = rates(prm)
    T = len(agg["alpha"])
    eT = dA ** T * (1 + c / 2) * p[T - 1]
    SS = [None] * T
    II = [None] * T
    RR = [None] * T
    ITa = np.zeros(T)
    RTa = np.zeros(T)
    Ha = np.zeros(T)
    SS[T - 1] = np.full(T + 1, eT)
    II[T - 1] = np.full(T, eT)
    RR[T - 1] = np.full(T, eT)
    ITa[T - 1] = RTa[T - 1] = Ha[T - 1] = eT

    def poke(t):
        if inject is not None and inject[0] == t:
            _, comp, kk, eps = inject
            if comp == "S":
                SS[t - 1][kk - 1] += eps
            elif comp == "I":
                II[t - 1][kk - 1] += eps
            elif comp == "R":
                RR[t - 1][kk - 1] += eps
            elif comp == "IT":
                ITa[t - 1] += eps
            elif comp == "RT":
                RTa[t - 1] += eps
            elif comp == "H":
                Ha[t - 1] += eps

    poke(T)
    for t in range(T - 1, 0, -1):
        u = t + 1
        e = dA ** t * (1 + c / 2) * p[t - 1]
        f = (1 - dA) * dA ** t * q[u - 1]
        tt = agg["tau"][u - 1]
        lam = agg["lam"][u - 1]
        w = bw * lam * lam
        A = agg["alpha"][u - 1]
        Iu, Su = agg["I"][u - 1].sum(), agg["S"][u - 1].sum()
        Ih, Sh = A @ agg["I"][u - 1], A @ agg["S"][u - 1]
        Su_ad, Iu_ad, Ru_ad = SS[u - 1], II[u - 1], RR[u - 1]
        delta = (1 - tt * g) * Su_ad[:u] + tt * g * Su_ad[u] - (1 - tt) * Iu_ad - tt * ITa[u - 1]
        haz = w * Iu + bs * A * Ih
        flow = lam + c / 2 * (1 - (1 - A) ** 2)
        SS[t - 1] = ((1 - tt * g) * Su_ad[:u] + tt * g * Su_ad[u] - delta * haz + e
                     + f * (flow - prm.phi_plus * haz))
        II[t - 1] = (k_["ri"] * ((1 - tt) * Iu_ad[:t] + tt * ITa[u - 1])
                     + k_["rho"] * ((1 - tt * g) * Ru_ad[:t] + tt * g * RTa[u - 1])
                     + k_["mu"] * Ha[u - 1] + e
                     + f * (flow[:t] - prm.phi_minus * (w * Su + bs * A[:t] * Sh)))
        RR[t - 1] = (1 - tt * g) * Ru_ad[:t] + tt * g * RTa[u - 1] + e + f * flow[:t]
        ITa[t - 1] = k_["ri"] * ITa[u - 1] + k_["rho"] * RTa[u - 1] + k_["mu"] * Ha[u - 1] + e
        RTa[t - 1] = RTa[u - 1] + f * (lam + c / 2) + e
        Ha[t - 1] = k_["rh"] * Ha[u - 1] + k_["theta"] * RTa[u - 1] + e
        poke(t)
    return dict(SS=SS, II=II, RR=RR, ITa=ITa, RTa=RTa, Ha=Ha)


def agent_foc_scaled(prm, q, agg, ups, t):
    """Per-bin first-order condition as 'benefit minus cost' per unit flow utility."""
    bw, bs = prm.betas
    g, c, dA = prm.gamma, prm.c, prm.delta_a
    tt = agg["tau"][t - 1]
    a = agg["alpha"][t - 1]
    s, i, r = agg["S"][t - 1], agg["I"][t - 1], agg["R"][t - 1]
    Ih, Sh = a @ i, a @ s
    wt = c * (1 - dA) * dA ** (t - 1) * q[t - 1]
    om = 1 / wt if wt > 0 else 0.0
    SS = ups["SS"][t - 1]
    delta = (1 - tt * g) * SS[:t] + tt * g * SS[t] - (1 - tt) * ups["II"][t - 1] - tt * ups["ITa"][t - 1]
    return (delta * om * bs * s * Ih + bs / c * (prm.phi_plus * s * Ih + prm.phi_minus * i * Sh)
            - (1 - a) * (s + i + r) - prm.kappa * (1 / a - 1 / (1 - a)))


def gov_objective(prm, p, q, tr):
    dG, xi = prm.delta_g, prm.xi
    T = len(tr["alpha"])
    val = 0.0
    for t in range(1, T + 1):
        y = tr["lam"][t - 1] * (tr["S"][t - 1].sum() + tr["I"][t - 1].sum() + tr["R"][t - 1].sum() + tr["RT"][t - 1])
        alive = 1 - tr["D"][t]
        val += (1 - dG) * dG ** (t - 1) * y * q[t - 1] + (dG ** t + xi) * alive * p[t - 1]
    return val


def gov_lagrangian(prm, p, q, lam, tau, alpha, xbar, eta_rows, chi, inject_state=None, inject_adj=None):
    """Reduced government Lagrangian with tau held fixed.

    States follow the forward system (optionally perturbed), the agent
    adjoints follow their backward system (optionally perturbed), and the
    multiplier terms on the agent FOC and the testing constraint are added.
    """
    bw, bs = prm.betas
    g = prm.gamma
    k_ = rates(prm)
    T = len(alpha)
    tr = forward(prm, lam, xbar, alpha, T, tau_fixed=tau, inject=inject_state)
    ups = agent_adjoints(prm, p, q, tr, inject=inject_adj)
    val = gov_objective(prm, p, q, tr)
    for t in range(1, T + 1):
        val += eta_rows[t - 1] @ agent_foc_scaled(prm, q, tr, ups, t)
        s, i, r = tr["S"][t - 1], tr["I"][t - 1], tr["R"][t - 1]
        a = alpha[t - 1]
        w = bw * lam[t - 1] ** 2
        NI = w * s.sum() * i.sum() + bs * (a @ s) * (a @ i)
        E = g * (s.sum() - NI) + g * (r.sum() + k_["rho"] * i.sum()) + k_["ri"] * i.sum() + NI
        val += chi[t - 1] * (tau[t - 1] * E - xbar[t - 1])
    return val


def central_diff(fun, h=1e-7):
    return (fun(h) - fun(-h)) / (2 * h)
