"""Compiled inner loops. No validation here; callers own the contracts.

All kernels draw from numpy Generator objects passed in by the caller, one per
purpose, so replications and purposes stay on independent Philox streams. No
fastmath: float operation order is part of the reproducibility contract.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# event kinds in logs
KIND_TRANSITION = 0
KIND_TRADE = 1

# run statuses
OK = 0
HIT_MAX_EVENTS = 1
LOG_FULL = 2


@njit(inline="always")
def _alias_pick(prob, alias_idx, gen):
    # one-uniform alias draw: integer part picks the column, fraction the coin
    k = prob.shape[0]
    u = gen.random() * k
    i = int(u)
    if i >= k:
        i = k - 1
    if u - i < prob[i]:
        return i
    return alias_idx[i]


@njit(cache=True, nogil=True)
def run_micro(
    state,
    exc_list,
    exc_pos,
    calm_list,
    calm_pos,
    n_noise,
    up_coef,
    dn_coef,
    herd_coef,
    gm_prob,
    gm_alias,
    lb_prob,
    lb_alias,
    fund,
    dcoef,
    quartic,
    two_point,
    mu_total,
    lam_bar_total,
    c_e,
    alpha_imp,
    inv_sqrt_n,
    fundamental,
    sigma_xi,
    scal,
    ints,
    horizon,
    grid,
    q_out,
    x_out,
    max_events,
    log_on,
    ev_t,
    ev_agent,
    ev_kind,
    ev_flip,
    ev_demand,
    ev_q,
    ev_x,
    gen_wait,
    gen_sel,
    gen_flip,
    gen_xi,
):
    n = state.shape[0]
    n_f = float(n)
    t = scal[0]
    price = scal[1]
    exc = ints[0]
    evc = ints[1]
    n_grid = grid.shape[0]
    log_cap = ev_t.shape[0]
    gi = 0
    done = 0
    logged = 0
    status = OK
    while True:
        if done >= max_events:
            status = HIT_MAX_EVENTS
            break
        nu = mu_total + lam_bar_total + c_e * exc
        t_next = t + gen_wait.exponential() / nu
        if t_next > horizon:
            t = horizon
            break
        while gi < n_grid and grid[gi] < t_next:
            q_out[gi] = exc / n_f
            x_out[gi] = price
            gi += 1
        t = t_next
        u = gen_sel.random() * nu
        m = exc / n_f
        kind = KIND_TRANSITION
        flipped = 0
        demand = np.nan
        agent = -1
        if u < mu_total:
            # the excitement index moves by the population-aggregated law: the
            # up chance carries the calm share (1 - m) of the whole market, the
            # down chance the excited share m, and the herding term enters both
            # sides alike. Agents with beta = eta = 0 (fundamentalists) add
            # nothing to the numerators, so they never flip; the move is pinned
            # on a uniformly chosen eligible agent for the log.
            w = gen_flip.random()
            g = (1.0 - m) * m
            herd = herd_coef * g * g
            p_up = up_coef * (1.0 - m) + herd
            p_dn = dn_coef * m + herd
            if w < p_up:
                flipped = 1
                if exc < n_noise:
                    n_calm = n_noise - exc
                    j = gen_sel.integers(0, n_calm)
                    a = calm_list[j]
                    last = calm_list[n_calm - 1]
                    calm_list[j] = last
                    calm_pos[last] = j
                    calm_pos[a] = -1
                    state[a] = 1
                    exc_pos[a] = exc
                    exc_list[exc] = a
                    agent = a
                # else: every noise trader is already marked; the surplus
                # lives in the count alone and the log keeps agent = -1
                exc += 1
            elif w < p_up + p_dn:
                flipped = 1
                if exc <= n_noise:
                    j = gen_sel.integers(0, exc)
                    a = exc_list[j]
                    state[a] = 0
                    last = exc_list[exc - 1]
                    exc_list[j] = last
                    exc_pos[last] = j
                    exc_pos[a] = -1
                    calm_list[n_noise - exc] = a
                    calm_pos[a] = n_noise - exc
                    agent = a
                exc -= 1
            else:
                agent = _alias_pick(gm_prob, gm_alias, gen_sel)
        else:
            kind = KIND_TRADE
            lam_total = lam_bar_total + c_e * exc
            v = gen_sel.random() * lam_total
            if v < lam_bar_total:
                a = _alias_pick(lb_prob, lb_alias, gen_sel)
            else:
                sz = exc if exc < n_noise else n_noise
                a = exc_list[gen_sel.integers(0, sz)]
            agent = a
            if fund[a] == 1:
                demand = (fundamental - price) * inv_sqrt_n
            else:
                if two_point == 1:
                    xi = sigma_xi if gen_xi.random() < 0.5 else -sigma_xi
                else:
                    xi = gen_xi.normal(0.0, sigma_xi)
                h = m * (1.0 - m)
                if quartic == 1:
                    h = h * h
                demand = xi * dcoef[a] * h
            price = price + alpha_imp * demand
        evc += 1
        done += 1
        if log_on == 1:
            if logged >= log_cap:
                status = LOG_FULL
                break
            ev_t[logged] = t
            ev_agent[logged] = agent
            ev_kind[logged] = kind
            ev_flip[logged] = flipped
            ev_demand[logged] = demand
            ev_q[logged] = exc / n_f
            ev_x[logged] = price
            logged += 1
    if status == OK:
        while gi < n_grid:
            q_out[gi] = exc / n_f
            x_out[gi] = price
            gi += 1
    scal[0] = t
    scal[1] = price
    ints[0] = exc
    ints[1] = evc
    return status, logged


@njit(cache=True, nogil=True)
def tally_one_step(
    exc,
    n,
    up_coef,
    dn_coef,
    herd_coef,
    n_events,
    gen_flip,
):
    # the move coin of the event loop with the excitement held frozen: moves
    # are tallied, never applied
    m = exc / float(n)
    g = (1.0 - m) * m
    herd = herd_coef * g * g
    p_up = up_coef * (1.0 - m) + herd
    p_dn = dn_coef * m + herd
    thresh = p_up + p_dn
    down = 0
    up = 0
    for _ in range(n_events):
        w = gen_flip.random()
        if w < p_up:
            up += 1
        elif w < thresh:
            down += 1
    return down, up


@njit(inline="always")
def _apply_boundary(q, reflect):
    # returns (q, clamped flag); a single reflection suffices for EM overshoots
    if q < 0.0:
        q = -q if reflect == 1 else 0.0
        if q > 1.0:
            q = 1.0
        return q, 1
    if q > 1.0:
        q = 2.0 - q if reflect == 1 else 1.0
        if q < 0.0:
            q = 0.0
        return q, 1
    return q, 0


@njit(cache=True, nogil=True)
def em_q(q0, dt, n_steps, beta, p, vol, reflect, record_steps, q_rec, gen):
    q = q0
    ri = 0
    n_rec = record_steps.shape[0]
    if ri < n_rec and record_steps[ri] == 0:
        q_rec[ri] = q
        ri += 1
    sqdt = np.sqrt(dt)
    clamped = 0
    for step in range(1, n_steps + 1):
        z = gen.normal(0.0, 1.0)
        q = q + beta * (p - q) * dt + vol * q * (1.0 - q) * sqdt * z
        q, c = _apply_boundary(q, reflect)
        clamped += c
        if ri < n_rec and record_steps[ri] == step:
            q_rec[ri] = q
            ri += 1
    return clamped


@njit(cache=True, nogil=True)
def em_q_given(q0, dz, dt, beta, p, vol, reflect):
    # same recursion driven by caller-supplied N(0,1) increments
    q = q0
    sqdt = np.sqrt(dt)
    clamped = 0
    for i in range(dz.shape[0]):
        q = q + beta * (p - q) * dt + vol * q * (1.0 - q) * sqdt * dz[i]
        q, c = _apply_boundary(q, reflect)
        clamped += c
    return q, clamped


@njit(cache=True, nogil=True)
def em_qx(
    q0,
    x0,
    dt,
    n_steps,
    beta,
    p,
    vol,
    lam_f,
    lam_n,
    c_e,
    sigma_xi,
    fundamental,
    reflect,
    record_steps,
    q_rec,
    x_rec,
    gen_b,
    gen_w,
):
    q = q0
    x = x0
    ri = 0
    n_rec = record_steps.shape[0]
    if ri < n_rec and record_steps[ri] == 0:
        q_rec[ri] = q
        x_rec[ri] = x
        ri += 1
    sqdt = np.sqrt(dt)
    clamped = 0
    for step in range(1, n_steps + 1):
        z = gen_b.normal(0.0, 1.0)
        w = gen_w.normal(0.0, 1.0)
        qv = vol * q * (1.0 - q)
        x = x + lam_f * (fundamental - x) * dt + sigma_xi * np.sqrt(lam_n + c_e * q) * qv * sqdt * w
        q = q + beta * (p - q) * dt + qv * sqdt * z
        q, c = _apply_boundary(q, reflect)
        clamped += c
        if ri < n_rec and record_steps[ri] == step:
            q_rec[ri] = q
            x_rec[ri] = x
            ri += 1
    return clamped
