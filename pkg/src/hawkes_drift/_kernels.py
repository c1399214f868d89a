"""Compiled inner loops. Array-in/array-out, no shared state."""

import numpy as np
from numba import njit


@njit(cache=True)
def ou_path(x0, xi, h, noise):
    n, m = noise.shape
    out = np.empty((n + 1, m))
    out[0] = x0
    s = np.sqrt(2.0 * abs(xi)) * np.sqrt(h)
    for k in range(n):
        for j in range(m):
            out[k + 1, j] = out[k, j] - xi * out[k, j] * h + s * noise[k, j]
    return out


@njit(cache=True)
def kramers_path(x0, eta, a, b, s2, h, noise):
    n = noise.shape[0]
    out = np.empty((n + 1, 2))
    out[0, 0] = x0[0]
    out[0, 1] = x0[1]
    s = np.sqrt(s2) * np.sqrt(h)
    for k in range(n):
        x = out[k, 0]
        v = out[k, 1]
        out[k + 1, 0] = x + v * h
        out[k + 1, 1] = v + (-eta * v + a * x - b * x * x * x) * h + s * noise[k, 0]
    return out


@njit(cache=True)
def ogata_thinning(g_grid, t0, h, T, g_plus, alpha, beta, rng, max_events):
    """Exact thinning of the coupled process against the envelope bound.

    g_grid holds the baseline per component at the covariate grid nodes;
    g_plus the per-component envelope upper bounds for the true coefficients.
    Status codes: 0 ok, 1 event buffer full, 2 envelope violated at a
    proposal (violating component index returned in err).
    """
    n_grid, d = g_grid.shape
    gp_total = 0.0
    for i in range(d):
        gp_total += g_plus[i]
    Y = np.zeros((d, d))
    lam = np.empty(d)
    times = np.empty(max_events)
    marks = np.empty(max_events, dtype=np.int64)
    n = 0
    t = 0.0
    ysum = 0.0
    while True:
        bound = gp_total + ysum
        w = rng.exponential() / bound
        tp = t + w
        if tp > T:
            return times, marks, n, 0, -1
        ysum = 0.0
        for i in range(d):
            for j in range(d):
                Y[i, j] *= np.exp(-beta[i, j] * w)
                ysum += Y[i, j]
        t = tp
        idx = int(np.floor((t - t0) / h + 1e-9))
        if idx > n_grid - 1:
            idx = n_grid - 1
        lam_tot = 0.0
        for i in range(d):
            gi = g_grid[idx, i]
            if gi > g_plus[i] + 1e-9:
                return times, marks, n, 2, i
            li = gi
            for j in range(d):
                li += Y[i, j]
            lam[i] = li
            lam_tot += li
        u = rng.random() * bound
        if u <= lam_tot:
            mark = d - 1
            c = 0.0
            for i in range(d):
                c += lam[i]
                if u <= c:
                    mark = i
                    break
            if n >= max_events:
                return times, marks, n, 1, -1
            if n > 0 and t == times[n - 1]:
                t = np.nextafter(t, np.inf)
            times[n] = t
            marks[n] = mark
            n += 1
            for i in range(d):
                Y[i, mark] += alpha[i, mark]
                ysum += alpha[i, mark]


@njit(cache=True)
def likelihood_sweep(times, marks, g_ev, gmu_ev, hmu_ev, mu_off, alpha, beta,
                     T, want_hess):
    """One pass over the events: log-intensity sums, their first and second
    theta-derivatives, the score outer-product sum, and the kernel tail sums
    S0/S1/S2 needed for the compensator and its derivatives.

    The decayed-excitation recursions per (i, j) pair are
        A  (k) = e^{-b dt} (A(k-1) + 1[prev mark = j])
        A1 (k) = e^{-b dt} (A1(k-1) + dt (A(k-1) + 1[...]))
        A2 (k) = e^{-b dt} (A2(k-1) + 2 dt A1(k-1) + dt^2 (A(k-1) + 1[...]))
    so that Y_ij(T_k-) = alpha_ij A_ij(k), dY/dbeta = -alpha A1, and
    d2Y/dbeta2 = alpha A2.

    Status 0 ok; 1 means a nonpositive intensity at event err.
    """
    n = times.shape[0]
    d = alpha.shape[0]
    s = mu_off[d]
    p = s + 2 * d * d
    A = np.zeros((d, d))
    A1 = np.zeros((d, d))
    A2 = np.zeros((d, d))
    S0 = np.zeros((d, d))
    S1 = np.zeros((d, d))
    S2 = np.zeros((d, d))
    grad = np.zeros(p)
    outer = np.zeros((p, p))
    hess = np.zeros((p, p))
    sum_log = 0.0
    idxbuf = np.empty(p, dtype=np.int64)
    valbuf = np.empty(p)
    prev_t = 0.0
    prev_mark = -1
    for k in range(n):
        dt = times[k] - prev_t
        if k > 0:
            for i in range(d):
                for j in range(d):
                    a0 = A[i, j]
                    if j == prev_mark:
                        a0 += 1.0
                    e = np.exp(-beta[i, j] * dt)
                    A2[i, j] = e * (A2[i, j] + 2.0 * dt * A1[i, j] + dt * dt * a0)
                    A1[i, j] = e * (A1[i, j] + dt * a0)
                    A[i, j] = e * a0
        i = marks[k]
        lam = g_ev[k]
        for j in range(d):
            lam += alpha[i, j] * A[i, j]
        if lam <= 0.0:
            return 1, k, sum_log, grad, outer, hess, S0, S1, S2
        inv = 1.0 / lam
        sum_log += np.log(lam)
        qi = mu_off[i + 1] - mu_off[i]
        nt = 0
        for q in range(qi):
            idxbuf[nt] = mu_off[i] + q
            valbuf[nt] = gmu_ev[k, q]
            nt += 1
        for j in range(d):
            idxbuf[nt] = s + i * d + j
            valbuf[nt] = A[i, j]
            nt += 1
        for j in range(d):
            idxbuf[nt] = s + d * d + i * d + j
            valbuf[nt] = -alpha[i, j] * A1[i, j]
            nt += 1
        for a_ in range(nt):
            grad[idxbuf[a_]] += valbuf[a_] * inv
        inv2 = inv * inv
        for a_ in range(nt):
            ia = idxbuf[a_]
            va = valbuf[a_] * inv2
            for b_ in range(nt):
                outer[ia, idxbuf[b_]] += va * valbuf[b_]
        if want_hess:
            for a_ in range(nt):
                ia = idxbuf[a_]
                va = valbuf[a_] * inv2
                for b_ in range(nt):
                    hess[ia, idxbuf[b_]] -= va * valbuf[b_]
            for q1 in range(qi):
                for q2 in range(qi):
                    hess[mu_off[i] + q1, mu_off[i] + q2] += hmu_ev[k, q1, q2] * inv
            for j in range(d):
                ai = s + i * d + j
                bi = s + d * d + i * d + j
                hess[ai, bi] += -A1[i, j] * inv
                hess[bi, ai] += -A1[i, j] * inv
                hess[bi, bi] += alpha[i, j] * A2[i, j] * inv
        u = T - times[k]
        j = marks[k]
        for i2 in range(d):
            e = np.exp(-beta[i2, j] * u)
            S0[i2, j] += 1.0 - e
            S1[i2, j] += u * e
            S2[i2, j] += u * u * e
        prev_t = times[k]
        prev_mark = marks[k]
    return 0, -1, sum_log, grad, outer, hess, S0, S1, S2


@njit(cache=True)
def kernel_compensator_increments(times, marks, alpha, beta):
    """Integral of the summed excitation intensity over each (T_{k-1}, T_k]."""
    n = times.shape[0]
    d = alpha.shape[0]
    Y = np.zeros((d, d))
    out = np.empty(n)
    prev = 0.0
    for k in range(n):
        dt = times[k] - prev
        inc = 0.0
        for i in range(d):
            for j in range(d):
                e = np.exp(-beta[i, j] * dt)
                inc += Y[i, j] * (1.0 - e) / beta[i, j]
                Y[i, j] *= e
        out[k] = inc
        m = marks[k]
        for i in range(d):
            Y[i, m] += alpha[i, m]
        prev = times[k]
    return out
