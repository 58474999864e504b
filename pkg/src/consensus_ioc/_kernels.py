"""Compiled inner loops for rollouts, co-state sweeps and gradient assembly.

These mirror the numpy reference functions in ``dynamics``, ``policy`` and
``ioc`` operation for operation; the test-suite cross-checks them.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def locate(a, delta, Delta, h, M):
    if a < delta:
        a = delta
    elif a > Delta:
        a = Delta
    pos = (a - delta) / h
    idx = int(pos)
    if idx > M - 2:
        idx = M - 2
    return idx, pos - idx


@njit(cache=True)
def weight_at(a, delta, Delta, h, values, cum):
    idx, frac = locate(a, delta, Delta, h, values.shape[0])
    u0 = values[idx]
    u1 = values[idx + 1]
    return cum[idx] + h * frac * (u0 + 0.5 * frac * (u1 - u0))


@njit(cache=True)
def slope_at(a, delta, Delta, h, values):
    if a <= delta or a >= Delta:
        return 0.0
    idx, frac = locate(a, delta, Delta, h, values.shape[0])
    return values[idx] + frac * (values[idx + 1] - values[idx])


@njit(cache=True)
def drift_into(X, out, heads, tails, delta, Delta, h, values, cum, goals, gain, eps, literal):
    N, d = X.shape
    for i in range(N):
        for c in range(d):
            out[i, c] = 0.0
    if gain > 0.0:
        for i in range(N):
            r2 = 0.0
            for c in range(d):
                e = goals[i, c] - X[i, c]
                r2 += e * e
            r = math.sqrt(r2)
            if literal and not (r * r * r < eps):
                continue
            scale = gain * math.tanh(r / gain) / r if r > 0.0 else 1.0
            for c in range(d):
                out[i, c] = scale * (goals[i, c] - X[i, c])
    for k in range(heads.shape[0]):
        i = heads[k]
        j = tails[k]
        r2 = 0.0
        for c in range(d):
            z = X[i, c] - X[j, c]
            r2 += z * z
        w = weight_at(math.sqrt(r2), delta, Delta, h, values, cum)
        for c in range(d):
            out[i, c] -= w * (X[i, c] - X[j, c])


@njit(cache=True)
def rollout(x0, n_steps, dt, heads, tails, delta, Delta, h, values, cum, goals, gain, eps,
            literal):
    """RK4 rollout. Returns (states, failed_step); failed_step is -1 on success."""
    N, d = goals.shape
    states = np.empty((n_steps + 1, N * d))
    x = x0.reshape(N, d).copy()
    states[0] = x0
    k1 = np.empty((N, d))
    k2 = np.empty((N, d))
    k3 = np.empty((N, d))
    k4 = np.empty((N, d))
    tmp = np.empty((N, d))
    for n in range(n_steps):
        drift_into(x, k1, heads, tails, delta, Delta, h, values, cum, goals, gain, eps, literal)
        tmp[:] = x + 0.5 * dt * k1
        drift_into(tmp, k2, heads, tails, delta, Delta, h, values, cum, goals, gain, eps, literal)
        tmp[:] = x + 0.5 * dt * k2
        drift_into(tmp, k3, heads, tails, delta, Delta, h, values, cum, goals, gain, eps, literal)
        tmp[:] = x + dt * k3
        drift_into(tmp, k4, heads, tails, delta, Delta, h, values, cum, goals, gain, eps, literal)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        row = x.reshape(-1)
        for q in range(row.shape[0]):
            if not math.isfinite(row[q]):
                return states, n + 1
        states[n + 1] = row
    return states, -1


@njit(cache=True)
def costate_rhs_into(L, X, Xh, out, heads, tails, delta, Delta, h, values, cum, goals, gain,
                     eps, literal, tol):
    N, d = X.shape
    for i in range(N):
        for c in range(d):
            out[i, c] = X[i, c] - Xh[i, c]
    # -(dh/dx)^T lambda; blocks are symmetric
    if gain > 0.0:
        for i in range(N):
            r2 = 0.0
            for c in range(d):
                e = goals[i, c] - X[i, c]
                r2 += e * e
            r = math.sqrt(r2)
            if literal and not (r * r * r < eps):
                for c in range(d):
                    out[i, c] += L[i, c]
                continue
            if r < 1e-8:
                a = 1.0
                b = 0.0
                rs = 1.0
            else:
                rs = r
                a = gain * math.tanh(r / gain) / r
                ch = math.cosh(r / gain)
                b = 1.0 / (ch * ch) - a
            nl = 0.0
            for c in range(d):
                nl += (goals[i, c] - X[i, c]) / rs * L[i, c]
            for c in range(d):
                out[i, c] += a * L[i, c] + b * ((goals[i, c] - X[i, c]) / rs) * nl
    for k in range(heads.shape[0]):
        i = heads[k]
        j = tails[k]
        r2 = 0.0
        cz = 0.0
        for c in range(d):
            z = X[i, c] - X[j, c]
            r2 += z * z
            cz += L[i, c] * z
        a = math.sqrt(r2)
        w = weight_at(a, delta, Delta, h, values, cum)
        sl = slope_at(a, delta, Delta, h, values) / a if a >= tol else 0.0
        for c in range(d):
            v = w * L[i, c] + sl * cz * (X[i, c] - X[j, c])
            out[i, c] += v
            out[j, c] -= v


@njit(cache=True)
def costate_sweep(xs, xh, dt, heads, tails, delta, Delta, h, values, cum, goals, gain, eps,
                  literal, tol):
    """Backward RK4 for the co-state with linearly interpolated half-step states."""
    K1, nd = xs.shape
    N, d = goals.shape
    lams = np.empty((K1, nd))
    lam = (xh[K1 - 1] - xs[K1 - 1]).reshape(N, d).copy()
    lams[K1 - 1] = lam.reshape(-1)
    k1 = np.empty((N, d))
    k2 = np.empty((N, d))
    k3 = np.empty((N, d))
    k4 = np.empty((N, d))
    tmp = np.empty((N, d))
    for n in range(K1 - 2, -1, -1):
        x1 = xs[n + 1].reshape(N, d)
        h1 = xh[n + 1].reshape(N, d)
        x0 = xs[n].reshape(N, d)
        h0 = xh[n].reshape(N, d)
        xm = 0.5 * (x0 + x1)
        hm = 0.5 * (h0 + h1)
        costate_rhs_into(lam, x1, h1, k1, heads, tails, delta, Delta, h, values, cum, goals,
                         gain, eps, literal, tol)
        tmp[:] = lam - 0.5 * dt * k1
        costate_rhs_into(tmp, xm, hm, k2, heads, tails, delta, Delta, h, values, cum, goals,
                         gain, eps, literal, tol)
        tmp[:] = lam - 0.5 * dt * k2
        costate_rhs_into(tmp, xm, hm, k3, heads, tails, delta, Delta, h, values, cum, goals,
                         gain, eps, literal, tol)
        tmp[:] = lam - dt * k3
        costate_rhs_into(tmp, x0, h0, k4, heads, tails, delta, Delta, h, values, cum, goals,
                         gain, eps, literal, tol)
        lam = lam - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        row = lam.reshape(-1)
        for q in range(nd):
            if not math.isfinite(row[q]):
                return lams, n
        lams[n] = row
    return lams, -1


@njit(cache=True)
def interaction_gradient(xs, lams, dt, heads, tails, N, d, delta, Delta, h, M):
    """sum_t tw_t sum_k lambda_i^T (x_i - x_j) * d w_k / d u_q for every grid node q."""
    K1 = xs.shape[0]
    full = np.zeros(M)
    point = np.zeros(M)
    for t in range(K1):
        tw = dt
        if t == 0 or t == K1 - 1:
            tw = 0.5 * dt
        if K1 == 1:
            tw = 0.0
        for k in range(heads.shape[0]):
            i = heads[k]
            j = tails[k]
            r2 = 0.0
            cz = 0.0
            for c in range(d):
                z = xs[t, i * d + c] - xs[t, j * d + c]
                r2 += z * z
                cz += lams[t, i * d + c] * z
            coef = tw * cz
            idx, frac = locate(math.sqrt(r2), delta, Delta, h, M)
            # full trapezoid weights of the nodes 0..idx, then the partial cell
            full[idx] += coef * h
            if idx > 0:
                point[0] -= 0.5 * coef * h
                point[idx] -= 0.5 * coef * h
            else:
                point[0] -= coef * h
            point[idx] += 0.5 * coef * h * frac * (2.0 - frac)
            point[idx + 1] += 0.5 * coef * h * frac * frac
    # reverse cumulative sum: nodes above every visited cell receive exact zeros
    return np.cumsum(full[::-1])[::-1] + point
