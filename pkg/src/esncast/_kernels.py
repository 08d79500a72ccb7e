"""Compiled inner loops for fixed-step integration.

Everything here is numba-jitted and works on plain arrays (CSR triplets for
the reservoir coupling, dense arrays for everything else) so the rest of the
package can stay in ordinary numpy. The Dormand-Prince tableau lives here as
module constants and is shared by the pure-python stepper in `integrate`.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# Dormand-Prince 5(4), 7 stages with the first-same-as-last property. Row j
# of A couples stage j to stages 0..j-1. B is the 5th-order propagating
# solution; E = B - B_hat is the defect against the embedded 4th-order
# solution, used only as an accuracy diagnostic at fixed step size.
DP54_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP54_A = np.zeros((7, 7))
DP54_A[1, 0] = 1 / 5
DP54_A[2, :2] = (3 / 40, 9 / 40)
DP54_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
DP54_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
DP54_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
DP54_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
DP54_B = DP54_A[6].copy()
DP54_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

# Integer codes for the compiled right-hand sides.
LORENZ_CODE = 0
ROSSLER_CODE = 1
DOUBLE_SCROLL_CODE = 2


@njit(cache=True)
def _rhs_chaos(code, p, ts, s, out):
    if code == 0:
        # p = (sigma, rho, beta)
        out[0] = ts * (p[0] * (s[1] - s[0]))
        out[1] = ts * (s[0] * (p[1] - s[2]) - s[1])
        out[2] = ts * (s[0] * s[1] - p[2] * s[2])
    elif code == 1:
        # p = (a, b, c)
        out[0] = ts * (-s[1] - s[2])
        out[1] = ts * (s[0] + p[0] * s[1])
        out[2] = ts * (p[1] + s[2] * (s[0] - p[2]))
    else:
        # p = (r1, r2, r4, ir, alpha)
        dv = s[0] - s[1]
        ih = 2.0 * p[3] * math.sinh(p[4] * dv)
        out[0] = ts * (s[0] / p[0] - dv / p[1] - ih)
        out[1] = ts * (dv / p[1] + ih - s[2])
        out[2] = ts * (s[1] - p[2] * s[2])


@njit(cache=True)
def integrate_chaos(code, p, ts, y0, nsteps, dt):
    """Fixed-step DP54 on one of the chaotic systems, storing every node.

    Returns (states, fail_step); fail_step is -1 on success, otherwise the
    index of the first step that produced a non-finite component.
    """
    y = y0.copy()
    out = np.empty((nsteps + 1, 3))
    out[0] = y
    k = np.empty((7, 3))
    ys = np.empty(3)
    _rhs_chaos(code, p, ts, y, k[0])
    for n in range(nsteps):
        for j in range(1, 6):
            for i in range(3):
                acc = 0.0
                for m in range(j):
                    acc += DP54_A[j, m] * k[m, i]
                ys[i] = y[i] + dt * acc
            _rhs_chaos(code, p, ts, ys, k[j])
        bad = False
        for i in range(3):
            acc = 0.0
            for m in range(6):
                acc += DP54_B[m] * k[m, i]
            v = y[i] + dt * acc
            if not math.isfinite(v):
                bad = True
            ys[i] = v
        if bad:
            return out, n
        _rhs_chaos(code, p, ts, ys, k[6])
        for i in range(3):
            y[i] = ys[i]
            k[0, i] = k[6, i]
        out[n + 1] = y
    return out, -1


@njit(cache=True)
def _advance3(code, p, ts, y, nsteps, dt, k, ys):
    """Advance a 3-vector in place; returns False on non-finite blowup."""
    _rhs_chaos(code, p, ts, y, k[0])
    for n in range(nsteps):
        for j in range(1, 6):
            for i in range(3):
                acc = 0.0
                for m in range(j):
                    acc += DP54_A[j, m] * k[m, i]
                ys[i] = y[i] + dt * acc
            _rhs_chaos(code, p, ts, ys, k[j])
        for i in range(3):
            acc = 0.0
            for m in range(6):
                acc += DP54_B[m] * k[m, i]
            v = y[i] + dt * acc
            if not math.isfinite(v):
                return False
            ys[i] = v
        _rhs_chaos(code, p, ts, ys, k[6])
        for i in range(3):
            y[i] = ys[i]
            k[0, i] = k[6, i]
    return True


@njit(cache=True)
def benettin_pair(code, p, ts, y0, d0, dt, steps_per_interval, n_intervals, n_warmup):
    """Largest Lyapunov exponent by two-trajectory renormalization.

    A fiducial trajectory and a companion offset by d0 are advanced together;
    every `steps_per_interval` steps the separation is measured, its log
    growth accumulated, and the companion pulled back to distance d0. The
    first `n_warmup` intervals are excluded so the separation can align with
    the fastest-growing direction. Returns NaN if either trajectory blows up.
    """
    a = y0.copy()
    b = y0.copy()
    b[0] += d0
    ka = np.empty((7, 3))
    kb = np.empty((7, 3))
    ys = np.empty(3)
    logsum = 0.0
    counted = 0
    for it in range(n_intervals):
        if not _advance3(code, p, ts, a, steps_per_interval, dt, ka, ys):
            return np.nan
        if not _advance3(code, p, ts, b, steps_per_interval, dt, kb, ys):
            return np.nan
        d = 0.0
        for i in range(3):
            d += (b[i] - a[i]) ** 2
        d = math.sqrt(d)
        if d <= 0.0 or not math.isfinite(d):
            return np.nan
        if it >= n_warmup:
            logsum += math.log(d / d0)
            counted += 1
        f = d0 / d
        for i in range(3):
            b[i] = a[i] + (b[i] - a[i]) * f
    return logsum / (counted * steps_per_interval * dt)


@njit(cache=True)
def _u_from_s(logmask, shift, scale, s, u):
    # The log argument is floored: Runge-Kutta stage estimates can overshoot
    # a fast-collapsing positive channel below zero even though the solution
    # itself stays positive (off-attractor transients of the log-z channel).
    # The floored value saturates the input channel for that stage, which the
    # discarded transient washes out; on-attractor stage values never hit it.
    for c in range(3):
        v = s[c]
        if logmask[c] == 1:
            v = math.log(v) if v > 1e-12 else math.log(1e-12)
        u[c] = (v - shift[c]) / scale[c]


@njit(cache=True)
def _rhs_coupled(code, p, ts, logmask, shift, scale,
                 indptr, indices, data, w_in, gamma, y, out, u):
    _rhs_chaos(code, p, ts, y[:3], out[:3])
    _u_from_s(logmask, shift, scale, y[:3], u)
    n_res = w_in.shape[0]
    for i in range(n_res):
        acc = w_in[i, 0] * u[0] + w_in[i, 1] * u[1] + w_in[i, 2] * u[2]
        for e in range(indptr[i], indptr[i + 1]):
            acc += data[e] * y[3 + indices[e]]
        out[3 + i] = gamma * (math.tanh(acc) - y[3 + i])


@njit(cache=True)
def listen_coupled(code, p, ts, logmask, shift, scale,
                   indptr, indices, data, w_in, gamma, s0, nsteps, dt):
    """Co-integrate the chaotic source with the listening reservoir.

    The source occupies the first three components of the augmented state,
    the reservoir (started at zero) the rest; the reservoir sees the
    normalized source signal exactly at every Runge-Kutta substage. Returns
    (reservoir states, normalized input samples, max embedded-error estimate,
    fail_step), with fail_step = -1 on success.
    """
    n_res = w_in.shape[0]
    m = 3 + n_res
    y = np.zeros(m)
    for i in range(3):
        y[i] = s0[i]
    r_states = np.empty((nsteps + 1, n_res))
    u_states = np.empty((nsteps + 1, 3))
    k = np.empty((7, m))
    ys = np.empty(m)
    u = np.empty(3)
    _u_from_s(logmask, shift, scale, y[:3], u)
    u_states[0] = u
    for i in range(n_res):
        r_states[0, i] = 0.0
    _rhs_coupled(code, p, ts, logmask, shift, scale,
                 indptr, indices, data, w_in, gamma, y, k[0], u)
    err_max = 0.0
    for n in range(nsteps):
        for j in range(1, 6):
            for i in range(m):
                acc = 0.0
                for s in range(j):
                    acc += DP54_A[j, s] * k[s, i]
                ys[i] = y[i] + dt * acc
            _rhs_coupled(code, p, ts, logmask, shift, scale,
                         indptr, indices, data, w_in, gamma, ys, k[j], u)
        bad = False
        for i in range(m):
            acc = 0.0
            for s in range(6):
                acc += DP54_B[s] * k[s, i]
            v = y[i] + dt * acc
            if not math.isfinite(v):
                bad = True
            ys[i] = v
        if bad:
            return r_states, u_states, err_max, n
        _rhs_coupled(code, p, ts, logmask, shift, scale,
                     indptr, indices, data, w_in, gamma, ys, k[6], u)
        for i in range(m):
            e = 0.0
            for s in range(7):
                e += DP54_E[s] * k[s, i]
            e = abs(dt * e)
            if e > err_max:
                err_max = e
            y[i] = ys[i]
            k[0, i] = k[6, i]
        _u_from_s(logmask, shift, scale, y[:3], u)
        u_states[n + 1] = u
        for i in range(n_res):
            r_states[n + 1, i] = y[3 + i]
    return r_states, u_states, err_max, -1


@njit(cache=True)
def _rhs_reservoir(indptr, indices, data, w_in, gamma, u, r, out):
    n_res = w_in.shape[0]
    for i in range(n_res):
        acc = w_in[i, 0] * u[0] + w_in[i, 1] * u[1] + w_in[i, 2] * u[2]
        for e in range(indptr[i], indptr[i + 1]):
            acc += data[e] * r[indices[e]]
        out[i] = gamma * (math.tanh(acc) - r[i])


@njit(cache=True)
def listen_interp(indptr, indices, data, w_in, gamma,
                  u_nodes, u_interior, r0, nsteps, dt):
    """Drive the reservoir with a stored input signal.

    u_nodes holds the input at the grid nodes; u_interior[n, j] holds the
    interpolated input at the four interior substage times of step n
    (c = 1/5, 3/10, 4/5, 8/9). Returns (reservoir states, max embedded-error
    estimate, fail_step).
    """
    n_res = w_in.shape[0]
    y = r0.copy()
    r_states = np.empty((nsteps + 1, n_res))
    r_states[0] = y
    k = np.empty((7, n_res))
    ys = np.empty(n_res)
    _rhs_reservoir(indptr, indices, data, w_in, gamma, u_nodes[0], y, k[0])
    err_max = 0.0
    for n in range(nsteps):
        for j in range(1, 6):
            for i in range(n_res):
                acc = 0.0
                for s in range(j):
                    acc += DP54_A[j, s] * k[s, i]
                ys[i] = y[i] + dt * acc
            if j < 5:
                u = u_interior[n, j - 1]
            else:
                u = u_nodes[n + 1]
            _rhs_reservoir(indptr, indices, data, w_in, gamma, u, ys, k[j])
        bad = False
        for i in range(n_res):
            acc = 0.0
            for s in range(6):
                acc += DP54_B[s] * k[s, i]
            v = y[i] + dt * acc
            if not math.isfinite(v):
                bad = True
            ys[i] = v
        if bad:
            return r_states, err_max, n
        _rhs_reservoir(indptr, indices, data, w_in, gamma, u_nodes[n + 1], ys, k[6])
        for i in range(n_res):
            e = 0.0
            for s in range(7):
                e += DP54_E[s] * k[s, i]
            e = abs(dt * e)
            if e > err_max:
                err_max = e
            y[i] = ys[i]
            k[0, i] = k[6, i]
        r_states[n + 1] = y
    return r_states, err_max, -1
