"""Pure-Python kernels: orbit integration and backward transport sweeps.

Mirrors the compiled module ``_kernels`` call for call.  Used when the
extension is unavailable or when SYMPLUG_PURE_PYTHON is set.
"""
from __future__ import annotations

import math

import numpy as np

from . import _closed_forms as cf

EXIT_TOP, EXIT_BOTTOM, X_FACE, BUDGET, UNDERFLOW = 0, 1, 2, 3, 4
T_OK, T_EXTENDED, T_SIDEWAYS, T_FAILED = 0, 1, 2, 3

SNAP_TOL = 1e-12
MAX_STEPS = 5_000_000

_NODES = [float(v) for v in cf.GL_NODES]
_WEIGHTS = [float(v) for v in cf.GL_WEIGHTS]
_CUM = [float(v) for v in cf.CUMULATIVE]
_PANELS = cf.PANELS

# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _bump(v):
    if v <= -1.0 or v >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - v * v))


def _bump_d1(v):
    if v <= -1.0 or v >= 1.0:
        return 0.0
    q = 1.0 - v * v
    return math.exp(1.0 - 1.0 / q) * (-2.0 * v / (q * q))


def _bump_int(v):
    a = min(abs(v), 1.0)
    k = min(int(a * _PANELS), _PANELS - 1)
    left = k / _PANELS
    half = 0.5 * (a - left)
    mid = left + half
    acc = 0.0
    for node, weight in zip(_NODES, _WEIGHTS):
        acc += weight * _bump(mid + half * node)
    val = _CUM[k] + acc * half
    return val if v >= 0 else -val


def _step(u):
    e0 = math.exp(-1.0 / u) if u > 0.0 else 0.0
    e1 = math.exp(-1.0 / (1.0 - u)) if u < 1.0 else 0.0
    d0 = e0 / (u * u) if u > 0.0 else 0.0
    d1 = e1 / ((1.0 - u) * (1.0 - u)) if u < 1.0 else 0.0
    den = e0 + e1
    return e0 / den, (d0 * e1 + e0 * d1) / (den * den)


def _plateau(u, r):
    val, dval = _step((2.0 * r - abs(u)) / r)
    sgn = 1.0 if u > 0 else (-1.0 if u < 0 else 0.0)
    return val, -dval * sgn / r


def eval_point(p, x, t):
    """(H, Hx, Ht, f, fx, ft, F, fs) at one point."""
    lam, mu = p[cf.LAM], p[cf.MU]
    tt = lam * t
    rb, rbt, rc, rs, tau = p[cf.RB], p[cf.RBT], p[cf.RC], p[cf.RS], p[cf.TAU]
    h_on = p[cf.H_ON]
    r = rb / 3.0
    B = r * (_bump_int(x / r) - 0.5 * (_bump_int((x - 2 * r) / r) + _bump_int((x + 2 * r) / r)))
    b = _bump(x / r) - 0.5 * (_bump((x - 2 * r) / r) + _bump((x + 2 * r) / r))
    c = _bump((tt - tau) / rc) + _bump((tt + tau) / rc)
    dc = (_bump_d1((tt - tau) / rc) + _bump_d1((tt + tau) / rc)) / rc
    H = x - h_on * B * c
    Hx = 1.0 - h_on * b * c
    Ht = -h_on * B * dc * lam

    bt = _bump(x / rbt)
    dbt = _bump_d1(x / rbt) / rbt
    par = p[cf.PARITY]
    s = _bump((tt - tau) / rs) + par * _bump((tt + tau) / rs)
    ds = (_bump_d1((tt - tau) / rs) + par * _bump_d1((tt + tau) / rs)) / rs
    amp = p[cf.AMP]
    f0 = amp * x * bt * s
    f0x = amp * (bt + x * dbt) * s
    f0t = amp * x * bt * ds * lam
    if p[cf.FAM_ON] != 0.0:
        rw, m, sv = p[cf.FAM_RW], p[cf.FAM_M], p[cf.FAM_S]
        px, dpx = _plateau(x, rw)
        pa, dpa = _plateau(tt - tau, rw)
        pb, dpb = _plateau(tt + tau, rw)
        beta = m + (1.0 - m) * px * (pa + pb)
        beta_x = (1.0 - m) * dpx * (pa + pb)
        beta_t = (1.0 - m) * px * (dpa + dpb) * lam
        scale = 1.0 - sv * (1.0 - beta)
        f = scale * f0
        fx = scale * f0x + sv * beta_x * f0
        ft = scale * f0t + sv * beta_t * f0
        F = (beta - 1.0) * f0x + beta_x * f0
        fs = (beta - 1.0) * f0
    else:
        f, fx, ft, F, fs = f0, f0x, f0t, 0.0, 0.0
    return H, Hx, Ht, mu * f, mu * fx, mu * ft, mu * F, mu * fs


def field_values(params, xs, ts):
    p = [float(v) for v in params]
    xs = np.asarray(xs, dtype=float).ravel()
    ts = np.asarray(ts, dtype=float).ravel()
    out = np.empty((xs.size, 8))
    for i in range(xs.size):
        out[i] = eval_point(p, float(xs[i]), float(ts[i]))
    return out


# ---------------------------------------------------------------------------
# generic adaptive integrator


def _dp_step(rhs, y, k1, h):
    n = len(y)
    ks = [k1]
    for stage in range(1, 7):
        a = _A[stage]
        yi = [y[j] + h * sum(a[m] * ks[m][j] for m in range(stage)) for j in range(n)]
        ks.append(rhs(yi))
    y_new = yi  # last stage is evaluated at the 5th-order solution (FSAL)
    err = [h * sum(_E[m] * ks[m][j] for m in range(7)) for j in range(n)]
    return y_new, err, ks[6]


def integrate(rhs, y0, t_index, t_half, delta, budget, rtol, atol, record=False, stop=None, h0=1e-3):
    """Adaptive DOPRI5 until a t-face is reached, the budget is spent or ``stop`` fires.

    ``rhs(y)`` returns the derivative list.  Returns
    (status, elapsed, y, nsteps, samples) where status is one of the EXIT_*
    codes above, or 5 when ``stop(y, f(y))`` returned True.
    """
    y = [float(v) for v in y0]
    n = len(y)
    k1 = rhs(y)
    elapsed = 0.0
    h = h0
    nsteps = 0
    samples = [(0.0, *y)] if record else None
    ti = t_index
    if y[ti] >= t_half and k1[ti] > 0:
        return EXIT_TOP, 0.0, y, 0, samples
    if y[ti] <= -t_half and k1[ti] < 0:
        return EXIT_BOTTOM, 0.0, y, 0, samples
    while True:
        if elapsed >= budget:
            return BUDGET, elapsed, y, nsteps, samples
        if nsteps >= MAX_STEPS:
            return UNDERFLOW, elapsed, y, nsteps, samples
        h = min(h, budget - elapsed)
        y_new, err, k_new = _dp_step(rhs, y, k1, h)
        en = 0.0
        for j in range(n):
            sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
            en += (err[j] / sc) ** 2
        en = math.sqrt(en / n)
        if en <= 1.0:
            tn = y_new[ti]
            face = None
            if tn > t_half + SNAP_TOL:
                face = t_half
            elif tn < -t_half - SNAP_TOL:
                face = -t_half
            if face is not None and abs(tn - y[ti]) > 0:
                h = h * (face - y[ti]) / (tn - y[ti])
                if h <= 0:
                    h = 1e-15
                continue
            y, k1 = y_new, k_new
            elapsed += h
            nsteps += 1
            if record:
                samples.append((elapsed, *y))
            if abs(y[ti] - t_half) <= SNAP_TOL and k1[ti] >= 0:
                y[ti] = t_half
                return EXIT_TOP, elapsed, y, nsteps, samples
            if abs(y[ti] + t_half) <= SNAP_TOL and k1[ti] <= 0:
                y[ti] = -t_half
                return EXIT_BOTTOM, elapsed, y, nsteps, samples
            if abs(y[ti - 1]) >= delta:
                return X_FACE, elapsed, y, nsteps, samples
            if stop is not None and stop(y, k1):
                return 5, elapsed, y, nsteps, samples
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * en ** -0.2)
        if h < 1e-14 * max(1.0, elapsed):
            return UNDERFLOW, elapsed, y, nsteps, samples


# ---------------------------------------------------------------------------
# closed-family entry points


def _orbit_rhs(p, direction):
    def rhs(y):
        v = eval_point(p, y[1], y[2])
        return [direction * v[4], -direction * v[2], direction * v[1]]

    return rhs


def orbit(params, theta, x, t, direction, budget, rtol, atol, record):
    p = [float(v) for v in params]
    status, elapsed, y, nsteps, samples = integrate(
        _orbit_rhs(p, float(direction)), (theta, x, t), 2, p[cf.THALF], p[cf.DELTA], budget, rtol, atol, record
    )
    arr = np.asarray(samples, dtype=float) if record else None
    return status, elapsed, y[0], y[1], y[2], nsteps, arr


def orbit_batch(params, thetas, xs, ts, direction, budget, rtol, atol):
    thetas = np.asarray(thetas, dtype=float).ravel()
    xs = np.asarray(xs, dtype=float).ravel()
    ts = np.asarray(ts, dtype=float).ravel()
    n = xs.size
    status = np.empty(n, dtype=np.int64)
    times = np.empty(n)
    out = np.empty((n, 3))
    steps = np.empty(n, dtype=np.int64)
    for i in range(n):
        st, el, th, x, t, ns, _ = orbit(params, thetas[i], xs[i], ts[i], direction, budget, rtol, atol, False)
        status[i], times[i], steps[i] = st, el, ns
        out[i] = (th, x, t)
    return status, times, out, steps


def _solve_level(p, level, t0):
    """x with H(x, t0) = level, by bisection then Newton."""
    delta = p[cf.DELTA]
    lo, hi = -delta, delta
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eval_point(p, mid, t0)[0] < level:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _transport_point(p, x, t, gamma_offset, stall_tol, rtol, atol, budget, depth):
    t_half = p[cf.THALF]
    delta = p[cf.DELTA]

    def rhs(y):
        v = eval_point(p, y[1], y[2])
        # integrating backwards: d(x, t)/ds = -xi_H
        return [0.0, v[2], -v[1], v[6], v[1] * v[7]]

    def stall(y, k):
        return math.hypot(k[1], k[2]) < stall_tol

    y0 = (0.0, x, t, 0.0, 0.0)
    if math.hypot(*rhs(list(y0))[1:3]) < stall_tol:
        status, y = 5, list(y0)
    else:
        status, _, y, _, _ = integrate(rhs, y0, 2, t_half, delta, budget, rtol, atol, False, stall)
    if status == EXIT_BOTTOM:
        return y[3], y[4], T_OK
    if status == X_FACE or abs(y[1]) >= delta:
        return y[3], y[4], T_SIDEWAYS
    if status == 5 and depth < 4:
        tc = p[cf.TAU] / p[cf.LAM]
        tp = tc if y[2] > 0 else -tc
        t0 = tp - gamma_offset
        level = eval_point(p, y[1], y[2])[0]
        xg = _solve_level(p, level, t0)
        g, k, st = _transport_point(p, xg, t0, gamma_offset, stall_tol, rtol, atol, budget, depth + 1)
        return y[3] + g, y[4] + k, (T_EXTENDED if st == T_OK else st)
    return y[3], y[4], T_FAILED


def transport(params, xs, ts, gamma_offset, stall_tol, rtol, atol, budget):
    p = [float(v) for v in params]
    xs = np.asarray(xs, dtype=float).ravel()
    ts = np.asarray(ts, dtype=float).ravel()
    g = np.empty(xs.size)
    k = np.empty(xs.size)
    st = np.empty(xs.size, dtype=np.int64)
    for i in range(xs.size):
        g[i], k[i], st[i] = _transport_point(
            p, float(xs[i]), float(ts[i]), gamma_offset, stall_tol, rtol, atol, budget, 0
        )
    return g, k, st
