# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: closed-form plug family, DOPRI5 orbits, backward transport sweeps.

Call-for-call twin of ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt, hypot, fmin, fmax, pow
from libc.stdlib cimport realloc, free

from . import _closed_forms as cf

cnp.import_array()


cdef enum:
    AMP, RB, RBT, TAU, RC, RS, PARITY, H_ON, LAM, MU, FAM_ON, FAM_S, FAM_M, FAM_RW, DELTA, THALF

cdef enum:
    S_TOP = 0
    S_BOTTOM = 1
    S_XFACE = 2
    S_BUDGET = 3
    S_UNDERFLOW = 4
    S_STALL = 5
    S_OK = 0
    S_EXTENDED = 1
    S_SIDEWAYS = 2
    S_FAILED = 3

EXIT_TOP, EXIT_BOTTOM, X_FACE, BUDGET, UNDERFLOW = 0, 1, 2, 3, 4
T_OK, T_EXTENDED, T_SIDEWAYS, T_FAILED = 0, 1, 2, 3
SNAP_TOL = 1e-12
MAX_STEPS = 5000000

cdef double _SNAP = 1e-12
cdef long _MAXSTEPS = 5000000
cdef double GL_X[12]
cdef double GL_W[12]
cdef double CUM[512 + 1]

assert cf.PANELS == 512 and cf.GL_NODES.size == 12 and cf.NPARAM == 16
for _i in range(12):
    GL_X[_i] = cf.GL_NODES[_i]
    GL_W[_i] = cf.GL_WEIGHTS[_i]
for _i in range(512 + 1):
    CUM[_i] = cf.CUMULATIVE[_i]

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline double bump(double v) noexcept nogil:
    if v <= -1.0 or v >= 1.0:
        return 0.0
    return exp(1.0 - 1.0 / (1.0 - v * v))


cdef inline double bump_d1(double v) noexcept nogil:
    cdef double q
    if v <= -1.0 or v >= 1.0:
        return 0.0
    q = 1.0 - v * v
    return exp(1.0 - 1.0 / q) * (-2.0 * v / (q * q))


cdef double bump_int(double v) noexcept nogil:
    cdef double a = fmin(fabs(v), 1.0)
    cdef int k = <int>(a * 512)
    cdef double left, half, mid, acc = 0.0
    cdef int i
    if k > 512 - 1:
        k = 512 - 1
    left = k / <double>512
    half = 0.5 * (a - left)
    mid = left + half
    for i in range(12):
        acc += GL_W[i] * bump(mid + half * GL_X[i])
    acc = CUM[k] + acc * half
    return acc if v >= 0 else -acc


cdef inline void smooth_step(double u, double* val, double* dval) noexcept nogil:
    cdef double e0 = 0.0, e1 = 0.0, d0 = 0.0, d1 = 0.0, den
    if u > 0.0:
        e0 = exp(-1.0 / u)
        d0 = e0 / (u * u)
    if u < 1.0:
        e1 = exp(-1.0 / (1.0 - u))
        d1 = e1 / ((1.0 - u) * (1.0 - u))
    den = e0 + e1
    val[0] = e0 / den
    dval[0] = (d0 * e1 + e0 * d1) / (den * den)


cdef inline void plateau(double u, double r, double* val, double* dval) noexcept nogil:
    cdef double v, dv, sgn
    smooth_step((2.0 * r - fabs(u)) / r, &v, &dv)
    sgn = 1.0 if u > 0 else (-1.0 if u < 0 else 0.0)
    val[0] = v
    dval[0] = -dv * sgn / r


cdef void eval_point(const double* p, double x, double t, double* out) noexcept nogil:
    """out = (H, Hx, Ht, f, fx, ft, F, fs)."""
    cdef double lam = p[LAM], mu = p[MU]
    cdef double tt = lam * t
    cdef double rb = p[RB], rbt = p[RBT], rc = p[RC], rs = p[RS], tau = p[TAU], h_on = p[H_ON]
    cdef double r = rb / 3.0
    cdef double B = r * (bump_int(x / r) - 0.5 * (bump_int((x - 2 * r) / r) + bump_int((x + 2 * r) / r)))
    cdef double b = bump(x / r) - 0.5 * (bump((x - 2 * r) / r) + bump((x + 2 * r) / r))
    cdef double c = bump((tt - tau) / rc) + bump((tt + tau) / rc)
    cdef double dc = (bump_d1((tt - tau) / rc) + bump_d1((tt + tau) / rc)) / rc
    cdef double bt = bump(x / rbt)
    cdef double dbt = bump_d1(x / rbt) / rbt
    cdef double par = p[PARITY], amp = p[AMP]
    cdef double s = bump((tt - tau) / rs) + par * bump((tt + tau) / rs)
    cdef double ds = (bump_d1((tt - tau) / rs) + par * bump_d1((tt + tau) / rs)) / rs
    cdef double f0 = amp * x * bt * s
    cdef double f0x = amp * (bt + x * dbt) * s
    cdef double f0t = amp * x * bt * ds * lam
    cdef double f, fx, ft, F, fs
    cdef double rw, m, sv, px, dpx, pa, dpa, pb, dpb, beta, beta_x, beta_t, scale
    out[0] = x - h_on * B * c
    out[1] = 1.0 - h_on * b * c
    out[2] = -h_on * B * dc * lam
    if p[FAM_ON] != 0.0:
        rw = p[FAM_RW]
        m = p[FAM_M]
        sv = p[FAM_S]
        plateau(x, rw, &px, &dpx)
        plateau(tt - tau, rw, &pa, &dpa)
        plateau(tt + tau, rw, &pb, &dpb)
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
        f = f0
        fx = f0x
        ft = f0t
        F = 0.0
        fs = 0.0
    out[3] = mu * f
    out[4] = mu * fx
    out[5] = mu * ft
    out[6] = mu * F
    out[7] = mu * fs


# right-hand sides; mode 0 = characteristic field, mode 1 = backward transport
cdef void rhs(const double* p, int mode, double direction, const double* y, double* dy) noexcept nogil:
    cdef double v[8]
    eval_point(p, y[1], y[2], v)
    if mode == 0:
        dy[0] = direction * v[4]
        dy[1] = -direction * v[2]
        dy[2] = direction * v[1]
    else:
        dy[0] = 0.0
        dy[1] = v[2]
        dy[2] = -v[1]
        dy[3] = v[6]
        dy[4] = v[1] * v[7]


cdef struct Result:
    int status
    double elapsed
    long nsteps


cdef struct Recorder:
    double* buf
    long n
    long cap


cdef int record_push(Recorder* rec, double time, const double* y) noexcept nogil:
    cdef double* nb
    if rec.n + 1 > rec.cap:
        nb = <double*>realloc(rec.buf, sizeof(double) * 4 * (rec.cap * 2 + 16))
        if nb == NULL:
            return -1
        rec.buf = nb
        rec.cap = rec.cap * 2 + 16
    rec.buf[4 * rec.n] = time
    rec.buf[4 * rec.n + 1] = y[0]
    rec.buf[4 * rec.n + 2] = y[1]
    rec.buf[4 * rec.n + 3] = y[2]
    rec.n += 1
    return 0


cdef Result integrate(const double* p, int mode, double direction, double* y, int n,
                      double budget, double rtol, double atol, double stall_tol,
                      Recorder* rec) noexcept nogil:
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef double k5[5]
    cdef double k6[5]
    cdef double k7[5]
    cdef double yt[5]
    cdef double yn[5]
    cdef double t_half = p[THALF], delta = p[DELTA]
    cdef double h = 1e-3, en, sc, e, tn, face, fac
    cdef int j, has_face
    cdef Result res
    res.elapsed = 0.0
    res.nsteps = 0
    rhs(p, mode, direction, y, k1)
    if rec != NULL:
        record_push(rec, 0.0, y)
    if y[2] >= t_half and k1[2] > 0:
        res.status = S_TOP
        return res
    if y[2] <= -t_half and k1[2] < 0:
        res.status = S_BOTTOM
        return res
    if mode == 1 and hypot(k1[1], k1[2]) < stall_tol:
        res.status = S_STALL
        return res
    while True:
        if res.elapsed >= budget:
            res.status = S_BUDGET
            return res
        if res.nsteps >= _MAXSTEPS:
            res.status = S_UNDERFLOW
            return res
        if h > budget - res.elapsed:
            h = budget - res.elapsed
        for j in range(n):
            yt[j] = y[j] + h * A21 * k1[j]
        rhs(p, mode, direction, yt, k2)
        for j in range(n):
            yt[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
        rhs(p, mode, direction, yt, k3)
        for j in range(n):
            yt[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
        rhs(p, mode, direction, yt, k4)
        for j in range(n):
            yt[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
        rhs(p, mode, direction, yt, k5)
        for j in range(n):
            yt[j] = y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j])
        rhs(p, mode, direction, yt, k6)
        for j in range(n):
            yn[j] = y[j] + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j])
        rhs(p, mode, direction, yn, k7)
        en = 0.0
        for j in range(n):
            e = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
            sc = atol + rtol * fmax(fabs(y[j]), fabs(yn[j]))
            en += (e / sc) * (e / sc)
        en = sqrt(en / n)
        if en <= 1.0:
            tn = yn[2]
            has_face = 0
            if tn > t_half + _SNAP:
                face = t_half
                has_face = 1
            elif tn < -t_half - _SNAP:
                face = -t_half
                has_face = 1
            if has_face and tn != y[2]:
                h = h * (face - y[2]) / (tn - y[2])
                if h <= 0:
                    h = 1e-15
                continue
            for j in range(n):
                y[j] = yn[j]
                k1[j] = k7[j]
            res.elapsed += h
            res.nsteps += 1
            if rec != NULL:
                record_push(rec, res.elapsed, y)
            if fabs(y[2] - t_half) <= _SNAP and k1[2] >= 0:
                y[2] = t_half
                res.status = S_TOP
                return res
            if fabs(y[2] + t_half) <= _SNAP and k1[2] <= 0:
                y[2] = -t_half
                res.status = S_BOTTOM
                return res
            if fabs(y[1]) >= delta:
                res.status = S_XFACE
                return res
            if mode == 1 and hypot(k1[1], k1[2]) < stall_tol:
                res.status = S_STALL
                return res
            if en == 0.0:
                fac = 5.0
            else:
                fac = fmin(5.0, fmax(0.2, 0.9 * pow(en, -0.2)))
            h *= fac
        else:
            h *= fmax(0.2, 0.9 * pow(en, -0.2))
        if h < 1e-14 * fmax(1.0, res.elapsed):
            res.status = S_UNDERFLOW
            return res


cdef void load_params(object params, double* p) except *:
    cdef cnp.ndarray[double, ndim=1] arr = np.ascontiguousarray(params, dtype=np.float64)
    cdef int i
    if arr.shape[0] != 16:
        raise ValueError("parameter vector has wrong length")
    for i in range(16):
        p[i] = arr[i]


def field_values(params, xs, ts):
    cdef double p[16]
    load_params(params, p)
    cdef double[::1] xv = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    out = np.empty((n, 8))
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(n):
            eval_point(p, xv[i], tv[i], &ov[i, 0])
    return out


def orbit(params, double theta, double x, double t, double direction, double budget,
          double rtol, double atol, bint record):
    cdef double p[16]
    cdef double y[5]
    cdef Recorder rec
    cdef Result res
    load_params(params, p)
    y[0] = theta
    y[1] = x
    y[2] = t
    rec.buf = NULL
    rec.n = 0
    rec.cap = 0
    with nogil:
        res = integrate(p, 0, direction, y, 3, budget, rtol, atol, 0.0, &rec if record else NULL)
    samples = None
    if record:
        samples = np.empty((rec.n, 4))
        for i in range(rec.n):
            samples[i, 0] = rec.buf[4 * i]
            samples[i, 1] = rec.buf[4 * i + 1]
            samples[i, 2] = rec.buf[4 * i + 2]
            samples[i, 3] = rec.buf[4 * i + 3]
        free(rec.buf)
    return res.status, res.elapsed, y[0], y[1], y[2], res.nsteps, samples


def orbit_batch(params, thetas, xs, ts, double direction, double budget, double rtol, double atol):
    cdef double p[16]
    cdef double y[5]
    cdef Result res
    load_params(params, p)
    cdef double[::1] thv = np.ascontiguousarray(thetas, dtype=np.float64).ravel()
    cdef double[::1] xv = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    status = np.empty(n, dtype=np.int64)
    times = np.empty(n)
    out = np.empty((n, 3))
    steps = np.empty(n, dtype=np.int64)
    cdef long long[::1] sv = status
    cdef double[::1] tmv = times
    cdef double[:, ::1] ov = out
    cdef long long[::1] stv = steps
    with nogil:
        for i in range(n):
            y[0] = thv[i]
            y[1] = xv[i]
            y[2] = tv[i]
            res = integrate(p, 0, direction, y, 3, budget, rtol, atol, 0.0, NULL)
            sv[i] = res.status
            tmv[i] = res.elapsed
            stv[i] = res.nsteps
            ov[i, 0] = y[0]
            ov[i, 1] = y[1]
            ov[i, 2] = y[2]
    return status, times, out, steps


cdef double solve_level(const double* p, double level, double t0) noexcept nogil:
    cdef double lo = -p[DELTA], hi = p[DELTA], mid
    cdef double v[8]
    cdef int it
    for it in range(200):
        mid = 0.5 * (lo + hi)
        eval_point(p, mid, t0, v)
        if v[0] < level:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


cdef int transport_point(const double* p, double x, double t, double gamma_offset, double stall_tol,
                         double rtol, double atol, double budget, int depth,
                         double* g, double* k) noexcept nogil:
    cdef double y[5]
    cdef double v[8]
    cdef Result res
    cdef double tc, tp, t0, xg, gg = 0.0, kk = 0.0
    cdef int st
    y[0] = 0.0
    y[1] = x
    y[2] = t
    y[3] = 0.0
    y[4] = 0.0
    res = integrate(p, 1, -1.0, y, 5, budget, rtol, atol, stall_tol, NULL)
    g[0] = y[3]
    k[0] = y[4]
    if res.status == S_BOTTOM:
        return S_OK
    if res.status == S_XFACE or fabs(y[1]) >= p[DELTA]:
        return S_SIDEWAYS
    if res.status == S_STALL and depth < 4:
        tc = p[TAU] / p[LAM]
        tp = tc if y[2] > 0 else -tc
        t0 = tp - gamma_offset
        eval_point(p, y[1], y[2], v)
        xg = solve_level(p, v[0], t0)
        st = transport_point(p, xg, t0, gamma_offset, stall_tol, rtol, atol, budget, depth + 1, &gg, &kk)
        g[0] += gg
        k[0] += kk
        return S_EXTENDED if st == S_OK else st
    return S_FAILED


def transport(params, xs, ts, double gamma_offset, double stall_tol, double rtol, double atol, double budget):
    cdef double p[16]
    load_params(params, p)
    cdef double[::1] xv = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    g = np.empty(n)
    k = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    cdef double[::1] gv = g
    cdef double[::1] kv = k
    cdef long long[::1] sv = status
    with nogil:
        for i in range(n):
            sv[i] = transport_point(p, xv[i], tv[i], gamma_offset, stall_tol, rtol, atol, budget, 0,
                                    &gv[i], &kv[i])
    return g, k, status
