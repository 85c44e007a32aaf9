# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: RK4 interval integration with event bisection and
the scalar S-procedure multiplier search.

Both routines mirror :mod:`etcabs._pykernels` step for step; the two are
compared against each other in the test-suite.
"""
import numpy as np

from libc.math cimport sin, fabs, sqrt, isfinite
from libc.stdlib cimport malloc, free


cdef inline double _wave(int periodic, double freq, double phase, double t) nogil:
    if periodic:
        return sin(freq * t + phase)
    return 1.0


cdef void _deriv(int n, const double* A, const double* c, const double* e,
                 double w, const double* x, double* out) nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = c[i] + e[i] * w
        for k in range(n):
            s += A[i * n + k] * x[k]
        out[i] = s


cdef void _rk4(int n, const double* A, const double* c, const double* e,
               int periodic, double freq, double phase, double t, double h,
               const double* x0, double* xout, double* work) nogil:
    cdef double* k1 = work
    cdef double* k2 = work + n
    cdef double* k3 = work + 2 * n
    cdef double* k4 = work + 3 * n
    cdef double* tmp = work + 4 * n
    cdef int i
    _deriv(n, A, c, e, _wave(periodic, freq, phase, t), x0, k1)
    for i in range(n):
        tmp[i] = x0[i] + 0.5 * h * k1[i]
    _deriv(n, A, c, e, _wave(periodic, freq, phase, t + 0.5 * h), tmp, k2)
    for i in range(n):
        tmp[i] = x0[i] + 0.5 * h * k2[i]
    _deriv(n, A, c, e, _wave(periodic, freq, phase, t + 0.5 * h), tmp, k3)
    for i in range(n):
        tmp[i] = x0[i] + h * k3[i]
    _deriv(n, A, c, e, _wave(periodic, freq, phase, t + h), tmp, k4)
    for i in range(n):
        xout[i] = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


cdef double _gval(int n, const double* M, const double* x, const double* xi,
                  double thr, double* eps) nogil:
    cdef int i, k
    cdef double s = 0.0
    for i in range(n):
        eps[i] = x[i] - xi[i]
    for i in range(n):
        for k in range(n):
            s += eps[i] * M[i * n + k] * eps[k]
    return s - thr


def integrate_interval(A, c, e, int periodic, double freq, double phase, M,
                       double thr, x, double dt, double tol, double cap):
    """Integrate one inter-sample interval until the trigger fires or ``cap``.

    Returns ``(tau, xi, cap_hit, wave_max)``.
    """
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double* buf = <double*>malloc(9 * n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* xi = buf
    cdef double* xn = buf + n
    cdef double* work = buf + 2 * n
    cdef double* eps = buf + 7 * n
    cdef double* xm = buf + 8 * n
    cdef double t = 0.0, h, g, lo, hi, mid, w, wmax = 0.0
    cdef int i, cap_hit = 0, blown = 0
    try:
        with nogil:
            for i in range(n):
                xi[i] = xv[i]
            while True:
                h = dt
                if t + h >= cap:
                    h = cap - t
                if h <= 0.0:
                    cap_hit = 1
                    break
                _rk4(n, &Av[0, 0], &cv[0], &ev[0], periodic, freq, phase,
                     t, h, xi, xn, work)
                for i in range(n):
                    if not isfinite(xn[i]):
                        blown = 1
                if blown:
                    break
                w = fabs(_wave(periodic, freq, phase, t))
                if w > wmax:
                    wmax = w
                w = fabs(_wave(periodic, freq, phase, t + 0.5 * h))
                if w > wmax:
                    wmax = w
                g = _gval(n, &Mv[0, 0], &xv[0], xn, thr, eps)
                if g >= 0.0:
                    lo = 0.0
                    hi = h
                    while hi - lo > tol:
                        mid = 0.5 * (lo + hi)
                        _rk4(n, &Av[0, 0], &cv[0], &ev[0], periodic, freq,
                             phase, t, mid, xi, xm, work)
                        if _gval(n, &Mv[0, 0], &xv[0], xm, thr, eps) >= 0.0:
                            hi = mid
                        else:
                            lo = mid
                    if hi < h:
                        _rk4(n, &Av[0, 0], &cv[0], &ev[0], periodic, freq,
                             phase, t, hi, xi, xn, work)
                    t = t + hi
                    for i in range(n):
                        xi[i] = xn[i]
                    break
                t = t + h
                for i in range(n):
                    xi[i] = xn[i]
                if t >= cap:
                    t = cap
                    cap_hit = 1
                    break
        if blown:
            raise FloatingPointError("state became non-finite during integration")
        for i in range(n):
            ov[i] = xi[i]
    finally:
        free(buf)
    return t, out, bool(cap_hit), wmax


cdef double _jacobi_lmax(int d, const double* S, double* a) nogil:
    cdef int p, q, k, sweep
    cdef double off, tot, apq, theta, tt, cs, sn, akp, akq, apk, aqk, best
    for k in range(d * d):
        a[k] = S[k]
    for sweep in range(60):
        off = 0.0
        tot = 0.0
        for p in range(d):
            for q in range(d):
                if p != q:
                    off += a[p * d + q] * a[p * d + q]
                tot += a[p * d + q] * a[p * d + q]
        if off <= 1e-30 * tot or off == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p * d + q]
                if apq == 0.0:
                    continue
                theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq)
                if theta >= 0.0:
                    tt = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    tt = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                cs = 1.0 / sqrt(tt * tt + 1.0)
                sn = tt * cs
                for k in range(d):
                    akp = a[k * d + p]
                    akq = a[k * d + q]
                    a[k * d + p] = cs * akp - sn * akq
                    a[k * d + q] = sn * akp + cs * akq
                for k in range(d):
                    apk = a[p * d + k]
                    aqk = a[q * d + k]
                    a[p * d + k] = cs * apk - sn * aqk
                    a[q * d + k] = sn * apk + cs * aqk
    best = a[0]
    for k in range(1, d):
        if a[k * d + k] > best:
            best = a[k * d + k]
    return best


cdef double _shifted_lmax(int d, int n, const double* B, const double* Q,
                          double alpha, double* S, double* a) nogil:
    cdef int i, k
    for k in range(d * d):
        S[k] = B[k]
    for i in range(n):
        for k in range(n):
            S[i * d + k] += alpha * Q[i * n + k]
    return _jacobi_lmax(d, S, a)


def sym_lmax(S):
    """Largest eigenvalue of a small symmetric matrix (cyclic Jacobi)."""
    cdef const double[:, ::1] Sv = np.ascontiguousarray(S, dtype=np.float64)
    cdef int d = Sv.shape[0]
    cdef double* a = <double*>malloc(d * d * sizeof(double))
    cdef double r
    if a == NULL:
        raise MemoryError()
    with nogil:
        r = _jacobi_lmax(d, &Sv[0, 0], a)
    free(a)
    return r


def cone_min_lmax(block, Q, double tol=1e-9, double alpha_cap=1099511627776.0):
    """Minimise ``lmax(block + alpha*diag(Q, 0))`` over ``alpha >= 0``.

    Returns ``(fmin, alpha)``; stops early once ``fmin <= tol``.
    """
    cdef const double[:, ::1] Bv = np.ascontiguousarray(block, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef int d = Bv.shape[0]
    cdef int n = Qv.shape[0]
    cdef double* S = <double*>malloc(2 * d * d * sizeof(double))
    if S == NULL:
        raise MemoryError()
    cdef double* a = S + d * d
    cdef double f0, fa, fb, fc, fd, lo, hi, prev_alpha, alpha, fprev, xc, xd
    cdef double best_f, best_a
    cdef double gr = 0.6180339887498949
    cdef int it
    with nogil:
        f0 = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], 0.0, S, a)
        best_f = f0
        best_a = 0.0
        if f0 > tol:
            lo = 0.0
            prev_alpha = 0.0
            fprev = f0
            alpha = 1.0
            while True:
                fa = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], alpha, S, a)
                if fa < best_f:
                    best_f = fa
                    best_a = alpha
                if fa <= tol or fa >= fprev or alpha >= alpha_cap:
                    break
                lo = prev_alpha
                prev_alpha = alpha
                fprev = fa
                alpha = alpha * 8.0
            hi = alpha
            if best_f > tol:
                xc = hi - gr * (hi - lo)
                xd = lo + gr * (hi - lo)
                fc = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], xc, S, a)
                fd = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], xd, S, a)
                for it in range(200):
                    if fc < best_f:
                        best_f = fc
                        best_a = xc
                    if fd < best_f:
                        best_f = fd
                        best_a = xd
                    if best_f <= tol or hi - lo <= 1e-13 * (1.0 + hi):
                        break
                    if fc <= fd:
                        hi = xd
                        xd = xc
                        fd = fc
                        xc = hi - gr * (hi - lo)
                        fc = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], xc, S, a)
                    else:
                        lo = xc
                        xc = xd
                        fc = fd
                        xd = lo + gr * (hi - lo)
                        fd = _shifted_lmax(d, n, &Bv[0, 0], &Qv[0, 0], xd, S, a)
    free(S)
    return best_f, best_a
