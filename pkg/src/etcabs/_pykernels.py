"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built, or when ``ETCABS_PURE_PYTHON=1``.
"""
import math

import numpy as np

_GOLDEN = 0.6180339887498949


def _wave(periodic, freq, phase, t):
    if periodic:
        return math.sin(freq * t + phase)
    return 1.0


def _rk4(A, c, e, periodic, freq, phase, t, h, x0):
    n = len(x0)

    def deriv(w, x):
        return [c[i] + e[i] * w + sum(A[i][k] * x[k] for k in range(n))
                for i in range(n)]

    k1 = deriv(_wave(periodic, freq, phase, t), x0)
    k2 = deriv(_wave(periodic, freq, phase, t + 0.5 * h),
               [x0[i] + 0.5 * h * k1[i] for i in range(n)])
    k3 = deriv(_wave(periodic, freq, phase, t + 0.5 * h),
               [x0[i] + 0.5 * h * k2[i] for i in range(n)])
    k4 = deriv(_wave(periodic, freq, phase, t + h),
               [x0[i] + h * k3[i] for i in range(n)])
    return [x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n)]


def _gval(M, x, xi, thr):
    n = len(x)
    eps = [x[i] - xi[i] for i in range(n)]
    s = 0.0
    for i in range(n):
        for k in range(n):
            s += eps[i] * M[i][k] * eps[k]
    return s - thr


def integrate_interval(A, c, e, periodic, freq, phase, M, thr, x, dt, tol, cap):
    """Integrate one inter-sample interval until the trigger fires or ``cap``.

    Returns ``(tau, xi, cap_hit, wave_max)``.
    """
    A = np.asarray(A, dtype=float).tolist()
    M = np.asarray(M, dtype=float).tolist()
    c = [float(v) for v in np.ravel(c)]
    e = [float(v) for v in np.ravel(e)]
    x = [float(v) for v in np.ravel(x)]
    xi = list(x)
    t = 0.0
    wmax = 0.0
    cap_hit = False
    while True:
        h = dt
        if t + h >= cap:
            h = cap - t
        if h <= 0.0:
            cap_hit = True
            break
        xn = _rk4(A, c, e, periodic, freq, phase, t, h, xi)
        if not all(math.isfinite(v) for v in xn):
            raise FloatingPointError("state became non-finite during integration")
        wmax = max(wmax, abs(_wave(periodic, freq, phase, t)),
                   abs(_wave(periodic, freq, phase, t + 0.5 * h)))
        if _gval(M, x, xn, thr) >= 0.0:
            lo, hi = 0.0, h
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                xm = _rk4(A, c, e, periodic, freq, phase, t, mid, xi)
                if _gval(M, x, xm, thr) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            if hi < h:
                xn = _rk4(A, c, e, periodic, freq, phase, t, hi, xi)
            t = t + hi
            xi = xn
            break
        t = t + h
        xi = xn
        if t >= cap:
            t = cap
            cap_hit = True
            break
    return t, np.array(xi), cap_hit, wmax


def sym_lmax(S):
    """Largest eigenvalue of a small symmetric matrix."""
    return float(np.linalg.eigvalsh(np.asarray(S, dtype=float))[-1])


def cone_min_lmax(block, Q, tol=1e-9, alpha_cap=2.0 ** 40):
    """Minimise ``lmax(block + alpha*diag(Q, 0))`` over ``alpha >= 0``.

    Returns ``(fmin, alpha)``; stops early once ``fmin <= tol``.
    """
    block = np.asarray(block, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    pad = np.zeros_like(block)
    pad[:n, :n] = Q

    def f(alpha):
        return float(np.linalg.eigvalsh(block + alpha * pad)[-1])

    best_f, best_a = f(0.0), 0.0
    if best_f <= tol:
        return best_f, best_a
    lo, prev_alpha, fprev, alpha = 0.0, 0.0, best_f, 1.0
    while True:
        fa = f(alpha)
        if fa < best_f:
            best_f, best_a = fa, alpha
        if fa <= tol or fa >= fprev or alpha >= alpha_cap:
            break
        lo, prev_alpha, fprev = prev_alpha, alpha, fa
        alpha *= 8.0
    hi = alpha
    if best_f <= tol:
        return best_f, best_a
    xc = hi - _GOLDEN * (hi - lo)
    xd = lo + _GOLDEN * (hi - lo)
    fc, fd = f(xc), f(xd)
    for _ in range(200):
        if fc < best_f:
            best_f, best_a = fc, xc
        if fd < best_f:
            best_f, best_a = fd, xd
        if best_f <= tol or hi - lo <= 1e-13 * (1.0 + hi):
            break
        if fc <= fd:
            hi, xd, fd = xd, xc, fc
            xc = hi - _GOLDEN * (hi - lo)
            fc = f(xc)
        else:
            lo, xc, fc = xc, xd, fd
            xd = lo + _GOLDEN * (hi - lo)
            fd = f(xd)
    return best_f, best_a
