"""Exact evaluation of the inter-sample analysis objects.

``Lambda(t) = I + F(t)(A - BK)`` maps the sampled state to the state at
time ``t`` in the unperturbed loop, with ``F(t)`` the integral of ``e^{As}``
over ``[0, t]``.  ``Phi(t)`` is the block matrix whose negativity certifies
that the trigger has not fired yet; ``theta_at`` is its Schur-condensed form
and ``theta_up_at`` the matching sufficient condition for having fired.
"""
from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from etcabs.design import EtcDesign
from etcabs.model_io import DEFAULT_SPLITS


@dataclass(frozen=True, eq=False)
class TransitionOperators:
    t: float
    Lambda: np.ndarray
    F_int: np.ndarray
    expA: np.ndarray


def transition_at(design: EtcDesign, t: float) -> TransitionOperators:
    if t < 0:
        raise ValueError("t must be >= 0")
    n = design.n
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = design.A
    aug[:n, n:] = np.eye(n)
    ex = sla.expm(aug * t)
    F = ex[:n, n:]
    return TransitionOperators(t=t, Lambda=np.eye(n) + F @ design.Acl, F_int=F,
                               expA=ex[:n, :n])


def d_a(lam: float, t: float) -> float:
    """``(e^{lam t} - 1)/lam``, continuous through ``lam = 0``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x = lam * t
    if lam == 0.0:
        return t
    if abs(x) < 1e-6:
        return t * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
    return math.expm1(x) / lam


def disturbance_gain(design: EtcDesign, W: float, t: float) -> float:
    """``t W lambda_max(E'E) d_A(t)``: bound on ``|Omega(t)|^2 / |x|^2``."""
    return t * W * design.lambda_max_EtE * d_a(design.lambda_max_A, t)


# step of the tabulated excitation integral (a power of two keeps nodes exact)
_KAPPA_STEP = 2.0 ** -12
_KAPPA_CHUNK = 256
_kappa_tables: "weakref.WeakKeyDictionary[EtcDesign, list]" = weakref.WeakKeyDictionary()
_kappa_lock = threading.Lock()


def _extend_kappa(design: EtcDesign, table: list, t: float) -> None:
    # table = [node values of |e^{As}E|, cumulative Simpson integrals at even nodes]
    vals, cum = table
    h = _KAPPA_STEP
    need = 2 * int(math.ceil(t / (2 * h))) + 1
    while len(vals) < need:
        k0 = len(vals)
        base = sla.expm(design.A * (k0 * h)) @ design.E
        step = sla.expm(design.A * h)
        G = [base]
        for _ in range(_KAPPA_CHUNK - 1):
            G.append(step @ G[-1])
        vals.extend(float(v) for v in np.linalg.norm(np.array(G), ord=2, axis=(1, 2)))
    while 2 * len(cum) < len(vals):
        m = len(cum)
        f0, f1, f2 = vals[2 * m - 2], vals[2 * m - 1], vals[2 * m]
        cum.append(cum[-1] + h / 3.0 * (f0 + 4.0 * f1 + f2))


def excitation_integral(design: EtcDesign, t: float) -> float:
    """``int_0^t |e^{As}E| ds`` with the spectral norm.

    The integrand is tabulated on a fixed dyadic grid and integrated with
    Simpson's rule; the piece beyond the last even node below ``t`` gets its
    own Simpson step.  A relative pad covers the quadrature error.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    h2 = 2 * _KAPPA_STEP
    m = int(math.floor(t / h2))
    with _kappa_lock:
        table = _kappa_tables.get(design)
        if table is None:
            table = _kappa_tables[design] = [[], [0.0]]
        _extend_kappa(design, table, m * h2)
        acc = table[1][m]
    r = t - m * h2
    if r > 0.0:
        a = m * h2
        f = [float(np.linalg.norm(sla.expm(design.A * s) @ design.E, 2))
             for s in (a, a + 0.5 * r, t)]
        acc += r / 6.0 * (f[0] + 4.0 * f[1] + f[2])
    return acc * (1.0 + 1e-9)


def excitation_gain(design: EtcDesign, W: float, t: float) -> float:
    """``W kappa(t)^2``: bound on ``|Omega(t)|^2 / |x|^2`` from the excitation integral."""
    return W * excitation_integral(design, t) ** 2


@dataclass(frozen=True, eq=False)
class PhiBlocks:
    t: float
    Phi: np.ndarray

    @property
    def n(self) -> int:
        return self.Phi.shape[0] // 2

    @property
    def blocks(self):
        n = self.n
        P = self.Phi
        return P[:n, :n], P[:n, n:], P[n:, :n], P[n:, n:]


def phi_at(design: EtcDesign, W: float, t: float) -> PhiBlocks:
    n = design.n
    Y = transition_at(design, t).Lambda - np.eye(n)
    M = design.M
    c = design.mu * disturbance_gain(design, W, t)
    phi1 = Y.T @ M @ Y + c * np.eye(n) - design.N
    phi3 = M @ Y
    Phi = np.block([[phi1, phi3.T], [phi3, -design.Psi]])
    return PhiBlocks(t=t, Phi=0.5 * (Phi + Phi.T))


def theta_at(design: EtcDesign, W: float, t: float) -> np.ndarray:
    """Schur complement of ``Phi(t)`` with respect to its ``-Psi`` block."""
    n = design.n
    Y = transition_at(design, t).Lambda - np.eye(n)
    M = design.M
    MY = M @ Y
    c = design.mu * disturbance_gain(design, W, t)
    T = Y.T @ M @ Y + MY.T @ np.linalg.solve(design.Psi, MY) + c * np.eye(n) - design.N
    return 0.5 * (T + T.T)


def theta_up_at(design: EtcDesign, W: float, t: float, split: float) -> np.ndarray:
    """Lower bound on the trigger function ``eps'M eps - x'Nx`` as a quadratic form.

    Follows from ``(a+b)'M(a+b) >= (1-d)a'Ma - (1/d - 1)b'Mb`` with the
    nominal error ``a`` and the disturbance contribution ``b``, whose size is
    bounded through :func:`excitation_gain`.  Any ``d`` in ``(0, 1)`` is valid.
    """
    n = design.n
    Y = transition_at(design, t).Lambda - np.eye(n)
    k = (1.0 / split - 1.0) * design.lambda_max_M * excitation_gain(design, W, t)
    T = (1.0 - split) * Y.T @ design.M @ Y - design.N - k * np.eye(n)
    return 0.5 * (T + T.T)


def lmax(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(S)[-1])


@dataclass(frozen=True)
class TauPrime:
    tau: float
    enabled: bool


def global_tau_prime(design: EtcDesign, W: float, sigma: float, grid: int,
                     tol: float = 1e-6) -> TauPrime:
    """First time in ``(0, sigma]`` at which ``Phi(t)`` stops being negative definite."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    ts = np.linspace(0.0, sigma, grid + 1)[1:]
    prev = 0.0
    for t in ts:
        if lmax(phi_at(design, W, float(t)).Phi) >= 0.0:
            lo, hi = prev, float(t)
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if lmax(phi_at(design, W, mid).Phi) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            return TauPrime(tau=hi, enabled=True)
        prev = float(t)
    return TauPrime(tau=sigma, enabled=False)


@dataclass(frozen=True)
class SigmaCheck:
    sigma: float
    lmax_phi: float
    passed: bool
    all_triggered: bool
    message: str


def validate_sigma(design: EtcDesign, W: float, sigma: float,
                   splits=DEFAULT_SPLITS) -> SigmaCheck:
    """Check that the trigger is enabled at the horizon.

    ``passed`` requires ``lambda_max(Phi(sigma)) >= 0``.  ``all_triggered``
    additionally reports whether ``theta_up(sigma)`` is positive semidefinite
    for some split,
    i.e., whether every state is guaranteed to have sampled by ``sigma``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    lm = lmax(phi_at(design, W, sigma).Phi)
    lo_up = max(float(np.linalg.eigvalsh(theta_up_at(design, W, sigma, d))[0]) for d in splits)
    passed = lm >= 0.0
    every = lo_up >= 0.0
    if not passed:
        msg = "trigger not enabled at sigma: Phi(sigma) is negative definite"
    elif not every:
        msg = "trigger enabled at sigma, but not guaranteed for every state"
    else:
        msg = "trigger enabled in the whole state space at sigma"
    return SigmaCheck(sigma=sigma, lmax_phi=lm, passed=passed, all_triggered=every, message=msg)
