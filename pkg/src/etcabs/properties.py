"""Randomized checks of the inequalities the analysis rests on.

Each check returns a :class:`CheckReport`; failures are counted, never raised,
so the command-line validator can aggregate them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from etcabs.bounds import FEAS_TOL, cone_feasible
from etcabs.design import EtcDesign
from etcabs.partition import cone_matrix, locate
from etcabs.sim import Policy, make_disturbance, step_interval
from etcabs.trigger import lmax, phi_at, theta_at, transition_at


@dataclass(frozen=True)
class RandomInstanceSpec:
    samples: int = 1000
    seed: int = 0
    dim_range: tuple = (1, 5)
    magnitude: float = 3.0


@dataclass
class CheckReport:
    name: str
    samples: int = 0
    failures: int = 0
    worst: float = -math.inf   # largest normalized violation margin seen
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, margin: float, detail=None):
        """``margin > 0`` is a failure."""
        self.samples += 1
        self.worst = max(self.worst, margin)
        if margin > 0:
            self.failures += 1
            if len(self.examples) < 5:
                self.examples.append(detail)

    def as_dict(self) -> dict:
        return {"name": self.name, "samples": self.samples, "failures": self.failures,
                "worst": self.worst, "passed": self.passed}


def _spd(rng, n, mag):
    R = rng.uniform(-mag, mag, (n, n))
    return R @ R.T + 0.1 * np.eye(n)


def check_matrix_young(spec: RandomInstanceSpec = RandomInstanceSpec()) -> CheckReport:
    """``EG + G'E' <= EPE' + G'P^{-1}G`` for SPD ``P``."""
    rng = np.random.default_rng(spec.seed)
    rep = CheckReport("matrix_young")
    lo, hi = spec.dim_range
    for _ in range(spec.samples):
        n, m = rng.integers(lo, hi + 1, size=2)
        E = rng.uniform(-spec.magnitude, spec.magnitude, (n, m))
        G = rng.uniform(-spec.magnitude, spec.magnitude, (m, n))
        P = _spd(rng, m, spec.magnitude)
        S = E @ G + G.T @ E.T - E @ P @ E.T - G.T @ np.linalg.solve(P, G)
        scale = 1.0 + np.linalg.norm(E @ P @ E.T, 2) + np.linalg.norm(G.T @ np.linalg.solve(P, G), 2)
        rep.record(lmax(0.5 * (S + S.T)) - 1e-9 * scale, (n, m))
    return rep


def check_log_norm(spec: RandomInstanceSpec = RandomInstanceSpec()) -> CheckReport:
    """``|e^{At}| <= e^{mu(A) t}`` with ``mu(A)`` the logarithmic norm."""
    rng = np.random.default_rng(spec.seed + 1)
    rep = CheckReport("log_norm")
    lo, hi = spec.dim_range
    for _ in range(spec.samples):
        n = int(rng.integers(lo, hi + 1))
        A = rng.uniform(-1.0, 1.0, (n, n))
        t = float(rng.uniform(0.0, 5.0))
        mu = 0.5 * float(np.linalg.eigvalsh(A + A.T)[-1])
        bound = math.exp(mu * t)
        lhs = float(np.linalg.norm(sla.expm(A * t), 2))
        rep.record(lhs - bound - 1e-9 * (1.0 + bound), (n, t))
    return rep


def check_jensen(spec: RandomInstanceSpec = RandomInstanceSpec()) -> CheckReport:
    """``g * int w'Mw >= (int w)'M(int w)`` on ``[0, g]`` for piecewise-constant ``w``."""
    rng = np.random.default_rng(spec.seed + 2)
    rep = CheckReport("jensen")
    lo, hi = spec.dim_range
    for _ in range(spec.samples):
        n = int(rng.integers(lo, hi + 1))
        M = _spd(rng, n, spec.magnitude)
        k = int(rng.integers(1, 20))
        g = float(rng.uniform(0.01, 10.0))
        cuts = np.sort(rng.uniform(0.0, g, k - 1))
        widths = np.diff(np.concatenate([[0.0], cuts, [g]]))
        w = rng.uniform(-spec.magnitude, spec.magnitude, (k, n))
        lhs = g * float(sum(h * wi @ M @ wi for h, wi in zip(widths, w)))
        iw = (widths[:, None] * w).sum(axis=0)
        rhs = float(iw @ M @ iw)
        rep.record(rhs - lhs - 1e-9 * (1.0 + abs(lhs)), (n, k))
    return rep


def _omega_integral(A, E, dist, t, panels=1000):
    """Composite Simpson rule for ``int_0^t e^{A(t-s)} E omega(s) ds``."""
    n = A.shape[0]
    h = t / panels
    step = sla.expm(A * h)
    # nodes s_i = i h, weight matrices e^{A(t - s_i)} built from the far end
    acc = np.zeros(n)
    Phi = np.eye(n)
    for i in range(panels, -1, -1):
        w = 1.0 if i in (0, panels) else (4.0 if i % 2 else 2.0)
        acc += w * (Phi @ (E @ dist(i * h)))
        Phi = Phi @ step
    return acc * h / 3.0


def check_bounding_chain(design: EtcDesign, W: float, samples: int = 1000, seed: int = 0,
                         t_max: float = 2.0) -> CheckReport:
    """Trigger function ``F(x, t) <= x'Theta(t)x`` for admissible disturbances."""
    rng = np.random.default_rng(seed + 3)
    rep = CheckReport("bounding_chain")
    policies = [Policy("zero"), Policy("max-aligned"), Policy("anti-aligned"),
                Policy("sinusoid", freq=1.0), Policy("random-phase", seed=seed)]
    n = design.n
    for k in range(samples):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        t = float(rng.uniform(1e-3, t_max))
        pol = policies[k % len(policies)]
        dist = make_disturbance(pol, design, W, x, float(rng.uniform(0, 10)), rng)
        Y = transition_at(design, t).Lambda - np.eye(n)
        Om = _omega_integral(design.A, design.E, dist, t)
        eps = -(Y @ x) - Om
        F = float(eps @ design.M @ eps - x @ design.N @ x)
        bound = float(x @ theta_at(design, W, t) @ x)
        scale = 1.0 + abs(bound) + abs(F)
        rep.record(F - bound - 1e-7 * scale, (pol.token(), t))
    return rep


def check_schur_consistency(design: EtcDesign, W: float, samples: int = 1000, seed: int = 0,
                            t_max: float = 0.1) -> CheckReport:
    """``Phi(t) <= 0`` implies ``Theta(t) <= 0``."""
    rng = np.random.default_rng(seed + 4)
    rep = CheckReport("schur_consistency")
    for _ in range(samples):
        t = float(rng.uniform(0.0, t_max))
        if lmax(phi_at(design, W, t).Phi) <= 0.0:
            rep.record(lmax(theta_at(design, W, t)) - 1e-8, t)
    return rep


def check_lower_bound_consequence(design: EtcDesign, W: float, timings, tau_prime: float,
                               samples: int = 1000, seed: int = 0, q: int | None = None,
                               policies=None, dt: float = 1e-4, tol: float = 1e-3,
                               cap: float = 8.0) -> CheckReport:
    """Simulated first trigger times respect ``tau'`` and the regional lower bound."""
    rng = np.random.default_rng(seed + 5)
    rep = CheckReport("lower_bound_consequence")
    by_s = {t.s: t for t in timings}
    q = q if q is not None else len(timings)
    policies = policies or [Policy("zero"), Policy("max-aligned"), Policy("anti-aligned"),
                            Policy("sinusoid", freq=1.0), Policy("random-phase", seed=seed)]
    for k in range(samples):
        a = float(rng.uniform(0.0, 2 * math.pi))
        x = np.array([math.cos(a), math.sin(a)])
        pol = policies[k % len(policies)]
        dist = make_disturbance(pol, design, W, x, float(rng.uniform(0, 10)), rng)
        res = step_interval(design, x, dist, dt, 1e-6, cap)
        s = locate(x, q)
        margin = max(tau_prime - tol - res.tau, by_s[s].tau_lo - tol - res.tau)
        rep.record(margin, (pol.token(), s, res.tau))
    return rep


def random_cone_instance(rng: np.random.Generator):
    """A 4x4 symmetric block with a negative lower-right part and a random sector form."""
    R = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    eig = rng.uniform(-3.0, 1.0, 4)
    S = R @ np.diag(eig) @ R.T
    S[2:, 2:] -= 2.0 * np.eye(2)
    lo = float(rng.uniform(0, 2 * math.pi))
    w = float(rng.uniform(0.05, math.pi - 0.05))
    return 0.5 * (S + S.T), cone_matrix(lo, lo + w)


def grid_min_lmax(block, Q, points: int = 10_000):
    pad = np.zeros_like(block)
    pad[:2, :2] = Q
    alphas = np.concatenate([[0.0], np.logspace(-6, 12, points - 1)])
    vals = np.linalg.eigvalsh(block[None, :, :] + alphas[:, None, None] * pad[None])[:, -1]
    return float(vals.min())


def check_cone_feasible_grid(spec: RandomInstanceSpec = RandomInstanceSpec()) -> CheckReport:
    """``cone_feasible`` agrees with a dense log-spaced multiplier scan."""
    rng = np.random.default_rng(spec.seed + 6)
    rep = CheckReport("cone_feasible_grid")
    from etcabs import kernels

    for _ in range(spec.samples):
        block, Q = random_cone_instance(rng)
        ok, alpha = cone_feasible(block, Q)
        fmin, _ = kernels.cone_min_lmax(block, Q, FEAS_TOL)
        gmin = grid_min_lmax(block, Q)
        agree = ok == (gmin <= FEAS_TOL)
        # the line search may stop early once feasible; otherwise it must be
        # at least as good as the scan
        worse = (not ok) and fmin > gmin + 1e-9 * (1.0 + abs(gmin))
        rep.record(1.0 if (not agree or worse) else -1.0, (ok, fmin, gmin))
    return rep
