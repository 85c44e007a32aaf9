"""Closed-loop event-triggered simulation under vanishing disturbances.

Between samples the plant evolves as ``xi' = A xi - BKx + E omega`` with the
held sample ``x``; the next sample is taken at the first time with
``(x - xi)'M(x - xi) >= x'Nx``.  Admissible disturbances satisfy
``|omega(t)| <= sqrt(W)|x|`` on each interval.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from etcabs import kernels
from etcabs.design import EtcDesign
from etcabs.partition import locate

POLICIES = ("zero", "max-aligned", "anti-aligned", "sinusoid", "random-phase")
_TOKEN = re.compile(r"^(?P<name>[a-z-]+)(?:\((?P<arg>[^)]*)\))?$")


@dataclass(frozen=True)
class Policy:
    name: str
    freq: float = 1.0   # Hz, periodic policies
    seed: int = 0       # random-phase only

    @classmethod
    def parse(cls, token: str, seed: int = 0) -> "Policy":
        m = _TOKEN.match(token.strip())
        if not m or m["name"] not in POLICIES:
            raise ValueError(f"unknown disturbance policy {token!r}; choose from {POLICIES}")
        name, arg = m["name"], m["arg"]
        if arg in (None, ""):
            return cls(name=name, seed=seed)
        if name == "sinusoid":
            return cls(name=name, freq=float(arg))
        if name == "random-phase":
            return cls(name=name, seed=int(arg))
        raise ValueError(f"policy {name!r} takes no argument")

    def token(self) -> str:
        if self.name == "sinusoid":
            return f"sinusoid({self.freq:g})"
        if self.name == "random-phase":
            return f"random-phase({self.seed})"
        return self.name


@dataclass(frozen=True, eq=False)
class Disturbance:
    """``omega(s) = const + amp * wave(s) * dirn`` on one interval (local time ``s``)."""

    const: np.ndarray
    dirn: np.ndarray
    periodic: bool
    freq: float      # rad/s
    phase: float

    @property
    def bound(self) -> float:
        return float(np.linalg.norm(self.const) + np.linalg.norm(self.dirn))

    def __call__(self, s: float) -> np.ndarray:
        w = math.sin(self.freq * s + self.phase) if self.periodic else 0.0
        return self.const + w * self.dirn


def make_disturbance(policy: Policy, design: EtcDesign, W: float, x: np.ndarray, t_k: float,
                     rng: np.random.Generator | None = None) -> Disturbance:
    p = design.E.shape[1]
    amp = math.sqrt(W) * float(np.linalg.norm(x))
    zero = np.zeros(p)
    if policy.name == "zero" or amp == 0.0:
        return Disturbance(zero, zero, False, 0.0, 0.0)
    if policy.name in ("max-aligned", "anti-aligned"):
        # push the error along (or against) its nominal growth direction
        u = design.E.T @ design.M @ (design.Acl @ x)
        nu = float(np.linalg.norm(u))
        u = design.E.T @ (design.Acl @ x) if nu == 0.0 else u
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            u, nu = np.eye(p)[0], 1.0
        sign = 1.0 if policy.name == "max-aligned" else -1.0
        return Disturbance(sign * amp * u / nu, zero, False, 0.0, 0.0)
    w = 2.0 * math.pi * policy.freq
    if policy.name == "sinusoid":
        return Disturbance(zero, amp * np.eye(p)[0], True, w, w * t_k)
    rng = rng if rng is not None else np.random.default_rng(policy.seed)
    d = rng.standard_normal(p)
    d /= np.linalg.norm(d)
    return Disturbance(zero, amp * d, True, w, float(rng.uniform(0.0, 2.0 * math.pi)))


@dataclass(frozen=True, eq=False)
class StepResult:
    tau: float
    x_next: np.ndarray
    cap_hit: bool
    omega_max: float


def step_interval(design: EtcDesign, x: np.ndarray, dist: Disturbance, dt: float,
                  event_tolerance: float, cap: float) -> StepResult:
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("the origin is an equilibrium; nothing to simulate")
    E = design.E
    c = -(design.B @ (design.K @ x)) + E @ dist.const
    e = E @ dist.dirn
    thr = float(x @ design.N @ x)
    tau, xi, cap_hit, wmax = kernels.integrate_interval(
        np.ascontiguousarray(design.A), np.ascontiguousarray(c), np.ascontiguousarray(e),
        int(dist.periodic), dist.freq, dist.phase, np.ascontiguousarray(design.M), thr,
        np.ascontiguousarray(x), dt, event_tolerance, cap)
    om = float(np.linalg.norm(dist.const)) + float(np.linalg.norm(dist.dirn)) * (
        wmax if dist.periodic else 0.0)
    return StepResult(tau=float(tau), x_next=np.asarray(xi), cap_hit=bool(cap_hit), omega_max=om)


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 15.0
    dt: float = 1e-4
    policy: Policy = field(default_factory=lambda: Policy("zero"))
    event_tolerance: float = 1e-6
    cap: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.event_tolerance < self.dt * 1e-3 * (1 - 1e-9):
            raise ValueError("event_tolerance must be >= dt * 1e-3")


@dataclass(frozen=True, eq=False)
class Trace:
    t: np.ndarray          # sampling instants, K + 1
    x: np.ndarray          # sampled states, (K + 1, n)
    tau: np.ndarray        # inter-sample times, K
    regions: np.ndarray    # locate(x_k), K + 1
    omega_max: np.ndarray  # per interval, K
    cap_hit: np.ndarray    # per interval, K
    incomplete: float | None = None  # elapsed time of an unfinished last interval
    equilibrium: bool = False

    def table(self, timings=None) -> dict[str, list]:
        K = len(self.tau)
        by_s = {t.s: t for t in timings} if timings else {}
        cols = {"k": list(range(K)), "t_k": self.t[:K].tolist()}
        for i in range(self.x.shape[1]):
            cols[f"x{i + 1}"] = self.x[:K, i].tolist()
        cols["tau_k"] = self.tau.tolist()
        cols["region"] = self.regions[:K].tolist()
        if by_s:
            cols["tau_lo"] = [by_s[int(s)].tau_lo for s in self.regions[:K]]
            cols["tau_hi"] = [by_s[int(s)].tau_hi for s in self.regions[:K]]
        cols["cap_hit"] = self.cap_hit.tolist()
        return cols


def run(design: EtcDesign, W: float, x0, cfg: SimConfig, q: int | None = None) -> Trace:
    """Simulate from ``x0`` until ``cfg.horizon``; ``q`` regions for labelling (n = 2)."""
    x = np.asarray(x0, dtype=float)
    if not np.any(x):
        raise ValueError("x0 must be nonzero")
    rng = np.random.default_rng(cfg.policy.seed if cfg.policy.name == "random-phase"
                                else cfg.seed)
    ts, xs, taus, oms, caps = [0.0], [x.copy()], [], [], []
    t = 0.0
    incomplete = None
    eq = False
    while t < cfg.horizon:
        if float(np.linalg.norm(x)) < 1e-12:
            eq = True
            break
        remaining = cfg.horizon - t
        cap = min(cfg.cap, remaining)
        dist = make_disturbance(cfg.policy, design, W, x, t, rng)
        res = step_interval(design, x, dist, cfg.dt, cfg.event_tolerance, cap)
        if res.cap_hit and remaining < cfg.cap:
            incomplete = res.tau
            break
        t += res.tau
        x = res.x_next
        ts.append(t)
        xs.append(x.copy())
        taus.append(res.tau)
        oms.append(res.omega_max)
        caps.append(res.cap_hit)
    X = np.array(xs)
    if q is not None:
        regs = np.array([locate(v, q) if np.any(v) else 0 for v in X], dtype=int)
    else:
        regs = np.zeros(len(X), dtype=int)
    return Trace(t=np.array(ts), x=X, tau=np.array(taus), regions=regs,
                 omega_max=np.array(oms), cap_hit=np.array(caps, dtype=bool),
                 incomplete=incomplete, equilibrium=eq)
