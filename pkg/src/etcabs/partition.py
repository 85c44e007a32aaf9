"""Isotropic partition of the plane into conic sectors.

Each of the ``2 m_bar`` regions is an angular sector of width ``pi/m_bar``.
Regions ``s`` and ``s + m_bar`` are antipodal mirrors and share the same
quadratic form ``Q``, whose nonnegativity set is the closed double cone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class UnsupportedDimension(NotImplementedError):
    """Only planar (n = 2) partitions are implemented."""


@dataclass(frozen=True, eq=False)
class ConicRegion:
    index: int
    theta_lo: float
    theta_hi: float
    Q: np.ndarray
    mirror_of: int | None = None

    @property
    def width(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([math.cos(self.theta_lo), math.sin(self.theta_lo)]),
                np.array([math.cos(self.theta_hi), math.sin(self.theta_hi)]))

    @property
    def midpoint(self) -> np.ndarray:
        m = 0.5 * (self.theta_lo + self.theta_hi)
        return np.array([math.cos(m), math.sin(m)])

    def contains_angle(self, phi: float) -> bool:
        """Closed-sector membership of direction ``phi`` (radians)."""
        d = (phi - self.theta_lo) % TWO_PI
        return d <= self.width + 1e-12 or d >= TWO_PI - 1e-12


def cone_matrix(theta_lo: float, theta_hi: float) -> np.ndarray:
    """Quadratic form that is nonnegative exactly on the double cone of a sector."""
    w = theta_hi - theta_lo
    if not (0.0 < w < math.pi):
        raise ValueError(f"sector width must lie in (0, pi), got {w}")
    na = np.array([-math.sin(theta_lo), math.cos(theta_lo)])
    nb = np.array([math.sin(theta_hi), -math.cos(theta_hi)])
    return np.outer(na, nb) + np.outer(nb, na)


def make_cones(m_bar: int, n: int = 2) -> list[ConicRegion]:
    if n != 2:
        raise UnsupportedDimension(
            f"conic partitions are implemented for n = 2 only (got n = {n})")
    if m_bar < 2:
        raise ValueError("m_bar must be >= 2")
    w = math.pi / m_bar
    regions: list[ConicRegion] = []
    for s in range(1, m_bar + 1):
        lo, hi = (s - 1) * w, s * w
        Q = cone_matrix(lo, hi)
        Q.setflags(write=False)
        regions.append(ConicRegion(index=s, theta_lo=lo, theta_hi=hi, Q=Q,
                                   mirror_of=s + m_bar))
    for s in range(1, m_bar + 1):
        base = regions[s - 1]
        regions.append(ConicRegion(index=s + m_bar, theta_lo=base.theta_lo + math.pi,
                                   theta_hi=base.theta_hi + math.pi, Q=base.Q,
                                   mirror_of=s))
    return regions


def angle_of(x: Sequence[float]) -> float:
    return math.atan2(x[1], x[0]) % TWO_PI


def locate(x: Sequence[float], q: int) -> int:
    """Index (1-based) of the sector containing ``x`` among ``q`` equal sectors.

    A state on a shared boundary ray belongs to the lower-indexed neighbour;
    the ray at angle 0 belongs to region 1.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise UnsupportedDimension("locate is implemented for n = 2 only")
    if not np.any(x):
        raise ValueError("cannot locate the zero vector")
    r = angle_of(x) / (TWO_PI / q)
    k = round(r)
    if abs(r - k) <= 1e-10:
        return 1 if k % q == 0 else int(k)
    return int(math.floor(r)) + 1


def sector_extrema(S: np.ndarray, theta_lo: float, theta_hi: float) -> tuple[float, float]:
    """Min and max of ``u'Su`` over unit ``u`` with angle in ``[theta_lo, theta_hi]``."""
    a = 0.5 * (S[0, 0] + S[1, 1])
    b = 0.5 * (S[0, 0] - S[1, 1])
    c = 0.5 * (S[0, 1] + S[1, 0])

    def f(phi):
        return a + b * math.cos(2 * phi) + c * math.sin(2 * phi)

    vals = [f(theta_lo), f(theta_hi)]
    if b != 0.0 or c != 0.0:
        base = 0.5 * math.atan2(c, b)
        k0 = math.floor((theta_lo - base) / (0.5 * math.pi))
        k = k0
        while True:
            phi = base + k * 0.5 * math.pi
            if phi > theta_hi:
                break
            if phi >= theta_lo:
                vals.append(f(phi))
            k += 1
    return min(vals), max(vals)


def regions_table(regions: Sequence[ConicRegion]) -> dict[str, list]:
    return {
        "s": [r.index for r in regions],
        "theta_lo": [r.theta_lo for r in regions],
        "theta_hi": [r.theta_hi for r in regions],
        "q11": [float(r.Q[0, 0]) for r in regions],
        "q12": [float(r.Q[0, 1]) for r in regions],
        "q22": [float(r.Q[1, 1]) for r in regions],
        "mirror_of": [r.mirror_of for r in regions],
    }
