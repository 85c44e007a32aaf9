"""Angular over-approximation of where a sector lands at its next sample.

For ``x`` in sector ``s`` and ``tau`` in ``[tau_lo, tau_hi]`` the next sample
is ``Lambda(tau)x + z`` with ``|z| <= rho(tau)|x|``.  Because ``Lambda`` is
linear, the nominal image of the sector at a fixed ``tau`` is the cone
spanned by the images of its two extreme rays; between grid times the image
moves by at most ``m_i |x|`` and is padded accordingly.  The disturbance ball
then widens every arc by ``arcsin(rho_max / r_min)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from etcabs.design import EtcDesign
from etcabs.partition import TWO_PI, ConicRegion, sector_extrema
from etcabs.trigger import d_a, transition_at

Arc = tuple  # (start angle in [0, 2pi), length in [0, 2pi])


def rho(design: EtcDesign, W: float, tau: float) -> float:
    """Bound on ``|z| / |x|`` for the disturbance-driven part of the state."""
    return math.sqrt(W) * float(np.linalg.norm(design.E, "fro")) * d_a(design.log_norm_A, tau)


def _angle(v) -> float:
    return math.atan2(v[1], v[0]) % TWO_PI


def merge_arcs(arcs: Sequence[Arc]) -> tuple[list[Arc], bool]:
    """Union of circular arcs; returns ``(arcs, full_circle)``."""
    if not arcs:
        return [], False
    if any(L >= TWO_PI for _, L in arcs):
        return [(0.0, TWO_PI)], True
    items = sorted((a % TWO_PI, float(L)) for a, L in arcs)
    merged: list[list[float]] = []
    for a, L in items:
        if merged and a <= merged[-1][0] + merged[-1][1] + 1e-15:
            merged[-1][1] = max(merged[-1][1], a + L - merged[-1][0])
        else:
            merged.append([a, L])
    # arcs running past 2*pi may swallow arcs at the start of the circle
    while len(merged) > 1:
        last_end = merged[-1][0] + merged[-1][1]
        first = merged[0]
        if last_end + 1e-15 < first[0] + TWO_PI:
            break
        merged.pop(0)
        merged[-1][1] = max(last_end, first[0] + first[1] + TWO_PI) - merged[-1][0]
    if any(L >= TWO_PI for _, L in merged):
        return [(0.0, TWO_PI)], True
    return [(a, L) for a, L in merged], False


def arc_contains(arcs: Sequence[Arc], phi: float, tol: float = 1e-12) -> bool:
    for a, L in arcs:
        if (phi - a) % TWO_PI <= L + tol or (phi - a) % TWO_PI >= TWO_PI - tol:
            return True
    return False


def arcs_meet_sector(arcs: Sequence[Arc], lo: float, hi: float, tol: float = 1e-12) -> bool:
    width = hi - lo
    for a, L in arcs:
        if (lo - a) % TWO_PI <= L + tol or (a - lo) % TWO_PI <= width + tol:
            return True
    return False


@dataclass(frozen=True, eq=False)
class ReachSummary:
    s: int
    taus: np.ndarray
    nominal: tuple
    rho_max: float
    r_min: float
    widened: tuple
    full_circle: bool

    def shifted(self, s: int) -> "ReachSummary":
        """Summary of the antipodal region (all arcs rotated by pi)."""
        rot = lambda arcs: tuple(((a + math.pi) % TWO_PI, L) for a, L in arcs)
        return ReachSummary(s=s, taus=self.taus, nominal=rot(self.nominal),
                            rho_max=self.rho_max, r_min=self.r_min,
                            widened=rot(self.widened), full_circle=self.full_circle)


def default_grid_points(tau_lo: float, tau_hi: float, sigma: float, l: int) -> int:
    return max(32, int(math.ceil((tau_hi - tau_lo) / (sigma / l))) * 4)


@dataclass(frozen=True)
class NominalArcs:
    arcs: tuple
    r_min: float
    full_circle: bool


def nominal_arcs(region: ConicRegion, design: EtcDesign, tau_lo: float, tau_hi: float,
                 grid_points: int) -> NominalArcs:
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    taus = np.linspace(tau_lo, tau_hi, grid_points)
    dt = taus[1] - taus[0]
    v_lo, v_hi = region.rays
    pieces: list[Arc] = []
    r_min = math.inf
    for tau in taus:
        op = transition_at(design, float(tau))
        Lam = op.Lambda
        y_lo, y_hi = Lam @ v_lo, Lam @ v_hi
        det = float(np.linalg.det(Lam))
        if min(np.linalg.norm(y_lo), np.linalg.norm(y_hi)) < 1e-9 or abs(det) < 1e-12:
            return NominalArcs(((0.0, TWO_PI),), 0.0, True)
        r_i = math.sqrt(max(0.0, sector_extrema(Lam.T @ Lam, region.theta_lo,
                                                region.theta_hi)[0]))
        drift = float(np.linalg.norm(op.expA @ design.Acl, 2)) * d_a(design.log_norm_A, dt)
        if drift >= r_i:
            return NominalArcs(((0.0, TWO_PI),), 0.0, True)
        pad = math.asin(drift / r_i)
        a_lo, a_hi = _angle(y_lo), _angle(y_hi)
        if det < 0:
            a_lo, a_hi = a_hi, a_lo
        width = (a_hi - a_lo) % TWO_PI
        pieces.append(((a_lo - pad) % TWO_PI, width + 2 * pad))
        r_min = min(r_min, r_i - drift)
    arcs, full = merge_arcs(pieces)
    return NominalArcs(tuple(arcs), r_min, full)


def widen_by_disturbance(arcs: Sequence[Arc], rho_max: float, r_min: float
                         ) -> tuple[tuple, bool]:
    if rho_max <= 0.0:
        merged, full = merge_arcs(arcs)
        return tuple(merged), full
    if rho_max >= r_min:
        return ((0.0, TWO_PI),), True
    d = math.asin(rho_max / r_min)
    merged, full = merge_arcs([((a - d) % TWO_PI, L + 2 * d) for a, L in arcs])
    return tuple(merged), full


def reach_summary(region: ConicRegion, design: EtcDesign, W: float, tau_lo: float,
                  tau_hi: float, grid_points: int) -> ReachSummary:
    nom = nominal_arcs(region, design, tau_lo, tau_hi, grid_points)
    rmax = rho(design, W, tau_hi)
    if nom.full_circle:
        wid, full = ((0.0, TWO_PI),), True
    else:
        wid, full = widen_by_disturbance(nom.arcs, rmax, nom.r_min)
    return ReachSummary(s=region.index, taus=np.linspace(tau_lo, tau_hi, grid_points),
                        nominal=nom.arcs, rho_max=rmax, r_min=nom.r_min,
                        widened=wid, full_circle=full)


def compute_reach(regions: Sequence[ConicRegion], timings, design: EtcDesign, W: float,
                  sigma: float, l: int, threads: int = 1) -> list[ReachSummary]:
    """Reach summaries for all regions, computed once per antipodal pair."""
    by_s = {t.s: t for t in timings}
    reps = [r for r in regions if r.mirror_of is None or r.index < r.mirror_of]

    def work(r):
        t = by_s[r.index]
        g = default_grid_points(t.tau_lo, t.tau_hi, sigma, l)
        return reach_summary(r, design, W, t.tau_lo, t.tau_hi, g)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(work, reps))
    else:
        done = [work(r) for r in reps]
    out = {d.s: d for d in done}
    idx = {r.index: r for r in regions}
    for d in done:
        m = idx[d.s].mirror_of
        if m is not None and m not in out:
            out[m] = d.shifted(m)
    return [out[r.index] for r in regions]


def edges(summaries: Sequence[ReachSummary], regions: Sequence[ConicRegion]
          ) -> list[tuple[int, int]]:
    """Lexicographically ordered transition pairs ``(s, t)``."""
    out = []
    for summ in summaries:
        for r in regions:
            if summ.full_circle or arcs_meet_sector(summ.widened, r.theta_lo, r.theta_hi):
                out.append((summ.s, r.index))
    return sorted(out)


def edges_table(edge_set: Sequence[tuple[int, int]]) -> dict[str, list]:
    return {"s": [e[0] for e in edge_set], "t": [e[1] for e in edge_set]}
