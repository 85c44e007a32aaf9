"""Regional inter-sample bounds via cone-restricted vertex certificates.

For a region with cone form ``Q`` a vertex matrix ``V`` is certified when
some ``alpha >= 0`` makes ``V + alpha diag(Q, 0)`` negative semidefinite
(the S-procedure: then ``z'Vz <= 0`` whenever the state part of ``z`` lies in
the double cone).

* ``tau_lo``: furthest time up to which the lower family on ``[0, tau_lo]``
  is certified, i.e. no state of the cone has triggered yet.
* ``tau_hi``: earliest time from which the upper family is certified on a
  window ``[tau_hi, t_end]``, i.e. every state of the cone has triggered by
  ``tau_hi``; ``sigma`` (saturated) when no window certifies.  Each cell of
  the window may use its own split weight (any weight gives a valid bound).
  A region whose states fire at very different times may have no common
  window; it is then bisected into sub-sectors, each certified on its own,
  and ``tau_hi`` is the largest sub-sector bound.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from etcabs import kernels
from etcabs.design import EtcDesign
from etcabs.partition import ConicRegion, cone_matrix, sector_extrema
from etcabs.taylor import EmbeddingTables, cell_lower_vertices, cell_upper_vertices
from etcabs.trigger import theta_at, theta_up_at

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
REFINE_STEPS = 7
# deepest angular bisection of a region for the upper bound
SECTOR_DEPTH = 12


class BoundsError(RuntimeError):
    pass


def cone_feasible(block: np.ndarray, Q: np.ndarray, tol: float = FEAS_TOL) -> tuple[bool, float]:
    """Decide whether ``block + alpha diag(Q, 0) <= 0`` for some ``alpha >= 0``.

    Works for any block of size ``d >= n``; blocks produced by the upper ladder
    are ``n x n`` and take the multiplier on the whole matrix.
    """
    fmin, alpha = kernels.cone_min_lmax(np.ascontiguousarray(block, dtype=float),
                                        np.ascontiguousarray(Q, dtype=float), tol)
    return bool(fmin <= tol), float(alpha)


def _upper_cell(tables: EmbeddingTables, j: int, a: float, b: float,
                Q: np.ndarray) -> tuple[bool, tuple]:
    """Try the configured split weights in order; certificate ``(split, alphas)``."""
    for d in tables.splits:
        ok, alphas = _family_feasible(cell_upper_vertices(tables, j, a, b, d), Q)
        if ok:
            return True, (d, tuple(alphas))
    return False, ()


def _family_feasible(blocks: np.ndarray, Q: np.ndarray) -> tuple[bool, list[float]]:
    alphas = []
    for V in blocks:
        ok, a = cone_feasible(V, Q)
        if not ok:
            return False, alphas
        alphas.append(a)
    return True, alphas


@dataclass(frozen=True)
class UpperLeaf:
    """Sub-sector with its own firing certificate on ``[tau_hi, certified_until]``."""

    theta_lo: float
    theta_hi: float
    tau_hi: float
    certified_until: float
    certificate: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class RegionTiming:
    s: int
    theta_lo: float
    theta_hi: float
    tau_lo: float
    tau_hi: float
    saturated_hi: bool
    certified_until: float | None = None
    lo_certificate: tuple = field(default=(), repr=False)
    hi_certificate: tuple = field(default=(), repr=False)
    nonmonotone: bool = False
    hi_leaves: tuple = field(default=(), repr=False)

    def mirrored(self, region: ConicRegion) -> "RegionTiming":
        shift = region.theta_lo - self.theta_lo
        leaves = tuple(dataclasses.replace(f, theta_lo=f.theta_lo + shift,
                                           theta_hi=f.theta_hi + shift)
                       for f in self.hi_leaves)
        return dataclasses.replace(self, s=region.index, theta_lo=region.theta_lo,
                                   theta_hi=region.theta_hi, hi_leaves=leaves)


def _bisect(test, lo: float, hi: float, steps: int, keep_high: bool):
    """Bisection on a feasibility predicate over ``[lo, hi]``.

    With ``keep_high`` the predicate is assumed true at ``hi`` (shrink towards
    ``lo``); otherwise true at ``lo`` (grow towards ``hi``).  Returns the
    certified end, its certificate and whether the sampled pattern was
    non-monotone.
    """
    seen = []
    best_cert = None
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        ok, cert = test(mid)
        seen.append((mid, ok))
        if ok:
            best_cert = cert
            if keep_high:
                hi = mid
            else:
                lo = mid
        elif keep_high:
            lo = mid
        else:
            hi = mid
    seen.sort()
    flags = [ok for _, ok in seen]
    if keep_high:
        nonmono = any(a and not b for a, b in zip(flags, flags[1:]))
    else:
        nonmono = any(b and not a for a, b in zip(flags, flags[1:]))
    return (hi if keep_high else lo), best_cert, nonmono


def lower_bound(Q: np.ndarray, tables: EmbeddingTables) -> tuple[float, tuple, bool]:
    """Certified lower bound on the inter-sample time of the cone ``Q``."""
    h = tables.h
    first = cell_lower_vertices(tables, 0, 0.0, 0.0)[0]
    if not cone_feasible(first, Q)[0]:
        raise BoundsError("truncation margin too large to certify any positive bound; "
                          "raise n_conv or l")
    certs: list[float] = []
    for j in range(tables.l):
        ok, alphas = _family_feasible(cell_lower_vertices(tables, j, 0.0, h), Q)
        if ok:
            certs.extend(alphas)
            continue

        def test(b, j=j):
            return _family_feasible(cell_lower_vertices(tables, j, 0.0, b), Q)

        b, cert, nonmono = _bisect(test, 0.0, h, REFINE_STEPS, keep_high=False)
        if cert:
            certs.extend(cert)
        tau = j * h + b
        if tau <= 0.0:
            raise BoundsError("no positive lower bound certified; raise n_conv or l")
        return tau, tuple(certs), nonmono
    return tables.sigma, tuple(certs), False


def upper_bound(Q: np.ndarray, tables: EmbeddingTables, tau_lo: float
                ) -> tuple[float, bool, float | None, tuple, bool]:
    """Earliest certified firing time at or after ``tau_lo``.

    Returns ``(tau_hi, saturated, certified_until, certificate, nonmonotone)``.
    """
    h = tables.h
    j0 = tables.cell_of(tau_lo)
    for jstar in range(j0, tables.l):
        ok, cert = _upper_cell(tables, jstar, 0.0, h, Q)
        if ok:
            break
    else:
        return tables.sigma, True, None, (), False
    certs = [(jstar, 0.0) + cert]
    end = (jstar + 1) * h
    tau_hi = jstar * h
    nonmono = False
    if jstar > j0:
        jp = jstar - 1
        a_min = max(0.0, tau_lo - jp * h)

        def test(a):
            return _upper_cell(tables, jp, a, h, Q)

        a, cert, nonmono = _bisect(test, a_min, h, REFINE_STEPS, keep_high=True)
        if cert is not None:
            certs.insert(0, (jp, a) + cert)
        tau_hi = jp * h + a
    return max(tau_hi, tau_lo), False, end, tuple(certs), nonmono


def upper_leaves(region: ConicRegion, tables: EmbeddingTables, tau_lo: float,
                 max_depth: int = SECTOR_DEPTH) -> tuple[tuple, bool]:
    """Firing certificates for the region, bisecting sub-sectors that have none.

    Returns ``(leaves, nonmonotone)``; ``leaves`` is empty when some
    sub-sector stays uncertified at ``max_depth`` (the region saturates).
    """
    leaves: list[UpperLeaf] = []
    nonmono = False
    stack = [(region.theta_lo, region.theta_hi, region.Q, 0)]
    while stack:
        lo, hi, Q, depth = stack.pop()
        tau_hi, sat, until, cert, nm = upper_bound(Q, tables, tau_lo)
        nonmono = nonmono or nm
        if not sat:
            leaves.append(UpperLeaf(lo, hi, tau_hi, until, cert))
            continue
        if depth >= max_depth:
            return (), nonmono
        mid = 0.5 * (lo + hi)
        # pushed high half first so leaves come out in angular order
        stack.append((mid, hi, cone_matrix(mid, hi), depth + 1))
        stack.append((lo, mid, cone_matrix(lo, mid), depth + 1))
    return tuple(leaves), nonmono


def region_timing(region: ConicRegion, tables: EmbeddingTables,
                  heartbeat: float | None = None,
                  sector_depth: int = SECTOR_DEPTH) -> RegionTiming:
    tau_lo, lo_cert, nm_lo = lower_bound(region.Q, tables)
    leaves, nm_hi = upper_leaves(region, tables, tau_lo, sector_depth)
    if leaves:
        top = max(leaves, key=lambda f: f.tau_hi)
        tau_hi, sat, until, hi_cert = top.tau_hi, False, top.certified_until, top.certificate
    else:
        tau_hi, sat, until, hi_cert = tables.sigma, True, None, ()
    if heartbeat is not None and heartbeat < tau_hi:
        tau_hi, sat = heartbeat, True
        tau_lo = min(tau_lo, heartbeat)
    if nm_lo or nm_hi:
        log.warning("region %d: non-monotone feasibility pattern during refinement",
                    region.index)
    if len(leaves) > 1:
        log.info("region %d: upper bound certified on %d sub-sectors", region.index,
                 len(leaves))
    return RegionTiming(s=region.index, theta_lo=region.theta_lo, theta_hi=region.theta_hi,
                        tau_lo=tau_lo, tau_hi=tau_hi, saturated_hi=sat,
                        certified_until=until, lo_certificate=lo_cert,
                        hi_certificate=hi_cert, nonmonotone=nm_lo or nm_hi,
                        hi_leaves=leaves)


def compute_timings(regions: Sequence[ConicRegion], tables: EmbeddingTables,
                    threads: int = 1, heartbeat: float | None = None,
                    sector_depth: int = SECTOR_DEPTH) -> list[RegionTiming]:
    """Timings for all regions, computed once per antipodal pair."""
    by_index = {r.index: r for r in regions}
    reps = [r for r in regions if r.mirror_of is None or r.index < r.mirror_of]

    def work(r):
        return region_timing(r, tables, heartbeat, sector_depth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(work, reps))
    else:
        done = [work(r) for r in reps]
    out = {t.s: t for t in done}
    for t in done:
        m = by_index[t.s].mirror_of
        if m is not None and m not in out:
            out[m] = t.mirrored(by_index[m])
    return [out[r.index] for r in regions]


@dataclass(frozen=True)
class Precision:
    epsilon: float
    region: int
    tied: tuple


def precision_epsilon(timings: Sequence[RegionTiming]) -> Precision:
    widths = [t.tau_hi - t.tau_lo for t in timings]
    eps = max(widths)
    tied = tuple(t.s for t, w in zip(timings, widths) if w == eps)
    return Precision(epsilon=eps, region=tied[0], tied=tied)


def bounds_table(timings: Sequence[RegionTiming]) -> dict[str, list]:
    return {
        "s": [t.s for t in timings],
        "theta_lo": [t.theta_lo for t in timings],
        "theta_hi": [t.theta_hi for t in timings],
        "tau_lo": [t.tau_lo for t in timings],
        "tau_hi": [t.tau_hi for t in timings],
        "saturated": [t.saturated_hi for t in timings],
    }


# audits -------------------------------------------------------------------

def audit_lower(design: EtcDesign, W: float, region: ConicRegion, tau_lo: float,
                samples: int = 1000) -> float:
    """Largest value of ``x'Theta(t)x`` over unit ``x`` in the sector, ``t in [0, tau_lo]``."""
    worst = -math.inf
    for t in np.linspace(0.0, tau_lo, samples):
        T = theta_at(design, W, float(t))
        worst = max(worst, sector_extrema(T, region.theta_lo, region.theta_hi)[1])
    return worst


def audit_upper(design: EtcDesign, W: float, region, t0: float, t1: float,
                splits: Sequence[float], samples: int = 1000) -> float:
    """Smallest over ``t in [t0, t1]`` of the best split's ``min x'theta_up(t)x``.

    ``region`` is anything with ``theta_lo``/``theta_hi`` (a region or an
    :class:`UpperLeaf`); ``x`` ranges over unit vectors of that sector.  A
    positive value means every such state has triggered by ``t``.
    """
    worst = math.inf
    for t in np.linspace(t0, t1, samples):
        best = -math.inf
        for d in splits:
            T = theta_up_at(design, W, float(t), d)
            best = max(best, sector_extrema(T, region.theta_lo, region.theta_hi)[0])
            if best > 0:
                break
        worst = min(worst, best)
    return worst


def recheck_certificates(region: ConicRegion, tables: EmbeddingTables,
                         timing: RegionTiming) -> float:
    """Re-audit stored lower multipliers on the full-cell part of the family.

    Returns the largest ``lambda_max(V + alpha diag(Q, 0))`` observed.
    """
    h = tables.h
    n = region.Q.shape[0]
    alphas = iter(timing.lo_certificate)
    worst = -math.inf
    full = int(math.floor(timing.tau_lo / h + 1e-12))
    for j in range(min(full, tables.l)):
        for V in cell_lower_vertices(tables, j, 0.0, h):
            a = next(alphas)
            S = V.copy()
            S[:n, :n] += a * region.Q
            worst = max(worst, float(np.linalg.eigvalsh(S)[-1]))
    return worst
