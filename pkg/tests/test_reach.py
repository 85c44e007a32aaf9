import math

import numpy as np
import pytest

from etcabs.partition import TWO_PI, angle_of
from etcabs.properties import _omega_integral
from etcabs.reach import (arc_contains, arcs_meet_sector, compute_reach, edges, edges_table,
                          merge_arcs, nominal_arcs, reach_summary, rho, widen_by_disturbance)
from etcabs.sim import Disturbance
from etcabs.trigger import transition_at


@pytest.fixture(scope="module")
def summaries(regions, timings, design, plant, tables):
    return compute_reach(regions, timings, design, plant.W, tables.sigma, tables.l)


def test_rho_against_trapezoid(design):
    W, tau = 2e-3, 0.7
    s = np.linspace(0, tau, 200001)
    f = np.exp(design.log_norm_A * s)
    ref = math.sqrt(W) * np.linalg.norm(design.E, "fro") * float(
        np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(s)))
    assert rho(design, W, tau) == pytest.approx(ref, rel=1e-8)
    assert rho(design, 0.0, tau) == 0.0
    assert rho(design, 4 * W, tau) == pytest.approx(2 * rho(design, W, tau))
    assert rho(design, W, 0.2) < rho(design, W, 0.3)


def test_merge_arcs_cases():
    assert merge_arcs([]) == ([], False)
    arcs, full = merge_arcs([(0.0, 1.0), (0.5, 1.0), (3.0, 0.5)])
    assert not full and arcs == [(0.0, 1.5), (3.0, 0.5)]
    # an arc wrapping past 2*pi absorbs one at the start of the circle
    arcs, full = merge_arcs([(0.1, 0.2), (6.0, 0.6)])
    assert not full and len(arcs) == 1
    assert arc_contains(arcs, 0.25) and arc_contains(arcs, 6.1) and not arc_contains(arcs, 1.0)
    assert merge_arcs([(1.0, 7.0)]) == ([(0.0, TWO_PI)], True)
    assert merge_arcs([(0.0, 3.2), (3.1, 3.3)])[1]


def test_arcs_meet_sector():
    assert arcs_meet_sector([(0.5, 0.2)], 0.6, 1.0)
    assert arcs_meet_sector([(0.5, 1.0)], 0.6, 0.7)
    assert not arcs_meet_sector([(0.5, 0.05)], 0.6, 1.0)
    assert arcs_meet_sector([(6.2, 0.2)], 0.0, 0.1)


def test_widen_by_disturbance():
    arcs = [(1.0, 0.3)]
    assert widen_by_disturbance(arcs, 0.0, 1.0) == (((1.0, 0.3),), False)
    assert widen_by_disturbance(arcs, 1.0, 1.0)[1]
    w, full = widen_by_disturbance(arcs, 0.5, 1.0)
    d = math.asin(0.5)
    assert not full and w[0][0] == pytest.approx(1.0 - d) and w[0][1] == pytest.approx(0.3 + 2 * d)


def _next_state(design, x, tau, omega_vec, kind, W):
    amp = math.sqrt(W) * np.linalg.norm(x)
    zero = np.zeros(1)
    if kind == "const":
        dist = Disturbance(amp * omega_vec, zero, False, 0.0, 0.0)
    else:
        dist = Disturbance(zero, amp * omega_vec, True, 2 * math.pi * 3.0, 0.7)
    return transition_at(design, tau).Lambda @ x + _omega_integral(design.A, design.E, dist,
                                                                  tau, panels=200)


def test_sampled_successors_lie_in_widened_arcs(regions, timings, design, summaries, rng):
    W = 0.05   # large so the padding is actually exercised
    for r, t in zip(regions[:10], timings[:10]):
        summ = reach_summary(r, design, W, t.tau_lo, t.tau_hi, 64)
        if summ.full_circle:
            continue
        for _ in range(30):
            phi = rng.uniform(r.theta_lo, r.theta_hi)
            x = np.array([math.cos(phi), math.sin(phi)]) * 10 ** rng.uniform(-3, 3)
            tau = rng.uniform(t.tau_lo, t.tau_hi)
            w = np.array([rng.choice([-1.0, 1.0])])
            y = _next_state(design, x, tau, w, rng.choice(["const", "sin"]), W)
            assert arc_contains(summ.widened, angle_of(y), tol=1e-9), (r.index, phi, tau)


def test_nominal_image_is_scale_invariant(regions, timings, design):
    r, t = regions[2], timings[2]
    arcs = nominal_arcs(r, design, t.tau_lo, t.tau_hi, 64).arcs
    for phi in np.linspace(r.theta_lo, r.theta_hi, 9):
        u = np.array([math.cos(phi), math.sin(phi)])
        for tau in np.linspace(t.tau_lo, t.tau_hi, 9):
            L = transition_at(design, float(tau)).Lambda
            a1, a2 = angle_of(L @ (1e-6 * u)), angle_of(L @ (1e6 * u))
            assert a1 == pytest.approx(a2, abs=1e-12)
            assert arc_contains(arcs, a1, tol=1e-12)


def test_edges_grow_with_disturbance(regions, timings, design, tables):
    prev = None
    for W in (0.0, 1e-3, 1e-2, 1e-1):
        e = set(edges(compute_reach(regions, timings, design, W, tables.sigma, tables.l),
                      regions))
        if prev is not None:
            assert prev <= e
        prev = e


def test_edge_set_properties(summaries, regions):
    e = edges(summaries, regions)
    assert e == sorted(set(e))
    sources = {s for s, _ in e}
    assert sources == set(range(1, 21))
    es = set(e)
    for s, t in e:
        assert ((s + 9) % 20 + 1, (t + 9) % 20 + 1) in es
    tab = edges_table(e)
    assert list(tab) == ["s", "t"] and len(tab["s"]) == len(e)


def test_saturated_region_has_full_circle(summaries, timings):
    for summ, t in zip(summaries, timings):
        if t.saturated_hi:
            assert summ.full_circle


def test_nominal_arcs_needs_two_points(regions, design):
    with pytest.raises(ValueError):
        nominal_arcs(regions[0], design, 0.1, 0.2, 1)
