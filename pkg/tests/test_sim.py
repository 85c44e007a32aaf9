import math

import numpy as np
import pytest
from scipy.optimize import brentq

from etcabs.sim import POLICIES, Policy, SimConfig, Trace, make_disturbance, run, step_interval
from etcabs.trigger import transition_at


def _exact_zero_dist_tau(design, x):
    def f(t):
        e = x - transition_at(design, t).Lambda @ x
        return e @ design.M @ e - x @ design.N @ x

    t = 1e-4
    while f(t) < 0:
        t += 1e-4
    return brentq(f, t - 1e-4, t, xtol=1e-14)


@pytest.mark.parametrize("phi", [0.1, 1.0, 2.0, 2.7, 4.0])
def test_trigger_time_exact_without_disturbance(design, plant, phi):
    x = np.array([math.cos(phi), math.sin(phi)])
    d = make_disturbance(Policy("zero"), design, plant.W, x, 0.0)
    res = step_interval(design, x, d, 1e-4, 1e-9, 8.0)
    ref = _exact_zero_dist_tau(design, x)
    assert res.tau == pytest.approx(ref, abs=1e-8)
    np.testing.assert_allclose(res.x_next, transition_at(design, res.tau).Lambda @ x,
                               atol=1e-9)
    e = x - res.x_next
    # residual of the trigger condition: slope times the bisection tolerance
    assert abs(e @ design.M @ e - x @ design.N @ x) < 1e-6
    y = transition_at(design, res.tau - 1e-9).Lambda @ x
    assert (x - y) @ design.M @ (x - y) - x @ design.N @ x < 0


@pytest.mark.parametrize("pol", ["max-aligned", "anti-aligned", "sinusoid(2)", "random-phase(3)"])
def test_step_refinement_converges(design, pol):
    W = 0.05
    x = np.array([0.3, -1.2])
    p = Policy.parse(pol)
    taus = []
    for dt in (1e-3, 1e-4):
        d = make_disturbance(p, design, W, x, 0.25, np.random.default_rng(7))
        taus.append(step_interval(design, x, d, dt, 1e-9, 8.0).tau)
    assert abs(taus[0] - taus[1]) < 1e-3


def test_halving_dt_changes_little(design, plant):
    cfg = lambda dt: SimConfig(horizon=2.0, dt=dt, policy=Policy("max-aligned"))
    a = run(design, plant.W, [1.0, 1.0], cfg(2e-4))
    b = run(design, plant.W, [1.0, 1.0], cfg(1e-4))
    k = min(len(a.tau), len(b.tau), 10)
    np.testing.assert_allclose(a.tau[:k], b.tau[:k], atol=1e-3)


@pytest.mark.parametrize("name", POLICIES)
def test_disturbance_respects_bound(design, plant, name):
    tr = run(design, plant.W, [0.5, -0.7],
             SimConfig(horizon=3.0, policy=Policy(name, freq=5.0, seed=2)), q=20)
    norms = np.linalg.norm(tr.x[:-1], axis=1)
    assert np.all(tr.omega_max <= math.sqrt(plant.W) * norms * (1 + 1e-12))
    if name == "zero":
        assert np.all(tr.omega_max == 0)


def test_run_trace_shape(design, plant, timings):
    tr = run(design, plant.W, [1.0, 0.0], SimConfig(horizon=2.0), q=20)
    assert isinstance(tr, Trace)
    K = len(tr.tau)
    assert tr.x.shape == (K + 1, 2) and tr.t.shape == (K + 1,)
    assert tr.t[-1] <= 2.0 and np.all(np.diff(tr.t) > 0)
    np.testing.assert_allclose(np.diff(tr.t), tr.tau)
    tab = tr.table(timings)
    assert list(tab) == ["k", "t_k", "x1", "x2", "tau_k", "region", "tau_lo", "tau_hi", "cap_hit"]
    assert tr.regions[0] == 1
    # the closed loop is stable: the state shrinks
    assert np.linalg.norm(tr.x[-1]) < np.linalg.norm(tr.x[0])


def test_cap_hit(design):
    x = np.array([1.0, 0.0])
    d = make_disturbance(Policy("zero"), design, 0.0, x, 0.0)
    res = step_interval(design, x, d, 1e-4, 1e-6, 0.01)
    assert res.cap_hit and res.tau == pytest.approx(0.01)


def test_invalid_inputs(design, plant):
    with pytest.raises(ValueError):
        run(design, plant.W, [0.0, 0.0], SimConfig())
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(dt=1e-2, event_tolerance=1e-6)
    with pytest.raises(ValueError):
        Policy.parse("gaussian")
    with pytest.raises(ValueError):
        Policy.parse("zero(3)")


def test_policy_tokens():
    assert Policy.parse("sinusoid(2.5)") == Policy("sinusoid", freq=2.5)
    assert Policy.parse("random-phase(4)").token() == "random-phase(4)"
    assert Policy.parse(" max-aligned ").token() == "max-aligned"


def test_random_phase_reproducible(design, plant):
    cfg = SimConfig(horizon=1.0, policy=Policy("random-phase", seed=9))
    a = run(design, plant.W, [1.0, 2.0], cfg)
    b = run(design, plant.W, [1.0, 2.0], cfg)
    np.testing.assert_array_equal(a.tau, b.tau)
