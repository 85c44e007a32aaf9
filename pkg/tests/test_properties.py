import numpy as np
import pytest

from etcabs import properties as pr
from etcabs.trigger import global_tau_prime

SMALL = pr.RandomInstanceSpec(samples=300, seed=1)


def test_check_report_accounting():
    r = pr.CheckReport("x")
    r.record(-1.0)
    assert r.passed and r.samples == 1
    r.record(0.5, "bad")
    assert not r.passed and r.failures == 1 and r.examples == ["bad"] and r.worst == 0.5
    assert r.as_dict()["passed"] is False


@pytest.mark.parametrize("check", [pr.check_matrix_young, pr.check_log_norm, pr.check_jensen])
def test_matrix_inequalities(check):
    rep = check(SMALL)
    assert rep.samples == 300 and rep.passed, rep.examples


def test_log_norm_is_tight_for_normal_matrices():
    # for symmetric A equality holds; the check margin is then just the tolerance
    rep = pr.check_log_norm(pr.RandomInstanceSpec(samples=50, seed=3, dim_range=(1, 1)))
    assert rep.passed and rep.worst > -1e-6


def test_omega_integral_matches_closed_form(design):
    from etcabs.sim import Disturbance

    A, E = design.A, design.E
    d = Disturbance(np.array([0.2]), np.zeros(1), False, 0.0, 0.0)
    t = 0.4
    n = 2
    aug = np.zeros((4, 4))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    import scipy.linalg as sla

    F = sla.expm(aug * t)[:n, n:]
    np.testing.assert_allclose(pr._omega_integral(A, E, d, t), F @ E @ d.const, rtol=1e-10)


def test_bounding_chain(design, plant):
    assert pr.check_bounding_chain(design, plant.W, samples=200, seed=2).passed


def test_schur_consistency(design, plant):
    rep = pr.check_schur_consistency(design, plant.W, samples=300)
    assert rep.passed and rep.samples > 0


def test_lower_bound_consequence(design, plant, timings):
    tp = global_tau_prime(design, plant.W, 8.0, 3200).tau
    rep = pr.check_lower_bound_consequence(design, plant.W, timings, tp, samples=200, q=20)
    assert rep.passed, rep.examples


def test_cone_feasible_grid():
    rep = pr.check_cone_feasible_grid(pr.RandomInstanceSpec(samples=100, seed=4))
    assert rep.passed, rep.examples


def test_grid_oracle_on_known_instance():
    block = -np.eye(4)
    Q = np.eye(2)
    assert pr.grid_min_lmax(block, Q, points=100) == pytest.approx(-1.0)
