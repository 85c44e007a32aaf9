"""Acceptance criteria on the published example.

Each test records one ``PASS``/``FAIL`` line (printed in the terminal summary)
and then asserts, so a red criterion also shows up as a failed test.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from etcabs import properties as pr
from etcabs.bounds import audit_upper
from etcabs.cli import main
from etcabs.model_io import load_manifest, with_overrides
from etcabs.partition import sector_extrema
from etcabs.pipeline import VALIDATION_POLICIES, Run
from etcabs.trigger import lmax, phi_at, theta_at

MANIFEST = Path(__file__).resolve().parents[1] / "manifests" / "reference.json"
pytestmark = pytest.mark.slow


def record(k, ok, text):
    ACCEPTANCE[k] = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {text}"
    return ok


@pytest.fixture(scope="module")
def run():
    return Run(load_manifest(MANIFEST))


@pytest.fixture(scope="module")
def corpus(run):
    return run.simulate()


@pytest.fixture(scope="module")
def violations(run, corpus):
    return run.check_corpus(corpus)


def test_c01_riccati_gain(run):
    K = run.design.K[0]
    err = np.abs(K - [0.2361, 6.2367]).max()
    assert record(1, err <= 5e-4, f"K = [{K[0]:.6f}, {K[1]:.6f}], max |dK| = {err:.2e} (tol 5e-4)")


def test_c02_partition_cardinality(run):
    q = len(run.regions)
    assert record(2, q == 20, f"{q} locations for m_bar = 10, n = 2 (expected 20)")


def test_c03_precision(run):
    eps = run.epsilon
    per = ", ".join(f"R{t.s}=[{t.tau_lo:.4f},{t.tau_hi:.4f}]" for t in run.timings[:10])
    ok = 4.9 <= eps.epsilon <= 7.3
    print(f"epsilon = {eps.epsilon!r} (regions {eps.tied}); bounds: {per}")
    assert record(3, ok, f"epsilon = {eps.epsilon:.6f} from regions {list(eps.tied)} "
                         f"(target [4.9, 7.3])")


def test_c04_lower_soundness(run, corpus, violations):
    pols = {tok.split("(")[0] for tok, _, _ in corpus}
    assert {"zero", "max-aligned", "sinusoid", "random-phase"} <= pols
    assert violations.traces >= 100
    n = len(violations.lower)
    assert record(4, n == 0, f"{n} lower-bound violations in {violations.events} events, "
                             f"{violations.traces} traces, policies {sorted(pols)}")


def test_c05_upper_soundness(violations):
    n = len(violations.upper)
    assert record(5, n == 0, f"{n} upper-bound violations (non-cap events, tol 1e-3 s)")


def test_c06_transition_soundness(violations):
    m, r = len(violations.missing_edges), len(violations.rejected)
    assert record(6, m == 0 and r == 0,
                  f"{m} missing edges, {r} traces rejected by the automaton acceptor")


def test_c07_embedding_audit(run):
    # restricted to the region: sup over the cone of [x;w]'Phi[x;w] is x'Theta x,
    # because the lower-right block of Phi is negative definite
    W, d = run.W, run.design
    worst_lo, worst_up = -math.inf, math.inf
    full_phi = -math.inf
    for r, t in zip(run.regions[:10], run.timings[:10]):
        for s in np.linspace(0.0, t.tau_lo, 1000):
            T = theta_at(d, W, float(s))
            worst_lo = max(worst_lo, sector_extrema(T, r.theta_lo, r.theta_hi)[1])
            full_phi = max(full_phi, lmax(phi_at(d, W, float(s)).Phi))
        for leaf in t.hi_leaves:
            worst_up = min(worst_up, audit_upper(d, W, leaf, leaf.tau_hi, leaf.certified_until,
                                                 run.cfg.splits, samples=1000))
    ok = worst_lo <= 1e-7 and worst_up >= -1e-7
    assert record(7, ok, f"cone-restricted max on [0, tau_lo] = {worst_lo:.3e} (<= 1e-7), "
                         f"min on certified firing windows = {worst_up:.3e} (>= -1e-7); "
                         f"unrestricted lambda_max(Phi) reaches {full_phi:.3e}")


def test_c08_property_suites(run):
    spec = pr.RandomInstanceSpec(samples=1000, seed=0)
    reps = [pr.check_matrix_young(spec), pr.check_log_norm(spec), pr.check_jensen(spec),
            pr.check_bounding_chain(run.design, run.W, samples=1000, seed=0),
            pr.check_cone_feasible_grid(spec)]
    ok = all(r.passed and r.samples == 1000 for r in reps)
    txt = ", ".join(f"{r.name} {r.failures}/{r.samples}" for r in reps)
    assert record(8, ok, f"failures: {txt}")


def test_c09_refinement_monotonicity(run):
    m = run.m
    fine = Run(with_overrides(m, {"config.m_bar": 20}))
    calm = Run(with_overrides(m, {"plant.W": 0.0}))
    e10, e20 = run.epsilon.epsilon, fine.epsilon.epsilon
    lo10 = min(t.tau_lo for t in run.timings)
    lo20 = min(t.tau_lo for t in fine.timings)
    w_ok = all(c.tau_lo >= b.tau_lo for b, c in zip(run.timings, calm.timings))
    ok = e20 <= e10 and lo20 >= lo10 and w_ok
    assert record(9, ok, f"eps {e10:.4f} -> {e20:.4f} (m_bar 10 -> 20), min tau_lo "
                         f"{lo10:.6f} -> {lo20:.6f}; W -> 0 keeps every tau_lo: {w_ok}")


def test_c10_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pipeline", str(MANIFEST), "--out", str(a), "--threads", "1"]) == 0
    assert main(["pipeline", str(MANIFEST), "--out", str(b), "--threads", "4"]) == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*")
                   if p.suffix in (".csv", ".xml", ".json") and p.name != "timings.json")
    diff = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    assert record(10, bool(files) and not diff,
                  f"{len(files)} artifacts compared across --threads 1/4, {len(diff)} differ")
