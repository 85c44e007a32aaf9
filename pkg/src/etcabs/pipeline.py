"""Stage orchestration shared by the command-line interface and the tests.

Stages are computed lazily and cached on a :class:`Run`; writing artifacts
is separate from computing them so a partial run can emit only what was
asked for.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from etcabs import kernels
from etcabs.bounds import (RegionTiming, audit_lower, audit_upper, bounds_table,
                           compute_timings, precision_epsilon)
from etcabs.design import make_design
from etcabs.model_io import RunManifest, emit_csv, manifest_to_dict, read_csv
from etcabs.partition import locate, make_cones, regions_table
from etcabs.reach import compute_reach, edges, edges_table
from etcabs.sim import Policy, SimConfig, Trace, run as run_sim
from etcabs.taylor import ROUNDOFF_FLOOR, build_tables, estimate_eta
from etcabs.trigger import global_tau_prime, validate_sigma
from etcabs.tsa import accepts_trace, assemble, export

log = logging.getLogger(__name__)

STAGES = ("design", "bounds", "reach", "automaton", "simulate", "validate")
VALIDATION_POLICIES = ("zero", "max-aligned", "sinusoid", "random-phase", "anti-aligned")

NOTES = [
    "truncation margins are sampled per cell and scaled by a fixed safety factor; "
    "they are not a closed-form remainder bound",
    "disturbance reach radius uses sqrt(W), consistent with |w|^2 <= W|x|^2",
    "upper bounds certify that every state of the region has triggered; "
    "saturated regions fall back to sigma",
]


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage}: {exc}")
        self.stage = stage


@dataclass
class Violations:
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    missing_edges: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    events: int = 0
    traces: int = 0

    @property
    def total(self) -> int:
        return len(self.lower) + len(self.upper) + len(self.missing_edges) + len(self.rejected)

    def as_dict(self) -> dict:
        return {"traces": self.traces, "events": self.events,
                "lower_violations": len(self.lower), "upper_violations": len(self.upper),
                "missing_edges": len(self.missing_edges), "rejected_traces": len(self.rejected),
                "examples": {"lower": self.lower[:5], "upper": self.upper[:5],
                             "missing_edges": self.missing_edges[:5],
                             "rejected": self.rejected[:5]}}


def _timed(fn):
    name = fn.__name__

    def wrapper(self):
        t0 = time.perf_counter()
        try:
            out = fn(self)
        except Exception as exc:  # surfaced with the stage name
            raise StageError(name.lstrip("_"), exc) from exc
        self.wall[name] = self.wall.get(name, 0.0) + time.perf_counter() - t0
        return out

    wrapper.__name__ = name
    return cached_property(wrapper)


class Run:
    def __init__(self, manifest: RunManifest, threads: int = 1, x0: Sequence[float] | None = None):
        self.m = manifest
        self.cfg = manifest.config
        self.W = manifest.plant.W
        self.threads = max(1, int(threads))
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.wall: dict[str, float] = {}
        self._timings_override: list[RegionTiming] | None = None
        self._edges_override: list | None = None

    # computation ------------------------------------------------------------

    @_timed
    def design(self):
        return make_design(self.m.plant, self.cfg.psi_scale)

    @_timed
    def tau_prime(self):
        return global_tau_prime(self.design, self.W, self.cfg.sigma, 4 * self.cfg.l)

    @_timed
    def sigma_check(self):
        chk = validate_sigma(self.design, self.W, self.cfg.sigma, self.cfg.splits)
        if not chk.passed or not chk.all_triggered:
            log.warning("sigma check: %s", chk.message)
        return chk

    @cached_property
    def regions(self):
        return make_cones(self.cfg.m_bar, self.m.plant.n)

    @property
    def q(self) -> int:
        return len(self.regions)

    @_timed
    def tables(self):
        t = build_tables(self.design, self.W, self.cfg.sigma, self.cfg.l, self.cfg.n_conv,
                         self.cfg.splits)
        return estimate_eta(t, self.design, self.cfg.eta_samples)

    @_timed
    def timings(self):
        if self._timings_override is not None:
            return self._timings_override
        return compute_timings(self.regions, self.tables, self.threads, self.cfg.heartbeat,
                               self.cfg.sector_depth)

    @cached_property
    def epsilon(self):
        return precision_epsilon(self.timings)

    @_timed
    def audits(self):
        """Cone-restricted sampled audits of the certified windows, per antipodal pair."""
        out = []
        for r in self.regions:
            if r.mirror_of is not None and r.index > r.mirror_of:
                continue
            t = self.timings[r.index - 1]
            lo = audit_lower(self.design, self.W, r, t.tau_lo)
            up = None
            if t.hi_leaves:
                up = min(audit_upper(self.design, self.W, f, f.tau_hi, f.certified_until,
                                     self.cfg.splits) for f in t.hi_leaves)
            out.append({"s": r.index, "max_theta_lower": lo, "min_theta_upper": up,
                        "upper_sub_sectors": len(t.hi_leaves)})
        return out

    @_timed
    def reach(self):
        return compute_reach(self.regions, self.timings, self.design, self.W,
                             self.cfg.sigma, self.cfg.l, self.threads)

    @_timed
    def edges(self):
        if self._edges_override is not None:
            return self._edges_override
        return edges(self.reach, self.regions)

    @cached_property
    def initial_region(self):
        return None if self.x0 is None else locate(self.x0, self.q)

    @_timed
    def automaton(self):
        return assemble(self.timings, self.edges, self.initial_region, self.cfg.time_scale)

    def sim_config(self, policy: Policy) -> SimConfig:
        cap = self.cfg.sigma if self.cfg.heartbeat is None else min(self.cfg.sigma,
                                                                   self.cfg.heartbeat)
        return SimConfig(horizon=self.cfg.sim_horizon, dt=self.cfg.sim_dt, policy=policy,
                         event_tolerance=self.cfg.event_tolerance, cap=cap, seed=self.m.seed)

    def simulate(self, traces: int | None = None, seed: int | None = None) -> list[tuple]:
        """Validation corpus: ``(policy token, x0, Trace)`` per trace."""
        traces = self.cfg.traces if traces is None else traces
        seed = self.m.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0.0, 2.0 * math.pi, traces)
        seeds = rng.integers(0, 2 ** 31 - 1, traces)
        jobs = []
        for i in range(traces):
            name = VALIDATION_POLICIES[i % len(VALIDATION_POLICIES)]
            pol = Policy(name, seed=int(seeds[i]))
            x0 = np.array([math.cos(angles[i]), math.sin(angles[i])])
            jobs.append((pol, x0))

        def work(job):
            pol, x0 = job
            return pol.token(), x0, run_sim(self.design, self.W, x0, self.sim_config(pol), self.q)

        t0 = time.perf_counter()
        try:
            if self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as pool:
                    out = list(pool.map(work, jobs))
            else:
                out = [work(j) for j in jobs]
        except Exception as exc:
            raise StageError("simulate", exc) from exc
        self.wall["simulate"] = self.wall.get("simulate", 0.0) + time.perf_counter() - t0
        return out

    def check_corpus(self, corpus, tol: float = 1e-3) -> Violations:
        by_s = {t.s: t for t in self.timings}
        E = set(self.edges)
        acceptor = assemble(self.timings, self.edges, None, self.cfg.time_scale)
        v = Violations(traces=len(corpus))
        for i, (tok, _x0, tr) in enumerate(corpus):
            for k, tau in enumerate(tr.tau):
                v.events += 1
                s = int(tr.regions[k])
                t = by_s[s]
                if tau < t.tau_lo - tol:
                    v.lower.append({"trace": i, "policy": tok, "k": k, "region": s,
                                    "tau": float(tau), "tau_lo": t.tau_lo})
                if not tr.cap_hit[k] and tau > t.tau_hi + tol:
                    v.upper.append({"trace": i, "policy": tok, "k": k, "region": s,
                                    "tau": float(tau), "tau_hi": t.tau_hi})
                nxt = int(tr.regions[k + 1])
                if nxt and (s, nxt) not in E:
                    v.missing_edges.append({"trace": i, "policy": tok, "k": k,
                                            "edge": [s, nxt]})
            regs = [int(r) for r in tr.regions if r]
            acc = accepts_trace(acceptor, regs, list(tr.tau), tol)
            if not acc.accepted:
                v.rejected.append({"trace": i, "policy": tok, "step": acc.step,
                                   "reason": acc.reason})
        return v

    # loading ----------------------------------------------------------------

    def load_artifacts(self, out: Path) -> None:
        """Use bounds and edges from an earlier run instead of recomputing them."""
        b = read_csv((out / "bounds.csv").read_bytes())
        timings = []
        for i, s in enumerate(b["s"]):
            timings.append(RegionTiming(s=int(s), theta_lo=float(b["theta_lo"][i]),
                                        theta_hi=float(b["theta_hi"][i]),
                                        tau_lo=float(b["tau_lo"][i]),
                                        tau_hi=float(b["tau_hi"][i]),
                                        saturated_hi=b["saturated"][i] == "true"))
        e = read_csv((out / "edges.csv").read_bytes())
        self._timings_override = timings
        self._edges_override = sorted((int(a), int(c)) for a, c in zip(e.get("s", []),
                                                                       e.get("t", [])))

    # reporting --------------------------------------------------------------

    def design_section(self) -> dict:
        d = self.design.summary()
        tp = self.tau_prime
        chk = self.sigma_check
        d["tau_prime"] = {"tau": tp.tau, "enabled": tp.enabled}
        d["sigma_check"] = {"sigma": chk.sigma, "lambda_max_phi": chk.lmax_phi,
                            "passed": chk.passed, "all_triggered": chk.all_triggered,
                            "message": chk.message}
        return d

    def bounds_section(self) -> dict:
        t = self.tables
        eps = self.epsilon
        return {
            "backend": kernels.BACKEND,
            "eta": {"max_lower": float(t.eta_lo.max()), "max_upper": float(t.eta_up.max()),
                    "first_cell_lower": float(t.eta_lo[0]), "safety_factor": 1.1,
                    "roundoff_floor": ROUNDOFF_FLOOR,
                    "samples_per_cell": self.cfg.eta_samples},
            "regions": [{"s": r.s, "tau_lo": r.tau_lo, "tau_hi": r.tau_hi,
                         "saturated": r.saturated_hi, "certified_until": r.certified_until,
                         "nonmonotone": r.nonmonotone} for r in self.timings],
            "epsilon": eps.epsilon, "epsilon_region": eps.region, "epsilon_tied": list(eps.tied),
            "min_tau_lo": min(r.tau_lo for r in self.timings),
            "audit": self.audits,
        }

    def reach_section(self) -> dict:
        return {"edge_count": len(self.edges),
                "full_circle": [s.s for s in self.reach if s.full_circle],
                "rho_max": {str(s.s): s.rho_max for s in self.reach}}

    def automaton_section(self) -> dict:
        a = self.automaton
        return {"locations": len(a.locations), "edges": len(a.edges),
                "initial": a.initial, "time_scale": a.time_scale,
                "max_invariant": max(a.invariants)}


def write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def emit_stage(run: Run, stage: str, out: Path, report: dict, corpus=None) -> None:
    if stage == "design":
        report["design"] = run.design_section()
    elif stage == "bounds":
        write_bytes(out / "bounds.csv", emit_csv(bounds_table(run.timings)))
        write_bytes(out / "regions.csv", emit_csv(regions_table(run.regions)))
        report["bounds"] = run.bounds_section()
    elif stage == "reach":
        write_bytes(out / "edges.csv", emit_csv(edges_table(run.edges)))
        report["reach"] = run.reach_section()
    elif stage == "automaton":
        a = run.automaton
        write_bytes(out / "automaton.xml", export(a, "uppaal-xml"))
        write_bytes(out / "automaton.json", export(a, "json"))
        write_bytes(out / "automaton.dot", export(a, "dot"))
        report["automaton"] = run.automaton_section()
    elif stage == "simulate":
        by = run.timings
        for i, (tok, x0, tr) in enumerate(corpus):
            write_bytes(out / "traces" / f"trace_{i:03d}.csv", emit_csv(tr.table(by)))
        report["simulate"] = {"traces": len(corpus),
                              "events": int(sum(len(tr.tau) for _, _, tr in corpus)),
                              "cap_hits": int(sum(tr.cap_hit.sum() for _, _, tr in corpus))}
    elif stage == "validate":
        v = run.check_corpus(corpus)
        report["validation"] = v.as_dict()
    else:
        raise ValueError(f"unknown stage {stage!r}")


def write_report(run: Run, out: Path, report: dict) -> Path:
    report = {"manifest": manifest_to_dict(run.m), **report, "notes": NOTES}
    path = out / "report.json"
    write_bytes(path, (json.dumps(report, indent=2, sort_keys=False, default=_jsonable)
                       + "\n").encode("utf-8"))
    write_bytes(out / "timings.json",
                (json.dumps({k.lstrip("_"): v for k, v in run.wall.items()}, indent=2)
                 + "\n").encode("utf-8"))
    return path


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")
