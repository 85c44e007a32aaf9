"""Command-line front end.

Exit codes: 0 success, 2 validation violations, 1 errors.  Progress and
warnings go to standard error; standard output only carries the report path.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from etcabs.model_io import ManifestError, load_manifest, with_overrides
from etcabs.pipeline import STAGES, Run, StageError, emit_stage, write_report

log = logging.getLogger("etcabs")

# stages each subcommand emits
COMMAND_STAGES = {
    "design": ("design",),
    "bounds": ("design", "bounds"),
    "reach": ("design", "bounds", "reach"),
    "automaton": ("design", "bounds", "reach", "automaton"),
    "simulate": ("simulate",),
}


def _parse_set(values):
    out = {}
    for item in values or []:
        if "=" not in item:
            raise ManifestError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            out[key.strip()] = raw
    return out


def _threads(ns) -> int:
    if ns.threads is not None:
        return ns.threads
    env = os.environ.get("ETCABS_THREADS")
    return int(env) if env else 1


def _parse_x0(text):
    if text is None:
        return None
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="etcabs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("manifest", type=Path, help="run manifest (JSON)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $ETCABS_THREADS or 1)")
        sp.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a manifest field, e.g. config.sigma=4")
        sp.add_argument("--x0", default=None,
                        help="initial state 'x1,x2' fixing the automaton's initial location")
        return sp

    for name in ("design", "bounds", "reach", "automaton"):
        common(sub.add_parser(name, help=f"run the pipeline up to the {name} stage"))
    sp = common(sub.add_parser("simulate", help="simulate the validation corpus"))
    sp.add_argument("--traces", type=int, default=None)
    sp = common(sub.add_parser("validate", help="soundness harness on simulated traces"))
    sp.add_argument("--traces", type=int, default=None)
    sp.add_argument("--recompute", action="store_true",
                    help="recompute bounds and edges instead of reading them from --out")
    sp.add_argument("--properties", action="store_true",
                    help="also run the randomized property checks")
    sp = common(sub.add_parser("pipeline", help="run every stage"))
    sp.add_argument("--stages", default=",".join(STAGES),
                    help=f"comma-separated subset of {','.join(STAGES)}")
    sp.add_argument("--traces", type=int, default=None)
    return p


def _load(ns):
    overrides = _parse_set(ns.set)
    if ns.seed is not None:
        overrides["seed"] = ns.seed
    if getattr(ns, "traces", None) is not None:
        overrides["config.traces"] = ns.traces
    m = load_manifest(ns.manifest)
    if overrides:
        m = with_overrides(m, overrides)
    out = ns.out if ns.out is not None else m.out_dir
    if not out.is_absolute() and ns.out is None:
        out = ns.manifest.parent / out
    return m, out


def _property_report(run: Run) -> dict:
    from etcabs import properties as pr

    reps = [pr.check_matrix_young(), pr.check_log_norm(), pr.check_jensen(),
            pr.check_cone_feasible_grid(),
            pr.check_bounding_chain(run.design, run.W, seed=run.m.seed),
            pr.check_schur_consistency(run.design, run.W, seed=run.m.seed),
            pr.check_lower_bound_consequence(run.design, run.W, run.timings, run.tau_prime.tau,
                                          seed=run.m.seed, q=run.q, cap=run.cfg.sigma)]
    return {r.name: r.as_dict() for r in reps}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        m, out = _load(ns)
        run = Run(m, threads=_threads(ns), x0=_parse_x0(ns.x0))
        report: dict = {}
        rc = 0
        if ns.command in COMMAND_STAGES:
            stages = COMMAND_STAGES[ns.command]
        elif ns.command == "validate":
            stages = ("validate",)
        else:
            stages = tuple(s.strip() for s in ns.stages.split(",") if s.strip())
            bad = [s for s in stages if s not in STAGES]
            if bad:
                raise ManifestError("--stages", f"unknown stage(s) {bad}")

        if ns.command == "validate" and not ns.recompute:
            missing = [f for f in ("bounds.csv", "edges.csv") if not (out / f).exists()]
            if missing:
                log.error("missing artifacts %s in %s (use --recompute)", missing, out)
                return 1
            run.load_artifacts(out)

        corpus = None
        if "simulate" in stages or "validate" in stages:
            if m.config.traces == 0:
                log.warning("empty validation corpus (traces = 0)")
            corpus = run.simulate()
        for stage in STAGES:
            if stage in stages:
                log.info("stage %s", stage)
                emit_stage(run, stage, out, report, corpus)
        if "validation" in report:
            if ns.command == "validate" and ns.properties:
                props = _property_report(run)
                report["properties"] = props
                if not all(p["passed"] for p in props.values()):
                    rc = 2
            v = report["validation"]
            nviol = (v["lower_violations"] + v["upper_violations"] + v["missing_edges"]
                     + v["rejected_traces"])
            if nviol:
                ex = v["examples"]
                regions = sorted({e["region"] for e in ex["lower"] + ex["upper"]})
                log.error("validation found %d violation(s); regions %s", nviol, regions)
                rc = 2
        path = write_report(run, out, report)
        print(path)
        return rc
    except ManifestError as exc:
        log.error("invalid manifest: %s", exc)
        return 1
    except StageError as exc:
        log.error("%s", exc)
        return 1
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
