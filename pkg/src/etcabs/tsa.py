"""Timed safety automaton over the conic regions.

Each region becomes a location with invariant ``c <= ceil(tau_hi * scale)``;
each transition ``(s, t)`` carries the guard
``floor(tau_lo_s * scale) <= c <= ceil(tau_hi_s * scale)``, the action ``*``
and the reset ``c := 0``.  Rounding outward keeps the integer automaton an
over-approximation of the real-valued bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from etcabs.model_io import MAX_TICKS

FORMATS = ("uppaal-xml", "json", "dot")


class AutomatonError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    g_lo: int
    g_hi: int
    action: str = "*"
    reset: str = "c"


@dataclass(frozen=True)
class TimedSafetyAutomaton:
    locations: tuple          # region indices
    invariants: tuple         # ticks, aligned with locations
    edges: tuple              # Edge, sorted by (source, target)
    initial: int | None
    time_scale: int
    clock: str = "c"

    def label(self, s: int) -> str:
        return f"R{s}"

    def invariant_of(self, s: int) -> int:
        return self.invariants[self.locations.index(s)]

    def out_edges(self, s: int) -> list[Edge]:
        return [e for e in self.edges if e.source == s]


def quantize(tau_lo: float, tau_hi: float, scale: int) -> tuple[int, int]:
    # the tiny slack absorbs representation error such as 0.29 * 100 = 28.999...
    lo = int(math.floor(tau_lo * scale * (1 + 1e-12) + 1e-9))
    if lo / scale > tau_lo:
        lo -= 1
    hi = int(math.ceil(tau_hi * scale * (1 - 1e-12) - 1e-9))
    if hi / scale < tau_hi:
        hi += 1
    if hi > MAX_TICKS:
        raise AutomatonError("quantized bound overflows the tick range")
    return max(lo, 0), hi


def assemble(timings, edge_set: Sequence[tuple[int, int]], initial_region: int | None,
             time_scale: int) -> TimedSafetyAutomaton:
    if time_scale < 1:
        raise AutomatonError("time_scale must be >= 1")
    by_s = {t.s: t for t in timings}
    locs = tuple(sorted(by_s))
    q = {s: quantize(by_s[s].tau_lo, by_s[s].tau_hi, time_scale) for s in locs}
    out = []
    for s, t in sorted(set(edge_set)):
        if s not in by_s:
            raise AutomatonError(f"region {s} has no timing")
        if t not in by_s:
            raise AutomatonError(f"edge ({s}, {t}) references unknown region {t}")
        out.append(Edge(source=s, target=t, g_lo=q[s][0], g_hi=q[s][1]))
    if initial_region is not None and initial_region not in by_s:
        raise AutomatonError(f"initial region {initial_region} unknown")
    return TimedSafetyAutomaton(locations=locs, invariants=tuple(q[s][1] for s in locs),
                                edges=tuple(out), initial=initial_region,
                                time_scale=time_scale)


# export -------------------------------------------------------------------

def _to_dict(a: TimedSafetyAutomaton) -> dict:
    return {
        "clock": a.clock,
        "time_scale": a.time_scale,
        "initial": a.initial,
        "locations": [{"id": s, "name": a.label(s), "invariant": inv}
                      for s, inv in zip(a.locations, a.invariants)],
        "edges": [{"source": e.source, "target": e.target, "guard": [e.g_lo, e.g_hi],
                   "action": e.action, "reset": [e.reset]} for e in a.edges],
    }


def from_json(data: bytes | str) -> TimedSafetyAutomaton:
    doc = json.loads(data)
    locs = doc["locations"]
    return TimedSafetyAutomaton(
        locations=tuple(l["id"] for l in locs),
        invariants=tuple(l["invariant"] for l in locs),
        edges=tuple(Edge(source=e["source"], target=e["target"], g_lo=e["guard"][0],
                         g_hi=e["guard"][1], action=e["action"], reset=e["reset"][0])
                    for e in doc["edges"]),
        initial=doc["initial"], time_scale=doc["time_scale"], clock=doc["clock"])


def _xml(a: TimedSafetyAutomaton) -> str:
    c = a.clock
    lines = ['<?xml version="1.0" encoding="utf-8"?>',
             "<nta>",
             f"  <declaration>clock {c};</declaration>",
             "  <template>",
             "    <name>Sampler</name>"]
    cols = max(1, int(math.ceil(math.sqrt(len(a.locations)))))
    for k, (s, inv) in enumerate(zip(a.locations, a.invariants)):
        x, y = 150 * (k % cols), 150 * (k // cols)
        lines += [f'    <location id="id{s}" x="{x}" y="{y}">',
                  f"      <name>{a.label(s)}</name>",
                  f'      <label kind="invariant">{escape(f"{c} <= {inv}")}</label>',
                  "    </location>"]
    if a.initial is None:
        lines += ['    <location id="id0" x="-150" y="-150">',
                  "      <name>Start</name>",
                  "      <committed/>",
                  "    </location>",
                  '    <init ref="id0"/>']
        for s in a.locations:
            lines += ['    <transition>',
                      '      <source ref="id0"/>',
                      f'      <target ref="id{s}"/>',
                      f'      <label kind="assignment">{c} = 0</label>',
                      "    </transition>"]
    else:
        lines.append(f'    <init ref="id{a.initial}"/>')
    for e in a.edges:
        guard = escape(f"{c} >= {e.g_lo} && {c} <= {e.g_hi}")
        lines += ["    <transition>",
                  f'      <source ref="id{e.source}"/>',
                  f'      <target ref="id{e.target}"/>',
                  f'      <label kind="guard">{guard}</label>',
                  f'      <label kind="assignment">{e.reset} = 0</label>',
                  "    </transition>"]
    lines += ["  </template>", "  <system>system Sampler;</system>", "</nta>"]
    return "\n".join(lines) + "\n"


def _dot(a: TimedSafetyAutomaton) -> str:
    lines = ["digraph tsa {", "  rankdir=LR;"]
    for s, inv in zip(a.locations, a.invariants):
        shape = "doublecircle" if s == a.initial else "circle"
        lines.append(f'  R{s} [shape={shape}, label="R{s}\\n{a.clock}<={inv}"];')
    for e in a.edges:
        lines.append(f'  R{e.source} -> R{e.target} [label="[{e.g_lo},{e.g_hi}]"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(a: TimedSafetyAutomaton, fmt: str) -> bytes:
    if fmt == "uppaal-xml":
        return _xml(a).encode("utf-8")
    if fmt == "json":
        return (json.dumps(_to_dict(a), indent=2) + "\n").encode("utf-8")
    if fmt == "dot":
        return _dot(a).encode("utf-8")
    raise AutomatonError(f"unsupported format {fmt!r}; choose from {FORMATS}")


# trace acceptance ---------------------------------------------------------

@dataclass(frozen=True)
class Acceptance:
    accepted: bool
    step: int | None = None
    reason: str = ""


def accepts_trace(a: TimedSafetyAutomaton, regions: Sequence[int], dwells: Sequence[float],
                  tol: float = 1e-3) -> Acceptance:
    """Check a sampled run: ``regions[k]`` dwells ``dwells[k]`` s before moving to ``regions[k+1]``.

    ``dwells`` may be one shorter than ``regions`` or the same length; a final
    dwell without successor only has to respect the invariant.  Dwell times are
    compared against the quantized constraints with slack ``tol`` seconds.
    """
    if a.initial is not None and regions and regions[0] != a.initial:
        return Acceptance(False, 0, f"trace starts in R{regions[0]}, not R{a.initial}")
    scale = a.time_scale
    edge_map = {(e.source, e.target): e for e in a.edges}
    for k, dwell in enumerate(dwells):
        s = regions[k]
        if s not in a.locations:
            return Acceptance(False, k, f"unknown location R{s}")
        ticks = dwell * scale
        if ticks > a.invariant_of(s) + tol * scale:
            return Acceptance(False, k, f"dwell {dwell:.6g}s violates invariant of R{s}")
        if k + 1 < len(regions):
            e = edge_map.get((s, regions[k + 1]))
            if e is None:
                return Acceptance(False, k, f"no edge R{s} -> R{regions[k + 1]}")
            if not (e.g_lo - tol * scale <= ticks <= e.g_hi + tol * scale):
                return Acceptance(False, k, f"dwell {dwell:.6g}s outside guard of "
                                            f"R{s} -> R{regions[k + 1]}")
    return Acceptance(True)
