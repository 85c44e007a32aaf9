"""Problem description, run manifests and the shared CSV writer.

A manifest is a single JSON document::

    {
      "plant":   {"A": [[0, 1], [-2, 3]], "B": [[0], [1]], "E": [[0], [1]],
                  "W": 0.001, "gamma": 100, "beta": 0.25},
      "config":  {"n_conv": 7, "l": 800, "sigma": 8, "m_bar": 10},
      "outputs": {"dir": "out"},
      "seed": 0
    }

Omitted ``config`` entries take the defaults of :class:`AbstractionConfig`,
an omitted seed is 0.
"""
from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np


class ManifestError(ValueError):
    """Invalid manifest content; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True, eq=False)
class PlantSpec:
    """Perturbed LTI plant ``xi' = A xi + B nu + E omega``.

    ``state_weight`` is the scalar weight ``q`` of the ``qI`` state term in
    the Riccati equation ``PA + A'P + qI - PBB'P + PEE'P/gamma^2 = 0``.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    W: float
    gamma: float
    beta: float
    state_weight: float = 1.0

    def __post_init__(self):
        for name in ("A", "B", "E"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _check_plant(self)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PlantSpec):
            return NotImplemented
        return (np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)
                and np.array_equal(self.E, other.E) and self.W == other.W
                and self.gamma == other.gamma and self.beta == other.beta
                and self.state_weight == other.state_weight)


def _check_plant(p: PlantSpec, prefix: str = "plant") -> None:
    A, B, E = p.A, p.B, p.E
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ManifestError(f"{prefix}.A", f"must be a square matrix, got shape {A.shape}")
    n = A.shape[0]
    for name, arr in (("B", B), ("E", E)):
        if arr.ndim != 2 or arr.shape[0] != n:
            raise ManifestError(f"{prefix}.{name}",
                                f"dimension mismatch: {arr.shape[0]} rows, A is {n}x{n}")
    for name, arr in (("A", A), ("B", B), ("E", E)):
        if not np.all(np.isfinite(arr)):
            raise ManifestError(f"{prefix}.{name}", "non-finite entry")
    for name in ("W", "gamma", "beta", "state_weight"):
        v = getattr(p, name)
        if not math.isfinite(v):
            raise ManifestError(f"{prefix}.{name}", "non-finite value")
    if p.W < 0:
        raise ManifestError(f"{prefix}.W", "must be >= 0")
    if p.gamma <= 0:
        raise ManifestError(f"{prefix}.gamma", "must be > 0")
    if p.beta <= 0:
        raise ManifestError(f"{prefix}.beta", "must be > 0")
    if p.state_weight < 0:
        raise ManifestError(f"{prefix}.state_weight", "must be >= 0")


DEFAULT_SPLITS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.7)


@dataclass(frozen=True)
class AbstractionConfig:
    """Numerical parameters of the abstraction and of the validation runs."""

    n_conv: int = 7
    l: int = 800
    sigma: float = 8.0
    m_bar: int = 10
    psi_scale: float = 100.0
    eta_samples: int = 10
    time_scale: int = 1000
    # candidate weights of the Young split used by the upper-bound certificate
    splits: tuple = DEFAULT_SPLITS
    # deepest angular bisection of a region when certifying its upper bound
    sector_depth: int = 12
    # optional forced-sampling period; None disables it
    heartbeat: Optional[float] = None
    sim_horizon: float = 15.0
    sim_dt: float = 1e-4
    event_tolerance: float = 1e-6
    traces: int = 100

    def __post_init__(self):
        _check_config(self)


_INT_FIELDS = {"n_conv": 1, "l": 1, "m_bar": 2, "eta_samples": 2, "time_scale": 1, "traces": 0,
               "sector_depth": 0}
_POS_FIELDS = ("sigma", "psi_scale", "sim_horizon", "sim_dt", "event_tolerance")

# largest tick count a 32-bit clock constant may hold
MAX_TICKS = 2 ** 31 - 1


def _check_config(c: AbstractionConfig, prefix: str = "config") -> None:
    for name, low in _INT_FIELDS.items():
        v = getattr(c, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
            raise ManifestError(f"{prefix}.{name}", f"must be an integer, got {v!r}")
        if v < low:
            raise ManifestError(f"{prefix}.{name}", f"must be >= {low}")
    for name in _POS_FIELDS:
        v = getattr(c, name)
        if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
            raise ManifestError(f"{prefix}.{name}", f"must be a number, got {v!r}")
        if not math.isfinite(v):
            raise ManifestError(f"{prefix}.{name}", "non-finite value")
        if v <= 0:
            raise ManifestError(f"{prefix}.{name}", "must be > 0")
    if not isinstance(c.splits, tuple) or not c.splits:
        raise ManifestError(f"{prefix}.splits", "must be a non-empty array")
    for i, d in enumerate(c.splits):
        if isinstance(d, bool) or not isinstance(d, (int, float)) or not (0.0 < d < 1.0):
            raise ManifestError(f"{prefix}.splits[{i}]", f"must lie in (0, 1), got {d!r}")
    if c.heartbeat is not None and not (math.isfinite(c.heartbeat) and c.heartbeat > 0):
        raise ManifestError(f"{prefix}.heartbeat", "must be a positive number or null")
    if math.ceil(c.sigma * c.time_scale) > MAX_TICKS:
        raise ManifestError(f"{prefix}.time_scale", "sigma * time_scale overflows the tick range")
    if c.event_tolerance < c.sim_dt * 1e-3 * (1 - 1e-9):
        raise ManifestError(f"{prefix}.event_tolerance", "must be >= sim_dt * 1e-3")


@dataclass(frozen=True)
class RunManifest:
    plant: PlantSpec
    config: AbstractionConfig = field(default_factory=AbstractionConfig)
    outputs: Mapping[str, str] = field(default_factory=lambda: {"dir": "out"})
    seed: int = 0

    @property
    def out_dir(self) -> Path:
        return Path(self.outputs.get("dir", "out"))


_PLANT_KEYS = {"A", "B", "E", "W", "gamma", "beta", "state_weight"}
_TOP_KEYS = {"plant", "config", "outputs", "seed"}


def _matrix(value: Any, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ManifestError(path, "must be a non-empty nested array of numbers")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ManifestError(f"{path}[{i}]", "rows must be arrays")
        for k, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ManifestError(f"{path}[{i}][{k}]", f"not a number: {v!r}")
            if not math.isfinite(v):
                raise ManifestError(f"{path}[{i}][{k}]", "non-finite entry")
        rows.append(row)
    if len({len(r) for r in rows}) != 1:
        raise ManifestError(path, "ragged rows")
    return np.array(rows, dtype=float)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ManifestError(path, f"must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ManifestError(path, "non-finite value")
    return float(value)


def manifest_from_dict(doc: Mapping[str, Any]) -> RunManifest:
    if not isinstance(doc, Mapping):
        raise ManifestError("<root>", "document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ManifestError(sorted(unknown)[0], "unknown top-level key")
    if "plant" not in doc:
        raise ManifestError("plant", "missing required key")
    pd = doc["plant"]
    if not isinstance(pd, Mapping):
        raise ManifestError("plant", "must be an object")
    for key in sorted(set(pd) - _PLANT_KEYS):
        raise ManifestError(f"plant.{key}", "unknown key")
    for key in ("A", "B", "E", "W", "gamma", "beta"):
        if key not in pd:
            raise ManifestError(f"plant.{key}", "missing required key")
    plant = PlantSpec(
        A=_matrix(pd["A"], "plant.A"),
        B=_matrix(pd["B"], "plant.B"),
        E=_matrix(pd["E"], "plant.E"),
        W=_number(pd["W"], "plant.W"),
        gamma=_number(pd["gamma"], "plant.gamma"),
        beta=_number(pd["beta"], "plant.beta"),
        state_weight=_number(pd.get("state_weight", 1.0), "plant.state_weight"),
    )

    cd = doc.get("config", {})
    if not isinstance(cd, Mapping):
        raise ManifestError("config", "must be an object")
    names = {f.name for f in dataclasses.fields(AbstractionConfig)}
    for key in sorted(set(cd) - names):
        raise ManifestError(f"config.{key}", "unknown key")
    for key, value in cd.items():
        if key == "heartbeat" and value is None:
            continue
        if key == "splits":
            if not isinstance(value, list):
                raise ManifestError("config.splits", "must be an array of numbers")
            continue
        if key in _INT_FIELDS:
            if isinstance(value, float) and value.is_integer():
                raise ManifestError(f"config.{key}", f"must be an integer, got {value!r}")
        else:
            _number(value, f"config.{key}")
    if "splits" in cd:
        cd = {**cd, "splits": tuple(cd["splits"])}
    config = AbstractionConfig(**cd)

    od = doc.get("outputs", {"dir": "out"})
    if not isinstance(od, Mapping) or not all(isinstance(v, str) for v in od.values()):
        raise ManifestError("outputs", "must be an object of path strings")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ManifestError("seed", f"must be a nonnegative integer, got {seed!r}")
    return RunManifest(plant=plant, config=config, outputs=dict(od), seed=seed)


def parse_manifest(text: str | bytes) -> RunManifest:
    """Parse and validate a manifest document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError("<root>", f"malformed document: {exc}") from None
    return manifest_from_dict(doc)


def load_manifest(path: str | Path) -> RunManifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def manifest_to_dict(m: RunManifest) -> dict:
    p = m.plant
    return {
        "plant": {
            "A": p.A.tolist(), "B": p.B.tolist(), "E": p.E.tolist(),
            "W": p.W, "gamma": p.gamma, "beta": p.beta,
            "state_weight": p.state_weight,
        },
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in dataclasses.asdict(m.config).items()},
        "outputs": dict(m.outputs),
        "seed": m.seed,
    }


def dump_manifest(m: RunManifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2)


def with_overrides(m: RunManifest, overrides: Mapping[str, Any]) -> RunManifest:
    """Apply dotted-path overrides such as ``{"config.sigma": 4.0}``."""
    doc = manifest_to_dict(m)
    for key, value in overrides.items():
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ManifestError(key, "unknown override path")
            node = node[part]
        node[parts[-1]] = value
    return manifest_from_dict(doc)


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def emit_csv(table: Mapping[str, Sequence[Any]]) -> bytes:
    """Render named columns as CSV with a header row.

    Floats are printed with 9 significant digits; rows are ``\\n``-separated
    without a trailing newline.
    """
    names = list(table)
    lengths = {len(table[k]) for k in names}
    if len(lengths) > 1:
        raise ValueError(f"ragged columns: lengths {sorted(lengths)}")
    nrows = lengths.pop() if lengths else 0
    buf = io.StringIO()
    import csv

    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for i in range(nrows):
        writer.writerow([format_value(table[k][i]) for k in names])
    return buf.getvalue().rstrip("\n").encode("utf-8")


def read_csv(data: bytes | str) -> dict[str, list[str]]:
    """Inverse of :func:`emit_csv` (values are returned as strings)."""
    import csv

    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows:
        return {}
    head, body = rows[0], rows[1:]
    return {name: [r[i] for r in body] for i, name in enumerate(head)}
