import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etcabs.model_io import (AbstractionConfig, ManifestError, PlantSpec, RunManifest,
                             dump_manifest, emit_csv, parse_manifest, read_csv,
                             with_overrides)


def doc(**over):
    d = {"plant": {"A": [[0, 1], [-2, 3]], "B": [[0], [1]], "E": [[0], [1]],
                   "W": 0.001, "gamma": 100, "beta": 0.25}}
    d.update(over)
    return d


def test_example_document_parses():
    m = parse_manifest(json.dumps(doc(seed=3)))
    assert m.plant.n == 2
    np.testing.assert_array_equal(m.plant.A, [[0, 1], [-2, 3]])
    assert m.plant.W == 0.001 and m.plant.gamma == 100 and m.plant.beta == 0.25
    assert m.seed == 3


def test_defaults():
    m = parse_manifest(json.dumps(doc()))
    assert m.seed == 0
    c = m.config
    assert (c.n_conv, c.l, c.sigma, c.m_bar, c.time_scale) == (7, 800, 8.0, 10, 1000)
    assert c.eta_samples == 10 and c.heartbeat is None


def test_dimension_mismatch_names_field():
    d = doc()
    d["plant"]["B"] = [[0], [1], [2]]
    with pytest.raises(ManifestError) as ei:
        parse_manifest(json.dumps(d))
    assert ei.value.path == "plant.B"


@pytest.mark.parametrize("path,value", [
    ("plant.W", -1.0), ("plant.gamma", 0), ("plant.beta", 0.0),
    ("config.sigma", 0), ("config.m_bar", 1), ("config.l", 0), ("config.n_conv", 2.0),
    ("config.splits", 0.5), ("seed", -1), ("config.bogus", 1),
])
def test_validation_failures_identify_field(path, value):
    d = doc()
    head, _, tail = path.partition(".")
    if tail:
        d.setdefault(head, {})[tail] = value
    else:
        d[head] = value
    with pytest.raises(ManifestError) as ei:
        parse_manifest(json.dumps(d))
    assert ei.value.path == path


def test_split_weights_validated():
    d = doc()
    d.setdefault("config", {})["splits"] = [0.1, 1.0]
    with pytest.raises(ManifestError) as ei:
        parse_manifest(json.dumps(d))
    assert ei.value.path == "config.splits[1]"
    d["config"]["splits"] = [0.3, 0.6]
    assert parse_manifest(json.dumps(d)).config.splits == (0.3, 0.6)


def test_non_finite_rejected():
    text = json.dumps(doc()).replace('"W": 0.001', '"W": NaN')
    with pytest.raises(ManifestError) as ei:
        parse_manifest(text)
    assert ei.value.path == "plant.W"


def test_malformed_and_missing():
    with pytest.raises(ManifestError):
        parse_manifest("{not json")
    with pytest.raises(ManifestError) as ei:
        parse_manifest(json.dumps({"config": {}}))
    assert ei.value.path == "plant"


def test_tick_overflow_rejected():
    with pytest.raises(ManifestError) as ei:
        AbstractionConfig(sigma=8.0, time_scale=10 ** 9)
    assert ei.value.path == "config.time_scale"


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(a=st.lists(finite, min_size=4, max_size=4), w=st.floats(0, 5), g=st.floats(0.1, 1e3),
       b=st.floats(0.01, 2), seed=st.integers(0, 2 ** 31), sigma=st.floats(0.1, 20),
       m_bar=st.integers(2, 40))
def test_round_trip(a, w, g, b, seed, sigma, m_bar):
    p = PlantSpec(A=np.reshape(a, (2, 2)), B=[[0], [1]], E=[[1], [0]], W=w, gamma=g, beta=b)
    m = RunManifest(plant=p, config=AbstractionConfig(sigma=sigma, m_bar=m_bar), seed=seed)
    assert parse_manifest(dump_manifest(m)) == m


def test_overrides():
    m = parse_manifest(json.dumps(doc()))
    m2 = with_overrides(m, {"config.sigma": 4.0, "seed": 9})
    assert m2.config.sigma == 4.0 and m2.seed == 9
    with pytest.raises(ManifestError):
        with_overrides(m, {"config.sigma": 0})
    with pytest.raises(ManifestError):
        with_overrides(m, {"nowhere.x": 1})


def test_emit_csv_examples():
    assert emit_csv({"s": [1], "tau_lo": [0.5]}) == b"s,tau_lo\n1,0.5"
    assert emit_csv({"s": [], "tau_lo": []}) == b"s,tau_lo"
    assert emit_csv({"x": [math.pi]}) == b"x\n3.14159265"
    assert emit_csv({"f": [True, False]}) == b"f\ntrue\nfalse"
    with pytest.raises(ValueError):
        emit_csv({"a": [1, 2], "b": [1]})


def test_emit_csv_region_table_line_count(regions):
    from etcabs.partition import regions_table

    out = emit_csv(regions_table(regions))
    assert len(out.split(b"\n")) == len(regions) + 1 == 21
    back = read_csv(out)
    assert back["s"] == [str(r.index) for r in regions]
