import json

import pytest

from geomatch.config import MatchConfig, bbox_diagonal, load_config, merge_overrides, parse_config
from geomatch.errors import ConfigError


def test_defaults():
    cfg = MatchConfig()
    assert (cfg.model, cfg.solver, cfg.penalty) == ("lddmm", "trajectory", 100.0)
    assert cfg.steps() == 10
    assert MatchConfig(solver="shooting").steps() == 50
    assert MatchConfig(time_steps=7).steps() == 7


def test_default_kernel_widths():
    v = [[0.0, 0.0], [3.0, 4.0]]
    assert bbox_diagonal(v) == 5.0
    assert MatchConfig().deformation_sigma(v) == 2.5
    assert MatchConfig(model="hybrid").deformation_sigma(v) == 1.25
    assert MatchConfig(kernel_sigma=0.3).deformation_sigma(v) == 0.3


@pytest.mark.parametrize("data,needle", [
    ({"bogus": 1}, "unknown key 'bogus'"),
    ({"varifold": {"sigma": 1}}, "unknown key 'varifold.sigma'"),
    ({"model": "elastic"}, "model"),
    ({"penalty": -1}, "penalty"),
    ({"model": "intrinsic", "solver": "shooting"}, "trajectory"),
    ({"model": "hybrid", "solver": "shooting"}, "trajectory"),
    ({"optimizer": {"c1": 0.5, "c2": 0.4}}, "c1 < c2"),
    ({"frame_times": [0.0, 1.5]}, "frame"),
    ({"frame_times": []}, "frame"),
    ({"sobolev": {"a0": 0, "a1": 0, "a2": 0}}, "Sobolev"),
    ({"spline": {"n_time": 3, "order_time": 4}}, "order_time"),
])
def test_rejected(data, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(data)


def test_merge_overrides():
    cfg = merge_overrides(MatchConfig(), {"varifold.spatial_sigma": 0.5, "model": "hybrid",
                                          "stiffness.variant": "tangential"})
    assert cfg.varifold.spatial_sigma == 0.5
    assert cfg.model == "hybrid" and cfg.stiffness.variant == "tangential"
    with pytest.raises(ConfigError, match="unknown key 'varifold.bogus'"):
        merge_overrides(MatchConfig(), {"varifold.bogus": 1})
    with pytest.raises(ConfigError, match="unknown key"):
        merge_overrides(MatchConfig(), {"nothing.here": 1})


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"model": "hybrid", "stiffness": {"weight": 2.0}}))
    cfg = load_config(p)
    assert cfg.model == "hybrid" and cfg.stiffness.weight == 2.0


def test_report_doubles_as_config(tmp_path):
    cfg = MatchConfig(model="intrinsic", penalty=250.0)
    p = tmp_path / "report.json"
    p.write_text(json.dumps({"geomatch_version": "x", "energy": 1.0, "config": cfg.model_dump()}))
    assert load_config(p) == cfg


@pytest.mark.parametrize("text,needle", [("{", "invalid JSON"), ("[1, 2]", "JSON object")])
def test_bad_files(tmp_path, text, needle):
    p = tmp_path / "c.json"
    p.write_text(text)
    with pytest.raises(ConfigError, match=needle):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_round_trip():
    cfg = MatchConfig(model="hybrid", stiffness={"weight": 3.0, "variant": "tangential"}, time_steps=12)
    assert parse_config(json.loads(json.dumps(cfg.model_dump()))) == cfg
