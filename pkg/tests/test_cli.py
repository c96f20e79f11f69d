import json
import re

import numpy as np
import pytest

import geomatch.solvers
import geomatch.varifold
from geomatch import __version__
from geomatch.cli import main, thread_limit
from geomatch.corpus import BUNDLED_CONFIGS, bundled, bundled_shapes, circle, ellipse, icosphere, data_dir
from geomatch.errors import NonFiniteState
from geomatch.output import parse_svg_path_data, read_energy_csv
from geomatch.shapes import load_shape, save_shape


@pytest.fixture
def pair(tmp_path):
    a, b = tmp_path / "a.curve", tmp_path / "b.curve"
    save_shape(circle(12), a)
    save_shape(ellipse(12), b)
    return a, b


@pytest.fixture
def quick(tmp_path):
    p = tmp_path / "quick.json"
    p.write_text(json.dumps({"kernel_sigma": 0.8, "optimizer": {"max_iters": 15}}))
    return p


def run(argv, capsys):
    code = main([str(x) for x in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_dist_parallel_segments(capsys):
    code, out, _ = run(["dist", data_dir() / "segment_a.curve", data_dir() / "segment_b.curve"], capsys)
    assert code == 0
    d2 = 2 - 2 * np.exp(-1.0)
    assert out.splitlines() == [f"dist_sq={d2:.12g}", f"dist={np.sqrt(d2):.12g}"]
    assert "1.26424111766" in out


def test_dist_identical(pair, capsys):
    code, out, _ = run(["dist", pair[0], pair[0]], capsys)
    assert code == 0 and out.splitlines()[0] == "dist_sq=0"


def test_dist_kernel_flags(pair, capsys):
    code, out, _ = run(["dist", *pair, "--spatial", "cauchy", "--spatial-sigma", "0.5",
                        "--spherical", "sphere_gaussian", "--spherical-sigma", "0.7"], capsys)
    assert code == 0
    v = float(out.splitlines()[0].split("=")[1])
    assert v > 0


def test_dist_errors(pair, tmp_path, capsys):
    code, _, err = run(["dist", pair[0], tmp_path / "missing.curve"], capsys)
    assert code == 2 and err
    bad = tmp_path / "bad.curve"
    bad.write_text("this is not a curve\n")
    assert run(["dist", pair[0], bad], capsys)[0] == 2
    sphere = tmp_path / "s.obj"
    save_shape(icosphere(0), sphere)
    code, _, err = run(["dist", pair[0], sphere], capsys)
    assert code == 3 and err


def test_match_outputs(pair, quick, tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["match", *pair, quick, "--out", out], capsys)
    assert code == 0, stdout
    for k in range(5):
        assert (out / f"frame_{k}.curve").exists() and (out / f"frame_{k}.svg").exists()
    assert (out / "momenta.txt").exists() and (out / "arrays.npz").exists()
    assert not (out / "FAILED").exists()
    header, rows = read_energy_csv(out / "energy.csv")
    assert header == ["iter", "energy", "fidelity", "total"]
    assert rows[0, 0] == 0 and np.all(np.diff(rows[:, 3]) <= 0)
    report = json.loads((out / "report.json").read_text())
    assert report["geomatch_version"] == __version__
    assert report["config"]["kernel_sigma"] == 0.8
    assert report["config"]["output_dir"] == str(out)
    assert report["iterations"] == 15 and report["status"] == "max_iters"
    assert report["fidelity"] == pytest.approx(rows[-1, 2], rel=1e-15)
    assert report["frame_times"] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert {"solve_seconds", "total_seconds"} <= set(report["timings"])
    momenta = np.load(out / "arrays.npz")["momenta"]
    np.testing.assert_array_equal(np.loadtxt(out / "momenta.txt"), momenta.reshape(10, -1))


def test_svg_frames_round_trip(pair, quick, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["match", *pair, quick, "--out", out], capsys)[0] == 0
    for k in range(5):
        frame = load_shape(out / f"frame_{k}.curve")
        d = re.search(r' d="([^"]+)"', (out / f"frame_{k}.svg").read_text()).group(1)
        (pts,) = parse_svg_path_data(d)
        np.testing.assert_array_equal(pts, frame.vertices)
        assert d.rstrip().endswith("Z")


def test_rerun_from_report_is_byte_identical(pair, quick, tmp_path, capsys):
    first = tmp_path / "first"
    assert run(["match", *pair, quick, "--out", first, "--set", "penalty=50"], capsys)[0] == 0
    second = tmp_path / "second"
    assert run(["match", *pair, first / "report.json", "--out", second], capsys)[0] == 0
    assert (first / "energy.csv").read_bytes() == (second / "energy.csv").read_bytes()
    assert json.loads((second / "report.json").read_text())["config"]["penalty"] == 50


@pytest.mark.parametrize("model", ["intrinsic", "lddmm", "hybrid"])
def test_identical_shapes(model, tmp_path, capsys):
    src = tmp_path / "c.curve"
    save_shape(circle(), src)
    out = tmp_path / model
    assert run(["match", src, src, "--model", model, "--out", out], capsys)[0] == 0
    report = json.loads((out / "report.json").read_text())
    assert report["energy"] <= 1e-8 and report["iterations"] <= 5


def test_hybrid_energy_columns(pair, quick, tmp_path, capsys):
    out = tmp_path / "hyb"
    assert run(["match", *pair, quick, "--model", "hybrid", "--out", out], capsys)[0] == 0
    header, _ = read_energy_csv(out / "energy.csv")
    assert header == ["iter", "energy", "fidelity", "total", "outer_energy", "intrinsic_energy"]


def test_match_bad_key(pair, tmp_path, capsys):
    code, _, err = run(["match", *pair, "--set", "varifold.bogus=1", "--out", tmp_path / "x"], capsys)
    assert code == 2 and "varifold.bogus" in err
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"sobolev": {"a3": 1.0}}))
    code, _, err = run(["match", *pair, cfg], capsys)
    assert code == 2 and "sobolev.a3" in err


def test_match_input_errors(pair, tmp_path, capsys):
    assert run(["match", pair[0], tmp_path / "nope.curve"], capsys)[0] == 2
    sphere = tmp_path / "s.obj"
    save_shape(icosphere(0), sphere)
    assert run(["match", pair[0], sphere, "--out", tmp_path / "x"], capsys)[0] == 3


def test_solver_failure(pair, tmp_path, capsys, monkeypatch):
    def explode(q0, q1, cfg, progress=None):
        progress({"iter": 0, "energy": 0.0, "fidelity": 1.0, "total": 100.0})
        raise NonFiniteState(3)

    monkeypatch.setattr(geomatch.solvers, "match", explode)
    out = tmp_path / "fail"
    code, _, err = run(["match", *pair, "--out", out], capsys)
    assert code == 4 and "non-finite" in err
    assert "non-finite" in (out / "FAILED").read_text()
    assert len((out / "energy.csv").read_text().splitlines()) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "failed" and "config" in report


def test_selftest_passes_and_is_deterministic(capsys):
    code, first, _ = run(["selftest"], capsys)
    assert code == 0 and first.rstrip().endswith("selftest passed")
    assert len([ln for ln in first.splitlines() if ln.startswith("PASS ")]) == 8
    _, second, _ = run(["selftest"], capsys)
    assert first == second


def test_selftest_catches_sign_error(capsys, monkeypatch):
    real = geomatch.varifold.varifold_grad
    monkeypatch.setattr(geomatch.varifold, "varifold_grad", lambda *a, **k: -real(*a, **k))
    code, out, _ = run(["selftest"], capsys)
    assert code == 1
    assert "FAIL varifold_gradient" in out
    assert "PASS metric_axioms" in out


def test_thread_cap(monkeypatch):
    from threadpoolctl import threadpool_info

    monkeypatch.setenv("GEOMATCH_THREADS", "1")
    with thread_limit():
        info = threadpool_info()
        assert all(p["num_threads"] == 1 for p in info)
    monkeypatch.setenv("GEOMATCH_THREADS", "lots")
    from geomatch.errors import ConfigError
    with pytest.raises(ConfigError):
        thread_limit()


def test_bad_thread_setting_exits_2(pair, monkeypatch, capsys):
    monkeypatch.setenv("GEOMATCH_THREADS", "-3")
    assert run(["selftest"], capsys)[0] == 2


def test_bundled_data_matches_corpus():
    for name, shape in bundled_shapes().items():
        assert bundled(name) == shape, name
    for name, cfg in BUNDLED_CONFIGS.items():
        assert json.loads((data_dir() / name).read_text()) == cfg


def test_bundled_circle_ellipse_config(tmp_path, capsys):
    out = tmp_path / "bundled"
    d = data_dir()
    code, _, _ = run(["match", d / "circle.curve", d / "ellipse.curve", d / "circle_ellipse.json", "--out", out],
                     capsys)
    assert code == 0
    assert json.loads((out / "report.json").read_text())["fidelity_reduction"] >= 0.95
