import io
import math
import subprocess
import sys

import numpy as np
import pytest

from depthkit import io as dio
from depthkit.cli import main, run
from depthkit.core import CameraIntrinsics
from synth import render_plane


def call(argv):
    out = io.StringIO()
    code = run(argv, out=out)
    return code, out.getvalue()


def call_exit(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def parse_blocks(text):
    blocks = {}
    for chunk in text.strip().split("\n\n"):
        kv = parse_kv(chunk)
        label = kv.pop("image")
        blocks[label] = {k: float(v) for k, v in kv.items()}
    return blocks


@pytest.fixture
def sparse_png(tmp_path, rng):
    d = rng.uniform(1, 80, size=(30, 40))
    d[rng.random(d.shape) < 0.8] = 0
    path = tmp_path / "sparse.png"
    dio.write_depth(d, path)
    return path


def test_densify(sparse_png, tmp_path):
    out = tmp_path / "dense.png"
    code, text = call(["densify", "--in", str(sparse_png), "--out", str(out), "--k", "3", "--it", "2"])
    assert code == 0
    kv = parse_kv(text)
    assert int(kv["after.valid_count"]) >= int(kv["before.valid_count"])
    assert float(kv["after.valid_fraction"]) >= float(kv["before.valid_fraction"])
    assert dio.read_depth(out).shape == (30, 40)


def test_densify_usage_errors(sparse_png, tmp_path, capsys):
    code, out, err = call_exit(["densify", "--in", str(sparse_png), "--out", str(tmp_path / "o.png"), "--it", "1"], capsys)
    assert code == 2 and out == "" and "usage" in err
    code, out, err = call_exit(["densify", "--in", str(sparse_png), "--out", str(tmp_path / "o.png"),
                                "--k", "4", "--it", "1"], capsys)
    assert code == 2 and "kernel must be odd" in err
    assert not (tmp_path / "o.png").exists()


def test_densify_runtime_error(tmp_path, capsys):
    code, out, err = call_exit(["densify", "--in", str(tmp_path / "missing.png"), "--out",
                                str(tmp_path / "o.png"), "--k", "3", "--it", "1"], capsys)
    assert code == 1 and err


def test_normals_constant_depth(tmp_path):
    dio.write_depth(np.full((20, 24), 4.0), tmp_path / "d.png")
    dio.write_intrinsics(CameraIntrinsics(100, 100, 12, 10), tmp_path / "cam.txt")
    out = tmp_path / "n.png"
    code, text = call(["normals", "--depth", str(tmp_path / "d.png"), "--cam", str(tmp_path / "cam.txt"),
                       "--out", str(out), "--edges", "0.25", "--blur"])
    assert code == 0
    nm = dio.read_normals(out)
    assert np.allclose(nm.normals[2:-2, 2:-2], [0, 0, -1], atol=1e-4)
    edges = dio.read_gray(tmp_path / "n.edges.png")
    assert not edges.any()
    assert parse_kv(text)["edges"].endswith("n.edges.png")


def test_normals_bad_window(tmp_path, capsys):
    code, _, err = call_exit(["normals", "--depth", "x.png", "--cam", "c.txt", "--out", "o.png",
                              "--window", "2"], capsys)
    assert code == 2 and "window must be odd" in err


def test_normals_oblique_plane_fixture(tmp_path):
    cam = CameraIntrinsics(80, 80, 32, 32)
    n = np.array([0.3, -0.4, -1.0])
    n /= np.linalg.norm(n)
    dio.write_depth(render_plane((64, 64), cam, n, 120.0), tmp_path / "d.png")
    dio.write_intrinsics(cam, tmp_path / "cam.txt")
    code, _ = call(["normals", "--depth", str(tmp_path / "d.png"), "--cam", str(tmp_path / "cam.txt"),
                    "--out", str(tmp_path / "n.png"), "--window", "11"])
    assert code == 0
    got = dio.read_normals(tmp_path / "n.png").normals[5:-5, 5:-5]
    ang = np.degrees(np.arccos(np.clip(got @ n, -1, 1)))
    # depth PNGs quantise to 1/256 m; the 11x11 window averages that down
    assert ang.max() <= 0.01


def test_normals_edges_on_step(tmp_path):
    d = np.full((20, 20), 3.0)
    d[:, 10:] = 9.0
    dio.write_depth(d, tmp_path / "d.png")
    dio.write_intrinsics(CameraIntrinsics(50, 50, 10, 10), tmp_path / "cam.txt")
    code, text = call(["normals", "--depth", str(tmp_path / "d.png"), "--cam", str(tmp_path / "cam.txt"),
                       "--out", str(tmp_path / "n.png"), "--edges", "0.5"])
    assert code == 0
    edges = dio.read_gray(tmp_path / "n.edges.png") > 0
    assert set(np.nonzero(edges)[1]) == {9, 10}


def make_gt(tmp_path, n_valid=1000):
    rng = np.random.default_rng(5)
    gt = np.zeros((50, 60))
    idx = rng.choice(gt.size, n_valid, replace=False)
    gt.flat[idx] = rng.uniform(1, 80, n_valid)
    path = tmp_path / "gt.png"
    dio.write_depth(gt, path)
    return path


def test_sample_all_and_determinism(tmp_path):
    gt = make_gt(tmp_path)
    code, text = call(["sample", "--gt", str(gt), "--n", "1000", "--seed", "1", "--out", str(tmp_path / "a.png")])
    assert code == 0 and parse_kv(text)["kept"] == "1000"
    assert (tmp_path / "a.png").read_bytes() == gt.read_bytes()
    for name in ("b.png", "c.png"):
        code, text = call(["sample", "--gt", str(gt), "--n", "100", "--seed", "99", "--out", str(tmp_path / name)])
        assert code == 0
    assert (tmp_path / "b.png").read_bytes() == (tmp_path / "c.png").read_bytes()
    assert "PCG64" in parse_kv(text)["generator"]


def test_sample_kept_counts_binomial(tmp_path):
    gt = make_gt(tmp_path)
    kept = []
    for seed in range(60):
        _, text = call(["sample", "--gt", str(gt), "--n", "100", "--seed", str(seed), "--out", str(tmp_path / "s.png")])
        kept.append(int(parse_kv(text)["kept"]))
    # each count within 5 sigma of Binomial(1000, 0.1); their mean within 4 standard errors
    assert all(abs(k - 100) <= 5 * math.sqrt(90) for k in kept)
    assert abs(np.mean(kept) - 100) <= 4 * math.sqrt(90 / len(kept))


def test_sample_capacity(tmp_path, capsys):
    gt = make_gt(tmp_path, 50)
    code, out, err = call_exit(["sample", "--gt", str(gt), "--n", "51", "--seed", "0", "--out", str(tmp_path / "x.png")], capsys)
    assert code == 1 and "51" in err


def write_dirs(tmp_path, pairs):
    pdir, gdir = tmp_path / "pred", tmp_path / "gt"
    pdir.mkdir()
    gdir.mkdir()
    for name, (p, g) in pairs.items():
        dio.write_depth(np.atleast_2d(p), pdir / name)
        dio.write_depth(np.atleast_2d(g), gdir / name)
    return pdir, gdir


def test_eval_identical_dirs(tmp_path, rng):
    maps = {f"{i:03d}.png": rng.uniform(1, 80, size=(6, 8)) for i in range(3)}
    pdir, gdir = write_dirs(tmp_path, {k: (v, v) for k, v in maps.items()})
    code, text = call(["eval", "--pred", str(gdir), "--gt", str(gdir), "--csv", str(tmp_path / "m.csv")])
    assert code == 0
    agg = parse_blocks(text)["__aggregate__"]
    assert agg["abs_rel"] == 0.0 and agg["delta1"] == 1.0
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 5


def test_eval_single_pair_matches_metrics(tmp_path):
    pdir, gdir = write_dirs(tmp_path, {"a.png": ([2.0], [1.0])})
    code, text = call(["eval", "--pred", str(pdir / "a.png"), "--gt", str(gdir / "a.png")])
    assert code == 0
    row = parse_blocks(text)["a.png"]
    assert row["abs_rel"] == 1.0 and row["rmse"] == 1.0 and row["mae"] == 1.0 and row["delta1"] == 0.0
    assert row["log10"] == pytest.approx(math.log10(2), rel=1e-12)
    assert row["rmse_log"] == pytest.approx(math.log(2), rel=1e-12)


def test_eval_cap_and_crop(tmp_path):
    pdir, gdir = write_dirs(tmp_path, {"a.png": ([10.0, 60.0, 20.0], [10.0, 60.0, 40.0])})
    code, text = call(["eval", "--pred", str(pdir), "--gt", str(gdir), "--cap", "0:50"])
    assert code == 0
    row = parse_blocks(text)["a.png"]
    assert row["n_pixels"] == 2 and row["mae"] == 10.0
    code, text = call(["eval", "--pred", str(pdir), "--gt", str(gdir), "--crop", "0,0,1,2"])
    assert parse_blocks(text)["a.png"]["n_pixels"] == 2
    assert parse_blocks(text)["a.png"]["mae"] == 0.0


def test_eval_bad_cap_is_usage_error(tmp_path, capsys):
    code, _, _ = call_exit(["eval", "--pred", "a", "--gt", "b", "--cap", "50:10"], capsys)
    assert code == 2


def test_eval_mismatches(tmp_path, capsys):
    pdir, gdir = write_dirs(tmp_path, {"a.png": ([1.0], [1.0]), "b.png": ([1.0], [1.0])})
    (pdir / "b.png").unlink()
    code, _, err = call_exit(["eval", "--pred", str(pdir), "--gt", str(gdir)], capsys)
    assert code == 1
    dio.write_depth(np.ones((2, 2)), pdir / "b.png")
    code, _, err = call_exit(["eval", "--pred", str(pdir), "--gt", str(gdir)], capsys)
    assert code == 1 and "shape" in err


def test_eval_normals(tmp_path):
    n = np.zeros((4, 4, 3))
    n[..., 2] = -1.0
    m = n.copy()
    m[:, 2:] = [1.0, 0.0, 0.0]
    from depthkit.geometry import NormalMap
    dio.write_normals(NormalMap(m), tmp_path / "p.png")
    dio.write_normals(NormalMap(n), tmp_path / "g.png")
    code, text = call(["eval-normals", "--pred", str(tmp_path / "p.png"), "--gt", str(tmp_path / "g.png")])
    assert code == 0
    row = parse_blocks(text)["g.png"]
    assert row["mean_deg"] == pytest.approx(45.0, abs=1e-3)
    assert row["acc_30"] == 0.5


def test_losscheck(tmp_path):
    gt = np.full((4, 4), 3.0)
    dio.write_depth(gt, tmp_path / "g.png")
    code, text = call(["losscheck", "--spec", "kind=l2", "--pred", str(tmp_path / "g.png"), "--gt", str(tmp_path / "g.png")])
    assert code == 0 and float(parse_kv(text)["loss"]) == 0.0

    dio.write_depth([[1.0]], tmp_path / "g1.png")
    dio.write_depth([[math.e]], tmp_path / "p1.png")
    code, text = call(["losscheck", "--spec", "kind=berhu", "kappa=5", "--pred", str(tmp_path / "p1.png"),
                       "--gt", str(tmp_path / "g1.png")])
    assert code == 0
    # e is stored as 696/256, so h = ln(2.71875) rather than exactly 1
    assert float(parse_kv(text)["loss"]) == pytest.approx(2.6 * math.log(696 / 256), rel=1e-12)
    assert float(parse_kv(text)["loss"]) == pytest.approx(2.6, abs=1e-3)


def test_losscheck_grad_check(tmp_path, rng):
    gt = rng.uniform(2, 60, size=(8, 8))
    pred = gt * np.exp(rng.normal(0, 0.3, size=gt.shape))
    dio.write_depth(gt, tmp_path / "g.png")
    dio.write_depth(pred, tmp_path / "p.png")
    code, text = call(["losscheck", "--spec", "kind=silog", "--pred", str(tmp_path / "p.png"),
                       "--gt", str(tmp_path / "g.png"), "--grad-check"])
    assert code == 0
    assert float(parse_kv(text)["max_rel_err"]) <= 1e-5


@pytest.mark.parametrize("spec", [["kind=bogus"], ["kind=cosine"], ["kappa=3"]])
def test_losscheck_bad_spec(tmp_path, spec, capsys):
    dio.write_depth(np.ones((2, 2)), tmp_path / "g.png")
    code, out, err = call_exit(["losscheck", "--spec", *spec, "--pred", str(tmp_path / "g.png"),
                                "--gt", str(tmp_path / "g.png")], capsys)
    assert code == 2 and out == ""


def test_density_command(tmp_path):
    d = tmp_path / "kitti"
    d.mkdir()
    dio.write_depth(np.array([[0, 1.0], [0, 0]]), d / "a.png")
    dio.write_depth(np.array([[1.0, 1.0], [0, 0]]), d / "b.png")
    code, text = call(["density", "--in", str(d)])
    kv = parse_kv(text)
    assert code == 0 and kv["files"] == "2"
    assert float(kv["mean_valid_percent"]) == pytest.approx(37.5)


def test_module_entry_point(sparse_png, tmp_path):
    out = tmp_path / "o.png"
    argv = [sys.executable, "-m", "depthkit", "densify", "--in", str(sparse_png), "--out", str(out), "--k", "3", "--it", "1"]
    first = subprocess.run(argv, capture_output=True, text=True)
    assert first.returncode == 0, first.stderr
    data = out.read_bytes()
    second = subprocess.run(argv, capture_output=True, text=True)
    assert second.stdout == first.stdout and out.read_bytes() == data
    bad = subprocess.run(argv[:-2] + ["--k", "4", "--it", "1"], capture_output=True, text=True)
    assert bad.returncode == 2 and bad.stdout == ""
