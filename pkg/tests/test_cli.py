import json

import numpy as np
import pytest

from mkpls.cli import main
from mkpls.datasets import load_manifest
from mkpls.io import load_gram, read_matrix_csv, write_pgm
from mkpls.kernels import KernelSpec, gram_matrix
from mkpls.manifold import BasisConfig, fit_parameterization, total_variation
from mkpls.pipeline import load_params_dir

SMALL = ["--classes", "3", "--speakers", "3", "--repetitions", "2", "--dim", "6", "--seed", "4"]


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out), *SMALL]) == 0
    return out


def test_synth_writes_manifest(dataset):
    units = load_manifest(dataset / "manifest.csv")
    assert len(units) == 18
    assert json.loads((dataset / "synth.json").read_text())["classes"] == 3


def test_param_and_gram_match_library(dataset, tmp_path):
    params = tmp_path / "params"
    assert main(["param", "--manifest", str(dataset / "manifest.csv"), "--out", str(params), "--n", "6", "--diff"]) == 0
    items, _ = load_params_dir(params)
    units = load_manifest(dataset / "manifest.csv")
    basis = BasisConfig(n=6)
    for it, u in zip(items, units):
        assert it.id == u.id
        assert np.array_equal(it.C, fit_parameterization(u.features, basis))
        assert it.C_diff.shape == (12, 6)
    prefix = tmp_path / "nested" / "g"
    assert main(["gram", "--params", str(params), "--kernel", "Frechet", "--out", str(prefix), "--threads", "2"]) == 0
    G = load_gram(prefix.with_suffix(".bin"))
    ref = gram_matrix([it.C for it in items], KernelSpec("Frechet"))
    assert np.array_equal(G.K, ref.K) and G.omega == ref.omega
    assert np.array_equal(read_matrix_csv(prefix.with_suffix(".csv")), G.K)
    assert prefix.with_suffix(".ids").read_text().split() == [it.id for it in items]
    assert main(["gram", "--params", str(params), "--kernel", "GrassmDiff", "--out", str(tmp_path / "d")]) == 0


def test_eval_from_params_matches_fused_run(dataset, tmp_path):
    params = tmp_path / "params"
    main(["param", "--manifest", str(dataset / "manifest.csv"), "--out", str(params)])
    common = ["--kernels", "Cosine,Frechet", "--m", "3,5", "--threads", "1"]
    assert main(["eval", "--manifest", str(dataset / "manifest.csv"), "--out", str(tmp_path / "a"), *common]) == 0
    assert main(["eval", "--params", str(params), "--out", str(tmp_path / "b"), *common]) == 0
    a, b = (tmp_path / "a" / "report.csv").read_bytes(), (tmp_path / "b" / "report.csv").read_bytes()
    assert a == b
    header = a.decode().splitlines()[0]
    assert header == "protocol,classifier,kernel,m=3,m=5"
    log = json.loads((tmp_path / "a" / "log.json").read_text())
    assert log


def test_eval_clamps_large_m(dataset, tmp_path, capsys):
    assert main(["eval", "--manifest", str(dataset / "manifest.csv"), "--out", str(tmp_path / "o"),
                 "--kernels", "Euclid", "--m", "500", "--protocols", "ssd"]) == 0
    rows = (tmp_path / "o" / "report.csv").read_text().splitlines()
    assert len(rows) == 2
    assert "m=500" in capsys.readouterr().out


def test_inspect_param_blocks_and_smoothing(dataset, tmp_path):
    out = tmp_path / "inspect.csv"
    rc = main(["inspect-param", "--manifest", str(dataset / "manifest.csv"), "--unit", "p01_c01_r1",
               "--lams", "0.01,50", "--ns", "8,16", "--out", str(out)])
    assert rc == 0
    text = out.read_text()
    heads = [ln for ln in text.splitlines() if ln.startswith("# ")]
    assert heads == [
        "# unit=p01_c01_r1 lambda=0.01 n=8",
        "# unit=p01_c01_r1 lambda=0.01 n=16",
        "# unit=p01_c01_r1 lambda=50 n=8",
        "# unit=p01_c01_r1 lambda=50 n=16",
    ]
    blocks = [np.array([[float(v) for v in ln.split(",")] for ln in blk.strip().splitlines()[1:]])
              for blk in text.split("\n\n")]
    assert [b.shape for b in blocks] == [(6, 8), (6, 16), (6, 8), (6, 16)]
    # stronger regularization flattens the coefficient traces
    assert total_variation(blocks[2]) < total_variation(blocks[0])
    assert total_variation(blocks[3]) < total_variation(blocks[1])


def test_features_from_frames(tmp_path, rng):
    clip = tmp_path / "raw" / "clip"
    clip.mkdir(parents=True)
    for k in range(4):
        write_pgm(clip / f"frame_{k:04d}.pgm", rng.integers(0, 256, size=(20, 24)))
    (tmp_path / "raw" / "manifest.csv").write_text("id,path,speech_class,speaker,repetition\nu1,clip,a,s1,1\n")
    rc = main(["features", "--manifest", str(tmp_path / "raw" / "manifest.csv"), "--out", str(tmp_path / "f"),
               "--radii", "1,2", "--grid", "2x2"])
    assert rc == 0
    (u,) = load_manifest(tmp_path / "f" / "manifest.csv")
    assert u.features.shape == (4, 59 * 2 * 4)


def test_config_file_and_flag_precedence(dataset, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"basis": {"n": 5, "lam": 1.0}}))
    main(["param", "--config", str(cfg), "--manifest", str(dataset / "manifest.csv"), "--out", str(tmp_path / "p1")])
    main(["param", "--config", str(cfg), "--manifest", str(dataset / "manifest.csv"), "--out", str(tmp_path / "p2"), "--n", "7"])
    assert load_params_dir(tmp_path / "p1")[0][0].C.shape == (6, 5)
    assert load_params_dir(tmp_path / "p2")[0][0].C.shape == (6, 7)


@pytest.mark.parametrize(
    "argv, code",
    [
        (["eval", "--synth", "--protocols", "bogus", "--out", "x"], 2),
        (["eval", "--out", "x"], 2),
        (["eval", "--synth", "--kernels", "Nope", "--out", "x"], 2),
        (["param", "--manifest", "m.csv"], 2),
        (["synth", "--out", "x", "--frames-min", "1"], 2),
        (["param", "--manifest", "missing.csv", "--out", "p"], 3),
        (["synth", "--out", "/proc/forbidden"], 3),
    ],
)
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_solver_failure_exit_code(tmp_path):
    data = tmp_path / "d"
    main(["synth", "--out", str(data), *SMALL])
    rc = main(["param", "--manifest", str(data / "manifest.csv"), "--out", str(tmp_path / "p"), "--lam", "0", "--n", "40"])
    assert rc == 4


def test_ragged_manifest_is_trimmed(tmp_path):
    data = tmp_path / "d"
    main(["synth", "--out", str(data), *SMALL, "--repetitions", "3"])
    lines = (data / "manifest.csv").read_text().splitlines()
    (data / "manifest.csv").write_text("\n".join(lines[:-1]) + "\n")
    rc = main(["eval", "--manifest", str(data / "manifest.csv"), "--out", str(tmp_path / "o"),
               "--kernels", "Euclid", "--m", "2", "--protocols", "ssd"])
    # the short pair forces every pair down to two repetitions
    assert rc == 0
    log = json.loads((tmp_path / "o" / "log.json").read_text())
    assert len(log["trimmed_units"]) == 8


def test_single_repetition_after_trim_is_a_data_error(dataset, tmp_path):
    lines = (dataset / "manifest.csv").read_text().splitlines()
    (dataset / "manifest.csv").write_text("\n".join(lines[:-1]) + "\n")
    rc = main(["eval", "--manifest", str(dataset / "manifest.csv"), "--out", str(tmp_path / "o"),
               "--kernels", "Euclid", "--m", "2", "--protocols", "ssd"])
    assert rc == 3
