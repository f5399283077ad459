import numpy as np
import pytest

from mkpls.errors import InputError
from mkpls.io import (
    load_gram,
    load_model,
    load_param,
    read_matrix_csv,
    read_pgm,
    save_gram,
    save_model,
    save_param,
    write_matrix_csv,
    write_pgm,
)
from mkpls.kernels import KernelSpec, gram_matrix
from mkpls.kpls import fit_task


def test_param_round_trip(tmp_path, rng):
    C = rng.normal(size=(5, 8))
    save_param(tmp_path / "c.bin", C)
    assert np.array_equal(load_param(tmp_path / "c.bin"), C)
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:8] == b"MKPLSPAR" and len(raw) == 16 + 8 * 40


def test_param_corruption(tmp_path):
    save_param(tmp_path / "c.bin", np.ones((2, 2)))
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    (tmp_path / "cut.bin").write_bytes(raw[:-8])
    (tmp_path / "long.bin").write_bytes(raw + b"\0")
    for name in ("bad.bin", "cut.bin", "long.bin", "absent.bin"):
        with pytest.raises(InputError):
            load_param(tmp_path / name)


@pytest.mark.parametrize("kind", ["Frechet", "Grassm"])
def test_gram_round_trip(tmp_path, rng, kind):
    G = gram_matrix(list(rng.normal(size=(5, 3, 4))), KernelSpec(kind, a1=0.25, a2=0.75))
    save_gram(tmp_path / "g.bin", G)
    back = load_gram(tmp_path / "g.bin")
    assert np.array_equal(back.K, G.K)
    assert back.spec.kind == kind and (back.spec.a1, back.spec.a2) == (0.25, 0.75)
    assert back.omega == G.omega


def test_model_round_trip(tmp_path, rng):
    X = rng.normal(size=(10, 3))
    labels = list("aabbccaabb")
    model = fit_task(X @ X.T, labels, "abc", 3, task="speaker", spec=KernelSpec("Euclid"), omega=0.7)
    save_model(tmp_path / "m.bin", model)
    back = load_model(tmp_path / "m.bin")
    for name in ("T", "U", "R", "TKU", "Y", "y_means"):
        assert np.array_equal(getattr(back, name), getattr(model, name))
    assert np.array_equal(back.stats.col_means, model.stats.col_means)
    assert back.stats.grand_mean == model.stats.grand_mean
    assert back.vocabulary == ("a", "b", "c")
    assert (back.task, back.omega, back.m_requested, back.spec.kind) == ("speaker", 0.7, 3, "Euclid")


def test_matrix_csv_round_trip(tmp_path, rng):
    M = rng.normal(size=(4, 3)) * 1e5
    write_matrix_csv(tmp_path / "m.csv", M)
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), M)
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    with pytest.raises(InputError):
        read_matrix_csv(tmp_path / "bad.csv")


def test_pgm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(7, 5)).astype(float)
    write_pgm(tmp_path / "f.pgm", img)
    assert (tmp_path / "f.pgm").read_bytes()[:2] == b"P5"
    assert np.array_equal(read_pgm(tmp_path / "f.pgm"), img)
    (tmp_path / "t.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(InputError):
        read_pgm(tmp_path / "t.pgm")
