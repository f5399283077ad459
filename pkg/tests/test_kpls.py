import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from sklearn.cross_decomposition import PLSRegression

from mkpls.classify import rfc_predict
from mkpls.errors import InputError
from mkpls.kernels import KernelSpec, gram_matrix, kernel_block
from mkpls.kpls import (
    center_gram,
    center_test_row,
    dual_fit,
    embed,
    fit_task,
    kpls_fit,
    one_hot,
    truncate,
)


def centering_matrix(N):
    return np.eye(N) - np.ones((N, N)) / N


def labelled_points(rng, N=24, D=5, q=3):
    labels = [f"c{k % q}" for k in range(N)]
    X = rng.normal(size=(N, D)) + 2.0 * np.eye(q, D)[[k % q for k in range(N)]]
    return X, labels


def test_center_gram_matches_projector(rng):
    K = rng.normal(size=(6, 6))
    K = K @ K.T
    Kc, stats = center_gram(K)
    H = centering_matrix(6)
    np.testing.assert_allclose(Kc, H @ K @ H, atol=1e-12)
    np.testing.assert_allclose(Kc.sum(axis=0), 0, atol=1e-12)
    assert stats.grand_mean == pytest.approx(K.mean())


def test_test_row_centering_matches_feature_space(rng):
    # with a linear kernel, centring rows equals centring features by the training mean
    X = rng.normal(size=(8, 4))
    x = rng.normal(size=(3, 4))
    _, stats = center_gram(X @ X.T)
    mu = X.mean(axis=0)
    np.testing.assert_allclose(center_test_row(x @ X.T, stats), (x - mu) @ (X - mu).T, atol=1e-12)


def test_test_row_of_training_item_reproduces_centered_row(rng):
    X = rng.normal(size=(7, 3))
    K = X @ X.T
    Kc, stats = center_gram(K)
    np.testing.assert_allclose(center_test_row(K[2], stats), Kc[2], atol=1e-12)
    with pytest.raises(InputError):
        center_test_row(np.ones(5), stats)


def test_one_hot():
    Y = one_hot(["b", "a", "b"], ["a", "b"], center=False)
    np.testing.assert_array_equal(Y, [[0, 1], [1, 0], [0, 1]])
    np.testing.assert_allclose(one_hot(["b", "a", "b"], ["a", "b"]).sum(axis=0), 0, atol=1e-15)
    with pytest.raises(InputError):
        one_hot(["z"], ["a"])
    with pytest.warns(RuntimeWarning):
        one_hot(["a", "a"], ["a", "b"])


def test_rank_one_fixed_point():
    # K = k k^T and a single target column: the first score is k_c / |k_c|
    k = np.array([1.0, 2.0, -1.0, 0.5, 3.0])
    Kc, _ = center_gram(np.outer(k, k))
    Y = np.array([1.0, 0.0, 1.0, 0.0, 0.0])[:, None]
    Y = Y - Y.mean()
    T, U, R, _, _ = kpls_fit(Kc, Y, 1)
    kc = k - k.mean()
    t = kc / np.linalg.norm(kc)
    t = t if t[np.argmax(np.abs(t))] > 0 else -t
    np.testing.assert_allclose(T[:, 0], t, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4))
@example(seed=245120, m=1)  # leading eigenvalues within 1%: slow power iteration
def test_linear_kernel_matches_sklearn_pls(seed, m):
    rng = np.random.default_rng(seed)
    X, labels = labelled_points(rng, N=20, D=6)
    Y = one_hot(labels, sorted(set(labels)))
    Kc, _ = center_gram(X @ X.T)
    T, *_ = kpls_fit(Kc, Y, m)
    ref = PLSRegression(n_components=m, scale=False, tol=1e-28, max_iter=50000).fit(X, Y).x_scores_
    assert T.shape[1] == m
    for a in range(m):
        r = ref[:, a] / np.linalg.norm(ref[:, a])
        s = np.sign(r @ T[:, a])
        np.testing.assert_allclose(T[:, a], s * r, atol=1e-6)


def test_separable_one_dimensional_problem():
    x = np.array([-3.0, -2.5, -2.0, 2.0, 2.5, 3.0])
    labels = ["a", "a", "a", "b", "b", "b"]
    model = fit_task(np.outer(x, x), labels, ["a", "b"], 1)
    t = model.T[:, 0]
    # |t| ties between the ends; the first largest entry is made positive
    np.testing.assert_allclose(t, -x / np.linalg.norm(x), atol=1e-12)
    assert [rfc_predict(model, model.T[i]).label for i in range(6)] == labels


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
@example(seed=200)
def test_scores_orthonormal_and_reproducible(seed):
    rng = np.random.default_rng(seed)
    X, labels = labelled_points(rng)
    K = gram_matrix(list(X[:, :, None]), KernelSpec("Euclid")).K
    model = fit_task(K, labels, sorted(set(labels)), 6)
    T = model.T
    np.testing.assert_allclose(T.T @ T, np.eye(T.shape[1]), atol=1e-10)
    Kc, _ = center_gram(K)
    np.testing.assert_allclose(Kc @ model.R, T, atol=1e-9)
    np.testing.assert_allclose(embed(model, K), T, atol=1e-9)
    for a in range(T.shape[1]):
        assert T[np.argmax(np.abs(T[:, a])), a] > 0


def test_near_tied_components_reach_the_fixed_point():
    # leading eigenvalues of K_c Y Y^T differ by under 1%, so a capped power
    # iteration stalls short of the fixed point
    X, labels = labelled_points(np.random.default_rng(245120), N=20, D=6)
    Y = one_hot(labels, sorted(set(labels)))
    Kc, _ = center_gram(X @ X.T)
    w = np.sort(np.linalg.eigvalsh(Y.T @ Kc @ Y))[::-1]
    assert w[1] / w[0] > 0.99
    for cap in (3, 500):
        T, U, R, _, warns = kpls_fit(Kc, Y, 1, max_iter=cap)
        # fixed point of t ~ K u, u ~ Y Y^T t: top eigenvector of K_c Y Y^T
        vals, vecs = np.linalg.eig(Kc @ Y @ Y.T)
        top = np.real(vecs[:, np.argmax(np.abs(vals))])
        top /= np.linalg.norm(top)
        assert abs(abs(T[:, 0] @ top) - 1) < 1e-12
        np.testing.assert_allclose(Kc @ R, T, atol=1e-13)
        assert any("no convergence" in msg for msg in warns)


def test_m_bounds(rng):
    K = np.eye(5)
    with pytest.raises(InputError):
        kpls_fit(K, np.ones((5, 1)), 0)
    with pytest.raises(InputError):
        kpls_fit(K, np.ones((5, 1)), 5)


def test_exhausted_targets_stop_early(rng):
    X, labels = labelled_points(rng, N=12, q=2)
    model = fit_task(X @ X.T, labels, ["c0", "c1"], 8)
    assert 1 <= model.m <= 8
    if model.m < 8:
        assert model.warnings


def test_truncate_equals_refit(rng):
    X, labels = labelled_points(rng)
    K = np.exp(-0.1 * ((X[:, None] - X[None]) ** 2).sum(-1))
    big = fit_task(K, labels, sorted(set(labels)), 10)
    for m in (1, 3, 7):
        a, b = truncate(big, m), fit_task(K, labels, sorted(set(labels)), m)
        np.testing.assert_allclose(a.T, b.T, atol=1e-12)
        np.testing.assert_allclose(a.R, b.R, rtol=1e-8, atol=1e-10)
    assert truncate(big, 20) is big


def test_embed_checks_kernel_metadata(rng):
    X, labels = labelled_points(rng, N=9)
    G = gram_matrix(list(X[:, :, None]), KernelSpec("Euclid"))
    model = fit_task(G, labels, sorted(set(labels)), 2)
    assert model.omega == G.omega
    row = kernel_block([X[0][:, None]], list(X[:, :, None]), G.spec, G.omega)
    np.testing.assert_allclose(embed(model, row, G.spec, G.omega)[0], model.T[0], atol=1e-10)
    with pytest.raises(InputError):
        embed(model, row, KernelSpec("Cosine"))
    with pytest.raises(InputError):
        embed(model, row, G.spec, G.omega * 2)


def test_dual_fit_identical_labels_give_identical_models(rng):
    X, labels = labelled_points(rng)
    mc, mp = dual_fit(X @ X.T, labels, labels, 4)
    np.testing.assert_array_equal(mc.T, mp.T)
    assert (mc.task, mp.task) == ("speech", "speaker")
    assert mc.stats is mp.stats


def test_training_accuracy_grows_with_m(rng):
    X, labels = labelled_points(rng, N=30, D=8, q=3)
    X = X + 1.5 * rng.normal(size=X.shape)
    K = np.exp(-0.05 * ((X[:, None] - X[None]) ** 2).sum(-1))
    model = fit_task(K, labels, sorted(set(labels)), 20)
    accs = []
    for m in range(1, model.m + 1):
        sub = truncate(model, m)
        accs.append(np.mean([rfc_predict(sub, sub.T[i]).label == labels[i] for i in range(30)]))
    assert accs[-1] == 1.0
    assert accs[-1] >= accs[0]
