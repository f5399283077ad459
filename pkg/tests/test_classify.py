import numpy as np
import pytest

from mkpls.classify import knn_predict, rfc_predict, rfc_scores
from mkpls.errors import InputError
from mkpls.kpls import CenteringStats, KplsModel, fit_task


def toy_model(T, Y_raw, vocab):
    y_means = Y_raw.mean(axis=0)
    N, m = T.shape
    return KplsModel(
        T=T, U=T, R=np.eye(N, m), TKU=np.eye(m), Y=Y_raw - y_means, y_means=y_means,
        stats=CenteringStats(np.zeros(N), 0.0), vocabulary=tuple(vocab),
    )


def test_rfc_scores_hand_example():
    T = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    Y = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    model = toy_model(T, Y, ["a", "b"])
    # T^T Yc = [[1/3, -1/3], [-2/3, 2/3]], means = [2/3, 1/3]
    s = rfc_scores(model, np.array([1.0, 0.0]))
    np.testing.assert_allclose(s, [1.0, 0.0], atol=1e-15)
    assert rfc_predict(model, np.array([0.0, 1.0])).label == "b"
    # origin falls back to the class prior
    assert rfc_predict(model, np.zeros(2)).label == "a"


def test_rfc_tie_goes_to_first_class():
    T = np.array([[1.0], [0.0]])
    Y = np.array([[1.0, 0.0], [0.0, 1.0]])
    p = rfc_predict(toy_model(T, Y, ["x", "y"]), np.array([0.0]))
    assert p.scores[0] == p.scores[1]
    assert (p.label, p.index) == ("x", 0)


def test_rfc_on_training_points_recovers_labels(rng):
    X = np.repeat(np.eye(3) * 4, 4, axis=0) + 0.1 * rng.normal(size=(12, 3))
    labels = [lab for lab in "abc" for _ in range(4)]
    model = fit_task(X @ X.T, labels, "abc", 2)
    assert [rfc_predict(model, model.T[i]).label for i in range(12)] == labels


def test_rfc_shape_checks():
    model = toy_model(np.eye(3, 2), np.eye(3, 2), ["a", "b"])
    with pytest.raises(InputError):
        rfc_scores(model, np.zeros(3))
    with pytest.raises(InputError):
        rfc_predict(model, np.zeros((2, 2)))


def test_knn_basic_and_ties():
    X = np.array([[0.0], [1.0], [3.0], [4.0]])
    labels = ["a", "a", "b", "b"]
    assert knn_predict(X, labels, np.array([0.9])).label == "a"
    assert knn_predict(X, labels, np.array([3.4]), k=3).label == "b"
    # equidistant neighbours: lower training index wins
    assert knn_predict(X, labels, np.array([2.0]), k=1).label == "a"
    # 1-1 vote split: lower class index wins, even when vocabulary is reordered
    assert knn_predict(X, labels, np.array([2.0]), k=2).label == "a"
    p = knn_predict(X, labels, np.array([2.0]), k=2, vocabulary=["b", "a"])
    assert p.label == "b"
    np.testing.assert_array_equal(p.scores, [1, 1])


def test_knn_validation():
    X = np.zeros((3, 2))
    with pytest.raises(InputError):
        knn_predict(X, ["a"] * 3, np.zeros(2), k=4)
    with pytest.raises(InputError):
        knn_predict(X, ["a"] * 2, np.zeros(2))
    with pytest.raises(InputError):
        knn_predict(X, ["a"] * 3, np.zeros(3))
