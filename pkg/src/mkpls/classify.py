"""Label inference from latent points: regression-for-classification and KNN."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = ["Prediction", "rfc_scores", "rfc_predict", "knn_predict"]


@dataclass(frozen=True)
class Prediction:
    label: object
    index: int
    scores: np.ndarray


def rfc_scores(model, t):
    """KPLS regression output ``t T^T Y`` plus the stored target means."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != model.m:
        raise InputError(f"latent point has {t.shape[-1]} coordinates, model has m={model.m}")
    return t @ (model.T.T @ model.Y) + model.y_means


def rfc_predict(model, t):
    scores = rfc_scores(model, t)
    if scores.ndim != 1:
        raise InputError("rfc_predict takes a single latent point; use rfc_scores for batches")
    q = int(np.argmax(scores))  # first maximum wins ties
    return Prediction(label=model.vocabulary[q] if model.vocabulary else q, index=q, scores=scores)


def knn_predict(train_latents, train_labels, t, k=1, vocabulary=None):
    """Majority vote among the ``k`` Euclidean-nearest training latents.

    Equal distances resolve to the lower training index and tied votes to the
    lower class index in ``vocabulary`` (sorted labels when omitted).
    ``scores`` are the vote counts per class.
    """
    X = np.asarray(train_latents, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("knn_predict needs a non-empty 2-D training set")
    if len(train_labels) != X.shape[0]:
        raise InputError(f"{len(train_labels)} labels for {X.shape[0]} training points")
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (X.shape[1],):
        raise InputError(f"latent point shape {t.shape} does not match training dim {X.shape[1]}")
    if not 1 <= k <= X.shape[0]:
        raise InputError(f"k must lie in [1, {X.shape[0]}], got {k}")
    vocabulary = tuple(sorted(set(train_labels))) if vocabulary is None else tuple(vocabulary)
    index = {v: q for q, v in enumerate(vocabulary)}
    d = np.sum((X - t) ** 2, axis=1)
    nearest = np.argsort(d, kind="stable")[:k]
    votes = np.zeros(len(vocabulary))
    for i in nearest:
        votes[index[train_labels[i]]] += 1
    q = int(np.argmax(votes))
    return Prediction(label=vocabulary[q], index=q, scores=votes)
