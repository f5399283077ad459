"""Kernel partial least squares (NIPALS form) over a precomputed Gram matrix.

Scores ``T`` are extracted one component at a time from the centred Gram
matrix and centred one-hot targets, deflating both after each component.
Test points are embedded with ``t = centred(v) @ R`` where
``R = U (T^T K_c U)^-1``, which reproduces ``T = K_c R`` on the training set.
"""

from dataclasses import dataclass, field, replace
import logging
import warnings

import numpy as np

from .errors import InputError
from .kernels import GramMatrix, KernelSpec

__all__ = [
    "CenteringStats",
    "KplsModel",
    "one_hot",
    "center_gram",
    "center_test_row",
    "kpls_fit",
    "truncate",
    "fit_task",
    "embed",
    "dual_fit",
]

log = logging.getLogger(__name__)

MAX_ITER = 500
TOL = 1e-12
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class CenteringStats:
    col_means: np.ndarray
    grand_mean: float

    @property
    def n(self):
        return self.col_means.shape[0]


@dataclass
class KplsModel:
    """Fitted latent model for one task.

    ``Y`` holds the column-centred one-hot targets and ``y_means`` the column
    means that were removed. ``TKU`` is ``T^T K_c U``, kept so that leading
    sub-models can be carved out without refitting.
    """

    T: np.ndarray
    U: np.ndarray
    R: np.ndarray
    TKU: np.ndarray
    Y: np.ndarray
    y_means: np.ndarray
    stats: CenteringStats
    vocabulary: tuple = ()
    task: str = "speech"
    spec: KernelSpec = None
    omega: float = None
    m_requested: int = 0
    warnings: list = field(default_factory=list)

    @property
    def m(self):
        return self.T.shape[1]

    @property
    def n_train(self):
        return self.T.shape[0]

    @property
    def n_classes(self):
        return self.Y.shape[1]


def one_hot(labels, vocabulary, center=True):
    """One-hot encode ``labels`` against ``vocabulary``; optionally centre columns."""
    index = {v: q for q, v in enumerate(vocabulary)}
    Y = np.zeros((len(labels), len(index)))
    for k, lab in enumerate(labels):
        if lab not in index:
            raise InputError(f"label {lab!r} at position {k} is not in the vocabulary")
        Y[k, index[lab]] = 1.0
    if center:
        if len(set(labels)) < 2:
            warnings.warn("single-class targets centre to a zero matrix", RuntimeWarning, stacklevel=2)
        Y = Y - Y.mean(axis=0)
    return Y


def center_gram(K):
    """Double-centre ``K``; returns ``(K_c, stats)`` with stats for test rows."""
    K = np.asarray(K.K if isinstance(K, GramMatrix) else K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"Gram matrix must be square, got {K.shape}")
    r = K.mean(axis=0)
    g = float(r.mean())
    Kc = K - (r[:, None] + r[None, :]) + g
    return Kc, CenteringStats(col_means=r, grand_mean=g)


def center_test_row(v, stats):
    """Centre test kernel row(s) ``v`` (length N, or M x N) with training stats."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != stats.n:
        raise InputError(f"kernel row has length {v.shape[-1]}, model was trained on {stats.n} items")
    rm = v.mean(axis=-1, keepdims=True)
    return v - (rm + stats.col_means) + stats.grand_mean


def _projection(T, U, TKU, warns):
    m = T.shape[1]
    while m > 0:
        M = TKU[:m, :m]
        cond = np.linalg.cond(M)
        if np.isfinite(cond) and cond <= MAX_CONDITION:
            break
        m -= 1
    if m < T.shape[1]:
        warns.append(f"T^T K U ill-conditioned; truncated to m={m}")
    # pivoted LU solve of M^T R^T = U^T
    R = np.linalg.solve(TKU[:m, :m].T, U[:, :m].T).T if m else np.zeros((T.shape[0], 0))
    return m, R


def kpls_fit(Kc, Y, m, tol=TOL, max_iter=MAX_ITER):
    """Extract ``m`` KPLS components.

    Parameters
    ----------
    Kc : ndarray, shape (N, N)
        Centred Gram matrix.
    Y : ndarray, shape (N, q)
        Column-centred targets.
    m : int
        Requested components, ``1 <= m <= N - 1``.

    Returns
    -------
    T, U, R, TKU, warnings
        ``T`` and ``U`` hold unit-norm score and weight columns. Fewer than
        ``m`` columns come back (with a message in ``warnings``) when the
        deflated targets or kernel vanish, or ``T^T K_c U`` is too
        ill-conditioned to invert.
    """
    Kc = np.asarray(Kc, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = Kc.shape[0]
    if Kc.shape != (N, N) or Y.shape[0] != N:
        raise InputError(f"shape mismatch: K {Kc.shape}, Y {Y.shape}")
    if not 1 <= m <= N - 1:
        raise InputError(f"m must lie in [1, N-1] = [1, {N - 1}], got {m}")
    K = Kc.copy()
    Yd = Y.copy()
    k_scale = np.linalg.norm(Kc)
    y_scale = np.linalg.norm(Y)
    T = np.zeros((N, m))
    U = np.zeros((N, m))
    warns = []
    a = 0
    while a < m:
        if y_scale == 0 or np.linalg.norm(Yd) <= 1e-10 * y_scale:
            warns.append(f"targets exhausted after {a} components")
            break
        u = Yd[:, int(np.argmax(np.sum(Yd * Yd, axis=0)))].copy()
        u /= np.linalg.norm(u)
        t = None
        converged = degenerate = False
        for _ in range(max_iter):
            Ku = K @ u
            nk = np.linalg.norm(Ku)
            if nk <= 1e-12 * max(k_scale, 1e-300):
                degenerate = True
                break
            t_new = Ku / nk
            u_new = Yd @ (Yd.T @ t_new)
            nu = np.linalg.norm(u_new)
            if nu == 0:
                degenerate = True
                break
            u = u_new / nu
            converged = t is not None and np.linalg.norm(t_new - t) < tol
            t = t_new
            if converged:
                break
        if not degenerate and not converged:
            # nearly tied leading eigenvalues stall the power iteration; jump to
            # its limit: u ~ Yd c with c the top eigenvector of Yd^T K Yd
            _, vecs = np.linalg.eigh(Yd.T @ K @ Yd)
            u = Yd @ vecs[:, -1]
            u /= np.linalg.norm(u)
            warns.append(f"component {a + 1}: no convergence in {max_iter} iterations; used eigen solve")
        if not degenerate:
            # pair t with the final u so that T = K_c R holds to rounding
            Ku = K @ u
            nk = np.linalg.norm(Ku)
            degenerate = nk <= 1e-12 * max(k_scale, 1e-300)
            t = None if degenerate else Ku / nk
        if degenerate:
            warns.append(f"kernel or targets degenerate after {a} components")
            break
        if t[np.argmax(np.abs(t))] < 0:
            t, u = -t, -u
        T[:, a] = t
        U[:, a] = u
        Kt = K @ t
        tKt = t @ Kt
        K = K - np.outer(t, Kt) - np.outer(Kt, t) + tKt * np.outer(t, t)
        Yd = Yd - np.outer(t, t @ Yd)
        a += 1
    T, U = T[:, :a], U[:, :a]
    TKU = T.T @ Kc @ U
    m_eff, R = _projection(T, U, TKU, warns)
    for w in warns:
        log.debug(w)
    return T[:, :m_eff], U[:, :m_eff], R, TKU[:m_eff, :m_eff], warns


def truncate(model, m):
    """Model restricted to its leading ``m`` components (same as refitting with ``m``)."""
    if m >= model.m:
        return model
    warns = []
    m_eff, R = _projection(model.T[:, :m], model.U[:, :m], model.TKU[:m, :m], warns)
    return replace(
        model,
        T=model.T[:, :m_eff],
        U=model.U[:, :m_eff],
        R=R,
        TKU=model.TKU[:m_eff, :m_eff],
        m_requested=m,
        warnings=warns,
    )


def _gram_meta(K, spec, omega):
    if isinstance(K, GramMatrix):
        return K.K, K.spec if spec is None else spec, K.omega if omega is None else omega
    return K, spec, omega


def fit_task(K, labels, vocabulary, m, task="speech", spec=None, omega=None, centered=None):
    """Centre ``K``, encode ``labels`` and fit one task model."""
    K, spec, omega = _gram_meta(K, spec, omega)
    Kc, stats = centered if centered is not None else center_gram(K)
    vocabulary = tuple(vocabulary)
    raw = one_hot(labels, vocabulary, center=False)
    y_means = raw.mean(axis=0)
    Y = raw - y_means
    T, U, R, TKU, warns = kpls_fit(Kc, Y, m)
    return KplsModel(
        T=T, U=U, R=R, TKU=TKU, Y=Y, y_means=y_means, stats=stats, vocabulary=vocabulary,
        task=task, spec=spec, omega=omega, m_requested=m, warnings=warns,
    )


def embed(model, v, spec=None, omega=None):
    """Latent coordinates of kernel row(s) ``v``.

    Passing ``spec`` / ``omega`` makes the call verify they match what the
    model was trained with.
    """
    if spec is not None and model.spec is not None and spec.kind != model.spec.kind:
        raise InputError(f"kernel row built with {spec.kind}, model trained with {model.spec.kind}")
    if omega is not None and model.omega is not None and omega != model.omega:
        raise InputError(f"kernel row used omega={omega}, model was trained with omega={model.omega}")
    return center_test_row(v, model.stats) @ model.R


def dual_fit(K, speech_labels, speaker_labels, m, speech_vocab=None, speaker_vocab=None, spec=None, omega=None):
    """Fit the speech and speaker models on one shared, once-centred Gram matrix."""
    K, spec, omega = _gram_meta(K, spec, omega)
    centered = center_gram(K)
    speech_vocab = sorted(set(speech_labels)) if speech_vocab is None else speech_vocab
    speaker_vocab = sorted(set(speaker_labels)) if speaker_vocab is None else speaker_vocab
    model_c = fit_task(K, speech_labels, speech_vocab, m, "speech", spec, omega, centered)
    model_p = fit_task(K, speaker_labels, speaker_vocab, m, "speaker", spec, omega, centered)
    return model_c, model_p
