"""Per-sequence manifold parameterization by regularized Gaussian-RBF regression.

A sequence ``X`` (``n_k`` frames by ``D`` features) is mapped to a fixed-size
``D x n`` coefficient matrix ``C`` with ``gamma(z) = C @ psi(z)``, where
``psi_j(z) = exp(-sigma * (z - w_j)**2)`` and the frames sit at uniform
coordinates on [0, 1]. ``C`` minimises

    sum_i ||x_i - gamma(z_i)||**2 + lam * trace(C G C^T)

whose stationary point is ``C^T = (A^T A + lam G)^-1 A^T X``.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg as sla

from .errors import InputError, SolverError

__all__ = [
    "BasisConfig",
    "assign_timestamps",
    "rbf_design",
    "basis_responses",
    "fit_parameterization",
    "reconstruct",
    "diff_parameterization",
    "objective",
    "total_variation",
]

MAX_CONDITION = 1e14


@dataclass(frozen=True)
class BasisConfig:
    """Basis count ``n``, regularizer ``lam``, RBF width ``sigma`` and centres.

    ``sigma`` defaults to ``2 n**2`` so neighbouring bumps overlap at about
    ``exp(-2)``; ``centers`` default to ``linspace(0, 1, n)``.
    """

    n: int = 8
    lam: float = 50.0
    sigma: float = None
    centers: tuple = None

    def __post_init__(self):
        if self.n < 2:
            raise InputError(f"basis count n must be >= 2, got {self.n}")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise InputError(f"lambda must be finite and >= 0, got {self.lam}")
        sigma = 2.0 * self.n**2 if self.sigma is None else float(self.sigma)
        if not sigma > 0:
            raise InputError(f"sigma must be > 0, got {sigma}")
        object.__setattr__(self, "sigma", sigma)
        if self.centers is None:
            centers = tuple(np.linspace(0.0, 1.0, self.n))
        else:
            centers = tuple(float(c) for c in self.centers)
        w = np.asarray(centers)
        if w.size != self.n:
            raise InputError(f"{w.size} centers given for n={self.n}")
        if np.any(np.diff(w) <= 0) or w[0] < 0 or w[-1] > 1:
            raise InputError("centers must be strictly increasing within [0, 1]")
        object.__setattr__(self, "centers", centers)

    @property
    def w(self):
        return np.asarray(self.centers)

    def to_dict(self):
        return {"n": self.n, "lam": self.lam, "sigma": self.sigma, "centers": list(self.centers)}

    @classmethod
    def from_dict(cls, d):
        return cls(n=int(d["n"]), lam=float(d["lam"]), sigma=d.get("sigma"), centers=d.get("centers"))


def assign_timestamps(n_k):
    if n_k < 2:
        raise InputError(f"a sequence needs at least 2 frames, got {n_k}")
    return np.linspace(0.0, 1.0, n_k)


def basis_responses(z, config):
    """``len(z) x n`` matrix of RBF responses ``exp(-sigma (z_i - w_j)^2)``."""
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    return np.exp(-config.sigma * (z[:, None] - config.w[None, :]) ** 2)


def rbf_design(z, config):
    A = basis_responses(z, config)
    G = basis_responses(config.w, config)
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return A, G


def _as_sequence(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"sequence must be 2-D (frames x features), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("sequence contains non-finite values")
    return X


def _solve(M, B, lam):
    if lam > 0:
        try:
            return sla.cho_solve(sla.cho_factor(M, lower=False, check_finite=False), B, check_finite=False)
        except np.linalg.LinAlgError:
            pass
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SolverError(
            f"normal matrix A^T A + lam G is singular to working precision "
            f"(lam={lam}, condition={cond:.3e})",
            condition=cond,
        )
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.lu_solve(sla.lu_factor(M, check_finite=False), B, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise SolverError(f"LU solve failed (condition={cond:.3e}): {exc}", condition=cond) from exc


def fit_parameterization(X, config):
    """Fit the ``D x n`` parameterization of one sequence.

    Parameters
    ----------
    X : array_like
        ``n_k x D`` frames in temporal order, ``n_k >= 2``.
    config : BasisConfig

    Returns
    -------
    numpy.ndarray
        ``C`` with shape ``(D, n)``.

    Raises
    ------
    SolverError
        If ``A^T A + lam G`` is numerically singular (only possible for
        ``lam == 0``); the exception carries the condition number.
    """
    X = _as_sequence(X)
    z = assign_timestamps(X.shape[0])
    A, G = rbf_design(z, config)
    M = A.T @ A + config.lam * G
    Ct = _solve(M, A.T @ X, config.lam)
    return np.ascontiguousarray(Ct.T)


def reconstruct(C, z, config):
    """Evaluate ``gamma`` at coordinates ``z``; returns ``len(z) x D``."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[1] != config.n:
        raise InputError(f"C has shape {C.shape}, expected (D, {config.n})")
    return basis_responses(z, config) @ C.T


def diff_parameterization(X, config):
    """Stack the parameterization of ``X`` over that of its first differences.

    Returns a ``2D x n`` matrix; both halves use their own uniform timestamps.
    """
    X = _as_sequence(X)
    if X.shape[0] < 3:
        raise InputError(f"difference parameterization needs >= 3 frames, got {X.shape[0]}")
    return np.vstack([fit_parameterization(X, config), fit_parameterization(np.diff(X, axis=0), config)])


def objective(C, X, config):
    """Regularized loss; returns ``(total, data_term, smoothness_term)``."""
    X = _as_sequence(X)
    z = assign_timestamps(X.shape[0])
    A, G = rbf_design(z, config)
    resid = X - A @ C.T
    fit = float(np.sum(resid**2))
    smooth = float(np.trace(C @ G @ C.T))
    return fit + config.lam * smooth, fit, smooth


def total_variation(C):
    """Sum over rows of ``C`` of absolute successive differences."""
    return float(np.abs(np.diff(np.asarray(C), axis=1)).sum())
