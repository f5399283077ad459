"""Manifold-to-manifold kernels over ``D x n`` parameterizations.

Three families:

* matrix kernels -- ``Cosine`` and ``Euclid`` compare corresponding columns;
* curve kernels -- ``Frechet`` and ``EditDist`` treat the columns as an
  ordered polyline in R^D;
* subspace kernels -- ``Grassm``, ``GrassmCC`` and ``GrassmDiff`` compare the
  column spans through their principal angles.

Distance-based kinds are turned into similarities with ``exp(-omega * delta)``.
``omega`` is resolved once on training data (median heuristic when left on
auto) and must be reused for every test row.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import warnings

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from . import _accel
from ._accel import njit
from .errors import InputError

__all__ = [
    "KINDS",
    "DISTANCE_KINDS",
    "GRASSMANN_KINDS",
    "KernelSpec",
    "GramMatrix",
    "cosine_kernel",
    "euclid_delta",
    "frechet_distance",
    "edit_distance",
    "distance_to_kernel",
    "median_omega",
    "orthonormalize",
    "projection_kernel",
    "cc_kernel",
    "grassmann_kernel",
    "pair_kernel",
    "gram_matrix",
    "kernel_block",
    "kernel_row",
]

KINDS = ("Cosine", "Euclid", "EditDist", "Frechet", "Grassm", "GrassmCC", "GrassmDiff")
DISTANCE_KINDS = ("Euclid", "EditDist", "Frechet")
GRASSMANN_KINDS = ("Grassm", "GrassmCC", "GrassmDiff")
KIND_TAGS = {k: i + 1 for i, k in enumerate(KINDS)}

ORTH_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus hyperparameters.

    ``omega=None`` means "auto": one over the median positive training
    distance. ``a1`` weights the canonical-correlation term and ``a2`` the
    projection term of the combined Grassmann kernel.
    """

    kind: str = "Euclid"
    omega: float = None
    a1: float = 0.5
    a2: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.omega is not None and not (np.isfinite(self.omega) and self.omega > 0):
            raise InputError(f"omega must be > 0, got {self.omega}")
        if self.a1 < 0 or self.a2 < 0:
            raise InputError("a1 and a2 must be >= 0")
        if self.kind in ("Grassm", "GrassmDiff") and self.a1 + self.a2 <= 0:
            raise InputError("a1 + a2 must be > 0 for the combined Grassmann kernel")

    @property
    def is_distance(self):
        return self.kind in DISTANCE_KINDS

    @property
    def tag(self):
        return KIND_TAGS[self.kind]

    def to_dict(self):
        return {"kind": self.kind, "omega": self.omega, "a1": self.a1, "a2": self.a2}


@dataclass
class GramMatrix:
    K: np.ndarray
    spec: KernelSpec
    omega: float = None  # resolved value; None for non-distance kinds

    @property
    def n(self):
        return self.K.shape[0]


def _check_same_shape(Ci, Cj):
    Ci = np.asarray(Ci, dtype=np.float64)
    Cj = np.asarray(Cj, dtype=np.float64)
    if Ci.shape != Cj.shape:
        raise InputError(f"parameterization shapes differ: {Ci.shape} vs {Cj.shape}")
    return Ci, Cj


# -- matrix kernels ----------------------------------------------------------


def cosine_kernel(Ci, Cj):
    """``<Ci, Cj>_F**2 / (||Ci||_F ||Cj||_F)``.

    The norms in the denominator are not squared, so ``K(C, C) = ||C||_F**2``
    rather than 1.
    """
    Ci, Cj = _check_same_shape(Ci, Cj)
    ni, nj = np.linalg.norm(Ci), np.linalg.norm(Cj)
    if ni == 0 or nj == 0:
        raise InputError("cosine kernel is undefined for a zero parameterization")
    return float(np.vdot(Ci, Cj) ** 2 / (ni * nj))


def euclid_delta(Ci, Cj):
    """Sum of squared Euclidean distances between corresponding columns."""
    Ci, Cj = _check_same_shape(Ci, Cj)
    return float(np.sum((Ci - Cj) ** 2))


# -- curve distances ---------------------------------------------------------


def _curve(C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise InputError(f"parameterization must be 2-D, got shape {C.shape}")
    return np.ascontiguousarray(C.T)


@njit
def _frechet_loop(P, Q):
    n, m = P.shape[0], Q.shape[0]
    D = P.shape[1]
    ca = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(D):
                t = P[i, k] - Q[j, k]
                s += t * t
            d = np.sqrt(s)
            if i == 0 and j == 0:
                ca[i, j] = d
            elif i == 0:
                ca[i, j] = max(ca[i, j - 1], d)
            elif j == 0:
                ca[i, j] = max(ca[i - 1, j], d)
            else:
                ca[i, j] = max(min(ca[i - 1, j - 1], ca[i - 1, j], ca[i, j - 1]), d)
    return ca[n - 1, m - 1]


@njit
def _edit_loop(P, Q):
    n, m = P.shape[0], Q.shape[0]
    D = P.shape[1]
    pn = np.empty(n)
    qn = np.empty(m)
    for i in range(n):
        s = 0.0
        for k in range(D):
            s += P[i, k] * P[i, k]
        pn[i] = np.sqrt(s)
    for j in range(m):
        s = 0.0
        for k in range(D):
            s += Q[j, k] * Q[j, k]
        qn[j] = np.sqrt(s)
    cost = np.empty((n + 1, m + 1))
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        cost[i, 0] = cost[i - 1, 0] + pn[i - 1]
    for j in range(1, m + 1):
        cost[0, j] = cost[0, j - 1] + qn[j - 1]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            s = 0.0
            for k in range(D):
                t = P[i - 1, k] - Q[j - 1, k]
                s += t * t
            match = cost[i - 1, j - 1] + np.sqrt(s)
            skip_p = cost[i - 1, j] + pn[i - 1]
            skip_q = cost[i, j - 1] + qn[j - 1]
            cost[i, j] = min(match, skip_p, skip_q)
    return cost[n, m]


def _pair_dists(P, Q):
    diff = P[:, None, :] - Q[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _frechet_numpy(P, Q):
    # anti-diagonal sweep over an (n+1) x (m+1) grid padded with +inf
    n, m = P.shape[0], Q.shape[0]
    d = _pair_dists(P, Q)
    ca = np.full((n + 1, m + 1), np.inf)
    ca[0, 0] = 0.0
    for k in range(2, n + m + 1):
        i = np.arange(max(1, k - m), min(n, k - 1) + 1)
        j = k - i
        prev = np.minimum(np.minimum(ca[i - 1, j - 1], ca[i - 1, j]), ca[i, j - 1])
        ca[i, j] = np.maximum(prev, d[i - 1, j - 1])
    return float(ca[n, m])


def _edit_numpy(P, Q):
    n, m = P.shape[0], Q.shape[0]
    d = _pair_dists(P, Q)
    pn = np.sqrt(np.einsum("ij,ij->i", P, P))
    qn = np.sqrt(np.einsum("ij,ij->i", Q, Q))
    cost = np.empty((n + 1, m + 1))
    cost[0, 0] = 0.0
    for k in range(1, n + m + 1):
        i = np.arange(max(0, k - m), min(n, k) + 1)
        j = k - i
        best = np.full(i.size, np.inf)
        ok = (i > 0) & (j > 0)
        best[ok] = cost[i[ok] - 1, j[ok] - 1] + d[i[ok] - 1, j[ok] - 1]
        ok = i > 0
        best[ok] = np.minimum(best[ok], cost[i[ok] - 1, j[ok]] + pn[i[ok] - 1])
        ok = j > 0
        best[ok] = np.minimum(best[ok], cost[i[ok], j[ok] - 1] + qn[j[ok] - 1])
        cost[i, j] = best
    return float(cost[n, m])


def _curves_pair(Ci, Cj):
    P, Q = _curve(Ci), _curve(Cj)
    if P.shape[1] != Q.shape[1]:
        raise InputError(f"curves live in different dimensions: {P.shape[1]} vs {Q.shape[1]}")
    return P, Q


def frechet_distance(Ci, Cj, use_numba=None):
    """Discrete Frechet (coupling) distance between the column polylines.

    Eiter & Mannila's O(n m) dynamic program over monotone couplings that
    cover every column of both curves.
    """
    P, Q = _curves_pair(Ci, Cj)
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise InputError("Frechet distance needs non-empty curves")
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    return float(_frechet_loop(P, Q)) if use_numba else _frechet_numpy(P, Q)


def edit_distance(Ci, Cj, use_numba=None):
    """Edit distance between column polylines; skipped columns pair with the origin.

    ``cost(i, j) = min(cost(i-1, j-1) + |u_i - v_j|, cost(i-1, j) + |u_i|,
    cost(i, j-1) + |v_j|)`` with ``cost(0, 0) = 0``.
    """
    P, Q = _curves_pair(Ci, Cj)
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    return float(_edit_loop(P, Q)) if use_numba else _edit_numpy(P, Q)


@njit(nogil=True)
def _curve_pairs_loop(A, B, I, J, which):
    out = np.empty(I.shape[0])
    for k in range(I.shape[0]):
        if which == 0:
            out[k] = _frechet_loop(A[I[k]], B[J[k]])
        else:
            out[k] = _edit_loop(A[I[k]], B[J[k]])
    return out


# -- distance -> similarity --------------------------------------------------


def distance_to_kernel(delta, omega):
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta < 0):
        raise InputError("distances must be non-negative")
    if not omega > 0:
        raise InputError(f"omega must be > 0, got {omega}")
    out = np.exp(-omega * delta)
    return float(out) if out.ndim == 0 else out


def median_omega(deltas):
    """One over the median of the strictly positive distances."""
    d = np.asarray(deltas, dtype=np.float64).ravel()
    pos = d[d > 0]
    if pos.size == 0:
        raise InputError("cannot pick omega: every distance is zero")
    return float(1.0 / np.median(pos))


# -- subspace kernels --------------------------------------------------------


def orthonormalize(C):
    """Orthonormal basis of ``span(C)`` by modified Gram-Schmidt.

    Each column is projected twice against the accepted basis; a column whose
    residual norm falls below ``1e-12`` times the largest column norm of ``C``
    is treated as dependent and dropped.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {C.shape}")
    scale = np.linalg.norm(C, axis=0).max() if C.size else 0.0
    if scale == 0:
        raise InputError("cannot orthonormalize a zero matrix")
    basis = []
    for col in C.T:
        v = col.copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv > ORTH_TOL * scale:
            basis.append(v / nv)
    return np.column_stack(basis)


def projection_kernel(Pi, Pj):
    """``||Pi^T Pj||_F**2``: sum of squared principal-angle cosines."""
    M = np.asarray(Pi).T @ np.asarray(Pj)
    return float(np.sum(M * M))


def cc_kernel(Pi, Pj):
    """Largest canonical correlation, i.e. top singular value of ``Pi^T Pj``."""
    M = np.asarray(Pi).T @ np.asarray(Pj)
    if M.size == 0:
        return 0.0
    return float(min(np.linalg.norm(M, 2), 1.0))


def grassmann_kernel(Ci, Cj, a1=0.5, a2=0.5):
    Pi, Pj = orthonormalize(Ci), orthonormalize(Cj)
    return a1 * cc_kernel(Pi, Pj) + a2 * projection_kernel(Pi, Pj)


def _grassm_value(M, spec):
    cc = float(min(np.linalg.norm(M, 2), 1.0)) if M.size else 0.0
    if spec.kind == "GrassmCC":
        return cc
    return spec.a1 * cc + spec.a2 * float(np.sum(M * M))


def pair_kernel(Ci, Cj, spec, omega=None):
    """Kernel value of one pair under ``spec``; ``omega`` overrides ``spec.omega``."""
    kind = spec.kind
    if kind == "Cosine":
        return cosine_kernel(Ci, Cj)
    if kind in GRASSMANN_KINDS:
        M = orthonormalize(Ci).T @ orthonormalize(Cj)
        return _grassm_value(M, spec)
    omega = spec.omega if omega is None else omega
    if omega is None:
        raise InputError(f"{kind} kernel needs a resolved omega")
    if kind == "Euclid":
        delta = euclid_delta(Ci, Cj)
    elif kind == "Frechet":
        delta = frechet_distance(Ci, Cj)
    else:
        delta = edit_distance(Ci, Cj)
    return distance_to_kernel(delta, omega)


# -- assembly ----------------------------------------------------------------


def _stack(params):
    params = [np.asarray(p, dtype=np.float64) for p in params]
    if not params:
        raise InputError("need at least one parameterization")
    shape = params[0].shape
    for k, p in enumerate(params):
        if p.ndim != 2 or p.shape != shape:
            raise InputError(f"parameterization {k} has shape {p.shape}, expected {shape}")
    return np.stack(params)


def _map_pairs(fn, I, J, threads):
    if threads is not None and threads > 1 and len(I) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.fromiter(pool.map(fn, I, J), dtype=np.float64, count=len(I))
    return np.fromiter(map(fn, I, J), dtype=np.float64, count=len(I))


def _pair_values(A, B, I, J, spec, threads):
    """Raw pair values: distances for distance kinds, similarities otherwise."""
    kind = spec.kind
    if kind in ("Frechet", "EditDist"):
        PA = np.ascontiguousarray(A.transpose(0, 2, 1))
        PB = PA if B is A else np.ascontiguousarray(B.transpose(0, 2, 1))
        if _accel.USE_NUMBA:
            which = 0 if kind == "Frechet" else 1
            I, J = I.astype(np.int64), J.astype(np.int64)
            chunks = np.array_split(np.arange(I.size), max(1, min(threads or 1, I.size)))
            run = lambda c: _curve_pairs_loop(PA, PB, I[c], J[c], which)  # noqa: E731
            if len(chunks) == 1:
                return run(chunks[0])
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                return np.concatenate(list(pool.map(run, chunks)))
        fn = _frechet_numpy if kind == "Frechet" else _edit_numpy
        return _map_pairs(lambda i, j: fn(PA[i], PB[j]), I, J, threads)
    if kind in GRASSMANN_KINDS:
        cache = {}

        def basis(side, idx):
            key = (side, idx)
            if key not in cache:
                src = A if side == 0 else B
                try:
                    cache[key] = orthonormalize(src[idx])
                except InputError as exc:
                    raise InputError(f"parameterization {idx}: {exc}") from exc
            return cache[key]

        bside = 0 if B is A else 1
        for i in np.unique(I):
            basis(0, i)
        for j in np.unique(J):
            basis(bside, j)
        return _map_pairs(lambda i, j: _grassm_value(cache[(0, i)].T @ cache[(bside, j)], spec), I, J, threads)
    raise AssertionError(kind)


def _resolve_omega(spec, deltas):
    if spec.omega is not None:
        return float(spec.omega)
    try:
        return median_omega(deltas)
    except InputError:
        warnings.warn("all training distances are zero; using omega = 1", RuntimeWarning, stacklevel=3)
        return 1.0


def gram_matrix(params, spec, threads=None):
    """Symmetric ``N x N`` Gram matrix over training parameterizations.

    Only the upper triangle is evaluated and then mirrored, so the result is
    exactly symmetric. Distance kinds resolve ``omega`` here (median of the
    strictly upper-triangular distances when ``spec.omega`` is None).
    """
    A = _stack(params)
    N = A.shape[0]
    kind = spec.kind
    if kind == "GrassmDiff" and A.shape[1] % 2:
        raise InputError("GrassmDiff expects difference-augmented (2D x n) parameterizations")
    X = A.reshape(N, -1)
    omega = None
    if kind == "Cosine":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            bad = int(np.flatnonzero(norms == 0)[0])
            raise InputError(f"parameterization {bad} is zero; cosine kernel undefined")
        S = X @ X.T
        K = S**2 / np.outer(norms, norms)
    elif kind == "Euclid":
        K = squareform(pdist(X, "sqeuclidean")) if N > 1 else np.zeros((1, 1))
    else:
        I, J = np.triu_indices(N, k=0 if kind in GRASSMANN_KINDS else 1)
        vals = _pair_values(A, A, I, J, spec, threads)
        K = np.zeros((N, N))
        K[I, J] = vals
    K = np.triu(K)
    K = K + np.triu(K, 1).T
    if spec.is_distance:
        np.fill_diagonal(K, 0.0)
        omega = _resolve_omega(spec, K[np.triu_indices(N, 1)])
        K = np.exp(-omega * K)
    return GramMatrix(K=K, spec=spec, omega=omega)


def kernel_block(tests, params, spec, omega=None, threads=None):
    """``M x N`` kernel values between test and training parameterizations.

    ``omega`` must be the value resolved when the training Gram was built.
    """
    A = _stack(params)
    T = _stack(tests)
    if T.shape[1:] != A.shape[1:]:
        raise InputError(f"test shape {T.shape[1:]} does not match training shape {A.shape[1:]}")
    kind = spec.kind
    if spec.is_distance:
        omega = spec.omega if omega is None else omega
        if omega is None:
            raise InputError(f"{kind} kernel rows need the omega resolved on training data")
    M, N = T.shape[0], A.shape[0]
    XT, XA = T.reshape(M, -1), A.reshape(N, -1)
    if kind == "Cosine":
        nt, na = np.linalg.norm(XT, axis=1), np.linalg.norm(XA, axis=1)
        if np.any(nt == 0) or np.any(na == 0):
            raise InputError("cosine kernel is undefined for a zero parameterization")
        return (XT @ XA.T) ** 2 / np.outer(nt, na)
    if kind == "Euclid":
        return np.exp(-omega * cdist(XT, XA, "sqeuclidean"))
    I, J = (g.ravel() for g in np.meshgrid(np.arange(M), np.arange(N), indexing="ij"))
    vals = _pair_values(T, A, I, J, spec, threads).reshape(M, N)
    if spec.is_distance:
        return np.exp(-omega * vals)
    return vals


def kernel_row(test, params, spec, omega=None, threads=None):
    return kernel_block([test], params, spec, omega, threads)[0]


def with_omega(spec, omega):
    """Copy of ``spec`` with ``omega`` pinned (used to persist the resolved value)."""
    return replace(spec, omega=omega)
