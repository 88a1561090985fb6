"""Dense symmetric matrix primitives.

Holds the two matrix types the rest of the package is built on: the true
scale matrix (positive definite, with Cholesky factor and inverse cached)
and the observed scatter matrix ``S = U^T U`` (positive semidefinite,
possibly singular, with its Moore-Penrose inverse and range projector
cached). Pseudoinverses are taken through a symmetric eigendecomposition,
truncating eigenvalues at ``dim * eps * sigma_max``.

Scatter matrices may carry leading batch dimensions; that path is used by the
finite-difference Haff operator to evaluate many perturbations at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._validation import check_positive_int, check_real, check_square, check_symmetric, frozen

EPS = np.finfo(np.float64).eps


def default_rtol(dim):
    """Relative eigenvalue cutoff ``dim * eps`` used for numerical rank."""
    return dim * EPS


def sym_eig(A):
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order.

    Parameters
    ----------
    A : array-like of shape (p, p)
        Symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray of shape (p,)
        Eigenvalues sorted from largest to smallest.
    eigenvectors : ndarray of shape (p, p)
        Orthonormal eigenvectors as columns, matching ``eigenvalues``.
    """
    A = check_symmetric(A)
    w, V = np.linalg.eigh(A)
    return w[..., ::-1].copy(), V[..., ::-1].copy()


def _rank_mask(w, rank=None, rtol=None):
    # w ascending (eigh order); returns boolean mask of kept eigenvalues
    p = w.shape[-1]
    if rank is not None:
        mask = np.zeros(w.shape, dtype=bool)
        if rank > 0:
            mask[..., p - rank:] = True
        return mask
    if rtol is None:
        rtol = default_rtol(p)
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    return (w > rtol * top) & (top > 0)


def _assemble(V, weights):
    return np.einsum("...ik,...k,...jk->...ij", V, weights, V)


def pseudo_inverse(A, rtol=None):
    """Moore-Penrose inverse of a symmetric positive semidefinite matrix.

    Eigenvalues at or below ``rtol * max|eigenvalue|`` are treated as zero;
    ``rtol`` defaults to ``dim * eps``. An all-zero input gives an all-zero
    result.
    """
    A = check_symmetric(A)
    w, V = np.linalg.eigh(A)
    mask = _rank_mask(w, rtol=rtol)
    inv_w = np.where(mask, 1.0 / np.where(mask, w, 1.0), 0.0)
    out = _assemble(V, inv_w)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def penrose_residuals(A, A_pinv):
    """Relative Frobenius residuals of the four Penrose conditions.

    Returns a tuple ``(AXA - A, XAX - X, (AX)^T - AX, (XA)^T - XA)`` with each
    entry normalized by the Frobenius norm of its reference matrix.
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(A_pinv, dtype=np.float64)
    AX = A @ X
    XA = X @ A

    def rel(diff, ref):
        den = np.linalg.norm(ref)
        return float(np.linalg.norm(diff) / den) if den > 0 else float(np.linalg.norm(diff))

    return (
        rel(AX @ A - A, A),
        rel(XA @ X - X, X),
        rel(AX.T - AX, AX),
        rel(XA.T - XA, XA),
    )


@dataclass(frozen=True, eq=False)
class ScaleMatrix:
    """Positive definite scale matrix with cached factor and inverse.

    Use :meth:`from_array` or :func:`build_ar1` rather than the raw constructor.
    """

    entries: np.ndarray
    factor: np.ndarray
    inverse: np.ndarray
    logdet: float

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def from_array(cls, A):
        A = check_symmetric(A, "sigma")
        if A.ndim != 2:
            raise ValueError("sigma must be a single 2-D matrix")
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma is not positive definite") from exc
        inv = sla.cho_solve((L, True), np.eye(A.shape[0]))
        inv = 0.5 * (inv + inv.T)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return cls(frozen(A), frozen(L), frozen(inv), logdet)


def build_ar1(p, rho):
    """AR(1) scale matrix with entries ``rho ** |i - j|``."""
    p = check_positive_int(p, "p")
    rho = check_real(rho, "rho")
    if abs(rho) >= 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    idx = np.arange(p)
    lags = np.abs(idx[:, None] - idx[None, :])
    return ScaleMatrix.from_array(np.power(rho, lags))


@dataclass(frozen=True, eq=False)
class ScatterMatrix:
    """Symmetric PSD scatter matrix ``S`` with cached ``S^+`` and ``S S^+``.

    Attributes
    ----------
    entries : ndarray of shape (..., p, p)
    eigenvalues : ndarray of shape (..., p)
        Ascending, as returned by ``eigh``; truncated ones are kept here.
    eigenvectors : ndarray of shape (..., p, p)
    mask : ndarray of shape (..., p)
        Eigenvalues retained in the numerical range of ``S``.
    rank : int
    pinv : ndarray of shape (..., p, p)
    projector : ndarray of shape (..., p, p)
        Orthogonal projector ``S S^+`` onto the range of ``S``.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mask: np.ndarray
    rank: int
    pinv: np.ndarray
    projector: np.ndarray

    @property
    def dim(self):
        return self.entries.shape[-1]

    @classmethod
    def from_matrix(cls, S, rank=None, rtol=None, truncate=False):
        """Build from a symmetric PSD matrix (or a stack of them).

        With ``rank`` given, exactly the ``rank`` largest eigenvalues are kept.
        With ``truncate=True`` the stored entries are also replaced by the
        rank-``rank`` reconstruction, which projects a perturbed matrix back
        onto the fixed-rank manifold.
        """
        S = check_symmetric(S, "S")
        w, V = np.linalg.eigh(S)
        if rank is not None:
            rank = check_positive_int(rank, "rank", minimum=0)
            if rank > S.shape[-1]:
                raise ValueError("rank exceeds dimension")
        mask = _rank_mask(w, rank=rank, rtol=rtol)
        ranks = np.unique(mask.sum(axis=-1))
        if ranks.size != 1:
            raise ValueError("batched scatter matrices must share a common rank")
        kept = np.where(mask, w, 0.0)
        inv_w = np.where(mask, 1.0 / np.where(mask, w, 1.0), 0.0)
        pinv = _assemble(V, inv_w)
        proj = _assemble(V, mask.astype(np.float64))
        if truncate:
            S = _assemble(V, kept)
        sym = lambda X: 0.5 * (X + np.swapaxes(X, -1, -2))  # noqa: E731
        return cls(
            frozen(sym(S)), frozen(w), frozen(V), mask, int(ranks[0]),
            frozen(sym(pinv)), frozen(sym(proj)),
        )

    @classmethod
    def from_data(cls, u, rtol=None):
        """Form ``S = u^T u`` from an ``m x p`` residual matrix."""
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 2:
            raise ValueError(f"u must be 2-D, got shape {u.shape}")
        S = u.T @ u
        return cls.from_matrix(0.5 * (S + S.T), rtol=rtol)


def trace(A):
    """Trace over the last two axes (batch-friendly)."""
    return np.einsum("...ii->...", A)


def trace_pinv(s):
    """``tr(S^+)``, the sum of reciprocal nonzero eigenvalues of ``S``."""
    if s.rank < 1:
        raise ValueError("tr(S^+) is undefined for a zero scatter matrix")
    w = s.eigenvalues
    return np.sum(np.where(s.mask, 1.0 / np.where(s.mask, w, 1.0), 0.0), axis=-1)


def write_matrix_csv(path, A):
    """Write a matrix as row-major CSV at full double precision."""
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=np.float64)), fmt="%.17g", delimiter=",")


def read_matrix_csv(path):
    A = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return check_square(A)
