"""Finite-difference Haff operator and a Monte Carlo check of the Stein-Haff identity.

The identity being checked, for Gaussian noise (``K* = 1``)::

    E[tr(Sigma^-1 S S^+ G)]
        = K* E[tr(2 S S^+ D_s{S S^+ G}^T + (m - min(p, m) - 1) S^+ G)]

with ``D_s = (d_ij)``, ``d_ij = (1 + delta_ij) / 2 * d/ds_ij``.

When ``S`` is singular every perturbed matrix is projected back onto the
set of matrices with the same rank before ``H`` is evaluated, so the finite
differences follow the rank-``r`` manifold. Directions leaving it would blow
up ``S^+``; the identity only needs the tangential derivatives.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import check_positive_int
from .estimators import correction_G, t_max
from .families import k_star as family_k_star
from .linalg import ScatterMatrix, trace
from .risk import CHUNK_SIZE, NumericalFailure, mean_and_se, resolve_workers
from .sampling import replication_rng, sample_canonical

DEFAULT_STEP = float(np.finfo(np.float64).eps ** (1.0 / 3.0))


@dataclass(frozen=True)
class HaffOperatorConfig:
    """Central-difference settings; the step for entry ``s_ij`` is
    ``step_scale * (1 + |s_ij|)``."""

    step_scale: float = DEFAULT_STEP
    scheme: str = "central"

    def __post_init__(self):
        if not 0 < self.step_scale <= 1e-2:
            raise ValueError(f"step_scale must lie in (0, 1e-2], got {self.step_scale}")
        if self.scheme != "central":
            raise ValueError("only the central scheme is supported")


def _perturbations(S, step_scale):
    p = S.shape[0]
    iu, ku = np.triu_indices(p)
    h = step_scale * (1.0 + np.abs(S[iu, ku]))
    E = np.zeros((iu.size, p, p))
    idx = np.arange(iu.size)
    E[idx, iu, ku] = 1.0
    E[idx, ku, iu] = 1.0
    Hs = h[:, None, None] * E
    return iu, ku, h, np.concatenate([S + Hs, S - Hs])


def _evaluate(H, batch, rank, full_rank):
    bs = ScatterMatrix.from_matrix(batch, rank=rank, truncate=not full_rank)
    out = np.asarray(H(bs), dtype=np.float64)
    p = batch.shape[-1]
    if out.shape == batch.shape:
        return out
    # H is not batch-aware: evaluate one matrix at a time
    return np.stack([
        np.asarray(H(ScatterMatrix.from_matrix(B, rank=rank, truncate=not full_rank)), dtype=np.float64).reshape(p, p)
        for B in batch
    ])


def haff_divergence(H, s, cfg=None):
    """``D_s{H(S)}^T`` by central differences.

    Parameters
    ----------
    H : callable
        Maps a :class:`ScatterMatrix` to a ``p x p`` array. Batch-aware
        callables (leading batch axes on the scatter matrix) are evaluated
        in a single call.
    s : ScatterMatrix
    cfg : HaffOperatorConfig, optional

    Returns
    -------
    ndarray of shape (p, p)
        Entry ``(i, j)`` is ``sum_k d_ik H_jk``.
    """
    cfg = HaffOperatorConfig() if cfg is None else cfg
    S = s.entries
    p = S.shape[-1]
    iu, ku, h, batch = _perturbations(S, cfg.step_scale)
    vals = _evaluate(H, batch, s.rank, s.rank == p)
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("H is not finite at a perturbed scatter matrix")
    npair = iu.size
    weight = np.where(iu == ku, 1.0, 0.5)
    dH_pairs = (vals[:npair] - vals[npair:]) * (weight / (2.0 * h))[:, None, None]
    dH = np.empty((p, p, p, p))
    dH[iu, ku] = dH_pairs
    dH[ku, iu] = dH_pairs
    return np.einsum("ikjk->ij", dH)


class CorrectionG:
    """``G(S) = t / tr(S^+) * S S^+``; picklable and batch-aware."""

    def __init__(self, t):
        self.t = float(t)

    def __call__(self, s):
        return correction_G(s, self.t)

    def __repr__(self):
        return f"CorrectionG(t={self.t!r})"


def identity_G(s):
    """``G(S) = S``."""
    return s.entries


def zero_G(s):
    return np.zeros_like(s.entries)


class _ProjectedG:
    def __init__(self, G):
        self.G = G

    def __call__(self, s):
        return s.projector @ self.G(s)


@dataclass(frozen=True)
class IdentityCheck:
    """Both sides of the identity with their Monte Carlo standard errors."""

    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    reps: int
    seed: int

    @property
    def combined_se(self):
        return float(np.hypot(self.lhs_se, self.rhs_se))

    @property
    def passed(self):
        return abs(self.lhs - self.rhs) <= 3.0 * self.combined_se

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def to_dict(self):
        return {
            "lhs": self.lhs, "lhs_se": self.lhs_se, "rhs": self.rhs, "rhs_se": self.rhs_se,
            "combined_se": self.combined_se, "reps": self.reps, "seed": self.seed,
            "verdict": self.verdict,
        }


def identity_terms(sc, G, s, cfg=None, k_star=1.0):
    """Per-sample ``(lhs, rhs)`` integrands of the identity."""
    P = s.projector
    Gs = np.asarray(G(s), dtype=np.float64)
    lhs = float(trace(sc.sigma.inverse @ P @ Gs))
    D = haff_divergence(_ProjectedG(G), s, cfg)
    coef = sc.m - min(sc.p, sc.m) - 1
    rhs = k_star * float(2.0 * trace(P @ D) + coef * trace(s.pinv @ Gs))
    return lhs, rhs


def _verify_chunk(sc, G, seed, start, stop, cfg):
    out = np.empty((2, stop - start))
    with threadpool_limits(limits=1):
        for i, rep in enumerate(range(start, stop)):
            sample = sample_canonical(sc, replication_rng(seed, rep))
            out[:, i] = identity_terms(sc, G, sample.s, cfg)
    return out


def verify_identity(sc, G=None, reps=10_000, seed=0, cfg=None, workers=1):
    """Monte Carlo estimates of both sides of the identity on one sample stream.

    ``G`` defaults to the shrinkage correction with ``t = t_max(p, m)``. Only
    Gaussian scenarios are supported, where the ``E*`` expectation equals the
    ordinary one.
    """
    if sc.family.kind != "gaussian":
        raise ValueError("identity verification is implemented for Gaussian noise only")
    reps = check_positive_int(reps, "reps", minimum=2)
    G = CorrectionG(t_max(sc.p, sc.m)) if G is None else G
    workers = resolve_workers(workers)
    bounds = [(a, min(a + CHUNK_SIZE, reps)) for a in range(0, reps, CHUNK_SIZE)]
    args = [(sc, G, seed, a, b, cfg) for a, b in bounds]
    if workers == 1 or len(bounds) == 1:
        parts = [_verify_chunk(*x) for x in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as ex:
            parts = list(ex.map(_verify_chunk, *zip(*args)))
    vals = np.concatenate(parts, axis=-1)
    ks = family_k_star(sc.family, sc.n, sc.p)
    lhs, lhs_se = mean_and_se(vals[0])
    rhs, rhs_se = mean_and_se(ks * vals[1])
    return IdentityCheck(lhs, lhs_se, rhs, rhs_se, reps, int(seed))


@dataclass(frozen=True)
class ProbeResult:
    steps: np.ndarray
    estimates: np.ndarray
    errors: np.ndarray
    ratios: np.ndarray
    monotone: bool


def fd_convergence_probe(H, s, steps, exact=None):
    """Divergence estimate per step size, to check second-order convergence.

    Steps are processed from largest to smallest. ``errors`` are distances to
    ``exact`` when given, else to the estimate at the next smaller step.
    ``ratios`` are successive error ratios (about 4 per halving for a smooth
    non-polynomial ``H``), and ``monotone`` is False once roundoff makes the
    error stop shrinking.
    """
    steps = np.sort(np.asarray(steps, dtype=np.float64))[::-1]
    if steps.size < 3:
        raise ValueError("need at least three step sizes")
    ests = np.stack([haff_divergence(H, s, HaffOperatorConfig(step_scale=h)) for h in steps])
    if exact is not None:
        errors = np.linalg.norm(ests - np.asarray(exact), axis=(1, 2))
    else:
        errors = np.linalg.norm(ests[:-1] - ests[1:], axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = errors[:-1] / errors[1:]
    monotone = bool(np.all(np.diff(errors) < 0))
    return ProbeResult(steps, ests, errors, ratios, monotone)
