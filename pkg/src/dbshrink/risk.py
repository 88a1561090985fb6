"""Losses, Monte Carlo risk and PRIAL.

Replication ``r`` always draws from ``replication_rng(seed, r, stream)``, and
per-replication losses are reduced in index order, so every number here is a
pure function of ``(scenario, estimators, reps, seed)`` whatever the number of
worker processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._validation import check_positive_int, check_real
from .estimators import EstimatorSpec, estimate
from .families import k_star as family_k_star
from .sampling import replication_rng, sample_canonical

LOSS_KINDS = ("data-based", "quadratic")
CLAMP_TOL = 1e-10
CHUNK_SIZE = 100


class NumericalFailure(RuntimeError):
    """A loss evaluated to a non-finite or clearly negative value."""


def _check_dims(sigma, sigma_hat):
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    if sigma_hat.shape != (sigma.dim, sigma.dim):
        raise ValueError(f"estimate has shape {sigma_hat.shape}, expected {(sigma.dim, sigma.dim)}")
    return sigma_hat


def _clamped_trace(terms):
    # terms: entrywise products whose sum is a trace known to be >= 0
    val = float(terms.sum())
    if val < 0:
        if val < -CLAMP_TOL * max(1.0, float(np.abs(terms).sum())):
            raise NumericalFailure(f"loss evaluated to {val!r}, far below zero")
        return 0.0
    return val


def loss_data_based(sigma, s, sigma_hat):
    """Data-based loss ``tr(S^+ Sigma (Sigma^-1 Sigma_hat - I)^2)``.

    Equal to ``tr(S^+ (Sigma_hat - Sigma) Sigma^-1 (Sigma_hat - Sigma))``, which
    is how it is evaluated. Roundoff negatives are clamped to zero.
    """
    sigma_hat = _check_dims(sigma, sigma_hat)
    if s.dim != sigma.dim:
        raise ValueError("scatter and scale matrices differ in dimension")
    D = sigma_hat - sigma.entries
    left = s.pinv @ D
    right = sigma.inverse @ D
    return _clamped_trace(left * right.T)


def loss_quadratic(sigma, sigma_hat):
    """Invariant quadratic loss ``tr((Sigma_hat Sigma^-1 - I)^2)``."""
    sigma_hat = _check_dims(sigma, sigma_hat)
    M = sigma_hat @ sigma.inverse - np.eye(sigma.dim)
    return _clamped_trace(M * M.T)


def _evaluate_loss(kind, sigma, s, sigma_hat):
    if kind == "data-based":
        return loss_data_based(sigma, s, sigma_hat)
    if kind == "quadratic":
        return loss_quadratic(sigma, sigma_hat)
    raise ValueError(f"unknown loss kind {kind!r}")


def _apply(est, sample):
    if isinstance(est, EstimatorSpec):
        return estimate(est, sample.s)
    return est(sample)


def _label(est):
    return est.label if isinstance(est, EstimatorSpec) else getattr(est, "__name__", repr(est))


def _simulate_chunk(sc, estimators, losses, seed, start, stop, paired):
    out = np.empty((len(estimators), len(losses), stop - start))
    with threadpool_limits(limits=1):
        for i, rep in enumerate(range(start, stop)):
            sample = None
            for j, est in enumerate(estimators):
                if sample is None or not paired:
                    sample = sample_canonical(sc, replication_rng(seed, rep, 0 if paired else j + 1))
                sigma_hat = _apply(est, sample)
                for k, kind in enumerate(losses):
                    val = _evaluate_loss(kind, sc.sigma, sample.s, sigma_hat)
                    if not np.isfinite(val):
                        raise NumericalFailure(
                            f"non-finite {kind} loss at replication {rep} for {_label(est)} "
                            f"(p={sc.p}, m={sc.m})"
                        )
                    out[j, k, i] = val
    return out


def resolve_workers(workers):
    if workers in (None, "auto"):
        return os.cpu_count() or 1
    return check_positive_int(workers, "workers")


def simulate_losses(sc, estimators, losses=("data-based",), reps=1000, seed=0, workers=1, paired=True):
    """Per-replication losses, shape ``(n_estimators, n_losses, reps)``.

    With ``paired=True`` all estimators see the same sample in each
    replication (common random numbers); otherwise estimator ``j`` draws from
    its own stream.
    """
    reps = check_positive_int(reps, "reps")
    for kind in losses:
        if kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {kind!r}")
    estimators = list(estimators)
    workers = resolve_workers(workers)
    bounds = [(a, min(a + CHUNK_SIZE, reps)) for a in range(0, reps, CHUNK_SIZE)]
    args = [(sc, estimators, tuple(losses), seed, a, b, paired) for a, b in bounds]
    if workers == 1 or len(bounds) == 1:
        parts = [_simulate_chunk(*x) for x in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as ex:
            parts = list(ex.map(_simulate_chunk, *zip(*args)))
    return np.concatenate(parts, axis=-1)


def mean_and_se(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else float("nan")
    return mean, se


@dataclass(frozen=True, eq=False)
class RiskReport:
    """Monte Carlo average loss of one estimator in one scenario."""

    scenario: object
    estimator: str
    loss_kind: str
    reps: int
    seed: int
    avg_loss: float
    std_err: float
    prial_vs_baseline: float | None = None
    values: np.ndarray | None = field(default=None, repr=False)

    def with_prial(self, baseline):
        return RiskReport(
            self.scenario, self.estimator, self.loss_kind, self.reps, self.seed,
            self.avg_loss, self.std_err, prial(baseline, self), self.values,
        )


def report_from_values(sc, label, loss_kind, seed, values):
    avg, se = mean_and_se(values)
    return RiskReport(sc, label, loss_kind, int(values.size), int(seed), avg, se, None, values)


def scenario_k_star(sc):
    return family_k_star(sc.family, sc.n, sc.p)


def resolve_spec(spec, sc):
    if isinstance(spec, str):
        from .estimators import parse_estimator

        spec = parse_estimator(spec)
    if isinstance(spec, EstimatorSpec) and not spec.resolved:
        spec = spec.resolve(sc.p, sc.m, scenario_k_star(sc))
    return spec


def mc_risk(sc, spec, loss_kind="data-based", reps=1000, seed=0, workers=1):
    """Monte Carlo risk of one estimator.

    ``spec`` is an :class:`EstimatorSpec`, an estimator string, or a callable
    mapping a :class:`CanonicalSample` to an estimate.
    """
    reps = check_positive_int(reps, "reps", minimum=2)
    spec = resolve_spec(spec, sc)
    values = simulate_losses(sc, [spec], (loss_kind,), reps, seed, workers)[0, 0]
    return report_from_values(sc, _label(spec), loss_kind, seed, values)


def prial(baseline, candidate):
    """Percentage relative improvement in average loss of ``candidate``."""
    if baseline.loss_kind != candidate.loss_kind:
        raise ValueError("PRIAL needs reports under the same loss")
    if baseline.reps != candidate.reps or baseline.seed != candidate.seed:
        raise ValueError("PRIAL needs reports with the same reps and seed")
    if baseline.scenario is not candidate.scenario and _scenario_key(baseline.scenario) != _scenario_key(candidate.scenario):
        raise ValueError("PRIAL needs reports from the same scenario")
    if not baseline.avg_loss > 0:
        raise ValueError(f"baseline average loss must be positive, got {baseline.avg_loss}")
    return 100.0 * (baseline.avg_loss - candidate.avg_loss) / baseline.avg_loss


def prial_se(baseline_values, candidate_values):
    """Approximate standard error of a paired PRIAL (denominator held fixed)."""
    base = float(np.mean(baseline_values))
    _, se = mean_and_se(np.asarray(baseline_values) - np.asarray(candidate_values))
    return 100.0 * se / base


def _scenario_key(sc):
    d = sc.to_dict()
    if "sigma" in d:
        d["sigma"] = np.asarray(d["sigma"]).tobytes()
    return repr(sorted(d.items()))


def risk_difference_sign(sc, t, reps=1000, seed=0, workers=1):
    """Paired estimate of ``R(corrected(a_o, t)) - R(usual(a_o))`` and its SE.

    Data-based loss; negative values mean the corrected estimator wins.
    """
    t = check_real(t, "t", low=0)
    reps = check_positive_int(reps, "reps", minimum=2)
    a = resolve_spec(EstimatorSpec.usual(), sc).a
    specs = [EstimatorSpec.usual(a), EstimatorSpec.corrected(a, t)]
    vals = simulate_losses(sc, specs, ("data-based",), reps, seed, workers)[:, 0]
    return mean_and_se(vals[1] - vals[0])
