"""Estimators ``a S`` and ``a (S + t / tr(S^+) * S S^+)`` of the scale matrix.

Functional core (:func:`estimate`, :func:`correction_G`, :func:`a_optimal`,
:func:`t_max`) plus two scikit-learn style estimators wrapping it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_positive_int, check_real
from .linalg import ScaleMatrix, ScatterMatrix, trace_pinv

AUTO = "auto"


def a_optimal(p, m, k_star=1.0):
    """Best constant ``a`` among the estimators ``a S``: ``1 / (K* max(p, m))``."""
    p = check_positive_int(p, "p")
    m = check_positive_int(m, "m")
    k_star = check_real(k_star, "k_star", low=0, low_inclusive=False)
    return 1.0 / (k_star * max(p, m))


def t_max(p, m):
    """Upper end of the dominance interval for ``t``.

    ``2 (min(p, m) - 1) / (max(p, m) - min(p, m) + 1)``; zero when
    ``min(p, m) = 1``.
    """
    p = check_positive_int(p, "p")
    m = check_positive_int(m, "m")
    lo, hi = min(p, m), max(p, m)
    return 2.0 * (lo - 1) / (hi - lo + 1)


def correction_G(s, t):
    """Correction matrix ``G = t / tr(S^+) * S S^+``."""
    tr = np.asarray(trace_pinv(s))
    return (t / tr)[..., None, None] * s.projector


@dataclass(frozen=True)
class EstimatorSpec:
    """Description of one estimator.

    ``a`` and ``t`` may be the string ``"auto"`` until :meth:`resolve` is
    called with the scenario dimensions.
    """

    kind: str
    a: float | str = AUTO
    t: float | str | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("usual", "corrected"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "usual" and self.t is not None:
            raise ValueError("usual estimator takes no t")
        if self.kind == "corrected" and self.t is None:
            object.__setattr__(self, "t", AUTO)
        if self.a != AUTO:
            object.__setattr__(self, "a", check_real(self.a, "a", low=0, low_inclusive=False))
        if self.t not in (None, AUTO):
            object.__setattr__(self, "t", check_real(self.t, "t", low=0))
        if not self.label:
            object.__setattr__(self, "label", self.to_string())

    @property
    def resolved(self):
        return self.a != AUTO and self.t != AUTO

    def resolve(self, p, m, k_star=1.0):
        a = a_optimal(p, m, k_star) if self.a == AUTO else self.a
        t = t_max(p, m) if self.t == AUTO else self.t
        return EstimatorSpec(self.kind, a, t, label=self.label)

    def to_string(self):
        def fmt(v):
            return v if v == AUTO else repr(float(v))

        if self.kind == "usual":
            return f"usual:a={fmt(self.a)}"
        return f"corrected:a={fmt(self.a)},t={fmt(self.t)}"

    @classmethod
    def usual(cls, a=AUTO):
        return cls("usual", a)

    @classmethod
    def corrected(cls, a=AUTO, t=AUTO):
        return cls("corrected", a, t)


_SPEC_RE = re.compile(r"^\s*(usual|corrected)\s*(?::\s*(.*))?$")


def parse_estimator(text):
    """Parse ``usual:a=<real|auto>`` or ``corrected:a=<real|auto>,t=<real|auto>``."""
    match = _SPEC_RE.match(text)
    if not match:
        raise ValueError(f"cannot parse estimator {text!r}")
    kind, rest = match.group(1), match.group(2) or ""
    params = {}
    for item in filter(None, (x.strip() for x in rest.split(","))):
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in ("a", "t") or key in params:
            raise ValueError(f"bad estimator parameter {item!r} in {text!r}")
        params[key] = value if value == AUTO else float(value)
    if kind == "usual" and "t" in params:
        raise ValueError(f"usual estimator takes no t: {text!r}")
    return EstimatorSpec(kind, params.get("a", AUTO), params.get("t", AUTO if kind == "corrected" else None), label=text.strip())


def estimate(spec, s):
    """Evaluate a resolved estimator on a scatter matrix.

    ``usual``: ``a S``. ``corrected``: ``a (S + t / tr(S^+) S S^+)``, defined
    only when ``S`` is nonzero.
    """
    if not spec.resolved:
        raise ValueError(f"estimator {spec.label!r} has unresolved 'auto' constants")
    if spec.kind == "usual":
        return spec.a * s.entries
    if s.rank < 1:
        raise ValueError("corrected estimator needs a nonzero scatter matrix")
    return spec.a * (s.entries + correction_G(s, spec.t))


class ScaledScatter(BaseEstimator):
    """Scale matrix estimate ``a S`` from canonical residuals.

    Parameters
    ----------
    a : float or "auto", default="auto"
        Multiplier; ``"auto"`` uses ``1 / (k_star * max(p, m))``.
    k_star : float, default=1.0
        Normalizer of the noise family (1 for Gaussian noise).

    Attributes
    ----------
    scatter_ : ScatterMatrix
        ``S = U^T U`` of the training residuals.
    covariance_ : ndarray of shape (n_features, n_features)
    a_ : float
    n_samples_ : int
        Residual dimension ``m`` (rows of ``U``).
    n_features_in_ : int
    """

    def __init__(self, a=AUTO, k_star=1.0):
        self.a = a
        self.k_star = k_star

    def _spec(self, p, m):
        return EstimatorSpec.usual(self.a).resolve(p, m, self.k_star)

    def fit(self, X, y=None):
        """Fit on the ``m x p`` residual matrix ``U`` (rows are centered noise).

        Parameters
        ----------
        X : array-like of shape (m, p)
        y : Ignored

        Returns
        -------
        self
        """
        U = check_array(X, dtype=np.float64, ensure_min_samples=2)
        return self.fit_scatter(ScatterMatrix.from_data(U), n_samples=U.shape[0])

    def fit_scatter(self, s, n_samples):
        """Fit directly from a precomputed scatter matrix with ``m = n_samples``."""
        spec = self._spec(s.dim, check_positive_int(n_samples, "n_samples"))
        self.scatter_ = s
        self.a_ = spec.a
        self.spec_ = spec
        self.covariance_ = estimate(spec, s)
        self.n_samples_ = n_samples
        self.n_features_in_ = s.dim
        return self

    def loss(self, sigma, kind="data-based"):
        """Loss of the fitted estimate against a known truth ``sigma``."""
        from .risk import loss_data_based, loss_quadratic

        check_is_fitted(self)
        if not isinstance(sigma, ScaleMatrix):
            sigma = ScaleMatrix.from_array(sigma)
        if kind == "data-based":
            return loss_data_based(sigma, self.scatter_, self.covariance_)
        if kind == "quadratic":
            return loss_quadratic(sigma, self.covariance_)
        raise ValueError(f"unknown loss kind {kind!r}")


class DataBasedShrinkage(ScaledScatter):
    """Corrected estimate ``a (S + t / tr(S^+) * S S^+)``.

    Works for both ``p <= m`` and ``p > m``; in the latter case ``S`` is
    singular and the correction only adds mass on its range.

    Parameters
    ----------
    a : float or "auto", default="auto"
    t : float or "auto", default="auto"
        Correction strength; ``"auto"`` takes the upper end of the dominance
        interval, ``2 (min(p,m) - 1) / (max(p,m) - min(p,m) + 1)``.
    k_star : float, default=1.0

    Attributes
    ----------
    t_ : float
        Resolved correction strength.
    """

    def __init__(self, a=AUTO, t=AUTO, k_star=1.0):
        super().__init__(a=a, k_star=k_star)
        self.t = t

    def _spec(self, p, m):
        return EstimatorSpec.corrected(self.a, self.t).resolve(p, m, self.k_star)

    def fit_scatter(self, s, n_samples):
        super().fit_scatter(s, n_samples)
        self.t_ = self.spec_.t
        return self
