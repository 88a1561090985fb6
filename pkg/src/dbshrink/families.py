"""Elliptical families: radial generator ``f``, half-tail ``F*`` and ``K*``.

For a family with density generator ``f`` acting on a ``d = n * p``
dimensional argument, ``F*(t) = 1/2 * int_t^inf f(v) dv`` and ``K*`` is the
integral of ``F*(||w||^2)`` over ``R^d``. Both generators are normalized so
that ``f(||w||^2)`` is a probability density on ``R^d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from ._validation import check_positive_int, check_real

QUAD_TOL = 1e-10


@dataclass(frozen=True)
class DistributionFamily:
    """Gaussian or matrix-variate Student elliptical family.

    Parameters
    ----------
    kind : {"gaussian", "student"}
    nu : float, optional
        Degrees of freedom, required for ``"student"``. ``K*`` is finite only
        for ``nu > 2``.
    """

    kind: str = "gaussian"
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "student"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "student":
            if self.nu is None:
                raise ValueError("student family requires nu")
            object.__setattr__(self, "nu", check_real(self.nu, "nu", low=0, low_inclusive=False))
        elif self.nu is not None:
            raise ValueError("gaussian family takes no nu")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def student(cls, nu):
        return cls("student", nu)

    @property
    def label(self):
        if self.kind == "gaussian":
            return "gaussian"
        return f"student(nu={self.nu:g})"

    def log_f(self, t, dim):
        """Log of the density generator at ``t >= 0`` in dimension ``dim``."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "gaussian":
            return -0.5 * dim * math.log(2 * math.pi) - 0.5 * t
        nu = self.nu
        logc = (
            special.gammaln(0.5 * (nu + dim)) - special.gammaln(0.5 * nu)
            - 0.5 * dim * math.log(nu * math.pi)
        )
        return logc - 0.5 * (nu + dim) * np.log1p(t / nu)

    def log_fstar(self, t, dim):
        """Log of ``F*(t) = 1/2 int_t^inf f``."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "gaussian":
            # F* = f exactly
            return self.log_f(t, dim)
        nu = self.nu
        if nu + dim <= 2:
            return np.full_like(t, np.inf)
        logc = (
            special.gammaln(0.5 * (nu + dim)) - special.gammaln(0.5 * nu)
            - 0.5 * dim * math.log(nu * math.pi)
        )
        return logc + math.log(nu / (nu + dim - 2)) - 0.5 * (nu + dim - 2) * np.log1p(t / nu)

    def f(self, t, dim):
        return np.exp(self.log_f(t, dim))

    def fstar(self, t, dim):
        return np.exp(self.log_fstar(t, dim))

    def mixing_scale(self, rng):
        """Divisor applied to a standard Gaussian draw; one per replication."""
        if self.kind == "gaussian":
            return 1.0
        return math.sqrt(rng.chisquare(self.nu) / self.nu)

    def to_dict(self):
        d = {"family": self.kind}
        if self.nu is not None:
            d["nu"] = self.nu
        return d

    @classmethod
    def from_dict(cls, d):
        kind = str(d.get("family", "gaussian")).lower()
        return cls(kind, d.get("nu")) if kind == "student" else cls(kind)


def _radial_log_integrand(family, dim):
    log_surface = math.log(2.0) + 0.5 * dim * math.log(math.pi) - special.gammaln(0.5 * dim)

    def g(r):
        return log_surface + family.log_fstar(r * r, dim) + (dim - 1) * np.log(r)

    return g


def k_star_quadrature(family, n, p):
    """``K*`` by adaptive radial quadrature, whatever the family."""
    n = check_positive_int(n, "n")
    p = check_positive_int(p, "p")
    dim = n * p
    if family.kind == "student" and family.nu <= 2:
        raise ValueError(f"K* diverges for student nu={family.nu} (needs nu > 2)")
    g = _radial_log_integrand(family, dim)
    # center the tan substitution on the mode of the radial integrand
    opt = optimize.minimize_scalar(lambda s: -float(g(math.exp(s))), bounds=(-10.0, 15.0), method="bounded")
    r0 = math.exp(opt.x)
    g0 = float(g(r0))

    def integrand(x):
        c = math.cos(0.5 * math.pi * x)
        if c <= 0.0:
            return 0.0
        r = r0 * math.tan(0.5 * math.pi * x)
        if r <= 0.0:
            return 0.0
        jac = r0 * 0.5 * math.pi / (c * c)
        return math.exp(float(g(r)) - g0) * jac

    val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500, points=[0.5])
    if not np.isfinite(val) or val <= 0:
        raise ValueError("K* quadrature failed")
    return math.exp(g0) * val


def k_star(family, n, p):
    """Normalizer ``K*`` of the ``F*`` density; exactly 1 for the Gaussian."""
    if family.kind == "gaussian":
        check_positive_int(n, "n")
        check_positive_int(p, "p")
        return 1.0
    return k_star_quadrature(family, n, p)
