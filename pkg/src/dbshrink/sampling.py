"""Sampling of the canonical model ``(Z, U)`` for elliptical noise.

``Z`` (q x p) carries the mean information and ``U`` (m x p) is pure noise;
``S = U^T U`` is all the estimators see. The orthogonal rotation that maps the
raw ``n x p`` observation matrix to canonical coordinates is never formed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int
from .families import DistributionFamily
from .linalg import ScaleMatrix, ScatterMatrix, build_ar1, read_matrix_csv


def replication_rng(seed, rep, stream=0):
    """Independent generator for replication ``rep`` of stream ``stream``.

    Keyed only by ``(seed, stream, rep)``, so results do not depend on how
    replications are scheduled across workers.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(rep)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class Scenario:
    """One simulation setting: dimensions, truth ``sigma`` and noise family.

    ``rho`` is kept only as metadata when ``sigma`` was built as AR(1).
    """

    p: int
    m: int
    sigma: ScaleMatrix
    q: int = 0
    theta: np.ndarray | None = None
    family: DistributionFamily = field(default_factory=DistributionFamily.gaussian)
    rho: float | None = None

    def __post_init__(self):
        check_positive_int(self.p, "p")
        check_positive_int(self.m, "m", minimum=2)
        check_positive_int(self.q, "q", minimum=0)
        if self.sigma.dim != self.p:
            raise ValueError(f"sigma is {self.sigma.dim}x{self.sigma.dim}, expected p={self.p}")
        if self.theta is None:
            theta = np.zeros((self.q, self.p))
        else:
            theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.q, self.p):
            raise ValueError(f"theta must have shape {(self.q, self.p)}, got {theta.shape}")
        theta = theta.copy()
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)

    @property
    def n(self):
        return self.q + self.m

    @classmethod
    def ar1(cls, p, m, rho=0.9, q=0, family=None):
        family = DistributionFamily.gaussian() if family is None else family
        return cls(p=p, m=m, q=q, sigma=build_ar1(p, rho), family=family, rho=float(rho))

    def to_dict(self):
        d = {"p": self.p, "m": self.m, "q": self.q}
        if self.rho is not None:
            d["rho"] = self.rho
        else:
            d["sigma"] = self.sigma.entries.tolist()
        d.update(self.family.to_dict())
        if self.q and np.any(self.theta):
            d["theta"] = self.theta.tolist()
        return d

    @classmethod
    def from_dict(cls, d, base_dir=None):
        """Parse a scenario object from a JSON configuration.

        ``sigma`` and ``theta`` may be inline nested lists or paths to CSV
        files (resolved against ``base_dir``). Without ``sigma``, ``rho``
        builds an AR(1) matrix.
        """
        p = d["p"]
        m = d["m"]
        q = d.get("q", 0)
        family = DistributionFamily.from_dict(d)
        rho = d.get("rho")
        if "sigma" in d:
            sigma = ScaleMatrix.from_array(_matrix_field(d["sigma"], base_dir))
            rho = None
        elif rho is not None:
            sigma = build_ar1(p, rho)
            rho = float(rho)
        else:
            raise ValueError("scenario needs either 'rho' or 'sigma'")
        theta = _matrix_field(d["theta"], base_dir, square=False) if "theta" in d else None
        return cls(p=p, m=m, q=q, sigma=sigma, theta=theta, family=family, rho=rho)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text, base_dir=None):
        return cls.from_dict(json.loads(text), base_dir=base_dir)


def _matrix_field(value, base_dir, square=True):
    if isinstance(value, str):
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if square:
            return read_matrix_csv(path)
        return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return np.asarray(value, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CanonicalSample:
    z: np.ndarray
    u: np.ndarray
    s: ScatterMatrix


def sample_canonical(sc, rng):
    """Draw ``(Z, U)`` from the scenario's elliptical law and form ``S``.

    Gaussian: ``Z = theta + N_z L^T`` and ``U = N_u L^T`` with ``L L^T = sigma``.
    Student: the same Gaussian noise divided by one shared ``sqrt(chi2_nu / nu)``.
    """
    L = sc.sigma.factor
    nz = rng.standard_normal((sc.q, sc.p))
    nu_ = rng.standard_normal((sc.m, sc.p))
    scale = sc.family.mixing_scale(rng)
    z = sc.theta + (nz @ L.T) / scale
    u = (nu_ @ L.T) / scale
    return CanonicalSample(z=z, u=u, s=ScatterMatrix.from_data(u))


def log_density(sc, z, u):
    """Log joint density of ``(z, u)`` under the scenario."""
    z = np.asarray(z, dtype=np.float64).reshape(sc.q, sc.p)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (sc.m, sc.p):
        raise ValueError(f"u must have shape {(sc.m, sc.p)}, got {u.shape}")
    inv = sc.sigma.inverse
    dz = z - sc.theta
    arg = float(np.sum((dz @ inv) * dz) + np.sum((u @ inv) * u))
    dim = sc.n * sc.p
    val = -0.5 * sc.n * sc.sigma.logdet + float(sc.family.log_f(arg, dim))
    return val if not math.isnan(val) else -math.inf
