import math

import numpy as np
import pytest
from scipy import integrate, special

from dbshrink.families import DistributionFamily, k_star, k_star_quadrature

GAUSS = DistributionFamily.gaussian()


def test_gaussian_k_star_exact():
    for n, p in [(1, 1), (6, 3), (120, 100)]:
        assert k_star(GAUSS, n, p) == 1.0


@pytest.mark.parametrize("n,p", [(6, 3), (2, 1), (40, 20)])
def test_gaussian_k_star_quadrature_path(n, p):
    assert k_star_quadrature(GAUSS, n, p) == pytest.approx(1.0, abs=1e-8)


def test_gaussian_fstar_equals_f():
    t = np.linspace(0, 50, 11)
    np.testing.assert_allclose(GAUSS.fstar(t, 6), GAUSS.f(t, 6), rtol=1e-15)


@pytest.mark.parametrize("nu", [3.0, 5.0, 12.0])
def test_student_fstar_is_half_tail_of_f(nu):
    fam = DistributionFamily.student(nu)
    dim = 4
    for t in (0.0, 0.7, 5.0, 40.0):
        tail, _ = integrate.quad(lambda v: fam.f(v, dim), t, np.inf, epsrel=1e-12, epsabs=0)
        assert fam.fstar(t, dim) == pytest.approx(0.5 * tail, rel=1e-8)


@pytest.mark.parametrize("nu", [3.0, 5.0])
def test_student_generator_normalized(nu):
    # radial integral of f(r^2) over R^d equals one
    fam = DistributionFamily.student(nu)
    d = 3
    surface = 2 * math.pi ** (d / 2) / special.gamma(d / 2)
    val, _ = integrate.quad(lambda r: surface * fam.f(r * r, d) * r ** (d - 1), 0, np.inf, epsrel=1e-11)
    assert val == pytest.approx(1.0, rel=1e-8)


def test_generators_nonincreasing():
    t = np.linspace(0, 100, 201)
    for fam in (GAUSS, DistributionFamily.student(5.0)):
        vals = fam.f(t, 6)
        assert np.all(vals >= 0)
        assert np.all(np.diff(vals) <= 0)


def _mc_k_star(nu, n, p, draws=200_000, seed=7):
    # importance sampling from a heavier-tailed multivariate t proposal
    fam = DistributionFamily.student(nu)
    d = n * p
    nu_q = 3.0
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((draws, d)) / np.sqrt(rng.chisquare(nu_q, draws) / nu_q)[:, None]
    r2 = np.sum(w * w, axis=1)
    q = DistributionFamily.student(nu_q)
    ratio = np.exp(fam.log_fstar(r2, d) - q.log_f(r2, d))
    return ratio.mean(), ratio.std(ddof=1) / np.sqrt(draws)


def test_student_k_star_matches_monte_carlo():
    fam = DistributionFamily.student(5.0)
    est, se = _mc_k_star(5.0, 6, 3)
    val = k_star(fam, 6, 3)
    assert abs(val - est) < 3 * se
    # scale-mixture second moment gives nu / (nu - 2) in closed form
    assert val == pytest.approx(5.0 / 3.0, rel=1e-8)


@pytest.mark.parametrize("nu", [2.5, 4.0, 30.0])
@pytest.mark.parametrize("n,p", [(2, 1), (10, 10), (120, 100)])
def test_student_k_star_closed_form(nu, n, p):
    assert k_star(DistributionFamily.student(nu), n, p) == pytest.approx(nu / (nu - 2), rel=1e-8)


@pytest.mark.parametrize("nu", [1.0, 2.0])
def test_student_k_star_diverges(nu):
    with pytest.raises(ValueError, match="diverges"):
        k_star(DistributionFamily.student(nu), 6, 3)


def test_family_validation():
    with pytest.raises(ValueError):
        DistributionFamily("kotz")
    with pytest.raises(ValueError):
        DistributionFamily("student")
    with pytest.raises(ValueError):
        DistributionFamily.student(-1.0)
    assert DistributionFamily.student(5).label == "student(nu=5)"
    assert DistributionFamily.from_dict({"family": "student", "nu": 5}) == DistributionFamily.student(5.0)
