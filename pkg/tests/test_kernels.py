import math

import numpy as np
import pytest
from scipy import integrate

from weylkato.kernels import (QuadratureError, QuadratureSpec, euler_sum, free_green,
                              jackson_ell, jackson_fourier_residual, jackson_K, kappa,
                              kappa_prime, kappa_zeros, moment_integral,
                              stieltjes_weight_integral, stieltjes_weight_residual,
                              torus_dlambda_green)


def test_kappa_values():
    # [DERIVED] kappa(0) = 8/(3 pi) from the Taylor expansion sin z - z cos z = z^3/3 - ...
    assert kappa(0.0) == pytest.approx(8 / (3 * np.pi), rel=1e-15)
    # [DERIVED] sin(pi) - pi cos(pi) = pi, so kappa(pi) = 8/pi^3
    assert kappa(np.pi) == pytest.approx(8 / np.pi**3, rel=1e-14)
    # [DERIVED] (sin 2 - 2 cos 2)/pi
    assert kappa(2.0) == pytest.approx((math.sin(2) - 2 * math.cos(2)) / math.pi, rel=1e-14)
    assert kappa(2.0) == pytest.approx(0.5543657, abs=5e-8)


def test_kappa_small_argument_branch_is_continuous():
    z = np.array([0.0999999, 0.1, 0.1000001])
    v = kappa(z)
    assert np.ptp(v) < 1e-7
    exact = 8 / np.pi * (np.sin(0.05) - 0.05 * np.cos(0.05)) / 0.05**3
    assert kappa(0.05) == pytest.approx(exact, rel=1e-9)


def test_kappa_even_and_vectorized():
    z = np.linspace(-20, 20, 81)
    assert np.allclose(kappa(z), kappa(-z), rtol=0, atol=1e-15)
    assert kappa(z).shape == z.shape


def test_kappa_prime_matches_finite_difference():
    for z in (0.3, 2.0, 7.5):
        h = 1e-6
        fd = (kappa(z + h) - kappa(z - h)) / (2 * h)
        assert kappa_prime(z) == pytest.approx(fd, rel=1e-6)


def test_kappa_zeros_solve_tan_z_equals_z():
    zs = kappa_zeros(50)
    # [DERIVED] first root of tan z = z
    assert zs[0] == pytest.approx(4.493409457909064, rel=1e-13)
    assert np.allclose(np.tan(zs), zs, rtol=1e-9)
    assert np.all(np.abs(kappa(zs)) < 1e-14)
    assert np.all(np.diff(zs) > 3.0)


def test_euler_sum_alternating_harmonic():
    terms = np.array([(-1) ** (k + 1) / k for k in range(1, 60)])
    assert euler_sum(terms) == pytest.approx(math.log(2), rel=1e-10)


def test_jackson_pair():
    # [PAPER] ell(0) = 4/3 and int K = 8 pi / 3
    assert jackson_ell(0.0) == pytest.approx(4 / 3)
    assert jackson_ell(1.0) == 0.0
    assert integrate.quad(jackson_K, -np.inf, np.inf, limit=500)[0] == pytest.approx(
        8 * np.pi / 3, rel=1e-6)
    assert jackson_fourier_residual(np.linspace(0, 40, 25)) < 1e-10
    with pytest.raises(ValueError):
        jackson_ell(1.5)


def test_free_green():
    assert free_green(1.0, 1.0) == pytest.approx(math.exp(-1) / (4 * np.pi))
    with pytest.raises(ValueError):
        free_green(1.0, 0.0)


def test_torus_dlambda_green_against_first_shells():
    # [DERIVED] -(1/(8 pi sqrt lam)) sum_k exp(-sqrt lam |k|), lattice shells r_3(n) for n <= 9
    lam = 100.0
    s = math.sqrt(lam)
    shells = {0: 1, 1: 6, 2: 12, 3: 8, 4: 6, 5: 24, 6: 24, 8: 12, 9: 30}
    approx = -sum(c * math.exp(-s * math.sqrt(n)) for n, c in shells.items()) / (8 * np.pi * s)
    assert torus_dlambda_green(lam, 1.0) == pytest.approx(approx, rel=1e-9)
    # large L: images negligible
    assert torus_dlambda_green(50.0, 20.0) == pytest.approx(-1 / (8 * np.pi * math.sqrt(50)), rel=1e-12)


def test_stieltjes_weight_identity_grid():
    worst = 0.0
    for s in (0.5, 1.0, 2.0):
        for t in (0.5, 2.0, 8.0):
            exact = math.exp(-s * math.sqrt(t)) / math.sqrt(t)
            worst = max(worst, abs(stieltjes_weight_integral(s, t) / exact - 1))
    assert worst < 1e-8


def test_stieltjes_weight_residual_raises_when_tolerance_missed():
    coarse = QuadratureSpec(r_max=30.0, panels=8, rel_tol=1e-14)
    with pytest.raises(QuadratureError):
        stieltjes_weight_residual(1.0, 1.0, coarse)


def test_moment_identity():
    # [PAPER] int t^{3/2} (t+lam)^{-3} dt = 3 pi / (8 sqrt lam)
    for lam in (0.5, 1.0, 10.0):
        assert moment_integral(lam) == pytest.approx(3 * np.pi / (8 * math.sqrt(lam)), rel=1e-10)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(r_max=-1.0)
