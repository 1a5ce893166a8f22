import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma as gamma_fn

from weylkato.kato import (CUBE_INV_R, GridPotential, LqDivergenceError, RadialKatoPotential,
                           eval_potential, fourier_coeff, kato_norm, kato_norm_grid,
                           lq_critical, lq_norm, lq_norm_truncated, radial_transform,
                           smoothstep_profile, transform_tail_amplitude)


def test_smoothstep_profile():
    u = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.5])
    v = smoothstep_profile(u)
    assert v[0] == 1 and v[1] == 1 and v[2] == 1
    assert v[3] == pytest.approx(0.5)
    assert v[4] == 0 and v[5] == 0


def test_potential_validation():
    with pytest.raises(ValueError):
        RadialKatoPotential(1.0, 1.2)
    with pytest.raises(ValueError):
        RadialKatoPotential(1.0, 0.5, r_cut=0.6, L=1.0)
    with pytest.raises(ValueError):
        RadialKatoPotential(1.0, 0.5, profile="box")


def test_eval_potential(singular_v):
    x = np.array([0.6, 0.5, 0.5])
    assert eval_potential(singular_v, x) == pytest.approx(0.1 ** -1.5)
    with pytest.raises(ZeroDivisionError):
        eval_potential(singular_v, singular_v.center)
    # minimum image on the torus
    V = RadialKatoPotential(2.0, 0.5, center=(0.05, 0.5, 0.5), r_cut=0.4, L=1.0)
    assert eval_potential(V, [0.95, 0.5, 0.5]) == pytest.approx(2.0 * 0.1 ** -1.5)


def test_kato_norm_matches_closed_form_at_small_radius(singular_v):
    # [DERIVED] chi = 1 on [0, r_cut/2]: 4 pi gamma r^eta / eta
    r = 0.1
    val, arg = kato_norm(singular_v, r)
    assert val == pytest.approx(4 * np.pi * r**0.5 / 0.5, rel=1e-9)
    assert np.allclose(arg, singular_v.center)


def test_kato_norm_off_centre_probe_against_shell_quadrature(singular_v):
    # [DERIVED] spherical shells of radius s around the centre: the part of
    # the shell with d < r contributes 2 pi s (min(a+s, r) - |a-s|)_+ / a
    a, r = 0.15, 0.3

    def shell(s):
        return abs(singular_v.radial(s)) * 2 * np.pi * s * max(min(a + s, r) - abs(a - s), 0.0) / a

    ref = integrate.quad(shell, 0, 0.4, points=[a, r - a, 0.2], limit=200, epsabs=1e-13)[0]
    x = np.asarray(singular_v.center) + [a, 0, 0]
    val, _ = kato_norm(singular_v, r, probe_points=[x])
    assert val == pytest.approx(ref, rel=1e-7)


def test_kato_norm_zero_potential():
    V = RadialKatoPotential(0.0, 0.5)
    assert kato_norm(V, 0.2)[0] == 0.0


def test_kato_norm_grid_constant_field():
    # [DERIVED] |V| = 1: int_{d<r} 1/d = 2 pi r^2, approached as h -> 0
    G = GridPotential(np.ones((41, 41, 41)), h=1 / 41)
    val, _ = kato_norm_grid(G, 0.3, probe_idx=[[20, 20, 20]])
    assert val == pytest.approx(2 * np.pi * 0.09, rel=0.03)
    assert CUBE_INV_R == pytest.approx(3 * math.log((math.sqrt(3) + 1) / (math.sqrt(3) - 1)) - np.pi / 2)


def test_radial_transform_at_zero_indicator():
    # [DERIVED] indicator profile: 4 pi gamma R^(eta+1)/(eta+1)
    V = RadialKatoPotential(1.0, 0.5, r_cut=0.4, profile="indicator")
    assert radial_transform(V, 0.0)[0] == pytest.approx(4 * np.pi * 0.4**1.5 / 1.5, rel=1e-9)


def test_radial_transform_matches_adaptive_quadrature(singular_v):
    for q in (0.0, 7.0, 60.0):
        f = lambda r: 4 * np.pi * singular_v.radial(r) * r * r * np.sinc(q * r / np.pi)
        ref = integrate.quad(f, 0, 0.4, points=[0.2], limit=400, epsabs=1e-13)[0]
        assert radial_transform(singular_v, q)[0] == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_transform_large_q_amplitude(singular_v):
    # [DERIVED] Vhat(q) ~ 4 pi gamma Gamma(eta) sin(pi eta/2) q^(-1-eta)
    A = transform_tail_amplitude(singular_v)
    assert A == pytest.approx(4 * np.pi * gamma_fn(0.5) * math.sin(np.pi / 4))
    q = np.array([2000.0, 4000.0])
    ratio = radial_transform(singular_v, q) * q**1.5 / A
    assert np.all(np.abs(ratio - 1) < 0.02)


def test_fourier_coeff_phase_and_hermitian_symmetry(singular_v):
    m = np.array([1.0, 2.0, 0.0])
    c = fourier_coeff(singular_v, m, 1.0)
    cm = fourier_coeff(singular_v, -m, 1.0)
    assert c == pytest.approx(np.conj(cm))
    # centre at (1/2,1/2,1/2): phase exp(-i pi (m1+m2+m3)) = -1 here
    assert c == pytest.approx(-radial_transform(singular_v, 2 * np.pi * np.linalg.norm(m))[0])


def test_lq_norms(singular_v):
    assert lq_critical(0.5) == pytest.approx(2.0)
    with pytest.raises(LqDivergenceError):
        lq_norm(singular_v, 2.0)
    # [DERIVED] q = 1 with chi: 4 pi int r^(eta) chi dr, compare with quad
    ref = integrate.quad(lambda r: 4 * np.pi * r**0.5 * smoothstep_profile(r / 0.4), 0, 0.4)[0]
    assert lq_norm(singular_v, 1.0) == pytest.approx(ref, rel=1e-8)
    # truncated L^2 norm grows without bound as the excised ball shrinks
    vals = [lq_norm_truncated(singular_v, 2.0, r) for r in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2]


def test_core_potential_is_bounded():
    V = RadialKatoPotential(1.0, 0.5, r_cut=0.4, core=0.05)
    assert eval_potential(V, V.center) == pytest.approx(0.05 ** -1.5)
    assert np.isfinite(lq_norm(V, 4.0))
