import math

import numpy as np
import pytest
from scipy import integrate

from weylkato.kato import RadialKatoPotential, radial_transform
from weylkato.kernels import torus_dlambda_green
from weylkato.spectral import (CubeSpec, HermitianOperator, Spectrum, TorusSpec, TrustError,
                               basis_tail_density, build_cube_hamiltonian,
                               build_torus_hamiltonian, content_hash, counting, cube_basis,
                               eigensolve, free_tail_resolvent, free_torus_counting,
                               mode_density, pointwise_density, resolvent2_diag, torus_basis)


def solve(geom, V=None):
    H = build_torus_hamiltonian(geom, V) if isinstance(geom, TorusSpec) else build_cube_hamiltonian(geom, V)
    return eigensolve(H)


def test_free_torus_count_at_100():
    # [DERIVED] |m|^2 <= 100/(4 pi^2) = 2.53: shells 0, 1, 2 hold 1 + 6 + 12 = 19 points
    spec = solve(TorusSpec(1.0, 400.0))
    assert counting(spec, 100.0) == 19
    assert free_torus_counting(100.0) == 19


def test_free_cube_count_at_100():
    # [DERIVED] m_i >= 1 with |m|^2 <= 100/pi^2 = 10.13: (1,1,1), 3x(1,1,2), 3x(1,2,2)
    spec = solve(CubeSpec(1.0, 7))
    assert counting(spec, 100.0) == 7
    assert spec.eigenvalues[0] == pytest.approx(3 * np.pi**2)


def test_torus_basis_is_the_lattice_ball():
    m, q2 = torus_basis(TorusSpec(1.0, 400.0))
    assert len(m) == free_torus_counting(400.0)
    assert np.all(np.diff(q2) >= 0)
    m2, _ = cube_basis(CubeSpec(1.0, 5))
    assert np.all(m2 >= 1) and np.all((m2 * m2).sum(1) <= 25)


def test_free_pointwise_density_is_uniform():
    spec = solve(TorusSpec(1.0, 400.0))
    for x in ([0.1, 0.2, 0.3], [0.7, 0.0, 0.5]):
        assert pointwise_density(spec, 90.0, x) == pytest.approx(counting(spec, 90.0))


def test_completeness_of_eigenvectors(singular_v):
    spec = solve(TorusSpec(1.0, 400.0), singular_v)
    x = [0.31, 0.47, 0.52]
    assert mode_density(spec, x).sum() == pytest.approx(spec.size, rel=1e-10)


def test_weak_coupling_ground_state_shift():
    # [DERIVED] first order: E_0 = (1/L^3) int V = Vhat(0) / L^3
    V = RadialKatoPotential(1e-3, 0.5, center=(0.5, 0.5, 0.5), r_cut=0.4, L=1.0)
    spec = solve(TorusSpec(1.0, 400.0), V)
    assert spec.eigenvalues[0] == pytest.approx(radial_transform(V, 0.0)[0], rel=1e-3)


def test_torus_spectrum_is_translation_invariant():
    V1 = RadialKatoPotential(1.0, 0.5, center=(0.5, 0.5, 0.5), r_cut=0.4, L=1.0)
    V2 = RadialKatoPotential(1.0, 0.5, center=(0.3, 0.55, 0.5), r_cut=0.4, L=1.0)
    H1 = build_torus_hamiltonian(TorusSpec(1.0, 400.0), V1)
    H2 = build_torus_hamiltonian(TorusSpec(1.0, 400.0), V2)
    assert not np.iscomplexobj(H1.matrix) and np.iscomplexobj(H2.matrix)
    assert np.allclose(eigensolve(H1).eigenvalues, eigensolve(H2).eigenvalues, atol=1e-9)


def test_cube_rejects_potential_near_boundary():
    V = RadialKatoPotential(1.0, 0.5, center=(0.2, 0.5, 0.5), r_cut=0.2)
    with pytest.raises(ValueError):
        build_cube_hamiltonian(CubeSpec(1.0, 6), V)


def test_cube_weak_coupling_shift():
    # [DERIVED] first order: int V |phi_111|^2 with phi_111 = 2^{3/2} prod sin(pi x_i)
    V = RadialKatoPotential(1e-3, 0.5, center=(0.5, 0.5, 0.5), r_cut=0.2)
    spec = solve(CubeSpec(1.0, 8), V)
    # angular average of prod sin^2 on spheres around the centre, by sampling
    rng = np.random.default_rng(1)
    u = rng.normal(size=(200000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rs = np.linspace(0, 0.2, 401)[1:]
    ang = np.array([np.mean(np.prod(np.sin(np.pi * (0.5 + r * u)) ** 2, axis=1)) for r in rs[::20]])
    ang = np.interp(rs, rs[::20], ang)
    f = 8 * V.radial(rs) * rs**2 * 4 * np.pi * ang
    shift = integrate.trapezoid(np.concatenate([[0.0], f]), np.concatenate([[0.0], rs]))
    assert spec.eigenvalues[0] - 3 * np.pi**2 == pytest.approx(shift, rel=2e-2)


def test_trust_region():
    spec = solve(TorusSpec(1.0, 400.0))
    assert spec.t_trust == 100.0
    with pytest.raises(TrustError):
        counting(spec, 101.0)
    with pytest.raises(TrustError):
        pointwise_density(spec, 150.0, [0, 0, 0])


def test_hermitian_check():
    with pytest.raises(ValueError):
        HermitianOperator(np.zeros((2, 3)), np.array([[1.0, 2.0], [0.0, 1.0]]), TorusSpec())


def test_content_hash_is_deterministic(singular_v):
    g = TorusSpec(1.0, 400.0)
    assert content_hash(g, singular_v) == content_hash(TorusSpec(1.0, 400.0), singular_v.with_gamma(1.0))
    assert content_hash(g, singular_v) != content_hash(g, singular_v.with_gamma(2.0))
    assert content_hash(g, None) != content_hash(TorusSpec(1.0, 401.0), None)


def test_free_tail_resolvent_closed_form():
    for lam, t0 in ((10.0, 400.0), (3.0, 50.0)):
        # substitute t = t0 / w^2 to map the half line onto (0, 1]
        f = lambda w: math.sqrt(t0) / w / (4 * np.pi**2) / (t0 / w**2 + lam) ** 2 * 2 * t0 / w**3
        ref = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-13)[0]
        assert free_tail_resolvent(lam, t0) == pytest.approx(ref, rel=1e-10)


def test_resolvent_against_image_sum():
    spec = solve(TorusSpec(1.0, 400.0))
    for lam in (10.0, 25.0, 50.0):
        ref = -torus_dlambda_green(lam, 1.0)
        assert resolvent2_diag(spec, lam, [0.2, 0.2, 0.2]) == pytest.approx(ref, rel=2e-3)


def test_basis_tail_against_first_order_lattice_sum():
    # [DERIVED] first-order perturbation theory: plane waves q with K1 < |q| <= K2
    # shift e(t, x0) by sum_{p occ} sum_q 2 Vhat(|q-p|) / (L^6 (|p|^2 - |q|^2)); the
    # continuum tail model must reproduce tail(K1) - tail(K2).
    V = RadialKatoPotential(1.0, 0.5, center=(0.5, 0.5, 0.5), r_cut=0.4, L=1.0)
    t, K1sq, K2sq = 100.0, 3600.0, 40000.0
    occ, _ = torus_basis(TorusSpec(1.0, t))
    mq, q2 = torus_basis(TorusSpec(1.0, K2sq))
    shell = mq[q2 > K1sq]
    diff2 = ((shell[None, :, :] - occ[:, None, :]) ** 2).sum(-1)
    uniq, inv = np.unique(diff2, return_inverse=True)
    vhat = radial_transform(V, 2 * np.pi * np.sqrt(uniq))[inv.reshape(diff2.shape)]
    Ep = 4 * np.pi**2 * (occ * occ).sum(1)
    Eq = 4 * np.pi**2 * (shell * shell).sum(1)
    lattice = np.sum(2 * vhat / (Ep[:, None] - Eq[None, :]))

    def dummy(lb):
        g = TorusSpec(1.0, lb)
        return Spectrum(np.zeros(1), np.ones((1, 1)), np.zeros((1, 3)), g, V)

    model = basis_tail_density(dummy(K1sq), t, V.center) - basis_tail_density(dummy(K2sq), t, V.center)
    assert model == pytest.approx(lattice, rel=0.03)
