"""Galerkin spectra of -Delta + V on the flat 3-torus and the Dirichlet cube.

Torus: plane waves e^{i q.x} / L^{3/2}, q = 2 pi m / L, |q|^2 <= lambda_basis.
Cube:  sine products (2/a)^{3/2} prod_i sin(pi m_i x_i / a), m_i >= 1, with
       the spherical truncation pi^2 |m|^2 / a^2 <= lambda_basis.

Eigenvalues up to t_trust = lambda_basis / 4 are treated as certified.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .kato import RadialKatoPotential, radial_transform, transform_tail_amplitude

__all__ = [
    "TorusSpec",
    "CubeSpec",
    "HermitianOperator",
    "Spectrum",
    "TrustError",
    "ResourceError",
    "torus_basis",
    "cube_basis",
    "build_torus_hamiltonian",
    "build_cube_hamiltonian",
    "eigensolve",
    "mode_density",
    "counting",
    "pointwise_density",
    "resolvent2_diag",
    "free_tail_resolvent",
    "basis_tail_density",
    "free_torus_counting",
    "content_hash",
]

DEFAULT_MEMORY_BUDGET = float(os.environ.get("WEYL_MEMORY_BUDGET", 8e9))


class TrustError(ValueError):
    """Spectral parameter beyond the certified range of a truncated basis."""


class ResourceError(MemoryError):
    """Requested basis would exceed the memory budget."""

    def __init__(self, required):
        super().__init__(f"basis needs about {required / 1e9:.2f} GB "
                         f"(budget {DEFAULT_MEMORY_BUDGET / 1e9:.2f} GB)")
        self.required = required


@dataclass(frozen=True)
class TorusSpec:
    L: float = 1.0
    lambda_basis: float = 400.0

    def __post_init__(self):
        if not (self.L > 0 and self.lambda_basis > 0):
            raise ValueError("L and lambda_basis must be positive")

    def to_dict(self):
        return {"kind": "torus", "L": self.L, "lambda_basis": self.lambda_basis}


@dataclass(frozen=True)
class CubeSpec:
    a: float = 1.0
    m_max: int = 10

    def __post_init__(self):
        if not (self.a > 0 and int(self.m_max) >= 1):
            raise ValueError("need a > 0 and m_max >= 1")

    @property
    def lambda_basis(self):
        return (np.pi * self.m_max / self.a) ** 2

    def to_dict(self):
        return {"kind": "cube", "a": self.a, "m_max": int(self.m_max)}


@dataclass
class HermitianOperator:
    labels: np.ndarray
    matrix: np.ndarray
    geometry: object
    potential: RadialKatoPotential | None = None

    def __post_init__(self):
        H = self.matrix
        err = np.abs(H - H.conj().T).max() if H.size else 0.0
        scale = max(np.abs(H).max(), 1.0) if H.size else 1.0
        if err > 1e-12 * scale:
            raise ValueError(f"matrix is not Hermitian (defect {err:.2e})")

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass
class Spectrum:
    """Sorted eigenvalues, eigenvector coefficients and the basis they refer to."""

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    labels: np.ndarray
    geometry: object
    potential: RadialKatoPotential | None = None
    t_trust: float = field(default=0.0)
    _tail_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.t_trust == 0.0:
            self.t_trust = self.geometry.lambda_basis / 4.0

    @property
    def kind(self):
        return "torus" if isinstance(self.geometry, TorusSpec) else "cube"

    @property
    def volume(self):
        g = self.geometry
        return g.L**3 if self.kind == "torus" else g.a**3

    @property
    def size(self):
        return self.eigenvalues.size

    def hash(self):
        return content_hash(self.geometry, self.potential)


def content_hash(geometry, potential):
    """sha256 of the canonical JSON description of (geometry, potential)."""
    payload = {"geometry": geometry.to_dict(),
               "potential": None if potential is None else potential.to_dict(),
               "format": 1}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------- bases


def torus_basis(spec: TorusSpec):
    """Integer vectors m with |2 pi m / L|^2 <= lambda_basis, sorted by |m|^2."""
    mmax = int(np.sqrt(spec.lambda_basis) * spec.L / (2 * np.pi)) + 1
    r = np.arange(-mmax, mmax + 1)
    m = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    q2 = (2 * np.pi / spec.L) ** 2 * (m * m).sum(1)
    keep = q2 <= spec.lambda_basis * (1 + 1e-12)
    m, q2 = m[keep], q2[keep]
    order = np.lexsort((m[:, 2], m[:, 1], m[:, 0], (m * m).sum(1)))
    return m[order], q2[order]


def cube_basis(spec: CubeSpec):
    """Positive-octant integer vectors with |m|^2 <= m_max^2, sorted by |m|^2."""
    r = np.arange(1, int(spec.m_max) + 1)
    m = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    m = m[(m * m).sum(1) <= int(spec.m_max) ** 2]
    order = np.lexsort((m[:, 2], m[:, 1], m[:, 0], (m * m).sum(1)))
    m = m[order]
    return m, (np.pi / spec.a) ** 2 * (m * m).sum(1)


def _check_memory(n, complex_):
    # matrix + eigenvectors + LAPACK workspace
    need = 3.2 * n * n * (16 if complex_ else 8)
    if need > DEFAULT_MEMORY_BUDGET:
        raise ResourceError(need)


def _transform_lookup(V, k2_unique, scale):
    """radial_transform at q = scale * sqrt(k2) for unique integer k2 values."""
    return radial_transform(V, scale * np.sqrt(k2_unique.astype(float)))


# ------------------------------------------------------------- torus


def build_torus_hamiltonian(spec: TorusSpec, V: RadialKatoPotential | None):
    """H[m, m'] = |q_m|^2 delta + Vhat(m - m'), Vhat the torus Fourier coefficient."""
    m, q2 = torus_basis(spec)
    n = len(m)
    L = spec.L
    if V is None or V.gamma == 0:
        return HermitianOperator(m, np.diag(q2), spec, V)
    if not V.r_cut < L / 2:
        raise ValueError("need r_cut < L/2")
    c = np.asarray(V.center, dtype=float)
    # e^{-i q.c} is real (+-1) when 2c/L is integral
    cplx = not np.allclose(2 * c / L, np.round(2 * c / L))
    _check_memory(n, cplx)
    H = np.empty((n, n), dtype=complex if cplx else float)
    # rows in blocks keep the integer work arrays small
    blk = max(1, 4_000_000 // max(n, 1))
    k2_all = []
    for i in range(0, n, blk):
        d = m[i:i + blk, None, :] - m[None, :, :]
        k2_all.append(np.unique((d * d).sum(-1)))
    uk = np.unique(np.concatenate(k2_all))
    vals = _transform_lookup(V, uk, 2 * np.pi / L) / L**3
    for i in range(0, n, blk):
        d = m[i:i + blk, None, :] - m[None, :, :]
        k2 = (d * d).sum(-1)
        block = vals[np.searchsorted(uk, k2)]
        if cplx:
            block = block * np.exp(-1j * (2 * np.pi / L) * (d @ c))
        elif np.any(c):
            block = block * np.cos((2 * np.pi / L) * (d @ c))
        H[i:i + blk] = block
    H[np.diag_indices(n)] += q2
    return HermitianOperator(m, H, spec, V)


# -------------------------------------------------------------- cube


def build_cube_hamiltonian(spec: CubeSpec, V: RadialKatoPotential | None):
    """Sine-basis matrix of -Delta + V on the Dirichlet cube [0, a]^3.

    sin*sin = (cos(diff) - cos(sum)) / 2 on every axis turns the matrix
    element into eight cosine Fourier coefficients of V.  For a radial V
    centred at c these are prod_i cos(pi k_i c_i / a) * Vhat(pi |k| / a).
    """
    m, lam0 = cube_basis(spec)
    n = len(m)
    a = spec.a
    if V is None or V.gamma == 0:
        return HermitianOperator(m, np.diag(lam0), spec, V)
    c = np.asarray(V.center, dtype=float)
    if np.any(c - 2 * V.r_cut < 0) or np.any(c + 2 * V.r_cut > a):
        raise ValueError("V must be supported at least r_cut away from the boundary")
    if V.L is not None:
        raise ValueError("cube potentials use Euclidean distance (L=None)")
    _check_memory(n, False)
    kmax = 2 * int(spec.m_max)
    ks = np.arange(-kmax, kmax + 1)
    cos_tab = np.cos(np.pi * np.outer(c, ks) / a)          # (3, 2 kmax + 1)
    uk = np.arange(0, 3 * kmax * kmax + 1)
    vals = _transform_lookup(V, uk, np.pi / a)
    H = np.zeros((n, n))
    for signs in np.ndindex(2, 2, 2):
        s = 1 - 2 * np.asarray(signs)                       # +1: difference, -1: sum
        coef = np.prod(s)                                   # (+1/2) or (-1/2) per axis
        d = m[:, None, :] - s * m[None, :, :]
        k2 = (d * d).sum(-1)
        block = vals[k2]
        for ax in range(3):
            block *= cos_tab[ax][d[..., ax] + kmax]
        H += coef * block
    H *= (2.0 / a) ** 3 / 8.0
    H = 0.5 * (H + H.T)
    H[np.diag_indices(n)] += lam0
    return HermitianOperator(m, H, spec, V)


# ------------------------------------------------------------ solver


def eigensolve(H: HermitianOperator) -> Spectrum:
    """Dense Hermitian eigendecomposition; eigenvalues ascending."""
    M = H.matrix
    if not np.count_nonzero(M - np.diag(np.diagonal(M))):
        # V = 0: plane waves / sine modes are already eigenfunctions
        order = np.argsort(np.diagonal(M).real, kind="stable")
        C = np.zeros(M.shape, dtype=M.dtype)
        C[order, np.arange(order.size)] = 1.0
        return Spectrum(np.diagonal(M).real[order].copy(), C, H.labels, H.geometry, H.potential)
    try:
        w, C = linalg.eigh(H.matrix, driver="evd", check_finite=False)
    except linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigensolver did not converge: {exc}") from exc
    return Spectrum(w, C, H.labels, H.geometry, H.potential)


def mode_density(spec: Spectrum, x):
    """|phi_n(x)|^2 for every computed eigenfunction."""
    x = np.asarray(x, dtype=float)
    key = ("modes",) + tuple(np.round(x, 15))
    if key in spec._tail_cache:
        return spec._tail_cache[key]
    g = spec.geometry
    if spec.kind == "torus":
        q = 2 * np.pi * spec.labels / g.L
        e = np.exp(1j * (q @ x)) / g.L**1.5
        phi = e @ spec.coefficients
    else:
        s = np.prod(np.sin(np.pi * spec.labels * x / g.a), axis=1)
        phi = (2.0 / g.a) ** 1.5 * (s @ spec.coefficients)
    dens = np.abs(phi) ** 2
    spec._tail_cache[key] = dens
    return dens


def _check_trust(spec, t):
    if np.any(np.asarray(t) > spec.t_trust * (1 + 1e-12)):
        raise TrustError(f"t beyond t_trust = {spec.t_trust:g}")


def counting(spec: Spectrum, t):
    """N(t) = #{n : lambda_n <= t}."""
    _check_trust(spec, t)
    out = np.searchsorted(spec.eigenvalues, t, side="right")
    return int(out) if np.ndim(out) == 0 else out


def pointwise_density(spec: Spectrum, t, x, tail=False):
    """e(t, x) = sum_{lambda_n <= t} |phi_n(x)|^2.

    With tail=True the first-order contribution of plane waves outside
    the basis is added (see basis_tail_density).
    """
    _check_trust(spec, t)
    cs = np.concatenate([[0.0], np.cumsum(mode_density(spec, x))])
    out = cs[np.searchsorted(spec.eigenvalues, t, side="right")]
    if tail:
        out = out + basis_tail_density(spec, t, x)
    return float(out) if np.ndim(out) == 0 else out


def free_tail_resolvent(lam, t0):
    """int_{t0}^inf (sqrt t / 4 pi^2) (t + lam)^-2 dt in closed form."""
    if lam > 0:
        st = np.sqrt(t0)
        sl = np.sqrt(lam)
        val = (np.pi / 2 - np.arctan(st / sl)) / sl + st / (t0 + lam)
        return val / (4 * np.pi**2)
    return integrate.quad(lambda t: np.sqrt(t) / (t + lam) ** 2, t0, np.inf)[0] / (4 * np.pi**2)


def tail_start(spec: Spectrum, mode="matched"):
    """Where the free continuum tail begins.

    'basis'   at lambda_basis
    'matched' at the t where the free Weyl law counts exactly the basis size
    """
    if mode == "basis":
        return spec.geometry.lambda_basis
    return (6 * np.pi**2 * spec.size / spec.volume) ** (2.0 / 3.0)


def resolvent2_diag(spec: Spectrum, lam, x, tail=True, tail_mode="matched"):
    """(-Delta + V + lam)^-2 (x, x) from the eigen-expansion, optionally with a free tail."""
    if lam <= -spec.eigenvalues[0]:
        raise ZeroDivisionError("lambda at or below minus the bottom of the spectrum")
    val = float(np.sum(mode_density(spec, x) / (spec.eigenvalues + lam) ** 2))
    if tail:
        val += free_tail_resolvent(lam, tail_start(spec, tail_mode))
    return val


# ------------------------------------------------ out-of-basis correction


def _tail_shell_integral(p, K, D, A, eta):
    """int over |q| > K of Vhat(q - p) sinc(|q - p| D) / (|q|^2 - |p|^2), angle-averaged in p.

    With k = q - p the angular integrals are exact:
    4 pi k^2 Vhat(k) sinc(k D) g(k, p), g = ln(((k+p)^2 - p^2) / (max(K^2, (k-p)^2) - p^2)) / (4 k p).
    Vhat is replaced by its large-k form A k^(-1-eta).
    """
    def g(k):
        if p == 0:
            return 1.0 / (k * k)
        lo = max(K * K, (k - p) ** 2) - p * p
        return np.log(((k + p) ** 2 - p * p) / lo) / (4 * k * p)

    def f(k):
        return 4 * np.pi * A * k ** (1 - eta) * g(k)

    lo = K - p if p > 0 else K
    hi = K + p
    total = 0.0
    if D == 0:
        # panels out to X, then the exact k^(-1-eta) tail of f
        X = 1e7 * K
        edges = np.concatenate([[lo, hi] if p > 0 else [lo], np.geomspace(hi, X, 60)[1:]])
        for e0, e1 in zip(edges[:-1], edges[1:]):
            total += integrate.quad(f, e0, e1, limit=200, epsrel=1e-10)[0]
        total += 4 * np.pi * A * X ** (-eta) / eta
        return total
    if p > 0:
        total += integrate.quad(lambda k: f(k) * np.sinc(k * D / np.pi), lo, hi,
                                limit=200, epsrel=1e-10)[0]
    total += integrate.quad(lambda k: f(k) / (k * D), hi, np.inf, weight="sin",
                            wvar=D, limlst=200)[0]
    return total


def basis_tail_density(spec: Spectrum, t, x):
    """First-order correction to e(t, x) from plane waves outside the torus basis.

    The Galerkin density misses the coupling of occupied states to modes with
    |q|^2 > lambda_basis.  At first order in V it equals
        -(2 / (L^3 (2 pi)^3)) sum_{|p|^2 <= t} int_{|q|>K} Vhat(q-p) cos((q-p).D) / (|q|^2 - |p|^2) dq,
    with K^2 = lambda_basis and D = x - x0.  Because the integrand only sees
    large momenta, Vhat is taken in its power-law form.  This decays only like
    lambda_basis^(-eta/2), which is why it matters at desk scale.
    """
    V = spec.potential
    if spec.kind != "torus" or V is None or V.gamma == 0:
        return 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else 0.0
    g = spec.geometry
    D = float(V.distance(np.asarray(x, dtype=float)))
    key = ("tail", round(D, 14))
    if key not in spec._tail_cache:
        A = transform_tail_amplitude(V)
        K = np.sqrt(g.lambda_basis)
        m, q2 = torus_basis(TorusSpec(g.L, spec.t_trust))
        k2, mult = np.unique((m * m).sum(1), return_counts=True)
        p = 2 * np.pi * np.sqrt(k2) / g.L
        shell = np.array([_tail_shell_integral(pp, K, D, A, V.eta) for pp in p])
        contrib = -2.0 / (g.L**3 * (2 * np.pi) ** 3) * mult * shell
        spec._tail_cache[key] = (p * p, np.cumsum(contrib))
    p2, cum = spec._tail_cache[key]
    idx = np.searchsorted(p2, np.asarray(t, dtype=float) * (1 + 1e-12), side="right")
    out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------- free lattice data


def free_torus_counting(t, L=1.0):
    """#{m in Z^3 : 4 pi^2 |m|^2 / L^2 <= t} by direct enumeration."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    R2 = t.max() * L * L / (4 * np.pi**2)
    r = np.arange(-int(np.sqrt(R2)) - 1, int(np.sqrt(R2)) + 2)
    m2 = np.add.outer(np.add.outer(r * r, r * r), r * r).ravel()
    m2 = np.sort(m2)
    out = np.searchsorted(m2, t * L * L / (4 * np.pi**2) * (1 + 1e-12), side="right")
    return out if out.size > 1 else int(out[0])
