"""Special kernels: kappa, the Jackson Fourier pair, free and periodic Green's functions.

Everything here is a pure function of its arguments.  The oscillatory
half-line integrals are done panel by panel between consecutive zeros of
kappa and the resulting alternating panel series is accelerated by Euler
(repeated-averaging) summation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "QuadratureSpec",
    "kappa",
    "kappa_prime",
    "kappa_zeros",
    "euler_sum",
    "panel_integral",
    "jackson_ell",
    "jackson_K",
    "jackson_fourier",
    "jackson_fourier_residual",
    "JACKSON_K_INTEGRAL",
    "free_green",
    "torus_dlambda_green",
    "stieltjes_weight_integral",
    "stieltjes_weight_residual",
    "moment_integral",
]

KAPPA_SWITCH = 0.1
JACKSON_K_INTEGRAL = 8.0 * np.pi / 3.0


class QuadratureError(RuntimeError):
    """Raised when an integral does not reach the requested tolerance."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls the panel quadrature of oscillatory half-line integrals.

    r_max   largest kappa argument covered by explicit panels
    panels  number of zero-to-zero panels summed before acceleration
    rel_tol target relative accuracy
    """

    r_max: float = 4000.0
    panels: int = 400
    rel_tol: float = 1e-9

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if int(self.panels) < 8:
            raise ValueError("panels must be >= 8")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")


# ---------------------------------------------------------------- kappa


def kappa(z):
    """kappa(z) = (8/pi) (sin z - z cos z) / z^3, entire.

    A four-term Taylor series is used for |z| < 0.1 where the direct
    formula loses all significant digits.
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        z = z.astype(float)
    small = np.abs(z) < KAPPA_SWITCH
    zs = np.where(small, 1.0, z)
    direct = (np.sin(zs) - zs * np.cos(zs)) / zs**3
    z2 = z * z
    series = 1.0 / 3.0 - z2 / 30.0 + z2 * z2 / 840.0 - z2**3 / 45360.0
    out = (8.0 / np.pi) * np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def kappa_prime(z):
    """Derivative of kappa."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < KAPPA_SWITCH
    zs = np.where(small, 1.0, z)
    direct = np.sin(zs) / zs**2 - 3.0 * (np.sin(zs) - zs * np.cos(zs)) / zs**4
    series = -z / 15.0 + z**3 / 210.0 - z**5 / 7560.0
    out = (8.0 / np.pi) * np.where(small, series, direct)
    return out[()] if out.ndim == 0 else out


def kappa_zeros(n):
    """First n positive zeros of kappa, i.e. the roots of tan z = z."""
    k = np.arange(1, n + 1, dtype=float)
    q = (k + 0.5) * np.pi
    z = q - 1.0 / q - 2.0 / (3.0 * q**3)
    for _ in range(4):
        f = np.sin(z) - z * np.cos(z)
        z = z - f / (z * np.sin(z))
    return z


# ----------------------------------------------------- panel summation


def euler_sum(terms, n_avg=None):
    """Sum an (approximately) alternating series by repeated averaging.

    Partial sums are averaged pairwise n_avg times, which is the Euler
    transform of the tail.  For a smooth alternating sequence this kills
    the slowly decaying oscillation of the partial sums.
    """
    terms = np.asarray(terms, dtype=float)
    if terms.size == 0:
        return 0.0
    s = np.cumsum(terms)
    if n_avg is None:
        n_avg = min(30, s.size - 1)
    n_avg = min(n_avg, s.size - 1)
    s = s[-(n_avg + 1):]
    for _ in range(n_avg):
        s = 0.5 * (s[1:] + s[:-1])
    return float(s[-1])


def panel_integral(f, edges, epsabs=1e-15, epsrel=1e-12, limit=200):
    """Integrals of f over consecutive intervals [edges[i], edges[i+1]]."""
    out = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        out[i] = integrate.quad(f, edges[i], edges[i + 1],
                                epsabs=epsabs, epsrel=epsrel, limit=limit)[0]
    return out


def _zero_edges(scale, q: QuadratureSpec, extra=()):
    """Panel edges at the zeros of kappa(scale * u), with extra break points."""
    zs = kappa_zeros(int(q.panels)) / scale
    zs = zs[zs * scale <= q.r_max]
    if zs.size < 8:
        zs = kappa_zeros(8) / scale
    edges = np.concatenate([[0.0], zs])
    for p in extra:
        if 0 < p < edges[-1] and not np.any(np.isclose(edges, p, rtol=1e-12)):
            edges = np.sort(np.append(edges, p))
    return edges


# ------------------------------------------------------------ Jackson


def jackson_ell(eta):
    """Jackson window ell on [-1, 1]; piecewise cubic, 0 <= ell <= 4/3."""
    e = np.abs(np.asarray(eta, dtype=float))
    if np.any(e > 1.0):
        raise ValueError("jackson_ell is defined for |eta| <= 1")
    inner = -4.0 / 3.0 * (1 - 2 * e) ** 3 + 8.0 / 3.0 * (1 - e) ** 3
    outer = 8.0 / 3.0 * (1 - e) ** 3
    out = np.where(e <= 0.5, inner, outer)
    return out[()] if out.ndim == 0 else out


def jackson_K(y):
    """K(y) = (sin(y/4) / (y/4))^4, the Fourier transform of ell."""
    y = np.asarray(y, dtype=float)
    out = np.sinc(y / (4 * np.pi)) ** 4
    return out[()] if out.ndim == 0 else out


def jackson_fourier(y):
    """int_{-1}^{1} ell(eta) e^{-i eta y} d eta by quadrature (ell is even)."""
    total = 0.0
    for a, b in ((0.0, 0.5), (0.5, 1.0)):
        if y == 0:
            total += integrate.quad(jackson_ell, a, b, epsabs=1e-15)[0]
        else:
            total += integrate.quad(jackson_ell, a, b, weight="cos", wvar=y,
                                    epsabs=1e-15)[0]
    return 2.0 * total


def jackson_fourier_residual(ys):
    """max_y |quadrature transform of ell - K(y)| over the given grid."""
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    return float(max(abs(jackson_fourier(y) - jackson_K(y)) for y in ys))


# ---------------------------------------------------- Green's functions


def free_green(lam, r):
    """Resolvent kernel of -Delta + lam on R^3: exp(-sqrt(lam) r) / (4 pi r)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("free_green needs r > 0")
    if lam <= 0:
        raise ValueError("free_green needs lambda > 0")
    out = np.exp(-np.sqrt(lam) * r) / (4 * np.pi * r)
    return out[()] if out.ndim == 0 else out


def _cubic_shell(j):
    if j == 0:
        return np.zeros((1, 3))
    r = np.arange(-j, j + 1)
    m = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1).reshape(-1, 3)
    return m[np.abs(m).max(axis=1) == j]


def torus_dlambda_green(lam, L=1.0, tol=1e-15, max_shell=10_000):
    """d/d lambda of the torus resolvent kernel on the diagonal, by images.

    -(1 / (8 pi sqrt(lam))) sum_{k in (L Z)^3} exp(-sqrt(lam) |k|), summed over
    cubic shells until a whole shell adds less than tol times the sum.
    """
    if lam <= 0 or L <= 0:
        raise ValueError("need lambda > 0 and L > 0")
    sl = np.sqrt(lam)
    total = 0.0
    for j in range(max_shell):
        shell = np.exp(-sl * L * np.linalg.norm(_cubic_shell(j), axis=1)).sum()
        total += shell
        # exponential decay makes shells monotone after j ~ 1 / (sl L)
        if j > 0 and shell < tol * total and j * sl * L > 1:
            break
    return -total / (8 * np.pi * sl)


# ----------------------------------------------- Stieltjes identities


def stieltjes_weight_integral(s, t, q: QuadratureSpec | None = None):
    """int_0^inf lam^{3/2} kappa(s sqrt(lam)) / (t + lam)^3 d lam.

    With u = sqrt(lam) this is int 2 u^4 kappa(s u) / (t + u^2)^3 du, done
    between zeros of kappa(s u) with Euler summation of the panel series.
    """
    q = q or QuadratureSpec()
    if s <= 0 or t <= 0:
        raise ValueError("need s > 0 and t > 0")

    def f(u):
        return 2.0 * u**4 * kappa(s * u) / (t + u * u) ** 3

    edges = _zero_edges(s, q)
    terms = panel_integral(f, edges)
    # analytic envelope tail beyond the last panel is below the Euler error
    return euler_sum(terms)


def stieltjes_weight_residual(s, t, q: QuadratureSpec | None = None):
    """|quadrature - exp(-s sqrt t) / sqrt t|; raises if above q.rel_tol relative."""
    q = q or QuadratureSpec()
    exact = np.exp(-s * np.sqrt(t)) / np.sqrt(t)
    res = abs(stieltjes_weight_integral(s, t, q) - exact)
    if res > q.rel_tol * exact:
        raise QuadratureError(
            f"weight identity residual {res:.3e} above tolerance at s={s}, t={t}",
            achieved=res / exact)
    return res


def moment_integral(lam):
    """int_0^inf t^{3/2} / (t + lam)^3 dt by quadrature (equals 3 pi / (8 sqrt lam))."""
    val, _ = integrate.quad(lambda t: t**1.5 / (t + lam) ** 3, 0, np.inf,
                            epsabs=1e-14, epsrel=1e-13, limit=400)
    return val
