"""Radial singular potentials, Kato-class norms, L^q norms and Fourier data.

The model potential is V(x) = gamma * chi(d / r_cut) * d^(eta - 2) with d the
(minimum-image) distance to the centre.  chi is a C^2 quintic smoothstep,
equal to 1 on [0, 1/2] and 0 on [1, inf).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn
from scipy.stats import qmc

__all__ = [
    "smoothstep_profile",
    "indicator_profile",
    "RadialKatoPotential",
    "GridPotential",
    "eval_potential",
    "kato_norm",
    "kato_norm_radial_closed",
    "kato_norm_grid",
    "fourier_coeff",
    "radial_transform",
    "transform_tail_amplitude",
    "lq_norm",
    "lq_norm_truncated",
    "LqDivergenceError",
    "CUBE_INV_R",
]

# int over the centred unit cube of 1/|y|
CUBE_INV_R = 3.0 * np.log((np.sqrt(3.0) + 1.0) / (np.sqrt(3.0) - 1.0)) - np.pi / 2.0


class LqDivergenceError(ValueError):
    """The requested L^q norm is infinite for this singularity."""


def smoothstep_profile(u):
    """chi(u): 1 on [0, 1/2], quintic C^2 decay on [1/2, 1], 0 beyond."""
    u = np.asarray(u, dtype=float)
    s = np.clip(2.0 * u - 1.0, 0.0, 1.0)
    out = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    return out[()] if out.ndim == 0 else out


def indicator_profile(u):
    """Sharp cutoff 1_{[0,1)}; only used as an analytic oracle."""
    u = np.asarray(u, dtype=float)
    out = (u < 1.0).astype(float)
    return out[()] if out.ndim == 0 else out


_PROFILES = {"smooth": smoothstep_profile, "indicator": indicator_profile}


@dataclass(frozen=True)
class RadialKatoPotential:
    """gamma * chi(d/r_cut) / d^(2-eta) around `center`.

    L      torus side for minimum-image distances (None: Euclidean)
    core   if > 0, d is replaced by max(d, core), giving a bounded potential
    """

    gamma: float
    eta: float
    center: tuple = (0.0, 0.0, 0.0)
    r_cut: float = 0.4
    L: float | None = None
    core: float = 0.0
    profile: str = "smooth"

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if not self.r_cut > 0:
            raise ValueError("r_cut must be positive")
        if self.L is not None and not self.r_cut < self.L / 2:
            raise ValueError("r_cut must be < L/2 on the torus")
        if self.core < 0 or self.core >= self.r_cut:
            raise ValueError("core must lie in [0, r_cut)")
        if self.profile not in _PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def chi(self):
        return _PROFILES[self.profile]

    def radial(self, d):
        """V as a function of the distance to the centre (d > 0)."""
        d = np.asarray(d, dtype=float)
        dd = np.maximum(d, self.core) if self.core > 0 else d
        with np.errstate(divide="ignore"):
            out = self.gamma * self.chi(d / self.r_cut) * dd ** (self.eta - 2.0)
        out = np.where(d >= self.r_cut, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def distance(self, x):
        """Distance from x (shape (..., 3)) to the centre, minimum image on the torus."""
        dx = np.asarray(x, dtype=float) - np.asarray(self.center)
        if self.L is not None:
            dx = dx - self.L * np.round(dx / self.L)
        return np.linalg.norm(dx, axis=-1)

    def __call__(self, x):
        return self.radial(self.distance(x))

    def with_gamma(self, g):
        return RadialKatoPotential(g, self.eta, self.center, self.r_cut, self.L,
                                   self.core, self.profile)

    def to_dict(self):
        return {"gamma": self.gamma, "eta": self.eta, "center": list(self.center),
                "r_cut": self.r_cut, "L": self.L, "core": self.core,
                "profile": self.profile}


@dataclass
class GridPotential:
    """Potential sampled at cell centres of a uniform grid with spacing h."""

    values: np.ndarray
    h: float
    periodic: bool = True
    origin: tuple = (0.0, 0.0, 0.0)
    shape: tuple = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("GridPotential needs a 3-D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridPotential values must be finite")
        self.shape = self.values.shape

    def nodes(self):
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in self.shape],
                                   indexing="ij"), -1)
        return np.asarray(self.origin) + (idx + 0.5) * self.h


def eval_potential(V: RadialKatoPotential, x):
    """Value of V at x; the centre itself is excluded unless V has a core."""
    d = V.distance(x)
    if np.any(d == 0) and V.core == 0:
        raise ZeroDivisionError("V is unbounded at its centre")
    return V.radial(d)


# ------------------------------------------------------------ Kato norm


def kato_norm_radial_closed(gamma, eta, r):
    """4 pi |gamma| r^eta / eta, valid when chi == 1 on [0, r]."""
    return 4.0 * np.pi * abs(gamma) * r**eta / eta


@lru_cache(maxsize=64)
def _moment_table(V: RadialKatoPotential, n_panels=1500, order=8):
    """Spline of G(s) = int_0^s |V(D)| D dD in the variable u = s^eta."""
    eta = V.eta
    umax = V.r_cut**eta
    brk = set(np.linspace(0.0, umax, n_panels + 1))
    brk |= {p**eta for p in (V.r_cut / 2, V.core) if p > 0}
    brk = np.array(sorted(brk))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = brk[:-1], brk[1:]
    u = 0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]
    D = u ** (1.0 / eta)
    # |V| D dD = |V| D^(2-eta) du / eta
    f = np.abs(V.radial(D)) * D ** (2.0 - eta) / eta
    panel = (0.5 * (b - a)[:, None] * w * f).sum(axis=1)
    G = np.concatenate([[0.0], np.cumsum(panel)])
    return CubicSpline(brk, G)


def _radial_moment(V: RadialKatoPotential, s):
    """G(s) = int_0^s |V(D)| D dD."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, V.r_cut)
    if V.core == 0 and V.profile == "smooth" and np.all(s <= V.r_cut / 2):
        return abs(V.gamma) * s**V.eta / V.eta
    if V.profile == "indicator":
        return _moment_indicator(V, s)
    return _moment_table(V)(s**V.eta)


def _moment_indicator(V, s):
    if V.core == 0:
        return abs(V.gamma) * s**V.eta / V.eta
    c = V.core
    inner = abs(V.gamma) * c ** (V.eta - 2.0) * np.minimum(s, c) ** 2 / 2.0
    outer = abs(V.gamma) * (np.maximum(s, c) ** V.eta - c**V.eta) / V.eta
    return inner + outer


def _kato_integral_at(V: RadialKatoPotential, a, r):
    """int_{|y-x|<r} |V(y)| / |y-x| dy for a probe at distance a from one centre.

    Angular integration is exact: (2 pi / a) int_0^r [G(a+rho) - G(|a-rho|)] d rho.
    """
    if a < 1e-14:
        return 4.0 * np.pi * _radial_moment(V, r)
    g = lambda rho: _radial_moment(V, a + rho) - _radial_moment(V, abs(a - rho))
    pts = [p for p in (a, abs(a - V.r_cut), a + V.r_cut) if 0 < p < r]
    val = integrate.quad(g, 0.0, r, points=pts or None, limit=200,
                         epsabs=1e-12, epsrel=1e-10)[0]
    return 2.0 * np.pi * val / a


def default_probes(V: RadialKatoPotential, m=6, seed=0):
    """The centre plus 2^m scrambled Sobol points in the cube of half-width r_cut."""
    cloud = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)
    c = np.asarray(V.center)
    return np.vstack([c, c + (2.0 * cloud - 1.0) * V.r_cut])


def kato_norm(V, r, probe_points=None):
    """sup over probes x of int_{d(x,y)<r} |V(y)| / d(x,y) dy.

    Returns (value, argmax probe).  For the radial family the integral at
    each probe is reduced to a 1-D quadrature; periodic images of the
    centre are included on the torus.
    """
    if isinstance(V, GridPotential):
        return kato_norm_grid(V, r, probe_points)
    if r <= 0:
        raise ValueError("r must be positive")
    if probe_points is None:
        probe_points = default_probes(V)
    probes = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("empty probe set")
    if V.gamma == 0:
        return 0.0, probes[0]
    c = np.asarray(V.center)
    best, arg = -1.0, probes[0]
    for x in probes:
        dx = x - c
        if V.L is None:
            shifts = [np.zeros(3)]
        else:
            rng = np.arange(-1, 2)
            shifts = V.L * np.stack(np.meshgrid(rng, rng, rng, indexing="ij"),
                                    -1).reshape(-1, 3)
        val = 0.0
        for sh in shifts:
            a = np.linalg.norm(dx - sh)
            if a < r + V.r_cut:
                val += _kato_integral_at(V, a, r)
        if val > best:
            best, arg = val, x
    return best, arg


def kato_norm_grid(G: GridPotential, r, probe_idx=None):
    """Kato norm of a grid potential.

    Trapezoidal sum over cells inside the ball, except the probe's own cell
    whose 1/d weight is integrated exactly (h^2 * CUBE_INV_R).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    shape = np.array(G.shape)
    if probe_idx is None:
        probe_idx = np.argwhere(np.abs(G.values) == np.abs(G.values).max())
    probe_idx = np.atleast_2d(probe_idx)
    if probe_idx.shape[0] == 0:
        raise ValueError("empty probe set")
    k = int(np.ceil(r / G.h))
    rng = np.arange(-k, k + 1)
    off = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
    d = np.linalg.norm(off, axis=1) * G.h
    keep = (d < r) & (d > 0)
    off, d = off[keep], d[keep]
    absV = np.abs(G.values)
    best, arg = -1.0, probe_idx[0]
    for p in probe_idx:
        idx = p + off
        if G.periodic:
            idx = idx % shape
            w = np.ones(len(idx), dtype=bool)
        else:
            w = np.all((idx >= 0) & (idx < shape), axis=1)
        vals = absV[tuple(idx[w].T)]
        val = np.sum(vals / d[w]) * G.h**3 + absV[tuple(p)] * G.h**2 * CUBE_INV_R
        if val > best:
            best, arg = val, p
    return best, arg


# -------------------------------------------------------- Fourier data


@lru_cache(maxsize=32)
def _radial_nodes(r_cut, core, eta, n_uniform=64, n_graded=48, order=16):
    """Composite Gauss-Legendre nodes on [0, r_cut] graded towards r = 0."""
    x, w = np.polynomial.legendre.leggauss(order)
    brk = set(np.linspace(0.0, r_cut, n_uniform + 1))
    first = r_cut / n_uniform
    brk |= {first * 2.0**-j for j in range(1, n_graded)}
    brk |= {r_cut / 2}
    if core > 0:
        brk.add(core)
    brk = np.array(sorted(b for b in brk if b > 0 or b == 0))
    a, b = brk[:-1], brk[1:]
    r = (0.5 * (b - a)[:, None] * x[None, :] + 0.5 * (a + b)[:, None]).ravel()
    wr = (0.5 * (b - a)[:, None] * w[None, :]).ravel()
    return r, wr


def radial_transform(V: RadialKatoPotential, q):
    """Continuum transform 4 pi int V(r) r^2 sinc(q r) dr (real, centre at 0).

    Composite Gauss-Legendre in r with geometric grading at the r^eta
    endpoint singularity.  Vectorised over q.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if V.profile == "indicator":
        return _radial_transform_quad(V, q)
    r, w = _radial_nodes(V.r_cut, V.core, V.eta)
    f = w * V.radial(r) * r * r
    out = np.empty(q.shape)
    step = max(1, 2_000_000 // r.size)
    flat = q.ravel()
    res = np.empty(flat.shape)
    for i in range(0, flat.size, step):
        qq = flat[i:i + step]
        res[i:i + step] = np.sinc(np.outer(qq, r) / np.pi) @ f
    out = 4.0 * np.pi * res.reshape(q.shape)
    return out


def _radial_transform_quad(V, q):
    """Adaptive-quadrature transform; reference path and indicator oracle."""
    eta = V.eta
    out = np.empty(q.shape)
    for i, qq in enumerate(q.ravel()):
        def f(u, qq=qq):
            r = u ** (1.0 / eta)
            # V r^2 sinc(q r) dr with dr = (1/eta) u^(1/eta - 1) du
            return V.radial(r) * r ** (3.0 - eta) * np.sinc(qq * r / np.pi) / eta
        pts = [p**eta for p in (V.r_cut / 2, V.core) if p > 0]
        out.flat[i] = integrate.quad(f, 0.0, V.r_cut**eta, points=pts, limit=2000,
                                     epsabs=1e-14, epsrel=1e-12)[0]
    return 4.0 * np.pi * out


def fourier_coeff(V: RadialKatoPotential, m, L):
    """Torus Fourier coefficient (1/L^3) int V(x) e^{-i q.x} dx, q = 2 pi m / L."""
    if not V.r_cut < L / 2:
        raise ValueError("need r_cut < L/2")
    m = np.asarray(m, dtype=float)
    q = 2.0 * np.pi * m / L
    qn = np.linalg.norm(q, axis=-1)
    phase = np.exp(-1j * (q @ np.asarray(V.center)))
    val = radial_transform(V, qn) * phase / L**3
    return val[0] if np.ndim(m) == 1 else val


def transform_tail_amplitude(V: RadialKatoPotential):
    """A with radial_transform(q) ~ A q^(-1-eta) as q -> infinity."""
    if V.core > 0:
        raise ValueError("bounded (core) potentials have no power-law tail")
    return 4.0 * np.pi * V.gamma * gamma_fn(V.eta) * np.sin(np.pi * V.eta / 2.0)


# ----------------------------------------------------------- L^q norms


def lq_critical(eta):
    return 3.0 / (2.0 - eta)


def lq_norm(V: RadialKatoPotential, q):
    """(int |V|^q dx)^(1/q); raises LqDivergenceError for q >= 3/(2-eta)."""
    if q <= 0:
        raise ValueError("q must be positive")
    if V.core == 0 and q >= lq_critical(V.eta):
        raise LqDivergenceError(
            f"V is not in L^{q}: the radial integral diverges for q >= {lq_critical(V.eta):.4g}")
    if V.gamma == 0:
        return 0.0
    return lq_norm_truncated(V, q, 0.0)


def lq_norm_truncated(V: RadialKatoPotential, q, r_min):
    """L^q norm with the ball of radius r_min around the centre removed."""
    alpha = 2.0 + q * (V.eta - 2.0)     # |V|^q r^2 ~ r^alpha near 0
    if V.core > 0 or alpha > -1.0:
        p = 1.0 / (alpha + 1.0) if (V.core == 0 and alpha > -1.0) else 1.0

        def f(u):
            r = u**p
            return abs(V.radial(r)) ** q * r * r * p * u ** (p - 1.0) if u > 0 else 0.0

        lo = r_min ** (1.0 / p)
        pts = [x ** (1.0 / p) for x in (V.r_cut / 2, V.core) if x > r_min]
        val = integrate.quad(f, lo, V.r_cut ** (1.0 / p), points=pts or None,
                             limit=400, epsabs=1e-14, epsrel=1e-11)[0]
    else:
        if r_min <= 0:
            raise LqDivergenceError("integral diverges at the centre")
        g = lambda s: abs(V.radial(np.exp(s))) ** q * np.exp(3 * s)
        val = integrate.quad(g, np.log(r_min), np.log(V.r_cut), limit=400,
                             points=[np.log(V.r_cut / 2)], epsrel=1e-11)[0]
    return (4.0 * np.pi * val) ** (1.0 / q)
