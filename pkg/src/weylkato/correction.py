"""The correction term r_0 of the corrected pointwise Weyl law.

r^(n)(t, x) = 1 / (2 (4 pi)^(n+1)) int dz_1 .. dz_n  kappa(sqrt(t) S) S
              prod_{j=0}^{n} chi(d_j / eps) / d_j  prod_{j=1}^{n} V(z_j)

with z_0 = z_{n+1} = x, d_j = d(z_j, z_{j+1}) and S = sum_j d_j.  The
series r_0 = sum_n (-1)^(n+1) r^(n) enters the Weyl law as
t^{3/2}/(6 pi^2) - r_0 t^{3/2} / 2.

Monte Carlo: each z_j is drawn from an equal mixture of a "link" ball of
radius eps around z_{j-1} (radial density ~ r, cancelling one 1/d) and a
"singular" ball around the centre of V (radial density ~ r^(eta-1),
cancelling the singularity of V).  The weight is f / prod q_j.
"""

from __future__ import annotations

import math
import warnings
from fractions import Fraction
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .kato import RadialKatoPotential, _radial_moment, kato_norm
from .kernels import QuadratureSpec, euler_sum, kappa, kappa_zeros, panel_integral

__all__ = [
    "CorrectionParams",
    "MCEstimate",
    "SeriesResult",
    "RSBound",
    "ConvergenceError",
    "r0n_estimate",
    "r0n_record",
    "r1_quadrature",
    "r0_series",
    "xi_eta",
    "xi_eta_closed",
    "scaling_profile_check",
    "n_q",
    "rs_bound_check",
    "corrected_weyl",
    "weyl_term",
    "variation_constant",
    "FAR_FIELD_LIMIT",
]

FAR_FIELD_LIMIT = 1.0 / (2.0 * np.pi**2)
CHUNK = 50_000


class ConvergenceError(ArithmeticError):
    """The computed orders of the correction series do not contract."""


@dataclass(frozen=True)
class CorrectionParams:
    epsilon: float = 0.4
    max_n: int = 2
    mc_samples: int = 100_000
    seed: int = 12345

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_n) < 1:
            raise ValueError("max_n must be >= 1")
        if int(self.mc_samples) < 10_000:
            raise ValueError("mc_samples must be >= 1e4")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    low_confidence: bool = False

    @property
    def rel_err(self):
        return self.stderr / abs(self.mean) if self.mean else math.inf


@dataclass(frozen=True)
class SeriesResult:
    value: float
    tail_bound: float
    terms: tuple
    ratio: float


@dataclass(frozen=True)
class RSBound:
    lhs: float
    stderr: float
    rhs: float

    @property
    def holds(self):
        return self.lhs <= self.rhs + 3.0 * self.stderr


def weyl_term(t):
    """Free Weyl term t^{3/2} / (6 pi^2)."""
    return np.asarray(t, dtype=float) ** 1.5 / (6.0 * np.pi**2)


# ------------------------------------------------------------ sampling


def _min_image(dx, L):
    if L is None:
        return dx
    return dx - L * np.round(dx / L)


def _unit_vectors(rng, size):
    v = rng.normal(size=(size, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class _ChainSampler:
    """Mixture proposal for chains z_1..z_n starting at x.

    Points are kept as offsets y = z - x0 from the centre of V so that
    distances between points close to the singularity keep full precision.
    """

    def __init__(self, V: RadialKatoPotential, eps, x, p_link=0.5):
        self.V = V
        self.eps = eps
        self.y0 = _min_image(np.asarray(x, dtype=float) - np.asarray(V.center, dtype=float), V.L)
        self.R = V.r_cut
        self.eta = V.eta
        self.p_link = p_link

    def _q_link(self, r):
        return np.where(r < self.eps, 1.0 / (2 * np.pi * self.eps**2 * np.maximum(r, 1e-300)), 0.0)

    def _q_sing(self, r):
        eta, R = self.eta, self.R
        return np.where(r < R, eta * np.maximum(r, 1e-100) ** (eta - 3) / (4 * np.pi * R**eta), 0.0)

    def draw(self, rng, size, n):
        """Offsets y (size, n, 3), the chain's proposal density and |y_j|."""
        L = self.V.L
        y = np.empty((size, n, 3))
        rc = np.empty((size, n))
        q = np.ones(size)
        prev = np.broadcast_to(self.y0, (size, 3))
        for j in range(n):
            use_link = rng.random(size) < self.p_link
            # u >= 1e-12 keeps R u^(1/eta) and its density finite for small eta
            u = np.maximum(rng.random(size), 1e-12)
            r = np.where(use_link, self.eps * np.sqrt(u), self.R * u ** (1.0 / self.eta))
            step = r[:, None] * _unit_vectors(rng, size)
            yj = _min_image(np.where(use_link[:, None], prev + step, step), L)
            rl = np.where(use_link, r, np.linalg.norm(_min_image(yj - prev, L), axis=1))
            rs = np.where(use_link, np.linalg.norm(yj, axis=1), r)
            q *= self.p_link * self._q_link(rl) + (1 - self.p_link) * self._q_sing(rs)
            y[:, j] = yj
            rc[:, j] = rs
            prev = yj
        return y, q, rc


def _chain_geometry(y, y_start, y_end, L):
    """Link lengths d_0..d_n for the chain y_start -> y_1 .. y_n -> y_end."""
    size, n, _ = y.shape
    pts = np.concatenate([np.broadcast_to(y_start, (size, 1, 3)), y,
                          np.broadcast_to(y_end, (size, 1, 3))], axis=1)
    return np.linalg.norm(_min_image(np.diff(pts, axis=1), L), axis=2)


def _welford_merge(a, b):
    na, ma, Ma = a
    nb, mb, Mb = b
    n = na + nb
    if n == 0:
        return a
    d = mb - ma
    return n, ma + d * nb / n, Ma + Mb + d * d * na * nb / n


def _mc(weight_fn, sampler, n, samples, seed):
    """Chunked MC with per-chunk RNG streams; returns (mean, stderr)."""
    ss = np.random.SeedSequence(seed)
    n_chunks = max(1, -(-samples // CHUNK))
    acc = (0, 0.0, 0.0)
    done = 0
    for child in ss.spawn(n_chunks):
        size = min(CHUNK, samples - done)
        rng = np.random.default_rng(child)
        z, q, rc = sampler.draw(rng, size, n)
        w = np.where(q > 0, weight_fn(z, rc) / np.where(q > 0, q, 1.0), 0.0)
        acc = _welford_merge(acc, (size, float(w.mean()), float(((w - w.mean()) ** 2).sum())))
        done += size
    cnt, mean, M2 = acc
    return mean, math.sqrt(M2 / (cnt - 1) / cnt)


def r0n_estimate(n, t, x, V: RadialKatoPotential, params: CorrectionParams) -> MCEstimate:
    """Unbiased Monte-Carlo estimate of r^(n)(t, x)."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    eps = params.epsilon
    if eps > V.r_cut * (1 + 1e-12):
        raise ValueError("epsilon must not exceed r_cut")
    x = np.asarray(x, dtype=float)
    samples = int(params.mc_samples)
    if V.gamma == 0 or float(V.distance(x)) >= n * eps + V.r_cut:
        return MCEstimate(0.0, 0.0, samples)
    chi = V.chi
    sqt = math.sqrt(t)
    pref = 1.0 / (2.0 * (4.0 * np.pi) ** (n + 1))

    sampler = _ChainSampler(V, eps, x)
    y0 = sampler.y0

    def weight(y, rc):
        d = _chain_geometry(y, y0, y0, V.L)
        S = d.sum(axis=1)
        links = np.prod(chi(d / eps) / d, axis=1)
        pot = np.prod(V.radial(rc), axis=1)
        return pref * kappa(sqt * S) * S * links * pot

    mean, se = _mc(weight, sampler, n, samples, params.seed + 7919 * n)
    return MCEstimate(mean, se, samples, low_confidence=se > abs(mean))


def r0n_record(n, t, x, V, params):
    """JSON-ready record of an r^(n) estimate."""
    est = r0n_estimate(n, t, x, V, params)
    return {"n": int(n), "t": float(t), "x": [float(v) for v in np.asarray(x)],
            "mean": est.mean, "stderr": est.stderr, "samples": est.n_samples,
            "seed": params.seed, "epsilon": params.epsilon,
            "low_confidence": est.low_confidence}


# --------------------------------------------------- n = 1 quadrature


def r1_quadrature(t, x, V: RadialKatoPotential, eps):
    """r^(1)(t, x) by exact angular reduction to one radial integral.

    With a = d(x, x0) and rho = |z - x|:
        r1 = 1/(16 pi^2) int_0^eps rho kappa(2 sqrt(t) rho) chi(rho/eps)^2 M(rho) d rho,
        M(rho) = (2 pi / (a rho)) [G(a + rho) - G(|a - rho|)],  G(s) = int_0^s V(D) D dD,
    and M = 4 pi V(rho) at a = 0.  Images are ignored (eps + r_cut < L).
    """
    if V.gamma == 0:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _r1_quadrature(t, x, V, eps)


def _r1_quadrature(t, x, V, eps):
    a = float(V.distance(np.asarray(x, dtype=float)))
    if a >= eps + V.r_cut:
        return 0.0
    chi = V.chi
    sgn = math.copysign(1.0, V.gamma)
    sqt = math.sqrt(max(t, 0.0))
    eta = V.eta

    if a < 1e-14:
        # substitute rho = u^(1/eta): rho V rho-measure becomes smooth in u
        def f(u):
            rho = u ** (1.0 / eta)
            return (kappa(2 * sqt * rho) * chi(rho / eps) ** 2 * V.radial(rho)
                    * rho ** (2.0 - eta) / eta * 4 * np.pi)
        zs = kappa_zeros(400) / (2 * sqt) if sqt > 0 else np.array([])
        br = np.unique(np.concatenate([[0.0], zs[zs < eps], [eps / 2, V.r_cut / 2, eps],
                                       [V.core] if V.core else []]))
        br = br[(br >= 0) & (br <= min(eps, V.r_cut))] ** eta
        val = panel_integral(f, br, epsabs=1e-14, epsrel=1e-11).sum()
        return val / (16 * np.pi**2)

    def M(rho):
        return sgn * 2 * np.pi / (a * rho) * (_radial_moment(V, a + rho)
                                              - _radial_moment(V, abs(a - rho)))

    def f(rho):
        return rho * kappa(2 * sqt * rho) * chi(rho / eps) ** 2 * M(rho)

    zs = kappa_zeros(400) / (2 * sqt) if sqt > 0 else np.array([])
    br = np.unique(np.concatenate([[0.0], zs[zs < eps], [a, abs(a - V.r_cut / 2),
                                   a + V.r_cut / 2, abs(a - V.r_cut), eps / 2, eps]]))
    br = br[(br >= 0) & (br <= eps)]
    val = panel_integral(f, br, epsabs=1e-14, epsrel=1e-11).sum()
    return val / (16 * np.pi**2)


# --------------------------------------------------------------- series


def r0_series(t, x, V: RadialKatoPotential, params: CorrectionParams,
              first_order="quadrature") -> SeriesResult:
    """Alternating partial sum of r_0 up to max_n with a geometric tail estimate.

    The n = 1 term uses the exact radial quadrature unless
    first_order='mc'; higher orders are Monte Carlo.
    """
    if V is None or V.gamma == 0:
        return SeriesResult(0.0, 0.0, (0.0,), 0.0)
    terms = []
    for n in range(1, int(params.max_n) + 1):
        if n == 1 and first_order == "quadrature":
            terms.append(r1_quadrature(t, x, V, params.epsilon))
        else:
            terms.append(r0n_estimate(n, t, x, V, params).mean)
    ratios = [abs(terms[k + 1]) / abs(terms[k]) for k in range(len(terms) - 1)
              if terms[k] != 0]
    rho = max(ratios) if ratios else 0.0
    if rho >= 1.0:
        raise ConvergenceError(
            f"orders do not contract (ratio {rho:.3g}); use a smaller epsilon or |gamma|")
    value = sum((-1) ** n * v for n, v in enumerate(terms))
    tail = abs(terms[-1]) * rho / (1.0 - rho) if ratios else 0.0
    return SeriesResult(float(value), float(tail), tuple(terms), float(rho))


def corrected_weyl(t, x, V, params: CorrectionParams, series=None):
    """t^{3/2}/(6 pi^2) - r_0(t, x) t^{3/2} / 2."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if V is None or V.gamma == 0:
        return float(weyl_term(t))
    r0 = series.value if series is not None else r0_series(t, x, V, params).value
    return float(weyl_term(t) - 0.5 * r0 * t**1.5)


# ------------------------------------------------------------------ Xi


def xi_eta_closed(eta):
    """Xi_eta(0) = (1/pi^2) 2^{1-eta}/(3-eta) cos(pi eta/2)/(1-eta) Gamma(eta)."""
    return (2.0 ** (1 - eta) / (3 - eta) * np.cos(np.pi * eta / 2) / (1 - eta)
            * gamma_fn(eta) / np.pi**2)


def xi_eta(eta, s=0.0, q: QuadratureSpec | None = None):
    """Limiting profile Xi_eta(|y| = s) by oscillatory 1-D quadrature.

    s = 0:  (2^-eta / 4 pi) int_0^inf kappa(u) u^(eta-1) du
    s > 0:  (2^-eta / (16 pi eta s)) int_0^inf kappa(r) ((r+2s)^eta - |r-2s|^eta) dr
    Panels run between zeros of kappa; the alternating panel series is
    Euler-summed.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if s < 0:
        raise ValueError("s must be nonnegative")
    q = q or QuadratureSpec()
    zs = kappa_zeros(int(q.panels))
    zs = zs[zs <= max(q.r_max, 4 * s + 200)]
    if s == 0:
        first = integrate.quad(kappa, 0.0, zs[0], weight="alg", wvar=(eta - 1, 0),
                               epsabs=1e-15, epsrel=1e-12)[0]
        rest = panel_integral(lambda u: kappa(u) * u ** (eta - 1), zs)
        total = euler_sum(np.concatenate([[first], rest]))
        return 2.0 ** (-eta) / (4 * np.pi) * total

    def f(r):
        return kappa(r) * ((r + 2 * s) ** eta - abs(r - 2 * s) ** eta)

    edges = np.concatenate([[0.0], zs])
    edges = np.unique(np.append(edges, 2 * s))
    terms = panel_integral(f, edges, epsabs=1e-15, epsrel=1e-12, limit=400)
    total = euler_sum(terms)
    return 2.0 ** (-eta) / (16 * np.pi * eta * s) * total


def scaling_profile_check(eta, y, t, V: RadialKatoPotential, params: CorrectionParams):
    """Compare t^{eta/2} r^(1)(t, x0 + y/sqrt t) with gamma Xi_eta(|y|).

    y may be a scalar (displacement along the first axis) or a 3-vector.
    Returns dict with lhs, rhs, ratio and the relative MC error.
    """
    if abs(eta - V.eta) > 1e-12:
        raise ValueError("eta must match the potential")
    yv = np.array([y, 0.0, 0.0]) if np.ndim(y) == 0 else np.asarray(y, dtype=float)
    x = np.asarray(V.center) + yv / math.sqrt(t)
    if float(V.distance(x)) >= params.epsilon:
        raise ValueError("y / sqrt(t) must lie within epsilon of the centre")
    est = r0n_estimate(1, t, x, V, params)
    lhs = t ** (eta / 2) * est.mean
    rhs = V.gamma * xi_eta(eta, float(np.linalg.norm(yv)))
    ratio = lhs / rhs if rhs != 0 else (1.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio,
            "rel_stderr": est.rel_err if est.mean else 0.0,
            "low_confidence": est.low_confidence}


# --------------------------------------------------------------- bounds


def n_q(q):
    """N_q = 1 + floor(q / (2q - 3)), the number of orders exceeding O(t) for V in L^q."""
    if q <= 1.5:
        raise ValueError("N_q needs q > 3/2")
    fq = Fraction(q).limit_denominator(10**9)
    return 1 + math.floor(fq / (2 * fq - 3))


def rs_bound_check(n, V: RadialKatoPotential, epsilon, x0, x_end, samples=200_000,
                   seed=2024, kato=None) -> RSBound:
    """Monte-Carlo left side of the chained Kato bound against (n+1) ||V||_K(eps)^n.

    lhs = int_{all links < eps} prod |V(z_j)| / prod d_j * sum_j d_j dz_1..dz_n
    """
    n = int(n)
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3 at desk scale")
    if kato is None:
        kato = kato_norm(V, epsilon)[0]
    rhs = (n + 1) * kato**n
    if V.gamma == 0:
        return RSBound(0.0, 0.0, rhs)
    x0 = np.asarray(x0, dtype=float)
    x_end = np.asarray(x_end, dtype=float)
    if np.linalg.norm(_min_image(x_end - x0, V.L)) >= (n + 1) * epsilon:
        return RSBound(0.0, 0.0, rhs)

    sampler = _ChainSampler(V, epsilon, x0)
    y_end = _min_image(x_end - np.asarray(V.center, dtype=float), V.L)

    def weight(y, rc):
        d = _chain_geometry(y, sampler.y0, y_end, V.L)
        inside = np.all(d < epsilon, axis=1)
        val = np.prod(np.abs(V.radial(rc)), axis=1) / np.prod(d, axis=1) * d.sum(axis=1)
        return np.where(inside, val, 0.0)

    mean, se = _mc(weight, sampler, n, int(samples), seed)
    return RSBound(mean, se, rhs)


def variation_constant(V: RadialKatoPotential, eps, t_grid, x=None):
    """Smallest C5 with |r1(t) - r1(t')| <= C5 ||V||_K(eps) (sqrt t' - sqrt t)/sqrt t on the grid."""
    x = V.center if x is None else x
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    r = np.array([r1_quadrature(t, x, V, eps) for t in t_grid])
    kn = kato_norm(V, eps)[0]
    best = 0.0
    for i in range(len(t_grid)):
        for j in range(i + 1, len(t_grid)):
            mod = (math.sqrt(t_grid[j]) - math.sqrt(t_grid[i])) / math.sqrt(t_grid[i])
            best = max(best, abs(r[j] - r[i]) / (kn * mod))
    return best
