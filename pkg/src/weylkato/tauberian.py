"""Laplace / Stieltjes transforms of sampled spectral functions and Tauberian checks.

Sampled functions are StepSamples: a grid starting at 0 with values read
either as a right-continuous step function or as a piecewise-linear
interpolant.  All transforms integrate panels exactly where possible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import betaincc

from .kernels import jackson_K

__all__ = [
    "StepSamples",
    "TauberParams",
    "DivergenceError",
    "stieltjes3",
    "stieltjes3_t32",
    "laplace_of_measure",
    "jackson_smooth",
    "step2_theta",
    "simplified_bound",
    "tauber_conclusion_check",
    "density_samples",
    "free_torus_density_samples",
    "UNIVERSAL_C",
    "free_torus_tauber_inputs",
    "fit_universal_c",
]

K_INTEGRAL = 8.0 * np.pi / 3.0

# Universal constant of the simplified Stieltjes-Tauberian bound, fitted
# once by fit_universal_c() on the V = 0 unit torus and frozen (rounded up).
UNIVERSAL_C = 0.15


class DivergenceError(ValueError):
    """A transform integral diverges for the requested tail behaviour."""


@dataclass(frozen=True)
class StepSamples:
    t: np.ndarray
    values: np.ndarray
    mode: str = "step"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("t and values must be 1-D arrays of equal nonzero length")
        if t[0] != 0.0:
            raise ValueError("the grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("the grid must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("grid and values must be finite")
        if self.mode not in ("step", "linear"):
            raise ValueError("mode must be 'step' or 'linear'")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def t_max(self):
        return float(self.t[-1])

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.mode == "linear":
            out = np.interp(u, self.t, self.values)
        else:
            idx = np.clip(np.searchsorted(self.t, u, side="right") - 1, 0, None)
            out = self.values[idx]
        out = np.where(u < 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def panels(self):
        """(a, b, alpha, slope) per panel with A = alpha + slope * u on [a, b)."""
        a, b = self.t[:-1], self.t[1:]
        if self.mode == "step":
            return a, b, self.values[:-1], np.zeros_like(a)
        slope = np.diff(self.values) / np.diff(self.t)
        return a, b, self.values[:-1] - slope * a, slope


@dataclass(frozen=True)
class TauberParams:
    b0_sup: float
    c_b0: float = 0.0
    c_b2: float = 0.0
    t0: float = 0.0
    delta: float = 1.0
    epsilon0: float = 1.0
    Lambda: float = 1.0
    C0: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be finite and nonnegative")
        if self.epsilon0 <= 0 or self.Lambda <= 0:
            raise ValueError("epsilon0 and Lambda must be positive")


# ------------------------------------------------------------ transforms


def _power_tail(lam, T, p, c):
    """c int_T^inf t^p (t + lam)^-3 dt via the incomplete beta function."""
    if p > 1.5:
        raise DivergenceError("tail exponent above 3/2")
    if p <= -1:
        raise ValueError("tail exponent must exceed -1")
    x = T / (T + lam)
    return c * lam ** (p - 2) * beta_fn(p + 1, 2 - p) * betaincc(p + 1, 2 - p, x)


def stieltjes3(A: StepSamples, lam, tail_exponent=None, tail_coeff=None):
    """int_0^inf A(t) (t + lam)^-3 dt.

    Panels on the grid are integrated exactly.  Beyond the last grid
    point A is continued as tail_coeff * t^tail_exponent (coefficient
    matched to A(t_max) when not given); without tail_exponent the
    integral stops at t_max.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr <= 0):
        raise ValueError("lambda must be positive")
    if tail_exponent is not None and tail_exponent > 1.5:
        raise DivergenceError("tail exponent above 3/2")
    a, b, alpha, slope = A.panels()
    out = np.empty_like(lam_arr)
    for i, lm in enumerate(lam_arr):
        # int (alpha + s t)(t+lam)^-3 = (alpha - s lam) [-1/(2(t+lam)^2)] + s [-1/(t+lam)]
        F2 = 0.5 / (a + lm) ** 2 - 0.5 / (b + lm) ** 2
        F1 = 1.0 / (a + lm) - 1.0 / (b + lm)
        val = np.sum((alpha - slope * lm) * F2 + slope * F1)
        if tail_exponent is not None:
            T = A.t_max
            c = tail_coeff
            if c is None:
                if T == 0:
                    raise ValueError("tail_coeff is required when the grid is a single point")
                c = A.values[-1] / T**tail_exponent
            val += _power_tail(lm, T, tail_exponent, c)
        out[i] = val
    return float(out[0]) if np.ndim(lam) == 0 else out


def stieltjes3_t32(B0: StepSamples, lam, extend=True):
    """int_0^inf B0(t) t^{3/2} (t + lam)^-3 dt, B0 held at its last value beyond the grid."""
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    a, b, alpha, slope = B0.panels()
    out = np.empty_like(lam_arr)
    for i, lm in enumerate(lam_arr):
        # substitute t = u^2: t^{3/2} dt = 2 u^4 du, smooth at 0
        def f(u, al, sl):
            t = u * u
            return 2 * u**4 * (al + sl * t) / (t + lm) ** 3
        val = 0.0
        for ak, bk, al, sl in zip(a, b, alpha, slope):
            if al == 0 and sl == 0:
                continue
            ua, ub = math.sqrt(ak), math.sqrt(bk)
            pts = [math.sqrt(lm)] if ua < math.sqrt(lm) < ub else None
            val += integrate.quad(f, ua, ub, args=(al, sl), points=pts,
                                  epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        if extend and B0.values[-1] != 0:
            val += _power_tail(lm, B0.t_max, 1.5, B0.values[-1])
        out[i] = val
    return float(out[0]) if np.ndim(lam) == 0 else out


def laplace_of_measure(A: StepSamples, s):
    """f(s) = int_0^inf e^{-us} dA(u), no atom at u = 0.

    Step mode sums the jumps.  Linear mode integrates A' panel by panel
    and continues the last slope beyond the grid analytically.
    """
    s = complex(s)
    if s.real <= 0:
        raise ValueError("Re s must be positive")
    t, v = A.t, A.values
    if A.mode == "step":
        jumps = np.diff(v)
        return complex(np.sum(jumps * np.exp(-s * t[1:])))
    slope = np.diff(v) / np.diff(t)
    val = np.sum(slope * (np.exp(-s * t[:-1]) - np.exp(-s * t[1:]))) / s
    if t.size > 1:
        val += slope[-1] * np.exp(-s * t[-1]) / s
    return complex(val)


# ---------------------------------------------------------- Jackson smoothing

_Y_TABLE = 2000.0


@lru_cache(maxsize=1)
def _k_moment_tables():
    """Cumulative int_0^y K and int_0^y w K(w) dw at integer y up to _Y_TABLE."""
    x, w = np.polynomial.legendre.leggauss(16)
    n = int(_Y_TABLE)
    lo = np.arange(n, dtype=float)
    nodes = lo[:, None] + 0.5 * (x + 1)
    k = jackson_K(nodes)
    c0 = np.concatenate([[0.0], np.cumsum(0.5 * (k @ w))])
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * ((k * nodes) @ w))])
    return c0, c1


def _k_cumulative(y, moment):
    """int_0^y w^moment K(w) dw for moment 0 (odd in y) or 1 (even in y)."""
    y = np.asarray(y, dtype=float)
    ay = np.abs(y)
    c0, c1 = _k_moment_tables()
    tab = c0 if moment == 0 else c1
    inside = ay < _Y_TABLE
    yi = np.where(inside, ay, 0.0)
    k = np.floor(yi).astype(int)
    x, w = np.polynomial.legendre.leggauss(16)
    frac = yi - k
    nodes = k[..., None] + 0.5 * frac[..., None] * (x + 1)
    part = 0.5 * frac * np.sum(jackson_K(nodes) * nodes**moment * w, axis=-1)
    val_in = tab[k] + part
    # beyond the table: int_y^inf K ~ 32/y^3, int_y^inf w K ~ 48/y^2
    Y = _Y_TABLE
    if moment == 0:
        total = tab[-1] + 32.0 / Y**3
        val_out = total - 32.0 / np.maximum(ay, Y) ** 3
        return np.sign(y) * np.where(inside, val_in, val_out)
    total = tab[-1] + 48.0 / Y**2
    val_out = total - 48.0 / np.maximum(ay, Y) ** 2
    return np.where(inside, val_in, val_out)


def jackson_smooth(A: StepSamples, T, v):
    """int_0^inf T K(T (v - u)) A(u) du; A is held at its last value beyond the grid."""
    if T <= 0:
        raise ValueError("T must be positive")
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    a, b, alpha, slope = A.panels()
    out = np.empty_like(v_arr)
    for i, vv in enumerate(v_arr):
        ya, yb = T * (vv - a), T * (vv - b)
        # u = v - y/T on the panel; the y-range runs from yb up to ya
        d0 = _k_cumulative(ya, 0) - _k_cumulative(yb, 0)
        d1 = _k_cumulative(ya, 1) - _k_cumulative(yb, 1)
        val = np.sum((alpha + slope * vv) * d0 - slope / T * d1)
        y_end = T * (vv - A.t_max)
        val += A.values[-1] * (_k_cumulative(y_end, 0) + K_INTEGRAL / 2)
        out[i] = val
    return float(out[0]) if np.ndim(v) == 0 else out


def step2_theta(phi, a, T):
    """Theta = (8 pi / 3)|a| + (4/3) int_{-T}^{T} |phi(i t)| dt.

    phi(s) = (f(s) - a)/s is the Laplace transform of A - a; Theta bounds
    the Jackson-smoothed A - a at every v.
    """
    val = integrate.quad(lambda t: abs(phi(1j * t)), -T, T, limit=400, epsabs=1e-13)[0]
    return K_INTEGRAL * abs(a) + 4.0 / 3.0 * val


# --------------------------------------------------------- conclusion check


def simplified_bound(params: TauberParams, b1_0, universal_c=UNIVERSAL_C):
    """The constant of the O(t) conclusion for Lambda = C1 / eps0^2, delta = 1/eps0, t0 = 0."""
    e0 = params.epsilon0
    C1 = params.Lambda * e0**2
    pref = 1.0 + C1**2 * math.exp(math.sqrt(C1) / 2)
    core = params.b0_sup + e0**3 * abs(b1_0) + e0 * params.c_b2 + e0 * params.C0
    return universal_c * (pref * core + e0 * params.c_b0)


def _combined_grid(B0, B1, B2):
    grid = np.unique(np.concatenate([B0.t, B1.t, B2.t]))
    return grid[grid <= min(B0.t_max, B1.t_max, B2.t_max)]


def _total(B0, B1, B2, u, left=False):
    """A(u) = B0 u^{3/2} + B1 + B2; left limits when left=True."""
    if left:
        uu = np.nextafter(u, -np.inf)
        return B0(uu) * np.clip(uu, 0, None) ** 1.5 + B1(uu) + B2(uu)
    return B0(u) * u**1.5 + B1(u) + B2(u)


def tauber_conclusion_check(B0: StepSamples, B1: StepSamples, B2: StepSamples,
                            params: TauberParams, lam_grid=None, universal_c=UNIVERSAL_C):
    """Check the hypotheses and the O(t) conclusion of the Stieltjes-Tauberian theorem.

    Hypothesis: lam |S(lam)| e^{eps0 sqrt lam} <= C0 on a lambda-grid >= Lambda,
    S the third-order Stieltjes transform of A = B0 t^{3/2} + B1 + B2 cut
    at the end of the common grid.  Conclusion: sup |A(t)| / (t + eps0^-2)
    against B / eps0.  Returns a dict; failed hypotheses are listed, never raised.
    """
    failures = []
    if np.any(np.diff(B1.values) < 0):
        failures.append("B1 not nondecreasing")
    grid = _combined_grid(B0, B1, B2)
    if np.max(np.abs(B0(grid))) > params.b0_sup * (1 + 1e-12):
        failures.append("sup |B0| exceeds b0_sup")
    c_b2 = float(np.max(np.abs(B2(grid)) / (params.t0 + grid + 1e-300)))
    if c_b2 > params.c_b2 * (1 + 1e-12) + 1e-300 and np.any(B2.values != 0):
        failures.append("B2 growth exceeds c_b2")
    # almost monotonicity of B0 on the u = sqrt t scale
    u = np.sqrt(grid)
    b0u = B0(grid)
    c_b0 = 0.0
    j = 0
    for i in range(u.size):
        while u[j] < u[i] - params.delta:
            j += 1
        drop = u[j:i + 1] * (b0u[i] - b0u[j:i + 1])
        c_b0 = max(c_b0, float(-drop.min()) if drop.size else 0.0)
    if c_b0 > params.c_b0 * (1 + 1e-12) + 1e-14:
        failures.append("B0 almost-monotonicity constant exceeds c_b0")

    if lam_grid is None:
        lam_grid = params.Lambda * np.geomspace(1.0, 49.0, 25)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if np.any(lam_grid < params.Lambda):
        raise ValueError("lambda grid must lie above Lambda")
    T = grid[-1]
    B0c = StepSamples(B0.t[B0.t <= T], B0.values[B0.t <= T], B0.mode)
    S = (stieltjes3_t32(B0c, lam_grid, extend=False) + _cut(B0, T, lam_grid)
         + stieltjes3(_clip(B1, T), lam_grid) + stieltjes3(_clip(B2, T), lam_grid))
    c0_req = float(np.max(lam_grid * np.abs(S) * np.exp(params.epsilon0 * np.sqrt(lam_grid))))
    if c0_req > params.C0:
        failures.append("Stieltjes transform decay: required C0 exceeds declared C0")

    vals = np.abs(np.concatenate([_total(B0, B1, B2, grid), _total(B0, B1, B2, grid[1:], left=True)]))
    tt = np.concatenate([grid, grid[1:]])
    sup_ratio = float(np.max(vals / (tt + params.epsilon0**-2)))
    bound = simplified_bound(params, B1(0.0), universal_c) / params.epsilon0
    bound = float(bound)
    conclusion = {"sup_ratio": sup_ratio, "bound": bound, "ratio": sup_ratio / bound,
                  "holds": bool(sup_ratio <= bound)}
    return {
        "hypothesis": {"holds": not failures, "failed": failures,
                       "C0_required": c0_req, "C0_declared": params.C0,
                       "c_b0_measured": c_b0, "lambda_range": [float(lam_grid[0]), float(lam_grid[-1])]},
        "conclusion": conclusion,
        "passed": bool(not failures and conclusion["holds"]),
        "universal_c": universal_c,
    }


def _clip(A: StepSamples, T):
    """A restricted to [0, T] with T appended as the last grid point."""
    keep = A.t < T
    t = np.append(A.t[keep], T)
    return StepSamples(t, np.append(A.values[keep], A(T)), A.mode)


def _cut(B0, T, lam):
    """Correction when B0's own grid ends before T: B0 held constant on the gap."""
    if B0.t_max >= T:
        return 0.0
    c = B0.values[-1]
    return c * (_power_tail(lam, B0.t_max, 1.5, 1.0) - _power_tail(lam, T, 1.5, 1.0))


# ----------------------------------------------------------- sample builders


def density_samples(spec, x, t_max=None, tail=False):
    """Pointwise density e(t, x) of a Spectrum as right-continuous StepSamples."""
    from .spectral import mode_density, basis_tail_density

    t_max = spec.t_trust if t_max is None else t_max
    if spec.eigenvalues[0] < 0:
        raise ValueError("the spectrum must be nonnegative")
    ev = spec.eigenvalues
    dens = mode_density(spec, x)
    keep = ev <= t_max
    lev, idx = np.unique(ev[keep], return_inverse=True)
    cum = np.cumsum(np.bincount(idx, weights=dens[keep], minlength=lev.size))
    at_zero = lev[0] == 0.0
    t = np.concatenate([[0.0], lev[1:] if at_zero else lev])
    vals = cum if at_zero else np.concatenate([[0.0], cum])
    if t[-1] < t_max:
        t = np.append(t, t_max)
        vals = np.append(vals, vals[-1])
    if tail:
        vals = vals + basis_tail_density(spec, t, x)
    return StepSamples(t, vals, "step")


def free_torus_density_samples(L=1.0, t_max=1e5):
    """V = 0 torus: e(t, x) = N(t) / L^3 on its exact jump grid up to t_max."""
    R2 = int(t_max * L * L / (4 * np.pi**2))
    r = np.arange(-int(math.isqrt(R2)) - 1, int(math.isqrt(R2)) + 2)
    m2 = np.add.outer(np.add.outer(r * r, r * r), r * r).ravel()
    counts = np.bincount(m2[m2 <= R2], minlength=R2 + 1)
    n = np.nonzero(counts)[0]
    t = 4 * np.pi**2 * n / L**2
    vals = np.cumsum(counts[n]) / L**3
    if t[-1] < t_max:
        t = np.append(t, t_max)
        vals = np.append(vals, vals[-1])
    return StepSamples(t, vals, "step")


def free_torus_tauber_inputs(L=1.0, t_max=2e5):
    """(B0, B1, B2, params) for the V = 0 torus: B0 = -1/(6 pi^2), B1 = N(t)/L^3, B2 = 0."""
    B1 = free_torus_density_samples(L, t_max)
    b0 = -1.0 / (6 * np.pi**2)
    B0 = StepSamples([0.0, B1.t_max], [b0, b0], "linear")
    B2 = StepSamples([0.0, B1.t_max], [0.0, 0.0], "linear")
    params = TauberParams(b0_sup=abs(b0), epsilon0=0.9 * L, Lambda=1.0 / L**2, C0=2.0 / L,
                          delta=1.0 / (0.9 * L))
    return B0, B1, B2, params


def fit_universal_c(L=1.0, t_max=2e5):
    """Smallest C making the conclusion hold on the V = 0 torus."""
    rep = tauber_conclusion_check(*free_torus_tauber_inputs(L, t_max), universal_c=1.0)
    return rep["conclusion"]["ratio"]
