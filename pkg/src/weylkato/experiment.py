"""Config-driven experiments: spectra, Weyl residuals, remainder fits, reports.

Config files are flat TOML with dotted keys, e.g.

    schema = 1
    geometry.kind = "torus"
    geometry.L = 1.0
    geometry.lambda_basis = 2500
    potential.gamma = 1.0
    potential.eta = 0.5
    potential.center = [0.5, 0.5, 0.5]
    potential.r_cut = 0.4
    tgrid.t_min = 100.0
    output.dir = "out"

See DEFAULTS for every key.  Unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .cache import cached_eigensolve
from .correction import CorrectionParams, r0_series, weyl_term, xi_eta
from .kato import RadialKatoPotential
from .spectral import CubeSpec, TorusSpec, counting, pointwise_density

__all__ = [
    "ExperimentConfig",
    "ExperimentError",
    "FitResult",
    "DEFAULTS",
    "CSV_HEADER",
    "fmt",
    "load_config",
    "window_average",
    "fit_remainder_exponent",
    "run_experiment",
]

SCHEMA = 1
CSV_HEADER = ["t", "N", "e_x0", "weyl_free", "weyl_corrected", "resid_N", "resid_e"]
WINDOW = 1.2

DEFAULTS = {
    "schema": SCHEMA,
    "geometry.kind": "torus",
    "geometry.L": 1.0,
    "geometry.lambda_basis": 400.0,
    "geometry.a": 1.0,
    "geometry.m_max": 10,
    "potential.gamma": 0.0,
    "potential.eta": 0.5,
    "potential.center": None,
    "potential.r_cut": 0.4,
    "correction.epsilon": None,
    "correction.max_n": 1,
    "correction.mc_samples": 100_000,
    "correction.seed": 12345,
    "tgrid.t_min": None,
    "tgrid.t_max": None,
    "tgrid.n": 40,
    "tgrid.samples_per_window": 300,
    "probe.x0": None,
    "probe.far": None,
    "spectral.basis_tail": True,
    "spectral.use_cache": True,
    "output.dir": "weyl-report",
    "output.formats": ["csv", "json", "svg"],
    "acceptance.max_exponent_N": None,
    "acceptance.exponent_e": None,
    "acceptance.exponent_e_tol": 0.15,
    "acceptance.coefficient_tol": None,
    "acceptance.max_exponent_far": None,
    "acceptance.leading_ratio_tol": None,
}


class ExperimentError(RuntimeError):
    """Failure inside an experiment, tagged with the module it came from."""

    def __init__(self, module, err):
        super().__init__(f"[{module}] {type(err).__name__}: {err}")
        self.module = module


def fmt(v):
    """The single number format shared by report.csv and the plot annotations."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


# ------------------------------------------------------------------ config


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.values) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(DEFAULTS)
        merged.update(self.values)
        if merged["schema"] != SCHEMA:
            raise ValueError(f"unsupported schema {merged['schema']!r}; expected {SCHEMA}")
        if merged["geometry.kind"] not in ("torus", "cube"):
            raise ValueError("geometry.kind must be 'torus' or 'cube'")
        self.values = merged
        self.geometry  # validates
        self.potential
        self.correction_params

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_file(cls, path):
        with open(path, "rb") as fh:
            return cls(_flatten(tomllib.load(fh)))

    @property
    def geometry(self):
        v = self.values
        if v["geometry.kind"] == "torus":
            return TorusSpec(float(v["geometry.L"]), float(v["geometry.lambda_basis"]))
        return CubeSpec(float(v["geometry.a"]), int(v["geometry.m_max"]))

    def _default_center(self):
        g = self.geometry
        side = g.L if isinstance(g, TorusSpec) else g.a
        return (side / 2,) * 3

    @property
    def potential(self):
        v = self.values
        if float(v["potential.gamma"]) == 0.0:
            return None
        center = tuple(v["potential.center"] or self._default_center())
        L = self.geometry.L if isinstance(self.geometry, TorusSpec) else None
        return RadialKatoPotential(float(v["potential.gamma"]), float(v["potential.eta"]),
                                   center=center, r_cut=float(v["potential.r_cut"]), L=L)

    @property
    def correction_params(self):
        v = self.values
        eps = v["correction.epsilon"] or float(v["potential.r_cut"])
        return CorrectionParams(float(eps), int(v["correction.max_n"]),
                                int(v["correction.mc_samples"]), int(v["correction.seed"]))

    @property
    def x0(self):
        return np.asarray(self.values["probe.x0"] or self.values["potential.center"]
                          or self._default_center(), dtype=float)


def load_config(path):
    return ExperimentConfig.from_file(path)


# -------------------------------------------------------------------- fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    stderr: float
    r2: float
    n_points: int

    def to_dict(self):
        return {"slope": self.slope, "stderr": self.stderr, "r2": self.r2,
                "n_points": self.n_points}


def window_average(t, res, factor=WINDOW, starts=None, signed=False):
    """Mean of |res| (or res when signed) over geometric windows [s, factor s].

    t, res are dense samples.  Windows start at `starts` (default: every
    sample) and must fit inside the sampled range.  Returns (midpoints, means).
    """
    t = np.asarray(t, dtype=float)
    res = np.asarray(res, dtype=float)
    vals = res if signed else np.abs(res)
    starts = t if starts is None else np.asarray(starts, dtype=float)
    starts = starts[starts * factor <= t[-1] * (1 + 1e-12)]
    mids, means = [], []
    for s in starts:
        sel = (t >= s) & (t <= factor * s)
        if sel.sum() >= 2:
            mids.append(s * (1 + factor) / 2)
            means.append(vals[sel].mean())
    return np.array(mids), np.array(means)


def fit_remainder_exponent(t, residuals, window=None, noise_floor=None):
    """Least-squares slope of log|residual| against log t.

    With window (a factor such as 1.2) the residual is first averaged over
    geometric windows.  Points with |residual| at or below noise_floor
    (default 1e-12 of the largest) are dropped.  Needs >= 8 points.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if t.shape != r.shape:
        raise ValueError("t and residuals must have the same shape")
    if window is not None:
        t, r = window_average(t, r, window)
    r = np.abs(r)
    if r.size == 0 or not np.any(r > 0):
        raise ValueError("degenerate fit: residuals are all zero")
    floor = 1e-12 * r.max() if noise_floor is None else noise_floor
    keep = (r > floor) & (t > 0)
    if keep.sum() < 8:
        raise ValueError(f"degenerate fit: {int(keep.sum())} usable points, need >= 8")
    lr = stats.linregress(np.log(t[keep]), np.log(r[keep]))
    return FitResult(float(lr.slope), float(lr.stderr), float(lr.rvalue**2), int(keep.sum()))


# ------------------------------------------------------------------ runner


def _atomic_write(path: Path, data: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stage(module, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except Exception as err:  # surfaced with provenance
        raise ExperimentError(module, err) from err


def _dense_grid(t_min, t_max, per_window):
    n = int(math.ceil(math.log(t_max / t_min) / math.log(WINDOW) * per_window)) + 1
    return np.geomspace(t_min, t_max, max(n, 16))


def _pinned_coefficient(td, dev, p, starts):
    """Least-squares c in mean(dev) ~ c t^p over windows (signed means)."""
    mids, means = window_average(td, dev, WINDOW, starts=starts, signed=True)
    basis = mids**p
    return float(basis @ means / (basis @ basis))


@dataclass
class ExperimentResult:
    exit_code: int
    summary: dict
    paths: dict


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Build, solve (or load from cache), tabulate, fit and write the report files."""
    t_start = time.time()
    cfg = config
    out = Path(out_dir or cfg["output.dir"])
    geom, V = cfg.geometry, cfg.potential
    spec, hit = _stage("spectral", cached_eigensolve, geom, V, bool(cfg["spectral.use_cache"]))
    kind = spec.kind
    t_trust = spec.t_trust
    t_max = float(cfg["tgrid.t_max"] or t_trust)
    t_min = float(cfg["tgrid.t_min"] or t_max / 10)
    if not 0 < t_min < t_max <= t_trust * (1 + 1e-12):
        raise ExperimentError("experiment", ValueError(
            f"t-grid [{t_min:g}, {t_max:g}] must lie in (0, t_trust = {t_trust:g}]"))
    x0 = cfg.x0
    tail = bool(cfg["spectral.basis_tail"]) and kind == "torus" and V is not None
    vol = spec.volume
    params = cfg.correction_params

    tg = np.geomspace(t_min, t_max, int(cfg["tgrid.n"]))
    N = _stage("spectral", counting, spec, tg)
    e = _stage("spectral", pointwise_density, spec, tg, x0, tail=tail)
    free = weyl_term(tg)
    if V is not None:
        series = [_stage("correction", r0_series, t, x0, V, params) for t in tg]
        r0 = np.array([s.value for s in series])
    else:
        series, r0 = [], np.zeros_like(tg)
    corrected = free - 0.5 * r0 * tg**1.5
    resid_N = N - vol * free
    resid_e = e - corrected
    rows = [[float(a), int(b), float(c), float(d), float(f), float(g), float(h)]
            for a, b, c, d, f, g, h in zip(tg, N, e, free, corrected, resid_N, resid_e)]

    # window-averaged fits on dense samples
    td = _dense_grid(t_min, t_max, int(cfg["tgrid.samples_per_window"]))
    starts = tg[tg * WINDOW <= t_max * (1 + 1e-12)]
    dev_N = counting(spec, td) - vol * weyl_term(td)
    dev_e = pointwise_density(spec, td, x0, tail=tail) - weyl_term(td)

    def fit(res):
        mids, means = window_average(td, res, WINDOW, starts=starts)
        return _stage("experiment", fit_remainder_exponent, mids, means)

    fits = {"N": fit(dev_N).to_dict(), "e_x0": fit(dev_e).to_dict()}
    far = cfg["probe.far"]
    if far is not None:
        dev_far = pointwise_density(spec, td, np.asarray(far, float), tail=tail) - weyl_term(td)
        fits["e_far"] = fit(dev_far).to_dict()

    spectral_block = {
        "kind": kind,
        "hash": spec.hash(),
        "n_basis": int(spec.size),
        "t_trust": float(t_trust),
        "t_range": [t_min, t_max],
        "basis_tail": tail,
        "weyl_leading_ratio": float(counting(spec, t_max) / (vol * weyl_term(t_max))),
        "fits": fits,
    }
    if kind == "cube":
        spectral_block["note"] = ("O(t log t) bound: at desk scale the log factor is "
                                  "indistinguishable from a small exponent bump")

    correction_block = {"active": V is not None}
    if V is not None:
        p = (3 - V.eta) / 2
        xi0 = xi_eta(V.eta, 0.0)
        predicted = -0.5 * V.gamma * xi0
        coef = _pinned_coefficient(td, dev_e, p, starts)
        correction_block.update({
            "epsilon": params.epsilon, "max_n": params.max_n, "seed": params.seed,
            "mc_samples": params.mc_samples, "xi_eta_0": float(xi0),
            "predicted_exponent": p, "predicted_coefficient": float(predicted),
            "measured_coefficient": coef, "coefficient_ratio": coef / predicted,
            "r0_at_t_max": float(r0[-1]),
            "series_ratio_max": float(max(s.ratio for s in series)),
        })

    acc = _acceptance(cfg, spectral_block, correction_block)
    summary = {
        "schema": SCHEMA,
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
        "spectral": spectral_block,
        "correction": correction_block,
        "acceptance": acc,
        "metadata": {"version": __version__, "cache_hit": bool(hit),
                     "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                     "runtime_s": round(time.time() - t_start, 3)},
    }

    paths = {}
    formats = set(cfg["output.formats"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    csv_path = out / "report.csv"
    _atomic_write(csv_path, buf.getvalue())
    paths["csv"] = str(csv_path)
    if "json" in formats:
        p = out / "summary.json"
        _atomic_write(p, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        paths["json"] = str(p)
    if "svg" in formats:
        from .plotting import plot_report
        p = out / "plot.svg"
        _stage("plotting", plot_report, csv_path, p, title=f"{kind}, gamma = {fmt(cfg['potential.gamma'])}")
        paths["svg"] = str(p)
    if "csv" not in formats:
        csv_path.unlink()
        paths.pop("csv")
    code = 0 if all(a["passed"] for a in acc.values()) else 2
    return ExperimentResult(code, summary, paths)


def _acceptance(cfg, spectral_block, correction_block):
    """Optional assertions declared in the config's acceptance.* keys."""
    fits = spectral_block["fits"]
    acc = {}
    v = cfg["acceptance.max_exponent_N"]
    if v is not None:
        acc["exponent_N"] = {"value": fits["N"]["slope"], "max": v,
                             "passed": fits["N"]["slope"] <= v}
    v = cfg["acceptance.exponent_e"]
    if v is not None:
        tol = cfg["acceptance.exponent_e_tol"]
        s = fits["e_x0"]["slope"]
        acc["exponent_e"] = {"value": s, "target": v, "tol": tol, "passed": abs(s - v) <= tol}
    v = cfg["acceptance.coefficient_tol"]
    if v is not None and correction_block["active"]:
        r = correction_block["coefficient_ratio"]
        acc["coefficient"] = {"value": r, "tol": v, "passed": abs(r - 1) <= v}
    v = cfg["acceptance.max_exponent_far"]
    if v is not None and "e_far" in fits:
        s = fits["e_far"]["slope"]
        acc["exponent_far"] = {"value": s, "max": v, "passed": s <= v}
    v = cfg["acceptance.leading_ratio_tol"]
    if v is not None:
        r = spectral_block["weyl_leading_ratio"]
        acc["leading_ratio"] = {"value": r, "tol": v, "passed": abs(r - 1) <= v}
    for a in acc.values():
        a["passed"] = bool(a["passed"])
    return acc
