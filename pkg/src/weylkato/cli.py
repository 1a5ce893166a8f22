"""weyl-cli: every subcommand prints one JSON object on standard output.

Exit codes: 0 success, 1 error, 2 failed acceptance assertion (report),
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

EX_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _emit(obj):
    print(json.dumps(obj, default=_json_default, sort_keys=True))


def _vec3(s):
    try:
        v = [float(c) for c in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z but got {s!r}")
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {s!r}")
    return v


def _add_model(p):
    g = p.add_argument_group("geometry")
    g.add_argument("--cube", action="store_true", help="Dirichlet cube instead of the torus")
    g.add_argument("--L", type=float, default=1.0, help="torus side (default 1)")
    g.add_argument("--lambda-basis", type=float, default=400.0, help="torus basis cutoff |q|^2")
    g.add_argument("--a", type=float, default=1.0, help="cube side")
    g.add_argument("--m-max", type=int, default=10, help="cube basis radius in mode numbers")
    v = p.add_argument_group("potential")
    v.add_argument("--gamma", type=float, default=0.0)
    v.add_argument("--eta", type=float, default=0.5)
    v.add_argument("--center", type=_vec3, default=None, help="x,y,z (default: middle)")
    v.add_argument("--r-cut", type=float, default=0.4)
    p.add_argument("--no-cache", action="store_true", help="ignore the spectrum cache")


def _model(args, need_potential=False):
    from .kato import RadialKatoPotential
    from .spectral import CubeSpec, TorusSpec

    if args.cube:
        geom = CubeSpec(args.a, args.m_max)
        side, L = args.a, None
    else:
        geom = TorusSpec(args.L, args.lambda_basis)
        side, L = args.L, args.L
    center = tuple(args.center) if args.center else (side / 2,) * 3
    V = None
    if args.gamma != 0 or need_potential:
        V = RadialKatoPotential(args.gamma, args.eta, center=center, r_cut=args.r_cut, L=L)
    return geom, V, np.asarray(center)


def _spectrum(args):
    from .cache import cached_eigensolve

    geom, V, _ = _model(args)
    return cached_eigensolve(geom, V, use_cache=not args.no_cache)


def cmd_xi(args):
    from .correction import xi_eta, xi_eta_closed

    out = {"eta": args.eta, "s": args.s, "value": xi_eta(args.eta, args.s)}
    if args.s == 0:
        out["closed_form"] = float(xi_eta_closed(args.eta))
    return out


def cmd_kato_norm(args):
    from .kato import kato_norm

    _, V, _ = _model(args, need_potential=True)
    val, arg = kato_norm(V, args.r)
    return {"r": args.r, "value": float(val), "argmax": [float(c) for c in arg]}


def cmd_spectrum(args):
    spec, hit = _spectrum(args)
    return {"kind": spec.kind, "hash": spec.hash(), "n_basis": int(spec.size),
            "t_trust": float(spec.t_trust), "cache_hit": bool(hit),
            "lowest": [float(v) for v in spec.eigenvalues[:args.k]]}


def cmd_count(args):
    from .correction import weyl_term
    from .spectral import counting

    spec, _ = _spectrum(args)
    return {"t": args.t, "N": int(counting(spec, args.t)),
            "weyl_free": float(spec.volume * weyl_term(args.t))}


def cmd_pointwise(args):
    from .correction import weyl_term
    from .spectral import pointwise_density

    spec, _ = _spectrum(args)
    x = args.x if args.x is not None else _model(args)[2]
    tail = args.tail and spec.kind == "torus" and spec.potential is not None
    e = pointwise_density(spec, args.t, x, tail=tail)
    return {"t": args.t, "x": list(map(float, x)), "e": float(e),
            "weyl_free": float(weyl_term(args.t)), "basis_tail": bool(tail)}


def cmd_correction(args):
    from .correction import CorrectionParams, r0n_record

    _, V, center = _model(args, need_potential=True)
    x = args.x if args.x is not None else center
    params = CorrectionParams(args.epsilon or args.r_cut, max(args.n, 1), args.samples, args.seed)
    rec = r0n_record(args.n, args.t, x, V, params)
    rec["r0n"] = rec["mean"]
    rec["value"] = args.t**1.5 * rec["mean"]
    rec["value_stderr"] = args.t**1.5 * rec["stderr"]
    return rec


def cmd_tauber_check(args):
    from .tauberian import free_torus_tauber_inputs, tauber_conclusion_check

    return tauber_conclusion_check(*free_torus_tauber_inputs(args.L, args.t_max))


def cmd_report(args):
    from .experiment import ExperimentError, load_config, run_experiment

    cfg = load_config(args.config)
    res = run_experiment(cfg, out_dir=args.out)
    out = dict(res.summary)
    out["files"] = res.paths
    out["exit_code"] = res.exit_code
    return out, res.exit_code


def build_parser():
    p = _Parser(prog="weyl-cli", description="Pointwise Weyl-law laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("xi", help="limiting profile Xi_eta(s)")
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--s", type=float, default=0.0)
    s.set_defaults(func=cmd_xi)

    s = sub.add_parser("kato-norm", help="Kato norm of the radial potential at radius r")
    _add_model(s)
    s.add_argument("--r", type=float, required=True)
    s.set_defaults(func=cmd_kato_norm)

    s = sub.add_parser("spectrum", help="build and diagonalize (cached)")
    _add_model(s)
    s.add_argument("--k", type=int, default=10, help="number of eigenvalues to print")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("count", help="counting function N(t)")
    _add_model(s)
    s.add_argument("--t", type=float, required=True)
    s.set_defaults(func=cmd_count)

    s = sub.add_parser("pointwise", help="spectral function e(t, x)")
    _add_model(s)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--x", type=_vec3, default=None)
    s.add_argument("--tail", action="store_true", help="add the out-of-basis first-order tail")
    s.set_defaults(func=cmd_pointwise)

    s = sub.add_parser("correction", help="Monte-Carlo r^(n)(t, x)")
    _add_model(s)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--x", type=_vec3, default=None)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=12345)
    s.set_defaults(func=cmd_correction)

    s = sub.add_parser("tauber-check", help="Tauberian conclusion check on V = 0 torus data")
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--t-max", type=float, default=2e5)
    s.set_defaults(func=cmd_tauber_check)

    s = sub.add_parser("report", help="run an experiment from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        res = args.func(args)
    except Exception as err:
        print(json.dumps({"error": f"{type(err).__name__}: {err}"}), file=sys.stderr)
        return 1
    code = 0
    if isinstance(res, tuple):
        res, code = res
    _emit(res)
    return code


if __name__ == "__main__":
    sys.exit(main())
