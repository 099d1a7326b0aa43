"""modelgeom command line.

Exit codes: 0 determined / certified, 1 determinate negative, 2 usage error,
10 inconclusive numerics.
"""

from __future__ import annotations

import argparse
import configparser
import sys

from . import anisotropic, criteria, diffusion, minimal, serialize
from .quad import QuadratureConfig
from .warp import ModelManifold, WarpingError, make_family

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 10

FAMILY_CHOICES = ["euclidean", "hyperbolic", "spherical", "spliced-exp-power", "tabulated"]
FAMILY_PARAMS = {"euclidean": (), "hyperbolic": ("k",), "spherical": ("k",),
                 "spliced-exp-power": ("a", "p", "t0"), "tabulated": ("file",)}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


FMT = argparse.ArgumentDefaultsHelpFormatter


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=d(None), metavar="PATH",
                   help="INI file whose keys mirror the long flags; flags override it")
    g.add_argument("--output", default=d(None), metavar="PATH", help="write output here instead of stdout")
    g.add_argument("--format", default=d("json"), choices=["json", "csv", "table"], help="output format")
    g.add_argument("--seed", default=d(0), type=int, metavar="U64", help="master seed for simulations")
    g.add_argument("--quad-tol", default=d(1e-8), type=float, help="relative tolerance of the convergence classifier")
    g.add_argument("--quad-jmax", default=d(40), type=int, help="number of cutoff doublings R_j = R0 2^j")


def _model_options(p: argparse.ArgumentParser, dim_default: int | None = None) -> None:
    g = p.add_argument_group("model")
    g.add_argument("-m", "--dim", type=int, default=dim_default, required=dim_default is None,
                   help="dimension m >= 2")
    g.add_argument("--family", default="euclidean", choices=FAMILY_CHOICES, help="warping function family")
    _param_options(g)


def _param_options(g) -> None:
    g.add_argument("--k", type=float, default=1.0, help="curvature scale (hyperbolic, spherical)")
    g.add_argument("--a", type=float, default=1.0, help="spliced-exp-power: a in exp(a t^p)")
    g.add_argument("--p", type=float, default=3.0, help="spliced-exp-power: exponent p > 1")
    g.add_argument("--t0", type=float, default=1.0, help="spliced-exp-power: splice point")
    g.add_argument("--file", default=None, help="tabulated: CSV with rows t,sigma[,dsigma]")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="modelgeom", formatter_class=FMT,
                    description="Green functions, exit times and L1-Liouville tests on rotationally symmetric models")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("classify", formatter_class=FMT,
                       help="parabolicity, stochastic completeness and L1-Liouville verdicts")
    _model_options(p)
    _global_options(p, suppress=True)

    p = sub.add_parser("exit-time", formatter_class=FMT, help="mean exit time F_R(r) or the global F(r)")
    _model_options(p)
    p.add_argument("--r", type=float, default=0.0, help="starting distance from the pole")
    p.add_argument("--R", type=float, default=None, help="ball radius (omit with --global)")
    p.add_argument("--global", dest="global_", action="store_true", help="global mean exit time F(r)")
    _global_options(p, suppress=True)

    p = sub.add_parser("simulate", formatter_class=FMT, help="Monte Carlo for the radial diffusion")
    _model_options(p)
    s = diffusion.SimulationConfig()
    p.add_argument("--r0", type=float, default=0.0, help="starting radius")
    p.add_argument("--R", type=float, default=1.0, help="ball radius for exit times")
    p.add_argument("--paths", type=int, default=s.n_paths, help="number of paths")
    p.add_argument("--h", type=float, default=s.h, help="Euler-Maruyama step")
    p.add_argument("--T", type=float, default=s.horizon, help="time horizon (censoring / explosion window)")
    p.add_argument("--cap", type=float, default=s.cap_radius, help="explosion proxy radius")
    p.add_argument("--eps", type=float, default=s.pole_guard, help="pole guard")
    p.add_argument("--explosion", action="store_true", help="report the fraction reaching --cap before --T")
    p.add_argument("--check", action="store_true",
                   help="compare the mean with the quadrature value; exit 1 outside 3 SE + 1%%")
    p.add_argument("--trace", default=None, metavar="PATH", help="dump per-step traces as CSV")
    p.add_argument("--trace-paths", type=int, default=1, help="number of traced paths")
    _global_options(p, suppress=True)

    p = sub.add_parser("example", formatter_class=FMT, help="the one-end and two-end constructions")
    ex = p.add_subparsers(dest="which", required=True, parser_class=Parser)
    q = ex.add_parser("one-end", formatter_class=FMT, help="conformal example certificates (m = 2)")
    _model_options(q, dim_default=2)
    q.add_argument("--convention", default="literal", choices=["literal", "consistent"],
                   help="volume element lambda dv (literal) or lambda^2 dv (consistent)")
    q.add_argument("--n-r", type=int, default=200, help="radial grid size of the certificate")
    q.add_argument("--n-theta", type=int, default=200, help="angular grid size of the certificate")
    q.add_argument("--sector-csv", default=None, metavar="PATH",
                   help="write the sector-mass table (R_cut, mass, lower_bound) here")
    _global_options(q, suppress=True)
    q = ex.add_parser("two-end", formatter_class=FMT, help="hypotheses of the two-end construction")
    q.add_argument("--sigma1", default="euclidean",
                   help="end with infinite area: family, or family:key=value,... (tabulated:PATH)")
    q.add_argument("--sigma2", default="spliced-exp-power",
                   help="stochastically incomplete end, same syntax")
    _param_options(q)
    _global_options(q, suppress=True)

    p = sub.add_parser("minimal", formatter_class=FMT,
                       help="hypotheses of the exit-time comparison for minimal submanifolds")
    p.add_argument("--G", required=True,
                   help="curvature bound: const:C | poly:c0,c1,... (in t^2) | poly-sq:Ct^K (G = y^2 + y', y = C t^K)")
    p.add_argument("-m", "--dim", type=int, default=2, help="submanifold dimension")
    p.add_argument("--tmax", type=float, default=20.0, help="IVP range")
    p.add_argument("--h", type=float, default=1e-3, help="RK4 step")
    p.add_argument("--samples", type=int, default=2000, help="sample points of the sigma condition scan")
    _global_options(p, suppress=True)
    return parser


# ---------------------------------------------------------------------------

def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    cp.optionxform = str  # --r and --R are different flags
    try:
        with open(args.config, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc}") from None
    known = set(vars(args))
    defaults = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            if dest == "global":
                dest = "global_"
            if dest not in known or dest in ("command", "which", "config"):
                raise UsageError(f"unknown config key {key!r} in section [{section}]")
            defaults[dest] = raw
    # re-parse with config values as flag text placed before the user's own
    # flags of the same level, so explicit flags win
    front: list[str] = []
    extra: list[str] = []
    for dest, raw in defaults.items():
        flag = _flag_for(parser, args, dest)
        if flag is None:
            raise UsageError(f"unknown config key {dest!r}")
        target = front if dest in GLOBAL_DESTS else extra
        if isinstance(getattr(args, dest), bool):
            if raw.strip().lower() in ("1", "true", "yes", "on"):
                target.append(flag)
        else:
            target += [f"{flag}={raw}"]
    out = list(argv)
    pos = 0
    for word in _command_path(args):
        pos = out.index(word, pos) + 1
    return parser.parse_args(front + out[:pos] + extra + out[pos:])


GLOBAL_DESTS = {"output", "format", "seed", "quad_tol", "quad_jmax"}


def _command_path(args) -> list[str]:
    head = [args.command]
    if args.command == "example":
        head.append(args.which)
    return head


def _flag_for(parser, args, dest: str) -> str | None:
    sub = parser
    for word in _command_path(args):
        action = next(a for a in sub._actions if isinstance(a, argparse._SubParsersAction))
        sub = action.choices[word]
    for a in sub._actions:
        if a.dest == dest and a.option_strings:
            longs = [o for o in a.option_strings if o.startswith("--")]
            return longs[0] if longs else a.option_strings[0]
    return None


def _quad_cfg(args) -> QuadratureConfig:
    try:
        return QuadratureConfig(rel_tol=args.quad_tol, j_max=args.quad_jmax)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _warp_from_args(args, family: str | None = None):
    fam = family or args.family
    params = {name: getattr(args, name) for name in FAMILY_PARAMS[fam]}
    if fam == "tabulated" and not params.get("file"):
        raise UsageError("tabulated family needs --file")
    try:
        return make_family(fam, **params)
    except (WarpingError, OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _warp_from_text(text: str, args):
    name, _, rest = text.partition(":")
    if name not in FAMILY_PARAMS:
        raise UsageError(f"unknown family {name!r}")
    if name == "tabulated":
        if not rest:
            raise UsageError("use tabulated:PATH")
        ns = argparse.Namespace(**{**vars(args), "file": rest})
        return _warp_from_args(ns, name)
    ns = argparse.Namespace(**vars(args))
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if key not in FAMILY_PARAMS[name]:
                raise UsageError(f"unknown parameter {key!r} for {name}")
            try:
                setattr(ns, key, float(val))
            except ValueError:
                raise UsageError(f"bad value for {key}: {val!r}") from None
    return _warp_from_args(ns, name)


def _model(args) -> ModelManifold:
    try:
        return ModelManifold(args.dim, _warp_from_args(args))
    except WarpingError as exc:
        raise UsageError(str(exc)) from None


def _emit(args, payload: dict, rows: list[dict] | None = None) -> None:
    if args.format == "json":
        text = serialize.dumps(payload)
    elif args.format == "table":
        text = serialize.table(payload)
    else:
        text = serialize.csv_text(rows if rows is not None else [payload])
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    rep = criteria.classification_report(_model(args), _quad_cfg(args))
    _emit(args, rep.to_dict())
    return EXIT_OK if rep.determined else EXIT_INCONCLUSIVE


def cmd_exit_time(args) -> int:
    mm = _model(args)
    if args.global_:
        if args.R is not None:
            raise UsageError("--global and --R are exclusive")
        if args.r < 0:
            raise UsageError("--r must be >= 0")
        v = criteria.global_exit_time(mm, args.r, _quad_cfg(args))
        payload = {"model": mm.spec(), "r": args.r, "F": v.to_dict()}
        if v.convergent:
            payload["conclusion"] = "NOT L1-Liouville (global mean exit time finite)"
        elif v.divergent:
            payload["conclusion"] = "L1-Liouville (global mean exit time infinite)"
        else:
            payload["conclusion"] = "unknown"
        _emit(args, payload)
        return EXIT_INCONCLUSIVE if v.inconclusive else EXIT_OK
    if args.R is None:
        raise UsageError("give --R or --global")
    if not (0 <= args.r <= args.R):
        raise UsageError(f"need 0 <= r <= R, got r={args.r}, R={args.R}")
    if args.R > mm.warp.domain_end:
        raise UsageError(f"R beyond the warp domain ({mm.warp.domain_end})")
    val = criteria.exit_time_ball(mm, args.r, args.R)
    _emit(args, {"model": mm.spec(), "r": args.r, "R": args.R, "F_R": val})
    return EXIT_OK


def _sim_cfg(args) -> diffusion.SimulationConfig:
    try:
        return diffusion.SimulationConfig(h=args.h, n_paths=args.paths, master_seed=args.seed,
                                          cap_radius=args.cap, horizon=args.T, pole_guard=args.eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    mm = _model(args)
    cfg = _sim_cfg(args)
    try:
        if args.explosion:
            if args.check:
                raise UsageError("--check applies to exit times, not --explosion")
            res = diffusion.explosion_probe(mm, args.r0, cfg)
            _emit(args, res.to_dict())
            level = args.cap
        else:
            st = diffusion.simulate_exit(mm, args.r0, args.R, cfg)
            payload = st.to_dict()
            code = EXIT_OK
            if args.check:
                ref = criteria.exit_time_ball(mm, args.r0, args.R)
                band = 3 * st.se + 0.01 * ref
                ok = st.n_exited > 0 and abs(st.mean - ref) <= band
                payload["check"] = {"reference": ref, "band": band, "pass": bool(ok)}
                code = EXIT_OK if ok else EXIT_NEGATIVE
            _emit(args, payload)
            level = args.R
        if args.trace:
            traces = diffusion.trace_paths(mm, args.r0, level, cfg, args.trace_paths)
            diffusion.write_trace_csv(traces, args.trace)
    except diffusion.SimulationError as exc:
        raise UsageError(str(exc)) from None
    return EXIT_OK if args.explosion else code


def cmd_example_one_end(args) -> int:
    if args.dim != 2:
        raise UsageError("the one-end example is 2-dimensional")
    mm = _model(args)
    cfg = _quad_cfg(args)
    try:
        ex = anisotropic.ConformalExample(mm, args.convention, cfg)
    except anisotropic.ExampleError as exc:
        raise UsageError(str(exc)) from None
    cert = anisotropic.max_principle_check(ex, args.n_r, args.n_theta)
    masses = anisotropic.sector_mass_table(ex)
    verdict = anisotropic.sector_mass_verdict(ex)
    rows = [{"R_cut": s.R_cut, "mass": s.mass, "lower_bound": s.lower_bound} for s in masses]
    payload = {
        "certificate": cert.to_dict(),
        "certificate_pass": cert.passed,
        "sector_mass": [{**r, "lower_bound_holds": s.holds} for r, s in zip(rows, masses)],
        "sector_mass_verdict": verdict.to_dict(),
    }
    if args.sector_csv:
        with open(args.sector_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(serialize.csv_text(rows))
    _emit(args, payload, rows)
    if verdict.inconclusive:
        return EXIT_INCONCLUSIVE
    return EXIT_OK if (cert.passed and verdict.divergent) else EXIT_NEGATIVE


def cmd_example_two_end(args) -> int:
    w1 = _warp_from_text(args.sigma1, args)
    w2 = _warp_from_text(args.sigma2, args)
    rep = anisotropic.verify_two_end_hypotheses(w1, w2, _quad_cfg(args))
    _emit(args, rep.to_dict())
    h = rep.holds
    return EXIT_INCONCLUSIVE if h is None else EXIT_OK if h else EXIT_NEGATIVE


def cmd_minimal(args) -> int:
    try:
        G = minimal.CurvatureProfile.parse(args.G)
        G(1.0)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if args.dim < 2:
        raise UsageError("dimension must be >= 2")
    if not (args.tmax > 0 and args.h > 0):
        raise UsageError("--tmax and --h must be positive")
    try:
        rep = minimal.minimal_report(G, args.dim, args.tmax, args.h, _quad_cfg(args), args.samples)
    except minimal.HypothesisError as exc:
        raise UsageError(str(exc)) from None
    _emit(args, rep.to_dict())
    if rep.all_pass:
        return EXIT_OK
    return EXIT_INCONCLUSIVE if rep.inconclusive else EXIT_NEGATIVE


COMMANDS = {"classify": cmd_classify, "exit-time": cmd_exit_time, "simulate": cmd_simulate,
            "minimal": cmd_minimal}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command == "example":
            fn = cmd_example_one_end if args.which == "one-end" else cmd_example_two_end
        else:
            fn = COMMANDS[args.command]
        return fn(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
