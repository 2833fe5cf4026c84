"""Command-line entry point.

Every subcommand accepts --config FILE, a plain key = value file read with
configparser; keys in [common] and in the section named after the
subcommand are defaults, and flags on the command line win. Each artifact
starts with the full run configuration so a run can be repeated from its
output alone.

Exit codes: 0 success, 1 a certificate failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import difflib
import json
import math
import sys

import numpy as np

from . import __version__

EXIT_OK, EXIT_CERT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _triple(s):
    try:
        v = [float(t) for t in str(s).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {s!r}") from None
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {s!r}")
    return v


def _int_triple(s):
    v = _triple(s)
    if any(t != int(t) for t in v):
        raise argparse.ArgumentTypeError(f"expected integers, got {s!r}")
    return [int(t) for t in v]


def _range(s):
    lo, _, hi = str(s).partition(":")
    try:
        return [int(lo), int(hi)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {s!r}") from None


def _fraction(s):
    s = str(s)
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


# -- artifacts -------------------------------------------------------------------


def run_config(args) -> dict:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "func", "config")}
    return {"subcommand": args.command, "parameters": params, "version": __version__}


def write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"{type(v).__name__} is not serializable")


def csv_header(cfg):
    return "# run_config: " + json.dumps(cfg, sort_keys=True, default=_plain) + "\n"


def read_points(path):
    """CSV with columns x,y,z (header required); lines starting with # are skipped."""
    rows = []
    with open(path) as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None or not {"x", "y", "z"} <= set(reader.fieldnames):
            raise UsageError(f"{path}: needs a header with columns x,y,z")
        for r in reader:
            rows.append([float(r["x"]), float(r["y"]), float(r["z"])])
    return np.array(rows, dtype=float).reshape(-1, 3)


# -- subcommands -----------------------------------------------------------------


def cmd_metric(args):
    from . import metric

    kind = metric.MetricKind.parse(args.kind)
    if kind is metric.MetricKind.WORD:
        table = metric.word_ball(args.R)
        try:
            d = metric.distance(args.origin, args.to, kind, table=table)
        except KeyError as e:
            raise UsageError(str(e)) from None
    else:
        d = metric.distance(np.array(args.origin), np.array(args.to), kind)
    d = int(d) if kind is metric.MetricKind.WORD else float(d)
    if args.out:
        write_json(args.out, {"run_config": run_config(args), "distance": d, "kind": kind.value})
    print(d if isinstance(d, int) else repr(d))
    return EXIT_OK


def cmd_phi0_verify(args):
    from .oscillator import ImmersionFailure, build_phi0

    try:
        phi = build_phi0(grid_n=args.grid_n, refine_n=args.refine_n)
    except ImmersionFailure as e:
        write_json(args.out, {"run_config": run_config(args), "passed": False, "error": str(e)})
        return EXIT_CERT
    cert = dict(phi.certificate)
    change = cert.get("c0_relative_change")
    passed = cert["automorphy_residual"] <= args.automorphy_tol and cert["c0"] > 0
    if change is not None:
        passed = passed and change <= args.c0_stability
    write_json(args.out, {"run_config": run_config(args), "passed": bool(passed), "certificate": cert})
    return EXIT_OK if passed else EXIT_CERT


def cmd_lp_test(args):
    from .fields import AnalyticField, GridSpec
    from .mollify import MollifierFamily, dyadic_ladder

    spec = GridSpec.box(args.h, args.half_xy, args.half_z)
    fam = MollifierFamily(boundary=args.boundary, lines=args.lines)

    def fn(q):
        x, y, z = q[:, 0], q[:, 1], q[:, 2]
        return np.stack([np.sin(2 * np.pi * x) * np.cos(np.pi * y), np.cos(2 * np.pi * (z + x * y))], axis=-1)

    f = AnalyticField(fn, 2).sample(spec)
    ladder = dyadic_ladder(args.N0, args.Nmax)
    low0 = fam.lowpass(f, args.N0)
    total = low0
    for N in ladder:
        total = total + fam.band(f, N)
    top = fam.lowpass(f, args.Nmax)
    ok = total.valid & top.valid
    telescoping = float(np.max(np.abs(total.values - top.values)[ok])) if ok.any() else float("nan")
    errors = {}
    for N in [args.N0] + ladder:
        lp = fam.lowpass(f, N)
        errors[f"{N:g}"] = float(np.max(np.abs(lp.values - f.values)[lp.valid]))
    mass = fam.mass()
    passed = abs(mass - 1.0) <= 1e-6 and telescoping <= 1e-12
    write_json(args.out, {
        "run_config": run_config(args),
        "passed": bool(passed),
        "kernel_mass": mass,
        "telescoping_residual": telescoping,
        "lowpass_error_by_N": errors,
        "grid": spec.to_dict(),
    })
    return EXIT_OK if passed else EXIT_CERT


def cmd_perturb_solve(args):
    from .embedding import BoundedConfig, base_component, solve_scale
    from .fields import read_grid_field, write_grid_field
    from .nashmoser import SolverAbort, SolverSchedule, solve

    if args.tilde and args.psi:
        tilde, _ = read_grid_field(args.tilde)
        psi, _ = read_grid_field(args.psi)
        sched = SolverSchedule(N0=args.N0, Nmax=args.Nmax, sweeps=args.sweeps, tol=args.tol, M=args.M, A=args.A)
        try:
            phi, rep = solve(tilde, psi, 0, sched, halo=tuple(args.halo) if args.halo else None)
        except SolverAbort as e:
            write_json(args.report, {"run_config": run_config(args), "passed": False, "error": str(e),
                                     "residual_history": e.history})
            return EXIT_CERT
    elif args.tilde or args.psi:
        raise UsageError("--tilde and --psi go together; omit both to run the built-in fixture")
    else:
        cfg = BoundedConfig(N0=args.N0, Nmax=args.Nmax, sweeps=args.sweeps, tol=args.tol,
                            **({"halo": tuple(args.halo)} if args.halo else {}))
        from .oscillator import Phi0

        phi0 = Phi0()
        top = [base_component(1, phi0, cfg.D)]
        try:
            phi, cert = solve_scale(top, 0, args.eps, args.A, cfg, phi0)
        except SolverAbort as e:
            write_json(args.report, {"run_config": run_config(args), "passed": False, "error": str(e),
                                     "residual_history": e.history})
            return EXIT_CERT
        rep = cert.pop("solver")
        rep["certificate"] = cert
    rep.pop("bands", None)
    if args.out_phi:
        write_grid_field(args.out_phi, phi)
    passed = rep["relative_residual"] <= args.certify
    write_json(args.report, {"run_config": run_config(args), "passed": bool(passed), "report": rep})
    return EXIT_OK if passed else EXIT_CERT


def _bounded_passed(stack, ortho_tol):
    for c in stack.certificates.values():
        if c.get("base_case"):
            continue
        if c["ortho_residual_relative"] > ortho_tol or not c["wedge_growth_nonnegative"]:
            return False
    return True


def cmd_embed(args):
    from .embedding import BoundedConfig, StackMode, build_assouad, build_bounded, save_manifest
    from .nashmoser import SolverAbort

    if args.mode == "assouad":
        stack = build_assouad(args.eps, args.A, args.N1, args.N2)
        passed = True
    else:
        cfg = BoundedConfig(**({"halo": tuple(args.halo)} if args.halo else {}))
        try:
            stack = build_bounded(args.eps, args.A, args.N1, args.N2, cfg)
        except SolverAbort as e:
            sys.stderr.write(f"solver abort: {e}\n")
            return EXIT_CERT
        passed = stack.mode is not StackMode.BOUNDED or _bounded_passed(stack, args.ortho_tol)
    save_manifest(stack, args.out, header=run_config(args))
    return EXIT_OK if passed else EXIT_CERT


def cmd_eval(args):
    from .embedding import AssembledMap, load_manifest

    stack = load_manifest(args.map)
    pts = read_points(args.points)
    vals = AssembledMap(stack, args.assembly)(pts)
    lines = [csv_header(run_config(args))]
    lines.append(",".join(["x", "y", "z"] + [f"v{i}" for i in range(vals.shape[1])]) + "\n")
    for p, v in zip(pts, vals):
        lines.append(",".join(repr(float(c)) for c in list(p) + list(v)) + "\n")
    text = "".join(lines)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_audit(args):
    from . import audit
    from .embedding import AssembledMap, load_manifest

    stack = load_manifest(args.map)
    eps = stack.eps if args.eps is None else args.eps
    if args.domain == "continuous":
        lo, hi = args.buckets
        sample = audit.sample_continuous(range(lo, hi + 1), args.count, stack.A, seed=args.seed)
    else:
        sample = audit.sample_word(args.R, args.count, stack.A, seed=args.seed)
    rep = audit.distortion(AssembledMap(stack, args.assembly), sample, eps, workers=args.workers)
    doc = json.loads(rep.to_json(run_config(args)))
    if args.feps_M is not None:
        doc["feps"] = audit.feps_check(AssembledMap(stack, args.assembly), sample, eps, args.feps_M)
    write_json(args.out, doc)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv_header(run_config(args)))
            fh.write(rep.to_csv())
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="heisembed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="key = value file; flags override it")
        s.add_argument("--workers", type=int, default=1,
                       help="worker pool size for data-parallel maps; results do not depend on it")
        s.set_defaults(func=func)
        return s

    s = add("metric", cmd_metric, "distance between two points")
    s.add_argument("--kind", default="subriemannian", help="word, gauge, subriemannian or ccl1")
    s.add_argument("--R", type=int, default=16, help="word-ball radius for --kind=word")
    s.add_argument("--from", dest="origin", type=_triple, default=[0.0, 0.0, 0.0])
    s.add_argument("--to", type=_triple, required=True)
    s.add_argument("--out", help="also write a JSON record here")

    s = add("phi0-verify", cmd_phi0_verify, "certificate for the oscillating map")
    s.add_argument("--grid-n", type=int, default=33)
    s.add_argument("--refine-n", type=int, default=65)
    s.add_argument("--automorphy-tol", type=float, default=1e-10)
    s.add_argument("--c0-stability", type=float, default=0.10)
    s.add_argument("--out", default="-")

    s = add("lp-test", cmd_lp_test, "mollifier ladder checks on a smooth test field")
    s.add_argument("--h", type=_fraction, default=1 / 16)
    s.add_argument("--half-xy", type=_fraction, default=1.0)
    s.add_argument("--half-z", type=_fraction, default=1 / 8)
    s.add_argument("--N0", type=float, default=4.0)
    s.add_argument("--Nmax", type=float, default=16.0)
    s.add_argument("--boundary", choices=["shrink", "truncate"], default="truncate")
    s.add_argument("--lines", choices=["group", "grid"], default="group")
    s.add_argument("--out", default="-")

    s = add("perturb-solve", cmd_perturb_solve, "solve B(φ, ψ) = 0 near φ̃")
    s.add_argument("--tilde", help="grid-field file with φ̃")
    s.add_argument("--psi", help="grid-field file with ψ")
    s.add_argument("--eps", type=_fraction, default=1 / 8)
    s.add_argument("--A", type=float, default=8.0)
    s.add_argument("--M", type=float, default=1.0, help="first-derivative scale of ψ (file inputs)")
    s.add_argument("--N0", type=float, default=16.0)
    s.add_argument("--Nmax", type=float, default=32.0)
    s.add_argument("--sweeps", type=int, default=8)
    s.add_argument("--tol", type=float, default=1e-7)
    s.add_argument("--halo", type=_int_triple, help="ghost layers px,py,pz")
    s.add_argument("--certify", type=float, default=1e-6, help="relative residual the result must reach")
    s.add_argument("--out-phi", help="write φ here")
    s.add_argument("--report", default="-")

    s = add("embed", cmd_embed, "build an embedding stack and save its manifest")
    s.add_argument("--mode", choices=["assouad", "bounded"], default="assouad")
    s.add_argument("--eps", type=_fraction, required=True)
    s.add_argument("--A", type=float, default=4.0)
    s.add_argument("--N1", type=int, default=0)
    s.add_argument("--N2", type=int, default=8)
    s.add_argument("--halo", type=_int_triple)
    s.add_argument("--ortho-tol", type=float, default=1e-5)
    s.add_argument("--out", required=True)

    s = add("eval", cmd_eval, "map a point file through an assembled map")
    s.add_argument("--map", required=True)
    s.add_argument("--points", required=True)
    s.add_argument("--assembly", choices=["phi", "phi1"], default="phi")
    s.add_argument("--out", default="-")

    s = add("audit", cmd_audit, "distortion report for a saved stack")
    s.add_argument("--map", required=True)
    s.add_argument("--domain", choices=["continuous", "word"], default="continuous")
    s.add_argument("--eps", type=_fraction)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--buckets", type=_range, default=[1, 6], help="LO:HI; write --buckets=-2:5 when LO is negative")
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--R", type=int, default=16)
    s.add_argument("--assembly", choices=["phi", "phi1"], default="phi")
    s.add_argument("--feps-M", type=float)
    s.add_argument("--out", default="-")
    s.add_argument("--csv")
    return p, sub


def _flags(subparser):
    out = []
    for a in subparser._actions:
        out.extend(o for o in a.option_strings if o.startswith("--"))
    return out


def _apply_config(subparser, path, command):
    cp = configparser.ConfigParser()
    cp.optionxform = str  # flags like --R and --N0 are case-sensitive
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    values = {}
    for section in ("common", command):
        if cp.has_section(section):
            values.update(cp.items(section))
    argv = []
    known = set(_flags(subparser))
    for k, v in values.items():
        flag = "--" + k.replace("_", "-")
        if flag not in known:
            alt = difflib.get_close_matches(flag, known, n=1)
            hint = f"; did you mean {alt[0]!r}?" if alt else ""
            raise UsageError(f"{path}: unknown key {k!r}{hint}")
        argv += [flag, v]
    return argv


def _config_path(argv, command):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    rest = argv[argv.index(command) + 1 :]
    return pre.parse_known_args(rest)[0].config


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    command = next((a for a in argv if a in sub.choices), None)
    try:
        if command is not None:
            path = _config_path(argv, command)
            if path:
                # config values first, command-line flags after them win
                i = argv.index(command)
                argv = argv[: i + 1] + _apply_config(sub.choices[command], path, command) + argv[i + 1 :]
        args, extra = parser.parse_known_args(argv)
    except UsageError as e:
        sys.stderr.write(f"heisembed {command}: {e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    subparser = sub.choices[args.command]
    if extra:
        flag = extra[0].split("=")[0]
        alt = difflib.get_close_matches(flag, _flags(subparser), n=1)
        hint = f"; did you mean {alt[0]}?" if alt else ""
        sys.stderr.write(f"heisembed {args.command}: unrecognized argument {extra[0]!r}{hint}\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        sys.stderr.write(f"heisembed {args.command}: {e}\n")
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
