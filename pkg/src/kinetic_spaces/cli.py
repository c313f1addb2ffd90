"""Command line interface (``kspaces``).

Operators are given as a builtin name (``langevin1``, ``langevin2``,
``three_layer``) or a path to an operator file; functions use the spec
grammar of :mod:`kinetic_spaces.families`.
"""

import argparse
import json
import sys

import numpy as np

from . import backend, families, lab
from .fitting import ExponentFit
from .grid import dump_grid, load_grid, sample, slice_csv, spec_for_field
from .heat_kernel import SampleSpec, covariance, gamma_eval, kernel_bound_check
from .lorentz import gaussian_levels, lorentz_norm, rearrange, tartar_sequence
from .norms import QuadratureOptions, norm_report
from .structure import GroupPoint, StructureError, check_hormander, resolve_operator
from .taylor import DEFAULT_EPS_GRID, mollify_inverse_rate, mollify_rate, taylor_remainder_rate


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _write(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fit_output(fit: ExponentFit, args, label):
    _write(fit.to_csv(), args.csv)
    print(f"# {label}: {fit.summary()}", file=sys.stderr if not args.csv else sys.stdout)


def cmd_structure_check(args):
    g = resolve_operator(args.operator)
    cert = check_hormander(g)
    print(f"N = {g.N}")
    print(f"r = {g.r}")
    print(f"layer_dims = {list(g.layer_dims)}")
    print(f"homogeneous_dimension = {g.hom_dim}")
    print(f"hormander = {'yes' if cert.hormander else 'no'} (rank {cert.rank} of {cert.N})")
    print(f"nilpotency_degree = {g.nilpotency_degree}")
    return 0 if cert.hormander else 1


def cmd_kernel_eval(args):
    g = resolve_operator(args.operator)
    x = np.asarray(args.x, dtype=float)
    if x.size != g.N:
        raise SystemExit(f"--x needs {g.N} values")
    kv = gamma_eval(covariance(g), GroupPoint(args.t, x))
    print(f"gamma = {kv.gamma:.15g}")
    print("grad_d = " + " ".join(f"{v:.15g}" for v in kv.grad_d))
    print(f"y_gamma = {kv.y_gamma:.15g}")
    return 0


def cmd_kernel_bounds(args):
    g = resolve_operator(args.operator)
    spec = SampleSpec(n_t=args.samples, n_x=args.samples + 1 - args.samples % 2)
    rep, table = kernel_bound_check(covariance(g), spec, return_table=True)
    print(f"sup ||z||^(d-2) Gamma = {rep.sup_gamma:.10g}")
    print(f"sup ||z||^d |Y Gamma| = {rep.sup_y_gamma:.10g}")
    print(f"samples = {rep.n_samples}")
    if args.csv:
        cols = ["t"] + [f"x{i + 1}" for i in range(g.N)] + ["gamma", "y_gamma", "hom_norm", "bound_ratio"]
        with open(args.csv, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in table:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
    return 0


def cmd_norm_compute(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    holder = [(0, a) for a in args.holder] if args.holder else ()
    rep = norm_report(u, args.p, orders=tuple(args.n), g=g, holder=holder,
                      opts=QuadratureOptions(n=args.resolution), y_variant=args.variant)
    sys.stdout.write(rep.to_text())
    if args.csv:
        _write(rep.to_csv(), args.csv)
    return 0


def cmd_taylor_fit(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    zeta0 = np.asarray(args.zeta or [0.3] + [0.5] * g.N, dtype=float)
    sigmas = _floats(args.scales) if args.scales else np.geomspace(0.01, 0.1, 6)
    fit = taylor_remainder_rate(u, g, args.n, args.p, zeta0, sigmas, QuadratureOptions(n=args.resolution))
    _fit_output(fit, args, f"Taylor remainder, n={args.n}")
    return 0


def cmd_mollify_rate(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    eps = _floats(args.eps_grid) if args.eps_grid else list(DEFAULT_EPS_GRID)
    if args.m is None:
        fit = mollify_rate(u, g, args.n, args.p, eps)
        label = f"||u - u_eps||_p, n={args.n}"
    else:
        fit = mollify_inverse_rate(u, g, args.n, args.m, args.p, eps)
        label = f"||u_eps||_(W^{args.m},p), n={args.n}"
    _fit_output(fit, args, label)
    return 0


def cmd_lorentz(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    r = rearrange(u, opts=QuadratureOptions(n=args.resolution))
    val = lorentz_norm(r, args.p, args.q)
    print(f"L^({args.p:g},{args.q:g}) = {val:.10g}")
    try:
        exact = gaussian_levels(u).lorentz_norm(args.p, args.q)
        print(f"closed form = {exact:.10g}")
    except (TypeError, ValueError):
        pass
    return 0


def cmd_tartar(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    r = rearrange(u, opts=QuadratureOptions(n=args.resolution))
    ts = tartar_sequence(r, (args.k_min, args.k_max))
    _write(ts.to_csv(args.pstar), args.csv)
    return 0


def cmd_grid_sample(args):
    g = resolve_operator(args.operator)
    u = families.build_field(g, args.function)
    gf = sample(u, spec_for_field(u, args.n), margin=0)
    dump_grid(gf, args.out)
    print(f"wrote {args.out} ({'x'.join(str(c) for c in gf.spec.counts)})")
    return 0


def cmd_grid_slice(args):
    gf = load_grid(args.file)
    vals = [None if v.strip() in ("*", "") else float(v) for v in args.at.split(",")]
    _write(slice_csv(gf, vals), args.csv)
    return 0


def cmd_lab_run(args):
    cfgs = lab.load_lab_file(args.config)
    out = args.output
    if out is None:
        with open(args.config) as fh:
            data = json.load(fh)
        out = data.get("output", "lab-output") if isinstance(data, dict) else "lab-output"
    results = lab.run_lab(cfgs, args.workers)
    code = lab.emit_report(results, out, plots=args.plots)
    for r in results:
        print(f"{r.name}: {'PASS' if r.verdict else 'FAIL'} ({r.criterion})")
    return code


def cmd_lab_list(args):
    for key, desc in lab.list_experiments():
        print(f"{key:26s} {desc}")
    return 0


def cmd_lab_report(args):
    data = lab.read_report(args.directory)
    for r in data["results"]:
        print(f"{r['name']}: {r['verdict']} ({r['criterion']})")
        for k, f in sorted(r["fits"].items()):
            print(f"    fit {k}: slope={f['slope']} r2={f['r2']}")
        for k, v in sorted(r["summary"].items()):
            print(f"    {k} = {v}")
    return 0 if data["all_pass"] else 1


def build_parser():
    p = argparse.ArgumentParser(prog="kspaces", description="Intrinsic function spaces of kinetic operators.")
    p.add_argument("--version", action="store_true", help="print the version and active backend")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("structure", help="operator structure").add_subparsers(dest="action", required=True)
    c = s.add_parser("check", help="print N, r, homogeneous dimension and the rank test")
    c.add_argument("operator")
    c.set_defaults(func=cmd_structure_check)

    k = sub.add_parser("kernel", help="fundamental solution").add_subparsers(dest="action", required=True)
    c = k.add_parser("eval", help="Gamma, its first-layer gradient and Y Gamma at a point")
    c.add_argument("operator")
    c.add_argument("--t", type=float, required=True)
    c.add_argument("--x", type=float, nargs="+", required=True)
    c.set_defaults(func=cmd_kernel_eval)
    c = k.add_parser("bounds", help="sampled suprema of the homogeneous kernel bounds")
    c.add_argument("operator")
    c.add_argument("--samples", type=int, default=40)
    c.add_argument("--csv", help="write the per-sample table")
    c.set_defaults(func=cmd_kernel_bounds)

    n = sub.add_parser("norm", help="intrinsic quasi-norms").add_subparsers(dest="action", required=True)
    c = n.add_parser("compute", help="norm report for one function")
    c.add_argument("operator")
    c.add_argument("function")
    c.add_argument("--n", type=int, nargs="+", default=[1, 2])
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--variant", choices=("restricted", "full"), default="restricted",
                   help="Slobodeckij integral over |h| <= 1 or over all h")
    c.add_argument("--holder", type=float, nargs="*", help="Hoelder exponents (order 0)")
    c.add_argument("--resolution", type=int, default=41)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_norm_compute)

    t = sub.add_parser("taylor", help="Taylor remainder").add_subparsers(dest="action", required=True)
    c = t.add_parser("fit", help="remainder rate against ||zeta||_B")
    c.add_argument("operator")
    c.add_argument("function")
    c.add_argument("--n", type=int, default=1)
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--zeta", type=float, nargs="+", help="direction of the increment")
    c.add_argument("--scales", help="comma-separated dilation scales")
    c.add_argument("--resolution", type=int, default=41)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_taylor_fit)

    m = sub.add_parser("mollify", help="mollifier").add_subparsers(dest="action", required=True)
    c = m.add_parser("rate", help="approximation rate, or the W^m growth with --m")
    c.add_argument("operator")
    c.add_argument("function")
    c.add_argument("--n", type=int, default=1)
    c.add_argument("--m", type=int)
    c.add_argument("--p", type=float, default=2.0)
    c.add_argument("--eps-grid", dest="eps_grid", help="comma-separated epsilons")
    c.add_argument("--csv")
    c.set_defaults(func=cmd_mollify_rate)

    c = sub.add_parser("lorentz", help="Lorentz quasi-norm of a function")
    c.add_argument("function")
    c.add_argument("--operator", default="langevin1")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--q", type=float, required=True, help="use inf for the weak space")
    c.add_argument("--resolution", type=int, default=41)
    c.set_defaults(func=cmd_lorentz)

    c = sub.add_parser("tartar", help="level sequence a_k = u*(e^k) and its gaps")
    c.add_argument("function")
    c.add_argument("--operator", default="langevin1")
    c.add_argument("--pstar", type=float, required=True)
    c.add_argument("--k-min", dest="k_min", type=int, default=-40)
    c.add_argument("--k-max", dest="k_max", type=int, default=40)
    c.add_argument("--resolution", type=int, default=41)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_tartar)

    gr = sub.add_parser("grid", help="grid files").add_subparsers(dest="action", required=True)
    c = gr.add_parser("sample", help="sample a function on its support box and dump it")
    c.add_argument("operator")
    c.add_argument("function")
    c.add_argument("--n", type=int, default=41)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_grid_sample)
    c = gr.add_parser("slice", help="CSV of a 1-D slice, e.g. --at '0,*,0.5'")
    c.add_argument("file")
    c.add_argument("--at", required=True)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_grid_slice)

    lb = sub.add_parser("lab", help="experiment harness").add_subparsers(dest="action", required=True)
    c = lb.add_parser("run", help="run a lab file")
    c.add_argument("config")
    c.add_argument("--output", help="report directory (overrides the file's 'output')")
    c.add_argument("--workers", type=int, help="defaults to $KINETIC_SPACES_WORKERS or 1")
    c.add_argument("--plots", action="store_true", help="also write PNG plots of fitted rates")
    c.set_defaults(func=cmd_lab_run)
    c = lb.add_parser("list-experiments", help="list registered experiments")
    c.set_defaults(func=cmd_lab_list)
    c = lb.add_parser("report", help="print a report directory")
    c.add_argument("directory")
    c.set_defaults(func=cmd_lab_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__
        print(f"kinetic_spaces {__version__} ({backend.NAME} backend)")
        return 0
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (StructureError, families.SpecError, lab.ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
