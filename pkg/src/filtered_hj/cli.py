"""Command-line entry point: ``filtered-hj {coeffs,solve,bench,rank}``."""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bench, fd_coeffs, grid, hj_solver, problems, ranking

log = logging.getLogger("filtered_hj")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


# {{{ coeffs


def _coeff_stencil(args) -> fd_coeffs.Stencil:
    fam = args.family
    if fam == "backward":
        return fd_coeffs.backward_weights(args.k)
    if fam == "forward":
        return fd_coeffs.forward_weights(args.k)
    if fam == "centered":
        return fd_coeffs.centered_weights(args.m, args.n)
    if fam == "arith":
        return fd_coeffs.arithmetic_weights(fd_coeffs.ArithmeticNodes(args.a, args.d, args.k))
    if fam == "general":
        if args.a is not None:
            spec = fd_coeffs.ArithmeticNodes(args.a, args.d, args.k)
        else:
            spec = fd_coeffs.OffsetNodes(args.m, args.n, args.d)
        return fd_coeffs.derivative_weights(spec, args.p)
    raise AssertionError(fam)


def cmd_coeffs(args) -> int:
    s = _coeff_stencil(args)
    for o, w in zip(s.offsets, s.weights):
        print(f"{o}\t{w.numerator}/{w.denominator}")
    print(f"# derivative={s.derivative_order} accuracy={s.accuracy_order}")
    return 0


# }}}


def _problem(args) -> problems.TestProblem:
    return problems.get_problem(args.problem, kparam=args.kparam, C=args.C, c=args.c,
                                dim=getattr(args, "dim", 2))


def cmd_solve(args) -> int:
    prob = _problem(args)
    if prob.dim != args.dim:
        raise SystemExit(f"problem {prob.name} is {prob.dim}-D; use --dim {prob.dim}")
    spec = grid.GridSpec(args.dim, args.mesh)
    cfg = hj_solver.SchemeConfig(order=args.order, filtered=args.filtered,
                                 threshold_exponent=args.threshold_exponent,
                                 boundary=args.boundary)
    with np.errstate(over="ignore", invalid="ignore"):
        rep = hj_solver.sweep_solve(prob.f, spec, cfg)
    if args.w_out:
        grid.write_binary(rep.w, args.w_out)
    if args.u_out:
        grid.write_binary(rep.u, args.u_out)
    print("h,order,filtered,usage_fraction,max_residual")
    print(f"{spec.h!r},{cfg.order},{int(cfg.filtered)},{rep.usage_fraction!r},"
          f"{rep.max_filter_residual!r}")
    return 0


def cmd_bench(args) -> int:
    prob = _problem(args)
    flags = {"on": (True,), "off": (False,), "both": (False, True)}[args.filtered]
    cfg = hj_solver.SchemeConfig(threshold_exponent=args.threshold_exponent,
                                 boundary=args.boundary)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if prob.exact_u is not None:
        chk = problems.verify_residual(prob, seed=args.seed)
        log.info("manufactured-solution residual %.3e (%s)", chk.max_residual,
                 "ok" if chk.passed else "FAILED")

    def progress(r):
        log.info("%-4s N=%-5d L1_u=%.3e Linf_u=%.3e usage=%.4f (%.2fs)",
                 r.label, r.N, r.err_L1_u, r.err_Linf_u, r.usage_fraction, r.wall_time)

    report = bench.run_study(prob, args.orders, flags, args.meshes, cfg, progress=progress)
    bench.emit_csv(report, out / f"{prob.name}_convergence.csv", timing=not args.no_timing)
    bench.emit_plot_data(report, out / "plotdata")
    print(bench.format_summary(report))
    for v in report.violations:
        print(f"VIOLATION: {v}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_rank(args) -> int:
    try:
        cloud = ranking.load_points(args.input)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    cfg = hj_solver.SchemeConfig(order=args.order, filtered=True)
    result = ranking.rank_cloud(cloud, args.mesh, cfg, args.smoothing)
    ranking.write_ranks(cloud, result, args.out)
    print(f"points={cloud.count} layers={int(result.exact_layer.max())} "
          f"spearman={result.agreement:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    ap = argparse.ArgumentParser(prog="filtered-hj", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", parents=[common], help="print exact finite-difference weights")
    p.add_argument("--family", required=True,
                   choices=("backward", "forward", "centered", "arith", "general"))
    p.add_argument("-k", type=int, default=1, help="order / node count")
    p.add_argument("-m", type=int, default=1)
    p.add_argument("-n", type=int, default=1)
    p.add_argument("-a", type=Fraction, default=None, help="first node (arith/general)")
    p.add_argument("-d", type=Fraction, default=Fraction(1), help="node spacing")
    p.add_argument("-p", type=int, default=1, help="derivative order (general)")
    p.set_defaults(func=cmd_coeffs)

    def problem_args(p):
        p.add_argument("--problem", default="f1", choices=("f1", "f2", "const"))
        p.add_argument("--kparam", type=float, default=20.0)
        p.add_argument("--C", type=float, default=10.0)
        p.add_argument("--c", type=float, default=1.0, help="constant density value")
        p.add_argument("--threshold-exponent", type=float, default=0.5)
        p.add_argument("--boundary", choices=hj_solver.BOUNDARY_MODES, default="truncate")

    p = sub.add_parser("solve", parents=[common], help="solve one scheme on one mesh")
    problem_args(p)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mesh", "-N", type=int, default=128)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--filtered", type=_on_off, default=True, metavar="{on,off}")
    p.add_argument("--w-out")
    p.add_argument("--u-out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", parents=[common], help="convergence study over a mesh ladder")
    problem_args(p)
    p.add_argument("--orders", type=_int_list, default=list(bench.DEFAULT_ORDERS))
    p.add_argument("--filtered", choices=("on", "off", "both"), default="both")
    p.add_argument("--meshes", type=_int_list, default=list(bench.DEFAULT_MESHES))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for residual sample points")
    p.add_argument("--no-timing", action="store_true", help="write wall_time as 0")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rank", parents=[common], help="PDE-based ranking of a 2-D point cloud")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mesh", type=int, default=128)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
