"""Command-line front end.

Subcommands: solve (run one algorithm on a problem file), exp1/exp2 (the two
scripted benchmarks), check (self-certification suite), prox-table (dump prox
values over a grid, e.g. for golden-file regeneration).

Exit codes: 0 success, 2 usage/schema error, 3 solver non-convergence
(traces are still written). Default output directory comes from the
MEALOPT_OUT_DIR environment variable, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .envelope import (
    DirectQP,
    InnerProxGradient,
    Paper72FastPath,
    PenaltyPlan,
    alpha_cap,
    beta_for_target_alpha,
)
from .errors import MealoptError, SchemaError
from .experiments import ExperimentSpec, run_experiment
from .fileio import load_problem, save_trace
from .problem import MCP, SCAD, BoxIndicator, L1, Zero
from .solvers import EpsilonSchedule, SolverConfig, StopRule, run

_SUBPROBLEMS = {
    "direct": DirectQP,
    "inner": InnerProxGradient,
    "paper72": Paper72FastPath,
}


def _positive(flag: str):
    def parse(text: str) -> float:
        val = float(text)
        if val <= 0:
            raise argparse.ArgumentTypeError(f"{flag} must be positive, got {text}")
        return val
    return parse


def _eta(text: str) -> float:
    val = float(text)
    if not (0.0 < val < 2.0):
        raise argparse.ArgumentTypeError(f"--eta must lie in (0, 2), got {text}")
    return val


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mealopt",
                                     description="Envelope-smoothed augmented "
                                                 "Lagrangian solvers")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solver on a problem file")
    solve.add_argument("--input", required=True, help="problem JSON path")
    solve.add_argument("--algorithm", required=True,
                       choices=("meal", "imeal", "limeal", "alm", "prox_ialm"))
    solve.add_argument("--beta", type=_positive("--beta"))
    solve.add_argument("--gamma", type=_positive("--gamma"), default=0.5)
    solve.add_argument("--eta", type=_eta, default=1.0)
    solve.add_argument("--horizon-K", type=int, dest="horizon_k")
    solve.add_argument("--alpha-target", type=_positive("--alpha-target"),
                       dest="alpha_target")
    solve.add_argument("--cap-variant", default=None,
                       choices=("meal-a", "meal-b", "imeal-a", "imeal-b",
                                "limeal-a", "limeal-b"),
                       help="with --alpha-target 'auto': derive the target "
                            "from this admissible cap")
    solve.add_argument("--epsilon0", type=_positive("--epsilon0"), default=1e-2)
    solve.add_argument("--max-iters", type=int, default=2000)
    solve.add_argument("--stat-tol", type=_positive("--stat-tol"), default=1e-6)
    solve.add_argument("--feas-tol", type=_positive("--feas-tol"), default=1e-6)
    solve.add_argument("--subproblem-path", choices=tuple(_SUBPROBLEMS), default=None)
    solve.add_argument("--output-dir", default=None)

    for name in ("exp1", "exp2"):
        p = sub.add_parser(name, help=f"reproduce benchmark {name}")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--max-iters", type=int, default=2000 if name == "exp1" else 4000)
        if name == "exp2":
            p.add_argument("--seed", type=int, default=42)
            p.add_argument("--m", type=int, default=5)
            p.add_argument("--n", type=int, default=20)

    sub.add_parser("check", help="run the oracle certification suite")

    prox = sub.add_parser("prox-table", help="dump prox values over a 1-D grid")
    prox.add_argument("--kind", required=True, choices=("zero", "box", "l1",
                                                        "scad", "mcp"))
    prox.add_argument("--gamma", type=_positive("--gamma"), default=0.5)
    prox.add_argument("--lam", type=_positive("--lam"), default=1.0)
    prox.add_argument("--a", type=_positive("--a"), default=3.7)
    prox.add_argument("--weight", type=_positive("--weight"), default=1.0)
    prox.add_argument("--lower", type=float, default=-1.0)
    prox.add_argument("--upper", type=float, default=1.0)
    prox.add_argument("--lo", type=float, default=-3.0)
    prox.add_argument("--hi", type=float, default=3.0)
    prox.add_argument("--step", type=_positive("--step"), default=0.25)
    prox.add_argument("--output", default=None, help="write here instead of stdout")
    return parser


def _out_dir(value) -> Path:
    if value is not None:
        return Path(value)
    return Path(os.environ.get("MEALOPT_OUT_DIR", "runs"))


def _cmd_solve(args) -> int:
    problem = load_problem(args.input)
    if args.horizon_k is not None:
        if args.alpha_target is None:
            print("--horizon-K needs --alpha-target", file=sys.stderr)
            return 2
        plan = PenaltyPlan.horizon(args.horizon_k, args.alpha_target,
                                   gamma=args.gamma, eta=args.eta)
    else:
        beta = args.beta
        if beta is None:
            if args.alpha_target is None:
                print("choose a penalty: --beta, or --alpha-target "
                      "(optionally with --cap-variant)", file=sys.stderr)
                return 2
            probe = PenaltyPlan.fixed(1.0, gamma=args.gamma, eta=args.eta)
            target = args.alpha_target
            if args.cap_variant is not None:
                target = min(target, alpha_cap(problem, probe, args.cap_variant))
            from .envelope import EnvelopeContext
            ctx = EnvelopeContext(problem, probe)
            beta = beta_for_target_alpha(target, args.gamma, args.eta, ctx.c_gamma_A)
        plan = PenaltyPlan.fixed(beta, gamma=args.gamma, eta=args.eta)

    sub = "auto" if args.subproblem_path is None else _SUBPROBLEMS[args.subproblem_path]()
    config = SolverConfig(
        args.algorithm, plan, subproblem=sub,
        epsilon_schedule=EpsilonSchedule(args.epsilon0),
        stop=StopRule(args.max_iters, args.stat_tol, args.feas_tol),
    )
    trace = run(problem, config)

    out = _out_dir(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dest = out / f"{args.algorithm}_trace.csv"
    save_trace(trace, dest)
    print(f"{args.algorithm}: {trace.status} after {trace.n_rows - 1} steps; "
          f"trace written to {dest}")
    return 0 if trace.status == "Converged" else 3


def _cmd_experiment(args, which: str) -> int:
    stop = StopRule(max_iters=args.max_iters, stat_tol=1e-6, feas_tol=1e-6)
    if which == "exp2":
        spec = ExperimentSpec("exp2", seed=args.seed, m=args.m, n=args.n, stop=stop)
    else:
        spec = ExperimentSpec("exp1", stop=stop)
    out = _out_dir(args.output_dir)
    bundle = run_experiment(spec, out_dir=out)
    for row in bundle.summary:
        print(f"{row['run']}: {row['status']}"
              + (" (oscillating)" if row["oscillating"] else ""))
    for label, msg in bundle.errors.items():
        print(f"{label}: ERROR {msg}", file=sys.stderr)
    print(f"wrote {len(bundle.traces)} traces under {out / which}")
    return 0 if not bundle.errors else 3


def _cmd_check(_args) -> int:
    """Certification: closed forms against the independent oracles."""
    from .oracle import finite_diff_check, grid_prox_oracle, rate_fit
    from .problem import moreau_value_grad
    from .rng import SplitMix64

    failures = []

    def check(name, ok):
        print(f"[{'ok' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    rng = SplitMix64(2024)
    kinds = [
        ("l1", L1(weight=0.7), 0.9),
        ("scad", SCAD(lam=1.0, a=3.7), 0.5),
        ("mcp", MCP(lam=1.0, a=3.0), 0.5),
        ("box", BoxIndicator(lower=[-1.0], upper=[1.0]), 0.9),
        ("zero", Zero(), 0.9),
    ]
    for name, g, gamma in kinds:
        worst = 0.0
        for _ in range(60):
            v = (rng.uniform() - 0.5) * 12.0
            got = g.prox(gamma, [v])[0]
            want = grid_prox_oracle(lambda t: g.value([t]), gamma, v,
                                    half_range=8.0, step=1e-2)
            worst = max(worst, abs(got - want))
        check(f"prox[{name}] vs grid oracle (max |diff| {worst:.2e})", worst <= 1e-3)

        worst_fd = 0.0
        for _ in range(50):
            v = np.array([(rng.uniform() - 0.5) * 12.0])
            env = lambda w: moreau_value_grad(g, gamma, w)[0]
            grad = moreau_value_grad(g, gamma, v)[1]
            worst_fd = max(worst_fd, finite_diff_check(env, lambda _: grad, v))
        check(f"envelope gradient[{name}] finite differences ({worst_fd:.2e})",
              worst_fd <= 1e-4)

    fit = rate_fit([0.9 ** k for k in range(60)])
    check("rate_fit recovers geometric 0.9", fit.kind == "linear"
          and abs(fit.rate - 0.9) < 0.01 and fit.r2 >= 0.999)
    fit = rate_fit([1.0] + [k ** -0.5 for k in range(1, 60)], burn_in=1)
    check("rate_fit recovers power -1/2", fit.kind == "sublinear"
          and abs(fit.rate + 0.5) < 0.05)

    from .oracle import active_set_qp_oracle

    pts, mults, _ = active_set_qp_oracle(
        np.eye(2), np.zeros(2), np.array([[1.0, 0.0]]), np.array([1.0]),
        [-np.inf, -np.inf], [np.inf, np.inf])
    check("active-set oracle on min ||x||^2/2 s.t. x1=1",
          len(pts) == 1 and np.allclose(pts[0], [1.0, 0.0], atol=1e-9))

    from .experiments import build_exp2

    prob = build_exp2(7, m=2, n=4)
    check("generated instance is feasible at x_tilde",
          prob.constraint.feasibility_probe()[0])

    if failures:
        print(f"{len(failures)} check(s) failed", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def _cmd_prox_table(args) -> int:
    if args.kind == "zero":
        g = Zero()
    elif args.kind == "box":
        g = BoxIndicator(lower=[args.lower], upper=[args.upper])
    elif args.kind == "l1":
        g = L1(weight=args.weight)
    elif args.kind == "scad":
        g = SCAD(lam=args.lam, a=args.a)
    else:
        g = MCP(lam=args.lam, a=args.a)
    lines = [f"# kind={args.kind} gamma={args.gamma!r}"]
    v = args.lo
    while v <= args.hi + 1e-12:
        p = g.prox(args.gamma, [v])[0]
        lines.append(f"{v!r} {p!r}")
        v += args.step
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command in ("exp1", "exp2"):
            return _cmd_experiment(args, args.command)
        if args.command == "check":
            return _cmd_check(args)
        return _cmd_prox_table(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MealoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
