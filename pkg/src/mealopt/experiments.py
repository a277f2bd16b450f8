"""Problem generators and scripted benchmark runs.

Experiment 1: the 2-D nonconvex program  min x^2 - y^2  s.t. x = y,
x in [-1, 1], where the classic method's multiplier oscillates between two
values while the prox-linear variant converges for every step size tested.

Experiment 2: a random box-constrained quadratic program (m=5, n=20 by
default) comparing the prox-linear variant against the projected baselines.
Generation uses the portable SplitMix64 stream so a seed pins the instance
bit-for-bit across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .envelope import InnerProxGradient, Paper72FastPath, PenaltyPlan
from .errors import InsufficientData
from .oracle import rate_fit
from .problem import (
    BoxIndicator,
    ImplicitClass,
    LinearConstraint,
    Problem,
    QuadraticSmooth,
)
from .rng import SplitMix64
from .solvers import ProxIALMParams, SolverConfig, StopRule, Trace, run

__all__ = [
    "ExperimentSpec",
    "ExperimentBundle",
    "build_exp1",
    "build_exp2",
    "exp1_configs",
    "exp2_configs",
    "run_experiment",
]

DEFAULT_SEED = 42
DEFAULT_STOP = StopRule(max_iters=2000, stat_tol=1e-6, feas_tol=1e-6)
# The projected fast-path scheme needs ~2900 iterations at eta=1 on the
# committed seed, so the second benchmark gets a higher budget.
EXP2_STOP = StopRule(max_iters=4000, stat_tol=1e-6, feas_tol=1e-6)

# The origin is itself a first-order stationary point of experiment 1 (the
# objective's gradient vanishes and the constraint holds), so benchmark runs
# start from this generic point instead of the solver default of all zeros.
EXP1_INIT = (np.array([1.0, -1.0]), np.array([1.0, -1.0]), np.zeros(1))


@dataclass(frozen=True)
class ExperimentSpec:
    id: str                       # "exp1" | "exp2" | "custom"
    seed: int = DEFAULT_SEED
    m: Optional[int] = None
    n: Optional[int] = None
    grid: tuple = ()              # custom: (label, problem, SolverConfig[, init])
    stop: Optional[StopRule] = None

    def __post_init__(self):
        if self.id not in ("exp1", "exp2", "custom"):
            raise ValueError("id must be exp1, exp2 or custom")
        if self.stop is None:
            object.__setattr__(self, "stop",
                               EXP2_STOP if self.id == "exp2" else DEFAULT_STOP)
        if self.id == "exp2":
            m = 5 if self.m is None else self.m
            n = 20 if self.n is None else self.n
            if not m < n:
                raise ValueError("exp2 requires m < n")


def build_exp1() -> Problem:
    """min x^2 - y^2  s.t.  x = y,  x in [-1, 1].

    Smooth part diag(2, -2)/2-quadratic (gradient Lipschitz constant 2),
    box on the first coordinate only. The box indicator's implicit class is
    declared metadata (see ImplicitClass): it feeds the cap formulas, and
    every inequality that depends on it is monitored empirically.
    """
    smooth = QuadraticSmooth(np.diag([2.0, -2.0]))
    box = BoxIndicator(
        lower=[-1.0, -np.inf], upper=[1.0, np.inf],
        implicit_class=ImplicitClass.lipschitz(2.0),
    )
    constraint = LinearConstraint(A=[[1.0, -1.0]], b=[0.0])
    return Problem(constraint, box, smooth)


def build_exp2(seed: int = DEFAULT_SEED, m: int = 5, n: int = 20) -> Problem:
    """Random box-QP: Q symmetrized uniform, b = A x_tilde so Ax=b is feasible.

    Draw order (row major): G (n x n) -> Q = (G + G')/2, r (n), A (m x n),
    x_tilde (n); box [0, 1]^n.
    """
    if not m < n:
        raise ValueError("exp2 requires m < n")
    rng = SplitMix64(seed)
    G = rng.uniform_array(n, n)
    Q = 0.5 * (G + G.T)
    r = rng.uniform_array(n)
    A = rng.uniform_array(m, n)
    x_tilde = rng.uniform_array(n)
    b = A @ x_tilde
    smooth = QuadraticSmooth(Q, r)
    box = BoxIndicator(lower=np.zeros(n), upper=np.ones(n))
    return Problem(LinearConstraint(A, b), box, smooth)


def _fmt(x: float) -> str:
    return f"{x:g}"


def exp1_configs(stop: StopRule = DEFAULT_STOP):
    """(label, config) pairs: classic at beta=50 and prox-linear at three etas."""
    out = [("alm_beta50",
            SolverConfig("alm", PenaltyPlan.fixed(50.0, gamma=0.5, eta=1.0),
                         stop=stop))]
    for eta in (0.5, 1.0, 1.5):
        plan = PenaltyPlan.fixed(50.0, gamma=0.5, eta=eta)
        cfg = SolverConfig("limeal", plan,
                           subproblem=InnerProxGradient(tol=1e-10), stop=stop)
        out.append((f"limeal_beta50_gamma0.5_eta{_fmt(eta)}", cfg))
    return out


def exp2_configs(problem: Problem, stop: StopRule = DEFAULT_STOP):
    """Settings for the quadratic program comparison.

    Prox-linear: beta=50, gamma = 1/(2 ||Q||),  eta in {0.5, 1, 1.5} on the
    project-the-unconstrained-minimizer path. Baseline: p = 2 ||Q||,
    s = 1 / (2 (||Q|| + p + beta ||A||^2)), eta in {0.5, 1}; eta = 1 is the
    unproximal variant.
    """
    Q, _, _ = problem.smooth.quadratic_terms()
    q_norm = float(np.linalg.norm(Q, 2))
    a_norm2 = float(np.linalg.norm(problem.constraint.A, 2)) ** 2
    beta = 50.0
    gamma = 1.0 / (2.0 * q_norm)
    p = 2.0 * q_norm
    s = 1.0 / (2.0 * (q_norm + p + beta * a_norm2))

    out = []
    for eta in (0.5, 1.0, 1.5):
        plan = PenaltyPlan.fixed(beta, gamma=gamma, eta=eta)
        cfg = SolverConfig("limeal", plan, subproblem=Paper72FastPath(), stop=stop)
        out.append((f"limeal_beta50_eta{_fmt(eta)}", cfg))
    for eta in (0.5, 1.0):
        plan = PenaltyPlan.fixed(beta, gamma=1.0 / p, eta=eta)
        cfg = SolverConfig("prox_ialm", plan,
                           prox_ialm_params=ProxIALMParams(p=p, s=s), stop=stop)
        label = "ialm" if eta == 1.0 else f"prox_ialm_eta{_fmt(eta)}"
        out.append((label, cfg))
    return out


@dataclass
class ExperimentBundle:
    spec: ExperimentSpec
    traces: dict = field(default_factory=dict)     # label -> Trace
    errors: dict = field(default_factory=dict)     # label -> error message
    summary: list = field(default_factory=list)    # rows of dicts

    def iterations_to_tol(self, label: str) -> Optional[int]:
        for row in self.summary:
            if row["run"] == label:
                return row["iterations_to_tol"]
        raise KeyError(label)


def _summarize(label: str, algorithm: str, trace: Trace, stop: StopRule) -> dict:
    stat = trace.column("stationarity")
    feas = trace.column("feasibility")
    obj = trace.column("objective")
    iters = trace.iterations_to(stop.stat_tol, stop.feas_tol)
    fit_kind, fit_param, fit_r2 = "", np.nan, np.nan
    try:
        fit = rate_fit(stat, burn_in=5)
        fit_kind, fit_param, fit_r2 = fit.kind, fit.rate, fit.r2
    except InsufficientData:
        pass
    return {
        "run": label,
        "algorithm": algorithm,
        "status": trace.status,
        "iterations_to_tol": iters,
        "terminal_objective": float(obj[-1]),
        "terminal_feasibility": float(feas[-1]),
        "terminal_stationarity": float(stat[-1]),
        "oscillating": trace.oscillating,
        "rate_kind": fit_kind,
        "rate_param": fit_param,
        "rate_r2": fit_r2,
    }


def run_experiment(spec: ExperimentSpec, out_dir: Optional[str] = None) -> ExperimentBundle:
    """Run the spec's grid; optionally write one CSV per run plus a summary.

    Solver errors are recorded per run and the bundle is still returned.
    """
    from .fileio import save_summary, save_trace  # deferred: fileio imports solvers

    if spec.id == "exp1":
        problem = build_exp1()
        grid = [(label, problem, cfg, EXP1_INIT) for label, cfg in exp1_configs(spec.stop)]
    elif spec.id == "exp2":
        problem = build_exp2(spec.seed, spec.m or 5, spec.n or 20)
        grid = [(label, problem, cfg, None)
                for label, cfg in exp2_configs(problem, spec.stop)]
    else:
        grid = [entry if len(entry) == 4 else (*entry, None) for entry in spec.grid]

    bundle = ExperimentBundle(spec)
    for label, problem, cfg, init in grid:
        try:
            trace = run(problem, cfg, init=init)
        except Exception as exc:  # record and keep going
            bundle.errors[label] = f"{type(exc).__name__}: {exc}"
            continue
        bundle.traces[label] = trace
        bundle.summary.append(_summarize(label, cfg.algorithm, trace, spec.stop))

    if out_dir is not None:
        base = Path(out_dir) / spec.id
        base.mkdir(parents=True, exist_ok=True)
        for label, trace in bundle.traces.items():
            save_trace(trace, base / f"{label}.csv")
        save_summary(bundle.summary, base / "summary.csv")
    return bundle
