"""The five iterative algorithms and the trace-producing driver.

meal_step solves the proximal subproblem exactly, imeal_step to a certified
residual, limeal_step with the smooth part linearized at the current iterate.
alm_step is the classic method with a global subproblem oracle, and
prox_ialm_step is the projected prox-linear baseline. All share the updates

    z' = (1 - eta) z + eta x',      lam' = lam + beta (A x' - b).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .envelope import (
    DirectQP,
    EnvelopeContext,
    InnerProxGradient,
    PenaltyPlan,
    alpha_from_beta,
    augmented_lagrangian,
    lyapunov,
    potential_P,
    solve_subproblem,
)
from .errors import (
    GammaTooLarge,
    MissingMetadata,
    NotComposite,
    SubproblemNonconvexUnsupported,
)
from .problem import BoxIndicator, Problem, QuadraticForm, Zero, _vec
from .oracle import box_qp_global_min

__all__ = [
    "IterateState",
    "StepReport",
    "EpsilonSchedule",
    "ProxIALMParams",
    "StopRule",
    "MonitorFlags",
    "SolverConfig",
    "Trace",
    "meal_step",
    "imeal_step",
    "limeal_step",
    "alm_step",
    "prox_ialm_step",
    "run",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e12

ALGORITHMS = ("meal", "imeal", "limeal", "alm", "prox_ialm")

TRACE_COLUMNS = (
    "k", "objective", "feasibility", "stationarity", "lyapunov",
    "lambda_norm", "xz_gap", "wall_time",
)


@dataclass(frozen=True)
class IterateState:
    """Primal iterate, envelope center and multiplier after k steps."""

    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", _vec(self.x))
        object.__setattr__(self, "z", _vec(self.z))
        object.__setattr__(self, "lam", _vec(self.lam))
        for v in (self.x, self.z, self.lam):
            if not np.isfinite(v).all():
                raise ValueError("iterate state must be finite")


@dataclass
class StepReport:
    """Per-step byproducts: envelope gradient blocks and norms."""

    grad_phi_z: np.ndarray
    grad_phi_lambda: np.ndarray
    stationarity_norm: float
    feasibility: float
    lyapunov: Optional[float] = None
    inexact_residual_norm: Optional[float] = None
    inner_budget_exhausted: bool = False


@dataclass(frozen=True)
class EpsilonSchedule:
    """Square-summable inexactness schedule eps_k = eps0 / (k + 1)."""

    eps0: float = 1e-2

    def __call__(self, k: int) -> float:
        return self.eps0 / (k + 1.0)


@dataclass(frozen=True)
class ProxIALMParams:
    """Prox coefficient p, primal step s, optional dual step (defaults to beta)."""

    p: float
    s: float
    alpha_dual: Optional[float] = None

    def __post_init__(self):
        if self.p <= 0 or self.s <= 0:
            raise ValueError("p and s must be positive")
        if self.alpha_dual is not None and self.alpha_dual <= 0:
            raise ValueError("alpha_dual must be positive")


@dataclass(frozen=True)
class StopRule:
    max_iters: int = 2000
    stat_tol: float = 1e-6
    feas_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.stat_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class MonitorFlags:
    one_step_progress: bool = False
    dual_by_primal: bool = False


@dataclass
class SolverConfig:
    algorithm: str
    plan: PenaltyPlan
    subproblem: Union[str, object] = "auto"
    epsilon_schedule: Optional[Callable[[int], float]] = None
    prox_ialm_params: Optional[ProxIALMParams] = None
    stop: StopRule = field(default_factory=StopRule)
    monitors: MonitorFlags = field(default_factory=MonitorFlags)

    def validate(self, problem: Problem) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        modulus = self._gamma_modulus(problem)
        if modulus > 0 and self.plan.gamma >= 1.0 / modulus:
            raise GammaTooLarge(
                f"gamma={self.plan.gamma} >= 1/{modulus:.6g}, the "
                f"{self.algorithm} subproblem is not strongly convex"
            )
        if self.algorithm == "limeal" and not problem.composite:
            raise NotComposite("limeal needs a composite objective")
        if self.algorithm == "prox_ialm":
            if self.prox_ialm_params is None:
                raise ValueError("prox_ialm needs prox_ialm_params")
            if not problem.composite or problem.smooth.quadratic_terms() is None:
                raise NotComposite("prox_ialm needs a quadratic smooth part")
            if not isinstance(problem.prox_part, (BoxIndicator, Zero)):
                raise ValueError("prox_ialm needs a box (or absent) prox part")
            if abs(self.plan.gamma * self.prox_ialm_params.p - 1.0) > 1e-9:
                raise ValueError("prox_ialm requires plan.gamma == 1/p")
        if self.monitors.one_step_progress:
            if self.algorithm != "meal" or self.plan.mode != "fixed":
                raise ValueError(
                    "one_step_progress monitor applies to meal with fixed beta"
                )
        if self.monitors.dual_by_primal:
            problem.implicit_lipschitz_constant()  # raises MissingMetadata

    def _gamma_modulus(self, problem: Problem) -> float:
        # linearized updates only see g's curvature; the others see h + g
        if self.algorithm in ("limeal", "prox_ialm"):
            return problem.rho_g
        if self.algorithm == "alm":
            return 0.0  # no proximal term; subproblem handled by the oracle
        return problem.rho_total

    def resolve_subproblem(self, problem: Problem):
        if self.subproblem != "auto":
            return self.subproblem
        if self.algorithm in ("alm", "prox_ialm"):
            # neither touches the envelope subproblem machinery
            return InnerProxGradient()
        quad_smooth = problem.composite and problem.smooth.quadratic_terms() is not None
        pure_quad = not problem.composite and isinstance(problem.prox_part, QuadraticForm)
        if isinstance(problem.prox_part, Zero) and (quad_smooth or pure_quad):
            return DirectQP()
        if pure_quad:
            return DirectQP()
        return InnerProxGradient()


# ---------------------------------------------------------------------------
# step functions
# ---------------------------------------------------------------------------


def _advance(state: IterateState, x_new: np.ndarray, eta: float, beta: float,
             A: np.ndarray, b: np.ndarray) -> IterateState:
    z_new = (1.0 - eta) * state.z + eta * x_new
    lam_new = state.lam + beta * (A @ x_new - b)
    return IterateState(x_new, z_new, lam_new, state.k + 1)


def meal_step(ctx: EnvelopeContext, state: IterateState,
              warm_start=None) -> tuple[IterateState, StepReport]:
    """One exact proximal step on the envelope of the augmented Lagrangian."""
    beta = ctx.beta_at(state.k)
    sub = solve_subproblem(ctx, state.z, state.lam, beta, warm_start=warm_start)
    return _finish_meal_family(ctx, state, beta, sub)


def imeal_step(ctx: EnvelopeContext, state: IterateState, eps_k: float,
               warm_start=None) -> tuple[IterateState, StepReport]:
    """Inexact step: the subproblem residual is certified below eps_k."""
    beta = ctx.beta_at(state.k)
    sub = solve_subproblem(ctx, state.z, state.lam, beta, tol=eps_k,
                           warm_start=warm_start)
    return _finish_meal_family(ctx, state, beta, sub)


def _finish_meal_family(ctx, state, beta, sub):
    p = ctx.problem
    A, b = p.constraint.A, p.constraint.b
    gamma, eta = ctx.plan.gamma, ctx.plan.eta
    new = _advance(state, sub.x, eta, beta, A, b)
    gz = (state.z - sub.x) / gamma
    gl = A @ sub.x - b
    feas = float(np.linalg.norm(gl))
    norm = float(np.sqrt(np.sum(gz ** 2) + np.sum(gl ** 2)))
    return new, StepReport(gz, gl, norm, feas,
                           inexact_residual_norm=sub.residual_norm,
                           inner_budget_exhausted=sub.budget_exhausted)


def limeal_step(ctx: EnvelopeContext, state: IterateState,
                warm_start=None) -> tuple[IterateState, StepReport]:
    """Prox-linear step: h is replaced by its first-order model at x^k."""
    p = ctx.problem
    if not p.composite:
        raise NotComposite("limeal_step needs a composite objective")
    beta = ctx.beta_at(state.k)
    sub = solve_subproblem(ctx, state.z, state.lam, beta, linearize_at=state.x,
                           warm_start=warm_start)
    A, b = p.constraint.A, p.constraint.b
    gamma, eta = ctx.plan.gamma, ctx.plan.eta
    new = _advance(state, sub.x, eta, beta, A, b)
    gz = (state.z - sub.x) / gamma + (p.smooth_gradient(sub.x) - p.smooth_gradient(state.x))
    gl = A @ sub.x - b
    feas = float(np.linalg.norm(gl))
    norm = float(np.sqrt(np.sum(gz ** 2) + np.sum(gl ** 2)))
    return new, StepReport(gz, gl, norm, feas,
                           inexact_residual_norm=sub.residual_norm,
                           inner_budget_exhausted=sub.budget_exhausted)


def alm_step(ctx: EnvelopeContext, state: IterateState,
             warm_start=None) -> tuple[IterateState, StepReport]:
    """Classic step: global minimization of the augmented Lagrangian.

    Supported where the global-min oracle applies: quadratic objective with
    an (optional) box, at enumeration scale. The subproblem may be nonconvex;
    the oracle enumerates all face-stationary candidates.
    """
    p = ctx.problem
    beta = ctx.beta_at(state.k)
    H, c = _alm_quadratic(ctx, beta, state.lam)
    g = p.prox_part
    if isinstance(g, BoxIndicator):
        lower, upper = g.lower, g.upper
    elif isinstance(g, Zero):
        lower = np.full(p.n, -np.inf)
        upper = np.full(p.n, np.inf)
    else:
        raise SubproblemNonconvexUnsupported(
            "alm global minimization supports quadratic objectives over a box"
        )
    x_new, _ = box_qp_global_min(H, c, lower, upper)
    A, b = p.constraint.A, p.constraint.b
    lam_new = state.lam + beta * (A @ x_new - b)
    new = IterateState(x_new, x_new.copy(), lam_new, state.k + 1)
    gl = A @ x_new - b
    feas = float(np.linalg.norm(gl))
    # global minimization leaves zero dual residual at x'
    return new, StepReport(np.zeros(p.n), gl, feas, feas)


def _alm_quadratic(ctx, beta, lam):
    """Hessian and linear term of x -> L_beta(x, lam) for quadratic objectives."""
    p = ctx.problem
    if p.composite:
        terms = p.smooth.quadratic_terms()
        if terms is None:
            raise SubproblemNonconvexUnsupported("alm needs a quadratic smooth part")
        Q, r, _ = terms
    elif isinstance(p.prox_part, QuadraticForm):
        Q, r = p.prox_part.Q, p.prox_part.r
    else:
        raise SubproblemNonconvexUnsupported("alm needs a quadratic objective")
    A = p.constraint.A
    H = Q + beta * ctx.AtA
    c = r + A.T @ lam - beta * ctx.Atb
    return H, c


def prox_ialm_step(ctx: EnvelopeContext, state: IterateState,
                   params: ProxIALMParams) -> tuple[IterateState, StepReport]:
    """Projected prox-linear baseline step.

        xbar = (beta A'A + p I) x + Q x + A'lam - p z - (beta A'b - r)
        x'   = Proj_C(x - s xbar)

    followed by the shared z and lambda updates (dual step alpha_dual,
    defaulting to beta as in the printed scheme).
    """
    p = ctx.problem
    beta = ctx.beta_at(state.k)
    Q, r, _ = p.smooth.quadratic_terms()
    A, b = p.constraint.A, p.constraint.b
    x, z, lam = state.x, state.z, state.lam

    xbar = (beta * ctx.AtA + params.p * np.eye(p.n)) @ x + Q @ x + A.T @ lam \
        - params.p * z - (beta * ctx.Atb - r)
    stepped = x - params.s * xbar
    if isinstance(p.prox_part, BoxIndicator):
        x_new = np.clip(stepped, p.prox_part.lower, p.prox_part.upper)
    else:
        x_new = stepped

    eta = ctx.plan.eta
    dual = beta if params.alpha_dual is None else params.alpha_dual
    z_new = (1.0 - eta) * z + eta * x_new
    lam_new = lam + dual * (A @ x_new - b)
    new = IterateState(x_new, z_new, lam_new, state.k + 1)

    # projected-gradient mapping residual: lies in grad h(x') + A'lam' + N_C(x')
    v = (x - x_new) / params.s + Q @ (x_new - x) + beta * (ctx.AtA @ (x_new - x)) \
        - params.p * (x - z)
    gl = A @ x_new - b
    feas = float(np.linalg.norm(gl))
    norm = float(np.sqrt(np.sum(v ** 2) + np.sum(gl ** 2)))
    return new, StepReport(v, gl, norm, feas)


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------


@dataclass
class Trace:
    """Per-iteration record of a solver run."""

    algorithm: str
    columns: dict
    status: str                       # Converged | MaxIters | InnerBudgetExhausted | DivergenceDetected
    converged_at: Optional[int]
    oscillating: bool
    monitors: dict
    terminal: IterateState

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        return len(self.columns["k"])

    def iterations_to(self, stat_tol: float, feas_tol: float) -> Optional[int]:
        """First row index with stationarity <= stat_tol and feasibility <= feas_tol."""
        stat = self.columns["stationarity"]
        feas = self.columns["feasibility"]
        hit = np.where((stat <= stat_tol) & (feas <= feas_tol))[0]
        return int(hit[0]) if hit.size else None

    def monitor_violations(self, name: str) -> list:
        return [entry for entry in self.monitors.get(name, []) if not entry[-1]]


def _lyapunov_variant(algorithm: str, problem: Problem) -> Optional[str]:
    if algorithm not in ("meal", "imeal", "limeal"):
        return None
    family = {"meal": "meal", "imeal": "imeal", "limeal": "limeal"}[algorithm]
    suffix = "s2" if problem.prox_part.implicit_class.kind == "bounded" else "s1"
    return f"{family}-{suffix}"


def run(problem: Problem, config: SolverConfig, init=None) -> Trace:
    """Iterate until both tolerances are met, or a budget/guard trips.

    Stops when the trace's stationarity measure and the current feasibility
    are both below their tolerances (recording converged_at = that row), at
    max_iters (or the horizon K), on inner-budget exhaustion, or when the
    multiplier norm or objective magnitude passes the divergence limit.
    """
    config.validate(problem)
    ctx = EnvelopeContext(problem, config.plan, config.resolve_subproblem(problem))
    algo = config.algorithm

    if init is None:
        state = IterateState(np.zeros(problem.n), np.zeros(problem.n),
                             np.zeros(problem.m), 0)
    elif isinstance(init, IterateState):
        state = replace(init, k=0)
    else:
        x0, z0, lam0 = init
        state = IterateState(x0, z0, lam0, 0)
    if state.x.shape != (problem.n,) or state.z.shape != (problem.n,) \
            or state.lam.shape != (problem.m,):
        raise ValueError(
            f"init dimensions {state.x.shape}/{state.z.shape}/{state.lam.shape} "
            f"do not match the problem (n={problem.n}, m={problem.m})")

    budget = config.stop.max_iters
    if config.plan.mode == "horizon":
        budget = min(budget, config.plan.K)

    eps = config.epsilon_schedule or EpsilonSchedule()
    variant = _lyapunov_variant(algo, problem)
    L_f = None
    if config.monitors.dual_by_primal:
        L_f = problem.implicit_lipschitz_constant()

    cols = {name: [] for name in TRACE_COLUMNS}
    monitors: dict = {"one_step_progress": [], "dual_by_primal": []}
    lam_history = [state.lam.copy()]
    osc_streak, oscillating = 0, False
    status, converged_at = "MaxIters", None
    E_curr = None          # Lyapunov at the current state (from k >= 1)
    prev_state = None
    best_measure = np.inf
    warm = None
    t0 = time.perf_counter()

    def record_row(k, st, stat_col, lyap, gap):
        cols["k"].append(k)
        cols["objective"].append(problem.objective_value(st.x))
        cols["feasibility"].append(problem.constraint.residual(st.x))
        cols["stationarity"].append(stat_col)
        cols["lyapunov"].append(np.nan if lyap is None else lyap)
        cols["lambda_norm"].append(float(np.linalg.norm(st.lam)))
        cols["xz_gap"].append(gap)
        cols["wall_time"].append(time.perf_counter() - t0)

    k = 0
    for k in range(budget):
        if algo == "meal":
            new_state, report = meal_step(ctx, state, warm_start=warm)
        elif algo == "imeal":
            new_state, report = imeal_step(ctx, state, eps(k), warm_start=warm)
        elif algo == "limeal":
            new_state, report = limeal_step(ctx, state, warm_start=warm)
        elif algo == "alm":
            new_state, report = alm_step(ctx, state)
        else:
            new_state, report = prox_ialm_step(ctx, state, config.prox_ialm_params)

        raw = report.stationarity_norm
        if algo in ("meal", "imeal"):
            best_measure = min(best_measure, raw)
            stat_col = best_measure
        else:
            stat_col = raw

        # Lyapunov at the new state (usable from k+1 >= 1)
        if variant is not None:
            beta_next = ctx.beta_at(k + 1)
            E_next = lyapunov(ctx, variant, new_state.x, new_state.z, new_state.lam,
                              z_prev=state.z, x_prev=state.x,
                              beta=beta_next, alpha=ctx.alpha_at(k + 1))
        elif algo == "alm":
            E_next = augmented_lagrangian(ctx, new_state.x, new_state.lam,
                                          ctx.beta_at(k + 1))
        else:
            E_next = potential_P(ctx, new_state.x, new_state.z, new_state.lam,
                                 ctx.beta_at(k + 1))
        report.lyapunov = E_next

        record_row(k, state, stat_col, E_curr, float(np.linalg.norm(new_state.x - state.z)))

        if k >= 1:
            gamma, eta = ctx.plan.gamma, ctx.plan.eta
            if config.monitors.one_step_progress:
                # monitored with the s1 Lyapunov and alpha from the fixed beta
                beta = ctx.beta_at(k)
                alpha = alpha_from_beta(beta, beta, gamma, eta, ctx.c_gamma_A)
                E_k = lyapunov(ctx, "meal-s1", state.x, state.z, state.lam,
                               z_prev=prev_state.z, beta=beta, alpha=alpha)
                E_k1 = lyapunov(ctx, "meal-s1", new_state.x, new_state.z,
                                new_state.lam, z_prev=state.z, beta=beta, alpha=alpha)
                lhs = E_k - E_k1
                rhs = (gamma * eta * (2.0 - eta) / 4.0) * raw ** 2
                monitors["one_step_progress"].append((k, lhs, rhs, lhs >= rhs - 1e-9))
            if config.monitors.dual_by_primal:
                dl = float(np.sum((new_state.lam - state.lam) ** 2))
                bound = (2.0 / ctx.c_gamma_A) * (
                    (gamma * L_f + 1.0) ** 2 * float(np.sum((new_state.x - state.x) ** 2))
                    + float(np.sum((state.z - prev_state.z) ** 2))
                )
                monitors["dual_by_primal"].append((k, dl, bound, dl <= bound + 1e-9))

        # oscillation detector on the multiplier sequence
        lam_history.append(new_state.lam.copy())
        if len(lam_history) >= 3:
            d2 = float(np.linalg.norm(lam_history[-1] - lam_history[-3]))
            d1 = float(np.linalg.norm(lam_history[-1] - lam_history[-2]))
            osc_streak = osc_streak + 1 if (d2 <= 1e-6 and d1 >= 1e-3) else 0
            if osc_streak >= 20:
                oscillating = True
        if len(lam_history) > 3:
            lam_history.pop(0)

        if report.inner_budget_exhausted:
            status = "InnerBudgetExhausted"
            prev_state, state, E_curr = state, new_state, E_next
            k += 1
            break
        if (np.linalg.norm(new_state.lam) > DIVERGENCE_LIMIT
                or abs(problem.objective_value(new_state.x)) > DIVERGENCE_LIMIT):
            status = "DivergenceDetected"
            prev_state, state, E_curr = state, new_state, E_next
            k += 1
            break
        if stat_col <= config.stop.stat_tol and \
                cols["feasibility"][-1] <= config.stop.feas_tol:
            status = "Converged"
            converged_at = k
            prev_state, state, E_curr = state, new_state, E_next
            k += 1
            break

        prev_state, state, E_curr = state, new_state, E_next
        warm = new_state.x
    else:
        k = budget

    # terminal row for the final state; the measure column repeats
    last_stat = cols["stationarity"][-1] if cols["stationarity"] else np.nan
    record_row(k, state, last_stat, E_curr, np.nan)

    columns = {name: np.asarray(vals, dtype=float if name != "k" else int)
               for name, vals in cols.items()}
    return Trace(algo, columns, status, converged_at, oscillating,
                 monitors, state)
