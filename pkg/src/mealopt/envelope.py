"""Augmented Lagrangian, its Moreau envelope, and the penalty calculus.

The augmented Lagrangian of `min f(x) s.t. Ax = b` is

    L_beta(x, lam) = f(x) + <lam, Ax - b> + (beta/2) ||Ax - b||^2,

and its Moreau envelope in x (for fixed lam) is

    phi_beta(z, lam) = min_x { L_beta(x, lam) + ||x - z||^2 / (2 gamma) }.

This module evaluates both, solves the strongly convex inner problem by
three interchangeable paths, and implements the penalty-parameter calculus
(alpha from beta, beta for a target alpha, per-variant admissible caps) plus
the potential and Lyapunov functions used as runtime descent monitors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    GammaTooLarge,
    InvalidSubproblemPath,
    MissingMetadata,
    NonPositiveAlpha,
    NotComposite,
    WindowTooShort,
)
from .problem import (
    BoxIndicator,
    Problem,
    QuadraticForm,
    Zero,
    _vec,
    smallest_positive_eigenvalue,
)

__all__ = [
    "PenaltyPlan",
    "DirectQP",
    "InnerProxGradient",
    "Paper72FastPath",
    "EnvelopeContext",
    "SubproblemResult",
    "augmented_lagrangian",
    "potential_P",
    "solve_subproblem",
    "alpha_from_beta",
    "beta_for_target_alpha",
    "alpha_cap",
    "stationarity_stream",
    "lyapunov",
    "LYAPUNOV_COEFFICIENTS",
]


# ---------------------------------------------------------------------------
# penalty plan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltyPlan:
    """Penalty schedule plus the proximal and primal step parameters.

    mode "fixed": constant beta. mode "horizon": run exactly K iterations
    with the constant beta_k that makes alpha_k == alpha_target / K.
    """

    mode: str
    gamma: float
    eta: float
    beta: Optional[float] = None
    K: Optional[int] = None
    alpha_target: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("fixed", "horizon"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not (0.0 < self.eta < 2.0):
            raise ValueError("eta must lie in (0, 2)")
        if self.mode == "fixed":
            if self.beta is None or self.beta <= 0:
                raise ValueError("fixed mode needs beta > 0")
        else:
            if self.K is None or self.K < 1:
                raise ValueError("horizon mode needs K >= 1")
            if self.alpha_target is None or self.alpha_target <= 0:
                raise ValueError("horizon mode needs alpha_target > 0")

    @staticmethod
    def fixed(beta: float, gamma: float, eta: float) -> "PenaltyPlan":
        return PenaltyPlan("fixed", gamma, eta, beta=beta)

    @staticmethod
    def horizon(K: int, alpha_target: float, gamma: float, eta: float) -> "PenaltyPlan":
        return PenaltyPlan("horizon", gamma, eta, K=K, alpha_target=alpha_target)


# ---------------------------------------------------------------------------
# subproblem solver specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectQP:
    """Dense SPD solve; valid when the subproblem objective is quadratic."""


@dataclass(frozen=True)
class InnerProxGradient:
    """Proximal gradient on the strongly convex subproblem.

    Stops when the constructed stationarity residual drops below tol; the
    residual lives in the subproblem's subdifferential, so it certifies the
    inexactness condition directly.
    """

    tol: float = 1e-10
    max_inner: int = 50000


@dataclass(frozen=True)
class Paper72FastPath:
    """Unconstrained linearized solve followed by box projection.

    Replicates the quadratic-program recipe: x_tilde from the SPD system,
    then clip to the box. Exact only while the box is inactive; the returned
    residual is therefore not certified (None).
    """


SubproblemSpec = object  # one of the three dataclasses above


# ---------------------------------------------------------------------------
# penalty calculus
# ---------------------------------------------------------------------------


def alpha_from_beta(beta_k: float, beta_next: float, gamma: float, eta: float,
                    c_gamma_A: float) -> float:
    """alpha_k = (beta_k + beta_{k+1} + gamma*eta*(1 - eta/2)) / (2 c beta_k^2).

    With beta fixed the numerator's beta terms reduce to 2*beta.
    """
    if c_gamma_A <= 0:
        raise ValueError("c_gamma_A must be positive")
    return (beta_k + beta_next + gamma * eta * (1.0 - eta / 2.0)) / (
        2.0 * c_gamma_A * beta_k ** 2
    )


def beta_for_target_alpha(alpha_bar: float, gamma: float, eta: float,
                          c_gamma_A: float, margin: float = 1e-6,
                          horizon_K: Optional[int] = None) -> float:
    """Smallest beta meeting the alpha condition, inflated by `margin`.

    Fixed mode inverts alpha(beta) < alpha_bar:

        beta = (1 + sqrt(1 + eta(2-eta) gamma c alpha_bar)) / (2 c alpha_bar)

    times (1 + margin) so the strict inequality holds. Horizon mode returns
    the K-scaled constant that achieves alpha_k == alpha_bar / K exactly
    (no margin: the schedule targets equality).
    """
    if alpha_bar <= 0:
        raise NonPositiveAlpha(f"alpha target must be positive, got {alpha_bar}")
    disc = eta * (2.0 - eta) * gamma * c_gamma_A * alpha_bar
    if horizon_K is None:
        beta = (1.0 + np.sqrt(1.0 + disc)) / (2.0 * c_gamma_A * alpha_bar)
        return float(beta * (1.0 + margin))
    K = int(horizon_K)
    return float(K * (1.0 + np.sqrt(1.0 + disc / K)) / (2.0 * c_gamma_A * alpha_bar))


_VARIANTS = ("meal-a", "meal-b", "imeal-a", "imeal-b", "limeal-a", "limeal-b")


def alpha_cap(problem: Problem, plan: PenaltyPlan, variant: str) -> float:
    """Admissible upper bound on alpha for the given algorithm variant.

    The "-a" variants assume the implicit Lipschitz class (and need L_f or
    L_g); the "-b" variants assume the bounded class and need only the
    moduli. LiMEAL variants additionally require gamma below the root bound

        gamma < 2 / ((rho_g + L_h) (1 + sqrt(1 + 2(2-eta) eta L_h^2 /
                                             (rho_g + L_h)^2)))

    and raise GammaTooLarge otherwise.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"variant must be one of {_VARIANTS}")
    g, eta = plan.gamma, plan.eta

    if variant.startswith("limeal"):
        if not problem.composite:
            raise NotComposite("LiMEAL caps need a composite objective")
        rho_g, L_h = problem.rho_g, problem.L_h
        base = rho_g + L_h
        if base > 0:
            root = 1.0 + np.sqrt(1.0 + 2.0 * (2.0 - eta) * eta * L_h ** 2 / base ** 2)
            gamma_max = 2.0 / (base * root)
            if g >= gamma_max:
                raise GammaTooLarge(
                    f"gamma={g} >= {gamma_max:.6g}, the admissible LiMEAL bound"
                )
        margin = 1.0 - g * base - eta * (1.0 - eta / 2.0) * g ** 2 * L_h ** 2
        if variant == "limeal-a":
            cls = problem.prox_part.implicit_class
            if cls.kind != "lipschitz":
                raise MissingMetadata("L_g", "limeal-a needs the Lipschitz class on g")
            L_g = cls.constant
            return min(
                (1.0 / (12.0 * g)) * (2.0 / eta - 1.0),
                margin / (6.0 * g * ((1.0 + g * L_g) ** 2 + g ** 2 * L_h ** 2)),
            )
        return min(
            margin / (8.0 * g * (1.0 + g ** 2 * L_h ** 2)),
            (1.0 / (16.0 * g)) * (2.0 / eta - 1.0),
        )

    rho = problem.rho_total
    if rho > 0 and g >= 1.0 / rho:
        raise GammaTooLarge(f"gamma={g} >= 1/rho={1.0 / rho:.6g}")
    if variant == "meal-a":
        L_f = problem.implicit_lipschitz_constant()
        return min(
            (1.0 - g * rho) / (4.0 * g * (1.0 + g * L_f) ** 2),
            (1.0 / (8.0 * g)) * (2.0 / eta - 1.0),
        )
    if variant == "meal-b":
        return min((1.0 - rho * g) / (6.0 * g), (1.0 / (12.0 * g)) * (2.0 / eta - 1.0))
    if variant == "imeal-a":
        L_f = problem.implicit_lipschitz_constant()
        return min(
            (1.0 - g * rho) / (6.0 * g * (1.0 + g * L_f) ** 2),
            (1.0 / (12.0 * g)) * (2.0 / eta - 1.0),
        )
    # imeal-b
    return min((1.0 - rho * g) / (8.0 * g), (1.0 / (16.0 * g)) * (2.0 / eta - 1.0))


# ---------------------------------------------------------------------------
# context
# ---------------------------------------------------------------------------


@dataclass
class EnvelopeContext:
    """Problem + penalty plan + inner-solver choice, with cached factors.

    Immutable after construction and safe to share; the factorization cache
    is built eagerly for the plan's beta when a direct path is selected.
    """

    problem: Problem
    plan: PenaltyPlan
    subproblem: SubproblemSpec = field(default_factory=InnerProxGradient)

    def __post_init__(self):
        A = self.problem.constraint.A
        self.AtA = A.T @ A
        self.Atb = A.T @ self.problem.constraint.b
        self.sigma_min_pos = smallest_positive_eigenvalue(self.AtA)
        self.A_norm2 = float(np.linalg.eigvalsh(self.AtA).max())  # ||A||_2^2
        self.c_gamma_A = self.plan.gamma ** 2 * self.sigma_min_pos
        self._chol_cache: dict = {}

        if isinstance(self.subproblem, (DirectQP, Paper72FastPath)):
            self._validate_direct_paths()
            self._factor(self.beta_at(0), include_Q=isinstance(self.subproblem, DirectQP))

    # -- plan-derived quantities ------------------------------------------

    def beta_at(self, k: int) -> float:
        plan = self.plan
        if plan.mode == "fixed":
            return plan.beta
        return beta_for_target_alpha(
            plan.alpha_target, plan.gamma, plan.eta, self.c_gamma_A, horizon_K=plan.K
        )

    def alpha_at(self, k: int) -> float:
        b0, b1 = self.beta_at(k), self.beta_at(k + 1)
        return alpha_from_beta(b0, b1, self.plan.gamma, self.plan.eta, self.c_gamma_A)

    # -- quadratic structure helpers --------------------------------------

    def _quad_smooth_terms(self):
        if not self.problem.composite:
            return None
        return self.problem.smooth.quadratic_terms()

    def _validate_direct_paths(self):
        p = self.problem
        if isinstance(self.subproblem, DirectQP):
            quad_ok = (
                p.composite and p.smooth.quadratic_terms() is not None
                and isinstance(p.prox_part, Zero)
            ) or (not p.composite and isinstance(p.prox_part, QuadraticForm))
            if not quad_ok:
                raise InvalidSubproblemPath(
                    "DirectQP needs a quadratic objective with no nonsmooth part"
                )
        else:  # Paper72FastPath
            if not (p.composite and p.smooth.quadratic_terms() is not None):
                raise InvalidSubproblemPath("fast path needs a quadratic smooth part")
            if not isinstance(p.prox_part, (BoxIndicator, Zero)):
                raise InvalidSubproblemPath("fast path needs a box (or absent) prox part")

    def _factor(self, beta: float, include_Q: bool):
        key = (beta, include_Q)
        if key not in self._chol_cache:
            n = self.problem.n
            M = beta * self.AtA + np.eye(n) / self.plan.gamma
            if include_Q:
                Q = self._subproblem_hessian()
                M = M + Q
            self._chol_cache[key] = cho_factor(M)
        return self._chol_cache[key]

    def _subproblem_hessian(self) -> np.ndarray:
        """Hessian of the smooth objective part entering a DirectQP solve."""
        p = self.problem
        if p.composite:
            Q, _, _ = p.smooth.quadratic_terms()
            return Q
        quad = p.prox_part
        return quad.Q


# ---------------------------------------------------------------------------
# values
# ---------------------------------------------------------------------------


def augmented_lagrangian(ctx: EnvelopeContext, x, lam, beta: float) -> float:
    """L_beta(x, lam) = f(x) + <lam, Ax-b> + (beta/2)||Ax-b||^2."""
    x, lam = _vec(x), _vec(lam)
    resid = ctx.problem.constraint.A @ x - ctx.problem.constraint.b
    f = ctx.problem.objective_value(x)
    return f + float(lam @ resid) + 0.5 * beta * float(resid @ resid)


def potential_P(ctx: EnvelopeContext, x, z, lam, beta: float) -> float:
    """P_beta(x, z, lam) = L_beta(x, lam) + ||x - z||^2 / (2 gamma)."""
    x, z = _vec(x), _vec(z)
    return augmented_lagrangian(ctx, x, lam, beta) + float(
        np.sum((x - z) ** 2)
    ) / (2.0 * ctx.plan.gamma)


# ---------------------------------------------------------------------------
# subproblem
# ---------------------------------------------------------------------------


@dataclass
class SubproblemResult:
    x: np.ndarray
    residual: Optional[np.ndarray]      # s in the subdifferential sum, None if uncertified
    residual_norm: Optional[float]
    inner_iterations: int
    budget_exhausted: bool = False

    def objective(self, ctx, z, lam, beta, linearize_at=None) -> float:
        return _subproblem_value(ctx, self.x, z, lam, beta, linearize_at)


def _subproblem_value(ctx, x, z, lam, beta, linearize_at=None) -> float:
    """Value of the inner objective at x (h linearized when requested)."""
    p = ctx.problem
    x, z = _vec(x), _vec(z)
    resid = p.constraint.A @ x - p.constraint.b
    val = p.prox_part.value(x)
    if p.composite:
        if linearize_at is None:
            val += p.smooth.value(x)
        else:
            x0 = _vec(linearize_at)
            val += p.smooth.value(x0) + float(p.smooth.gradient(x0) @ (x - x0))
    val += float(lam @ resid) + 0.5 * beta * float(resid @ resid)
    val += float(np.sum((x - z) ** 2)) / (2.0 * ctx.plan.gamma)
    return val


def solve_subproblem(ctx: EnvelopeContext, z, lam, beta: float,
                     linearize_at=None, tol: Optional[float] = None,
                     warm_start=None) -> SubproblemResult:
    """Minimize L_beta(., lam) + ||. - z||^2/(2 gamma), optionally linearized.

    With `linearize_at` the smooth part is replaced by its first-order model
    there. The result's residual lies in the subproblem subdifferential at
    the returned point (exact paths give zero up to solve accuracy); the fast
    path returns an uncertified None residual.
    """
    z, lam = _vec(z), _vec(lam)
    spec = ctx.subproblem
    p = ctx.problem
    gamma = ctx.plan.gamma

    if isinstance(spec, DirectQP):
        if linearize_at is None:
            factor = ctx._factor(beta, include_Q=True)
            Q, r, _ = _objective_quad_terms(p)
            rhs = z / gamma + beta * ctx.Atb - r - p.constraint.A.T @ lam
        else:
            factor = ctx._factor(beta, include_Q=False)
            x0 = _vec(linearize_at)
            grad0 = p.smooth_gradient(x0)
            rhs = z / gamma + beta * ctx.Atb - grad0 - p.constraint.A.T @ lam
        x = cho_solve(factor, rhs)
        n = z.shape[0]
        return SubproblemResult(x, np.zeros(n), 0.0, 0)

    if isinstance(spec, Paper72FastPath):
        if linearize_at is None:
            raise InvalidSubproblemPath("fast path is a linearized-update scheme")
        factor = ctx._factor(beta, include_Q=False)
        x0 = _vec(linearize_at)
        Q, r, _ = p.smooth.quadratic_terms()
        rhs = z / gamma + beta * ctx.Atb - r - Q @ x0 - p.constraint.A.T @ lam
        x_tilde = cho_solve(factor, rhs)
        if isinstance(p.prox_part, BoxIndicator):
            x = np.clip(x_tilde, p.prox_part.lower, p.prox_part.upper)
        else:
            x = x_tilde
        return SubproblemResult(x, None, None, 0)

    # inner proximal gradient
    assert isinstance(spec, InnerProxGradient)
    stop_tol = spec.tol if tol is None else tol
    g = p.prox_part
    A, b = p.constraint.A, p.constraint.b
    x = _vec(warm_start).copy() if warm_start is not None else z.copy()
    if isinstance(g, BoxIndicator):
        x = np.clip(x, g.lower, g.upper)

    lin_grad = p.smooth_gradient(_vec(linearize_at)) if linearize_at is not None else None

    def smooth_grad(xx):
        out = beta * (ctx.AtA @ xx - ctx.Atb) + A.T @ lam + (xx - z) / gamma
        if p.composite:
            out = out + (lin_grad if lin_grad is not None else p.smooth_gradient(xx))
        return out

    L_smooth = beta * ctx.A_norm2 + 1.0 / gamma
    if p.composite and linearize_at is None:
        L_smooth += p.L_h
    t = 1.0 / L_smooth

    s_vec = None
    grad_prev = smooth_grad(x)
    for it in range(1, spec.max_inner + 1):
        x_new = g.prox(t, x - t * grad_prev)
        grad_new = smooth_grad(x_new)
        # s = (x - x+)/t - grad(x) + grad(x+) lies in the subdifferential at x+
        s_vec = (x - x_new) / t - grad_prev + grad_new
        s_norm = float(np.linalg.norm(s_vec))
        x, grad_prev = x_new, grad_new
        if s_norm <= stop_tol:
            return SubproblemResult(x, s_vec, s_norm, it)
    return SubproblemResult(x, s_vec, float(np.linalg.norm(s_vec)), spec.max_inner,
                            budget_exhausted=True)


def _objective_quad_terms(p: Problem):
    if p.composite:
        return p.smooth.quadratic_terms()
    quad = p.prox_part
    return quad.Q, quad.r, quad.c


# ---------------------------------------------------------------------------
# stationarity stream and Lyapunov values
# ---------------------------------------------------------------------------


def stationarity_stream(reports) -> np.ndarray:
    """Running minimum of envelope-gradient norms: the per-k measure.

    Accepts raw norms or step reports carrying `stationarity_norm`.
    """
    norms = [getattr(r, "stationarity_norm", r) for r in reports]
    return np.minimum.accumulate(np.asarray(norms, dtype=float))


# per-variant multiplier of alpha_k in the Lyapunov value; the limeal pair
# also carries the gamma^2 L_h^2 ||x - x_prev||^2 term
LYAPUNOV_COEFFICIENTS = {
    "meal-s1": 2.0,
    "meal-s2": 3.0,
    "imeal-s1": 3.0,
    "imeal-s2": 4.0,
    "limeal-s1": 3.0,
    "limeal-s2": 4.0,
}


def lyapunov(ctx: EnvelopeContext, variant: str, x, z, lam, z_prev,
             x_prev=None, beta: Optional[float] = None,
             alpha: Optional[float] = None) -> float:
    """Lyapunov value E^k for the given variant at state (x, z, lam).

    E^k = P_beta(x, z, lam) + coef * alpha * (||z - z_prev||^2
          [+ gamma^2 L_h^2 ||x - x_prev||^2 for limeal variants]).

    Defined from k >= 1; callers without a predecessor must not ask
    (WindowTooShort).
    """
    if variant not in LYAPUNOV_COEFFICIENTS:
        raise ValueError(f"unknown Lyapunov variant {variant!r}")
    if z_prev is None:
        raise WindowTooShort("Lyapunov needs z_prev (k >= 1)")
    beta = ctx.beta_at(0) if beta is None else beta
    alpha = ctx.alpha_at(0) if alpha is None else alpha
    coef = LYAPUNOV_COEFFICIENTS[variant]
    x, z, z_prev = _vec(x), _vec(z), _vec(z_prev)
    extra = float(np.sum((z - z_prev) ** 2))
    if variant.startswith("limeal"):
        if x_prev is None:
            raise WindowTooShort("limeal Lyapunov needs x_prev (k >= 1)")
        if not ctx.problem.composite:
            raise NotComposite("limeal Lyapunov needs a composite objective")
        L_h = ctx.problem.L_h
        extra += ctx.plan.gamma ** 2 * L_h ** 2 * float(np.sum((x - _vec(x_prev)) ** 2))
    return potential_P(ctx, x, z, lam, beta) + coef * alpha * extra
