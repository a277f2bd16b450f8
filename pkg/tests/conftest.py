import numpy as np
import pytest

import mealopt as m


@pytest.fixture
def exp1_problem():
    return m.build_exp1()


def make_convex_qp(seed, n=5, mcon=2):
    """Equality-constrained convex QP with certified metadata (no box)."""
    rng = np.random.default_rng(seed)
    G = rng.uniform(-1, 1, size=(n, n))
    Q = G @ G.T / n + 0.1 * np.eye(n)
    r = rng.uniform(-1, 1, size=n)
    A = rng.uniform(-1, 1, size=(mcon, n))
    b = A @ rng.uniform(-1, 1, size=n)
    return m.Problem(m.LinearConstraint(A, b), m.Zero(), m.QuadraticSmooth(Q, r))


def make_box_qp(seed, n=4, mcon=2):
    """Random (generally indefinite) QP over [0,1]^n with feasible Ax=b."""
    rng = np.random.default_rng(seed)
    G = rng.uniform(0, 1, size=(n, n))
    Q = 0.5 * (G + G.T)
    r = rng.uniform(0, 1, size=n)
    A = rng.uniform(0, 1, size=(mcon, n))
    b = A @ rng.uniform(0, 1, size=n)
    box = m.BoxIndicator(np.zeros(n), np.ones(n))
    return m.Problem(m.LinearConstraint(A, b), box, m.QuadraticSmooth(Q, r))
