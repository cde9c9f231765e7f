"""Independent cross-check solver built on scipy's SLSQP.

Shares nothing with the barrier code beyond the problem description: it
works on its own variable scaling, uses analytic constraint Jacobians and an
active-set SQP method instead of Newton centering.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .barrier import SolveResult, Status
from .problem import ConvexSubproblem


def _scale_for(x: np.ndarray) -> np.ndarray:
    s = np.abs(x)
    top = s.max(initial=0.0)
    if top == 0:
        return np.ones_like(s)
    return np.maximum(s, 1e-3 * top)


def cross_solve(problem: ConvexSubproblem, x_start: np.ndarray, tol: float = 1e-10, maxiter: int = 2000) -> SolveResult:
    """Maximize the epigraph variable with SLSQP from a feasible ``x_start``."""
    x_start = np.asarray(x_start, dtype=float)
    scale = _scale_for(x_start)
    iz = np.flatnonzero(problem.objective)
    scale[iz] = 1.0
    c = problem.objective * scale

    def cons_fun(y):
        g = problem.values(y * scale)
        return np.where(np.isfinite(g), -g, -1e30)

    def cons_jac(y):
        _, J, _ = problem.jacobian(y * scale)
        return -J * scale[None, :]

    res = minimize(
        lambda y: -c @ y,
        x_start / scale,
        jac=lambda y: -c,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": cons_fun, "jac": cons_jac}],
        options={"ftol": tol, "maxiter": maxiter},
    )
    x = res.x * scale
    viol = problem.max_violation(x)
    status = Status.OPTIMAL if res.success and viol < 1e-7 else Status.MAXITER
    return SolveResult(x, float(problem.objective @ x), status, np.nan, np.nan, int(res.nit))
