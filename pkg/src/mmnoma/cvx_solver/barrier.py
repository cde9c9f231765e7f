"""Log-barrier interior-point method for :class:`ConvexSubproblem`.

Damped Newton centering with backtracking line search; a phase-I problem
(minimize the largest violation ``s`` of the non-epigraph constraints) is
run with the same machinery when no strictly feasible start is supplied.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .problem import Constraint, ConvexSubproblem

DEFAULT_TOL = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAXITER = "MaxIter"


@dataclass
class SolveResult:
    x: np.ndarray
    z: float
    status: Status
    gap: float
    kkt_residual: float
    newton_steps: int
    phase1_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class SolverOptions:
    tol: float = DEFAULT_TOL
    mu: float = 10.0
    max_newton: int = 200
    newton_tol: float = 1e-6
    alpha: float = 0.01
    beta: float = 0.5
    start_margin: float = 0.5
    unbounded_norm: float = 1e12


def _newton_direction(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # Jacobi scaling keeps the mixed-unit variables (watts vs. SINRs) well conditioned
    diag = np.sqrt(np.maximum(H.diagonal(), 1e-300))
    Hs = H / np.outer(diag, diag)
    gs = grad / diag
    try:
        step = np.linalg.solve(Hs, -gs)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(Hs + 1e-12 * np.eye(len(gs)), -gs, rcond=None)[0]
    return step / diag


class _Barrier:
    def __init__(self, problem: ConvexSubproblem, opts: SolverOptions):
        self.p = problem
        self.o = opts

    def phi_change(self, x, xn, s, t):
        """phi(xn) - phi(x) computed without forming the (large) absolute values."""
        gn = self.p.values(xn)
        if gn.max() >= 0:
            return np.inf
        return -t * (self.p.objective @ (xn - x)) - np.sum(np.log1p((-gn - s) / s))

    def center(self, x, t, budget, stop=None):
        """Newton centering; returns (x, steps, converged, grad/t residual)."""
        p, o = self.p, self.o
        c = p.objective
        for k in range(budget):
            g, J, ell = p.jacobian(x)
            s = -g
            grad = -t * c + J.T @ (1.0 / s)
            H = p.barrier_hessian(s, J, ell)
            dx = _newton_direction(H, grad)
            dec = -grad @ dx
            if dec / 2 <= o.newton_tol or not np.isfinite(dec):
                return x, k, True, float(np.sqrt(grad @ grad)) / t
            step = 1.0
            while step > 1e-16:
                xn = x + step * dx
                if self.phi_change(x, xn, s, t) <= -o.alpha * step * dec:
                    break
                step *= o.beta
            else:
                # no descent left at machine precision: treat as centred
                return x, k + 1, dec / 2 <= 1e3 * o.newton_tol, np.linalg.norm(grad) / t
            x = xn
            if np.abs(x).max() > o.unbounded_norm:
                raise _Unbounded(x, k + 1)
            if stop is not None and stop(x):
                return x, k + 1, True, 0.0
        return x, budget, False, np.inf

    def run(self, x, t0, budget, stop=None):
        m = self.p.m
        t = t0
        steps = 0
        resid = np.inf
        while True:
            x, k, converged, resid = self.center(x, t, budget - steps, stop)
            steps += k
            if stop is not None and stop(x):
                return x, steps, m / t, resid, True
            if m / t < self.o.tol and converged:
                return x, steps, m / t, resid, True
            if steps >= budget:
                return x, steps, m / t, resid, False
            if not converged:
                # stalled line search: accept the current iterate
                return x, steps, m / t, resid, False
            t *= self.o.mu


class _Unbounded(Exception):
    def __init__(self, x, steps):
        self.x, self.steps = x, steps


def _objective_columns(problem: ConvexSubproblem) -> np.ndarray:
    cols = np.flatnonzero(problem.objective)
    if cols.size != 1 or problem.objective[cols[0]] <= 0:
        raise InvalidInputError("objective must be a single maximized epigraph variable")
    return cols


def _epigraph_start(problem: ConvexSubproblem, x: np.ndarray, margin: float) -> np.ndarray:
    """Place the epigraph variable strictly below every bound the epigraph rows impose on it."""
    iz = _objective_columns(problem)[0]
    rows = problem.epigraph_rows()
    coef = problem.B[rows, iz]
    if np.any(coef <= 0) or (problem.quad_idx.size and np.any(problem.A_stack[:, iz, :] != 0)):
        raise InvalidInputError("epigraph variable must enter constraints as +z")
    x = x.copy()
    if rows.size == 0:
        return x
    x[iz] = 0.0
    rest = problem.values(x)[rows]
    bound = np.min(-rest / coef)
    x[iz] = bound - margin * max(1.0, abs(bound)) * 1e-1
    return x


def _phase_one(problem: ConvexSubproblem, x: np.ndarray, opts: SolverOptions, budget: int):
    """Drive all non-epigraph constraints strictly negative; returns (x or None, steps)."""
    iz = _objective_columns(problem)[0]
    keep_rows = np.setdiff1d(np.arange(problem.m), problem.epigraph_rows())
    cols = np.setdiff1d(np.arange(problem.n), [iz])
    n1 = cols.size + 1
    cons = []
    for i in keep_rows:
        con = problem.constraints[i]
        b = np.append(con.b[cols], -1.0)
        A = None
        if con.A is not None:
            A = np.zeros((n1, n1))
            A[:-1, :-1] = con.A[np.ix_(cols, cols)]
        a = None if con.a is None else np.append(con.a[cols], 0.0)
        cons.append(Constraint(con.kind, b, con.c, A, con.w, a, con.d, con.label))
    # keep s bounded below so the phase-I problem has a finite optimum
    lower = np.zeros(n1)
    lower[-1] = -1.0
    cons.append(Constraint("affine", lower, -1.0, label="phase1-floor"))
    obj = np.zeros(n1)
    obj[-1] = -1.0
    aux = ConvexSubproblem(n1, cons, obj)

    y = np.append(x[cols], 0.0)
    viol = aux.values(np.append(x[cols], 0.0))[:-1]
    if not np.all(np.isfinite(viol)):
        raise InvalidInputError("phase-I start lies outside the log domain")
    y[-1] = max(np.max(viol), 0.0) + 1.0
    solver = _Barrier(aux, opts)

    def done(y):
        return y[-1] < 0 and np.all(aux.values(y)[:-1] < 0)

    y, steps, _, _, _ = solver.run(y, 1.0, budget, stop=done)
    if not done(y):
        return None, steps
    out = x.copy()
    out[cols] = y[:-1]
    return out, steps


def is_strictly_feasible(problem: ConvexSubproblem, x: np.ndarray) -> bool:
    return bool(np.all(problem.values(x) < 0))


def solve(problem: ConvexSubproblem, tol: float = DEFAULT_TOL, x0=None, options: SolverOptions | None = None) -> SolveResult:
    """Maximize the problem's epigraph variable.

    Uses ``x0`` (or ``problem.x0``) when it is strictly feasible; otherwise
    the epigraph variable is lowered, and if the remaining constraints are
    still violated a phase-I search is run. Termination is certified by the
    barrier duality gap ``m / t < tol``.
    """
    opts = options or SolverOptions()
    opts = SolverOptions(**{**opts.__dict__, "tol": tol})
    x = np.array(problem.x0 if x0 is None else x0, dtype=float)
    if x.shape != (problem.n,):
        raise InvalidInputError(f"start point has shape {x.shape}, expected ({problem.n},)")
    phase1 = 0
    if not is_strictly_feasible(problem, x):
        x = _epigraph_start(problem, x, opts.start_margin)
        if not is_strictly_feasible(problem, x):
            if not problem.in_domain(x):
                raise InvalidInputError("start point lies outside the log domain")
            x1, phase1 = _phase_one(problem, x, opts, opts.max_newton)
            if x1 is None:
                return SolveResult(x, -np.inf, Status.INFEASIBLE, np.inf, np.inf, phase1, phase1)
            x = _epigraph_start(problem, x1, opts.start_margin)

    if problem.epigraph_rows().size == 0:
        # nothing bounds the epigraph variable
        return SolveResult(x, np.inf, Status.UNBOUNDED, np.inf, np.inf, phase1, phase1)

    # start with m/t of the order of the objective's distance to its bound
    iz = _objective_columns(problem)[0]
    bound = _epigraph_start(problem, x, 0.0)[iz]
    gap0 = max(bound - x[iz], 1e-3)
    t0 = problem.m / gap0
    budget = max(opts.max_newton - phase1, 1)
    solver = _Barrier(problem, opts)
    try:
        x, steps, gap, resid, ok = solver.run(x, t0, budget)
    except _Unbounded as exc:
        return SolveResult(exc.x, np.inf, Status.UNBOUNDED, np.inf, np.inf, exc.steps + phase1, phase1)
    status = Status.OPTIMAL if ok else Status.MAXITER
    z = float(problem.objective @ x)
    return SolveResult(x, z, status, float(gap), float(resid), steps + phase1, phase1)
