"""Max-min EE solvers: bisection on the parametric objective L(eta) around two inner loops.

* joint (scheme 1): alternate detection-matrix SCA and power CCCP under global SIC;
* fixed detection (scheme 2 and the baselines): ZF rows, power CCCP only.

L(eta) is always evaluated from the true SINRs of the returned point, so a
solution's ``objective`` is ``min_u [rate_u - eta * P_total_u]`` exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import SystemConfig
from .clustering import BeamPlan
from .cvx_solver import (
    DetectionPoint,
    Status,
    build_detection_subproblem,
    build_power_subproblem,
    solve,
    unpack_detection,
)
from .errors import InfeasibleError, InvalidInputError
from .noma_core import (
    DecodingOrder,
    InterferenceModel,
    IterationCounters,
    Solution,
    decoding_order,
    detection_gains,
    evaluate,
    global_sic_model,
    minimum_powers,
    noise_per_beam,
    objective_value,
    sinr_thresholds,
    zf_detection,
    zf_model,
)

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-3
INNER_TOL = 1e-5
INNER_ROUNDS = 30
SOLVER_TOL = 1e-8
MAX_BISECTION = 60
START_POINTS = 12


@dataclass
class InnerSettings:
    tol: float = INNER_TOL
    max_rounds: int = INNER_ROUNDS
    solver_tol: float = SOLVER_TOL
    record: bool = False


@dataclass
class BisectionState:
    eta_low: float
    eta_high: float
    eps: float = DEFAULT_EPS
    iterations: int = 0

    def __post_init__(self):
        if not 0 <= self.eta_low <= self.eta_high:
            raise InvalidInputError(f"bad bracket [{self.eta_low}, {self.eta_high}]")

    @property
    def width(self) -> float:
        return self.eta_high - self.eta_low

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.eta_low + self.eta_high)


def bisect(f, lo: float, hi: float, eps: float, max_iter: int = 200):
    """Plain bisection for a non-increasing ``f`` with f(lo) >= 0 > f(hi); stops when hi - lo < eps.

    Returns (midpoint, iterations).
    """
    state = BisectionState(lo, hi, eps)
    while state.width >= eps and state.iterations < max_iter:
        eta = state.midpoint
        if f(eta) >= 0:
            state.eta_low = eta
        else:
            state.eta_high = eta
        state.iterations += 1
    return state.midpoint, state.iterations


def _changed(z_new: float, z_old: float, tol: float) -> bool:
    if not np.isfinite(z_old):
        return True
    return abs(z_new - z_old) > tol * max(1.0, abs(z_new))


def _solve_checked(problem, settings: InnerSettings, counters: IterationCounters):
    res = solve(problem, tol=settings.solver_tol)
    counters.newton += res.newton_steps
    counters.subproblems += 1
    return res


def algorithm3_power(
    eta: float,
    V: np.ndarray,
    P_init,
    plan: BeamPlan,
    config: SystemConfig,
    model: InterferenceModel,
    settings: InnerSettings | None = None,
    counters: IterationCounters | None = None,
):
    """CCCP on the powers for fixed detection rows.

    Returns (P, z, trace) where ``z`` is the true parametric objective at P and
    ``trace`` the non-decreasing sequence of accepted objective values.

    Raises
    ------
    InfeasibleError
        If no power vector in the box meets the minimum-rate constraints.
    """
    settings = settings or InnerSettings()
    counters = counters if counters is not None else IterationCounters()
    P = np.clip(np.asarray(P_init, dtype=float).reshape(-1), 0.0, config.p_max)
    z = objective_value(eta, V, P, plan, config, model)
    trace = [z] if np.isfinite(z) else []
    rounds = 0
    while rounds < settings.max_rounds:
        problem = build_power_subproblem(eta, V, P, plan, config, model)
        res = _solve_checked(problem, settings, counters)
        rounds += 1
        if res.status is Status.INFEASIBLE:
            if np.isfinite(z):
                break
            raise InfeasibleError("minimum rates unreachable within the power budget")
        P_new = np.clip(res.x[problem.layout["P"]], 0.0, config.p_max)
        z_new = objective_value(eta, V, P_new, plan, config, model)
        if z_new < z:
            break
        P, z_old, z = P_new, z, z_new
        trace.append(z)
        if not _changed(z, z_old, settings.tol):
            break
    if not np.isfinite(z):
        raise InfeasibleError("power iteration did not reach a feasible point")
    counters.cccp.append(rounds)
    return P, z, trace


def algorithm2_detection(
    eta: float,
    P_tilde,
    V_init: np.ndarray,
    plan: BeamPlan,
    config: SystemConfig,
    model: InterferenceModel,
    settings: InnerSettings | None = None,
    counters: IterationCounters | None = None,
):
    """SCA on the detection rows for fixed powers.

    Each round re-expands at the current rows with T̂ and Q̂ equal to the
    exact SINRs and interference-plus-noise levels, so the previous point is
    feasible for the new convex restriction with its true objective value.
    Returns (V, T, Q, z, trace).
    """
    settings = settings or InnerSettings()
    counters = counters if counters is not None else IterationCounters()
    P = np.asarray(P_tilde, dtype=float).reshape(-1)
    V = np.asarray(V_init, dtype=complex)
    z = objective_value(eta, V, P, plan, config, model)
    if not np.isfinite(z):
        raise InfeasibleError("detection initialization violates the minimum rates")
    point = DetectionPoint.tight(V, P, plan, config, model)
    trace = [z]
    rounds = 0
    while rounds < settings.max_rounds:
        problem = build_detection_subproblem(eta, P, point, plan, config, model)
        res = _solve_checked(problem, settings, counters)
        rounds += 1
        if res.status is Status.INFEASIBLE:
            break
        V_new = unpack_detection(res.x, plan.n_beams)[0]
        z_new = objective_value(eta, V_new, P, plan, config, model)
        if z_new < z:
            break
        V, z_old, z = V_new, z, z_new
        point = DetectionPoint.tight(V, P, plan, config, model)
        trace.append(z)
        if not _changed(z, z_old, settings.tol):
            break
    counters.sca.append(rounds)
    return V, point.T, point.Q, z, trace


def inner_loop_scheme1(
    eta: float,
    plan: BeamPlan,
    config: SystemConfig,
    order: DecodingOrder,
    V_init,
    P_init,
    settings: InnerSettings | None = None,
    counters: IterationCounters | None = None,
):
    """Alternate detection SCA and power CCCP until the objective settles.

    Returns (V, P, z, trace); ``trace`` concatenates every accepted objective
    value of both sub-algorithms and is non-decreasing.
    """
    settings = settings or InnerSettings()
    counters = counters if counters is not None else IterationCounters()
    model = global_sic_model(order)
    V = np.asarray(V_init, dtype=complex)
    P = np.asarray(P_init, dtype=float).reshape(-1)
    z = objective_value(eta, V, P, plan, config, model)
    if not np.isfinite(z):
        raise InfeasibleError("joint initialization violates the minimum rates")
    trace = [z]
    rounds = 0
    while rounds < settings.max_rounds:
        rounds += 1
        V1, _, _, zv, tv = algorithm2_detection(eta, P, V, plan, config, model, settings, counters)
        P1, zp, tp = algorithm3_power(eta, V1, P, plan, config, model, settings, counters)
        trace.extend(tv[1:] + tp[1:])
        if zp < z:
            break
        V, P, z_old, z = V1, P1, z, zp
        if not _changed(z, z_old, settings.tol):
            break
    counters.alternation.append(rounds)
    return V, P, z, trace


def _single_user_ee(a: float, config: SystemConfig, scale: float = 1.0) -> tuple:
    """(max, argmax) over P in [0, p_max] of scale*log2(1 + a P) / (Pc + xi P)."""
    if a <= 0 or config.p_max == 0:
        return 0.0, 0.0
    f = lambda p: -scale * np.log2(1 + a * p) / (config.circuit_power + config.amp_inefficiency * p)
    res = minimize_scalar(f, bounds=(0.0, config.p_max), method="bounded", options={"xatol": 1e-12 * config.p_max})
    if -f(config.p_max) >= -res.fun:
        return float(-f(config.p_max)), float(config.p_max)
    return float(-res.fun), float(res.x)


def _best_single_user_ee(a: float, config: SystemConfig, scale: float = 1.0) -> float:
    return _single_user_ee(a, config, scale)[0]


class _Runner:
    """Shared bisection driver; subclasses provide the inner solve."""

    name = "runner"
    model: InterferenceModel

    def __init__(self, plan: BeamPlan, config: SystemConfig, settings: InnerSettings | None = None):
        self.plan = plan
        self.config = config
        self.settings = settings or InnerSettings()
        self.counters = IterationCounters()
        self.z_traces = []

    def solution(self, eta, V, P, z) -> Solution:
        return evaluate(self.name, V, P, self.plan, self.config, self.model, eta=eta, objective=z, counters=self.counters)

    def initial_solution(self, by_rate: bool = False) -> Solution:
        """Feasible starting point with the best min-EE (or min-rate with ``by_rate``)."""
        raise NotImplementedError

    def inner(self, eta: float, warm: Solution) -> Solution:
        raise NotImplementedError

    def eta_upper(self) -> float:
        raise NotImplementedError


class FixedDetectionRunner(_Runner):
    """Power-only optimization for fixed detection rows ``V`` and an interference model."""

    def __init__(self, name, V, model, plan, config, settings=None):
        super().__init__(plan, config, settings)
        self.name = name
        self.V = np.asarray(V)
        self.model = model
        self.gains = detection_gains(self.V, plan.hbar_flat)
        self.noise = noise_per_beam(self.V, plan.W, config)

    def candidate_powers(self):
        """Uniform powers on a log scale, interference-free EE-optimal powers, and the
        minimum-rate powers scaled up towards the budget."""
        n = self.model.n_users
        p_max = self.config.p_max
        thr = sinr_thresholds(self.model, self.config)
        for frac in np.geomspace(1e-3, 1.0, START_POINTS):
            yield np.full(n, frac * p_max)
        # independent of p_max unless the budget binds, so saturated SNRs share a start
        own = np.arange(n) // 2
        a = self.gains[own, np.arange(n)] / self.noise[own]
        P_ee = np.array([_single_user_ee(a[u], self.config, self.model.rate_scale[u])[1] for u in range(n)])
        for frac in (0.25, 0.5, 1.0):
            yield frac * P_ee
        for bump in (1.0 + 1e-6, 1.0):
            P = minimum_powers(self.gains, self.model, self.noise, thr * bump)
            if P is not None and np.all(P <= p_max):
                top = p_max / max(P.max(), 1e-300)
                for k in np.geomspace(1.0, top, START_POINTS) if top > 1 else (1.0,):
                    yield np.minimum(P * k, p_max)
                break

    def initial_solution(self, by_rate: bool = False) -> Solution:
        best, key = None, (lambda s: s.min_rate) if by_rate else (lambda s: s.min_ee)
        for P in self.candidate_powers():
            z = objective_value(0.0, self.V, P, self.plan, self.config, self.model)
            if not np.isfinite(z):
                continue
            sol = self.solution(0.0, self.V, P, z)
            if best is None or key(sol) > key(best):
                best = sol
        if best is None:
            raise InfeasibleError(f"{self.name}: minimum rates unreachable within the power budget")
        return best

    def inner(self, eta, warm):
        P, z, trace = algorithm3_power(eta, self.V, warm.P, self.plan, self.config, self.model, self.settings, self.counters)
        if self.settings.record:
            self.z_traces.append(trace)
        return self.solution(eta, self.V, P, z)

    def eta_upper(self) -> float:
        own = np.arange(self.model.n_users) // 2
        a = self.gains[own, np.arange(own.size)] / self.noise[own]
        return min(_best_single_user_ee(a[u], self.config, self.model.rate_scale[u]) for u in range(a.size))


class JointRunner(_Runner):
    """Scheme 1: detection rows and powers, warm-started from the ZF power solution at every eta."""

    name = "scheme1"

    def __init__(self, plan, config, order: DecodingOrder | None = None, settings=None):
        super().__init__(plan, config, settings)
        self.order = order or decoding_order(plan.hbar)
        self.model = global_sic_model(self.order)
        self.zf = FixedDetectionRunner("scheme2", zf_detection(plan), zf_model(self.order), plan, config, self.settings)
        self.zf.counters = self.counters
        self._zf_warm = None

    def initial_solution(self, by_rate: bool = False) -> Solution:
        self._zf_warm = self.zf.initial_solution(by_rate)
        return self.solution(0.0, self._zf_warm.V, self._zf_warm.P, self._zf_warm.objective)

    def inner(self, eta, warm):
        zf_sol = self.zf.inner(eta, self._zf_warm)
        self._zf_warm = zf_sol
        starts = [(zf_sol.V, zf_sol.P), (warm.V, warm.P)]
        scores = [objective_value(eta, V, P, self.plan, self.config, self.model) for V, P in starts]
        V0, P0 = starts[int(np.argmax(scores))]
        V, P, z, trace = inner_loop_scheme1(eta, self.plan, self.config, self.order, V0, P0, self.settings, self.counters)
        if self.settings.record:
            self.z_traces.append(trace)
        return self.solution(eta, V, P, z)

    def eta_upper(self) -> float:
        # any row with ||v W|| <= 1 has ||v||^2 <= 1 / lambda_min(W W^H)
        lam = np.linalg.eigvalsh(self.plan.W @ self.plan.W.conj().T).min()
        a = self.plan.norms**2 / (self.config.noise_power * lam)
        return min(_best_single_user_ee(x, self.config) for x in a)


def evaluate_L(eta: float, runner: _Runner, warm: Solution | None = None):
    """Solve the parametric problem at ``eta``; returns (L, solution)."""
    if eta < 0:
        raise InvalidInputError("eta must be non-negative")
    warm = warm or runner.initial_solution()
    sol = runner.inner(eta, warm)
    return sol.objective, sol


def bisection(runner: _Runner, eps: float = DEFAULT_EPS, max_iter: int = MAX_BISECTION, lift: bool = True) -> Solution:
    """Bisection on eta until |L(eta)| < eps.

    With ``lift`` the lower end is raised to the min-EE of the best point found
    so far: that point certifies L >= 0 there because every inner solve is
    warm-started from it. If that certificate lands above the upper end, the
    L < 0 verdict behind it came from a poor local solution and the upper end
    is moved back to the lowest unrefuted L < 0 point (or the a-priori bound).
    """
    best = runner.initial_solution()
    upper = runner.eta_upper()
    state = BisectionState(min(best.min_ee, upper), max(upper, best.min_ee), eps)
    L_trace = []
    result = None
    while state.iterations < max_iter:
        eta = state.midpoint
        L, sol = evaluate_L(eta, runner, best)
        state.iterations += 1
        L_trace.append((eta, L))
        if sol.min_ee > best.min_ee:
            best = sol
        if abs(L) < eps:
            result = sol
            break
        if L > 0:
            state.eta_low = eta
        else:
            state.eta_high = eta
        if lift:
            if best.min_ee >= state.eta_high:
                # a point certifies L >= 0 above eta_high: an earlier L < 0 came from a poor local solution
                refuted_free = [e for e, v in L_trace if v < 0 and e > best.min_ee]
                state.eta_high = min(refuted_free) if refuted_free else max(upper, best.min_ee)
            state.eta_low = max(state.eta_low, best.min_ee)
        if state.width <= 1e-12 * max(1.0, state.eta_high):
            break
    if result is None:
        log.warning("%s: bisection stopped without |L| < eps (width %.3g)", runner.name, state.width)
        eta = best.min_ee
        result = replace(best, eta=eta, objective=objective_value(eta, best.V, best.P, runner.plan, runner.config, runner.model))
    runner.counters.outer = state.iterations
    traces = {"L": L_trace, "z": list(runner.z_traces)} if runner.settings.record else {}
    return replace(result, counters=runner.counters, traces=traces)


def maxmin_rate(runner: _Runner) -> Solution:
    """Single inner solve at eta = 0 (max-min rate)."""
    start = runner.initial_solution(by_rate=True)
    sol = runner.inner(0.0, start)
    runner.counters.outer = 1
    traces = {"z": list(runner.z_traces)} if runner.settings.record else {}
    return replace(sol, counters=runner.counters, traces=traces)


def scheme1_solve(plan, config, eps=DEFAULT_EPS, settings=None, order=None) -> Solution:
    return bisection(JointRunner(plan, config, order, settings), eps)


def scheme2_runner(plan, config, settings=None, order=None) -> FixedDetectionRunner:
    order = order or decoding_order(plan.hbar)
    return FixedDetectionRunner("scheme2", zf_detection(plan), zf_model(order), plan, config, settings)


def scheme2_solve(plan, config, eps=DEFAULT_EPS, settings=None, order=None) -> Solution:
    return bisection(scheme2_runner(plan, config, settings, order), eps)


def sample_L(runner: _Runner, etas) -> np.ndarray:
    """L at each eta, swept from the largest eta down with warm starts.

    A point found at a larger eta stays feasible at a smaller one with an
    objective at least as large, so the sampled curve inherits the
    monotonicity of the exact L.
    """
    etas = np.asarray(etas, dtype=float)
    out = np.empty_like(etas)
    warm = runner.initial_solution()
    for i in np.argsort(-etas, kind="stable"):
        out[i], warm = evaluate_L(etas[i], runner, warm)
    return out
