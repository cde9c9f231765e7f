"""Builders for the detection-matrix and power-allocation subproblems.

Detection variables are ``[y_0, ..., y_{M-1}, t, q, z]`` where ``y_m`` is the
real split ``[Re v_m, Im v_m]`` of detection row ``m``; ``t`` and ``q`` hold one
SINR-numerator and one interference-plus-noise bound per user. Power
variables are ``[P (flat, 2M), z]``.

For ``h = c + jd`` the squared response ``|v h|^2`` equals ``y^T K(h) y`` with
``K(h) = r r^T + s s^T``, ``r = [c; -d]``, ``s = [d; c]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import SystemConfig
from ..clustering import BeamPlan
from ..errors import FeasibilityRestorationError, InvalidInputError
from ..noma_core import (
    DecodingOrder,
    InterferenceModel,
    beam_of,
    detection_gains,
    global_sic_model,
    noise_per_beam,
    sinr_from_gains,
)
from .problem import Constraint, ConvexSubproblem
from .surrogates import LN2, linearize_R2

SHRINK_STEPS = (1e-6, 1e-4, 1e-2)


def real_split(v) -> np.ndarray:
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=-1)


def complex_join(y) -> np.ndarray:
    y = np.asarray(y)
    half = y.shape[-1] // 2
    return y[..., :half] + 1j * y[..., half:]


def response_form(h) -> np.ndarray:
    """K(h) with |v h|^2 = y^T K(h) y."""
    h = np.asarray(h, dtype=complex)
    r = np.concatenate([h.real, -h.imag])
    s = np.concatenate([h.imag, h.real])
    return np.outer(r, r) + np.outer(s, s)


def combiner_form(W) -> np.ndarray:
    """K_W with ||v W||^2 = y^T K_W y."""
    W = np.asarray(W)
    return sum(response_form(W[:, n]) for n in range(W.shape[1]))


def _as_model(order, n_users: int) -> InterferenceModel:
    if isinstance(order, InterferenceModel):
        return order
    if isinstance(order, DecodingOrder):
        return global_sic_model(order)
    raise InvalidInputError(f"expected a decoding order or interference model, got {type(order).__name__}")


@dataclass(frozen=True)
class DetectionPoint:
    """Expansion point (V̂, T̂, Q̂) of the detection subproblem."""

    V: np.ndarray
    T: np.ndarray
    Q: np.ndarray

    @classmethod
    def tight(cls, V, P, plan: BeamPlan, config: SystemConfig, model: InterferenceModel) -> "DetectionPoint":
        """T̂, Q̂ equal to the exact SINR and interference-plus-noise at (V, P)."""
        P = np.asarray(P, dtype=float).reshape(-1)
        gains = detection_gains(V, plan.hbar_flat)
        noise = noise_per_beam(V, plan.W, config)
        own = beam_of(P.size)
        Q = (gains[own] * model.mask) @ P + noise[own]
        T = sinr_from_gains(gains, P, model, noise)
        return cls(np.array(V, dtype=complex), T, Q)


def detection_layout(M: int) -> dict:
    n_users = 2 * M
    nv = 2 * M * M
    return {
        "V": slice(0, nv),
        "T": slice(nv, nv + n_users),
        "Q": slice(nv + n_users, nv + 2 * n_users),
        "z": slice(nv + 2 * n_users, nv + 2 * n_users + 1),
    }


def pack_detection(V, T, Q, z: float = 0.0) -> np.ndarray:
    return np.concatenate([real_split(np.asarray(V)).reshape(-1), np.asarray(T, float), np.asarray(Q, float), [z]])


def unpack_detection(x: np.ndarray, M: int):
    lay = detection_layout(M)
    V = complex_join(x[lay["V"]].reshape(M, 2 * M))
    return V, x[lay["T"]], x[lay["Q"]], float(x[lay["z"]][0])


def build_detection_subproblem(
    eta: float,
    P_tilde,
    expansion: DetectionPoint,
    plan: BeamPlan,
    config: SystemConfig,
    order,
) -> ConvexSubproblem:
    """Convex restriction of the detection problem around ``expansion``.

    Constraint families, in order: rate epigraph (one per user), min SINR,
    interference bound, linearized numerator surrogate, and one norm ball per
    detection row.

    Raises
    ------
    FeasibilityRestorationError
        If the expansion point violates the interference, surrogate or norm
        constraints, or has a non-positive ``t`` or ``q``.
    """
    M = plan.n_beams
    n_users = 2 * M
    model = _as_model(order, n_users)
    P = np.asarray(P_tilde, dtype=float).reshape(-1)
    V_hat = np.asarray(expansion.V, dtype=complex)
    T_hat = np.asarray(expansion.T, dtype=float)
    Q_hat = np.asarray(expansion.Q, dtype=float)
    if np.any(T_hat <= 0) or np.any(Q_hat <= 0):
        raise FeasibilityRestorationError("expansion point needs positive t and q")

    lay = detection_layout(M)
    n = lay["z"].stop
    iz = lay["z"].start
    iT, iQ = lay["T"].start, lay["Q"].start
    own = beam_of(n_users)
    hb = plan.hbar_flat
    K_user = [response_form(hb[w]) for w in range(n_users)]
    K_W = combiner_form(plan.W)
    thr = np.array([config.min_sinr(s) for s in model.rate_scale])
    ptot = config.circuit_power + config.amp_inefficiency * P

    def block(m):
        return slice(2 * M * m, 2 * M * (m + 1))

    def embed(mat, m):
        A = np.zeros((n, n))
        A[block(m), block(m)] = mat
        return A

    def unit(i, val=1.0):
        b = np.zeros(n)
        b[i] = val
        return b

    rate_rows, sinr_rows, intf_rows, surr_rows, ball_rows = [], [], [], [], []
    for u in range(n_users):
        m = own[u]
        s = model.rate_scale[u]
        rate_rows.append(
            Constraint("log-rate", unit(iz), eta * ptot[u], w=s / LN2, a=unit(iT + u), d=1.0, label=f"rate[{u}]")
        )
        sinr_rows.append(Constraint("affine", unit(iT + u, -1.0), thr[u], label=f"min_sinr[{u}]"))

        K_int = sum((P[w] * K_user[w] for w in np.flatnonzero(model.mask[u])), np.zeros((2 * M, 2 * M)))
        noise_c = config.noise_power
        if config.exact_noise:
            K_int = K_int + config.noise_power * K_W
            noise_c = 0.0
        intf_rows.append(
            Constraint("quadratic-upper", unit(iQ + u, -1.0), noise_c, A=embed(2 * K_int, m), label=f"interference[{u}]")
        )

        # f̂(t, q) - û(y) <= 0
        A = np.zeros((n, n))
        A[iT + u, iT + u] = Q_hat[u] / T_hat[u]
        A[iQ + u, iQ + u] = T_hat[u] / Q_hat[u]
        y_hat = real_split(V_hat[m])
        Ky = K_user[u] @ y_hat
        b = np.zeros(n)
        b[block(m)] = -2 * P[u] * Ky
        surr_rows.append(Constraint("linearized-surrogate", b, P[u] * (y_hat @ Ky), A=A, label=f"surrogate[{u}]"))

    for m in range(M):
        ball_rows.append(Constraint("norm-ball", np.zeros(n), -1.0, A=embed(2 * K_W, m), label=f"norm[{m}]"))

    cons = rate_rows + sinr_rows + intf_rows + surr_rows + ball_rows
    obj = np.zeros(n)
    obj[iz] = 1.0
    problem = ConvexSubproblem(
        n,
        cons,
        obj,
        layout=lay,
        meta={"eta": eta, "P": P, "V_hat": V_hat, "T_hat": T_hat, "Q_hat": Q_hat, "model": model.name},
    )

    x_hat = pack_detection(V_hat, T_hat, Q_hat)
    g = problem.values(x_hat)
    first = n_users * 2
    scale = np.concatenate([Q_hat, T_hat * Q_hat, np.ones(M)])
    if np.any(g[first:] > 1e-9 * np.maximum(scale, 1.0)):
        raise FeasibilityRestorationError("expansion point violates the interference, surrogate or norm constraints")
    problem.x0 = _detection_start(problem, V_hat, T_hat, Q_hat)
    return problem


def _detection_start(problem, V_hat, T_hat, Q_hat):
    """Pull the expansion point slightly inside the feasible set."""
    fallback = pack_detection(V_hat, T_hat, Q_hat)
    # min-SINR rows may be violated at the expansion point; phase I handles those
    rows = np.array([i for i, k in enumerate(problem.kinds) if k not in ("log-rate", "affine")])
    for eps in SHRINK_STEPS:
        x = pack_detection(V_hat * (1 - eps), T_hat * (1 - 4 * eps), Q_hat * (1 + eps))
        if np.all(problem.values(x)[rows] < 0):
            return x
    return fallback


def power_layout(n_users: int) -> dict:
    return {"P": slice(0, n_users), "z": slice(n_users, n_users + 1)}


def build_power_subproblem(
    eta: float,
    V,
    P_hat,
    plan: BeamPlan,
    config: SystemConfig,
    order,
) -> ConvexSubproblem:
    """Convex restriction of the power problem with the interference log-term linearized at ``P_hat``.

    Constraint families, in order: rate epigraph (one per user), min SINR in
    linear form, and the box ``0 <= P <= p_max``.
    """
    P_hat = np.asarray(P_hat, dtype=float).reshape(-1)
    n_users = P_hat.size
    if np.any(P_hat < 0) or np.any(P_hat > config.p_max * (1 + 1e-12)):
        raise InvalidInputError("expansion powers must lie in [0, p_max]")
    model = _as_model(order, n_users)
    gains = detection_gains(V, plan.hbar_flat)
    noise = noise_per_beam(V, plan.W, config)
    own = beam_of(n_users)
    n = n_users + 1
    iz = n_users
    xi = config.amp_inefficiency

    rate_rows, sinr_rows, box_rows = [], [], []
    for u in range(n_users):
        m = own[u]
        s = model.rate_scale[u]
        mask = model.mask[u]
        lin = linearize_R2(gains[m], mask, P_hat, noise[m])
        b = np.zeros(n)
        b[iz] = 1.0
        b[u] += eta * xi
        b[:n_users] += s * lin.gradient
        c = eta * config.circuit_power + s * (lin.value_at - lin.gradient @ P_hat)
        a = np.zeros(n)
        a[:n_users] = gains[m] * mask
        a[u] = gains[m, u]
        rate_rows.append(Constraint("log-rate", b, c, w=s / LN2, a=a, d=noise[m], label=f"rate[{u}]"))

        thr = config.min_sinr(s)
        b = np.zeros(n)
        b[:n_users] = thr * gains[m] * mask
        b[u] = -gains[m, u]
        sinr_rows.append(Constraint("affine", b, thr * noise[m], label=f"min_sinr[{u}]"))

    for u in range(n_users):
        lo = np.zeros(n)
        lo[u] = -1.0
        hi = np.zeros(n)
        hi[u] = 1.0
        box_rows.append(Constraint("box", lo, 0.0, label=f"P>=0[{u}]"))
        box_rows.append(Constraint("box", hi, -config.p_max, label=f"P<=pmax[{u}]"))

    obj = np.zeros(n)
    obj[iz] = 1.0
    x0 = np.append(np.clip(P_hat, 1e-9 * config.p_max, config.p_max * (1 - 1e-9)), 0.0)
    return ConvexSubproblem(
        n,
        rate_rows + sinr_rows + box_rows,
        obj,
        layout=power_layout(n_users),
        x0=x0,
        meta={"eta": eta, "P_hat": P_hat, "V": np.asarray(V), "model": model.name},
    )
