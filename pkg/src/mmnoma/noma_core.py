"""Decoding order, SINR/rate/EE kernels and zero-forcing detection.

Users are addressed by the flat index ``u = 2*m + i`` where ``m`` is the beam
slot and ``i = 0`` (strong) or ``i = 1`` (weak). Powers are kept as (M, 2)
arrays at the API boundary and flattened internally.

Every scheme shares one SINR kernel; schemes differ only in their
:class:`InterferenceModel`, a boolean matrix whose entry ``[u, w]`` says that
user ``w`` is still undecoded (hence interference) when user ``u`` is
detected.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig
from .clustering import BeamPlan
from .errors import DegenerateChannelError

ZF_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class DecodingOrder:
    ordering: tuple
    weaker: np.ndarray  # weaker[u, w]: w is decoded after u

    def weaker_set(self, u: int) -> set:
        return set(np.flatnonzero(self.weaker[u]).tolist())


@dataclass(frozen=True)
class InterferenceModel:
    name: str
    mask: np.ndarray
    rate_scale: np.ndarray

    @property
    def n_users(self) -> int:
        return self.mask.shape[0]


@dataclass
class IterationCounters:
    outer: int = 0
    alternation: list = field(default_factory=list)
    sca: list = field(default_factory=list)
    cccp: list = field(default_factory=list)
    newton: int = 0
    subproblems: int = 0

    def as_dict(self) -> dict:
        med = lambda xs: float(np.median(xs)) if xs else 0.0
        return {
            "outer_iterations": self.outer,
            "alternation_rounds": med(self.alternation),
            "sca_iterations": med(self.sca),
            "cccp_iterations": med(self.cccp),
            "newton_steps": self.newton,
            "subproblem_solves": self.subproblems,
        }


@dataclass(frozen=True)
class Solution:
    scheme: str
    V: np.ndarray
    P: np.ndarray
    rates: np.ndarray
    ees: np.ndarray
    min_ee: float
    eta: float | None = None
    objective: float | None = None
    counters: IterationCounters = field(default_factory=IterationCounters)
    traces: dict = field(default_factory=dict)

    @property
    def sum_rate(self) -> float:
        return float(self.rates.sum())

    @property
    def min_rate(self) -> float:
        return float(self.rates.min())


def _flat_hbar(hbar) -> np.ndarray:
    hbar = np.asarray(hbar)
    return hbar.reshape(-1, hbar.shape[-1])


def decoding_order(hbar) -> DecodingOrder:
    """Strongest effective channel first; equal norms keep (beam, user) index order."""
    norms = np.linalg.norm(_flat_hbar(hbar), axis=1)
    ordering = np.argsort(-norms, kind="stable")
    rank = np.empty_like(ordering)
    rank[ordering] = np.arange(ordering.size)
    return DecodingOrder(tuple(int(u) for u in ordering), rank[None, :] > rank[:, None])


def global_sic_model(order: DecodingOrder) -> InterferenceModel:
    n = order.weaker.shape[0]
    return InterferenceModel("global_sic", order.weaker.copy(), np.ones(n))


def weak_user_mask(n_users: int) -> np.ndarray:
    return np.arange(n_users) % 2 == 1


def zf_model(order: DecodingOrder) -> InterferenceModel:
    """Global SIC with interferers restricted to weak users (strong ones are nulled by ZF)."""
    n = order.weaker.shape[0]
    return InterferenceModel("zf", order.weaker & weak_user_mask(n)[None, :], np.ones(n))


def beam_of(n_users: int) -> np.ndarray:
    return np.arange(n_users) // 2


def detection_gains(V: np.ndarray, hbar) -> np.ndarray:
    """g[m, w] = |v_m hbar_w|^2, shape (M, 2M)."""
    return np.abs(np.asarray(V) @ _flat_hbar(hbar).T) ** 2


def detection_norms(V: np.ndarray, W: np.ndarray) -> np.ndarray:
    """||v_m W||^2 per row."""
    return np.sum(np.abs(np.asarray(V) @ np.asarray(W)) ** 2, axis=1)


def noise_per_beam(V: np.ndarray, W: np.ndarray | None, config: SystemConfig) -> np.ndarray:
    M = np.asarray(V).shape[0]
    if config.exact_noise and W is not None:
        return config.noise_power * detection_norms(V, W)
    return np.full(M, config.noise_power)


def sinr_from_gains(gains: np.ndarray, P, model: InterferenceModel, noise: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float).reshape(-1)
    n = P.size
    own = beam_of(n)
    g_own = gains[own]  # (2M, 2M): row u holds g[beam(u), :]
    signal = g_own[np.arange(n), np.arange(n)] * P
    interference = (g_own * model.mask) @ P
    return signal / (interference + noise[own])


def sinr_vector(V, P, hbar, model: InterferenceModel, noise) -> np.ndarray:
    return sinr_from_gains(detection_gains(V, hbar), P, model, np.asarray(noise, dtype=float))


def sinr(V, P, hbar, order: DecodingOrder, user: int, noise_power: float) -> float:
    """SINR of flat user ``user`` under global SIC."""
    model = global_sic_model(order)
    noise = np.full(np.asarray(V).shape[0], noise_power)
    return float(sinr_vector(V, P, hbar, model, noise)[user])


def rate(gamma, scale=1.0):
    return scale * np.log2(1.0 + np.asarray(gamma))


def total_power(P, config: SystemConfig):
    return config.circuit_power + config.amp_inefficiency * np.asarray(P)


def ee(rate_value, total):
    return np.asarray(rate_value) / np.asarray(total)


def zf_detection(plan: BeamPlan) -> np.ndarray:
    """Rows of (H^H H)^{-1} H^H for the strong users, each scaled so ||v_m W|| = 1.

    Raises
    ------
    DegenerateChannelError
        If the strong-user matrix has condition number above 1e12.
    """
    H = plan.strong_matrix
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > ZF_MAX_CONDITION:
        raise DegenerateChannelError(f"strong-user channel matrix condition number {cond:.3g}")
    HH = H.conj().T
    V = np.linalg.solve(HH @ H, HH)
    return V / np.sqrt(detection_norms(V, plan.W))[:, None]


def zf_sinr(V, P, hbar, order: DecodingOrder, noise_power: float) -> np.ndarray:
    noise = np.full(np.asarray(V).shape[0], noise_power)
    return sinr_vector(V, P, hbar, zf_model(order), noise)


def evaluate(
    scheme: str,
    V: np.ndarray,
    P,
    plan: BeamPlan,
    config: SystemConfig,
    model: InterferenceModel,
    **extra,
) -> Solution:
    """Package (V, P) into a :class:`Solution` with rates and EEs from the true SINR."""
    P = np.asarray(P, dtype=float).reshape(plan.n_beams, 2)
    noise = noise_per_beam(V, plan.W, config)
    gamma = sinr_vector(V, P, plan.hbar, model, noise)
    rates = rate(gamma, model.rate_scale)
    ees = ee(rates, total_power(P.reshape(-1), config))
    return Solution(
        scheme,
        np.array(V),
        P,
        rates.reshape(plan.n_beams, 2),
        ees.reshape(plan.n_beams, 2),
        float(ees.min()),
        **extra,
    )


def sinr_thresholds(model: InterferenceModel, config: SystemConfig) -> np.ndarray:
    return np.array([config.min_sinr(s) for s in model.rate_scale])


def minimum_powers(gains: np.ndarray, model: InterferenceModel, noise: np.ndarray, thresholds) -> np.ndarray | None:
    """Smallest powers meeting every SINR threshold with equality, or None if no such powers exist.

    Solves (I - A) P = b with A[u, w] = thr_u g[m, w] mask[u, w] / g[m, u];
    a non-negative solution exists iff the spectral radius of A is below one.
    """
    n = model.n_users
    own = beam_of(n)
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (n,))
    signal = gains[own, np.arange(n)]
    if np.any(signal <= 0):
        return None
    A = thresholds[:, None] * gains[own] * model.mask / signal[:, None]
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        return None
    P = np.linalg.solve(np.eye(n) - A, thresholds * noise[own] / signal)
    return P if np.all(P >= 0) else None


def objective_value(eta: float, V, P, plan: BeamPlan, config: SystemConfig, model: InterferenceModel, rtol=1e-9) -> float:
    """min_u [rate_u - eta * P_total_u]; -inf if a minimum-rate requirement is violated."""
    P = np.asarray(P, dtype=float).reshape(-1)
    noise = noise_per_beam(V, plan.W, config)
    gamma = sinr_vector(V, P, plan.hbar, model, noise)
    if np.any(gamma < sinr_thresholds(model, config) * (1 - rtol)):
        return -np.inf
    return float(np.min(rate(gamma, model.rate_scale) - eta * total_power(P, config)))
