"""Reference decoding schemes, all on ZF detection rows and the shared SINR kernel.

Only the interference sets differ (strong users are nulled by ZF, so every
mask is restricted to weak users):

* ``scheme3``: cluster-wise SIC. Clusters are decoded one after another in
  decreasing strong-user norm, strong user first; a user is interfered by the
  weak users decoded after it.
* ``scheme4``: no cancellation across clusters. The strong user of a beam is
  interfered by its own weak user and every other beam's weak user; a weak
  user by every other beam's weak user.
* ``oma``: the two users of a beam take turns (all strong users in one half
  slot, all weak users in the other), so a user only sees same-slot users of
  other beams, and rates carry a factor 1/2.
"""
from __future__ import annotations

import numpy as np

from .channel import SystemConfig
from .clustering import BeamPlan
from .errors import InvalidInputError
from .maxmin import (
    DEFAULT_EPS,
    FixedDetectionRunner,
    InnerSettings,
    JointRunner,
    bisection,
    maxmin_rate,
    scheme2_runner,
)
from .noma_core import (
    InterferenceModel,
    beam_of,
    decoding_order,
    noise_per_beam,
    rate,
    sinr_vector,
    weak_user_mask,
    zf_detection,
)

SCHEMES = ("scheme1", "scheme2", "scheme3", "scheme4", "oma")


def cluster_order(plan: BeamPlan) -> tuple:
    """Flat decoding sequence: clusters by decreasing strong-user norm, strong before weak."""
    strong = np.linalg.norm(plan.hbar[:, 0, :], axis=1)
    clusters = np.argsort(-strong, kind="stable")
    return tuple(int(2 * m + i) for m in clusters for i in (0, 1))


def scheme3_model(plan: BeamPlan) -> InterferenceModel:
    seq = cluster_order(plan)
    n = len(seq)
    rank = np.empty(n, dtype=int)
    rank[list(seq)] = np.arange(n)
    later = rank[None, :] > rank[:, None]
    return InterferenceModel("scheme3", later & weak_user_mask(n)[None, :], np.ones(n))


def scheme4_model(n_users: int) -> InterferenceModel:
    own = beam_of(n_users)
    weak = weak_user_mask(n_users)
    other_beam = own[:, None] != own[None, :]
    own_weak_for_strong = (own[:, None] == own[None, :]) & ~weak[:, None]
    mask = (other_beam | own_weak_for_strong) & weak[None, :]
    np.fill_diagonal(mask, False)
    return InterferenceModel("scheme4", mask, np.ones(n_users))


def oma_model(n_users: int) -> InterferenceModel:
    own = beam_of(n_users)
    slot = np.arange(n_users) % 2
    mask = (slot[:, None] == slot[None, :]) & (own[:, None] != own[None, :])
    return InterferenceModel("oma", mask, np.full(n_users, 0.5))


def _rates(V, P, plan: BeamPlan, config: SystemConfig, model: InterferenceModel) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    gamma = sinr_vector(V, P.reshape(-1), plan.hbar, model, noise_per_beam(V, plan.W, config))
    return rate(gamma, model.rate_scale).reshape(P.shape)


def scheme3_rates(V, P, plan: BeamPlan, config: SystemConfig) -> np.ndarray:
    return _rates(V, P, plan, config, scheme3_model(plan))


def scheme4_rates(V, P, plan: BeamPlan, config: SystemConfig) -> np.ndarray:
    return _rates(V, P, plan, config, scheme4_model(2 * plan.n_beams))


def oma_rates(V, P, plan: BeamPlan, config: SystemConfig) -> np.ndarray:
    return _rates(V, P, plan, config, oma_model(2 * plan.n_beams))


def make_runner(scheme: str, plan: BeamPlan, config: SystemConfig, settings: InnerSettings | None = None):
    """Bisection/inner-loop driver for any named scheme."""
    n = 2 * plan.n_beams
    if scheme == "scheme1":
        return JointRunner(plan, config, decoding_order(plan.hbar), settings)
    if scheme == "scheme2":
        return scheme2_runner(plan, config, settings)
    models = {
        "scheme3": lambda: scheme3_model(plan),
        "scheme4": lambda: scheme4_model(n),
        "oma": lambda: oma_model(n),
    }
    if scheme not in models:
        raise InvalidInputError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    return FixedDetectionRunner(scheme, zf_detection(plan), models[scheme](), plan, config, settings)


def solve_scheme(scheme: str, plan: BeamPlan, config: SystemConfig, objective: str = "max_min_ee", eps=DEFAULT_EPS, settings=None):
    runner = make_runner(scheme, plan, config, settings)
    if objective == "max_min_ee":
        return bisection(runner, eps)
    if objective == "max_min_rate":
        return maxmin_rate(runner)
    raise InvalidInputError(f"unknown objective {objective!r}")
