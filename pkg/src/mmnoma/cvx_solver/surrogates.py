"""Tight convex surrogates used to convexify the inner problems.

* ``linearize_u``: tangent plane of the convex quadratic ``u(v) = P |v h|^2``,
  a global minorant.
* ``f_hat``: arithmetic-geometric upper bound of the bilinear ``t * q``.
* ``linearize_R2``: tangent plane of the concave interference log-term, a
  global majorant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError

LN2 = np.log(2.0)


def u_value(v, h, p: float) -> float:
    """u(v) = p * |v h|^2."""
    return float(p * np.abs(np.asarray(v) @ np.asarray(h)) ** 2)


@dataclass(frozen=True)
class AffineU:
    """û(v) = p * (2 Re{conj(v̂ h) (v h)} - |v̂ h|^2), affine in (Re v, Im v)."""

    v_hat: np.ndarray
    h: np.ndarray
    p: float

    def __call__(self, v) -> float:
        a = self.v_hat @ self.h
        b = np.asarray(v) @ self.h
        return float(self.p * (2 * np.real(np.conj(a) * b) - np.abs(a) ** 2))


def linearize_u(v_hat, h, p: float) -> AffineU:
    return AffineU(np.asarray(v_hat, dtype=complex), np.asarray(h, dtype=complex), float(p))


def f_hat(t, q, t_hat: float, q_hat: float):
    """(t̂ / 2q̂) q^2 + (q̂ / 2t̂) t^2 >= t q, with equality at (t̂, q̂)."""
    if not (t_hat > 0 and q_hat > 0):
        raise InvalidInputError(f"expansion point must be positive, got t={t_hat}, q={q_hat}")
    return t_hat / (2 * q_hat) * np.asarray(q) ** 2 + q_hat / (2 * t_hat) * np.asarray(t) ** 2


def interference_log(gains, mask, P, noise: float) -> float:
    """R2(P) = log2(sum_{w in mask} g_w P_w + noise)."""
    gains, mask, P = map(np.asarray, (gains, mask, P))
    return float(np.log2(np.sum(gains * mask * P) + noise))


@dataclass(frozen=True)
class AffineR2:
    value_at: float
    gradient: np.ndarray
    P_hat: np.ndarray

    def __call__(self, P) -> float:
        return float(self.value_at + self.gradient @ (np.asarray(P, dtype=float) - self.P_hat))


def linearize_R2(gains, mask, P_hat, noise: float) -> AffineR2:
    """First-order expansion of R2 at ``P_hat``; majorizes R2 since R2 is concave.

    ``gains`` holds |v h_w|^2 for every user w on the detection row, ``mask``
    selects the interfering users.
    """
    gains = np.asarray(gains, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    P_hat = np.asarray(P_hat, dtype=float)
    denom = np.sum(gains * mask * P_hat) + noise
    grad = np.where(mask, gains, 0.0) / (denom * LN2)
    return AffineR2(float(np.log2(denom)), grad, P_hat.copy())
