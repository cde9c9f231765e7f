"""Brute-force power grids for small instances with fixed detection rows.

The SINR here is computed directly from ``|V hbar|^2`` and the interference
mask, independently of :mod:`mmnoma.noma_core`, so it can serve as a check on
the optimizers.

Besides the best grid point, every search returns a certified upper bound on
the continuous optimum: on a grid cell ``[a, b]`` each user's SINR is at most
``g_u b_u / (I_u(a) + noise)`` and its power draw at least ``Pc + xi a_u``, so
the best per-cell bound over all cells bounds the continuous max-min value.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .channel import SystemConfig
from .errors import InfeasibleError, InvalidInputError
from .noma_core import DecodingOrder, InterferenceModel, global_sic_model


@dataclass(frozen=True)
class GridResult:
    value: float
    P: np.ndarray
    upper: float
    n_points: int


def power_grid(p_max: float, points: int = 20, floor: float = 1e-3) -> np.ndarray:
    """0, then geometric spacing up to p_max/10, then linear spacing up to p_max."""
    if points < 2:
        raise InvalidInputError("need at least two grid points")
    if p_max <= 0:
        return np.zeros(1)
    n_lin = points // 2
    n_geo = points - 1 - n_lin
    geo = np.geomspace(floor * p_max, p_max / 10, n_geo, endpoint=False) if n_geo else np.zeros(0)
    lin = np.linspace(p_max / 10, p_max, n_lin)
    return np.concatenate([[0.0], geo, lin])


def _as_model(order, n_users) -> InterferenceModel:
    if isinstance(order, InterferenceModel):
        return order
    if isinstance(order, DecodingOrder):
        return global_sic_model(order)
    raise InvalidInputError("order must be a DecodingOrder or InterferenceModel")


def _setup(V, hbar, order, config: SystemConfig, noise):
    hb = np.asarray(hbar)
    hb = hb.reshape(-1, hb.shape[-1])
    V = np.asarray(V)
    n = hb.shape[0]
    model = _as_model(order, n)
    row = np.arange(n) // 2
    G = np.abs(V @ hb.T) ** 2  # (M, n)
    Gu = G[row]  # row u: gains seen by user u's detector
    sig = Gu[np.arange(n), np.arange(n)]
    cross = Gu * model.mask
    noise = np.full(n, config.noise_power) if noise is None else np.asarray(noise, dtype=float)[row]
    thr = np.array([config.min_sinr(s) for s in model.rate_scale])
    return sig, cross, noise, thr, model.rate_scale


def _search(V, hbar, order, config, grid_points, grid, noise, objective):
    sig, cross, noise, thr, scale = _setup(V, hbar, order, config, noise)
    n = sig.size
    grid = power_grid(config.p_max, grid_points) if grid is None else np.sort(np.asarray(grid, dtype=float))
    if grid.size < 1:
        raise InvalidInputError("empty power grid")
    Pc, xi = config.circuit_power, config.amp_inefficiency

    def score(rate, P):
        return rate if objective == "rate" else rate / (Pc + xi * P)

    # exhaustive max-reduction, chunked over the first user's power
    rest = np.array(list(product(grid, repeat=n - 1))) if n > 1 else np.zeros((1, 0))
    best, best_P = -np.inf, None
    for p0 in grid:
        P = np.column_stack([np.full(len(rest), p0), rest])
        gamma = sig * P / (P @ cross.T + noise)
        ok = np.all(gamma >= thr, axis=1)
        if not ok.any():
            continue
        vals = np.min(score(scale * np.log2(1 + gamma), P), axis=1)
        vals[~ok] = -np.inf
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_P = float(vals[i]), P[i].copy()
    if best_P is None:
        raise InfeasibleError("no grid point meets the minimum rates")

    # cell-wise certified upper bound
    lo_edges, hi_edges = grid[:-1], grid[1:]
    if grid.size == 1:
        upper = best
    else:
        idx = np.array(list(product(range(lo_edges.size), repeat=n - 1))) if n > 1 else np.zeros((1, 0), dtype=int)
        upper = -np.inf
        for i0 in range(lo_edges.size):
            cells = np.column_stack([np.full(len(idx), i0), idx])
            a, b = lo_edges[cells], hi_edges[cells]
            gamma_hi = sig * b / (a @ cross.T + noise)
            ok = np.all(gamma_hi >= thr, axis=1)
            if not ok.any():
                continue
            vals = np.min(score(scale * np.log2(1 + gamma_hi), a), axis=1)
            upper = max(upper, float(vals[ok].max()))
        upper = max(upper, best)
    return GridResult(best, best_P.reshape(-1, 2) if n % 2 == 0 else best_P, upper, grid.size**n)


def grid_maxmin_ee(V, hbar, order, config: SystemConfig, grid_points: int = 20, grid=None, noise=None) -> GridResult:
    """Best min-user EE over a power grid (points violating the minimum rates skipped).

    ``noise`` optionally gives the per-row noise level (defaults to the
    configured noise power on every row).
    """
    return _search(V, hbar, order, config, grid_points, grid, noise, "ee")


def grid_maxmin_rate(V, hbar, order, config: SystemConfig, grid_points: int = 20, grid=None, noise=None) -> GridResult:
    """Best min-user rate over a power grid."""
    return _search(V, hbar, order, config, grid_points, grid, noise, "rate")
