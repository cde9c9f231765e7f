"""Canonical description of the small convex programs solved in the inner loops.

Every constraint has the form

    g(x) = 1/2 x^T A x + b^T x + c - w * log(a^T x + d) <= 0

with ``A`` positive semidefinite and ``w >= 0``, which makes ``g`` convex.
Each constraint carries a catalog tag naming the shape it came from; the
tag is informational, convexity follows from the form itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError

CATALOG = (
    "affine",
    "log-rate",
    "quadratic-upper",
    "linearized-surrogate",
    "norm-ball",
    "box",
)


@dataclass
class Constraint:
    kind: str
    b: np.ndarray
    c: float = 0.0
    A: np.ndarray | None = None
    w: float = 0.0
    a: np.ndarray | None = None
    d: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in CATALOG:
            raise InvalidInputError(f"unknown constraint kind {self.kind!r}")
        if self.w < 0:
            raise InvalidInputError("log weight must be non-negative")
        if self.w > 0 and self.a is None:
            raise InvalidInputError("log term needs a direction vector")

    def value(self, x: np.ndarray) -> float:
        v = self.b @ x + self.c
        if self.A is not None:
            v += 0.5 * x @ self.A @ x
        if self.w > 0:
            arg = self.a @ x + self.d
            v -= self.w * np.log(arg) if arg > 0 else -np.inf
            if arg <= 0:
                return np.inf
        return float(v)


@dataclass
class ConvexSubproblem:
    """maximize ``objective @ x`` subject to ``constraints``.

    ``layout`` maps block names to slices of ``x``; ``x0`` is an optional
    starting point (strict feasibility is checked by the solver);
    ``meta`` keeps the data the problem was built from (expansion point etc.).
    """

    n: int
    constraints: list
    objective: np.ndarray
    layout: dict = field(default_factory=dict)
    x0: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self._compile()

    def _compile(self):
        m, n = len(self.constraints), self.n
        self.B = np.zeros((m, n))
        self.c = np.zeros(m)
        for i, con in enumerate(self.constraints):
            self.B[i] = con.b
            self.c[i] = con.c
        self.quad_idx = np.array([i for i, con in enumerate(self.constraints) if con.A is not None], dtype=int)
        self.A_stack = (
            np.stack([self.constraints[i].A for i in self.quad_idx]) if self.quad_idx.size else np.zeros((0, n, n))
        )
        self.log_idx = np.array([i for i, con in enumerate(self.constraints) if con.w > 0], dtype=int)
        self.log_a = (
            np.stack([self.constraints[i].a for i in self.log_idx]) if self.log_idx.size else np.zeros((0, n))
        )
        self.log_d = np.array([self.constraints[i].d for i in self.log_idx], dtype=float)
        self.log_w = np.array([self.constraints[i].w for i in self.log_idx], dtype=float)

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def kinds(self) -> list:
        return [con.kind for con in self.constraints]

    def in_domain(self, x: np.ndarray) -> bool:
        return bool(np.all(self.log_a @ x + self.log_d > 0))

    def values(self, x: np.ndarray) -> np.ndarray:
        """All g_i(x); ``+inf`` where a log argument leaves its domain."""
        g = self.B @ x + self.c
        if self.quad_idx.size:
            g[self.quad_idx] += 0.5 * ((self.A_stack @ x) @ x)
        if self.log_idx.size:
            arg = self.log_a @ x + self.log_d
            if arg.min() <= 0:
                ok = arg > 0
                g[self.log_idx[~ok]] = np.inf
                g[self.log_idx[ok]] -= self.log_w[ok] * np.log(arg[ok])
            else:
                g[self.log_idx] -= self.log_w * np.log(arg)
        return g

    def jacobian(self, x: np.ndarray):
        """Returns (g, J, ell) with J the (m, n) constraint Jacobian and ell the log arguments."""
        g = self.B @ x + self.c
        J = self.B.copy()
        if self.quad_idx.size:
            Ax = self.A_stack @ x
            g[self.quad_idx] += 0.5 * Ax @ x
            J[self.quad_idx] += Ax
        ell = self.log_a @ x + self.log_d
        if self.log_idx.size:
            g[self.log_idx] -= self.log_w * np.log(ell)
            J[self.log_idx] -= (self.log_w / ell)[:, None] * self.log_a
        return g, J, ell

    def barrier_hessian(self, slack: np.ndarray, J: np.ndarray, ell: np.ndarray) -> np.ndarray:
        """Hessian of -sum log(slack_i) given slack = -g."""
        inv = 1.0 / slack
        H = (J * (inv**2)[:, None]).T @ J
        if self.quad_idx.size:
            H += np.tensordot(inv[self.quad_idx], self.A_stack, axes=1)
        if self.log_idx.size:
            L = self.log_a * (np.sqrt(self.log_w * inv[self.log_idx]) / ell)[:, None]
            H += L.T @ L
        return H

    def max_violation(self, x: np.ndarray) -> float:
        return float(np.max(self.values(x), initial=-np.inf))

    def epigraph_rows(self) -> np.ndarray:
        """Constraints in which the objective variables appear (linearly)."""
        touched = np.flatnonzero(self.objective)
        return np.flatnonzero(np.any(self.B[:, touched] != 0, axis=1))

    def unpack(self, x: np.ndarray) -> dict:
        return {name: x[sl] for name, sl in self.layout.items()}


def _plain(value):
    if isinstance(value, np.ndarray):
        if np.iscomplexobj(value):
            return {"real": value.real.tolist(), "imag": value.imag.tolist()}
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dump_subproblem(problem: ConvexSubproblem, path) -> Path:
    """Write a subproblem (layout, constraints, expansion point) as JSON for offline inspection."""
    path = Path(path)
    doc = {
        "n": problem.n,
        "objective": _plain(problem.objective),
        "layout": {k: [sl.start, sl.stop] for k, sl in problem.layout.items()},
        "x0": _plain(problem.x0),
        "meta": _plain(problem.meta),
        "constraints": [
            {
                "kind": con.kind,
                "label": con.label,
                "b": _plain(con.b),
                "c": con.c,
                "A": _plain(con.A),
                "w": con.w,
                "a": _plain(con.a),
                "d": con.d,
            }
            for con in problem.constraints
        ],
    }
    try:
        path.write_text(json.dumps(doc, indent=1))
    except OSError as exc:
        raise OSError(f"cannot write subproblem dump to {path}: {exc}") from exc
    return path
