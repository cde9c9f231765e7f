"""Beam-alignment user clustering on top of a DFT codebook."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .channel import Codebook, effective_channel
from .errors import InfeasibleScenarioError, InvalidInputError


@dataclass(frozen=True)
class BeamPlan:
    """Selected analog beams and the two users served on each of them.

    ``users[m, i]`` is the index (into the drop's channel set) of user
    ``(m, i)``; ``i = 0`` is the strong user. ``hbar[m, i]`` is its effective
    channel ``W h`` (length M). Row ``m`` of ``W`` is ``f_{k_m}^H``.
    """

    beam_indices: tuple
    W: np.ndarray
    users: np.ndarray
    hbar: np.ndarray

    @property
    def n_beams(self) -> int:
        return self.W.shape[0]

    @property
    def hbar_flat(self) -> np.ndarray:
        """Effective channels stacked as (2M, M), flat user index ``u = 2m + i``."""
        return self.hbar.reshape(-1, self.hbar.shape[-1])

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.hbar_flat, axis=1)

    @property
    def strong_matrix(self) -> np.ndarray:
        """H = [h_{1,1}, ..., h_{M,1}] with one strong-user effective channel per column."""
        return self.hbar[:, 0, :].T


def plan_from_channels(W: np.ndarray, h_pairs: np.ndarray, beam_indices: Sequence[int] = ()) -> BeamPlan:
    """Build a plan directly from per-slot raw channels ``h_pairs`` of shape (M, 2, N).

    Users inside a slot are reordered so the strong one comes first.
    """
    W = np.asarray(W)
    h_pairs = np.asarray(h_pairs)
    hbar = effective_channel(W, h_pairs.reshape(-1, W.shape[1])).reshape(h_pairs.shape[0], 2, W.shape[0])
    users = np.arange(2 * h_pairs.shape[0]).reshape(-1, 2)
    for m in range(hbar.shape[0]):
        n0, n1 = np.linalg.norm(hbar[m], axis=1)
        if n1 > n0:
            hbar[m] = hbar[m, ::-1]
            users[m] = users[m, ::-1]
    return BeamPlan(tuple(beam_indices), W, users, hbar)


def measure_beam_strength(codebook: Codebook, h: np.ndarray) -> np.ndarray:
    """|f_k^H h|^2 for every codebook column; accepts one channel or a (U, N) stack."""
    h = np.asarray(h)
    if h.shape[-1] != codebook.n_antennas:
        raise InvalidInputError(f"channel length {h.shape[-1]} != {codebook.n_antennas} antennas")
    return np.abs(h @ codebook.F.conj()) ** 2


def select_beams(codebook_size: int, n_rf: int, family: int = 1) -> list[int]:
    """1-based indices ``family, family + K/M, ...`` (maximally spaced beams)."""
    if n_rf < 1 or codebook_size % n_rf:
        raise InvalidInputError(f"n_rf={n_rf} does not divide codebook_size={codebook_size}")
    step = codebook_size // n_rf
    if not 1 <= family <= step:
        raise InvalidInputError(f"family must lie in [1, {step}]")
    return [family + j * step for j in range(n_rf)]


def beam_matrix(codebook: Codebook, beam_indices: Sequence[int]) -> np.ndarray:
    return codebook.F[:, np.asarray(beam_indices) - 1].conj().T


def _widest_pair(norms: np.ndarray, candidates: Sequence[int]) -> tuple[int, int]:
    best, best_gap = None, -1.0
    for a, b in combinations(candidates, 2):
        gap = abs(norms[a] - norms[b])
        if gap > best_gap:
            best, best_gap = (a, b), gap
    return best


def cluster_users(
    codebook: Codebook,
    h: np.ndarray,
    beam_indices: Sequence[int],
    strengths: np.ndarray | None = None,
) -> BeamPlan:
    """Attach users to their strongest selected beam and keep one NOMA pair per beam.

    Each user joins the selected beam with the largest ``|f_k^H h|^2``
    (ties: lowest slot). Among a beam's candidates the retained pair is the one
    with the largest effective-channel norm gap, scanned in index order so the
    lowest pair wins ties.

    Raises
    ------
    InfeasibleScenarioError
        If a selected beam attracts fewer than two users.
    """
    h = np.asarray(h)
    if strengths is None:
        strengths = measure_beam_strength(codebook, h)
    sel = np.asarray(beam_indices) - 1
    home = np.argmax(strengths[:, sel], axis=1)
    W = beam_matrix(codebook, beam_indices)
    hbar_all = effective_channel(W, h)
    norms = np.linalg.norm(hbar_all, axis=1)

    M = len(beam_indices)
    users = np.empty((M, 2), dtype=int)
    for m in range(M):
        cand = np.flatnonzero(home == m)
        if cand.size < 2:
            raise InfeasibleScenarioError(f"beam {beam_indices[m]} has {cand.size} candidate user(s)")
        a, b = _widest_pair(norms, cand)
        users[m] = (a, b) if norms[a] >= norms[b] else (b, a)
    return BeamPlan(tuple(int(k) for k in beam_indices), W, users, hbar_all[users])
