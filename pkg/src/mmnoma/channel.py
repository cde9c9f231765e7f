"""Geometric mmWave channels, ULA steering vectors and the DFT codebook.

Random draws go through :class:`numpy.random.SeedSequence`: a drop seed is
spawned into one child stream per user, so user ``k`` of a drop always sees
the same numbers no matter how many other users are generated.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants for one uplink cell.

    Powers are in watts. ``p_max`` is the per-user transmit budget, so the
    simulated SNR is ``p_max / noise_power``.
    """

    n_antennas: int = 32
    n_rf: int = 4
    codebook_size: int = 32
    n_paths: int = 3
    noise_power: float = 1e-3
    circuit_power: float = 0.1
    amp_inefficiency: float = 1 / 0.38
    r_min: float = 0.2
    p_max: float = 1e-2
    antenna_spacing_ratio: float = 0.5
    # Post-combining noise v_m W W^H v_m^H * noise_power instead of noise_power.
    exact_noise: bool = False
    # Min-rate SINR threshold 2**r_min - 1 instead of 2**r_min.
    standard_min_rate: bool = False
    beam_family: int = 1
    users_per_beam: int = 4

    def __post_init__(self):
        if min(self.n_antennas, self.n_rf, self.codebook_size, self.n_paths) < 1:
            raise InvalidInputError("array sizes must be positive integers")
        if self.n_rf > self.n_antennas:
            raise InvalidInputError("n_rf must not exceed n_antennas")
        if self.codebook_size < self.n_antennas:
            raise InvalidInputError("codebook_size must be >= n_antennas")
        if self.codebook_size % self.n_rf:
            raise InvalidInputError("n_rf must divide codebook_size")
        if not 1 <= self.beam_family <= self.codebook_size // self.n_rf:
            raise InvalidInputError("beam_family out of range")
        if self.amp_inefficiency <= 1:
            raise InvalidInputError("amp_inefficiency must exceed 1")
        if self.noise_power <= 0 or self.circuit_power < 0 or self.p_max < 0:
            raise InvalidInputError("powers must be non-negative (noise positive)")
        if self.r_min < 0 or self.antenna_spacing_ratio <= 0:
            raise InvalidInputError("r_min and antenna spacing must be non-negative")
        if self.users_per_beam < 2:
            raise InvalidInputError("need at least two candidate users per beam")

    @property
    def n_users(self) -> int:
        return 2 * self.n_rf

    @property
    def snr_db(self) -> float:
        return 10 * np.log10(self.p_max / self.noise_power)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        """Copy with ``p_max`` set so that ``p_max / noise_power`` hits ``snr_db``."""
        return replace(self, p_max=self.noise_power * 10 ** (snr_db / 10))

    def min_sinr(self, rate_scale: float = 1.0) -> float:
        """SINR a user needs to meet ``r_min`` when its rate is ``rate_scale*log2(1+sinr)``."""
        target = 2.0 ** (self.r_min / rate_scale)
        return target - 1.0 if self.standard_min_rate else target


@dataclass(frozen=True)
class Codebook:
    F: np.ndarray

    @property
    def n_antennas(self) -> int:
        return self.F.shape[0]

    @property
    def size(self) -> int:
        return self.F.shape[1]

    def column(self, k: int) -> np.ndarray:
        """Beam pattern ``f_k`` with 1-based ``k``."""
        return self.F[:, k - 1]


@dataclass(frozen=True)
class ChannelSet:
    """Path parameters and channel vectors of the users of one drop.

    ``alphas`` and ``thetas`` have shape (n_users, n_paths); ``h`` has shape
    (n_users, n_antennas).
    """

    alphas: np.ndarray
    thetas: np.ndarray
    h: np.ndarray
    spacing: float = 0.5
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    def regenerate(self) -> np.ndarray:
        return assemble_channels(self.alphas, self.thetas, self.h.shape[1], self.spacing)


def steering_vector(theta: float, n_antennas: int, spacing: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response ``a(theta)`` for element spacing ``spacing`` wavelengths."""
    if n_antennas < 1:
        raise InvalidInputError("n_antennas must be >= 1")
    n = np.arange(n_antennas)
    return np.exp(2j * np.pi * spacing * n * np.sin(theta)) / np.sqrt(n_antennas)


def steering_matrix(thetas: np.ndarray, n_antennas: int, spacing: float = 0.5) -> np.ndarray:
    """Vectorised :func:`steering_vector`; output shape ``thetas.shape + (n_antennas,)``."""
    thetas = np.asarray(thetas, dtype=float)
    n = np.arange(n_antennas)
    phase = 2 * np.pi * spacing * np.sin(thetas)[..., None] * n
    return np.exp(1j * phase) / np.sqrt(n_antennas)


def assemble_channels(alphas, thetas, n_antennas: int, spacing: float = 0.5) -> np.ndarray:
    """h = sqrt(N/G) * sum_g alpha_g a(theta_g), one row per user."""
    alphas = np.asarray(alphas)
    n_paths = alphas.shape[-1]
    a = steering_matrix(thetas, n_antennas, spacing)
    return np.sqrt(n_antennas / n_paths) * np.einsum("ug,ugn->un", alphas, a)


def dft_codebook(n_antennas: int, codebook_size: int) -> Codebook:
    if codebook_size < 1 or n_antennas < 1:
        raise InvalidInputError("codebook dimensions must be positive")
    n = np.arange(n_antennas)[:, None]
    k = np.arange(codebook_size)[None, :]
    return Codebook(np.exp(2j * np.pi * n * k / codebook_size) / np.sqrt(n_antennas))


def effective_channel(W: np.ndarray, h: np.ndarray) -> np.ndarray:
    """h_bar = W h. ``h`` may be one channel (N,) or a stack (U, N)."""
    W = np.asarray(W)
    h = np.asarray(h)
    if W.ndim != 2 or h.shape[-1] != W.shape[1]:
        raise InvalidInputError(f"cannot apply beam matrix {W.shape} to channel {h.shape}")
    return h @ W.T


def _user_streams(rng_seed: SeedLike, n_users: int) -> list[np.random.Generator]:
    ss = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else np.random.SeedSequence(rng_seed)
    return [np.random.default_rng(child) for child in ss.spawn(n_users)]


def _complex_gaussian(rng: np.random.Generator, size) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def generate_channels(config: SystemConfig, rng_seed: SeedLike, n_users: int | None = None) -> ChannelSet:
    """Draw i.i.d. users: CN(0,1) path gains and azimuths uniform on [-pi, pi]."""
    n_users = config.n_users if n_users is None else n_users
    G = config.n_paths
    alphas = np.empty((n_users, G), dtype=complex)
    thetas = np.empty((n_users, G))
    for u, rng in enumerate(_user_streams(rng_seed, n_users)):
        alphas[u] = _complex_gaussian(rng, G)
        thetas[u] = rng.uniform(-np.pi, np.pi, G)
    h = assemble_channels(alphas, thetas, config.n_antennas, config.antenna_spacing_ratio)
    return ChannelSet(alphas, thetas, h, config.antenna_spacing_ratio)


def beam_sine(k: int, codebook_size: int, spacing: float = 0.5) -> float:
    """sin(theta) at which ``a(theta)`` is phase-aligned with codebook column ``k`` (1-based)."""
    return _wrap_sine((k - 1) / (codebook_size * spacing), spacing)


def _wrap_sine(s, spacing: float):
    # a(theta) depends on sin(theta) only modulo 1/spacing
    period = 1.0 / spacing
    s = (np.asarray(s) + period / 2) % period - period / 2
    return np.clip(s, -1.0, 1.0)


def synthesize_beam_users(
    config: SystemConfig,
    beam_indices: Sequence[int],
    rng_seed: SeedLike,
    users_per_beam: int | None = None,
) -> ChannelSet:
    """Users whose dominant path points into the coverage cell of a given beam.

    For every selected beam ``users_per_beam`` users are spawned. Each draws
    ``n_paths`` CN(0,1) gains; the largest one is put on a path whose sine is
    uniform within half a codebook step of the beam direction, the remaining
    paths get azimuths uniform on [-pi, pi]. Front/back ambiguity of the ULA is
    resolved with a fair coin, so every azimuth lies in [-pi, pi].
    """
    per_beam = config.users_per_beam if users_per_beam is None else users_per_beam
    d = config.antenna_spacing_ratio
    K, G = config.codebook_size, config.n_paths
    step = 1.0 / (K * d)
    n_users = per_beam * len(beam_indices)
    alphas = np.empty((n_users, G), dtype=complex)
    thetas = np.empty((n_users, G))
    home = np.repeat(np.arange(len(beam_indices)), per_beam)
    for u, rng in enumerate(_user_streams(rng_seed, n_users)):
        gains = _complex_gaussian(rng, G)
        alphas[u] = gains[np.argsort(-np.abs(gains), kind="stable")]
        s = _wrap_sine(beam_sine(beam_indices[home[u]], K, d) + rng.uniform(-0.5, 0.5) * step, d)
        theta = np.arcsin(s)
        if rng.random() < 0.5:
            theta = np.pi - theta if theta >= 0 else -np.pi - theta
        thetas[u, 0] = theta
        thetas[u, 1:] = rng.uniform(-np.pi, np.pi, G - 1)
    h = assemble_channels(alphas, thetas, config.n_antennas, d)
    return ChannelSet(alphas, thetas, h, d, meta={"home_slot": home})
